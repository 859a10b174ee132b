#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mvgmn/autograd.hpp"

namespace mvgmn {

// Differentiable operations. Unless stated otherwise operands are matrices
// (rank 2); rows index tokens/vertices and columns index channels.

Var matmul(const Var& a, const Var& b);
/// a · bᵀ without materialising the transpose.
Var matmul_nt(const Var& a, const Var& b);
Var transpose(const Var& a);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// Adds a [1, n] row to every row of `a`.
Var add_row(const Var& a, const Var& row);
Var scale(const Var& a, double s);

/// ReLU with subgradient 0 at 0.
Var relu(const Var& a);
Var softmax_rows(const Var& a);

Var slice_rows(const Var& a, std::size_t start, std::size_t count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const Var& a, const Var& b);
/// out[i] = a[perm[i]]
Var permute_rows(const Var& a, std::span<const std::size_t> perm);
/// Column means, [n, d] -> [1, d].
Var mean_rows(const Var& a);
Var sum_all(const Var& a);
Var reshape(const Var& a, Shape shape);

/// Length-preserving cross-correlation along rows.
/// x: [L, D], kernel: [K, D, D_out], K odd, zero padding (K-1)/2 each side.
Var conv1d_same(const Var& x, const Var& kernel);
/// Per-channel variant. x: [L, C], kernel: [K, C].
Var depthwise_conv1d_same(const Var& x, const Var& kernel);

/// logsumexp(logits) - logits[label] for a [1, C] row; returns [1, 1].
Var softmax_cross_entropy(const Var& logits, std::size_t label);

namespace kernels {

// Raw GEMM helpers. When `accumulate` is false the output is overwritten.
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate);
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate);
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate);
void softmax_rows_inplace(Tensor& x);

}  // namespace kernels

}  // namespace mvgmn
