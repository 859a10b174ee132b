#include "mvgmn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mvgmn/errors.hpp"

namespace mvgmn {

namespace {

Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
  Tape* tape = nullptr;
  for (const auto& in : inputs) {
    if (in.tape()) {
      tape = in.tape();
      break;
    }
  }
  if (!tape) return Var::constant(std::move(value));
  return tape->record(std::move(value), std::move(inputs), std::move(backward));
}

void require_matrix(const Var& a, const char* op) {
  if (a.value().rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         shape_string(a.shape()));
  }
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

}  // namespace

namespace kernels {

void gemm_nn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (!accumulate) out.fill(0.0);
  const double* __restrict pa = a.ptr();
  const double* __restrict pb = b.ptr();
  double* __restrict po = out.ptr();
  // Register tiles of kRows x kCols outputs over a cache-sized slice of k.
  // Every output accumulates over p in ascending order.
  constexpr std::size_t kRows = 4;
  constexpr std::size_t kCols = 8;
  constexpr std::size_t kDepth = 256;
  const std::size_t m_main = m - m % kRows;
  const std::size_t n_main = n - n % kCols;
  for (std::size_t p0 = 0; p0 < k; p0 += kDepth) {
    const std::size_t p1 = std::min(k, p0 + kDepth);
    for (std::size_t j0 = 0; j0 < n_main; j0 += kCols) {
      for (std::size_t i0 = 0; i0 < m_main; i0 += kRows) {
        double acc[kRows][kCols];
        for (std::size_t r = 0; r < kRows; ++r)
          for (std::size_t c = 0; c < kCols; ++c) acc[r][c] = po[(i0 + r) * n + j0 + c];
        for (std::size_t p = p0; p < p1; ++p) {
          const double* brow = pb + p * n + j0;
          for (std::size_t r = 0; r < kRows; ++r) {
            const double av = pa[(i0 + r) * k + p];
            for (std::size_t c = 0; c < kCols; ++c) acc[r][c] += av * brow[c];
          }
        }
        for (std::size_t r = 0; r < kRows; ++r)
          for (std::size_t c = 0; c < kCols; ++c) po[(i0 + r) * n + j0 + c] = acc[r][c];
      }
    }
    // Leftover rows and columns.
    for (std::size_t i = 0; i < m; ++i) {
      const std::size_t j_start = i < m_main ? n_main : 0;
      if (j_start == n) continue;
      double* orow = po + i * n;
      for (std::size_t p = p0; p < p1; ++p) {
        const double av = pa[i * k + p];
        const double* brow = pb + p * n;
        for (std::size_t j = j_start; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  }
}

void gemm_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (!accumulate && m >= 8) {
    // Same summation order as the dot-product loop below, but vectorizes.
    Tensor bt({k, n});
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    gemm_nn(a, bt, out, false);
    return;
  }
  const double* __restrict pa = a.ptr();
  const double* __restrict pb = b.ptr();
  double* __restrict po = out.ptr();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      po[i * n + j] = accumulate ? po[i * n + j] + s : s;
    }
  }
}

void gemm_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  // out[m, n] = a[k, m]^T b[k, n]
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (!accumulate) out.fill(0.0);
  const double* __restrict pa = a.ptr();
  const double* __restrict pb = b.ptr();
  double* __restrict po = out.ptr();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = pa[p * m + i];
      if (av == 0.0) continue;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void softmax_rows_inplace(Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = x.ptr() + i * n;
    const double mx = *std::max_element(row, row + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      s += row[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < n; ++j) row[j] *= inv;
  }
}

}  // namespace kernels

Var matmul(const Var& a, const Var& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()));
  }
  Tensor out({a.rows(), b.cols()});
  kernels::gemm_nn(a.value(), b.value(), out, false);
  return make(std::move(out), {a, b}, [](Node& n) {
    const Tensor& a = n.inputs[0]->value;
    const Tensor& b = n.inputs[1]->value;
    if (Tensor* ga = n.input_grad(0)) kernels::gemm_nt(n.grad, b, *ga, true);
    if (Tensor* gb = n.input_grad(1)) kernels::gemm_tn(a, n.grad, *gb, true);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions disagree " + shape_string(a.shape()) +
                         " x " + shape_string(b.shape()) + "^T");
  }
  Tensor out({a.rows(), b.rows()});
  kernels::gemm_nt(a.value(), b.value(), out, false);
  return make(std::move(out), {a, b}, [](Node& n) {
    const Tensor& a = n.inputs[0]->value;
    const Tensor& b = n.inputs[1]->value;
    // out = a b^T: da = g b, db = g^T a
    if (Tensor* ga = n.input_grad(0)) kernels::gemm_nn(n.grad, b, *ga, true);
    if (Tensor* gb = n.input_grad(1)) kernels::gemm_tn(n.grad, a, *gb, true);
  });
}

Var transpose(const Var& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), k = a.cols();
  Tensor out({k, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j) out(j, i) = a.value()(i, j);
  return make(std::move(out), {a}, [m, k](Node& n) {
    if (Tensor* ga = n.input_grad(0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) (*ga)(i, j) += n.grad(j, i);
    }
  });
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  Tensor out = a.value();
  out.add_inplace(b.value());
  return make(std::move(out), {a, b}, [](Node& n) {
    for (std::size_t i = 0; i < 2; ++i)
      if (Tensor* g = n.input_grad(i)) g->add_inplace(n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    if (Tensor* ga = n.input_grad(0)) ga->add_inplace(n.grad);
    if (Tensor* gb = n.input_grad(1))
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] -= n.grad[i];
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make(std::move(out), {a, b}, [](Node& n) {
    const Tensor& a = n.inputs[0]->value;
    const Tensor& b = n.inputs[1]->value;
    if (Tensor* ga = n.input_grad(0))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += n.grad[i] * b[i];
    if (Tensor* gb = n.input_grad(1))
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += n.grad[i] * a[i];
  });
}

Var add_row(const Var& a, const Var& row) {
  require_matrix(a, "add_row");
  require_matrix(row, "add_row");
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw DimensionError("add_row: cannot broadcast " + shape_string(row.shape()) + " over " +
                         shape_string(a.shape()));
  }
  Tensor out = a.value();
  const std::size_t m = a.rows(), c = a.cols();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) out(i, j) += row.value()[j];
  return make(std::move(out), {a, row}, [m, c](Node& n) {
    if (Tensor* ga = n.input_grad(0)) ga->add_inplace(n.grad);
    if (Tensor* gr = n.input_grad(1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gr)[j] += n.grad(i, j);
  });
}

Var scale(const Var& a, double s) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  return make(std::move(out), {a}, [s](Node& n) {
    if (Tensor* g = n.input_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s * n.grad[i];
  });
}

Var relu(const Var& a) {
  Tensor out = a.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return make(std::move(out), {a}, [](Node& n) {
    const Tensor& x = n.inputs[0]->value;
    if (Tensor* g = n.input_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i)
        if (x[i] > 0.0) (*g)[i] += n.grad[i];
  });
}

Var softmax_rows(const Var& a) {
  require_matrix(a, "softmax_rows");
  Tensor out = a.value();
  kernels::softmax_rows_inplace(out);
  return make(std::move(out), {a}, [](Node& n) {
    Tensor* g = n.input_grad(0);
    if (!g) return;
    const Tensor& y = n.value;
    const std::size_t m = y.rows(), c = y.cols();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += n.grad(i, j) * y(i, j);
      for (std::size_t j = 0; j < c; ++j) (*g)(i, j) += y(i, j) * (n.grad(i, j) - dot);
    }
  });
}

Var slice_rows(const Var& a, std::size_t start, std::size_t count) {
  require_matrix(a, "slice_rows");
  if (start + count > a.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") exceed " +
                         shape_string(a.shape()));
  }
  const std::size_t c = a.cols();
  const auto first = a.value().data().begin() + static_cast<std::ptrdiff_t>(start * c);
  Tensor out({count, c},
             std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count * c)));
  return make(std::move(out), {a}, [start, c](Node& n) {
    if (Tensor* g = n.input_grad(0))
      for (std::size_t i = 0; i < n.grad.size(); ++i) (*g)[start * c + i] += n.grad[i];
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw InputError("concat_rows: no inputs");
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != c) throw DimensionError("concat_rows: column counts differ");
    total += p.rows();
  }
  std::vector<double> data;
  data.reserve(total * c);
  for (const auto& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  return make(Tensor({total, c}, std::move(data)), parts, [](Node& n) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < n.inputs.size(); ++i) {
      const std::size_t len = n.inputs[i]->value.size();
      if (Tensor* g = n.input_grad(i))
        for (std::size_t j = 0; j < len; ++j) (*g)[j] += n.grad[offset + j];
      offset += len;
    }
  });
}

Var concat_cols(const Var& a, const Var& b) {
  require_matrix(a, "concat_cols");
  require_matrix(b, "concat_cols");
  if (a.rows() != b.rows()) throw DimensionError("concat_cols: row counts differ");
  const std::size_t m = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor out({m, ca + cb});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out(i, j) = a.value()(i, j);
    for (std::size_t j = 0; j < cb; ++j) out(i, ca + j) = b.value()(i, j);
  }
  return make(std::move(out), {a, b}, [m, ca, cb](Node& n) {
    if (Tensor* ga = n.input_grad(0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < ca; ++j) (*ga)(i, j) += n.grad(i, j);
    if (Tensor* gb = n.input_grad(1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < cb; ++j) (*gb)(i, j) += n.grad(i, ca + j);
  });
}

Var permute_rows(const Var& a, std::span<const std::size_t> perm) {
  require_matrix(a, "permute_rows");
  const std::size_t m = a.rows(), c = a.cols();
  if (perm.size() != m) throw DimensionError("permute_rows: permutation length mismatch");
  Tensor out({m, c});
  for (std::size_t i = 0; i < m; ++i) {
    if (perm[i] >= m) throw InputError("permute_rows: index out of range");
    std::copy_n(a.value().ptr() + perm[i] * c, c, out.ptr() + i * c);
  }
  std::vector<std::size_t> p(perm.begin(), perm.end());
  return make(std::move(out), {a}, [p = std::move(p), c](Node& n) {
    if (Tensor* g = n.input_grad(0))
      for (std::size_t i = 0; i < p.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)(p[i], j) += n.grad(i, j);
  });
}

Var mean_rows(const Var& a) {
  require_matrix(a, "mean_rows");
  const std::size_t m = a.rows(), c = a.cols();
  if (m == 0) throw InputError("mean_rows: no rows");
  Tensor out({1, c});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += a.value()(i, j);
  for (auto& v : out.data()) v /= static_cast<double>(m);
  return make(std::move(out), {a}, [m, c](Node& n) {
    if (Tensor* g = n.input_grad(0)) {
      const double inv = 1.0 / static_cast<double>(m);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < c; ++j) (*g)(i, j) += n.grad[j] * inv;
    }
  });
}

Var sum_all(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return make(Tensor({1, 1}, {s}), {a}, [](Node& n) {
    if (Tensor* g = n.input_grad(0))
      for (auto& v : g->data()) v += n.grad[0];
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make(std::move(out), {a}, [](Node& n) {
    if (Tensor* g = n.input_grad(0))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += n.grad[i];
  });
}

Var conv1d_same(const Var& x, const Var& kernel) {
  require_matrix(x, "conv1d_same");
  const Tensor& w = kernel.value();
  if (w.rank() != 3) throw DimensionError("conv1d_same: kernel must be [K, D, D_out]");
  const std::size_t K = w.dim(0), D = w.dim(1), O = w.dim(2);
  if (K % 2 == 0) throw ConfigError("conv1d_same: kernel width must be odd, got " + std::to_string(K));
  if (x.cols() != D) {
    throw DimensionError("conv1d_same: input width " + std::to_string(x.cols()) +
                         " does not match kernel " + shape_string(w.shape()));
  }
  const std::size_t L = x.rows();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(K / 2);
  Tensor out({L, O});
  const Tensor& xv = x.value();
  for (std::size_t l = 0; l < L; ++l) {
    double* orow = out.ptr() + l * O;
    for (std::size_t k = 0; k < K; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l) + static_cast<std::ptrdiff_t>(k) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
      const double* xrow = xv.ptr() + static_cast<std::size_t>(src) * D;
      const double* wk = w.ptr() + k * D * O;
      for (std::size_t d = 0; d < D; ++d) {
        const double xd = xrow[d];
        if (xd == 0.0) continue;
        const double* wrow = wk + d * O;
        for (std::size_t o = 0; o < O; ++o) orow[o] += xd * wrow[o];
      }
    }
  }
  return make(std::move(out), {x, kernel}, [K, D, O, L, half](Node& n) {
    const Tensor& xv = n.inputs[0]->value;
    const Tensor& w = n.inputs[1]->value;
    Tensor* gx = n.input_grad(0);
    Tensor* gw = n.input_grad(1);
    for (std::size_t l = 0; l < L; ++l) {
      const double* grow = n.grad.ptr() + l * O;
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l) + static_cast<std::ptrdiff_t>(k) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
        const std::size_t s = static_cast<std::size_t>(src);
        for (std::size_t d = 0; d < D; ++d) {
          const double* wrow = w.ptr() + (k * D + d) * O;
          if (gx) {
            double acc = 0.0;
            for (std::size_t o = 0; o < O; ++o) acc += grow[o] * wrow[o];
            (*gx)[s * D + d] += acc;
          }
          if (gw) {
            const double xd = xv[s * D + d];
            double* gwrow = gw->ptr() + (k * D + d) * O;
            for (std::size_t o = 0; o < O; ++o) gwrow[o] += xd * grow[o];
          }
        }
      }
    }
  });
}

Var depthwise_conv1d_same(const Var& x, const Var& kernel) {
  require_matrix(x, "depthwise_conv1d_same");
  require_matrix(kernel, "depthwise_conv1d_same");
  const std::size_t K = kernel.rows(), C = kernel.cols();
  if (K % 2 == 0) {
    throw ConfigError("depthwise_conv1d_same: kernel width must be odd, got " + std::to_string(K));
  }
  if (x.cols() != C) throw DimensionError("depthwise_conv1d_same: channel mismatch");
  const std::size_t L = x.rows();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(K / 2);
  Tensor out({L, C});
  const Tensor& xv = x.value();
  const Tensor& w = kernel.value();
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l) + static_cast<std::ptrdiff_t>(k) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
      const double* xrow = xv.ptr() + static_cast<std::size_t>(src) * C;
      const double* wrow = w.ptr() + k * C;
      double* orow = out.ptr() + l * C;
      for (std::size_t c = 0; c < C; ++c) orow[c] += xrow[c] * wrow[c];
    }
  }
  return make(std::move(out), {x, kernel}, [K, C, L, half](Node& n) {
    const Tensor& xv = n.inputs[0]->value;
    const Tensor& w = n.inputs[1]->value;
    Tensor* gx = n.input_grad(0);
    Tensor* gw = n.input_grad(1);
    for (std::size_t l = 0; l < L; ++l) {
      const double* grow = n.grad.ptr() + l * C;
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l) + static_cast<std::ptrdiff_t>(k) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
        const std::size_t s = static_cast<std::size_t>(src);
        for (std::size_t c = 0; c < C; ++c) {
          if (gx) (*gx)[s * C + c] += grow[c] * w[k * C + c];
          if (gw) (*gw)[k * C + c] += grow[c] * xv[s * C + c];
        }
      }
    }
  });
}

Var softmax_cross_entropy(const Var& logits, std::size_t label) {
  require_matrix(logits, "softmax_cross_entropy");
  if (logits.rows() != 1) throw DimensionError("softmax_cross_entropy: expected a [1, C] row");
  const std::size_t c = logits.cols();
  if (label >= c) throw InputError("softmax_cross_entropy: label out of range");
  Tensor probs = logits.value();
  const double mx = *std::max_element(probs.data().begin(), probs.data().end());
  double z = 0.0;
  for (double v : probs.data()) z += std::exp(v - mx);
  const double loss = mx + std::log(z) - probs[label];
  kernels::softmax_rows_inplace(probs);
  return make(Tensor({1, 1}, {loss}), {logits}, [probs = std::move(probs), label](Node& n) {
    if (Tensor* g = n.input_grad(0)) {
      const double up = n.grad[0];
      for (std::size_t j = 0; j < probs.size(); ++j)
        (*g)[j] += up * (probs[j] - (j == label ? 1.0 : 0.0));
    }
  });
}

}  // namespace mvgmn
