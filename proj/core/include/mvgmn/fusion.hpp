#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvgmn/autograd.hpp"
#include "mvgmn/random.hpp"

namespace mvgmn {

enum class FusionMode { CrossAttention, Mean, Linear };

std::string_view to_string(FusionMode mode);
FusionMode parse_fusion_mode(std::string_view name);

/// Per-frame encoder outputs: a patch-token set and one skeleton token.
struct FrameTokens {
  Tensor rgb_patches;     // [N_p, D_rgb]
  Tensor skeleton_token;  // [1, D_sk]
};

struct FusionDims {
  std::size_t d_rgb = 0;
  std::size_t d_sk = 0;
  std::size_t d_key = 0;
  std::size_t d_model = 0;
};

/// Parameter handles for one fusion head. Only the maps used by `mode` are
/// registered:
///   cross_attention: w_q [D_sk, d_k], w_k [D_rgb, d_k], w_v [D_rgb, D]
///   mean:            w_v [D_rgb, D], w_sk [D_sk, D]
///   linear:          w_lin [D_sk + D_rgb, D]
struct FusionParams {
  FusionMode mode = FusionMode::CrossAttention;
  FusionDims dims;
  ParamId w_q = 0, w_k = 0, w_v = 0, w_sk = 0, w_lin = 0;

  static FusionParams create(ParamStore& store, FusionMode mode, const FusionDims& dims,
                             Rng& rng, const std::string& prefix = "fusion");
};

/// One frame index drawn uniformly from each of `num_segments` equal
/// partitions of [0, length).
std::vector<std::size_t> sample_segments(std::size_t length, std::size_t num_segments, Rng& rng);

/// Skeleton index paired with each RGB frame: i * (sk_count / rgb_count).
std::vector<std::size_t> align_indices(std::size_t sk_count, std::size_t rgb_count);

/// Pairs skeleton tokens [T_sk, D_sk] with RGB frames [T, N_p, D_rgb].
std::vector<FrameTokens> align_tokens(const Tensor& sk_tokens, const Tensor& rgb_frames);

/// Fuses every frame under `params.mode` and stacks the results in order,
/// giving [frames.size(), D].
Var fuse_sequence(std::span<const FrameTokens> frames, const FusionParams& params, Tape& tape);

/// Single-frame cross-attention fusion, [1, D].
Var cross_attention_fuse(const FrameTokens& frame, const FusionParams& params, Tape& tape);

/// Attention weights over the patches of one frame, [1, N_p].
Tensor cross_attention_weights(const FrameTokens& frame, const FusionParams& params,
                               const ParamStore& store);

}  // namespace mvgmn
