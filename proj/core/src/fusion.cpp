#include "mvgmn/fusion.hpp"

#include <cmath>

#include "mvgmn/errors.hpp"
#include "mvgmn/init.hpp"
#include "mvgmn/ops.hpp"

namespace mvgmn {

std::string_view to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::CrossAttention: return "cross_attention";
    case FusionMode::Mean: return "mean";
    case FusionMode::Linear: return "linear";
  }
  return "?";
}

FusionMode parse_fusion_mode(std::string_view name) {
  if (name == "cross_attention") return FusionMode::CrossAttention;
  if (name == "mean") return FusionMode::Mean;
  if (name == "linear") return FusionMode::Linear;
  throw ConfigError("unknown fusion mode '" + std::string(name) +
                    "' (expected cross_attention, mean or linear)");
}

FusionParams FusionParams::create(ParamStore& store, FusionMode mode, const FusionDims& dims,
                                  Rng& rng, const std::string& prefix) {
  if (dims.d_key == 0 || dims.d_model == 0 || dims.d_rgb == 0 || dims.d_sk == 0) {
    throw ConfigError("fusion dimensions must be positive");
  }
  FusionParams p;
  p.mode = mode;
  p.dims = dims;
  switch (mode) {
    case FusionMode::CrossAttention:
      p.w_q = store.add(prefix + ".w_q", init::lecun_uniform({dims.d_sk, dims.d_key}, rng));
      p.w_k = store.add(prefix + ".w_k", init::lecun_uniform({dims.d_rgb, dims.d_key}, rng));
      p.w_v = store.add(prefix + ".w_v", init::lecun_uniform({dims.d_rgb, dims.d_model}, rng));
      break;
    case FusionMode::Mean:
      p.w_v = store.add(prefix + ".w_v", init::lecun_uniform({dims.d_rgb, dims.d_model}, rng));
      p.w_sk = store.add(prefix + ".w_sk", init::lecun_uniform({dims.d_sk, dims.d_model}, rng));
      break;
    case FusionMode::Linear:
      p.w_lin = store.add(prefix + ".w_lin",
                          init::lecun_uniform({dims.d_sk + dims.d_rgb, dims.d_model}, rng));
      break;
  }
  return p;
}

std::vector<std::size_t> sample_segments(std::size_t length, std::size_t num_segments, Rng& rng) {
  if (num_segments == 0) throw InputError("sample_segments: need at least one segment");
  if (length < num_segments) {
    throw InputError("sample_segments: " + std::to_string(length) + " frames cannot fill " +
                     std::to_string(num_segments) + " segments");
  }
  std::vector<std::size_t> out(num_segments);
  for (std::size_t i = 0; i < num_segments; ++i) {
    const std::size_t lo = i * length / num_segments;
    const std::size_t hi = (i + 1) * length / num_segments;
    out[i] = lo + static_cast<std::size_t>(rng.index(hi - lo));
  }
  return out;
}

std::vector<std::size_t> align_indices(std::size_t sk_count, std::size_t rgb_count) {
  if (rgb_count == 0 || sk_count == 0 || sk_count % rgb_count != 0) {
    throw ConfigError("align_tokens: skeleton count " + std::to_string(sk_count) +
                      " is not an integer multiple of RGB count " + std::to_string(rgb_count));
  }
  const std::size_t ratio = sk_count / rgb_count;
  std::vector<std::size_t> out(rgb_count);
  for (std::size_t i = 0; i < rgb_count; ++i) out[i] = i * ratio;
  return out;
}

std::vector<FrameTokens> align_tokens(const Tensor& sk_tokens, const Tensor& rgb_frames) {
  if (sk_tokens.rank() != 2) throw DimensionError("align_tokens: skeleton tokens must be [T_sk, D_sk]");
  if (rgb_frames.rank() != 3) throw DimensionError("align_tokens: RGB frames must be [T, N_p, D_rgb]");
  const std::size_t t_rgb = rgb_frames.dim(0), n_p = rgb_frames.dim(1), d_rgb = rgb_frames.dim(2);
  const std::size_t d_sk = sk_tokens.cols();
  if (n_p == 0) throw InputError("align_tokens: frames need at least one patch");
  const auto idx = align_indices(sk_tokens.rows(), t_rgb);

  std::vector<FrameTokens> frames;
  frames.reserve(t_rgb);
  for (std::size_t i = 0; i < t_rgb; ++i) {
    const auto* p = rgb_frames.ptr() + i * n_p * d_rgb;
    const auto sk = sk_tokens.row_span(idx[i]);
    frames.push_back(FrameTokens{Tensor({n_p, d_rgb}, std::vector<double>(p, p + n_p * d_rgb)),
                                 Tensor({1, d_sk}, std::vector<double>(sk.begin(), sk.end()))});
  }
  return frames;
}

namespace {

void check_frames(std::span<const FrameTokens> frames, const FusionDims& dims) {
  if (frames.empty()) throw InputError("fuse_sequence: empty frame list");
  const std::size_t n_p = frames.front().rgb_patches.rows();
  for (const auto& f : frames) {
    if (f.rgb_patches.rank() != 2 || f.rgb_patches.cols() != dims.d_rgb ||
        f.rgb_patches.rows() != n_p || n_p == 0) {
      throw DimensionError("fusion: RGB patches must be [N_p, " + std::to_string(dims.d_rgb) +
                           "] with a shared N_p >= 1, got " +
                           shape_string(f.rgb_patches.shape()));
    }
    if (f.skeleton_token.size() != dims.d_sk) {
      throw DimensionError("fusion: skeleton token must have " + std::to_string(dims.d_sk) +
                           " values, got " + shape_string(f.skeleton_token.shape()));
    }
  }
}

Tensor stack_skeleton(std::span<const FrameTokens> frames, std::size_t d_sk) {
  Tensor out({frames.size(), d_sk});
  for (std::size_t f = 0; f < frames.size(); ++f)
    std::copy_n(frames[f].skeleton_token.ptr(), d_sk, out.ptr() + f * d_sk);
  return out;
}

Tensor stack_patches(std::span<const FrameTokens> frames) {
  const std::size_t n_p = frames.front().rgb_patches.rows();
  const std::size_t d = frames.front().rgb_patches.cols();
  Tensor out({frames.size() * n_p, d});
  for (std::size_t f = 0; f < frames.size(); ++f)
    std::copy_n(frames[f].rgb_patches.ptr(), n_p * d, out.ptr() + f * n_p * d);
  return out;
}

Tensor mean_patches(std::span<const FrameTokens> frames) {
  const std::size_t n_p = frames.front().rgb_patches.rows();
  const std::size_t d = frames.front().rgb_patches.cols();
  Tensor out({frames.size(), d});
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const Tensor& p = frames[f].rgb_patches;
    for (std::size_t i = 0; i < n_p; ++i)
      for (std::size_t j = 0; j < d; ++j) out(f, j) += p(i, j);
  }
  for (auto& v : out.data()) v /= static_cast<double>(n_p);
  return out;
}

}  // namespace

Var fuse_sequence(std::span<const FrameTokens> frames, const FusionParams& params, Tape& tape) {
  check_frames(frames, params.dims);
  const std::size_t n_frames = frames.size();

  switch (params.mode) {
    case FusionMode::CrossAttention: {
      const std::size_t n_p = frames.front().rgb_patches.rows();
      const Var q = matmul(Var::constant(stack_skeleton(frames, params.dims.d_sk)), tape.param(params.w_q));
      const Var patches = Var::constant(stack_patches(frames));
      const Var k = matmul(patches, tape.param(params.w_k));
      const Var v = matmul(patches, tape.param(params.w_v));
      const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.dims.d_key));
      std::vector<Var> fused;
      fused.reserve(n_frames);
      for (std::size_t f = 0; f < n_frames; ++f) {
        const Var scores = scale(matmul_nt(slice_rows(q, f, 1), slice_rows(k, f * n_p, n_p)), inv_sqrt_dk);
        fused.push_back(matmul(softmax_rows(scores), slice_rows(v, f * n_p, n_p)));
      }
      return n_frames == 1 ? fused.front() : concat_rows(fused);
    }
    case FusionMode::Mean: {
      const Var rgb = matmul(Var::constant(mean_patches(frames)), tape.param(params.w_v));
      const Var sk = matmul(Var::constant(stack_skeleton(frames, params.dims.d_sk)), tape.param(params.w_sk));
      return scale(add(rgb, sk), 0.5);
    }
    case FusionMode::Linear: {
      const Tensor sk = stack_skeleton(frames, params.dims.d_sk);
      const Tensor rgb = mean_patches(frames);
      const std::size_t width = params.dims.d_sk + params.dims.d_rgb;
      Tensor joined({n_frames, width});
      for (std::size_t f = 0; f < n_frames; ++f) {
        std::copy_n(sk.ptr() + f * params.dims.d_sk, params.dims.d_sk, joined.ptr() + f * width);
        std::copy_n(rgb.ptr() + f * params.dims.d_rgb, params.dims.d_rgb,
                    joined.ptr() + f * width + params.dims.d_sk);
      }
      return matmul(Var::constant(std::move(joined)), tape.param(params.w_lin));
    }
  }
  throw ConfigError("unhandled fusion mode");
}

Var cross_attention_fuse(const FrameTokens& frame, const FusionParams& params, Tape& tape) {
  if (params.mode != FusionMode::CrossAttention) {
    throw ConfigError("cross_attention_fuse called with fusion mode " +
                      std::string(to_string(params.mode)));
  }
  return fuse_sequence(std::span<const FrameTokens>(&frame, 1), params, tape);
}

Tensor cross_attention_weights(const FrameTokens& frame, const FusionParams& params,
                               const ParamStore& store) {
  if (params.mode != FusionMode::CrossAttention) throw ConfigError("not a cross-attention head");
  check_frames(std::span<const FrameTokens>(&frame, 1), params.dims);
  Tape tape(store, false);
  const Var q = matmul(Var::constant(frame.skeleton_token.reshaped({1, params.dims.d_sk})),
                       tape.param(params.w_q));
  const Var k = matmul(Var::constant(frame.rgb_patches), tape.param(params.w_k));
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.dims.d_key));
  return softmax_rows(scale(matmul_nt(q, k), inv_sqrt_dk)).value();
}

}  // namespace mvgmn
