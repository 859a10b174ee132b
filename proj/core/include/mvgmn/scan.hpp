#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvgmn/autograd.hpp"
#include "mvgmn/random.hpp"

namespace mvgmn {

/// Flattening orders of a view x time grid. In the forward orders the named
/// axis varies fastest; backward orders are exact reversals.
enum class ScanOrder { ViewForward, ViewBackward, TimeForward, TimeBackward };

enum class ScanMode { ViewPrioritized, TimePrioritized, ViewTime };

std::string_view to_string(ScanOrder order);
std::string_view to_string(ScanMode mode);
ScanMode parse_scan_mode(std::string_view name);

/// Directions applied by one bidirectional block.
std::vector<ScanOrder> scan_directions(ScanMode mode);

/// V x T x D features stored as a [V*T, D] matrix whose row v*T + t holds
/// vertex (v, t).
struct FeatureGrid {
  std::size_t views = 0;
  std::size_t steps = 0;
  Var values;

  std::size_t vertices() const { return views * steps; }
  std::size_t width() const { return values.cols(); }
};

/// perm[i] is the canonical row emitted at position i of `order`.
std::vector<std::size_t> scan_permutation(std::size_t views, std::size_t steps, ScanOrder order);

Var flatten_grid(const FeatureGrid& grid, ScanOrder order);
FeatureGrid restore_grid(const Var& seq, ScanOrder order, std::size_t views, std::size_t steps);

/// Diagonal selective state-space parameters for `channels` inputs with a
/// state of size `state` per channel. A = -exp(a_log) < 0.
struct SsmParams {
  std::size_t channels = 0;
  std::size_t state = 0;
  ParamId a_log = 0;    // [channels, state]
  ParamId w_b = 0;      // [channels, state]
  ParamId w_c = 0;      // [channels, state]
  ParamId w_delta = 0;  // [channels, 1]
  ParamId b_delta = 0;  // [1, 1]
  ParamId d_skip = 0;   // [1, channels]

  static SsmParams create(ParamStore& store, std::size_t channels, std::size_t state, Rng& rng,
                          const std::string& prefix);
};

/// Selective scan with scalar step size per position:
///   delta_t = softplus(x_t . w_delta + b_delta)
///   h_t[d]  = exp(delta_t A[d]) * h_{t-1}[d] + delta_t (x_t W_B) x_t[d]
///   y_t[d]  = <x_t W_C, h_t[d]> + d_skip[d] x_t[d]
/// One left-to-right pass; O(L * channels * state). When the tape records,
/// the hidden states are kept for the reverse pass, otherwise only the
/// running state is held.
Var selective_scan(const Var& x, const Var& a_log, const Var& w_b, const Var& w_c,
                   const Var& w_delta, const Var& b_delta, const Var& d_skip);
Var selective_scan(const Var& x, const SsmParams& ssm, Tape& tape);

/// Linear -> depthwise conv -> selective scan, plus a linear residual branch,
/// then an output projection: out = W_out(SSM(Conv(W_in x)) + W_res x).
struct MambaLayerParams {
  std::size_t d_model = 0;
  std::size_t d_inner = 0;
  std::size_t conv_width = 3;
  ParamId w_in = 0, b_in = 0;
  ParamId conv_w = 0, conv_b = 0;  // [conv_width, d_inner], [1, d_inner]
  ParamId w_res = 0, b_res = 0;
  ParamId w_out = 0, b_out = 0;
  SsmParams ssm;

  static MambaLayerParams create(ParamStore& store, std::size_t d_model, std::size_t d_inner,
                                 std::size_t state, std::size_t conv_width, Rng& rng,
                                 const std::string& prefix);
};

Var mamba_layer(const Var& seq, const MambaLayerParams& params, Tape& tape);

/// ReLU(Conv1D(seq, kernel)) with a [K, D, D] kernel.
Var pre_conv(const Var& seq, const Var& kernel);

/// Weights of one directional scan: pre-convolution and Mamba layer.
struct DirectionalScanParams {
  ParamId pre_conv = 0;  // [pre_conv_width, D, D]
  MambaLayerParams mamba;

  static DirectionalScanParams create(ParamStore& store, std::size_t d_model, std::size_t d_inner,
                                      std::size_t state, std::size_t pre_conv_width,
                                      std::size_t conv_width, Rng& rng, const std::string& prefix);
};

/// flatten(order) -> pre_conv -> mamba_layer -> restore to canonical order.
FeatureGrid directional_scan(const FeatureGrid& grid, ScanOrder order,
                             const DirectionalScanParams& params, Tape& tape);

/// Applies the directions of `mode` one after another, each consuming the
/// previous direction's output. `layers` holds one entry per direction.
FeatureGrid bidirectional_block(const FeatureGrid& grid, ScanMode mode,
                                std::span<const DirectionalScanParams> layers, Tape& tape);

}  // namespace mvgmn
