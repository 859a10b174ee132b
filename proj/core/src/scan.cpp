#include "mvgmn/scan.hpp"

#include <algorithm>
#include <cmath>

#include "mvgmn/errors.hpp"
#include "mvgmn/init.hpp"
#include "mvgmn/ops.hpp"

namespace mvgmn {

std::string_view to_string(ScanOrder order) {
  switch (order) {
    case ScanOrder::ViewForward: return "view_forward";
    case ScanOrder::ViewBackward: return "view_backward";
    case ScanOrder::TimeForward: return "time_forward";
    case ScanOrder::TimeBackward: return "time_backward";
  }
  return "?";
}

std::string_view to_string(ScanMode mode) {
  switch (mode) {
    case ScanMode::ViewPrioritized: return "view";
    case ScanMode::TimePrioritized: return "time";
    case ScanMode::ViewTime: return "view_time";
  }
  return "?";
}

ScanMode parse_scan_mode(std::string_view name) {
  if (name == "view" || name == "view_prioritized") return ScanMode::ViewPrioritized;
  if (name == "time" || name == "time_prioritized") return ScanMode::TimePrioritized;
  if (name == "view_time") return ScanMode::ViewTime;
  throw ConfigError("unknown scan mode '" + std::string(name) +
                    "' (expected view, time or view_time)");
}

std::vector<ScanOrder> scan_directions(ScanMode mode) {
  switch (mode) {
    case ScanMode::ViewPrioritized: return {ScanOrder::ViewForward, ScanOrder::ViewBackward};
    case ScanMode::TimePrioritized: return {ScanOrder::TimeForward, ScanOrder::TimeBackward};
    case ScanMode::ViewTime:
      return {ScanOrder::ViewForward, ScanOrder::ViewBackward, ScanOrder::TimeForward,
              ScanOrder::TimeBackward};
  }
  return {};
}

std::vector<std::size_t> scan_permutation(std::size_t views, std::size_t steps, ScanOrder order) {
  const std::size_t n = views * steps;
  std::vector<std::size_t> perm(n);
  const bool view_major = order == ScanOrder::ViewForward || order == ScanOrder::ViewBackward;
  for (std::size_t i = 0; i < n; ++i) {
    if (view_major) {
      // position i = t * V + v
      const std::size_t t = i / views, v = i % views;
      perm[i] = v * steps + t;
    } else {
      perm[i] = i;
    }
  }
  if (order == ScanOrder::ViewBackward || order == ScanOrder::TimeBackward) {
    std::reverse(perm.begin(), perm.end());
  }
  return perm;
}

Var flatten_grid(const FeatureGrid& grid, ScanOrder order) {
  if (grid.values.rows() != grid.vertices()) {
    throw DimensionError("flatten_grid: grid holds " + std::to_string(grid.values.rows()) +
                         " rows, expected V*T = " + std::to_string(grid.vertices()));
  }
  const auto perm = scan_permutation(grid.views, grid.steps, order);
  return permute_rows(grid.values, perm);
}

FeatureGrid restore_grid(const Var& seq, ScanOrder order, std::size_t views, std::size_t steps) {
  if (seq.value().rank() != 2 || seq.rows() != views * steps) {
    throw DimensionError("restore_grid: sequence " + shape_string(seq.shape()) +
                         " does not hold V*T = " + std::to_string(views * steps) + " rows");
  }
  const auto perm = scan_permutation(views, steps, order);
  std::vector<std::size_t> inverse(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
  return FeatureGrid{views, steps, permute_rows(seq, inverse)};
}

// ---------------------------------------------------------------------------
// Selective scan

SsmParams SsmParams::create(ParamStore& store, std::size_t channels, std::size_t state, Rng& rng,
                            const std::string& prefix) {
  if (channels == 0 || state == 0) throw ConfigError("SSM dimensions must be positive");
  SsmParams p;
  p.channels = channels;
  p.state = state;
  Tensor a_log({channels, state});
  for (std::size_t d = 0; d < channels; ++d)
    for (std::size_t n = 0; n < state; ++n) a_log(d, n) = std::log(static_cast<double>(n + 1));
  p.a_log = store.add(prefix + ".a_log", std::move(a_log));
  p.w_b = store.add(prefix + ".w_b", init::lecun_uniform({channels, state}, rng));
  p.w_c = store.add(prefix + ".w_c", init::lecun_uniform({channels, state}, rng));
  p.w_delta = store.add(prefix + ".w_delta", init::uniform({channels, 1}, 0.1 / std::sqrt(static_cast<double>(channels)), rng));
  // Step size starts log-uniform in [1e-3, 1e-1]; store its softplus inverse.
  const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
  p.b_delta = store.add(prefix + ".b_delta", Tensor({1, 1}, {std::log(std::expm1(dt))}));
  p.d_skip = store.add(prefix + ".d_skip", Tensor::filled({1, channels}, 1.0));
  return p;
}

namespace {

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Var selective_scan(const Var& x, const Var& a_log, const Var& w_b, const Var& w_c,
                   const Var& w_delta, const Var& b_delta, const Var& d_skip) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || xv.rows() == 0) throw DimensionError("selective_scan: x must be [L >= 1, D]");
  const std::size_t L = xv.rows(), D = xv.cols();
  const std::size_t N = a_log.value().rank() == 2 ? a_log.cols() : 0;
  if (a_log.shape() != Shape{D, N} || w_b.shape() != Shape{D, N} || w_c.shape() != Shape{D, N} ||
      w_delta.shape() != Shape{D, 1} || b_delta.value().size() != 1 ||
      d_skip.value().size() != D || N == 0) {
    throw DimensionError("selective_scan: parameter shapes do not match input " +
                         shape_string(xv.shape()));
  }

  Tensor bmat({L, N}), cmat({L, N}), zvec({L, 1}), delta({L, 1});
  kernels::gemm_nn(xv, w_b.value(), bmat, false);
  kernels::gemm_nn(xv, w_c.value(), cmat, false);
  kernels::gemm_nn(xv, w_delta.value(), zvec, false);
  const double bias = b_delta.value()[0];
  for (std::size_t t = 0; t < L; ++t) {
    zvec[t] += bias;
    delta[t] = softplus(zvec[t]);
  }
  Tensor a({D, N});
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(a_log.value()[i]);
  const Tensor& skip = d_skip.value();

  Tape* tape = nullptr;
  for (const Var* v : {&x, &a_log, &w_b, &w_c, &w_delta, &b_delta, &d_skip}) {
    if (v->tape()) tape = v->tape();
  }
  bool needs_grad = false;
  for (const Var* v : {&x, &a_log, &w_b, &w_c, &w_delta, &b_delta, &d_skip}) {
    needs_grad = needs_grad || v->requires_grad();
  }
  const bool keep_states = tape && tape->recording() && needs_grad;

  Tensor y({L, D});
  Tensor states = keep_states ? Tensor({L, D, N}) : Tensor();
  Tensor decays = keep_states ? Tensor({L, D, N}) : Tensor();
  std::vector<double> h(D * N, 0.0);
  for (std::size_t t = 0; t < L; ++t) {
    const double dt = delta[t];
    const double* brow = bmat.ptr() + t * N;
    const double* crow = cmat.ptr() + t * N;
    const double* xrow = xv.ptr() + t * D;
    for (std::size_t d = 0; d < D; ++d) {
      const double* arow = a.ptr() + d * N;
      double* hrow = h.data() + d * N;
      const double drive = dt * xrow[d];
      double* decay_row = keep_states ? decays.ptr() + (t * D + d) * N : nullptr;
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double decay = std::exp(dt * arow[n]);
        if (decay_row) decay_row[n] = decay;
        hrow[n] = decay * hrow[n] + drive * brow[n];
        acc += crow[n] * hrow[n];
      }
      y[t * D + d] = acc + skip[d] * xrow[d];
    }
    if (keep_states) std::copy(h.begin(), h.end(), states.ptr() + t * D * N);
  }
  for (double v : h) {
    if (!std::isfinite(v)) throw NumericError("selective_scan: hidden state became non-finite");
  }
  if (!tape) return Var::constant(std::move(y));

  return tape->record(
      std::move(y), {x, a_log, w_b, w_c, w_delta, b_delta, d_skip},
      [L, D, N, bmat = std::move(bmat), cmat = std::move(cmat), zvec = std::move(zvec),
       delta = std::move(delta), a = std::move(a), states = std::move(states),
       decays = std::move(decays)](Node& node) {
        const Tensor& xv = node.inputs[0]->value;
        const Tensor& wb = node.inputs[2]->value;
        const Tensor& wc = node.inputs[3]->value;
        const Tensor& wd = node.inputs[4]->value;
        const Tensor& skip = node.inputs[6]->value;
        const Tensor& gy = node.grad;

        Tensor gx({L, D}), gb({L, N}), gc({L, N}), ga({D, N});
        Tensor gwd({D, 1}), gskip({1, D});
        double gbias = 0.0;
        std::vector<double> gh(D * N, 0.0);

        for (std::size_t tt = L; tt-- > 0;) {
          const double dt = delta[tt];
          const double* brow = bmat.ptr() + tt * N;
          const double* crow = cmat.ptr() + tt * N;
          const double* xrow = xv.ptr() + tt * D;
          const double* hcur = states.ptr() + tt * D * N;
          const double* dcur = decays.ptr() + tt * D * N;
          const double* hprev = tt > 0 ? states.ptr() + (tt - 1) * D * N : nullptr;
          double* gbrow = gb.ptr() + tt * N;
          double* gcrow = gc.ptr() + tt * N;
          double gdelta = 0.0;
          for (std::size_t d = 0; d < D; ++d) {
            const double gyd = gy[tt * D + d];
            const double xd = xrow[d];
            const double* arow = a.ptr() + d * N;
            double* ghrow = gh.data() + d * N;
            double* garow = ga.ptr() + d * N;
            double gxd = 0.0;
            for (std::size_t n = 0; n < N; ++n) {
              double g = ghrow[n] + gyd * crow[n];
              gcrow[n] += gyd * hcur[d * N + n];
              const double decay = dcur[d * N + n];
              const double prev = hprev ? hprev[d * N + n] : 0.0;
              const double gdecay = g * prev;
              gdelta += gdecay * decay * arow[n] + g * brow[n] * xd;
              garow[n] += gdecay * decay * dt;
              gbrow[n] += g * dt * xd;
              gxd += g * dt * brow[n];
              ghrow[n] = g * decay;
            }
            gx[tt * D + d] += gxd + gyd * skip[d];
            gskip[d] += gyd * xd;
          }
          const double gz = gdelta * sigmoid(zvec[tt]);
          gbias += gz;
          for (std::size_t d = 0; d < D; ++d) {
            gx[tt * D + d] += gz * wd[d];
            gwd[d] += gz * xrow[d];
          }
        }
        // B_t = x_t W_B and C_t = x_t W_C.
        kernels::gemm_nt(gb, wb, gx, true);
        kernels::gemm_nt(gc, wc, gx, true);

        if (Tensor* g = node.input_grad(0)) g->add_inplace(gx);
        if (Tensor* g = node.input_grad(1))
          for (std::size_t i = 0; i < ga.size(); ++i) (*g)[i] += ga[i] * a[i];
        if (Tensor* g = node.input_grad(2)) kernels::gemm_tn(xv, gb, *g, true);
        if (Tensor* g = node.input_grad(3)) kernels::gemm_tn(xv, gc, *g, true);
        if (Tensor* g = node.input_grad(4)) g->add_inplace(gwd);
        if (Tensor* g = node.input_grad(5)) (*g)[0] += gbias;
        if (Tensor* g = node.input_grad(6))
          for (std::size_t d = 0; d < D; ++d) (*g)[d] += gskip[d];
      });
}

Var selective_scan(const Var& x, const SsmParams& ssm, Tape& tape) {
  return selective_scan(x, tape.param(ssm.a_log), tape.param(ssm.w_b), tape.param(ssm.w_c),
                        tape.param(ssm.w_delta), tape.param(ssm.b_delta), tape.param(ssm.d_skip));
}

// ---------------------------------------------------------------------------
// Mamba layer and directional scans

MambaLayerParams MambaLayerParams::create(ParamStore& store, std::size_t d_model,
                                          std::size_t d_inner, std::size_t state,
                                          std::size_t conv_width, Rng& rng,
                                          const std::string& prefix) {
  if (d_model == 0 || d_inner == 0) throw ConfigError("Mamba layer widths must be positive");
  if (conv_width % 2 == 0) throw ConfigError("Mamba conv width must be odd");
  MambaLayerParams p;
  p.d_model = d_model;
  p.d_inner = d_inner;
  p.conv_width = conv_width;
  p.w_in = store.add(prefix + ".w_in", init::lecun_uniform({d_model, d_inner}, rng));
  p.b_in = store.add(prefix + ".b_in", Tensor({1, d_inner}));
  p.conv_w = store.add(prefix + ".conv_w", init::uniform({conv_width, d_inner},
                                                         std::sqrt(3.0 / static_cast<double>(conv_width)), rng));
  p.conv_b = store.add(prefix + ".conv_b", Tensor({1, d_inner}));
  p.ssm = SsmParams::create(store, d_inner, state, rng, prefix + ".ssm");
  p.w_res = store.add(prefix + ".w_res", init::lecun_uniform({d_model, d_inner}, rng));
  p.b_res = store.add(prefix + ".b_res", Tensor({1, d_inner}));
  p.w_out = store.add(prefix + ".w_out", init::lecun_uniform({d_inner, d_model}, rng));
  p.b_out = store.add(prefix + ".b_out", Tensor({1, d_model}));
  return p;
}

Var mamba_layer(const Var& seq, const MambaLayerParams& params, Tape& tape) {
  if (seq.value().rank() != 2 || seq.cols() != params.d_model) {
    throw ConfigError("mamba_layer: input " + shape_string(seq.shape()) +
                      " does not match model width " + std::to_string(params.d_model));
  }
  const Var projected = add_row(matmul(seq, tape.param(params.w_in)), tape.param(params.b_in));
  const Var conv = add_row(depthwise_conv1d_same(projected, tape.param(params.conv_w)),
                           tape.param(params.conv_b));
  const Var scanned = selective_scan(conv, params.ssm, tape);
  const Var residual = add_row(matmul(seq, tape.param(params.w_res)), tape.param(params.b_res));
  return add_row(matmul(add(scanned, residual), tape.param(params.w_out)), tape.param(params.b_out));
}

Var pre_conv(const Var& seq, const Var& kernel) { return relu(conv1d_same(seq, kernel)); }

DirectionalScanParams DirectionalScanParams::create(ParamStore& store, std::size_t d_model,
                                                    std::size_t d_inner, std::size_t state,
                                                    std::size_t pre_conv_width,
                                                    std::size_t conv_width, Rng& rng,
                                                    const std::string& prefix) {
  if (pre_conv_width % 2 == 0) throw ConfigError("pre-convolution width must be odd");
  DirectionalScanParams p;
  p.pre_conv = store.add(prefix + ".pre_conv",
                         init::he_uniform({pre_conv_width, d_model, d_model}, rng));
  p.mamba = MambaLayerParams::create(store, d_model, d_inner, state, conv_width, rng,
                                     prefix + ".mamba");
  return p;
}

FeatureGrid directional_scan(const FeatureGrid& grid, ScanOrder order,
                             const DirectionalScanParams& params, Tape& tape) {
  const Var seq = flatten_grid(grid, order);
  const Var conv = pre_conv(seq, tape.param(params.pre_conv));
  const Var out = mamba_layer(conv, params.mamba, tape);
  return restore_grid(out, order, grid.views, grid.steps);
}

FeatureGrid bidirectional_block(const FeatureGrid& grid, ScanMode mode,
                                std::span<const DirectionalScanParams> layers, Tape& tape) {
  const auto directions = scan_directions(mode);
  if (layers.size() != directions.size()) {
    throw ConfigError("bidirectional_block: mode " + std::string(to_string(mode)) + " needs " +
                      std::to_string(directions.size()) + " layer sets, got " +
                      std::to_string(layers.size()));
  }
  FeatureGrid current = grid;
  for (std::size_t i = 0; i < directions.size(); ++i) {
    current = directional_scan(current, directions[i], layers[i], tape);
  }
  return current;
}

}  // namespace mvgmn
