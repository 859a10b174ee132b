#include "mvgmn/model.hpp"

#include <cmath>

#include <json.hpp>

#include "mvgmn/errors.hpp"
#include "mvgmn/init.hpp"
#include "mvgmn/ops.hpp"

namespace mvgmn {

using nlohmann::json;

std::string_view to_string(Aggregator a) {
  switch (a) {
    case Aggregator::Linear: return "linear";
    case Aggregator::Attention: return "attention";
    case Aggregator::Ssm: return "ssm";
    case Aggregator::GcnRule: return "gcn_rule";
    case Aggregator::GcnRuleKnn: return "gcn_rule_knn";
    case Aggregator::AttentionGraph: return "attention_graph";
    case Aggregator::MvGmn: return "mvgmn";
  }
  return "?";
}

const std::vector<Aggregator>& all_aggregators() {
  static const std::vector<Aggregator> all{Aggregator::Linear,     Aggregator::Attention,
                                           Aggregator::Ssm,        Aggregator::GcnRule,
                                           Aggregator::GcnRuleKnn, Aggregator::AttentionGraph,
                                           Aggregator::MvGmn};
  return all;
}

Aggregator parse_aggregator(std::string_view name) {
  for (Aggregator a : all_aggregators())
    if (to_string(a) == name) return a;
  throw ConfigError("unknown aggregator '" + std::string(name) +
                    "' (expected linear, attention, ssm, gcn_rule, gcn_rule_knn, "
                    "attention_graph or mvgmn)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be >= 1");
  };
  positive(views, "views");
  positive(steps, "steps");
  positive(width, "width");
  positive(patches, "patches");
  positive(rgb_dim, "rgb_dim");
  positive(skeleton_dim, "skeleton_dim");
  positive(key_dim, "key_dim");
  positive(state, "state");
  positive(inner_expand, "inner_expand");
  positive(gcn_layers_per_block, "gcn_layers_per_block");
  positive(attention_chunk, "attention_chunk");
  if (blocks != 2 && blocks != 4 && blocks != 8 && blocks != 12) {
    throw ConfigError("model.blocks = " + std::to_string(blocks) +
                      " is not a supported schedule; use 2, 4, 8 or 12");
  }
  if (knn_k < 1) throw ConfigError("model.knn_k must be >= 1");
  const bool knn = aggregator == Aggregator::GcnRuleKnn || aggregator == Aggregator::AttentionGraph ||
                   aggregator == Aggregator::MvGmn;
  if (knn && knn_k + 1 > views * steps) {
    throw ConfigError("model.knn_k = " + std::to_string(knn_k) + " needs at least " +
                      std::to_string(knn_k + 1) + " vertices, grid has " +
                      std::to_string(views * steps));
  }
  if (classes < 2) throw ConfigError("model.classes must be >= 2");
  if (pre_conv_width % 2 == 0 || conv_width % 2 == 0) {
    throw ConfigError("model.pre_conv_width and model.conv_width must be odd");
  }
}

std::string ModelConfig::to_json() const {
  json j{{"views", views},
         {"steps", steps},
         {"width", width},
         {"patches", patches},
         {"rgb_dim", rgb_dim},
         {"skeleton_dim", skeleton_dim},
         {"key_dim", key_dim},
         {"blocks", blocks},
         {"scan_mode", std::string(mvgmn::to_string(scan_mode))},
         {"aggregator", std::string(mvgmn::to_string(aggregator))},
         {"knn_k", knn_k},
         {"fusion", std::string(mvgmn::to_string(fusion))},
         {"classes", classes},
         {"gcn_layers_per_block", gcn_layers_per_block},
         {"state", state},
         {"inner_expand", inner_expand},
         {"pre_conv_width", pre_conv_width},
         {"conv_width", conv_width},
         {"attention_chunk", attention_chunk}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  const json j = json::parse(text);
  ModelConfig c;
  c.views = j.at("views").get<std::size_t>();
  c.steps = j.at("steps").get<std::size_t>();
  c.width = j.at("width").get<std::size_t>();
  c.patches = j.at("patches").get<std::size_t>();
  c.rgb_dim = j.at("rgb_dim").get<std::size_t>();
  c.skeleton_dim = j.at("skeleton_dim").get<std::size_t>();
  c.key_dim = j.at("key_dim").get<std::size_t>();
  c.blocks = j.at("blocks").get<std::size_t>();
  c.scan_mode = parse_scan_mode(j.at("scan_mode").get<std::string>());
  c.aggregator = parse_aggregator(j.at("aggregator").get<std::string>());
  c.knn_k = j.at("knn_k").get<std::size_t>();
  c.fusion = parse_fusion_mode(j.at("fusion").get<std::string>());
  c.classes = j.at("classes").get<std::size_t>();
  c.gcn_layers_per_block = j.at("gcn_layers_per_block").get<std::size_t>();
  c.state = j.at("state").get<std::size_t>();
  c.inner_expand = j.at("inner_expand").get<std::size_t>();
  c.pre_conv_width = j.at("pre_conv_width").get<std::size_t>();
  c.conv_width = j.at("conv_width").get<std::size_t>();
  c.attention_chunk = j.at("attention_chunk").get<std::size_t>();
  return c;
}

std::vector<BlockUnit> block_schedule(std::size_t n_blocks, ScanMode mode) {
  if (n_blocks != 2 && n_blocks != 4 && n_blocks != 8 && n_blocks != 12) {
    throw ConfigError("block schedule supports 2, 4, 8 or 12 blocks, got " +
                      std::to_string(n_blocks));
  }
  if (n_blocks == 2 && mode == ScanMode::ViewTime) {
    return {{ScanOrder::ViewForward, true}, {ScanOrder::TimeForward, true}};
  }
  const auto cycle = scan_directions(mode);
  std::vector<BlockUnit> out;
  for (std::size_t i = 0; i < n_blocks; ++i) out.push_back({cycle[i % cycle.size()], true});
  return out;
}

// ---------------------------------------------------------------------------

bool Model::uses_scan() const {
  return config_.aggregator == Aggregator::Ssm || config_.aggregator == Aggregator::MvGmn;
}

bool Model::uses_gcn() const {
  switch (config_.aggregator) {
    case Aggregator::GcnRule:
    case Aggregator::GcnRuleKnn:
    case Aggregator::AttentionGraph:
    case Aggregator::MvGmn: return true;
    default: return false;
  }
}

bool Model::uses_linear() const {
  switch (config_.aggregator) {
    case Aggregator::Linear:
    case Aggregator::GcnRule:
    case Aggregator::GcnRuleKnn:
    case Aggregator::AttentionGraph: return true;
    default: return false;
  }
}

bool Model::uses_attention() const {
  return config_.aggregator == Aggregator::Attention ||
         config_.aggregator == Aggregator::AttentionGraph;
}

bool Model::uses_knn() const { return uses_gcn() && config_.aggregator != Aggregator::GcnRule; }

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config), seed_(seed) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.width;
  fusion_ = FusionParams::create(
      params_, config_.fusion,
      FusionDims{config_.rgb_dim, config_.skeleton_dim, config_.key_dim, d}, rng);

  schedule_ = block_schedule(config_.blocks, config_.scan_mode);
  for (std::size_t i = 0; i < schedule_.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i);
    Unit u;
    u.direction = schedule_[i].direction;
    if (uses_attention()) {
      u.att_q = params_.add(prefix + ".attn.w_q", init::lecun_uniform({d, d}, rng));
      u.att_k = params_.add(prefix + ".attn.w_k", init::lecun_uniform({d, d}, rng));
      u.att_v = params_.add(prefix + ".attn.w_v", init::lecun_uniform({d, d}, rng));
      u.att_o = params_.add(prefix + ".attn.w_o", init::lecun_uniform({d, d}, rng));
    }
    if (uses_scan()) {
      u.scan = DirectionalScanParams::create(params_, d, d * config_.inner_expand, config_.state,
                                             config_.pre_conv_width, config_.conv_width, rng,
                                             prefix + ".scan");
    }
    if (uses_linear()) {
      u.lin_w = params_.add(prefix + ".linear.w", init::he_uniform({d, d}, rng));
      u.lin_b = params_.add(prefix + ".linear.b", Tensor({1, d}));
    }
    if (uses_gcn() && schedule_[i].has_gcn) {
      for (std::size_t l = 0; l < config_.gcn_layers_per_block; ++l) {
        u.gcn.push_back(GcnLayerParams::create(params_, d, d, rng,
                                               prefix + ".gcn" + std::to_string(l)));
      }
    }
    units_.push_back(std::move(u));
  }
  head_w_ = params_.add("head.w", init::lecun_uniform({2 * d, config_.classes}, rng));
  head_b_ = params_.add("head.b", Tensor({1, config_.classes}));

  if (uses_gcn()) {
    const auto rule = rule_edges(config_.views, config_.steps);
    rule_adjacency_ = assemble_adjacency({rule.time, rule.view}, config_.views * config_.steps)
                          .normalized();
  }
}

FeatureGrid Model::fuse(const ModelInput& input, Tape& tape) const {
  if (input.views != config_.views || input.steps != config_.steps ||
      input.frames.size() != config_.views * config_.steps) {
    throw ConfigError("model input is " + std::to_string(input.views) + " views x " +
                      std::to_string(input.steps) + " steps, model expects " +
                      std::to_string(config_.views) + " x " + std::to_string(config_.steps));
  }
  return FeatureGrid{input.views, input.steps, fuse_sequence(input.frames, fusion_, tape)};
}

Var Model::attention(const Var& x, const Unit& unit, Tape& tape) const {
  const double inv = 1.0 / std::sqrt(static_cast<double>(config_.width));
  const Var q = scale(matmul(x, tape.param(unit.att_q)), inv);
  const Var kt = transpose(matmul(x, tape.param(unit.att_k)));
  const Var v = matmul(x, tape.param(unit.att_v));
  const std::size_t n = x.rows();
  std::vector<Var> parts;
  for (std::size_t start = 0; start < n; start += config_.attention_chunk) {
    const std::size_t count = std::min(config_.attention_chunk, n - start);
    const Var rows = count == n ? q : slice_rows(q, start, count);
    parts.push_back(matmul(softmax_rows(matmul(rows, kt)), v));
  }
  const Var mixed = parts.size() == 1 ? parts.front() : concat_rows(parts);
  return add(x, matmul(mixed, tape.param(unit.att_o)));
}

Var Model::graph_stage(const Var& x, const Unit& unit, Tape& tape,
                       std::vector<ViewTemporalGraph>* graphs) const {
  Var h = x;
  if (uses_linear()) h = relu(add_row(matmul(h, tape.param(unit.lin_w)), tape.param(unit.lin_b)));
  if (unit.gcn.empty()) return h;
  Tensor normalized;
  if (uses_knn()) {
    const auto graph = build_graph(config_.views, config_.steps, &h.value(), config_.knn_k);
    normalized = graph.adjacency().normalized();
    if (graphs) graphs->push_back(graph);
  } else {
    normalized = rule_adjacency_;
    if (graphs) graphs->push_back(build_graph(config_.views, config_.steps, nullptr, 0));
  }
  for (const auto& layer : unit.gcn) h = gcn_propagate(h, normalized, layer, tape);
  return h;
}

FeatureGrid Model::aggregate_impl(const FeatureGrid& fused, Tape& tape,
                                  std::vector<ViewTemporalGraph>* graphs) const {
  if (fused.views != config_.views || fused.steps != config_.steps ||
      fused.values.cols() != config_.width) {
    throw ConfigError("aggregate: grid shape does not match model config");
  }
  FeatureGrid x = fused;
  for (const auto& unit : units_) {
    switch (config_.aggregator) {
      case Aggregator::Linear:
        x.values = relu(add_row(matmul(x.values, tape.param(unit.lin_w)), tape.param(unit.lin_b)));
        break;
      case Aggregator::Attention:
        x.values = attention(x.values, unit, tape);
        break;
      case Aggregator::Ssm:
        x = directional_scan(x, unit.direction, unit.scan, tape);
        break;
      case Aggregator::GcnRule:
      case Aggregator::GcnRuleKnn:
        x.values = graph_stage(x.values, unit, tape, graphs);
        break;
      case Aggregator::AttentionGraph:
        x.values = graph_stage(attention(x.values, unit, tape), unit, tape, graphs);
        break;
      case Aggregator::MvGmn:
        x = directional_scan(x, unit.direction, unit.scan, tape);
        x.values = graph_stage(x.values, unit, tape, graphs);
        break;
    }
  }
  return x;
}

FeatureGrid Model::aggregate(const FeatureGrid& fused, Tape& tape) const {
  return aggregate_impl(fused, tape, nullptr);
}

Var Model::head(const FeatureGrid& x, const FeatureGrid& fused, Tape& tape) const {
  const Var pooled = concat_cols(mean_rows(x.values), mean_rows(fused.values));
  return add_row(matmul(pooled, tape.param(head_w_)), tape.param(head_b_));
}

Var Model::forward(const ModelInput& input, Tape& tape) const {
  const FeatureGrid fused = fuse(input, tape);
  const FeatureGrid x = aggregate(fused, tape);
  return head(x, fused, tape);
}

std::vector<ViewTemporalGraph> Model::block_graphs(const ModelInput& input) const {
  Tape tape(params_, false);
  std::vector<ViewTemporalGraph> graphs;
  aggregate_impl(fuse(input, tape), tape, &graphs);
  return graphs;
}

std::size_t count_parameters(const Model& model) { return model.parameter_count(); }

}  // namespace mvgmn
