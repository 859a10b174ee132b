#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mvgmn/autograd.hpp"
#include "mvgmn/fusion.hpp"
#include "mvgmn/graph.hpp"
#include "mvgmn/scan.hpp"

namespace mvgmn {

/// View/time aggregators compared in the ablation ladder.
enum class Aggregator {
  Linear,          // per-vertex linear map, no cross-vertex mixing
  Attention,       // self-attention over all V*T vertices
  Ssm,             // directional scans only
  GcnRule,         // linear layer + GCN over rule edges
  GcnRuleKnn,      // linear layer + GCN over rule and KNN edges
  AttentionGraph,  // self-attention followed by the GcnRuleKnn stage
  MvGmn,           // directional scan followed by GCN over rule and KNN edges
};

std::string_view to_string(Aggregator a);
Aggregator parse_aggregator(std::string_view name);
const std::vector<Aggregator>& all_aggregators();

struct ModelConfig {
  std::size_t views = 3;
  std::size_t steps = 8;
  std::size_t width = 32;  // D
  std::size_t patches = 4;
  std::size_t rgb_dim = 32;
  std::size_t skeleton_dim = 32;
  std::size_t key_dim = 16;
  std::size_t blocks = 4;
  ScanMode scan_mode = ScanMode::ViewTime;
  Aggregator aggregator = Aggregator::MvGmn;
  std::size_t knn_k = 3;
  FusionMode fusion = FusionMode::CrossAttention;
  std::size_t classes = 10;
  std::size_t gcn_layers_per_block = 1;
  std::size_t state = 64;
  std::size_t inner_expand = 2;
  std::size_t pre_conv_width = 3;
  std::size_t conv_width = 3;
  /// Query rows processed per attention chunk; bounds score memory to
  /// chunk * V*T without changing the result.
  std::size_t attention_chunk = 256;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// One scheduled unit: a directional scan followed by a GCN stage.
struct BlockUnit {
  ScanOrder direction;
  bool has_gcn = true;

  friend bool operator==(const BlockUnit&, const BlockUnit&) = default;
};

/// 2 blocks: forward view scan then forward time scan (view_time mode).
/// 4, 8, 12 blocks: that many directional units cycling through the mode's
/// directions (one full bidirectional view-time cycle per 4 blocks).
std::vector<BlockUnit> block_schedule(std::size_t n_blocks, ScanMode mode);

/// Fusion-ready input of one sample: V*T frames in canonical (view, time) order.
struct ModelInput {
  std::size_t views = 0;
  std::size_t steps = 0;
  std::vector<FrameTokens> frames;
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }
  const std::vector<BlockUnit>& schedule() const noexcept { return schedule_; }

  /// Logits [1, classes].
  Var forward(const ModelInput& input, Tape& tape) const;

  FeatureGrid fuse(const ModelInput& input, Tape& tape) const;
  /// Aggregator body; output keeps the canonical vertex order.
  FeatureGrid aggregate(const FeatureGrid& fused, Tape& tape) const;
  /// Linear classifier on [GAP(x) | GAP(fused)].
  Var head(const FeatureGrid& x, const FeatureGrid& fused, Tape& tape) const;

  /// Graph used by the GCN stage of each block for this input; empty for
  /// aggregators without a GCN stage.
  std::vector<ViewTemporalGraph> block_graphs(const ModelInput& input) const;

 private:
  struct Unit {
    ScanOrder direction = ScanOrder::ViewForward;
    DirectionalScanParams scan;
    ParamId lin_w = 0, lin_b = 0;
    ParamId att_q = 0, att_k = 0, att_v = 0, att_o = 0;
    std::vector<GcnLayerParams> gcn;
  };

  bool uses_scan() const;
  bool uses_gcn() const;
  bool uses_linear() const;
  bool uses_attention() const;
  bool uses_knn() const;

  Var attention(const Var& x, const Unit& unit, Tape& tape) const;
  Var graph_stage(const Var& x, const Unit& unit, Tape& tape,
                  std::vector<ViewTemporalGraph>* graphs) const;
  FeatureGrid aggregate_impl(const FeatureGrid& fused, Tape& tape,
                             std::vector<ViewTemporalGraph>* graphs) const;

  ModelConfig config_;
  std::uint64_t seed_;
  ParamStore params_;
  FusionParams fusion_;
  std::vector<BlockUnit> schedule_;
  std::vector<Unit> units_;
  ParamId head_w_ = 0, head_b_ = 0;
  Tensor rule_adjacency_;  // normalized, rule edges only
};

/// Number of trainable scalars.
std::size_t count_parameters(const Model& model);

/// Checkpoint container: "MVGC", u16 version, u32 JSON length, JSON
/// {"version","seed","config","params":[names]}, u32 tensor count, then per
/// parameter a u32 name length, the name, and one f64 tensor block.
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace mvgmn
