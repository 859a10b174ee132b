#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvgmn/model.hpp"

namespace mvgmn {

struct BenchRecord {
  std::string aggregator;
  std::size_t length = 0;  // L = V*T
  double median_ns = 0.0;  // per forward call
  std::size_t repeats = 0;
  std::size_t warmup = 0;
  /// Forward calls per timed sample; > 1 when a single call is too short
  /// for the clock.
  std::size_t inner = 1;
};

struct BenchConfig {
  std::vector<Aggregator> aggregators{Aggregator::Ssm, Aggregator::Attention};
  std::vector<std::size_t> lengths{256, 512, 1024, 2048, 4096, 8192, 16384};
  std::size_t views = 4;
  std::size_t width = 64;
  std::size_t blocks = 2;
  std::size_t repeats = 5;
  std::size_t warmup = 1;
  /// Timed samples shorter than this are repeated with more inner calls.
  double min_sample_ns = 2e6;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Model config used for one point of the sweep.
ModelConfig bench_model_config(const BenchConfig& config, Aggregator aggregator, std::size_t length);

/// Times the aggregator body (forward only, no tape recording) on random
/// grids with V fixed and T = L / V.
std::vector<BenchRecord> run_scaling_bench(const BenchConfig& config);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Least-squares fit of log(time) against log(L). Needs >= 4 distinct L.
SlopeFit fit_slope(std::span<const BenchRecord> records);

/// Records of one aggregator, in input order.
std::vector<BenchRecord> records_for(std::span<const BenchRecord> records, const std::string& aggregator);

std::string bench_csv(std::span<const BenchRecord> records);
std::string bench_summary_json(std::span<const BenchRecord> records);

}  // namespace mvgmn
