#include "mvgmn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "mvgmn/errors.hpp"
#include "mvgmn/init.hpp"
#include "mvgmn/random.hpp"

namespace mvgmn {

void BenchConfig::validate() const {
  if (aggregators.empty()) throw ConfigError("bench: no aggregators");
  if (lengths.empty()) throw ConfigError("bench: no lengths");
  if (views == 0) throw ConfigError("bench: views must be >= 1");
  for (std::size_t l : lengths) {
    if (l == 0 || l % views != 0)
      throw ConfigError(fmt::format("bench: L={} is not a positive multiple of V={}", l, views));
  }
  if (repeats < 5) throw ConfigError("bench: repeats must be >= 5");
}

ModelConfig bench_model_config(const BenchConfig& config, Aggregator aggregator, std::size_t length) {
  ModelConfig mc;
  mc.views = config.views;
  mc.steps = length / config.views;
  mc.width = config.width;
  mc.blocks = config.blocks;
  mc.aggregator = aggregator;
  mc.knn_k = std::min<std::size_t>(mc.knn_k, length - 1);
  mc.validate();
  return mc;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<BenchRecord> run_scaling_bench(const BenchConfig& config) {
  config.validate();
  using clock = std::chrono::steady_clock;
  std::vector<BenchRecord> out;
  for (Aggregator agg : config.aggregators) {
    for (std::size_t length : config.lengths) {
      const ModelConfig mc = bench_model_config(config, agg, length);
      const Model model(mc, config.seed);
      Rng rng(derive_seed(config.seed, length));
      FeatureGrid grid{mc.views, mc.steps, Var::constant(init::uniform({length, mc.width}, 1.0, rng))};

      auto run_once = [&] {
        Tape tape(model.params(), false);
        const FeatureGrid y = model.aggregate(grid, tape);
        if (y.values.rows() != length) throw NumericError("bench: unexpected output shape");
      };
      auto sample = [&](std::size_t inner) {
        const auto t0 = clock::now();
        for (std::size_t i = 0; i < inner; ++i) run_once();
        return std::chrono::duration<double, std::nano>(clock::now() - t0).count();
      };

      for (std::size_t i = 0; i < config.warmup; ++i) run_once();
      std::size_t inner = 1;
      double probe = sample(1);
      while (probe * static_cast<double>(inner) < config.min_sample_ns && inner < (1u << 20)) {
        inner *= 2;
      }
      std::vector<double> times;
      times.reserve(config.repeats);
      for (std::size_t r = 0; r < config.repeats; ++r)
        times.push_back(sample(inner) / static_cast<double>(inner));

      BenchRecord rec;
      rec.aggregator = std::string(to_string(agg));
      rec.length = length;
      rec.median_ns = median(std::move(times));
      rec.repeats = config.repeats;
      rec.warmup = config.warmup;
      rec.inner = inner;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

SlopeFit fit_slope(std::span<const BenchRecord> records) {
  std::set<std::size_t> distinct;
  for (const auto& r : records) distinct.insert(r.length);
  if (distinct.size() < 4) throw InputError("fit_slope needs at least 4 distinct L values");
  const double n = static_cast<double>(records.size());
  double sx = 0, sy = 0;
  for (const auto& r : records) {
    if (!(r.median_ns > 0.0)) throw InputError("fit_slope: times must be positive");
    sx += std::log(static_cast<double>(r.length));
    sy += std::log(r.median_ns);
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& r : records) {
    const double dx = std::log(static_cast<double>(r.length)) - mx;
    const double dy = std::log(r.median_ns) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

std::vector<BenchRecord> records_for(std::span<const BenchRecord> records, const std::string& aggregator) {
  std::vector<BenchRecord> out;
  for (const auto& r : records)
    if (r.aggregator == aggregator) out.push_back(r);
  return out;
}

std::string bench_csv(std::span<const BenchRecord> records) {
  std::string out = "aggregator,L,median_ns,repeats\n";
  for (const auto& r : records) out += fmt::format("{},{},{:.0f},{}\n", r.aggregator, r.length, r.median_ns, r.repeats);
  return out;
}

std::string bench_summary_json(std::span<const BenchRecord> records) {
  nlohmann::ordered_json j;
  j["aggregators"] = nlohmann::ordered_json::object();
  std::vector<std::string> names;
  for (const auto& r : records)
    if (std::find(names.begin(), names.end(), r.aggregator) == names.end()) names.push_back(r.aggregator);
  for (const auto& name : names) {
    const auto subset = records_for(records, name);
    nlohmann::ordered_json a;
    a["L"] = nlohmann::ordered_json::array();
    a["median_ns"] = nlohmann::ordered_json::array();
    for (const auto& r : subset) {
      a["L"].push_back(r.length);
      a["median_ns"].push_back(r.median_ns);
    }
    std::set<std::size_t> distinct;
    for (const auto& r : subset) distinct.insert(r.length);
    if (distinct.size() >= 4) {
      const SlopeFit fit = fit_slope(subset);
      a["slope"] = fit.slope;
      a["r2"] = fit.r2;
    } else {
      a["slope"] = nullptr;
      a["r2"] = nullptr;
    }
    j["aggregators"][name] = std::move(a);
  }
  return j.dump(2) + "\n";
}

}  // namespace mvgmn
