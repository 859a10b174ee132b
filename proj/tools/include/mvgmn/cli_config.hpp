#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mvgmn/bench.hpp"
#include "mvgmn/data.hpp"
#include "mvgmn/model.hpp"
#include "mvgmn/train.hpp"

namespace mvgmn::cli {

/// Every tunable behind one flat namespace of dotted keys ("model.knn_k").
/// Values are layered defaults < config file < flags.
struct CliConfig {
  SyntheticSpec data;
  ModelConfig model;
  TrainConfig train;
  BenchConfig bench;

  /// Throws ConfigError for unknown keys or values of the wrong type.
  void set(std::string_view key, const nlohmann::json& value);
  nlohmann::json get(std::string_view key) const;
  /// Applies every key of a flat JSON object.
  void merge(const nlohmann::json& flat);
  void merge_file(const std::string& path);
  nlohmann::ordered_json to_json() const;

  /// Model config for a dataset: shape fields come from the data spec.
  ModelConfig model_for(const SyntheticSpec& spec) const;

  static const std::vector<std::string>& keys();
};

}  // namespace mvgmn::cli
