#include "mvgmn/cli_config.hpp"

#include <functional>
#include <map>

#include "mvgmn/errors.hpp"

namespace mvgmn::cli {

using nlohmann::json;

namespace {

struct Field {
  std::function<json(const CliConfig&)> get;
  std::function<void(CliConfig&, const json&)> set;
};

std::size_t as_count(const json& v, std::string_view key) {
  if (v.is_number_unsigned()) return v.get<std::size_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::size_t>(v.get<long long>());
  throw ConfigError(std::string(key) + " must be a non-negative integer");
}

std::uint64_t as_u64(const json& v, std::string_view key) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
  throw ConfigError(std::string(key) + " must be a non-negative integer");
}

double as_real(const json& v, std::string_view key) {
  if (!v.is_number()) throw ConfigError(std::string(key) + " must be a number");
  return v.get<double>();
}

std::string as_text(const json& v, std::string_view key) {
  if (!v.is_string()) throw ConfigError(std::string(key) + " must be a string");
  return v.get<std::string>();
}

#define COUNT_FIELD(name, member)                                                          \
  {name, Field{[](const CliConfig& c) { return json(c.member); },                         \
               [](CliConfig& c, const json& v) { c.member = as_count(v, name); }}}
#define REAL_FIELD(name, member)                                                           \
  {name, Field{[](const CliConfig& c) { return json(c.member); },                         \
               [](CliConfig& c, const json& v) { c.member = as_real(v, name); }}}
#define SEED_FIELD(name, member)                                                           \
  {name, Field{[](const CliConfig& c) { return json(c.member); },                         \
               [](CliConfig& c, const json& v) { c.member = as_u64(v, name); }}}
#define ENUM_FIELD(name, member, parse)                                                    \
  {name, Field{[](const CliConfig& c) { return json(std::string(to_string(c.member))); }, \
               [](CliConfig& c, const json& v) { c.member = parse(as_text(v, name)); }}}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table{
      COUNT_FIELD("data.views", data.views),
      COUNT_FIELD("data.steps", data.steps),
      COUNT_FIELD("data.skeleton_ratio", data.skeleton_ratio),
      COUNT_FIELD("data.patches", data.patches),
      COUNT_FIELD("data.rgb_dim", data.rgb_dim),
      COUNT_FIELD("data.skeleton_dim", data.skeleton_dim),
      COUNT_FIELD("data.classes", data.classes),
      COUNT_FIELD("data.subjects", data.subjects),
      COUNT_FIELD("data.samples_per_class", data.samples_per_class),
      REAL_FIELD("data.noise", data.noise),
      SEED_FIELD("data.seed", data.seed),

      COUNT_FIELD("model.width", model.width),
      COUNT_FIELD("model.key_dim", model.key_dim),
      COUNT_FIELD("model.blocks", model.blocks),
      ENUM_FIELD("model.scan_mode", model.scan_mode, parse_scan_mode),
      ENUM_FIELD("model.aggregator", model.aggregator, parse_aggregator),
      COUNT_FIELD("model.knn_k", model.knn_k),
      ENUM_FIELD("model.fusion", model.fusion, parse_fusion_mode),
      COUNT_FIELD("model.gcn_layers_per_block", model.gcn_layers_per_block),
      COUNT_FIELD("model.state", model.state),
      COUNT_FIELD("model.inner_expand", model.inner_expand),
      COUNT_FIELD("model.pre_conv_width", model.pre_conv_width),
      COUNT_FIELD("model.conv_width", model.conv_width),
      COUNT_FIELD("model.attention_chunk", model.attention_chunk),

      REAL_FIELD("train.lr", train.lr0),
      REAL_FIELD("train.plateau_factor", train.plateau_factor),
      COUNT_FIELD("train.patience", train.patience),
      COUNT_FIELD("train.batch", train.batch),
      COUNT_FIELD("train.epochs", train.epochs),
      SEED_FIELD("train.seed", train.seed),
      ENUM_FIELD("train.protocol", train.protocol, parse_protocol),
      COUNT_FIELD("train.threads", train.threads),

      {"bench.aggregators",
       Field{[](const CliConfig& c) {
               json a = json::array();
               for (Aggregator g : c.bench.aggregators) a.push_back(std::string(to_string(g)));
               return a;
             },
             [](CliConfig& c, const json& v) {
               if (!v.is_array()) throw ConfigError("bench.aggregators must be an array of names");
               std::vector<Aggregator> out;
               for (const auto& e : v) out.push_back(parse_aggregator(as_text(e, "bench.aggregators")));
               c.bench.aggregators = std::move(out);
             }}},
      {"bench.lengths",
       Field{[](const CliConfig& c) { return json(c.bench.lengths); },
             [](CliConfig& c, const json& v) {
               if (!v.is_array()) throw ConfigError("bench.lengths must be an array of integers");
               std::vector<std::size_t> out;
               for (const auto& e : v) out.push_back(as_count(e, "bench.lengths"));
               c.bench.lengths = std::move(out);
             }}},
      COUNT_FIELD("bench.views", bench.views),
      COUNT_FIELD("bench.width", bench.width),
      COUNT_FIELD("bench.blocks", bench.blocks),
      COUNT_FIELD("bench.repeats", bench.repeats),
      COUNT_FIELD("bench.warmup", bench.warmup),
      SEED_FIELD("bench.seed", bench.seed),
  };
  return table;
}

#undef COUNT_FIELD
#undef REAL_FIELD
#undef SEED_FIELD
#undef ENUM_FIELD

const Field& field(std::string_view key) {
  const auto& table = fields();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

}  // namespace

void CliConfig::set(std::string_view key, const json& value) { field(key).set(*this, value); }

json CliConfig::get(std::string_view key) const { return field(key).get(*this); }

void CliConfig::merge(const json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a JSON object of dotted keys");
  for (const auto& [key, value] : flat.items()) set(key, value);
}

void CliConfig::merge_file(const std::string& path) {
  const std::string text = read_file_bytes(path);
  json parsed;
  try {
    parsed = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  merge(parsed);
}

nlohmann::ordered_json CliConfig::to_json() const {
  nlohmann::ordered_json out;
  for (const auto& [key, f] : fields()) out[key] = f.get(*this);
  return out;
}

ModelConfig CliConfig::model_for(const SyntheticSpec& spec) const {
  ModelConfig m = model;
  m.views = spec.views;
  m.steps = spec.steps;
  m.patches = spec.patches;
  m.rgb_dim = spec.rgb_dim;
  m.skeleton_dim = spec.skeleton_dim;
  m.classes = spec.classes;
  m.validate();
  return m;
}

const std::vector<std::string>& CliConfig::keys() {
  static const std::vector<std::string> list = [] {
    std::vector<std::string> out;
    for (const auto& [key, f] : fields()) out.push_back(key);
    return out;
  }();
  return list;
}

}  // namespace mvgmn::cli
