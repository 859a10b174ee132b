#include "mvgmn/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "mvgmn/cli_config.hpp"
#include "mvgmn/errors.hpp"

namespace mvgmn::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Flags shared by every subcommand; unset ones leave the config untouched.
struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> protocol, aggregator, scan_mode, fusion;
  std::optional<std::size_t> blocks, knn_k, batch, epochs;
};

void add_common(CLI::App& app, CommonFlags& f, bool needs_out = true) {
  app.add_option("--config", f.config, "JSON file of dotted config keys");
  auto* out = app.add_option("--out", f.out, "Output directory");
  if (needs_out) out->required();
  app.add_option("--seed", f.seed, "Seed of this subcommand's randomness");
  app.add_option("--protocol", f.protocol, "cross_subject or cross_view");
  app.add_option("--aggregator", f.aggregator, "linear, attention, ssm, gcn_rule, gcn_rule_knn, attention_graph, mvgmn");
  app.add_option("--scan-mode", f.scan_mode, "view_prioritized, time_prioritized or view_time");
  app.add_option("--blocks", f.blocks, "Number of blocks (2, 4, 8 or 12)");
  app.add_option("--knn-k", f.knn_k, "Neighbours per vertex in the KNN graph");
  app.add_option("--fusion", f.fusion, "cross_attention, mean or linear");
  app.add_option("--batch", f.batch, "Mini-batch size");
  app.add_option("--epochs", f.epochs, "Training epochs");
}

/// defaults < --config file < flags. `seed_key` is the key --seed maps to.
CliConfig resolve(const CommonFlags& f, const std::string& seed_key, const json& extra = json::object()) {
  CliConfig c;
  if (!f.config.empty()) c.merge_file(f.config);
  json flags = json::object();
  if (f.seed) flags[seed_key] = *f.seed;
  if (f.protocol) flags["train.protocol"] = *f.protocol;
  if (f.aggregator) flags["model.aggregator"] = *f.aggregator;
  if (f.scan_mode) flags["model.scan_mode"] = *f.scan_mode;
  if (f.fusion) flags["model.fusion"] = *f.fusion;
  if (f.blocks) flags["model.blocks"] = *f.blocks;
  if (f.knn_k) flags["model.knn_k"] = *f.knn_k;
  if (f.batch) flags["train.batch"] = *f.batch;
  if (f.epochs) flags["train.epochs"] = *f.epochs;
  flags.update(extra);
  c.merge(flags);
  return c;
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& path, const std::string& text) { write_file_bytes(path.string(), text); }

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

Split split_for(const Dataset& ds, const CliConfig& c) { return make_splits(ds.manifest, c.train.protocol); }

// ---------------------------------------------------------------------------

int run_gen_data(const CliConfig& c, const fs::path& out, std::ostream& os) {
  c.data.validate();
  SyntheticDataset ds = generate_synthetic(c.data);
  write_dataset(ds, out.string());
  const std::uint64_t digest = dataset_digest((out / "manifest.json").string());
  os << fmt::format("wrote {} samples to {}\ndigest {}\n", ds.records.size(), out.string(), hex64(digest));
  return kOk;
}

struct TrainOutcome {
  TrainLog log;
  std::size_t params = 0;
  double final_top1 = 0.0;
};

TrainOutcome train_and_save(const CliConfig& c, const Dataset& ds, const ModelConfig& mc,
                            const fs::path& out, std::ostream& os, bool verbose) {
  Model model(mc, c.train.seed);
  const Split split = split_for(ds, c);
  TrainOutcome r;
  r.params = model.parameter_count();
  r.log = train_loop(model, ds, split, c.train, [&](const EpochLog& e) {
    if (verbose) os << fmt::format("epoch {:3d}  loss {:.4f}  top1 {:.4f}  lr {:g}\n", e.epoch, e.loss, e.top1, e.lr);
  });
  r.final_top1 = r.log.epochs.empty() ? r.log.initial_top1 : r.log.epochs.back().top1;
  fs::create_directories(out);
  save_checkpoint((out / "checkpoint.mvgc").string(), model);
  write_text(out / "train_log.jsonl", r.log.to_jsonl());
  return r;
}

int run_train(const CliConfig& c, const std::string& data, const fs::path& out, std::ostream& os) {
  const Dataset ds = load_dataset(data);
  const ModelConfig mc = c.model_for(ds.manifest.spec);
  write_text(out / "config.json", c.to_json().dump(2) + "\n");
  const TrainOutcome r = train_and_save(c, ds, mc, out, os, true);
  double best = r.log.initial_top1;
  for (const auto& e : r.log.epochs) best = std::max(best, e.top1);
  ordered_json summary{{"protocol", std::string(to_string(c.train.protocol))},
                       {"aggregator", std::string(to_string(mc.aggregator))},
                       {"params", r.params},
                       {"epochs", r.log.epochs.size()},
                       {"initial_top1", r.log.initial_top1},
                       {"final_top1", r.final_top1},
                       {"best_top1", best}};
  write_text(out / "summary.json", summary.dump(2) + "\n");
  os << fmt::format("final top1 {:.4f}\n", r.final_top1);
  return kOk;
}

int run_eval(const CliConfig& c, const std::string& data, const std::string& checkpoint,
             const fs::path& out, std::ostream& os) {
  const Dataset ds = load_dataset(data);
  const Model model = checkpoint.empty() ? Model(c.model_for(ds.manifest.spec), c.train.seed)
                                         : load_checkpoint(checkpoint);
  const ModelConfig& mc = model.config();
  const SyntheticSpec& spec = ds.manifest.spec;
  if (mc.views != spec.views || mc.steps != spec.steps || mc.rgb_dim != spec.rgb_dim ||
      mc.skeleton_dim != spec.skeleton_dim || mc.patches != spec.patches || mc.classes != spec.classes) {
    throw ConfigError("checkpoint does not match the dataset shape");
  }
  const Split split = split_for(ds, c);
  const double top1 = evaluate(model, ds, split, c.train.threads);
  ordered_json result{{"protocol", std::string(to_string(c.train.protocol))},
                      {"checkpoint", checkpoint.empty() ? json(nullptr) : json(checkpoint)},
                      {"samples", split.test.size()},
                      {"top1", top1}};
  write_text(out / "eval.json", result.dump(2) + "\n");
  os << fmt::format("top1 {:.4f} on {} samples\n", top1, split.test.size());
  return kOk;
}

int run_ablate(const CliConfig& c, const std::string& data, const std::string& ladder,
               const fs::path& out, std::ostream& os) {
  if (ladder != "aggregator" && ladder != "fusion" && ladder != "all") {
    throw ConfigError("--ladder must be aggregator, fusion or all");
  }
  const Dataset ds = load_dataset(data);
  struct Variant {
    std::string ladder;
    std::string name;
    ModelConfig config;
  };
  std::vector<Variant> variants;
  const ModelConfig base = c.model_for(ds.manifest.spec);
  if (ladder != "fusion") {
    for (Aggregator a : all_aggregators()) {
      ModelConfig m = base;
      m.aggregator = a;
      m.validate();
      variants.push_back({"aggregator", std::string(to_string(a)), m});
    }
  }
  if (ladder != "aggregator") {
    for (FusionMode f : {FusionMode::CrossAttention, FusionMode::Mean, FusionMode::Linear}) {
      ModelConfig m = base;
      m.fusion = f;
      variants.push_back({"fusion", std::string(to_string(f)), m});
    }
  }

  std::string csv = "ladder,variant,params,top1\n";
  ordered_json rows = ordered_json::array();
  for (const auto& v : variants) {
    os << fmt::format("[{}] {} ...\n", v.ladder, v.name);
    const TrainOutcome r = train_and_save(c, ds, v.config, out / (v.ladder + "_" + v.name), os, false);
    csv += fmt::format("{},{},{},{:.4f}\n", v.ladder, v.name, r.params, r.final_top1);
    rows.push_back(ordered_json{{"ladder", v.ladder}, {"variant", v.name}, {"params", r.params}, {"top1", r.final_top1}});
    os << fmt::format("[{}] {}: params {} top1 {:.4f}\n", v.ladder, v.name, r.params, r.final_top1);
  }
  write_text(out / "ablation.csv", csv);
  write_text(out / "ablation.json", ordered_json{{"protocol", std::string(to_string(c.train.protocol))},
                                                 {"epochs", c.train.epochs},
                                                 {"rows", rows}}
                                        .dump(2) + "\n");
  os << csv;
  return kOk;
}

int run_bench(const CliConfig& c, const fs::path& out, std::ostream& os) {
  const auto records = run_scaling_bench(c.bench);
  write_text(out / "bench.csv", bench_csv(records));
  const std::string summary = bench_summary_json(records);
  write_text(out / "bench_summary.json", summary);
  os << bench_csv(records) << summary;
  return kOk;
}

ordered_json edges_json(std::span<const Edge> edges) {
  ordered_json a = ordered_json::array();
  for (const auto& [u, v] : edges) a.push_back({u, v});
  return a;
}

int run_inspect_graph(const CliConfig& c, const std::string& data, const std::string& checkpoint,
                      std::size_t sample_id, std::size_t block, const fs::path& out, std::ostream& os) {
  const Dataset ds = load_dataset(data);
  const Model model = checkpoint.empty() ? Model(c.model_for(ds.manifest.spec), c.train.seed)
                                         : load_checkpoint(checkpoint);
  std::optional<std::size_t> index;
  for (std::size_t i = 0; i < ds.manifest.samples.size(); ++i)
    if (ds.manifest.samples[i].id == sample_id) index = i;
  if (!index) throw InputError(fmt::format("no sample with id {}", sample_id));
  Rng sampler(derive_seed(c.train.seed, sample_id));
  const ModelInput input = make_model_input(ds.samples[*index], model.config().steps, sampler);
  const auto graphs = model.block_graphs(input);
  if (graphs.empty()) throw ConfigError("aggregator '" + std::string(to_string(model.config().aggregator)) + "' builds no graph");
  if (block >= graphs.size()) {
    throw ConfigError(fmt::format("--block {} out of range; the model has {} graph stages", block, graphs.size()));
  }
  const ViewTemporalGraph& g = graphs[block];
  ordered_json j{{"n", g.views * g.steps},
                 {"rule_time", edges_json(g.rule_time)},
                 {"rule_view", edges_json(g.rule_view)},
                 {"knn", edges_json(g.knn)}};
  const std::string text = j.dump() + "\n";
  write_text(out / fmt::format("graph_sample{}_block{}.json", sample_id, block), text);
  os << text;
  return kOk;
}

}  // namespace

int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view graph state-space aggregation toolkit", "mvgmn"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, eval_f, ablate_f, bench_f, graph_f;
  std::optional<std::size_t> classes, samples_per_class, subjects;
  std::optional<double> noise;
  std::string data, checkpoint, ladder = "all";
  std::vector<std::size_t> lengths;
  std::optional<std::size_t> repeats;
  std::size_t sample_id = 0, block = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic multi-view dataset");
  add_common(*gen, gen_f);
  gen->add_option("--classes", classes, "Number of classes");
  gen->add_option("--samples-per-class", samples_per_class, "Samples per class");
  gen->add_option("--subjects", subjects, "Number of subjects");
  gen->add_option("--noise", noise, "Gaussian noise sigma");

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint and log");
  add_common(*train, train_f);
  train->add_option("--data", data, "Dataset manifest.json")->required();

  auto* eval = app.add_subcommand("eval", "Top-1 accuracy of a checkpoint on a split");
  add_common(*eval, eval_f);
  eval->add_option("--data", data, "Dataset manifest.json")->required();
  eval->add_option("--checkpoint", checkpoint, "Checkpoint; omitted means a fresh model");

  auto* ablate = app.add_subcommand("ablate", "Train every aggregator and/or fusion variant");
  add_common(*ablate, ablate_f);
  ablate->add_option("--data", data, "Dataset manifest.json")->required();
  ablate->add_option("--ladder", ladder, "aggregator, fusion or all");

  auto* bench = app.add_subcommand("bench", "Forward-time scaling sweep");
  add_common(*bench, bench_f);
  bench->add_option("--lengths", lengths, "Sequence lengths L = V*T")->delimiter(',');
  bench->add_option("--repeats", repeats, "Timed repeats per point (>= 5)");

  auto* graph = app.add_subcommand("inspect-graph", "Dump the graph one block builds for a sample");
  add_common(*graph, graph_f);
  graph->add_option("--data", data, "Dataset manifest.json")->required();
  graph->add_option("--checkpoint", checkpoint, "Checkpoint; omitted means a fresh model");
  graph->add_option("--sample", sample_id, "Sample id")->required();
  graph->add_option("--block", block, "Graph stage index");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::Success&) {
    out << app.help();
    if (auto subs = app.get_subcommands(); !subs.empty()) out << subs.front()->help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kValidationError;
  }

  try {
    if (gen->parsed()) {
      json extra = json::object();
      if (classes) extra["data.classes"] = *classes;
      if (samples_per_class) extra["data.samples_per_class"] = *samples_per_class;
      if (subjects) extra["data.subjects"] = *subjects;
      if (noise) extra["data.noise"] = *noise;
      const CliConfig c = resolve(gen_f, "data.seed", extra);
      return run_gen_data(c, prepare_out(gen_f.out), out);
    }
    if (train->parsed()) {
      const CliConfig c = resolve(train_f, "train.seed");
      return run_train(c, data, prepare_out(train_f.out), out);
    }
    if (eval->parsed()) {
      const CliConfig c = resolve(eval_f, "train.seed");
      return run_eval(c, data, checkpoint, prepare_out(eval_f.out), out);
    }
    if (ablate->parsed()) {
      const CliConfig c = resolve(ablate_f, "train.seed");
      return run_ablate(c, data, ladder, prepare_out(ablate_f.out), out);
    }
    if (bench->parsed()) {
      json extra = json::object();
      if (!lengths.empty()) extra["bench.lengths"] = lengths;
      if (repeats) extra["bench.repeats"] = *repeats;
      if (bench_f.blocks) extra["bench.blocks"] = *bench_f.blocks;
      if (bench_f.aggregator) extra["bench.aggregators"] = json::array({*bench_f.aggregator});
      CommonFlags f = bench_f;
      f.blocks.reset();
      f.aggregator.reset();
      const CliConfig c = resolve(f, "bench.seed", extra);
      c.bench.validate();
      return run_bench(c, prepare_out(bench_f.out), out);
    }
    if (graph->parsed()) {
      const CliConfig c = resolve(graph_f, "train.seed");
      return run_inspect_graph(c, data, checkpoint, sample_id, block, prepare_out(graph_f.out), out);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kValidationError;
}

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, out, err);
}

}  // namespace mvgmn::cli
