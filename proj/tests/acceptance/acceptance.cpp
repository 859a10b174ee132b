// Runs the acceptance criteria and prints one PASS/FAIL line per criterion.

#include <CLI11.hpp>
#include <fmt/core.h>

#include <algorithm>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mvgmn/bench.hpp"
#include "mvgmn/cli.hpp"
#include "mvgmn/data.hpp"
#include "mvgmn/gradcheck.hpp"
#include "mvgmn/graph.hpp"
#include "mvgmn/ops.hpp"
#include "mvgmn/scan.hpp"
#include "mvgmn/train.hpp"
#include "fixtures.hpp"

namespace mvgmn {
namespace {

namespace fs = std::filesystem;
using testing::random_between;
using testing::random_tensor;

struct Verdict {
  bool pass = false;
  std::string detail;
};

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mvgmn_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  if (code != 0) fmt::print(stderr, "mvgmn {} failed ({}): {}\n", args.front(), code, err.str());
  return code;
}

// 1. Finite-difference check of the full model.
Verdict gradient_integrity() {
  SyntheticSpec spec;
  spec.views = 2;
  spec.steps = 2;
  spec.patches = 2;
  spec.rgb_dim = 8;
  spec.skeleton_dim = 8;
  spec.samples_per_class = 1;
  const SyntheticDataset ds = generate_synthetic(spec);
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;
  for (std::size_t knn : {1u, 2u}) {
    ModelConfig c;
    c.views = 2;
    c.steps = 2;
    c.width = 8;
    c.patches = 2;
    c.rgb_dim = 8;
    c.skeleton_dim = 8;
    c.key_dim = 4;
    c.state = 8;
    c.blocks = 4;
    c.knn_k = knn;
    c.classes = 3;
    Model model(c, 11 + knn);
    Rng sampler(knn);
    const ModelInput input = make_model_input(ds.data[knn], c.steps, sampler);
    const auto r = check_gradients([&](Tape& t) { return softmax_cross_entropy(model.forward(input, t), 2); },
                                   model.params(), 1e-5);
    checked += r.checked;
    if (r.max_relative_error > worst) {
      worst = r.max_relative_error;
      where = fmt::format("{}[{}]", r.worst_param, r.worst_index);
    }
  }
  return {worst < 1e-4, fmt::format("max rel err {:.3g} at {} over {} scalars", worst, where, checked)};
}

Tensor scan_once(const testing::ScanInputs& in, std::size_t L, std::size_t D, std::size_t N) {
  Tensor x({L, D}), a({D, N}), b({D, N}), c({D, N}), wd({D, 1}), bd({1, 1}, {in.b_delta}), ds({1, D});
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t d = 0; d < D; ++d) x(t, d) = in.x[t][d];
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t n = 0; n < N; ++n) {
      a(d, n) = in.a_log[d][n];
      b(d, n) = in.w_b[d][n];
      c(d, n) = in.w_c[d][n];
    }
    wd[d] = in.w_delta[d];
    ds[d] = in.d_skip[d];
  }
  return selective_scan(Var::constant(x), Var::constant(a), Var::constant(b), Var::constant(c), Var::constant(wd),
                        Var::constant(bd), Var::constant(ds))
      .value();
}

testing::ScanInputs random_scan_inputs(Rng& rng, std::size_t L, std::size_t D, std::size_t N) {
  testing::ScanInputs in;
  auto row = [&](std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& e : v) e = rng.uniform(lo, hi);
    return v;
  };
  for (std::size_t t = 0; t < L; ++t) in.x.push_back(row(D, -1.0, 1.0));
  for (std::size_t d = 0; d < D; ++d) {
    in.a_log.push_back(row(N, -1.0, 2.0));
    in.w_b.push_back(row(N, -1.0, 1.0));
    in.w_c.push_back(row(N, -1.0, 1.0));
  }
  in.w_delta = row(D, -1.0, 1.0);
  in.d_skip = row(D, -1.0, 1.0);
  in.b_delta = rng.uniform(-2.0, 1.0);
  return in;
}

double scan_error(const testing::ScanInputs& in, std::size_t L, std::size_t D, std::size_t N) {
  const Tensor y = scan_once(in, L, D, N);
  const auto ref = testing::naive_scan(in);
  double worst = 0.0;
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t d = 0; d < D; ++d) worst = std::max(worst, std::abs(y(t, d) - ref[t][d]));
  return worst;
}

// 2. Selective scan against the step-by-step recurrence.
Verdict scan_oracle() {
  Rng rng(2024);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const std::size_t L = random_between(rng, 1, 96), D = random_between(rng, 1, 12), N = random_between(rng, 1, 16);
    worst = std::max(worst, scan_error(random_scan_inputs(rng, L, D, N), L, D, N));
  }
  // Zero step size: the state never moves and only the skip term survives.
  testing::ScanInputs zero = random_scan_inputs(rng, 20, 4, 6);
  std::fill(zero.w_delta.begin(), zero.w_delta.end(), 0.0);
  zero.b_delta = -800.0;
  const Tensor y0 = scan_once(zero, 20, 4, 6);
  double skip_err = 0.0;
  for (std::size_t t = 0; t < 20; ++t)
    for (std::size_t d = 0; d < 4; ++d) skip_err = std::max(skip_err, std::abs(y0(t, d) - zero.d_skip[d] * zero.x[t][d]));
  const double single = scan_error(random_scan_inputs(rng, 1, 5, 7), 1, 5, 7);
  const bool pass = worst < 1e-6 && skip_err < 1e-6 && single < 1e-6;
  return {pass, fmt::format("200 random max err {:.3g}, zero-step err {:.3g}, L=1 err {:.3g}", worst, skip_err, single)};
}

// 3. Graph construction against exhaustive enumeration.
Verdict graph_oracles() {
  Rng rng(77);
  std::size_t cases = 0, failures = 0;
  for (std::size_t V = 1; V <= 4; ++V)
    for (std::size_t T = 1; T <= 6; ++T) {
      const RuleEdges r = rule_edges(V, T);
      const auto [time, view] = testing::oracle_rule_edges(V, T);
      failures += testing::EdgeSet(r.time.begin(), r.time.end()) != time;
      failures += testing::EdgeSet(r.view.begin(), r.view.end()) != view;
      ++cases;
      const std::size_t n = V * T;
      for (std::size_t k = 1; k <= std::min<std::size_t>(3, n - 1); ++k)
        for (int e = 0; e < 50; ++e) {
          Tensor x = random_tensor({n, random_between(rng, 1, 6)}, rng);
          if (e % 10 == 9) std::fill(x.row_span(0).begin(), x.row_span(0).end(), 0.0);
          if (e % 10 == 8 && n > 1) std::copy(x.row_span(0).begin(), x.row_span(0).end(), x.row_span(n - 1).begin());
          const auto got = knn_edges(x, k);
          failures += testing::EdgeSet(got.begin(), got.end()) != testing::oracle_knn(x, k);
          ++cases;
        }
    }
  const RuleEdges big = rule_edges(3, 8);
  const bool count_ok = big.time.size() == 84 && big.view.size() == 24;
  return {failures == 0 && count_ok,
          fmt::format("{} cases, {} mismatches; V=3,T=8 rule edges {} + {} = {}", cases, failures, big.time.size(),
                      big.view.size(), big.time.size() + big.view.size())};
}

// 4. Flatten/restore round trips for every order.
Verdict permutation_round_trips() {
  Rng rng(4);
  std::size_t cases = 0, failures = 0;
  const ScanOrder orders[] = {ScanOrder::ViewForward, ScanOrder::ViewBackward, ScanOrder::TimeForward,
                              ScanOrder::TimeBackward};
  for (std::size_t V = 1; V <= 8; ++V)
    for (std::size_t T = 1; T <= 8; ++T) {
      const FeatureGrid g{V, T, Var::constant(random_tensor({V * T, 3}, rng))};
      for (ScanOrder o : orders) {
        ++cases;
        failures += restore_grid(flatten_grid(g, o), o, V, T).values.value() != g.values.value();
        std::vector<std::size_t> expect = testing::oracle_order(
            V, T, o == ScanOrder::ViewForward || o == ScanOrder::ViewBackward,
            o == ScanOrder::ViewBackward || o == ScanOrder::TimeBackward);
        failures += scan_permutation(V, T, o) != expect;
      }
    }
  return {failures == 0, fmt::format("{} grid/order cases, {} failures", cases, failures)};
}

// 5. Scaling of forward time with sequence length.
Verdict complexity_scaling() {
  const BenchConfig config;
  const auto records = run_scaling_bench(config);
  const SlopeFit ssm = fit_slope(records_for(records, "ssm"));
  const SlopeFit att = fit_slope(records_for(records, "attention"));
  std::string ratios;
  for (const char* name : {"ssm", "attention"}) {
    const auto r = records_for(records, name);
    ratios += fmt::format(" {} doubling ratios", name);
    for (std::size_t i = 1; i < r.size(); ++i) ratios += fmt::format(" {:.2f}", r[i].median_ns / r[i - 1].median_ns);
    ratios += ";";
  }
  const bool pass = ssm.slope <= 1.3 && ssm.r2 >= 0.98 && att.slope >= 1.7;
  return {pass, fmt::format("ssm slope {:.3f} (R2 {:.4f}), attention slope {:.3f} (R2 {:.4f});{}", ssm.slope,
                            ssm.r2, att.slope, att.r2, ratios)};
}

// 6. Default synthetic task reaches the accuracy gate, reproducibly.
Verdict learnability() {
  const Dataset ds = as_dataset(generate_synthetic(SyntheticSpec{}));
  const Split split = make_splits(ds.manifest, Protocol::CrossSubject);
  TrainConfig tc;
  tc.epochs = 30;
  Model model(ModelConfig{}, tc.seed);
  std::size_t reached = 0;
  const TrainLog log = train_loop(model, ds, split, tc, [&](const EpochLog& e) {
    fmt::print("  epoch {:2d} loss {:.4f} top1 {:.4f} lr {:g} ({:.1f}s)\n", e.epoch, e.loss, e.top1, e.lr, e.seconds);
    std::fflush(stdout);
    if (!reached && e.top1 >= 0.9) reached = e.epoch;
  });
  double best = 0.0;
  for (const auto& e : log.epochs) best = std::max(best, e.top1);

  TrainConfig again = tc;
  again.epochs = 2;
  again.threads = 1;
  Model replay(ModelConfig{}, tc.seed);
  const TrainLog prefix = train_loop(replay, ds, split, again);
  TrainLog head = log;
  head.epochs.resize(2);
  const bool same = prefix.to_jsonl(false) == head.to_jsonl(false) && prefix.initial_top1 == log.initial_top1;
  return {reached > 0 && same,
          fmt::format("first epoch >= 0.90: {}, best top1 {:.4f}, final {:.4f}; replay of epochs 1-2 {}",
                      reached ? std::to_string(reached) : "none", best, log.epochs.back().top1,
                      same ? "identical" : "DIFFERS")};
}

// 7. Ablation ladders run end to end and parameter counts are ordered.
Verdict ablation_ladder() {
  const fs::path dir = scratch_dir("ablate");
  const std::string data = (dir / "data").string();
  if (cli({"gen-data", "--out", data, "--samples-per-class", "20", "--seed", "7"}) != 0) return {false, "gen-data failed"};
  if (cli({"ablate", "--data", data + "/manifest.json", "--out", (dir / "out").string(), "--ladder", "all",
           "--epochs", "2"}) != 0)
    return {false, "ablate failed"};
  const auto j = nlohmann::json::parse(read_file_bytes((dir / "out" / "ablation.json").string()));
  std::map<std::string, std::size_t> params;
  std::size_t fusion_rows = 0;
  std::string table;
  for (const auto& row : j["rows"]) {
    if (row["ladder"] == "aggregator") params[row["variant"]] = row["params"];
    if (row["ladder"] == "fusion") ++fusion_rows;
    table += fmt::format(" {}={}/{:.3f}", row["variant"].get<std::string>(), row["params"].get<std::size_t>(),
                         row["top1"].get<double>());
  }
  bool all_present = params.size() == 7 && fusion_rows == 3;
  for (Aggregator a : all_aggregators()) all_present = all_present && params.count(std::string(to_string(a)));
  const bool ordered = all_present && params["linear"] < params["gcn_rule"] &&
                       params["gcn_rule"] == params["gcn_rule_knn"] && params["gcn_rule_knn"] < params["ssm"] &&
                       params["gcn_rule_knn"] < params["mvgmn"];
  fs::remove_all(dir);
  return {all_present && ordered, fmt::format("{} aggregator + {} fusion rows; params/top1:{}", params.size(),
                                              fusion_rows, table)};
}

std::string without_time(const std::string& jsonl) {
  std::string out;
  std::istringstream in(jsonl);
  for (std::string line; std::getline(in, line);) {
    auto j = nlohmann::ordered_json::parse(line);
    j.erase("sec");
    out += j.dump() + "\n";
  }
  return out;
}

// 8. Byte-level reproducibility of data, training and checkpoints.
Verdict reproducibility() {
  const fs::path dir = scratch_dir("repro");
  std::vector<std::string> failures;
  for (const char* d : {"a", "b"})
    cli({"gen-data", "--out", (dir / d).string(), "--samples-per-class", "12", "--seed", "5"});
  const auto da = dataset_digest((dir / "a" / "manifest.json").string());
  const auto db = dataset_digest((dir / "b" / "manifest.json").string());
  if (da != db) failures.push_back("dataset digest");
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path other = dir / "b" / fs::relative(e.path(), dir / "a");
    if (read_file_bytes(e.path().string()) != read_file_bytes(other.string()))
      failures.push_back(fs::relative(e.path(), dir).string());
  }

  const std::string manifest = (dir / "a" / "manifest.json").string();
  for (const char* t : {"ta", "tb"})
    cli({"train", "--data", manifest, "--out", (dir / t).string(), "--epochs", "2", "--seed", "3"});
  if (read_file_bytes((dir / "ta" / "checkpoint.mvgc").string()) != read_file_bytes((dir / "tb" / "checkpoint.mvgc").string()))
    failures.push_back("checkpoint bytes");
  if (without_time(read_file_bytes((dir / "ta" / "train_log.jsonl").string())) !=
      without_time(read_file_bytes((dir / "tb" / "train_log.jsonl").string())))
    failures.push_back("train log");
  if (read_file_bytes((dir / "ta" / "summary.json").string()) != read_file_bytes((dir / "tb" / "summary.json").string()))
    failures.push_back("summary");

  Rng rng(8);
  std::size_t mismatched = 0;
  for (int i = 0; i < 100; ++i) {
    Tensor t = random_tensor({random_between(rng, 1, 6), random_between(rng, 1, 6), random_between(rng, 1, 6)}, rng, -50, 50);
    for (double& v : t.data()) v = static_cast<float>(v);
    const std::string path = (dir / "rt.mvgf").string();
    write_feature_file(path, t);
    const Tensor back = read_feature_file(path);
    mismatched += back.shape() != t.shape() || std::memcmp(back.ptr(), t.ptr(), t.size() * sizeof(double)) != 0;
  }
  if (mismatched) failures.push_back(fmt::format("{} feature round trips", mismatched));
  fs::remove_all(dir);
  std::string detail = fmt::format("digest {:016x}, {} dataset files compared, 2 training runs, 100 feature files", da, files);
  for (const auto& f : failures) detail += "; mismatch: " + f;
  return {failures.empty(), detail};
}

}  // namespace
}  // namespace mvgmn

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<int> which;
  app.add_option("--criterion", which, "Criteria to run (1-8); default all")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);
  if (which.empty()) which = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::map<int, std::pair<const char*, std::function<mvgmn::Verdict()>>> criteria{
      {1, {"gradient integrity", mvgmn::gradient_integrity}},
      {2, {"selective scan oracle", mvgmn::scan_oracle}},
      {3, {"graph oracles", mvgmn::graph_oracles}},
      {4, {"permutation round trips", mvgmn::permutation_round_trips}},
      {5, {"complexity scaling", mvgmn::complexity_scaling}},
      {6, {"learnability", mvgmn::learnability}},
      {7, {"ablation ladder", mvgmn::ablation_ladder}},
      {8, {"byte reproducibility", mvgmn::reproducibility}},
  };
  bool all = true;
  for (int n : which) {
    const auto& [name, fn] = criteria.at(n);
    const auto start = std::chrono::steady_clock::now();
    mvgmn::Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    fmt::print("criterion {}: {} {} ({:.1f}s) {}\n", n, v.pass ? "PASS" : "FAIL", name, sec, v.detail);
    std::fflush(stdout);
    all = all && v.pass;
  }
  return all ? 0 : 1;
}
