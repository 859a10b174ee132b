#include "mvgmn/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <json.hpp>

#include "mvgmn/errors.hpp"
#include "mvgmn/ops.hpp"
#include "mvgmn/parallel.hpp"

namespace mvgmn {

namespace {

constexpr std::uint64_t kEvalSamplerSeed = 0x5eed0fe7a1ULL;

std::size_t resolve_threads(std::size_t threads) { return threads == 0 ? worker_count() : threads; }

}  // namespace

void TrainConfig::validate() const {
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ConfigError("train.lr must be >= 0");
  if (!(plateau_factor > 0.0 && plateau_factor <= 1.0)) throw ConfigError("train.plateau_factor must lie in (0, 1]");
  if (patience < 1) throw ConfigError("train.patience must be >= 1");
  if (batch < 1) throw ConfigError("train.batch must be >= 1");
}

std::string TrainLog::to_jsonl(bool with_time) const {
  std::string out;
  for (const auto& e : epochs) {
    nlohmann::ordered_json j{{"epoch", e.epoch}, {"loss", e.loss}, {"top1", e.top1}, {"lr", e.lr}};
    if (with_time) j["sec"] = e.seconds;
    out += j.dump();
    out += '\n';
  }
  return out;
}

PlateauScheduler::PlateauScheduler(double lr0, double factor, std::size_t patience, double baseline)
    : lr_(lr0), factor_(factor), patience_(patience), best_(baseline) {}

double PlateauScheduler::step(double metric) {
  if (metric > best_) {
    best_ = metric;
    stale_ = 0;
  } else if (++stale_ >= patience_) {
    lr_ *= factor_;
    stale_ = 0;
  }
  return lr_;
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw InputError("argmax of an empty range");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

double top1_accuracy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (labels.empty()) throw InputError("accuracy of an empty split");
  if (logits.rows() != labels.size()) throw DimensionError("one logit row per label expected");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += argmax(logits.row_span(i)) == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

Tensor predict(const Model& model, const Dataset& dataset, std::span<const std::size_t> indices,
               std::optional<std::size_t> masked_view, std::size_t threads) {
  const std::size_t classes = model.config().classes;
  Tensor logits({indices.size(), classes});
  parallel_for(indices.size(), resolve_threads(threads), [&](std::size_t i) {
    const std::size_t idx = indices[i];
    Rng sampler(derive_seed(kEvalSamplerSeed, dataset.manifest.samples.at(idx).id));
    const ModelInput input =
        make_model_input(dataset.samples.at(idx), model.config().steps, sampler, masked_view);
    Tape tape(model.params(), false);
    const Var out = model.forward(input, tape);
    std::copy_n(out.value().ptr(), classes, logits.ptr() + i * classes);
  });
  return logits;
}

double evaluate(const Model& model, const Dataset& dataset, std::span<const std::size_t> indices,
                std::optional<std::size_t> masked_view, std::size_t threads) {
  if (indices.empty()) throw InputError("evaluate: empty split");
  std::vector<std::size_t> labels;
  labels.reserve(indices.size());
  for (std::size_t idx : indices) labels.push_back(dataset.manifest.samples.at(idx).label);
  return top1_accuracy(predict(model, dataset, indices, masked_view, threads), labels);
}

double evaluate(const Model& model, const Dataset& dataset, const Split& split, std::size_t threads) {
  return evaluate(model, dataset, split.test, split.masked_view, threads);
}

TrainLog train_loop(Model& model, const Dataset& dataset, const Split& split,
                    const TrainConfig& config, const std::function<void(const EpochLog&)>& on_epoch) {
  config.validate();
  if (split.train.empty()) throw InputError("train_loop: empty training split");
  const std::size_t workers = resolve_threads(config.threads);
  ParamStore& params = model.params();

  TrainLog log;
  log.initial_top1 = evaluate(model, dataset, split, workers);
  PlateauScheduler scheduler(config.lr0, config.plateau_factor, config.patience, log.initial_top1);

  std::vector<std::size_t> order = split.train;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = scheduler.lr();
    order = split.train;
    Rng shuffler(derive_seed(config.seed, epoch));
    shuffler.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    for (std::size_t b0 = 0, batch_no = 0; b0 < order.size(); b0 += config.batch, ++batch_no) {
      const std::size_t count = std::min(config.batch, order.size() - b0);
      std::vector<double> losses(count);
      std::vector<std::vector<Tensor>> grads(count);
      std::vector<std::string> faults(count);
      parallel_for(count, workers, [&](std::size_t i) {
        const std::size_t idx = order[b0 + i];
        const auto& rec = dataset.manifest.samples.at(idx);
        Rng sampler(derive_seed(derive_seed(config.seed, 0x7ea1ULL + epoch), rec.id));
        const ModelInput input = make_model_input(dataset.samples.at(idx), model.config().steps, sampler);
        Tape tape(params, true);
        try {
          const Var loss = softmax_cross_entropy(model.forward(input, tape), rec.label);
          losses[i] = loss.value()[0];
          if (!std::isfinite(losses[i])) return;
          tape.backward(loss);
        } catch (const NumericError& e) {
          losses[i] = std::numeric_limits<double>::quiet_NaN();
          faults[i] = e.what();
          return;
        }
        grads[i].reserve(params.size());
        for (ParamId id = 0; id < params.size(); ++id) grads[i].push_back(tape.param_grad(id));
      });
      for (std::size_t i = 0; i < count; ++i) {
        if (!std::isfinite(losses[i])) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_no) + ", sample " +
                             std::to_string(dataset.manifest.samples.at(order[b0 + i]).id) +
                             (faults[i].empty() ? "" : ": " + faults[i]));
        }
        loss_sum += losses[i];
      }
      const double step = lr / static_cast<double>(count);
      for (ParamId id = 0; id < params.size(); ++id) {
        Tensor total = grads[0][id];
        for (std::size_t i = 1; i < count; ++i) total.add_inplace(grads[i][id]);
        Tensor& value = params.value(id);
        for (std::size_t k = 0; k < value.size(); ++k) value[k] -= step * total[k];
        if (!value.all_finite()) {
          throw NumericError("parameter '" + params.name(id) + "' became non-finite at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batch_no));
        }
      }
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = loss_sum / static_cast<double>(order.size());
    entry.top1 = evaluate(model, dataset, split, workers);
    entry.lr = lr;
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    scheduler.step(entry.top1);
    log.epochs.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  return log;
}

}  // namespace mvgmn
