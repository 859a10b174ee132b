#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvgmn/data.hpp"
#include "mvgmn/model.hpp"

namespace mvgmn {

struct TrainConfig {
  double lr0 = 0.0025;
  double plateau_factor = 0.1;
  std::size_t patience = 5;
  std::size_t batch = 32;
  std::size_t epochs = 64;
  std::uint64_t seed = 0;
  Protocol protocol = Protocol::CrossSubject;
  /// 0 means worker_count().
  std::size_t threads = 0;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean training loss over the epoch
  double top1 = 0.0;      // eval top-1 after the epoch
  double lr = 0.0;        // learning rate used during the epoch
  double seconds = 0.0;

  friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainLog {
  /// Eval top-1 of the untrained model; the plateau rule starts from it.
  double initial_top1 = 0.0;
  std::vector<EpochLog> epochs;

  /// One JSON object per epoch: {"epoch","loss","top1","lr","sec"}.
  std::string to_jsonl(bool with_time = true) const;
};

/// Multiplies the learning rate by `factor` once the monitored metric has
/// failed to exceed its best value for `patience` consecutive epochs; the
/// counter restarts after every improvement and after every reduction.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr0, double factor, std::size_t patience,
                   double baseline = -std::numeric_limits<double>::infinity());

  double lr() const noexcept { return lr_; }
  double best() const noexcept { return best_; }
  /// Reports the metric of a finished epoch; returns the lr for the next one.
  double step(double metric);

 private:
  double lr_;
  double factor_;
  std::size_t patience_;
  double best_;
  std::size_t stale_ = 0;
};

/// Index of the largest value; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

/// Fraction of rows of `logits` ([n, C]) whose argmax equals the label.
double top1_accuracy(const Tensor& logits, std::span<const std::size_t> labels);

/// Logits [n, C] for the listed samples (indices into dataset.samples).
Tensor predict(const Model& model, const Dataset& dataset, std::span<const std::size_t> indices,
               std::optional<std::size_t> masked_view = std::nullopt, std::size_t threads = 0);

/// Top-1 accuracy on the listed samples. Throws InputError when empty.
double evaluate(const Model& model, const Dataset& dataset, std::span<const std::size_t> indices,
                std::optional<std::size_t> masked_view = std::nullopt, std::size_t threads = 0);

double evaluate(const Model& model, const Dataset& dataset, const Split& split,
                std::size_t threads = 0);

/// Plain SGD on mean softmax cross-entropy with the plateau rule on eval
/// top-1. Deterministic for a fixed seed regardless of thread count.
TrainLog train_loop(Model& model, const Dataset& dataset, const Split& split,
                    const TrainConfig& config,
                    const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace mvgmn
