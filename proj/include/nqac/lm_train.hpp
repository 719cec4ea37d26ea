#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nqac/lm_model.hpp"

namespace nqac::lm {

struct TrainConfig {
  double learning_rate = 0.002;
  int epochs = 10;
  std::size_t batch_size = 32;
  double clip_norm = 0.5;  // global gradient norm
  double dropout = 0.5;
  std::uint64_t seed = 1;
  std::size_t max_sequence_length = 100;
  // Adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // Throws ConfigError.
  void validate() const;
};

struct TrainingExample {
  std::string query;
  LmContext context;
};

struct EpochMetrics {
  int epoch = 0;
  LossValue train;  // full pass over the training set in infer mode after the epoch
  std::optional<LossValue> validation;
  double wall_seconds = 0;
};

struct StepInfo {
  int epoch = 0;
  std::size_t step = 0;
  double gradient_norm = 0;  // before clipping
  double applied_norm = 0;   // norm of the gradient handed to the optimizer
};

using StepObserver = std::function<void(const StepInfo&)>;

struct TrainResult {
  std::vector<EpochMetrics> history;
};

// Minibatch Adam on the per-query cross entropy with global-norm clipping.
// Deterministic for a fixed seed. Throws TrainingError when the loss stops
// being finite. When `metrics_log` is set, one JSON object per epoch is
// written: {"epoch", "train_loss", "train_loss_per_char", "val_loss", "wall_seconds"}.
TrainResult train(LmModel& model, const features::WordEmbeddingTable* words,
                  const std::vector<TrainingExample>& train_set,
                  const std::vector<TrainingExample>& validation_set, const TrainConfig& config,
                  const StepObserver& observer = {}, std::ostream* metrics_log = nullptr);

// Loss over a whole example set in infer mode, batched.
LossValue evaluate_loss(const LmModel& model, const features::WordEmbeddingTable* words,
                        const std::vector<TrainingExample>& examples, std::size_t batch_size = 64,
                        std::size_t max_sequence_length = 100);

}  // namespace nqac::lm
