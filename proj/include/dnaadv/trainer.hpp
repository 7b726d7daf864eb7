#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dnaadv/random.hpp"
#include "dnaadv/sequence.hpp"
#include "dnaadv/trainable.hpp"

namespace dnaadv {

struct TrainConfig {
  int epochs = 4;
  int batch_size = 64;
  int max_seq_len = 256;
  double learning_rate = 3e-5;
  double warmup_ratio = 0.05;
  int grad_accum_steps = 1;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig. epochs may be zero (no updates).
  void validate() const;

  /// Recipe for the small from-scratch models: the defaults above target
  /// fine-tuning of large pretrained models and barely move a fresh one.
  /// Normalized count features are small, so the linear model gets a
  /// larger step.
  static TrainConfig desk_scale(ModelKind kind = ModelKind::EmbeddingMlp);
};

/// Adaptive-moment optimizer with decoupled weight decay.
class AdamW {
 public:
  explicit AdamW(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad, double lr, double weight_decay);
  std::uint64_t steps() const noexcept { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

/// Accumulates scale * dLoss/dParams for one example into `grad` and returns
/// the example's loss. The default is plain cross-entropy backward.
using ExampleGradFn = std::function<double(const TrainableModel& model, const Example& ex, double scale,
                                           std::span<double> grad)>;

double plain_example_grad(const TrainableModel& model, const Example& ex, double scale, std::span<double> grad);

/// Mini-batch loop with shuffling, gradient accumulation and a linear warmup
/// followed by a constant learning rate.
class Trainer {
 public:
  /// `examples_per_epoch` fixes the schedule length (warmup steps).
  Trainer(TrainableModel& model, const TrainConfig& cfg, std::size_t examples_per_epoch);

  /// One pass over `examples` in a shuffled order. Returns the mean loss.
  double run_epoch(std::span<const Example> examples, const ExampleGradFn& fn = plain_example_grad);

  double learning_rate_at(std::uint64_t step) const;
  std::uint64_t total_steps() const noexcept { return total_steps_; }
  std::uint64_t warmup_steps() const noexcept { return warmup_steps_; }

 private:
  void apply_update();

  TrainableModel& model_;
  TrainConfig cfg_;
  AdamW optimizer_;
  Rng order_rng_;
  std::vector<double> grad_;
  int pending_batches_ = 0;
  std::uint64_t total_steps_ = 0;
  std::uint64_t warmup_steps_ = 0;
};

struct TrainResult {
  std::unique_ptr<TrainableModel> model;
  double train_accuracy = 0.0;
  std::vector<double> epoch_losses;
};

void check_dataset(const Dataset& data, int num_classes);

TrainResult train(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg);

/// Argmax accuracy of a model on a dataset (no query accounting concerns).
double model_accuracy(const ProbOracle& oracle, const Dataset& data);

}  // namespace dnaadv
