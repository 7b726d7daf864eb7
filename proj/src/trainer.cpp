#include "dnaadv/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dnaadv/error.hpp"

namespace dnaadv {

void TrainConfig::validate() const {
  if (epochs < 0) throw Error(ErrorKind::InvalidConfig, "epochs must be >= 0");
  if (batch_size < 1) throw Error(ErrorKind::InvalidConfig, "batch_size must be >= 1");
  if (max_seq_len < 1) throw Error(ErrorKind::InvalidConfig, "max_seq_len must be >= 1");
  if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning_rate must be > 0");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw Error(ErrorKind::InvalidConfig, "warmup_ratio in [0,1)");
  if (grad_accum_steps < 1) throw Error(ErrorKind::InvalidConfig, "grad_accum_steps must be >= 1");
  if (weight_decay < 0.0) throw Error(ErrorKind::InvalidConfig, "weight_decay must be >= 0");
}

TrainConfig TrainConfig::desk_scale(ModelKind kind) {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 32;
  cfg.learning_rate = kind == ModelKind::KmerLogReg ? 1.0 : 0.1;
  return cfg;
}

AdamW::AdamW(std::size_t n, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grad, double lr, double weight_decay) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i] *= 1.0 - lr * weight_decay;
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
  }
}

double plain_example_grad(const TrainableModel& model, const Example& ex, double scale, std::span<double> grad) {
  return model.backward(model.tokenizer().tokenize(ex.sequence), nullptr, ex.label, scale, grad).loss;
}

Trainer::Trainer(TrainableModel& model, const TrainConfig& cfg, std::size_t examples_per_epoch)
    : model_(model),
      cfg_(cfg),
      optimizer_(model.params().size()),
      order_rng_(combine_seed(cfg.seed, 0x7261696eULL)),
      grad_(model.params().size(), 0.0) {
  cfg_.validate();
  const std::uint64_t batches =
      (examples_per_epoch + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size);
  const std::uint64_t updates_per_epoch =
      (batches + static_cast<std::uint64_t>(cfg.grad_accum_steps) - 1) / static_cast<std::uint64_t>(cfg.grad_accum_steps);
  total_steps_ = updates_per_epoch * static_cast<std::uint64_t>(cfg.epochs);
  warmup_steps_ = static_cast<std::uint64_t>(std::ceil(cfg.warmup_ratio * static_cast<double>(total_steps_)));
}

double Trainer::learning_rate_at(std::uint64_t step) const {
  if (warmup_steps_ > 0 && step <= warmup_steps_) {
    return cfg_.learning_rate * static_cast<double>(step) / static_cast<double>(warmup_steps_);
  }
  return cfg_.learning_rate;
}

void Trainer::apply_update() {
  if (pending_batches_ == 0) return;
  const double inv = 1.0 / static_cast<double>(pending_batches_);
  if (pending_batches_ > 1) {
    for (double& g : grad_) g *= inv;
  }
  // A newly enabled head grows params(); gradient and moments follow.
  optimizer_.step(model_.params(), grad_, learning_rate_at(optimizer_.steps() + 1), cfg_.weight_decay);
  std::fill(grad_.begin(), grad_.end(), 0.0);
  pending_batches_ = 0;
}

double Trainer::run_epoch(std::span<const Example> examples, const ExampleGradFn& fn) {
  if (grad_.size() != model_.params().size()) {
    throw Error(ErrorKind::ShapeMismatch, "parameter count changed after trainer construction");
  }
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  order_rng_.shuffle(std::span<std::size_t>(order));
  const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
  double total_loss = 0.0;
  for (std::size_t start = 0; start < order.size(); start += bs) {
    const std::size_t end = std::min(order.size(), start + bs);
    const double scale = 1.0 / static_cast<double>(end - start);
    for (std::size_t i = start; i < end; ++i) total_loss += fn(model_, examples[order[i]], scale, grad_);
    if (++pending_batches_ == cfg_.grad_accum_steps) apply_update();
  }
  apply_update();
  return examples.empty() ? 0.0 : total_loss / static_cast<double>(examples.size());
}

void check_dataset(const Dataset& data, int num_classes) {
  if (data.empty()) throw Error(ErrorKind::EmptyDataset, "dataset '" + data.id + "' has no examples");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int y = data.examples[i].label;
    if (y < 0 || y >= num_classes) {
      throw Error(ErrorKind::LabelOutOfRange, "example " + std::to_string(i) + " has label " + std::to_string(y) +
                                                  " with " + std::to_string(num_classes) + " classes");
    }
  }
}

double model_accuracy(const ProbOracle& oracle, const Dataset& data) {
  if (data.empty()) throw Error(ErrorKind::EmptyDataset, "accuracy of an empty dataset");
  std::vector<DnaSequence> seqs;
  seqs.reserve(data.size());
  for (const auto& ex : data.examples) seqs.push_back(ex.sequence);
  const auto probs = oracle.predict(seqs);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += argmax(probs[i]) == data.examples[i].label;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(const ModelSpec& spec, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  check_dataset(data, spec.num_classes);
  TrainResult result;
  result.model = make_model(spec, static_cast<std::size_t>(cfg.max_seq_len), cfg.seed);
  Trainer trainer(*result.model, cfg, data.size());
  for (int e = 0; e < cfg.epochs; ++e) result.epoch_losses.push_back(trainer.run_epoch(data.examples));
  result.train_accuracy = model_accuracy(*result.model, data);
  return result;
}

}  // namespace dnaadv
