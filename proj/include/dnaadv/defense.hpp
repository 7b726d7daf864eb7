#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dnaadv/attack.hpp"
#include "dnaadv/checkpoint.hpp"
#include "dnaadv/trainer.hpp"

namespace dnaadv {

/// Runs one attack against a model snapshot. `seed` is per example.
using AttackFn = std::function<AttackOutcome(const ProbOracle& model, const Example& ex, std::uint64_t seed)>;

/// Where adversarial training gets its extra examples: regenerated each
/// epoch against the epoch-start model, or a fixed pool (typically read
/// from a record file). Adversarial examples keep the clean label.
struct AugmentationSource {
  enum class Kind { OnTheFly, Pool };
  Kind kind = Kind::OnTheFly;
  std::string attack_name;
  AttackFn attack;
  std::vector<Example> pool;
  /// At most ceil(mix_ratio * |clean|) adversarial examples join an epoch.
  double mix_ratio = 0.1;

  static AugmentationSource on_the_fly(std::string name, AttackFn attack, double mix_ratio = 0.1);
  static AugmentationSource from_pool(std::vector<Example> pool, double mix_ratio = 0.1);
  /// Throws InvalidConfig; SourceEmpty for an empty pool.
  void validate() const;
};

struct FreeLbConfig {
  double adv_lr = 0.1;
  double adv_magnitude = 0.6;
  int ascent_steps = 2;
  double base_lr = 1e-5;
  double weight_decay = 1e-2;
  int grad_accum_steps = 1;

  void validate() const;
  /// Same adversarial knobs with the base step of the desk recipe.
  static FreeLbConfig desk_scale(ModelKind kind);
  /// `cfg` with the base learning rate, decay and accumulation replaced.
  TrainConfig train_config(TrainConfig cfg) const;
};

struct AdfarConfig {
  std::size_t freq_threshold = 200;
  int samples = 20;
  /// Zero disables randomization (variants equal the original).
  int features = 10;
  double aux_weight = 1.0;

  void validate() const;
};

/// Exact token counts over a corpus under one tokenizer.
class FrequencyTable {
 public:
  FrequencyTable() = default;
  FrequencyTable(std::string tokenizer_spec, std::map<std::string, std::uint64_t> counts, std::size_t threshold);

  const std::string& tokenizer_spec() const noexcept { return tokenizer_; }
  std::uint64_t count(const std::string& token) const;
  std::size_t threshold() const noexcept { return threshold_; }
  void set_threshold(std::size_t f);
  const std::map<std::string, std::uint64_t>& counts() const noexcept { return counts_; }

  /// Unseen tokens count as rare.
  bool is_rare(const std::string& token) const { return count(token) < threshold_; }
  /// Observed tokens below the threshold.
  std::vector<std::string> rare_set() const;
  /// Observed tokens at or above the threshold with the given length.
  const std::vector<std::string>& frequent_of_length(std::size_t len) const;

  nlohmann::json to_json() const;
  static FrequencyTable from_json(const nlohmann::json& j);

 private:
  void rebuild();

  std::string tokenizer_;
  std::map<std::string, std::uint64_t> counts_;
  std::size_t threshold_ = 1;
  std::map<std::size_t, std::vector<std::string>> frequent_;
};

FrequencyTable build_frequency_table(std::span<const DnaSequence> corpus, const Tokenizer& tok, std::size_t f_thres);

/// Replaces up to `n_features` tokens with a frequent token one nucleotide
/// away (skipped when none exists). Positions are taken rare-first (ascending count), then in
/// `priority` order. Masked spans are left alone.
DnaSequence randomize_tokens(const DnaSequence& s, const TokenizedSeq& ts, const FrequencyTable& table,
                             int n_features, std::span<const std::size_t> priority, Rng& rng);

/// Randomized-inference wrapper: majority vote of the model over the input
/// plus `samples` randomized copies, seeded by the input itself. Returned
/// probabilities are vote fractions.
class AdfarOracle final : public ProbOracle {
 public:
  AdfarOracle(std::shared_ptr<const TrainableModel> model, FrequencyTable table, AdfarConfig cfg, std::uint64_t seed);

  int num_classes() const override { return model_->num_classes(); }
  const Tokenizer* native_tokenizer() const override { return &model_->tokenizer(); }
  const TrainableModel& model() const noexcept { return *model_; }
  const FrequencyTable& table() const noexcept { return table_; }
  const AdfarConfig& config() const noexcept { return cfg_; }
  std::uint64_t seed() const noexcept { return seed_; }

  /// The randomized copies used for `s` (excluding `s` itself).
  std::vector<DnaSequence> copies(const DnaSequence& s) const;

 protected:
  std::vector<Probs> predict_batch(std::span<const DnaSequence> batch) const override;

 private:
  std::shared_ptr<const TrainableModel> model_;
  FrequencyTable table_;
  AdfarConfig cfg_;
  std::uint64_t seed_;
};

struct DefenseResult {
  std::unique_ptr<TrainableModel> model;
  std::unique_ptr<AdfarOracle> adfar;
  nlohmann::json provenance;
  std::vector<double> epoch_losses;
  /// Adversarial examples used per epoch (adversarial training only).
  std::vector<std::vector<Example>> epoch_adversarial;
  /// Largest perturbation norm seen after any inner step (FreeLB only).
  double max_delta_norm = 0.0;

  /// The wrapper for ADFAR, the trained model otherwise.
  const ProbOracle& oracle() const;
};

DefenseResult defend_adversarial_training(const ModelSpec& spec, const Dataset& data, const AugmentationSource& source,
                                          const TrainConfig& cfg);

/// Embedding-space adversarial training. Learning rate, decay and
/// accumulation come from `fl`; schedule, batch and seed from `cfg`.
DefenseResult defend_freelb(const ModelSpec& spec, const Dataset& data, const FreeLbConfig& fl, const TrainConfig& cfg);

DefenseResult defend_adfar(const ModelSpec& spec, const Dataset& data, const AdfarConfig& ad, const TrainConfig& cfg);

/// Writes the model checkpoint with the defense provenance (for ADFAR this
/// carries the frequency table and vote settings).
void save_defended(const DefenseResult& result, const std::filesystem::path& path);

/// Rebuilds the inference oracle of a checkpoint, wrapping ADFAR models in
/// their voting oracle.
struct DefendedOracle {
  LoadedModel loaded;
  std::shared_ptr<const TrainableModel> shared;
  std::unique_ptr<AdfarOracle> adfar;
  const ProbOracle& oracle() const;
};
DefendedOracle load_defended(const std::filesystem::path& path);

}  // namespace dnaadv
