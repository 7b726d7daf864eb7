#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dnaadv/defense.hpp"

namespace dnaadv {

enum class AttackMethod { TextFooler, BertAttack, Pgd, AutoAttack, Universal, Fimba };
enum class DefenseMethod { AdversarialTraining, FreeLb, Adfar };

/// Lower-case ids accepted on the command line and stored in records.
const std::vector<std::string>& attack_method_names();
const std::vector<std::string>& defense_method_names();
std::string to_string(AttackMethod m);
std::string to_string(DefenseMethod m);
/// Case-insensitive; nullopt for unknown ids.
std::optional<AttackMethod> find_attack_method(const std::string& name);
std::optional<DefenseMethod> find_defense_method(const std::string& name);

/// Every hyperparameter of one attack run. The seed is not part of it; it
/// comes from the caller.
struct AttackSettings {
  AttackMethod method = AttackMethod::TextFooler;
  AttackConfig cfg;
  BertAttackParams bert;
  PgdParams pgd;
  int long_run_factor = 2;  // autoattack
  UniversalParams universal;
  FimbaParams fimba;

  nlohmann::json to_json() const;
};

/// Keys recognised for `method`; anything else throws UnknownKey, bad
/// values throw InvalidConfig.
AttackSettings parse_attack_settings(AttackMethod method, const nlohmann::json& j);
std::vector<std::string> attack_setting_keys(AttackMethod method);

/// Model architecture plus the training schedule (desk recipe by default).
struct TrainSettings {
  ModelSpec spec;
  TrainConfig train = TrainConfig::desk_scale();

  nlohmann::json to_json() const;
};
TrainSettings parse_train_settings(const nlohmann::json& j);

struct DefenseSettings {
  DefenseMethod method = DefenseMethod::AdversarialTraining;
  /// Schedule keys (epochs, batch_size, ...) override the desk recipe of
  /// the model kind.
  TrainSettings model;
  // adversarial training
  std::string source = "on-the-fly";  // or "records"
  AttackSettings attack;              // on-the-fly generator
  std::string records;                // GenoAdv file for the records source
  std::optional<std::string> records_model;
  std::optional<std::string> records_attack;
  double mix_ratio = 0.1;
  FreeLbConfig freelb = FreeLbConfig::desk_scale(ModelKind::EmbeddingMlp);
  AdfarConfig adfar;

  nlohmann::json to_json() const;
};
DefenseSettings parse_defense_settings(DefenseMethod method, const nlohmann::json& j);

/// Reads a JSON object from disk (IoError, ParseError).
nlohmann::json read_params_file(const std::filesystem::path& path);

/// An attack ready to run per example. Campaign-level preparation (target
/// pool, universal fit, candidate model) happens once in prepare_attack.
struct PreparedAttack {
  AttackFn fn;
  std::shared_ptr<const void> state;
  /// Set for the universal attack.
  std::optional<double> fooling_rate;
};

/// `data` is the attacked set; `corpus` feeds the candidate language model
/// and the FIMBA target pool (defaults to `data`).
PreparedAttack prepare_attack(const AttackSettings& s, const ProbOracle& oracle, const Dataset& data,
                              std::uint64_t seed, const Dataset* corpus = nullptr);

/// Per-example attacks usable against a changing model (adversarial
/// training): textfooler, bertattack, pgd, autoattack. Others throw
/// InvalidConfig.
AttackFn make_example_attack(const AttackSettings& s, const std::vector<DnaSequence>& corpus);

/// Trains the defended model described by `s` on `train`; `seed` drives the
/// schedule, augmentation and randomization.
DefenseResult run_defense(const DefenseSettings& s, const Dataset& train, std::uint64_t seed);

}  // namespace dnaadv
