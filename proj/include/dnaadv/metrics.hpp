#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dnaadv/artifact_store.hpp"
#include "dnaadv/defense.hpp"

namespace dnaadv {

/// Fraction of argmax-correct predictions. Throws EmptyDataset.
double accuracy(const ProbOracle& oracle, const Dataset& data);

/// Relative accuracy drop in percent. Throws ZeroCleanAccuracy.
double compute_asr(double a_clean, double a_adv);

/// Retained accuracy in percent: 100 * a_adv / a_def. Throws ZeroDefAccuracy.
double compute_dsr(double a_def, double a_adv);

/// Which post-attack accuracy enters the DSR. `Defended` uses the defended
/// model under attack; `LiteralUndefended` plugs in the undefended model's
/// post-attack accuracy instead (inverts the ordering of defenses).
enum class DsrVariant { Defended, LiteralUndefended };

struct CampaignReport {
  std::string model;
  std::string attack;
  std::string dataset;
  double a_clean = 0.0;
  double a_adv = 0.0;
  std::optional<double> a_def;
  double asr = 0.0;
  std::optional<double> dsr;
  std::string dsr_variant;  // "defended" or "literal-undefended" when dsr is set
  std::string records;      // record file, empty when not persisted
  std::uint64_t seed = 0;
  double wall_time_s = 0.0;
  std::size_t examples = 0;
  std::size_t successes = 0;
  double mean_queries = 0.0;
  double mean_token_hamming = 0.0;
  nlohmann::json params = nlohmann::json::object();

  nlohmann::json to_json() const;
  static CampaignReport from_json(const nlohmann::json& j);
  /// Recomputes ASR (and DSR) from the stored accuracies; throws
  /// InvalidRecord if they differ by more than `tol`.
  void check_consistency(double tol = 1e-9) const;
};

/// Fills a_def and dsr for a campaign run against a defended model. The
/// literal variant needs the undefended post-attack accuracy.
void attach_dsr(CampaignReport& defended, DsrVariant variant = DsrVariant::Defended,
                std::optional<double> undefended_a_adv = std::nullopt);

void write_report(const CampaignReport& report, const std::filesystem::path& path);
CampaignReport read_report(const std::filesystem::path& path);

/// `<model>__<attack>__<dataset>__s<seed>`, lower-cased.
std::string campaign_key(const std::string& model, const std::string& attack, const std::string& dataset,
                         std::uint64_t seed);

struct CampaignConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string model_id = "model";
  /// Defaults to the dataset's id.
  std::string dataset_id;
  nlohmann::json params = nlohmann::json::object();
  /// When set, records go to <root>/records, the report to <root>/reports,
  /// and the campaign is registered in the root's metadata index.
  std::optional<std::filesystem::path> store_root;
};

struct CampaignResult {
  CampaignReport report;
  std::vector<AttackOutcome> outcomes;
};

/// Attacks every example (already-misclassified ones come back as
/// zero-edit successes), example i with seed combine_seed(cfg.seed, i).
/// Throws ZeroCleanAccuracy before attacking when no example is correct.
CampaignResult run_campaign(const ProbOracle& oracle, const std::string& attack_id, const AttackFn& attack,
                            const Dataset& data, const CampaignConfig& cfg);

/// Ranks within one attack: 1 = highest ASR, ties share the average of the
/// ranks they cover.
std::vector<double> tie_averaged_ranks(std::span<const double> asr);

struct RankTable {
  std::vector<std::string> attacks;
  std::vector<std::string> models;
  /// asr[a][m] and rank[a][m].
  std::vector<std::vector<double>> asr;
  std::vector<std::vector<double>> rank;
  std::vector<double> average_rank;  // per model

  nlohmann::json to_json() const;
};

/// cells[attack][model] = ASR. Throws MissingCell when a model lacks an attack.
RankTable rank_models(const std::map<std::string, std::map<std::string, double>>& cells);
/// Groups reports by attack; several seeds of a cell are averaged.
RankTable rank_models(std::span<const CampaignReport> reports);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single value
};
MeanStd mean_std(std::span<const double> values);

}  // namespace dnaadv
