#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dnaadv/attack.hpp"

namespace dnaadv {

inline constexpr int kRecordSchemaVersion = 1;

/// One adversarial example as persisted in a record file (JSON lines).
struct GenoAdvRecord {
  DnaSequence original;
  DnaSequence adversarial;
  int label = 0;
  std::string model;
  std::string attack;
  std::string tokenizer;  // Tokenizer::spec() of the attack tokenizer
  bool success = false;
  int pred_before = 0;
  int pred_after = 0;
  std::uint64_t queries = 0;
  std::size_t token_hamming = 0;
  std::vector<ModifiedToken> modified;
  std::uint64_t seed = 0;
  int schema_version = kRecordSchemaVersion;

  friend bool operator==(const GenoAdvRecord&, const GenoAdvRecord&) = default;

  static GenoAdvRecord from_outcome(const AttackOutcome& o, const std::string& model_id);
};

/// Method ids are stored lower-case so lookups ignore case.
std::string normalize_id(std::string_view id);

nlohmann::json record_to_json(const GenoAdvRecord& r);
GenoAdvRecord record_from_json(const nlohmann::json& j);

/// Throws InvalidRecord when sequences are invalid or unequal in length,
/// or the stored distance / modified list disagree with a recount.
void validate_record(const GenoAdvRecord& r);

/// Validates every record first, then appends them under an exclusive file
/// lock. Returns the number of lines written.
std::size_t write_records(std::span<const GenoAdvRecord> records, const std::filesystem::path& path);

struct RecordFilter {
  std::optional<std::string> model;
  std::optional<std::string> attack;
  bool matches(const GenoAdvRecord& r) const;
};

/// Throws IoError, or ParseError with the 1-based line number.
std::vector<GenoAdvRecord> read_records(const std::filesystem::path& path, const RecordFilter& filter = {});

/// Adversarial examples for augmentation: successful records whose
/// sequence changed, paired with the clean label.
std::vector<Example> records_as_examples(std::span<const GenoAdvRecord> records);

struct CampaignEntry {
  std::string dataset;
  std::string records;  // record file path
  std::string report;   // report file path (may be empty)
  nlohmann::json params;
  std::uint64_t seed = 0;
  double a_clean = 0.0;
  double a_adv = 0.0;
  double asr = 0.0;
  std::size_t examples = 0;
};

struct AttackMetadata {
  std::string attack;
  std::string model;
  std::vector<CampaignEntry> campaigns;

  std::vector<nlohmann::json> parameter_sets() const;
  std::vector<std::string> dataset_ids() const;
  std::vector<std::string> record_files() const;
  /// ASR of the pooled accuracies over all campaigns.
  double aggregate_asr() const;
  nlohmann::json to_json() const;
};

/// Metadata index: one JSON document (index.json) under a root directory.
class ArtifactStore {
 public:
  explicit ArtifactStore(std::filesystem::path root);

  const std::filesystem::path& root() const noexcept { return root_; }
  std::filesystem::path index_path() const { return root_ / "index.json"; }

  /// Adds a campaign under (attack, model), creating the entry when new. An
  /// earlier campaign with the same record file is replaced.
  void register_campaign(const std::string& attack, const std::string& model, const CampaignEntry& entry);
  /// Throws NotFound.
  AttackMetadata get_attack_metadata(const std::string& attack, const std::string& model) const;
  std::vector<AttackMetadata> list() const;

  /// Checks that every referenced record file exists and parses, and that
  /// each campaign's ASR is reproduced by its records. Throws on failure.
  void verify() const;

 private:
  std::filesystem::path root_;
};

}  // namespace dnaadv
