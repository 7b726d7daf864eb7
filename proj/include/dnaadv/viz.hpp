#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dnaadv/artifact_store.hpp"

namespace dnaadv {

inline constexpr std::size_t kDefaultBins = 50;
inline constexpr int kProfileFormatVersion = 1;

/// Which tokens successful attacks changed, and where along the sequence.
struct FrequencyProfile {
  std::string tokenizer;  // spec shared by all analyzed outcomes
  std::size_t bins = kDefaultBins;
  /// Keyed by the original token string at each modified position.
  std::map<std::string, std::uint64_t> token_counts;
  /// Modified positions per normalized-position bin: bin = floor(idx / T * B).
  std::vector<std::uint64_t> bin_counts;
  std::size_t total_outcomes = 0;  // successful outcomes analyzed
  std::uint64_t total_modifications = 0;

  /// bin_counts / total_modifications (all zeros when empty).
  std::vector<double> histogram() const;
  friend bool operator==(const FrequencyProfile&, const FrequencyProfile&) = default;
};

/// Aggregates successful outcomes. Throws MixedTokenizers.
FrequencyProfile modification_frequency(std::span<const AttackOutcome> outcomes, std::size_t bins = kDefaultBins);
FrequencyProfile modification_frequency(std::span<const GenoAdvRecord> records, std::size_t bins = kDefaultBins);

enum class ReportFormat { Svg, Tsv, Both };
/// "svg", "tsv" or "both"; throws UnsupportedFormat.
ReportFormat parse_report_format(const std::string& name);

/// Writes `<stem>.svg` and/or `<stem>.tsv`; returns the paths written.
/// Output bytes depend only on the profile and format version.
std::vector<std::filesystem::path> render_report(const FrequencyProfile& profile, const std::filesystem::path& stem,
                                                 ReportFormat format);
std::string render_svg(const FrequencyProfile& profile);
std::string render_tsv(const FrequencyProfile& profile);
/// Inverse of render_tsv. Throws ParseError.
FrequencyProfile parse_profile_tsv(const std::string& text);

/// Per-token modification rate on tokens overlapping a motif occurrence
/// (in the original or the adversarial sequence) versus all other tokens,
/// over successful outcomes.
struct MotifEnrichment {
  std::uint64_t motif_tokens = 0;
  std::uint64_t motif_modified = 0;
  std::uint64_t background_tokens = 0;
  std::uint64_t background_modified = 0;

  double motif_rate() const;
  double background_rate() const;
  /// motif_rate / background_rate; infinity when the background is untouched.
  double ratio() const;
};
MotifEnrichment motif_enrichment(std::span<const GenoAdvRecord> records, const std::string& motif);

}  // namespace dnaadv
