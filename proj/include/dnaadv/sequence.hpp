#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace dnaadv {

/// Nucleotide string over {A,C,G,T}.
///
/// A second, query-only form exists for leave-one-out scoring: attacks may
/// overwrite spans with the mask symbol 'N' via `masked()`. Such sequences
/// are only ever handed to oracles; user input never produces one.
class DnaSequence {
 public:
  static constexpr char kMaskSymbol = 'N';

  DnaSequence() = default;

  /// Folds case, rejects anything outside {A,C,G,T} (including N).
  static DnaSequence parse(std::string_view text);

  /// Accepts {A,C,G,T,N}; used at oracle boundaries (bridge server).
  static DnaSequence parse_query(std::string_view text);

  std::size_t size() const noexcept { return residues_.size(); }
  bool empty() const noexcept { return residues_.empty(); }
  char operator[](std::size_t i) const { return residues_[i]; }
  const std::string& str() const noexcept { return residues_; }
  bool has_mask() const noexcept;

  /// Copy with [begin, end) overwritten by the mask symbol.
  DnaSequence masked(std::size_t begin, std::size_t end) const;

  /// Copy with [begin, begin + replacement.size()) overwritten. The
  /// replacement must be valid nucleotides; length is preserved.
  DnaSequence with_substring(std::size_t begin, std::string_view replacement) const;

  DnaSequence with_residue(std::size_t pos, char nucleotide) const;

  friend bool operator==(const DnaSequence&, const DnaSequence&) = default;

 private:
  explicit DnaSequence(std::string residues) : residues_(std::move(residues)) {}
  std::string residues_;
};

DnaSequence validate_sequence(std::string_view text);

/// Position of a nucleotide in the fixed order A,C,G,T, or -1.
inline int nucleotide_index(char c) noexcept {
  switch (c) {
    case 'A': return 0;
    case 'C': return 1;
    case 'G': return 2;
    case 'T': return 3;
    default: return -1;
  }
}

inline constexpr char kNucleotides[4] = {'A', 'C', 'G', 'T'};

/// Number of positions where the two equal-length sequences differ.
std::size_t char_edit_distance(const DnaSequence& a, const DnaSequence& b);

struct Example {
  DnaSequence sequence;
  int label = 0;
};

struct Dataset {
  std::string id;
  std::vector<Example> examples;
  int num_classes = 2;

  std::size_t size() const noexcept { return examples.size(); }
  bool empty() const noexcept { return examples.empty(); }
};

/// TAB-separated `sequence<TAB>label`, one record per line. Blank lines are
/// skipped. num_classes is max label + 1 unless `num_classes` is given.
Dataset read_dataset(const std::filesystem::path& path, int num_classes = 0);
void write_dataset(const Dataset& data, const std::filesystem::path& path);

struct FastaRecord {
  std::string header;
  DnaSequence sequence;
};

std::vector<FastaRecord> read_fasta(std::istream& in);
std::vector<FastaRecord> read_fasta(const std::filesystem::path& path);

}  // namespace dnaadv
