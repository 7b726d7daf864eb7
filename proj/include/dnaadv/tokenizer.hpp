#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dnaadv/sequence.hpp"

namespace dnaadv {

/// Dense token ids. Ids 0..2 are reserved for PAD, UNK and MASK.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMask = 2;
  static constexpr int kReserved = 3;

  Vocab();

  /// Returns the existing id when the token is already present.
  int add(const std::string& token);
  std::optional<int> find(std::string_view token) const;
  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return tokens_.size(); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

enum class TokenizerKind { Char, Kmer, Bpe };

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const noexcept { return end - begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct BpeMerge {
  std::string left;
  std::string right;
  friend bool operator==(const BpeMerge&, const BpeMerge&) = default;
};

struct TokenizedSeq {
  std::vector<int> ids;
  std::vector<Span> spans;
  std::string tokenizer;  // Tokenizer::id() of the producing tokenizer
  std::size_t source_length = 0;

  std::size_t size() const noexcept { return ids.size(); }
};

class Tokenizer {
 public:
  static constexpr std::size_t kMaxK = 8;

  static Tokenizer character();
  static Tokenizer kmer(std::size_t k, std::size_t stride = 1);
  static Tokenizer bpe(std::vector<BpeMerge> merges);

  /// Inverse of spec(): "char", "kmer:<k>:<stride>", "bpe:<l>+<r>|<l>+<r>|...".
  static Tokenizer from_spec(std::string_view spec);

  /// Full serializable description.
  std::string spec() const;
  /// Short identity; equal to spec() except for BPE, which uses a digest.
  const std::string& id() const noexcept { return id_; }

  TokenizerKind kind() const noexcept { return kind_; }
  std::size_t k() const noexcept { return k_; }
  std::size_t stride() const noexcept { return stride_; }
  const std::vector<BpeMerge>& merges() const noexcept { return merges_; }
  const Vocab& vocab() const noexcept { return vocab_; }

  /// Token count for a sequence of length n (Char/Kmer only).
  std::size_t token_count(std::size_t n) const;
  bool invertible_for(std::size_t n) const;

  TokenizedSeq tokenize(const DnaSequence& s) const;
  DnaSequence detokenize(const TokenizedSeq& ts) const;

  /// Id of a token string; strings holding the mask symbol map to MASK,
  /// unknown strings to UNK.
  int token_id(std::string_view piece) const;

  /// Writes the tokens over `base` at their nominal spans, later tokens
  /// winning on overlap. Used to discretize overlapping k-mer token lists.
  DnaSequence overlay(const DnaSequence& base, const TokenizedSeq& layout,
                      const std::vector<int>& ids) const;

  friend bool operator==(const Tokenizer& a, const Tokenizer& b) { return a.spec() == b.spec(); }

 private:
  Tokenizer() = default;
  void build_vocab();

  TokenizerKind kind_ = TokenizerKind::Char;
  std::size_t k_ = 1;
  std::size_t stride_ = 1;
  std::vector<BpeMerge> merges_;
  std::unordered_map<std::string, std::size_t> merge_rank_;
  Vocab vocab_;
  std::string id_;
};

inline TokenizedSeq tokenize(const Tokenizer& tok, const DnaSequence& s) { return tok.tokenize(s); }
inline DnaSequence detokenize(const Tokenizer& tok, const TokenizedSeq& ts) { return tok.detokenize(ts); }

/// Learns merges from the corpus. `target_vocab_size` counts real tokens (the
/// four nucleotides plus merged tokens), not the reserved ids.
Tokenizer train_bpe(const std::vector<DnaSequence>& corpus, std::size_t target_vocab_size);

/// Differing token positions between two tokenizations of equal length.
std::size_t token_hamming(const TokenizedSeq& a, const TokenizedSeq& b);

/// Number of spans of `original`'s tokenization whose substring differs in
/// `adversarial`. Equals token_hamming for Char and Kmer; for BPE it stays
/// defined when the adversarial sequence would segment differently.
std::size_t sequence_token_distance(const Tokenizer& tok, const DnaSequence& original,
                                    const DnaSequence& adversarial);
std::size_t sequence_token_distance(const TokenizedSeq& original_tokens, const DnaSequence& original,
                                    const DnaSequence& adversarial);

}  // namespace dnaadv
