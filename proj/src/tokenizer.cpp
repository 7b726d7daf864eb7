#include "dnaadv/tokenizer.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "dnaadv/error.hpp"

namespace dnaadv {

Vocab::Vocab() {
  for (const char* t : {"[PAD]", "[UNK]", "[MASK]"}) add(t);
}

int Vocab::add(const std::string& token) {
  if (auto it = ids_.find(token); it != ids_.end()) return it->second;
  const int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

std::optional<int> Vocab::find(std::string_view token) const {
  if (auto it = ids_.find(std::string(token)); it != ids_.end()) return it->second;
  return std::nullopt;
}

int Vocab::id(std::string_view token) const { return find(token).value_or(kUnk); }

namespace {

std::string merge_key(std::string_view l, std::string_view r) {
  std::string key(l);
  key += '+';
  key += r;
  return key;
}

std::string digest(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::size_t parse_size(std::string_view text, std::string_view what) {
  std::size_t value = 0;
  if (text.empty()) throw Error(ErrorKind::InvalidConfig, "missing " + std::string(what));
  for (char c : text) {
    if (c < '0' || c > '9') throw Error(ErrorKind::InvalidConfig, "bad " + std::string(what));
    value = value * 10 + static_cast<std::size_t>(c - '0');
  }
  return value;
}

// Applies rank-ordered merges to a run of symbols that contains no mask.
std::vector<std::string> bpe_segment(std::vector<std::string> symbols,
                                     const std::unordered_map<std::string, std::size_t>& rank) {
  while (symbols.size() > 1) {
    std::size_t best_rank = SIZE_MAX;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      if (auto it = rank.find(merge_key(symbols[i], symbols[i + 1])); it != rank.end()) {
        best_rank = std::min(best_rank, it->second);
      }
    }
    if (best_rank == SIZE_MAX) break;
    std::vector<std::string> next;
    next.reserve(symbols.size());
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      if (i + 1 < symbols.size()) {
        auto it = rank.find(merge_key(symbols[i], symbols[i + 1]));
        if (it != rank.end() && it->second == best_rank) {
          next.push_back(symbols[i] + symbols[i + 1]);
          ++i;
          continue;
        }
      }
      next.push_back(std::move(symbols[i]));
    }
    symbols = std::move(next);
  }
  return symbols;
}

}  // namespace

Tokenizer Tokenizer::character() {
  Tokenizer t;
  t.kind_ = TokenizerKind::Char;
  t.build_vocab();
  return t;
}

Tokenizer Tokenizer::kmer(std::size_t k, std::size_t stride) {
  if (k < 1 || k > kMaxK) throw Error(ErrorKind::InvalidConfig, "k-mer length must be in [1, 8]");
  if (stride < 1) throw Error(ErrorKind::InvalidConfig, "k-mer stride must be >= 1");
  Tokenizer t;
  t.kind_ = TokenizerKind::Kmer;
  t.k_ = k;
  t.stride_ = stride;
  t.build_vocab();
  return t;
}

Tokenizer Tokenizer::bpe(std::vector<BpeMerge> merges) {
  Tokenizer t;
  t.kind_ = TokenizerKind::Bpe;
  t.merges_ = std::move(merges);
  for (std::size_t i = 0; i < t.merges_.size(); ++i) {
    t.merge_rank_.emplace(merge_key(t.merges_[i].left, t.merges_[i].right), i);
  }
  t.build_vocab();
  return t;
}

void Tokenizer::build_vocab() {
  switch (kind_) {
    case TokenizerKind::Char:
      for (char c : kNucleotides) vocab_.add(std::string(1, c));
      id_ = "char";
      break;
    case TokenizerKind::Kmer: {
      std::size_t total = 1;
      for (std::size_t i = 0; i < k_; ++i) total *= 4;
      std::string token(k_, 'A');
      for (std::size_t code = 0; code < total; ++code) {
        std::size_t rest = code;
        for (std::size_t i = k_; i-- > 0;) {
          token[i] = kNucleotides[rest % 4];
          rest /= 4;
        }
        vocab_.add(token);
      }
      id_ = "kmer:" + std::to_string(k_) + ":" + std::to_string(stride_);
      break;
    }
    case TokenizerKind::Bpe:
      for (char c : kNucleotides) vocab_.add(std::string(1, c));
      for (const auto& m : merges_) {
        for (const auto& part : {m.left, m.right}) {
          for (char c : part) {
            if (nucleotide_index(c) < 0) throw Error(ErrorKind::InvalidConfig, "merge holds non-nucleotide");
          }
        }
        vocab_.add(m.left + m.right);
      }
      id_ = "bpe:" + digest(spec());
      break;
  }
}

std::string Tokenizer::spec() const {
  switch (kind_) {
    case TokenizerKind::Char: return "char";
    case TokenizerKind::Kmer: return "kmer:" + std::to_string(k_) + ":" + std::to_string(stride_);
    case TokenizerKind::Bpe: {
      std::string s = "bpe:";
      for (std::size_t i = 0; i < merges_.size(); ++i) {
        if (i) s += '|';
        s += merge_key(merges_[i].left, merges_[i].right);
      }
      return s;
    }
  }
  return {};
}

Tokenizer Tokenizer::from_spec(std::string_view spec) {
  if (spec == "char") return character();
  if (spec.starts_with("kmer:")) {
    const auto rest = spec.substr(5);
    const auto colon = rest.find(':');
    if (colon == std::string_view::npos) return kmer(parse_size(rest, "k"), 1);
    return kmer(parse_size(rest.substr(0, colon), "k"), parse_size(rest.substr(colon + 1), "stride"));
  }
  if (spec.starts_with("bpe:")) {
    std::vector<BpeMerge> merges;
    auto rest = spec.substr(4);
    while (!rest.empty()) {
      const auto bar = rest.find('|');
      const auto item = rest.substr(0, bar);
      const auto plus = item.find('+');
      if (plus == std::string_view::npos || plus == 0 || plus + 1 == item.size()) {
        throw Error(ErrorKind::InvalidConfig, "malformed BPE merge '" + std::string(item) + "'");
      }
      merges.push_back({std::string(item.substr(0, plus)), std::string(item.substr(plus + 1))});
      if (bar == std::string_view::npos) break;
      rest = rest.substr(bar + 1);
    }
    return bpe(std::move(merges));
  }
  throw Error(ErrorKind::InvalidConfig, "unknown tokenizer '" + std::string(spec) + "'");
}

std::size_t Tokenizer::token_count(std::size_t n) const {
  switch (kind_) {
    case TokenizerKind::Char: return n;
    case TokenizerKind::Kmer: return n < k_ ? 0 : (n - k_) / stride_ + 1;
    case TokenizerKind::Bpe: break;
  }
  throw Error(ErrorKind::InvalidConfig, "BPE token count depends on content");
}

bool Tokenizer::invertible_for(std::size_t n) const {
  if (kind_ != TokenizerKind::Kmer) return true;
  return stride_ == k_ && n % k_ == 0;
}

int Tokenizer::token_id(std::string_view piece) const {
  if (piece.find(DnaSequence::kMaskSymbol) != std::string_view::npos) return Vocab::kMask;
  if (kind_ == TokenizerKind::Kmer) {
    if (piece.size() != k_) return Vocab::kUnk;
    std::size_t code = 0;
    for (char c : piece) {
      const int v = nucleotide_index(c);
      if (v < 0) return Vocab::kUnk;
      code = code * 4 + static_cast<std::size_t>(v);
    }
    return Vocab::kReserved + static_cast<int>(code);
  }
  return vocab_.id(piece);
}

TokenizedSeq Tokenizer::tokenize(const DnaSequence& s) const {
  TokenizedSeq out;
  out.tokenizer = id_;
  out.source_length = s.size();
  const std::string& text = s.str();
  switch (kind_) {
    case TokenizerKind::Char:
      out.ids.reserve(text.size());
      for (std::size_t i = 0; i < text.size(); ++i) {
        out.ids.push_back(token_id(std::string_view(text).substr(i, 1)));
        out.spans.push_back({i, i + 1});
      }
      break;
    case TokenizerKind::Kmer: {
      if (text.size() < k_) {
        throw Error(ErrorKind::SequenceTooShort,
                    "length " + std::to_string(text.size()) + " < k=" + std::to_string(k_));
      }
      const std::size_t count = token_count(text.size());
      out.ids.reserve(count);
      for (std::size_t t = 0; t < count; ++t) {
        const std::size_t b = t * stride_;
        out.ids.push_back(token_id(std::string_view(text).substr(b, k_)));
        out.spans.push_back({b, b + k_});
      }
      break;
    }
    case TokenizerKind::Bpe: {
      // Mask symbols never merge; segment each unmasked run independently.
      std::size_t pos = 0;
      while (pos < text.size()) {
        if (text[pos] == DnaSequence::kMaskSymbol) {
          out.ids.push_back(Vocab::kMask);
          out.spans.push_back({pos, pos + 1});
          ++pos;
          continue;
        }
        std::size_t end = pos;
        while (end < text.size() && text[end] != DnaSequence::kMaskSymbol) ++end;
        std::vector<std::string> symbols;
        symbols.reserve(end - pos);
        for (std::size_t i = pos; i < end; ++i) symbols.emplace_back(1, text[i]);
        std::size_t offset = pos;
        for (const auto& piece : bpe_segment(std::move(symbols), merge_rank_)) {
          out.ids.push_back(vocab_.id(piece));
          out.spans.push_back({offset, offset + piece.size()});
          offset += piece.size();
        }
        pos = end;
      }
      break;
    }
  }
  return out;
}

DnaSequence Tokenizer::detokenize(const TokenizedSeq& ts) const {
  if (ts.tokenizer != id_) throw Error(ErrorKind::MixedTokenizers, ts.tokenizer + " vs " + id_);
  if (kind_ == TokenizerKind::Kmer && !invertible_for(ts.source_length)) {
    throw Error(ErrorKind::NotInvertible, "k-mer windows overlap or leave a tail");
  }
  std::string text;
  for (int id : ts.ids) {
    if (id < Vocab::kReserved || static_cast<std::size_t>(id) >= vocab_.size()) {
      throw Error(ErrorKind::NotInvertible, "reserved or unknown token id " + std::to_string(id));
    }
    text += vocab_.token(id);
  }
  return DnaSequence::parse(text);
}

DnaSequence Tokenizer::overlay(const DnaSequence& base, const TokenizedSeq& layout,
                               const std::vector<int>& ids) const {
  if (ids.size() != layout.spans.size()) throw Error(ErrorKind::LengthMismatch, "overlay id count");
  DnaSequence out = base;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < Vocab::kReserved) continue;
    const std::string& piece = vocab_.token(ids[i]);
    if (piece.size() != layout.spans[i].length()) continue;
    out = out.with_substring(layout.spans[i].begin, piece);
  }
  return out;
}

Tokenizer train_bpe(const std::vector<DnaSequence>& corpus, std::size_t target_vocab_size) {
  if (corpus.empty()) throw Error(ErrorKind::EmptyCorpus, "BPE training needs at least one sequence");
  if (target_vocab_size < 4) throw Error(ErrorKind::InvalidConfig, "vocabulary must hold the 4 nucleotides");
  std::vector<std::vector<std::string>> words;
  words.reserve(corpus.size());
  for (const auto& s : corpus) {
    std::vector<std::string> w;
    w.reserve(s.size());
    for (char c : s.str()) w.emplace_back(1, c);
    words.push_back(std::move(w));
  }
  std::vector<BpeMerge> merges;
  std::size_t vocab_size = 4;
  std::unordered_map<std::string, bool> seen;
  for (char c : kNucleotides) seen.emplace(std::string(1, c), true);
  while (vocab_size < target_vocab_size) {
    // Ordered map: among equal counts the lexicographically smallest pair wins.
    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.size(); ++i) ++counts[{w[i], w[i + 1]}];
    }
    if (counts.empty()) break;
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [left, right] = best->first;
    merges.push_back({left, right});
    const std::string fused = left + right;
    if (seen.emplace(fused, true).second) ++vocab_size;
    for (auto& w : words) {
      std::vector<std::string> next;
      next.reserve(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (i + 1 < w.size() && w[i] == left && w[i + 1] == right) {
          next.push_back(fused);
          ++i;
        } else {
          next.push_back(std::move(w[i]));
        }
      }
      w = std::move(next);
    }
  }
  return Tokenizer::bpe(std::move(merges));
}

std::size_t token_hamming(const TokenizedSeq& a, const TokenizedSeq& b) {
  if (a.tokenizer != b.tokenizer) throw Error(ErrorKind::MixedTokenizers, a.tokenizer + " vs " + b.tokenizer);
  if (a.ids.size() != b.ids.size()) {
    throw Error(ErrorKind::LengthMismatch,
                std::to_string(a.ids.size()) + " vs " + std::to_string(b.ids.size()) + " tokens");
  }
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.ids.size(); ++i) d += a.ids[i] != b.ids[i];
  return d;
}

std::size_t sequence_token_distance(const TokenizedSeq& original_tokens, const DnaSequence& original,
                                    const DnaSequence& adversarial) {
  if (original.size() != adversarial.size()) throw Error(ErrorKind::LengthMismatch, "sequence pair lengths differ");
  const std::string& a = original.str();
  const std::string& b = adversarial.str();
  std::size_t d = 0;
  for (const Span& sp : original_tokens.spans) {
    d += a.compare(sp.begin, sp.length(), b, sp.begin, sp.length()) != 0;
  }
  return d;
}

std::size_t sequence_token_distance(const Tokenizer& tok, const DnaSequence& original,
                                    const DnaSequence& adversarial) {
  return sequence_token_distance(tok.tokenize(original), original, adversarial);
}

}  // namespace dnaadv
