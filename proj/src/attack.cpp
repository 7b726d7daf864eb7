#include "dnaadv/attack.hpp"

#include <algorithm>
#include <cmath>

#include "dnaadv/error.hpp"

namespace dnaadv {

void AttackConfig::validate(int num_classes) const {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw Error(ErrorKind::InvalidConfig, "epsilon must be in (0, 1]");
  if (max_queries < 1) throw Error(ErrorKind::InvalidConfig, "max_queries must be >= 1");
  if (mode == AttackMode::Targeted && (target < 0 || target >= num_classes)) {
    throw Error(ErrorKind::InvalidConfig, "targeted mode needs a target class in [0, " +
                                              std::to_string(num_classes) + ")");
  }
}

std::size_t token_budget(double epsilon, std::size_t tokens) {
  if (tokens == 0) return 0;
  // The small slack keeps e.g. 0.1 * 30 from rounding up to 4.
  const auto b = static_cast<std::size_t>(std::ceil(epsilon * static_cast<double>(tokens) - 1e-9));
  return std::clamp<std::size_t>(b, 1, tokens);
}

bool attack_succeeded(AttackMode mode, int target, int label, int predicted) {
  return mode == AttackMode::Targeted ? predicted == target : predicted != label;
}

std::vector<ModifiedToken> modified_tokens(const Tokenizer& tok, const TokenizedSeq& original_tokens,
                                           const DnaSequence& original, const DnaSequence& adversarial) {
  (void)tok;
  if (original.size() != adversarial.size()) throw Error(ErrorKind::LengthMismatch, "sequence pair lengths differ");
  std::vector<ModifiedToken> out;
  const std::string& a = original.str();
  const std::string& b = adversarial.str();
  for (std::size_t i = 0; i < original_tokens.spans.size(); ++i) {
    const Span sp = original_tokens.spans[i];
    if (a.compare(sp.begin, sp.length(), b, sp.begin, sp.length()) != 0) {
      out.push_back({i, a.substr(sp.begin, sp.length()), b.substr(sp.begin, sp.length())});
    }
  }
  return out;
}

Tokenizer attack_tokenizer(const ProbOracle& oracle, const AttackConfig& cfg) {
  if (!cfg.tokenizer.empty()) return Tokenizer::from_spec(cfg.tokenizer);
  if (const Tokenizer* t = oracle.native_tokenizer()) return *t;
  return Tokenizer::character();
}

std::vector<Probs> QueryBudget::predict_batch(std::span<const DnaSequence> batch) const {
  // The counter has already been charged for this batch.
  if (queries() > cap_) throw Error(ErrorKind::InvalidConfig, "query cap exceeded by an attack batch");
  return inner_.predict(batch);
}

namespace {

std::vector<TokenScore> importance_impl(const ProbOracle& oracle, const TokenizedSeq& ts, const DnaSequence& seq,
                                        int label, double p_orig) {
  std::vector<DnaSequence> masked;
  masked.reserve(ts.size());
  for (const Span& sp : ts.spans) masked.push_back(seq.masked(sp.begin, sp.end));
  const auto probs = oracle.predict(masked);
  std::vector<TokenScore> out(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) out[i] = {i, p_orig - probs[i][static_cast<std::size_t>(label)]};
  std::stable_sort(out.begin(), out.end(), [](const TokenScore& a, const TokenScore& b) { return a.score > b.score; });
  return out;
}

}  // namespace

std::vector<TokenScore> rank_token_importance(const ProbOracle& oracle, const TokenizedSeq& ts,
                                              const DnaSequence& sequence, int label) {
  const Probs p = oracle.predict_one(sequence);
  return importance_impl(oracle, ts, sequence, label, p.at(static_cast<std::size_t>(label)));
}

std::vector<TokenScore> rank_token_importance(const ProbOracle& oracle, const TokenizedSeq& ts,
                                              const DnaSequence& sequence, int label, const Probs& original_probs) {
  return importance_impl(oracle, ts, sequence, label, original_probs.at(static_cast<std::size_t>(label)));
}

}  // namespace dnaadv
