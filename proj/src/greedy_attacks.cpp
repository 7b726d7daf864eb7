#include <algorithm>
#include <cmath>
#include <set>

#include "dnaadv/attack.hpp"
#include "dnaadv/error.hpp"

namespace dnaadv {

namespace {

using CandidateFn = std::function<std::vector<std::string>(std::size_t position, const DnaSequence& current)>;

double objective(const AttackConfig& cfg, int label, const Probs& p) {
  return cfg.mode == AttackMode::Targeted ? p[static_cast<std::size_t>(cfg.target)]
                                          : -p[static_cast<std::size_t>(label)];
}

/// Shared greedy loop: visit tokens by importance, try each candidate in
/// the token's span, keep the best one if it moves the objective.
AttackOutcome greedy_attack(const std::string& name, const ProbOracle& oracle, const Example& ex,
                            const AttackConfig& cfg, const Tokenizer& tok, const CandidateFn& candidates) {
  cfg.validate(oracle.num_classes());
  const QueryBudget q(oracle, cfg.max_queries);
  const DnaSequence& orig = ex.sequence;
  const TokenizedSeq ts = tok.tokenize(orig);

  AttackOutcome out;
  out.attack = name;
  out.tokenizer = tok.spec();
  out.original = orig;
  out.label = ex.label;
  out.mode = cfg.mode;
  out.target = cfg.mode == AttackMode::Targeted ? cfg.target : -1;
  out.seed = cfg.seed;
  out.token_count = ts.size();
  out.budget = token_budget(cfg.epsilon, ts.size());

  Probs cur_p = q.predict_one(orig);
  out.pred_before = argmax(cur_p);
  DnaSequence current = orig;
  bool done = attack_succeeded(cfg.mode, cfg.target, ex.label, out.pred_before);

  if (!done) {
    std::vector<std::size_t> order;
    if (q.remaining() >= ts.size()) {
      for (const auto& r : rank_token_importance(q, ts, orig, ex.label, cur_p)) order.push_back(r.index);
    } else {
      for (std::size_t i = 0; i < ts.size(); ++i) order.push_back(i);
    }
    for (std::size_t pos : order) {
      if (q.remaining() == 0) break;
      const Span sp = ts.spans[pos];
      std::vector<DnaSequence> trial;
      for (const std::string& c : candidates(pos, current)) {
        if (c.size() != sp.length()) continue;
        DnaSequence s = current.with_substring(sp.begin, c);
        if (s == current) continue;
        if (sequence_token_distance(ts, orig, s) > out.budget) continue;
        trial.push_back(std::move(s));
      }
      if (trial.empty()) continue;
      if (trial.size() > q.remaining()) trial.resize(q.remaining());
      const auto probs = q.predict(trial);

      std::size_t best = probs.size();
      bool best_success = false;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        const bool ok = attack_succeeded(cfg.mode, cfg.target, ex.label, argmax(probs[i]));
        if (best == probs.size() || (ok && !best_success) ||
            (ok == best_success && objective(cfg, ex.label, probs[i]) > objective(cfg, ex.label, probs[best]))) {
          best = i;
          best_success = ok;
        }
      }
      if (best_success || objective(cfg, ex.label, probs[best]) > objective(cfg, ex.label, cur_p)) {
        current = trial[best];
        cur_p = probs[best];
        if (best_success) {
          done = true;
          break;
        }
      }
    }
  }

  out.adversarial = current;
  out.probs_after = cur_p;
  out.pred_after = argmax(cur_p);
  out.success = attack_succeeded(cfg.mode, cfg.target, ex.label, out.pred_after);
  out.queries = q.queries();
  out.token_hamming = sequence_token_distance(ts, orig, current);
  out.char_edit = char_edit_distance(orig, current);
  out.modified = modified_tokens(tok, ts, orig, current);
  return out;
}

std::vector<std::string> substitution_candidates(const Tokenizer& tok, const std::string& piece, std::size_t cap) {
  std::vector<std::string> out;
  switch (tok.kind()) {
    case TokenizerKind::Char:
    case TokenizerKind::Kmer:
      // Hamming-1 neighbours; for single nucleotides that is the other three.
      for (std::size_t j = 0; j < piece.size(); ++j) {
        for (char n : kNucleotides) {
          if (n == piece[j]) continue;
          std::string c = piece;
          c[j] = n;
          out.push_back(std::move(c));
        }
      }
      std::sort(out.begin(), out.end());
      return out;
    case TokenizerKind::Bpe: {
      std::vector<std::pair<std::size_t, int>> ranked;
      const Vocab& v = tok.vocab();
      for (int id = Vocab::kReserved; id < static_cast<int>(v.size()); ++id) {
        const std::string& t = v.token(id);
        if (t.size() != piece.size() || t == piece) continue;
        std::size_t d = 0;
        for (std::size_t j = 0; j < t.size(); ++j) d += t[j] != piece[j];
        ranked.emplace_back(d, id);
      }
      std::sort(ranked.begin(), ranked.end());
      if (ranked.size() > cap) ranked.resize(cap);
      std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
      for (const auto& r : ranked) out.push_back(v.token(r.second));
      return out;
    }
  }
  return out;
}

std::string piece_at(const DnaSequence& s, const Span& sp) { return s.str().substr(sp.begin, sp.length()); }

}  // namespace

AttackOutcome attack_textfooler(const ProbOracle& oracle, const Example& example, const AttackConfig& cfg) {
  const Tokenizer tok = attack_tokenizer(oracle, cfg);
  const TokenizedSeq layout = tok.tokenize(example.sequence);
  return greedy_attack("textfooler", oracle, example, cfg, tok, [&](std::size_t pos, const DnaSequence& current) {
    return substitution_candidates(tok, piece_at(current, layout.spans[pos]), cfg.bpe_candidate_cap);
  });
}

AttackOutcome attack_bertattack(const ProbOracle& oracle, const CandidateGenerator& generator,
                                const Example& example, const AttackConfig& cfg, const BertAttackParams& params) {
  if (params.k < 1) throw Error(ErrorKind::InvalidConfig, "bertattack k must be >= 1");
  const Tokenizer tok = attack_tokenizer(oracle, cfg);
  const TokenizedSeq layout = tok.tokenize(example.sequence);
  return greedy_attack("bertattack", oracle, example, cfg, tok, [&](std::size_t pos, const DnaSequence& current) {
    const std::string piece = piece_at(current, layout.spans[pos]);
    std::vector<Candidate> proposed = generator.propose(tok, layout, current, pos);
    std::set<std::string> seen;
    std::vector<Candidate> kept;
    for (auto& c : proposed) {
      if (c.token == piece || c.score < params.threshold || !seen.insert(c.token).second) continue;
      kept.push_back(std::move(c));
    }
    std::stable_sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    if (kept.size() > params.k) kept.resize(params.k);
    std::vector<std::string> out;
    for (auto& c : kept) out.push_back(std::move(c.token));
    std::sort(out.begin(), out.end(), [&](const std::string& a, const std::string& b) {
      const int ia = tok.token_id(a), ib = tok.token_id(b);
      return ia != ib ? ia < ib : a < b;
    });
    return out;
  });
}

namespace {

constexpr char kBoundary[] = "^";

std::string context_key(const std::vector<std::string>& context) {
  std::string key;
  for (const auto& c : context) {
    key += c;
    key.push_back('|');
  }
  return key;
}

std::vector<std::string> token_strings(const TokenizedSeq& ts, const DnaSequence& s) {
  std::vector<std::string> out;
  out.reserve(ts.size());
  for (const Span& sp : ts.spans) out.push_back(s.str().substr(sp.begin, sp.length()));
  return out;
}

std::vector<std::string> context_before(const std::vector<std::string>& tokens, std::size_t j) {
  std::vector<std::string> ctx;
  for (std::size_t back = MarkovCandidateModel::kOrder; back >= 1; --back) {
    ctx.push_back(j >= back ? tokens[j - back] : std::string(kBoundary));
  }
  return ctx;
}

}  // namespace

MarkovCandidateModel::MarkovCandidateModel(const std::vector<DnaSequence>& corpus, const Tokenizer& tok)
    : tokenizer_(tok.spec()) {
  vocab_ = tok.vocab().size() - Vocab::kReserved;
  for (const auto& s : corpus) {
    const auto tokens = token_strings(tok.tokenize(s), s);
    for (std::size_t j = 0; j < tokens.size(); ++j) {
      const std::string key = context_key(context_before(tokens, j));
      ++context_counts_[key];
      ++ngram_counts_[key + tokens[j]];
      ++total_;
    }
  }
}

double MarkovCandidateModel::log_prob(const std::vector<std::string>& context, const std::string& token) const {
  const std::string key = context_key(context);
  const auto ci = context_counts_.find(key);
  const auto ni = ngram_counts_.find(key + token);
  const double c = ci == context_counts_.end() ? 0.0 : static_cast<double>(ci->second);
  const double n = ni == ngram_counts_.end() ? 0.0 : static_cast<double>(ni->second);
  return std::log((n + 1.0) / (c + static_cast<double>(vocab_)));
}

std::vector<Candidate> MarkovCandidateModel::propose(const Tokenizer& tok, const TokenizedSeq& layout,
                                                     const DnaSequence& current, std::size_t position) const {
  if (tok.spec() != tokenizer_) throw Error(ErrorKind::MixedTokenizers, "candidate model trained on " + tokenizer_);
  const Span sp = layout.spans.at(position);
  const std::size_t last = std::min(layout.size() - 1, position + kOrder);
  const Vocab& v = tok.vocab();
  std::vector<Candidate> out;
  std::vector<double> logits;
  std::vector<std::string> tokens = token_strings(layout, current);
  for (int id = Vocab::kReserved; id < static_cast<int>(v.size()); ++id) {
    const std::string& piece = v.token(id);
    if (piece.size() != sp.length()) continue;
    const DnaSequence s = current.with_substring(sp.begin, piece);
    // Tokens whose spans overlap the substitution (k-mer windows) change too.
    const std::size_t first = position >= kOrder ? position - kOrder : 0;
    for (std::size_t j = first; j <= last; ++j) tokens[j] = s.str().substr(layout.spans[j].begin, layout.spans[j].length());
    double lp = 0.0;
    for (std::size_t j = position; j <= last; ++j) lp += log_prob(context_before(tokens, j), tokens[j]);
    out.push_back({piece, 0.0});
    logits.push_back(lp);
  }
  if (out.empty()) return out;
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double& l : logits) z += (l = std::exp(l - m));
  for (std::size_t i = 0; i < out.size(); ++i) out[i].score = logits[i] / z;
  return out;
}

}  // namespace dnaadv
