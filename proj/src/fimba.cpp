#include <algorithm>
#include <cmath>
#include <numeric>

#include "dnaadv/attack.hpp"
#include "dnaadv/error.hpp"
#include "dnaadv/shapley.hpp"

namespace dnaadv {

void FimbaParams::validate() const {
  if (n_features < 1) throw Error(ErrorKind::InvalidConfig, "fimba n_features must be >= 1");
  if (alphas.empty()) throw Error(ErrorKind::InvalidConfig, "fimba needs an interpolation grid");
  for (double a : alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw Error(ErrorKind::InvalidConfig, "fimba alpha outside [0, 1]");
  }
  if (shapley_mode == ShapleyMode::Sampled && shapley_samples < 1) {
    throw Error(ErrorKind::InvalidConfig, "fimba shapley_samples must be >= 1");
  }
}

TargetPool build_target_pool(const FeatureOracle& model, const std::vector<DnaSequence>& sequences) {
  TargetPool pool;
  for (const auto& s : sequences) pool.features.push_back(model.features_of(s));
  for (const auto& p : model.predict_features(pool.features)) pool.predicted.push_back(argmax(p));
  return pool;
}

Vector interpolate_features(const Vector& x, const Vector& t, const std::vector<std::size_t>& features, double alpha) {
  Vector out = x;
  for (std::size_t f : features) {
    const auto i = static_cast<Eigen::Index>(f);
    out[i] = (1.0 - alpha) * x[i] + alpha * t[i];
  }
  return out;
}

namespace {

std::size_t window_code(const std::string& s, std::size_t begin, std::size_t k) {
  std::size_t code = 0;
  for (std::size_t i = 0; i < k; ++i) code = code * 4 + static_cast<std::size_t>(nucleotide_index(s[begin + i]));
  return code;
}

}  // namespace

DnaSequence repair_counts(const DnaSequence& start, const Vector& target_counts, std::size_t k,
                          const TokenizedSeq& original_tokens, const DnaSequence& original, std::size_t budget,
                          const std::vector<std::size_t>& focus) {
  if (start.size() < k) throw Error(ErrorKind::SequenceTooShort, "sequence shorter than k");
  std::string s = start.str();
  const std::size_t n = s.size();
  const std::size_t windows = n - k + 1;
  std::vector<double> counts(static_cast<std::size_t>(target_counts.size()), 0.0);
  for (std::size_t b = 0; b < windows; ++b) counts[window_code(s, b, k)] += 1.0;

  // Spans of the budget tokenization covering each position.
  std::vector<std::vector<std::size_t>> covering(n);
  for (std::size_t i = 0; i < original_tokens.spans.size(); ++i) {
    const Span sp = original_tokens.spans[i];
    for (std::size_t p = sp.begin; p < sp.end && p < n; ++p) covering[p].push_back(i);
  }
  const std::string& o = original.str();
  const auto span_differs = [&](std::size_t i, const std::string& text) {
    const Span sp = original_tokens.spans[i];
    return o.compare(sp.begin, sp.length(), text, sp.begin, sp.length()) != 0;
  };
  std::size_t distance = 0;
  for (std::size_t i = 0; i < original_tokens.spans.size(); ++i) distance += span_differs(i, s);

  std::vector<bool> focused(counts.size(), focus.empty());
  for (std::size_t f : focus) focused.at(f) = true;
  const auto cost = [&](std::size_t code, double delta) {
    const double t = target_counts[static_cast<Eigen::Index>(code)];
    return std::abs(counts[code] + delta - t) - std::abs(counts[code] - t);
  };
  // Edits are ranked by the L1 change on the focus features, then on all.
  const auto better = [](double fa, double aa, double fb, double ab) {
    constexpr double tol = 1e-12;
    return fa < fb - tol || (fa <= fb + tol && aa < ab - tol);
  };

  std::size_t edits = 0;
  for (;;) {
    double best_focus = 0.0, best_all = 0.0;
    std::size_t best_pos = n;
    char best_nuc = 0;
    std::size_t best_distance = distance;
    for (std::size_t p = 0; p < n; ++p) {
      const char old = s[p];
      const std::size_t first = p + 1 >= k ? p + 1 - k : 0;
      const std::size_t last = std::min(p, windows - 1);
      for (char nuc : kNucleotides) {
        if (nuc == old) continue;
        std::size_t d = distance;
        for (std::size_t i : covering[p]) d -= span_differs(i, s);
        s[p] = nuc;
        for (std::size_t i : covering[p]) d += span_differs(i, s);
        if (d > budget) {
          s[p] = old;
          continue;
        }
        // L1 change from the windows covering p.
        double change = 0.0, focus_change = 0.0;
        std::vector<std::pair<std::size_t, double>> touched;
        for (std::size_t b = first; b <= last; ++b) {
          s[p] = old;
          touched.emplace_back(window_code(s, b, k), -1.0);
          s[p] = nuc;
          touched.emplace_back(window_code(s, b, k), 1.0);
        }
        std::sort(touched.begin(), touched.end());
        for (std::size_t i = 0; i < touched.size();) {
          double net = 0.0;
          std::size_t j = i;
          while (j < touched.size() && touched[j].first == touched[i].first) net += touched[j++].second;
          if (net != 0.0) {
            const double c = cost(touched[i].first, net);
            change += c;
            if (focused[touched[i].first]) focus_change += c;
          }
          i = j;
        }
        s[p] = old;
        if (better(focus_change, change, best_focus, best_all)) {
          best_focus = focus_change;
          best_all = change;
          best_pos = p;
          best_nuc = nuc;
          best_distance = d;
        }
      }
    }
    if (best_pos == n) break;
    const std::size_t first = best_pos + 1 >= k ? best_pos + 1 - k : 0;
    const std::size_t last = std::min(best_pos, windows - 1);
    for (std::size_t b = first; b <= last; ++b) counts[window_code(s, b, k)] -= 1.0;
    s[best_pos] = best_nuc;
    for (std::size_t b = first; b <= last; ++b) counts[window_code(s, b, k)] += 1.0;
    distance = best_distance;
    ++edits;
  }
  if (edits == 0) throw Error(ErrorKind::RepairFailed, "no edit within budget moves the counts toward the target");
  return DnaSequence::parse(s);
}

AttackOutcome attack_fimba(const ProbOracle& oracle, const Example& example, const TargetPool& pool,
                           const AttackConfig& cfg, const FimbaParams& params) {
  const auto* fo = dynamic_cast<const FeatureOracle*>(&oracle);
  if (fo == nullptr) throw Error(ErrorKind::NoFeatureView, "fimba needs a k-mer feature view of the model");
  cfg.validate(oracle.num_classes());
  params.validate();
  if (pool.features.empty()) throw Error(ErrorKind::EmptyTargetPool, "target pool is empty");

  const Tokenizer tok = attack_tokenizer(oracle, cfg);
  const DnaSequence& orig = example.sequence;
  const TokenizedSeq ts = tok.tokenize(orig);
  const std::size_t k = fo->feature_k();
  AttackOutcome out;
  out.attack = "fimba";
  out.tokenizer = tok.spec();
  out.original = orig;
  out.adversarial = orig;
  out.label = example.label;
  out.mode = cfg.mode;
  out.target = cfg.mode == AttackMode::Targeted ? cfg.target : -1;
  out.seed = cfg.seed;
  out.token_count = ts.size();
  out.budget = token_budget(cfg.epsilon, ts.size());

  std::uint64_t used = 0;
  Probs p0 = oracle.predict_one(orig);
  ++used;
  out.pred_before = argmax(p0);
  out.probs_after = p0;
  const auto finish = [&](const DnaSequence& adv, const Probs& p) {
    out.adversarial = adv;
    out.probs_after = p;
    out.pred_after = argmax(p);
    out.success = attack_succeeded(cfg.mode, cfg.target, example.label, out.pred_after);
    out.queries = used;
    out.token_hamming = sequence_token_distance(ts, orig, adv);
    out.char_edit = char_edit_distance(orig, adv);
    out.modified = modified_tokens(tok, ts, orig, adv);
    return out;
  };
  if (attack_succeeded(cfg.mode, cfg.target, example.label, out.pred_before)) return finish(orig, p0);

  const Vector x = fo->features_of(orig);
  std::size_t target = pool.features.size();
  double best_d = 0.0;
  for (std::size_t i = 0; i < pool.features.size(); ++i) {
    const bool eligible = params.policy == TargetPolicy::NearestOfTargetClass && cfg.mode == AttackMode::Targeted
                              ? pool.predicted[i] == cfg.target
                              : pool.predicted[i] != out.pred_before;
    if (!eligible) continue;
    const double d = (pool.features[i] - x).squaredNorm();
    if (target == pool.features.size() || d < best_d) {
      target = i;
      best_d = d;
    }
  }
  if (target == pool.features.size()) {
    throw Error(ErrorKind::EmptyTargetPool, "no pool member with an eligible predicted class");
  }
  const Vector& t = pool.features[target];

  std::vector<std::size_t> support;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] != t[i]) support.push_back(static_cast<std::size_t>(i));
  }
  const std::size_t d = support.size();

  // Shapley attribution of p_true over the differing features, baseline t.
  std::uint64_t feature_queries_before = oracle.queries();
  const CoalitionValues game = feature_game(*fo, x, t, example.label, support);
  ShapleyResult sh;
  if (params.shapley_mode == ShapleyMode::Exact) {
    if (d > kMaxExactShapleyFeatures) {
      throw Error(ErrorKind::TooManyFeaturesForExact, std::to_string(d) + " differing features");
    }
    if (used + (std::uint64_t{1} << d) + 1 <= cfg.max_queries) sh = shapley_exact(d, game);
  } else if (d > 0) {
    const std::uint64_t room = cfg.max_queries > used + 1 ? cfg.max_queries - used - 1 : 0;
    const std::size_t m = std::min<std::uint64_t>(params.shapley_samples, room / (d + 1));
    if (m > 0) {
      Rng rng(combine_seed(cfg.seed, 0x66696d));
      sh = shapley_sampled(d, game, m, rng);
    }
  }
  used += oracle.queries() - feature_queries_before;
  std::vector<std::size_t> rank(d);
  std::iota(rank.begin(), rank.end(), 0);
  const auto weight = [&](std::size_t j) {
    // Without an attribution, fall back to the feature-space gap.
    return sh.values.empty() ? std::abs(x[static_cast<Eigen::Index>(support[j])] - t[static_cast<Eigen::Index>(support[j])])
                             : std::abs(sh.values[j]);
  };
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return weight(a) > weight(b); });
  std::vector<std::size_t> top;
  for (std::size_t j = 0; j < std::min(params.n_features, d); ++j) top.push_back(support[rank[j]]);

  const double windows = static_cast<double>(orig.size() - k + 1);
  std::optional<std::pair<DnaSequence, Probs>> best;
  std::size_t attempted = 0, repaired = 0;
  const auto p_obj = [&](const Probs& p) {
    return cfg.mode == AttackMode::Targeted ? -p[static_cast<std::size_t>(cfg.target)]
                                            : p[static_cast<std::size_t>(example.label)];
  };
  for (double alpha : params.alphas) {
    if (alpha == 0.0) {
      ++repaired;
      continue;  // identity interpolation: the original itself
    }
    if (used >= cfg.max_queries) break;
    const Vector target_counts = interpolate_features(x, t, top, alpha) * windows;
    ++attempted;
    DnaSequence candidate;
    try {
      candidate = repair_counts(orig, target_counts, k, ts, orig, out.budget, top);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::RepairFailed) throw;
      continue;
    }
    ++repaired;
    const Probs p = oracle.predict_one(candidate);
    ++used;
    if (attack_succeeded(cfg.mode, cfg.target, example.label, argmax(p))) return finish(candidate, p);
    if (!best || p_obj(p) < p_obj(best->second)) best = std::make_pair(candidate, p);
  }
  // Running out of queries before any repair is an ordinary failed run.
  if (params.strict_repair && attempted > 0 && repaired == 0) throw Error(ErrorKind::RepairFailed, "no interpolation step could be realized as a sequence");
  if (best && p_obj(best->second) < p_obj(p0)) return finish(best->first, best->second);
  return finish(orig, p0);
}

}  // namespace dnaadv
