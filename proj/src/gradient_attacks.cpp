#include <algorithm>
#include <cmath>
#include <numeric>

#include "dnaadv/attack.hpp"
#include "dnaadv/error.hpp"

namespace dnaadv {

namespace {

const GradOracle& require_grad(const ProbOracle& oracle) {
  const auto* g = dynamic_cast<const GradOracle*>(&oracle);
  if (g == nullptr) throw Error(ErrorKind::NoGradientCapability, "attack needs a gradient-capable model");
  return *g;
}

void project(Matrix& delta, PgdNorm norm, double radius) {
  if (norm == PgdNorm::Linf) {
    delta = delta.cwiseMax(-radius).cwiseMin(radius);
  } else {
    const double n = delta.norm();
    if (n > radius) delta *= n > 0.0 ? radius / n : 0.0;
  }
}

struct PgdRun {
  Matrix delta;
  std::vector<double> trace;
  Probs probs;
  std::uint64_t queries = 0;
};

/// Iterates from `delta`; reserves one query for the final evaluation.
PgdRun run_pgd(const GradOracle& g, const Matrix& x0, int label, AttackMode mode, int target, const PgdParams& p,
               Matrix delta, std::uint64_t cap) {
  PgdRun run;
  const int objective = mode == AttackMode::Targeted ? target : label;
  const double dir = mode == AttackMode::Targeted ? -1.0 : 1.0;
  bool have_probs = false;
  for (int t = 0; t < p.steps; ++t) {
    if (run.queries + 2 > cap) break;
    const LossGrad lg = g.loss_and_grad(x0 + delta, objective);
    ++run.queries;
    run.trace.push_back(lg.loss);
    if (p.early_stop && attack_succeeded(mode, target, label, argmax(lg.probs))) {
      run.probs = lg.probs;
      have_probs = true;
      break;
    }
    if (p.norm == PgdNorm::Linf) {
      delta += dir * p.alpha * lg.grad.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); });
    } else {
      const double n = lg.grad.norm();
      if (n > 0.0) delta += (dir * p.alpha / n) * lg.grad;
    }
    project(delta, p.norm, p.epsilon);
  }
  if (!have_probs) {
    run.probs = g.classify_from_embeddings(x0 + delta);
    ++run.queries;
  }
  run.delta = std::move(delta);
  return run;
}

Matrix initial_delta(const Matrix& x0, const PgdParams& p, Rng& rng) {
  Matrix d = Matrix::Zero(x0.rows(), x0.cols());
  if (p.random_start) {
    for (Eigen::Index i = 0; i < d.size(); ++i) d.data()[i] = rng.uniform(-p.epsilon, p.epsilon);
    project(d, p.norm, p.epsilon);
  }
  return d;
}

/// Nearest-token rounding of x0 + delta, applied position by position in
/// order of distance gained until the token budget is spent.
DnaSequence round_to_tokens(const GradOracle& g, const TokenizedSeq& ts, const DnaSequence& orig, const Matrix& x,
                            std::size_t budget) {
  const Matrix table = g.token_embeddings();
  const Tokenizer& tok = g.tokenizer();
  const Vocab& v = tok.vocab();
  struct Move {
    std::size_t pos;
    int id;
    double gain;
  };
  std::vector<Move> moves;
  for (std::size_t t = 0; t < ts.size(); ++t) {
    const auto row = x.row(static_cast<Eigen::Index>(t));
    const std::size_t len = ts.spans[t].length();
    int best = -1;
    double best_d = 0.0;
    for (int id = Vocab::kReserved; id < static_cast<int>(v.size()); ++id) {
      if (v.token(id).size() != len) continue;
      const double d = (row - table.row(id)).squaredNorm();
      if (best < 0 || d < best_d) {
        best = id;
        best_d = d;
      }
    }
    const int cur = ts.ids[t];
    if (best < 0 || best == cur || cur < Vocab::kReserved) continue;
    moves.push_back({t, best, (row - table.row(cur)).squaredNorm() - best_d});
  }
  std::stable_sort(moves.begin(), moves.end(), [](const Move& a, const Move& b) { return a.gain > b.gain; });
  DnaSequence s = orig;
  for (const Move& m : moves) {
    const DnaSequence next = s.with_substring(ts.spans[m.pos].begin, v.token(m.id));
    if (sequence_token_distance(ts, orig, next) <= budget) s = next;
  }
  return s;
}

struct Continuous {
  const GradOracle& g;
  TokenizedSeq ts;
  Matrix x0;
};

Continuous prepare(const GradOracle& g, const Example& ex) {
  Continuous c{g, g.truncate(g.tokenizer().tokenize(ex.sequence)), Matrix()};
  c.x0 = g.embed_tokens(c.ts);
  return c;
}

AttackOutcome base_outcome(const std::string& name, const GradOracle& g, const Continuous& c, const Example& ex,
                           const AttackConfig& cfg) {
  AttackOutcome out;
  out.attack = name;
  out.tokenizer = g.tokenizer().spec();
  out.original = ex.sequence;
  out.adversarial = ex.sequence;
  out.label = ex.label;
  out.mode = cfg.mode;
  out.target = cfg.mode == AttackMode::Targeted ? cfg.target : -1;
  out.seed = cfg.seed;
  out.token_count = c.ts.size();
  out.budget = token_budget(cfg.epsilon, c.ts.size());
  return out;
}

void finish_continuous(AttackOutcome& out, const Continuous& c, const Example& ex, const AttackConfig& cfg,
                       const Matrix& delta, const Probs& probs, bool round, std::uint64_t& queries) {
  out.probs_after = probs;
  out.pred_after = argmax(probs);
  out.success = attack_succeeded(cfg.mode, cfg.target, ex.label, out.pred_after);
  if (round && queries < cfg.max_queries) {
    out.adversarial = round_to_tokens(c.g, c.ts, ex.sequence, c.x0 + delta, out.budget);
    out.rounded_pred = argmax(c.g.predict_one(out.adversarial));
    ++queries;
  }
  out.queries = queries;
  out.token_hamming = sequence_token_distance(c.ts, ex.sequence, out.adversarial);
  out.char_edit = char_edit_distance(ex.sequence, out.adversarial);
  out.modified = modified_tokens(c.g.tokenizer(), c.ts, ex.sequence, out.adversarial);
}

}  // namespace

void PgdParams::validate() const {
  if (steps < 0) throw Error(ErrorKind::InvalidConfig, "pgd steps must be >= 0");
  if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidConfig, "pgd alpha must be > 0");
  if (!(epsilon >= 0.0)) throw Error(ErrorKind::InvalidConfig, "pgd epsilon must be >= 0");
}

AttackOutcome attack_pgd(const ProbOracle& oracle, const Example& example, const AttackConfig& cfg,
                         const PgdParams& params) {
  const GradOracle& g = require_grad(oracle);
  cfg.validate(g.num_classes());
  params.validate();
  const Continuous c = prepare(g, example);
  AttackOutcome out = base_outcome("pgd", g, c, example, cfg);

  const Probs clean = g.classify_from_embeddings(c.x0);
  std::uint64_t queries = 1;
  out.pred_before = argmax(clean);
  EmbeddingPerturbation emb;
  emb.norm = params.norm == PgdNorm::Linf ? "linf" : "l2";
  emb.radius = params.epsilon;
  if (attack_succeeded(cfg.mode, cfg.target, example.label, out.pred_before) || queries >= cfg.max_queries) {
    emb.delta = Matrix::Zero(c.x0.rows(), c.x0.cols());
    out.embedding = emb;
    finish_continuous(out, c, example, cfg, emb.delta, clean, false, queries);
    return out;
  }
  Rng rng(combine_seed(cfg.seed, 0x706764));
  PgdRun run = run_pgd(g, c.x0, example.label, cfg.mode, cfg.target, params, initial_delta(c.x0, params, rng),
                       cfg.max_queries - queries);
  queries += run.queries;
  emb.delta = run.delta;
  emb.loss_trace = std::move(run.trace);
  out.embedding = std::move(emb);
  finish_continuous(out, c, example, cfg, out.embedding->delta, run.probs, params.round_to_tokens, queries);
  return out;
}

AttackOutcome attack_auto(const ProbOracle& oracle, const Example& example, const AttackConfig& cfg,
                          const AutoAttackParams& params) {
  const GradOracle& g = require_grad(oracle);
  cfg.validate(g.num_classes());
  params.base.validate();
  if (params.long_run_factor < 1) throw Error(ErrorKind::InvalidConfig, "long_run_factor must be >= 1");
  const Continuous c = prepare(g, example);
  AttackOutcome out = base_outcome("autoattack", g, c, example, cfg);

  const Probs clean = g.classify_from_embeddings(c.x0);
  std::uint64_t queries = 1;
  out.pred_before = argmax(clean);
  EmbeddingPerturbation emb;
  emb.norm = params.base.norm == PgdNorm::Linf ? "linf" : "l2";
  emb.radius = params.base.epsilon;
  if (attack_succeeded(cfg.mode, cfg.target, example.label, out.pred_before)) {
    emb.delta = Matrix::Zero(c.x0.rows(), c.x0.cols());
    out.embedding = emb;
    finish_continuous(out, c, example, cfg, emb.delta, clean, false, queries);
    return out;
  }

  // Runner-up class of the clean prediction for the targeted stage.
  int runner_up = -1;
  for (int k = 0; k < g.num_classes(); ++k) {
    if (k == example.label) continue;
    if (runner_up < 0 || clean[static_cast<std::size_t>(k)] > clean[static_cast<std::size_t>(runner_up)]) runner_up = k;
  }

  // Same stream as attack_pgd so stage one reproduces a random-start PGD run.
  Rng rng(combine_seed(cfg.seed, 0x706764));
  PgdParams stage[3] = {params.base, params.base, params.base};
  stage[0].random_start = true;
  stage[1].random_start = false;
  stage[1].steps = params.base.steps * params.long_run_factor;
  stage[2].random_start = false;
  const AttackMode stage_mode[3] = {cfg.mode, cfg.mode, AttackMode::Targeted};
  const int stage_target[3] = {cfg.target, cfg.target, cfg.mode == AttackMode::Targeted ? cfg.target : runner_up};

  std::optional<PgdRun> best;
  for (int s = 0; s < 3; ++s) {
    if (queries + 1 >= cfg.max_queries) break;
    PgdRun run = run_pgd(g, c.x0, example.label, stage_mode[s], stage_target[s], stage[s],
                         initial_delta(c.x0, stage[s], rng), cfg.max_queries - queries);
    queries += run.queries;
    const bool ok = attack_succeeded(cfg.mode, cfg.target, example.label, argmax(run.probs));
    const auto p_true = [&](const PgdRun& r) { return r.probs[static_cast<std::size_t>(example.label)]; };
    if (ok || !best || p_true(run) < p_true(*best)) best = std::move(run);
    if (ok) break;
  }
  if (!best) {
    emb.delta = Matrix::Zero(c.x0.rows(), c.x0.cols());
    out.embedding = emb;
    finish_continuous(out, c, example, cfg, emb.delta, clean, false, queries);
    return out;
  }
  emb.delta = best->delta;
  emb.loss_trace = best->trace;
  out.embedding = std::move(emb);
  finish_continuous(out, c, example, cfg, out.embedding->delta, best->probs, params.base.round_to_tokens, queries);
  return out;
}

Matrix universal_delta_for(const UniversalPerturbation& up, Eigen::Index rows) {
  const Eigen::Index cols = up.delta.cols();
  if (up.pooled) return up.delta.row(0).replicate(rows, 1);
  Matrix d = Matrix::Zero(rows, cols);
  const Eigen::Index n = std::min(rows, up.delta.rows());
  d.topRows(n) = up.delta.topRows(n);
  return d;
}

UniversalPerturbation fit_universal(const ProbOracle& oracle, const Dataset& data, const UniversalParams& params) {
  const GradOracle& g = require_grad(oracle);
  if (data.empty()) throw Error(ErrorKind::EmptyDataset, "universal perturbation needs examples");
  if (!(params.bound >= 0.0) || params.passes < 0 || params.inner_steps < 0 || !(params.alpha > 0.0)) {
    throw Error(ErrorKind::InvalidConfig, "invalid universal perturbation parameters");
  }
  std::vector<Continuous> prepared;
  Eigen::Index max_rows = 0;
  for (const auto& ex : data.examples) {
    prepared.push_back(prepare(g, ex));
    max_rows = std::max(max_rows, prepared.back().x0.rows());
  }
  UniversalPerturbation up;
  up.pooled = params.pooled;
  up.bound = params.bound;
  up.delta = Matrix::Zero(params.pooled ? 1 : max_rows, static_cast<Eigen::Index>(g.embedding_dim()));

  PgdParams inner;
  inner.steps = params.inner_steps;
  inner.alpha = params.alpha;
  inner.epsilon = params.bound;
  inner.norm = PgdNorm::Linf;
  inner.early_stop = true;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(combine_seed(params.seed, 0x756e69));
  for (int pass = 0; pass < params.passes; ++pass) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      const Continuous& c = prepared[i];
      const int label = data.examples[i].label;
      const Matrix start = universal_delta_for(up, c.x0.rows());
      if (argmax(g.classify_from_embeddings(c.x0 + start)) != label) continue;
      const PgdRun run = run_pgd(g, c.x0, label, AttackMode::Untargeted, -1, inner, start,
                                 static_cast<std::uint64_t>(inner.steps) + 2);
      const Matrix change = run.delta - start;
      if (up.pooled) {
        up.delta.row(0) += change.colwise().mean();
      } else {
        up.delta.topRows(change.rows()) += change;
      }
      project(up.delta, PgdNorm::Linf, params.bound);
    }
  }
  std::size_t fooled = 0;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const Continuous& c = prepared[i];
    fooled += argmax(g.classify_from_embeddings(c.x0 + universal_delta_for(up, c.x0.rows()))) !=
              data.examples[i].label;
  }
  up.fooling_rate = static_cast<double>(fooled) / static_cast<double>(data.size());
  return up;
}

AttackOutcome apply_universal(const ProbOracle& oracle, const UniversalPerturbation& up, const Example& example,
                              const AttackConfig& cfg) {
  const GradOracle& g = require_grad(oracle);
  cfg.validate(g.num_classes());
  const Continuous c = prepare(g, example);
  AttackOutcome out = base_outcome("universal", g, c, example, cfg);
  const Probs clean = g.classify_from_embeddings(c.x0);
  std::uint64_t queries = 1;
  out.pred_before = argmax(clean);
  EmbeddingPerturbation emb;
  emb.norm = "linf";
  emb.radius = up.bound;
  if (attack_succeeded(cfg.mode, cfg.target, example.label, out.pred_before) || queries >= cfg.max_queries) {
    emb.delta = Matrix::Zero(c.x0.rows(), c.x0.cols());
    out.embedding = emb;
    finish_continuous(out, c, example, cfg, emb.delta, clean, false, queries);
    return out;
  }
  emb.delta = universal_delta_for(up, c.x0.rows());
  const Probs p = g.classify_from_embeddings(c.x0 + emb.delta);
  ++queries;
  out.embedding = std::move(emb);
  finish_continuous(out, c, example, cfg, out.embedding->delta, p, true, queries);
  return out;
}

}  // namespace dnaadv
