#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dnaadv/attack.hpp"
#include "dnaadv/bridge.hpp"
#include "dnaadv/embedding_mlp.hpp"
#include "dnaadv/error.hpp"
#include "dnaadv/kmer_logreg.hpp"
#include "test_util.hpp"

using namespace dnaadv;
using dnaadv::testing::ConstantOracle;
using dnaadv::testing::MotifOracle;
using dnaadv::testing::RecordingOracle;
namespace tu = dnaadv::testing;

namespace {

AttackConfig char_config(double eps) {
  AttackConfig cfg;
  cfg.epsilon = eps;
  cfg.tokenizer = "char";
  return cfg;
}

int predicted(const ProbOracle& o, const DnaSequence& s) { return argmax(o.predict_one(s)); }

}  // namespace

TEST(Budget, CeilOfFraction) {
  EXPECT_EQ(token_budget(0.5, 8), 4u);
  EXPECT_EQ(token_budget(0.125, 8), 1u);
  EXPECT_EQ(token_budget(0.1, 30), 3u);
  EXPECT_EQ(token_budget(0.01, 8), 1u);
  EXPECT_EQ(token_budget(1.0, 61), 61u);
}

TEST(Importance, ConstantOracleGivesZerosInIndexOrder) {
  ConstantOracle o({0.3, 0.7});
  const auto s = DnaSequence::parse("ACGTACGT");
  const auto ts = Tokenizer::character().tokenize(s);
  const auto r = rank_token_importance(o, ts, s, 1);
  ASSERT_EQ(r.size(), 8u);
  for (std::size_t i = 0; i < r.size(); ++i) {
    EXPECT_EQ(r[i].index, i);
    EXPECT_DOUBLE_EQ(r[i].score, 0.0);
  }
}

TEST(Importance, MotifPositionsRankFirst) {
  MotifOracle o;
  const auto s = DnaSequence::parse("CCTATACC");
  const auto ts = Tokenizer::character().tokenize(s);
  const auto r = rank_token_importance(o, ts, s, 1);
  // Independent leave-one-out recount.
  const double base = o.predict_one(s)[1];
  std::vector<double> drop(8);
  for (std::size_t i = 0; i < 8; ++i) drop[i] = base - o.predict_one(s.masked(i, i + 1))[1];
  std::set<std::size_t> top;
  for (std::size_t i = 0; i < 4; ++i) {
    top.insert(r[i].index);
    EXPECT_NEAR(r[i].score, drop[r[i].index], 1e-15);
  }
  EXPECT_EQ(top, (std::set<std::size_t>{2, 3, 4, 5}));
  for (std::size_t i = 4; i < 8; ++i) EXPECT_DOUBLE_EQ(r[i].score, 0.0);
}

TEST(Importance, SingleToken) {
  MotifOracle o;
  const auto s = DnaSequence::parse("TATA");
  const auto ts = Tokenizer::kmer(4, 1).tokenize(s);
  EXPECT_EQ(rank_token_importance(o, ts, s, 1).size(), 1u);
}

TEST(TextFooler, AlreadyMisclassifiedIsImmediateSuccess) {
  MotifOracle o;
  const Example ex{DnaSequence::parse("CCCCCCCC"), 1};
  const auto out = attack_textfooler(o, ex, char_config(0.5));
  EXPECT_TRUE(out.success);
  EXPECT_TRUE(out.modified.empty());
  EXPECT_EQ(out.adversarial, ex.sequence);
  EXPECT_EQ(out.queries, 1u);
}

TEST(TextFooler, BreaksMotifWithinSpan) {
  MotifOracle o;
  const Example ex{DnaSequence::parse("CCTATACC"), 1};
  // Brute force: some substitution of at most two characters flips the label.
  bool flip_exists = false;
  const auto& str = ex.sequence.str();
  for (std::size_t i = 0; i < 8 && !flip_exists; ++i) {
    for (char c : kNucleotides) {
      if (c != str[i] && predicted(o, ex.sequence.with_residue(i, c)) != 1) flip_exists = true;
    }
  }
  ASSERT_TRUE(flip_exists);
  const std::uint64_t before = o.queries();
  const auto out = attack_textfooler(o, ex, char_config(0.5));
  EXPECT_TRUE(out.success);
  EXPECT_EQ(o.queries() - before, out.queries);
  ASSERT_FALSE(out.modified.empty());
  for (const auto& m : out.modified) {
    EXPECT_GE(m.index, 2u);
    EXPECT_LE(m.index, 5u);
  }
  EXPECT_LE(out.token_hamming, token_budget(0.5, 8));
  EXPECT_NE(predicted(o, out.adversarial), 1);
}

TEST(TextFooler, BudgetTooSmallForTwoEdits) {
  // Three overlapping motif copies: any single edit leaves one intact.
  MotifOracle o;
  const Example ex{DnaSequence::parse("TATATATA"), 1};
  const auto& str = ex.sequence.str();
  for (std::size_t i = 0; i < 8; ++i) {
    for (char c : kNucleotides) {
      if (c != str[i]) {
        ASSERT_EQ(predicted(o, ex.sequence.with_residue(i, c)), 1);
      }
    }
  }
  const auto out = attack_textfooler(o, ex, char_config(1.0 / 8.0));
  EXPECT_FALSE(out.success);
  EXPECT_EQ(out.modified.size(), 1u);
  EXPECT_EQ(out.token_hamming, 1u);
}

TEST(TextFooler, QueryCapRespected) {
  MotifOracle o;
  const Example ex{DnaSequence::parse("CCTATACCGGTATAGG"), 1};
  for (std::uint64_t cap : {1u, 2u, 5u, 17u, 20u}) {
    AttackConfig cfg = char_config(0.5);
    cfg.max_queries = cap;
    const std::uint64_t before = o.queries();
    const auto out = attack_textfooler(o, ex, cfg);
    EXPECT_LE(o.queries() - before, cap);
    EXPECT_EQ(o.queries() - before, out.queries);
  }
}

TEST(TextFooler, TargetedMode) {
  MotifOracle o;
  const Example ex{DnaSequence::parse("CCTAGACC"), 0};
  AttackConfig cfg = char_config(0.25);
  cfg.mode = AttackMode::Targeted;
  cfg.target = 1;
  const auto out = attack_textfooler(o, ex, cfg);
  EXPECT_TRUE(out.success);
  EXPECT_EQ(out.pred_after, 1);
  EXPECT_EQ(out.adversarial.str(), "CCTATACC");
}

TEST(TextFooler, KmerCandidatesAreHammingNeighbours) {
  const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
  const auto data = tu::motif_dataset(11, 20);
  AttackConfig cfg;
  cfg.epsilon = 0.2;
  for (const auto& ex : data.examples) {
    const auto out = attack_textfooler(model, ex, cfg);
    EXPECT_EQ(out.tokenizer, "kmer:4:1");
    EXPECT_LE(out.token_hamming, out.budget);
    EXPECT_EQ(out.success, predicted(model, out.adversarial) != ex.label);
    // Each committed substitution changes one nucleotide of a window.
    EXPECT_LE(out.char_edit, out.token_hamming);
  }
}

TEST(TextFooler, Deterministic) {
  const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
  const auto data = tu::motif_dataset(12, 10);
  AttackConfig cfg;
  for (const auto& ex : data.examples) {
    const auto a = attack_textfooler(model, ex, cfg);
    const auto b = attack_textfooler(model, ex, cfg);
    EXPECT_EQ(a.adversarial, b.adversarial);
    EXPECT_EQ(a.modified, b.modified);
    EXPECT_EQ(a.queries, b.queries);
  }
}

TEST(TextFooler, BpeCandidatesCapped) {
  std::vector<DnaSequence> corpus;
  Rng rng(5);
  for (int i = 0; i < 30; ++i) corpus.push_back(tu::random_sequence(rng, 40));
  const Tokenizer bpe = train_bpe(corpus, 20);
  MotifOracle o;
  RecordingOracle rec(o);
  const Example ex{DnaSequence::parse("ACGTTATAGGCATTACGGATATAC"), 1};
  AttackConfig cfg;
  cfg.tokenizer = bpe.spec();
  cfg.bpe_candidate_cap = 2;
  cfg.epsilon = 1.0;
  const auto out = attack_textfooler(rec, ex, cfg);
  const auto batches = rec.batches();
  const std::size_t tokens = bpe.tokenize(ex.sequence).size();
  ASSERT_GE(batches.size(), 2u);
  EXPECT_EQ(batches[1], tokens);  // importance pass
  for (std::size_t i = 2; i < batches.size(); ++i) EXPECT_LE(batches[i], 2u);
  EXPECT_LE(out.token_hamming, out.budget);
}

namespace {

class EchoGenerator final : public CandidateGenerator {
 public:
  std::vector<Candidate> propose(const Tokenizer&, const TokenizedSeq& layout, const DnaSequence& current,
                                 std::size_t position) const override {
    const Span sp = layout.spans[position];
    return {{current.str().substr(sp.begin, sp.length()), 1.0}};
  }
};

}  // namespace

TEST(BertAttack, OriginalOnlyCandidatesMeanNoEdits) {
  MotifOracle o;
  const Example ex{DnaSequence::parse("CCTATACC"), 1};
  const auto out = attack_bertattack(o, EchoGenerator{}, ex, char_config(0.5), BertAttackParams{});
  EXPECT_FALSE(out.success);
  EXPECT_TRUE(out.modified.empty());
}

TEST(BertAttack, CharVocabularyCapsCandidatesAtThree) {
  std::vector<DnaSequence> corpus;
  Rng rng(2);
  for (int i = 0; i < 50; ++i) corpus.push_back(tu::random_sequence(rng, 30));
  const MarkovCandidateModel lm(corpus, Tokenizer::character());
  MotifOracle o(/*motif=*/"GGGGGGGG");  // never present: attack never stops early
  RecordingOracle rec(o);
  const Example ex{DnaSequence::parse("ACGTACGTAC"), 0};
  const auto out = attack_bertattack(rec, lm, ex, char_config(1.0), BertAttackParams{48, 0.0});
  const auto b = rec.batches();
  ASSERT_GT(b.size(), 2u);
  for (std::size_t i = 2; i < b.size(); ++i) EXPECT_EQ(b[i], 3u);
  (void)out;
}

TEST(BertAttack, MarkovScoresAreProbabilities) {
  std::vector<DnaSequence> corpus;
  for (int i = 0; i < 20; ++i) corpus.push_back(DnaSequence::parse("ACGTACGTACGTACGT"));
  const Tokenizer tok = Tokenizer::character();
  const MarkovCandidateModel lm(corpus, tok);
  const auto s = DnaSequence::parse("ACGTACGT");
  const auto c = lm.propose(tok, tok.tokenize(s), s, 4);
  ASSERT_EQ(c.size(), 4u);
  double total = 0.0;
  for (const auto& x : c) total += x.score;
  EXPECT_NEAR(total, 1.0, 1e-12);
  // The periodic corpus makes 'A' after "CGT"... context overwhelmingly likely.
  const auto best = std::max_element(c.begin(), c.end(), [](auto& a, auto& b) { return a.score < b.score; });
  EXPECT_EQ(best->token, "A");
}

TEST(BertAttack, MotifCampaignComparableToTextFooler) {
  const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
  const auto train_data = tu::motif_dataset(1);
  std::vector<DnaSequence> corpus;
  for (const auto& e : train_data.examples) corpus.push_back(e.sequence);
  const MarkovCandidateModel lm(corpus, model.tokenizer());
  const auto data = tu::motif_dataset(21, 200);
  AttackConfig cfg;
  int tf = 0, ba = 0;
  for (const auto& ex : data.examples) {
    tf += attack_textfooler(model, ex, cfg).success;
    const auto out = attack_bertattack(model, lm, ex, cfg, BertAttackParams{});
    ba += out.success;
    EXPECT_LE(out.token_hamming, out.budget);
  }
  EXPECT_GE(ba, tf - 20) << "bertattack " << ba << " textfooler " << tf;
}

// ---- PGD ----------------------------------------------------------------

TEST(Pgd, BlackBoxOracleRejected) {
  UniformOracle o(2);
  const Example ex{DnaSequence::parse("ACGTACGT"), 0};
  try {
    attack_pgd(o, ex, AttackConfig{}, PgdParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoGradientCapability);
  }
}

TEST(Pgd, ZeroRadiusLeavesPredictionUnchanged) {
  const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
  const auto data = tu::motif_dataset(31, 20);
  PgdParams p;
  p.epsilon = 0.0;
  for (const auto& ex : data.examples) {
    const auto out = attack_pgd(model, ex, AttackConfig{}, p);
    ASSERT_TRUE(out.embedding.has_value());
    EXPECT_EQ(out.embedding->delta.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(out.pred_after, out.pred_before);
  }
}

TEST(Pgd, OneStepIsFgsm) {
  const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
  const auto data = tu::motif_dataset(32, 10);
  PgdParams p;
  p.steps = 1;
  p.alpha = 0.03;
  p.epsilon = 0.02;
  p.early_stop = false;
  for (const auto& ex : data.examples) {
    const Matrix x0 = model.embed(ex.sequence);
    const Matrix g = model.loss_and_grad(x0, ex.label).grad;
    const auto out = attack_pgd(model, ex, AttackConfig{}, p);
    if (out.pred_before != ex.label) continue;
    const Matrix& d = out.embedding->delta;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      const double s = (g.data()[i] > 0) - (g.data()[i] < 0);
      EXPECT_DOUBLE_EQ(d.data()[i], std::clamp(0.03 * s, -0.02, 0.02));
    }
  }
}

TEST(Pgd, LossNonDecreasingForSmallSteps) {
  const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
  const auto data = tu::motif_dataset(33, 20);
  PgdParams p;
  p.steps = 10;
  p.alpha = 0.002;
  p.epsilon = 0.05;
  p.early_stop = false;
  for (const auto& ex : data.examples) {
    const auto out = attack_pgd(model, ex, AttackConfig{}, p);
    if (out.pred_before != ex.label) continue;
    const auto& tr = out.embedding->loss_trace;
    ASSERT_EQ(tr.size(), 10u);
    int violations = 0;
    for (std::size_t t = 1; t < tr.size(); ++t) violations += tr[t] < tr[t - 1] - 1e-12;
    EXPECT_LE(violations, 1);
  }
}

TEST(Pgd, ProjectionAndQueryAccounting) {
  const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
  const auto data = tu::motif_dataset(34, 30);
  for (PgdNorm norm : {PgdNorm::Linf, PgdNorm::L2}) {
    PgdParams p;
    p.norm = norm;
    p.random_start = true;
    p.epsilon = norm == PgdNorm::Linf ? 0.2 : 1.5;
    p.alpha = p.epsilon / 4;
    for (const auto& ex : data.examples) {
      AttackConfig cfg;
      cfg.max_queries = 7;
      const std::uint64_t before = model.queries();
      const auto out = attack_pgd(model, ex, cfg, p);
      EXPECT_EQ(model.queries() - before, out.queries);
      EXPECT_LE(out.queries, 7u);
      const Matrix& d = out.embedding->delta;
      if (norm == PgdNorm::Linf) {
        EXPECT_LE(d.cwiseAbs().maxCoeff(), p.epsilon + 1e-15);
      } else {
        EXPECT_LE(d.norm(), p.epsilon + 1e-12);
      }
      const Matrix x = model.embed(ex.sequence) + d;
      EXPECT_EQ(out.success, argmax(model.classify_from_embeddings(x)) != ex.label);
      EXPECT_LE(out.token_hamming, out.budget);
      if (out.pred_before == ex.label && out.queries < cfg.max_queries) EXPECT_TRUE(out.rounded_pred.has_value());
    }
  }
}

TEST(Pgd, TargetedReachesTarget) {
  const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
  const auto data = tu::motif_dataset(35, 40);
  PgdParams p;
  p.epsilon = 0.5;
  p.alpha = 0.1;
  int hits = 0, tried = 0;
  for (const auto& ex : data.examples) {
    AttackConfig cfg;
    cfg.mode = AttackMode::Targeted;
    cfg.target = 1 - ex.label;
    const auto out = attack_pgd(model, ex, cfg, p);
    EXPECT_EQ(out.success, out.pred_after == cfg.target);
    ++tried;
    hits += out.success;
  }
  EXPECT_GT(hits, tried / 2);
}

TEST(Pgd, KmerLogRegThroughOneHotEmbedding) {
  const auto& model = tu::motif_model(ModelKind::KmerLogReg);
  const auto data = tu::motif_dataset(36, 20);
  PgdParams p;
  p.epsilon = 0.5;
  p.alpha = 0.1;
  for (const auto& ex : data.examples) {
    const auto out = attack_pgd(model, ex, AttackConfig{}, p);
    EXPECT_LE(out.embedding->delta.cwiseAbs().maxCoeff(), 0.5);
    EXPECT_LE(out.token_hamming, out.budget);
  }
}

TEST(AutoAttack, FirstStageSuccessShortCircuits) {
  const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
  const auto data = tu::motif_dataset(41, 40);
  AutoAttackParams ap;
  ap.base.epsilon = 1.0;
  ap.base.alpha = 0.25;
  int checked = 0;
  for (const auto& ex : data.examples) {
    PgdParams first = ap.base;
    first.random_start = true;
    const auto single = attack_pgd(model, ex, AttackConfig{}, first);
    if (!single.success || single.pred_before != ex.label) continue;
    const auto out = attack_auto(model, ex, AttackConfig{}, ap);
    EXPECT_TRUE(out.success);
    // Stage one is the random-start PGD run itself.
    EXPECT_EQ(out.queries, single.queries);
    EXPECT_EQ(out.adversarial, single.adversarial);
    EXPECT_EQ(out.embedding->loss_trace.size(), single.embedding->loss_trace.size());
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

TEST(AutoAttack, AllStagesFailFallsBack) {
  const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
  const auto data = tu::motif_dataset(42, 10);
  AutoAttackParams ap;
  ap.base.epsilon = 1e-6;
  ap.base.alpha = 1e-7;
  for (const auto& ex : data.examples) {
    const auto out = attack_auto(model, ex, AttackConfig{}, ap);
    if (out.pred_before != ex.label) continue;
    EXPECT_FALSE(out.success);
    EXPECT_EQ(out.pred_after, ex.label);
    // 1 clean + three stages (10 + 20 + 10 steps, each + final) + rounding.
    EXPECT_EQ(out.queries, 1u + 11u + 21u + 11u + 1u);
  }
}

TEST(AutoAttack, DominatesSinglePgd) {
  const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
  const auto data = tu::motif_dataset(43, 150);
  AutoAttackParams ap;
  ap.base.epsilon = 0.1;
  ap.base.alpha = 0.025;
  PgdParams single = ap.base;
  single.random_start = true;
  int s = 0, a = 0;
  for (const auto& ex : data.examples) {
    const auto one = attack_pgd(model, ex, AttackConfig{}, single);
    const auto all = attack_auto(model, ex, AttackConfig{}, ap);
    s += one.success;
    a += all.success;
    if (one.success) EXPECT_TRUE(all.success);
  }
  EXPECT_GE(a, s);
}

TEST(Universal, ZeroBoundFoolsOnlyMisclassified) {
  const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
  const auto data = tu::motif_dataset(51, 200);
  UniversalParams p;
  p.bound = 0.0;
  const auto up = fit_universal(model, data, p);
  EXPECT_NEAR(up.fooling_rate, 1.0 - model_accuracy(model, data), 1e-12);
  EXPECT_EQ(up.linf_norm(), 0.0);
}

TEST(Universal, BoundHoldsAndGenerousBoundFools) {
  const auto& model = tu::motif_model(ModelKind::EmbeddingMlp);
  // The perturbation is class-wise: fit on the motif-bearing class.
  Dataset data;
  for (const auto& ex : tu::motif_dataset(52, 400).examples) {
    if (ex.label == 1) data.examples.push_back(ex);
  }
  for (bool pooled : {true, false}) {
    UniversalParams p;
    p.bound = 0.5;
    p.alpha = 0.1;
    p.pooled = pooled;
    const auto up = fit_universal(model, data, p);
    EXPECT_LE(up.linf_norm(), p.bound);
    EXPECT_GE(up.fooling_rate, 0.5) << (pooled ? "pooled" : "per-position");
    const auto out = apply_universal(model, up, data.examples[0], AttackConfig{});
    EXPECT_EQ(out.success,
              argmax(model.classify_from_embeddings(model.embed(data.examples[0].sequence) +
                                                    universal_delta_for(up, out.embedding->delta.rows()))) !=
                  data.examples[0].label);
  }
}

// ---- FIMBA ---------------------------------------------------------------

namespace {

TargetPool motif_pool(const KmerLogReg& model) {
  std::vector<DnaSequence> seqs;
  for (const auto& e : tu::motif_dataset(1).examples) seqs.push_back(e.sequence);
  return build_target_pool(model, seqs);
}

}  // namespace

TEST(Fimba, NeedsFeatureView) {
  const auto& mlp = tu::motif_model(ModelKind::EmbeddingMlp);
  const Example ex{DnaSequence::parse("ACGTACGTACGT"), 0};
  try {
    attack_fimba(mlp, ex, TargetPool{}, AttackConfig{}, FimbaParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoFeatureView);
  }
}

TEST(Fimba, EmptyPool) {
  const auto& model = dynamic_cast<const KmerLogReg&>(tu::motif_model(ModelKind::KmerLogReg));
  const auto data = tu::motif_dataset(61, 30);
  for (const auto& ex : data.examples) {
    if (predicted(model, ex.sequence) != ex.label) continue;
    try {
      attack_fimba(model, ex, TargetPool{}, AttackConfig{}, FimbaParams{});
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::EmptyTargetPool);
    }
    break;
  }
}

TEST(Fimba, ZeroAlphaIsIdentity) {
  const auto& model = dynamic_cast<const KmerLogReg&>(tu::motif_model(ModelKind::KmerLogReg));
  const TargetPool pool = motif_pool(model);
  const auto data = tu::motif_dataset(62, 20);
  FimbaParams p;
  p.alphas = {0.0};
  for (const auto& ex : data.examples) {
    const auto out = attack_fimba(model, ex, pool, AttackConfig{}, p);
    EXPECT_EQ(out.adversarial, ex.sequence);
    EXPECT_EQ(out.success, out.pred_before != ex.label);
  }
}

TEST(Fimba, FullInterpolationReachesTarget) {
  const auto& model = dynamic_cast<const KmerLogReg&>(tu::motif_model(ModelKind::KmerLogReg));
  const auto data = tu::motif_dataset(63, 2);
  const Vector x = model.features_of(data.examples[0].sequence);
  const Vector t = model.features_of(data.examples[1].sequence);
  std::vector<std::size_t> all(static_cast<std::size_t>(x.size()));
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Vector u = interpolate_features(x, t, all, 1.0);
  EXPECT_EQ(u, t);
  const Vector none = interpolate_features(x, t, all, 0.0);
  EXPECT_EQ(none, x);
  const std::vector<Vector> batch{u, t};
  const auto p = model.predict_features(batch);
  EXPECT_EQ(p[0], p[1]);
}

TEST(Fimba, RepairMovesCountsTowardTarget) {
  const auto s = DnaSequence::parse("CCCCTATACCCC");
  const auto ts = Tokenizer::kmer(2, 1).tokenize(s);
  Vector target = kmer_features(s, 2) * 11.0;
  const int ta = 3 * 4 + 0;  // "TA"
  target[ta] = 0.0;
  const auto r = repair_counts(s, target, 2, ts, s, 11, {static_cast<std::size_t>(ta)});
  EXPECT_EQ(MotifOracle::occurrences(r.str(), "TA"), 0u);
  EXPECT_THROW(repair_counts(s, kmer_features(s, 2) * 11.0, 2, ts, s, 11), Error);
}

TEST(Fimba, MotifCampaignFloor) {
  const auto& model = dynamic_cast<const KmerLogReg&>(tu::motif_model(ModelKind::KmerLogReg));
  const TargetPool pool = motif_pool(model);
  const auto data = tu::motif_dataset(64, 200);
  int correct = 0, success = 0;
  for (const auto& ex : data.examples) {
    if (predicted(model, ex.sequence) != ex.label) continue;
    ++correct;
    const std::uint64_t before = model.queries();
    try {
      const auto out = attack_fimba(model, ex, pool, AttackConfig{}, FimbaParams{});
      EXPECT_EQ(model.queries() - before, out.queries);
      EXPECT_LE(out.queries, AttackConfig{}.max_queries);
      EXPECT_LE(out.token_hamming, out.budget);
      EXPECT_EQ(out.success, predicted(model, out.adversarial) != ex.label);
      success += out.success;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::RepairFailed);
      // The lenient form reports the same input as an unmodified failure.
      FimbaParams lenient;
      lenient.strict_repair = false;
      const auto out = attack_fimba(model, ex, pool, AttackConfig{}, lenient);
      EXPECT_FALSE(out.success);
      EXPECT_EQ(out.adversarial, ex.sequence);
    }
  }
  EXPECT_GE(success, 0.3 * correct);
}

TEST(Fimba, ExactModeTooManyFeatures) {
  const auto& model = dynamic_cast<const KmerLogReg&>(tu::motif_model(ModelKind::KmerLogReg));
  const TargetPool pool = motif_pool(model);
  const auto data = tu::motif_dataset(65, 10);
  FimbaParams p;
  p.shapley_mode = ShapleyMode::Exact;
  for (const auto& ex : data.examples) {
    if (predicted(model, ex.sequence) != ex.label) continue;
    try {
      attack_fimba(model, ex, pool, AttackConfig{}, p);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::TooManyFeaturesForExact);
    }
    break;
  }
}
