#include <gtest/gtest.h>

#include <map>
#include <set>

#include "dnaadv/defense.hpp"
#include "dnaadv/error.hpp"
#include "test_util.hpp"

using namespace dnaadv;
namespace tu = dnaadv::testing;

namespace {

Dataset small_motif(std::uint64_t seed, std::size_t n = 200) { return tu::motif_dataset(seed, n); }

TrainConfig quick(ModelKind kind = ModelKind::EmbeddingMlp, std::uint64_t seed = 3) {
  TrainConfig c = TrainConfig::desk_scale(kind);
  c.epochs = 3;
  c.seed = seed;
  return c;
}

AttackOutcome never_succeeds(const ProbOracle& m, const Example& ex, std::uint64_t) {
  AttackOutcome o;
  o.original = ex.sequence;
  o.adversarial = ex.sequence;
  o.success = false;
  (void)m;
  return o;
}

AttackOutcome textfooler_fn(const ProbOracle& m, const Example& ex, std::uint64_t seed) {
  AttackConfig c;
  c.seed = seed;
  return attack_textfooler(m, ex, c);
}

}  // namespace

TEST(FrequencyTable, SingleSequence) {
  const std::vector<DnaSequence> corpus{DnaSequence::parse("AAAA")};
  const auto t4 = build_frequency_table(corpus, Tokenizer::character(), 4);
  EXPECT_EQ(t4.count("A"), 4u);
  EXPECT_TRUE(t4.rare_set().empty());
  const auto t5 = build_frequency_table(corpus, Tokenizer::character(), 5);
  EXPECT_EQ(t5.rare_set(), std::vector<std::string>{"A"});
}

TEST(FrequencyTable, EmptyCorpusAllRare) {
  const auto t = build_frequency_table({}, Tokenizer::kmer(3), 1);
  EXPECT_TRUE(t.counts().empty());
  EXPECT_TRUE(t.is_rare("ACG"));
  EXPECT_TRUE(t.is_rare("TTT"));
}

TEST(FrequencyTable, MotifCorpusMatchesRecount) {
  const auto data = tu::motif_dataset(5);
  std::vector<DnaSequence> corpus;
  for (const auto& e : data.examples) corpus.push_back(e.sequence);
  auto t = build_frequency_table(corpus, Tokenizer::kmer(4), 200);
  std::map<std::string, std::uint64_t> recount;
  for (const auto& s : corpus) {
    for (std::size_t i = 0; i + 4 <= s.size(); ++i) ++recount[s.str().substr(i, 4)];
  }
  EXPECT_EQ(t.counts(), recount);
  std::vector<std::string> rare;
  for (const auto& [k, c] : recount) {
    if (c < 200) rare.push_back(k);
  }
  EXPECT_EQ(t.rare_set(), rare);
  t.set_threshold(240);
  rare.clear();
  for (const auto& [k, c] : recount) {
    if (c < 240) rare.push_back(k);
  }
  EXPECT_EQ(t.rare_set(), rare);
  EXPECT_EQ(FrequencyTable::from_json(t.to_json()).counts(), t.counts());
}

TEST(Randomize, ZeroFeaturesIsIdentity) {
  const auto s = DnaSequence::parse("ACGTTATAGC");
  const Tokenizer tok = Tokenizer::kmer(3);
  const auto table = build_frequency_table(std::vector<DnaSequence>{s}, tok, 1);
  Rng rng(1);
  EXPECT_EQ(randomize_tokens(s, tok.tokenize(s), table, 0, {}, rng), s);
}

TEST(Randomize, SingleNucleotideSynonymsFromFrequentSet) {
  const auto data = tu::motif_dataset(6, 300);
  std::vector<DnaSequence> corpus;
  for (const auto& e : data.examples) corpus.push_back(e.sequence);
  const Tokenizer tok = Tokenizer::character();
  const auto table = build_frequency_table(corpus, tok, 1);
  Rng rng(2);
  for (const auto& s : corpus) {
    const auto ts = tok.tokenize(s);
    const std::vector<std::size_t> prio{7, 3, 9};
    const auto r = randomize_tokens(s, ts, table, 2, prio, rng);
    // No rare characters: exactly the first two priority positions change.
    std::vector<std::size_t> diff;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] != r[i]) diff.push_back(i);
    }
    EXPECT_EQ(diff, (std::vector<std::size_t>{3, 7}));
  }
}

TEST(Adfar, ConstantModelVoteUnchanged) {
  // A model with all-zero weights predicts uniformly; argmax ties go to class 0.
  ModelSpec spec;
  auto model = make_model(spec, 256, 1);
  std::fill(model->params().begin(), model->params().end(), 0.0);
  const auto data = small_motif(7, 20);
  std::vector<DnaSequence> corpus;
  for (const auto& e : data.examples) corpus.push_back(e.sequence);
  AdfarOracle vote(std::shared_ptr<const TrainableModel>(model->clone()),
                   build_frequency_table(corpus, model->tokenizer(), 1), AdfarConfig{}, 9);
  for (const auto& e : data.examples) {
    EXPECT_EQ(argmax(vote.predict_one(e.sequence)), argmax(model->predict_one(e.sequence)));
  }
}

TEST(Adfar, ZeroFeaturesVoteEqualsPlainAndIsDeterministic) {
  const auto data = small_motif(8);
  AdfarConfig ad;
  ad.features = 0;
  ad.samples = 3;
  const auto r = defend_adfar(ModelSpec{}, data, ad, quick());
  const auto test = small_motif(9, 50);
  for (const auto& e : test.examples) {
    for (const auto& c : r.adfar->copies(e.sequence)) EXPECT_EQ(c, e.sequence);
    EXPECT_EQ(argmax(r.adfar->predict_one(e.sequence)), argmax(r.model->predict_one(e.sequence)));
  }
  AdfarConfig ad2;
  const auto r2 = defend_adfar(ModelSpec{}, data, ad2, quick());
  for (const auto& e : test.examples) {
    EXPECT_EQ(r2.adfar->copies(e.sequence), r2.adfar->copies(e.sequence));
    EXPECT_EQ(r2.adfar->predict_one(e.sequence), r2.adfar->predict_one(e.sequence));
  }
}

TEST(Adfar, OracleInvariantsAndCheckpoint) {
  tu::TempDir dir("adfar");
  const auto data = small_motif(10);
  const auto r = defend_adfar(ModelSpec{}, data, AdfarConfig{}, quick());
  EXPECT_TRUE(r.model->has_aux_head());
  const auto test = small_motif(11, 20);
  const std::uint64_t before = r.adfar->queries();
  for (const auto& e : test.examples) {
    const auto p = r.adfar->predict_one(e.sequence);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
  }
  EXPECT_EQ(r.adfar->queries() - before, test.size());
  save_defended(r, dir / "adfar.json");
  const DefendedOracle d = load_defended(dir / "adfar.json");
  ASSERT_TRUE(d.adfar);
  for (const auto& e : test.examples) EXPECT_EQ(d.oracle().predict_one(e.sequence), r.adfar->predict_one(e.sequence));
}

TEST(AdversarialTraining, NoAdversarialExamplesEqualsPlainTraining) {
  const auto data = small_motif(12);
  const TrainConfig cfg = quick();
  const auto plain = train(ModelSpec{}, data, cfg);
  const auto at = defend_adversarial_training(ModelSpec{}, data, AugmentationSource::on_the_fly("none", never_succeeds),
                                              cfg);
  EXPECT_EQ(at.model->params(), plain.model->params());
  for (const auto& e : at.epoch_adversarial) EXPECT_TRUE(e.empty());
}

TEST(AdversarialTraining, EmptyPoolIsSourceEmpty) {
  try {
    defend_adversarial_training(ModelSpec{}, small_motif(13), AugmentationSource::from_pool({}), quick());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SourceEmpty);
  }
  EXPECT_THROW(AugmentationSource::from_pool({Example{DnaSequence::parse("ACGT"), 0}}, 0.0).validate(), Error);
}

TEST(AdversarialTraining, OnTheFlySetsFollowTheModel) {
  const auto data = small_motif(14);
  const auto at =
      defend_adversarial_training(ModelSpec{}, data, AugmentationSource::on_the_fly("textfooler", textfooler_fn, 0.5), quick());
  ASSERT_EQ(at.epoch_adversarial.size(), 3u);
  std::set<std::string> first, second;
  for (const auto& e : at.epoch_adversarial[0]) first.insert(e.sequence.str());
  for (const auto& e : at.epoch_adversarial[1]) second.insert(e.sequence.str());
  EXPECT_FALSE(first.empty());
  EXPECT_NE(first, second);
  for (const auto& set : at.epoch_adversarial) EXPECT_LE(set.size(), 100u);
}

TEST(AdversarialTraining, PoolExamplesKeepLabels) {
  const auto data = small_motif(15);
  std::vector<Example> pool;
  for (std::size_t i = 0; i < 30; ++i) pool.push_back(data.examples[i]);
  const auto at = defend_adversarial_training(ModelSpec{}, data, AugmentationSource::from_pool(pool, 0.1), quick());
  for (const auto& set : at.epoch_adversarial) {
    EXPECT_EQ(set.size(), 20u);
    for (const auto& e : set) {
      const auto it = std::find_if(pool.begin(), pool.end(), [&](const Example& p) { return p.sequence == e.sequence; });
      ASSERT_NE(it, pool.end());
      EXPECT_EQ(it->label, e.label);
    }
  }
}

TEST(FreeLb, ReductionIsBitIdenticalToPlainTraining) {
  const auto data = small_motif(16);
  for (ModelKind kind : {ModelKind::EmbeddingMlp, ModelKind::KmerLogReg}) {
    ModelSpec spec;
    spec.kind = kind;
    FreeLbConfig fl = FreeLbConfig::desk_scale(kind);
    fl.ascent_steps = 1;
    fl.adv_lr = 0.0;
    fl.adv_magnitude = 0.0;
    const TrainConfig cfg = fl.train_config(quick(kind));
    const auto plain = train(spec, data, cfg);
    const auto free = defend_freelb(spec, data, fl, cfg);
    EXPECT_EQ(free.model->params(), plain.model->params()) << to_string(kind);
  }
}

TEST(FreeLb, PerturbationStaysInBall) {
  const auto data = small_motif(17);
  for (double mag : {0.05, 0.6, 3.0}) {
    FreeLbConfig fl = FreeLbConfig::desk_scale(ModelKind::EmbeddingMlp);
    fl.adv_magnitude = mag;
    fl.adv_lr = 10.0 * mag;
    fl.ascent_steps = 4;
    const auto r = defend_freelb(ModelSpec{}, data, fl, quick());
    EXPECT_GT(r.max_delta_norm, 0.0);
    EXPECT_LE(r.max_delta_norm, mag + 1e-12);
  }
}

TEST(FreeLb, Validation) {
  FreeLbConfig fl;
  fl.ascent_steps = 0;
  EXPECT_THROW(fl.validate(), Error);
}

TEST(Defense, CleanAccuracyGuardBand) {
  const auto data = tu::motif_dataset(18);
  const auto test = tu::motif_dataset(19, 300);
  TrainConfig cfg = TrainConfig::desk_scale(ModelKind::EmbeddingMlp);
  cfg.seed = 18;
  const double plain = model_accuracy(*train(ModelSpec{}, data, cfg).model, test);
  const auto fl = defend_freelb(ModelSpec{}, data, FreeLbConfig::desk_scale(ModelKind::EmbeddingMlp), cfg);
  EXPECT_GE(model_accuracy(fl.oracle(), test), plain - 0.10);
  const auto at =
      defend_adversarial_training(ModelSpec{}, data, AugmentationSource::on_the_fly("textfooler", textfooler_fn, 0.1), cfg);
  EXPECT_GE(model_accuracy(at.oracle(), test), plain - 0.10);
}
