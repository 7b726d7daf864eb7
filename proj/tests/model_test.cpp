#include <cmath>

#include <gtest/gtest.h>

#include "dnaadv/datagen.hpp"
#include "dnaadv/embedding_mlp.hpp"
#include "dnaadv/error.hpp"
#include "dnaadv/kmer_logreg.hpp"
#include "dnaadv/trainer.hpp"
#include "test_util.hpp"

namespace dnaadv {
namespace {

// Central finite differences of the loss w.r.t. every embedding entry.
Matrix numeric_embedding_grad(const GradOracle& m, Matrix x, int label, double h = 1e-5) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double orig = x(i, j);
      x(i, j) = orig + h;
      const double up = m.loss_and_grad(x, label).loss;
      x(i, j) = orig - h;
      const double down = m.loss_and_grad(x, label).loss;
      x(i, j) = orig;
      g(i, j) = (up - down) / (2 * h);
    }
  }
  return g;
}

double relative_error(const Matrix& a, const Matrix& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-12});
  return (a - b).norm() / scale;
}

TEST(EmbeddingMlp, ZeroOutputWeightsGiveUniform) {
  EmbeddingMlp m(Tokenizer::character(), 4, 5, 2);
  m.initialize(1);
  const auto l = m.layout();
  std::fill(m.params().begin() + static_cast<long>(l.w2), m.params().begin() + static_cast<long>(l.aux), 0.0);
  const auto p = m.predict_one(validate_sequence("ACGTTT"));
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(ProbOracle, PureAndCountsQueries) {
  auto m = make_model(ModelSpec{}, 256, 3);
  const auto s = validate_sequence("ACGTACGTACGT");
  EXPECT_EQ(m->predict_one(s), m->predict_one(s));
  const std::uint64_t before = m->queries();
  std::vector<DnaSequence> batch{s, s, s};
  const auto out = m->predict(batch);
  EXPECT_EQ(m->queries() - before, 3u);
  for (const auto& p : out) {
    double sum = 0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
}

TEST(LossAndGrad, ShapeMismatch) {
  auto m = make_model(ModelSpec{}, 256, 3);
  try {
    m->loss_and_grad(Matrix::Zero(4, 3), 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

TEST(LossAndGrad, VanishesAtConfidentCorrectPrediction) {
  KmerLogReg m(2, 2);
  // Weight only the AA feature toward class 1.
  m.params()[16 + 0] = 50.0;
  const Matrix x = m.embed(validate_sequence("AAAAAA"));
  const auto lg = m.loss_and_grad(x, 1);
  EXPECT_LT(lg.loss, 1e-12);
  EXPECT_LT(lg.grad.norm(), 1e-12);
}

TEST(GradientCheck, EmbeddingMlpMatchesFiniteDifferences) {
  Rng rng(99);
  EmbeddingMlp m(Tokenizer::kmer(2, 1), 6, 7, 3);
  m.initialize(5);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng.below(8));
    Matrix x(rows, 6);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const int label = static_cast<int>(rng.below(3));
    const auto analytic = m.loss_and_grad(x, label).grad;
    ASSERT_LT(relative_error(analytic, numeric_embedding_grad(m, x, label)), 1e-4) << "case " << t;
  }
}

TEST(GradientCheck, KmerLogRegMatchesFiniteDifferences) {
  Rng rng(17);
  auto m = make_model(ModelSpec{ModelKind::KmerLogReg, 2, 2}, 256, 8);
  for (double& w : m->params()) w = rng.normal();
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng.below(6));
    Matrix x(rows, 16);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
    const int label = static_cast<int>(rng.below(2));
    ASSERT_LT(relative_error(m->loss_and_grad(x, label).grad, numeric_embedding_grad(*m, x, label)), 1e-4);
  }
}

// Parameter gradients from backward() against finite differences of the
// same loss, including the perturbation and anomaly-head paths.
void check_param_grad(TrainableModel& m, const DnaSequence& s, int label, bool with_delta, bool aux) {
  Rng rng(4);
  if (aux) m.enable_aux_head();
  for (double& w : m.params()) w += 0.1 * rng.normal();
  const auto ts = m.tokenizer().tokenize(s);
  Matrix delta = Matrix::Zero(static_cast<Eigen::Index>(ts.size()), static_cast<Eigen::Index>(m.embedding_dim()));
  if (with_delta) {
    for (Eigen::Index i = 0; i < delta.size(); ++i) delta.data()[i] = 0.3 * rng.normal();
  }
  const AuxTarget target{1.0, 0.7};
  auto objective = [&](const TrainableModel& mm) {
    std::vector<double> scratch(mm.params().size(), 0.0);
    const auto r = mm.backward(ts, with_delta ? &delta : nullptr, label, 1.0, scratch, aux ? &target : nullptr);
    double total = r.loss;
    if (aux) {
      // Recompute the auxiliary BCE through the public probability hook
      // only when no delta is applied (aux_probability sees clean input).
      const double q = mm.aux_probability(s);
      total += target.weight * -(target.target * std::log(q) + (1 - target.target) * std::log(1 - q));
    }
    return total;
  };
  std::vector<double> grad(m.params().size(), 0.0);
  m.backward(ts, with_delta ? &delta : nullptr, label, 1.0, grad, aux ? &target : nullptr);
  Rng pick(9);
  for (int n = 0; n < 60; ++n) {
    const std::size_t i = pick.below(m.params().size());
    const double orig = m.params()[i];
    const double h = 1e-5;
    m.params()[i] = orig + h;
    const double up = objective(m);
    m.params()[i] = orig - h;
    const double down = objective(m);
    m.params()[i] = orig;
    const double numeric = (up - down) / (2 * h);
    ASSERT_NEAR(grad[i], numeric, 1e-6 + 1e-4 * std::abs(numeric)) << "param " << i;
  }
}

TEST(GradientCheck, ParameterGradients) {
  const auto s = validate_sequence("ACGTTGCAACGTAGGA");
  {
    EmbeddingMlp m(Tokenizer::kmer(3, 1), 5, 6, 2);
    m.initialize(1);
    check_param_grad(m, s, 1, false, false);
  }
  {
    EmbeddingMlp m(Tokenizer::kmer(3, 1), 5, 6, 2);
    m.initialize(2);
    check_param_grad(m, s, 0, true, false);
  }
  {
    EmbeddingMlp m(Tokenizer::character(), 5, 6, 2);
    m.initialize(3);
    check_param_grad(m, s, 1, false, true);
  }
  {
    KmerLogReg m(2, 2);
    check_param_grad(m, s, 1, true, false);
  }
  {
    KmerLogReg m(2, 2);
    check_param_grad(m, s, 0, false, true);
  }
}

Dataset separable_dataset(std::uint64_t seed, std::size_t n = 200) {
  MotifSpec spec;
  spec.motif = "TATA";
  spec.count = n;
  spec.length = 64;
  spec.seed = seed;
  return generate_motif_dataset(spec);
}

TEST(Train, SeparableKmerDatasetDeskRecipe) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto data = separable_dataset(seed);
    TrainConfig cfg = TrainConfig::desk_scale();
    cfg.seed = seed;
    const auto r = train(ModelSpec{}, data, cfg);
    EXPECT_GE(r.train_accuracy, 0.99) << "seed " << seed;
  }
}

TEST(Train, SeparableKmerDatasetLogRegDeskRecipe) {
  const auto data = separable_dataset(1);
  ModelSpec spec;
  spec.kind = ModelKind::KmerLogReg;
  const TrainConfig cfg = TrainConfig::desk_scale(ModelKind::KmerLogReg);
  const auto r = train(spec, data, cfg);
  EXPECT_GE(r.train_accuracy, 0.99);
}

TEST(Train, ZeroEpochsLeavesInitialization) {
  const auto data = separable_dataset(2);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 3;
  const auto r = train(ModelSpec{}, data, cfg);
  EXPECT_EQ(r.model->params(), make_model(ModelSpec{}, 256, 3)->params());
  EXPECT_NEAR(r.train_accuracy, 0.5, 0.15);
}

TEST(Train, LabelOutOfRange) {
  auto data = separable_dataset(2, 10);
  data.examples[3].label = 2;
  try {
    train(ModelSpec{}, data, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LabelOutOfRange);
  }
  Dataset empty;
  try {
    train(ModelSpec{}, empty, TrainConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyDataset);
  }
}

TEST(Train, DeterministicGivenSeed) {
  const auto data = separable_dataset(4);
  TrainConfig cfg;
  cfg.seed = 12;
  cfg.epochs = 2;
  cfg.learning_rate = 1e-2;
  const auto a = train(ModelSpec{}, data, cfg);
  const auto b = train(ModelSpec{}, data, cfg);
  EXPECT_EQ(a.model->params(), b.model->params());
}

TEST(Trainer, WarmupIsLinearThenConstant) {
  KmerLogReg m(1, 2);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch_size = 10;
  cfg.warmup_ratio = 0.05;
  cfg.learning_rate = 1.0;
  Trainer t(m, cfg, 200);  // 20 batches/epoch -> 200 steps, 10 warmup
  EXPECT_EQ(t.total_steps(), 200u);
  EXPECT_EQ(t.warmup_steps(), 10u);
  EXPECT_DOUBLE_EQ(t.learning_rate_at(1), 0.1);
  EXPECT_DOUBLE_EQ(t.learning_rate_at(10), 1.0);
  EXPECT_DOUBLE_EQ(t.learning_rate_at(150), 1.0);
}

TEST(AdamW, FirstStepMovesBySignedLearningRate) {
  AdamW opt(2);
  std::vector<double> p{1.0, -1.0};
  const std::vector<double> g{0.5, -2.0};
  opt.step(p, g, 0.1, 0.0);
  EXPECT_NEAR(p[0], 0.9, 1e-6);
  EXPECT_NEAR(p[1], -0.9, 1e-6);
  std::vector<double> q{2.0};
  AdamW decay(1);
  decay.step(q, std::vector<double>{0.0}, 0.1, 0.5);
  EXPECT_DOUBLE_EQ(q[0], 2.0 * (1 - 0.05));
}

}  // namespace
}  // namespace dnaadv
