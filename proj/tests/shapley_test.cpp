#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dnaadv/error.hpp"
#include "dnaadv/shapley.hpp"

using namespace dnaadv;

namespace {

/// Linear score w.(x_S + b_{not S}).
CoalitionValues linear_game(const std::vector<double>& w, const std::vector<double>& x, const std::vector<double>& b) {
  return [=](const std::vector<Coalition>& batch) {
    std::vector<double> out;
    for (const auto& c : batch) {
      double v = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) v += w[i] * (c[i] ? x[i] : b[i]);
      out.push_back(v);
    }
    return out;
  };
}

double full_minus_empty(const CoalitionValues& v, std::size_t d) {
  const auto r = v({Coalition(d, true), Coalition(d, false)});
  return r[0] - r[1];
}

}  // namespace

TEST(Shapley, ExactMatchesLinearClosedForm) {
  Rng rng(1);
  for (std::size_t d : {1u, 3u, 7u, 12u}) {
    std::vector<double> w(d), x(d), b(d);
    for (std::size_t i = 0; i < d; ++i) {
      w[i] = rng.normal();
      x[i] = rng.normal();
      b[i] = rng.normal();
    }
    const auto r = shapley_exact(d, linear_game(w, x, b));
    for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(r.values[i], w[i] * (x[i] - b[i]), 1e-9);
  }
}

TEST(Shapley, EfficiencyOnNonlinearGame) {
  const std::size_t d = 10;
  Rng rng(2);
  std::vector<double> w(d);
  for (auto& v : w) v = rng.normal();
  const CoalitionValues game = [&](const std::vector<Coalition>& batch) {
    std::vector<double> out;
    for (const auto& c : batch) {
      double z = 0.0;
      for (std::size_t i = 0; i < d; ++i) z += c[i] ? w[i] : 0.0;
      out.push_back(1.0 / (1.0 + std::exp(-z)) + (c[0] && c[1] ? 0.3 : 0.0));
    }
    return out;
  };
  const auto r = shapley_exact(d, game);
  const double total = std::accumulate(r.values.begin(), r.values.end(), 0.0);
  EXPECT_NEAR(total, full_minus_empty(game, d), 1e-9);
}

TEST(Shapley, SymmetricFeaturesShareValue) {
  const std::size_t d = 6;
  const CoalitionValues game = [](const std::vector<Coalition>& batch) {
    std::vector<double> out;
    for (const auto& c : batch) {
      const double n = static_cast<double>(std::count(c.begin(), c.end(), true));
      out.push_back(std::tanh(n / 3.0));
    }
    return out;
  };
  const auto r = shapley_exact(d, game);
  for (std::size_t i = 1; i < d; ++i) EXPECT_NEAR(r.values[i], r.values[0], 1e-12);
}

TEST(Shapley, ExactRejectsThirteenFeatures) {
  try {
    shapley_exact(13, linear_game(std::vector<double>(13, 1.0), std::vector<double>(13, 1.0), std::vector<double>(13, 0.0)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooManyFeaturesForExact);
  }
}

TEST(Shapley, SampledWithinThreeStandardErrors) {
  const std::size_t d = 12;
  Rng init(3);
  std::vector<double> w(d);
  for (auto& v : w) v = init.normal();
  const CoalitionValues game = [&](const std::vector<Coalition>& batch) {
    std::vector<double> out;
    for (const auto& c : batch) {
      double z = 0.0;
      for (std::size_t i = 0; i < d; ++i) z += c[i] ? w[i] : 0.0;
      out.push_back(1.0 / (1.0 + std::exp(-z)));
    }
    return out;
  };
  const auto exact = shapley_exact(d, game);
  int inside = 0, total = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(100 + static_cast<std::uint64_t>(trial));
    const auto est = shapley_sampled(d, game, 200, rng);
    for (std::size_t i = 0; i < d; ++i) {
      ++total;
      inside += std::abs(est.values[i] - exact.values[i]) <= 3.0 * est.std_errors[i] + 1e-12;
    }
  }
  // Three standard errors cover ~99.7% of estimates under normality.
  EXPECT_GE(static_cast<double>(inside) / total, 0.97);
}
