#include "dnaadv/shapley.hpp"

#include <bit>
#include <cmath>
#include <numeric>

#include "dnaadv/error.hpp"

namespace dnaadv {

ShapleyResult shapley_exact(std::size_t d, const CoalitionValues& v) {
  if (d > kMaxExactShapleyFeatures) {
    throw Error(ErrorKind::TooManyFeaturesForExact, std::to_string(d) + " features (limit 12)");
  }
  const std::size_t n = std::size_t{1} << d;
  std::vector<Coalition> all(n, Coalition(d, false));
  for (std::size_t mask = 0; mask < n; ++mask) {
    for (std::size_t i = 0; i < d; ++i) all[mask][i] = (mask >> i) & 1U;
  }
  const std::vector<double> value = v(all);
  if (value.size() != n) throw Error(ErrorKind::ShapeMismatch, "value function returned wrong batch size");

  // weight(s) = s! (d - s - 1)! / d!
  std::vector<double> weight(d, 0.0);
  for (std::size_t s = 0; s < d; ++s) {
    weight[s] = std::exp(std::lgamma(static_cast<double>(s + 1)) + std::lgamma(static_cast<double>(d - s)) -
                         std::lgamma(static_cast<double>(d + 1)));
  }
  ShapleyResult out;
  out.values.assign(d, 0.0);
  out.std_errors.assign(d, 0.0);
  out.evaluations = n;
  for (std::size_t mask = 0; mask < n; ++mask) {
    const auto size = static_cast<std::size_t>(std::popcount(mask));
    for (std::size_t i = 0; i < d; ++i) {
      if ((mask >> i) & 1U) continue;
      out.values[i] += weight[size] * (value[mask | (std::size_t{1} << i)] - value[mask]);
    }
  }
  return out;
}

ShapleyResult shapley_sampled(std::size_t d, const CoalitionValues& v, std::size_t permutations, Rng& rng) {
  if (permutations == 0) throw Error(ErrorKind::InvalidConfig, "need at least one permutation");
  ShapleyResult out;
  out.values.assign(d, 0.0);
  out.std_errors.assign(d, 0.0);
  if (d == 0) return out;
  std::vector<double> sum_sq(d, 0.0);
  std::vector<std::size_t> order(d);
  for (std::size_t p = 0; p < permutations; ++p) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<Coalition> chain;
    chain.reserve(d + 1);
    Coalition c(d, false);
    chain.push_back(c);
    for (std::size_t i : order) {
      c[i] = true;
      chain.push_back(c);
    }
    const std::vector<double> value = v(chain);
    if (value.size() != d + 1) throw Error(ErrorKind::ShapeMismatch, "value function returned wrong batch size");
    out.evaluations += d + 1;
    for (std::size_t j = 0; j < d; ++j) {
      const double m = value[j + 1] - value[j];
      out.values[order[j]] += m;
      sum_sq[order[j]] += m * m;
    }
  }
  const double n = static_cast<double>(permutations);
  for (std::size_t i = 0; i < d; ++i) {
    const double mean = out.values[i] / n;
    out.values[i] = mean;
    if (permutations > 1) {
      const double var = std::max(0.0, (sum_sq[i] - n * mean * mean) / (n - 1.0));
      out.std_errors[i] = std::sqrt(var / n);
    }
  }
  return out;
}

CoalitionValues feature_game(const FeatureOracle& model, const Vector& x, const Vector& baseline, int label,
                             const std::vector<std::size_t>& features) {
  return [&model, x, baseline, label, features](const std::vector<Coalition>& batch) {
    std::vector<Vector> inputs;
    inputs.reserve(batch.size());
    for (const auto& c : batch) {
      Vector u = x;
      for (std::size_t j = 0; j < features.size(); ++j) {
        if (!c[j]) u[static_cast<Eigen::Index>(features[j])] = baseline[static_cast<Eigen::Index>(features[j])];
      }
      inputs.push_back(std::move(u));
    }
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto& p : model.predict_features(inputs)) out.push_back(p[static_cast<std::size_t>(label)]);
    return out;
  };
}

}  // namespace dnaadv
