#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "dnaadv/model.hpp"
#include "dnaadv/random.hpp"

namespace dnaadv {

inline constexpr std::size_t kMaxExactShapleyFeatures = 12;

using Coalition = std::vector<bool>;
/// Evaluates the game on a batch of coalitions.
using CoalitionValues = std::function<std::vector<double>(const std::vector<Coalition>&)>;

struct ShapleyResult {
  std::vector<double> values;
  /// Standard errors of sampled estimates; zero in exact mode.
  std::vector<double> std_errors;
  std::size_t evaluations = 0;
};

/// Enumerates all 2^d coalitions. Throws TooManyFeaturesForExact for d > 12.
ShapleyResult shapley_exact(std::size_t d, const CoalitionValues& v);

/// Mean marginal contribution over `permutations` random orderings.
ShapleyResult shapley_sampled(std::size_t d, const CoalitionValues& v, std::size_t permutations, Rng& rng);

/// v(S) = p_label of x with the features outside S set to the baseline,
/// restricted to the features listed in `features` (all others fixed at x).
CoalitionValues feature_game(const FeatureOracle& model, const Vector& x, const Vector& baseline, int label,
                             const std::vector<std::size_t>& features);

}  // namespace dnaadv
