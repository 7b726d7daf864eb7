#pragma once

#include <cstdint>
#include <string>

#include "dnaadv/sequence.hpp"

namespace dnaadv {

/// Synthetic motif-presence task: label 1 sequences carry the motif at a
/// uniform random offset, label 0 sequences are rejection-sampled to not
/// contain it anywhere.
struct MotifSpec {
  std::string motif = "TATA";
  std::size_t count = 1000;
  std::size_t length = 64;
  double positive_fraction = 0.5;
  /// Probability of flipping a label after construction.
  double noise_rate = 0.0;
  std::uint64_t seed = 0;
};

Dataset generate_motif_dataset(const MotifSpec& spec);

}  // namespace dnaadv
