#include "dnaadv/datagen.hpp"

#include <cctype>
#include <cmath>

#include "dnaadv/error.hpp"
#include "dnaadv/random.hpp"

namespace dnaadv {

namespace {

std::string random_background(Rng& rng, std::size_t length) {
  std::string s(length, 'A');
  for (char& c : s) c = kNucleotides[rng.below(4)];
  return s;
}

}  // namespace

Dataset generate_motif_dataset(const MotifSpec& spec) {
  if (spec.motif.empty()) throw Error(ErrorKind::InvalidMotif, "empty motif");
  std::string motif;
  for (char c : spec.motif) {
    const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (nucleotide_index(u) < 0) throw Error(ErrorKind::InvalidMotif, "motif holds '" + std::string(1, c) + "'");
    motif += u;
  }
  if (motif.size() > spec.length) throw Error(ErrorKind::InvalidMotif, "motif longer than sequence length");
  if (spec.count == 0) throw Error(ErrorKind::InvalidConfig, "count must be >= 1");
  if (!(spec.positive_fraction >= 0.0 && spec.positive_fraction <= 1.0)) {
    throw Error(ErrorKind::InvalidConfig, "positive_fraction in [0,1]");
  }
  if (!(spec.noise_rate >= 0.0 && spec.noise_rate <= 1.0)) throw Error(ErrorKind::InvalidConfig, "noise_rate in [0,1]");

  Rng rng(spec.seed);
  const auto positives = static_cast<std::size_t>(std::llround(spec.positive_fraction * static_cast<double>(spec.count)));
  Dataset data;
  data.id = "motif-" + motif + "-" + std::to_string(spec.length) + "-" + std::to_string(spec.count) + "-s" +
            std::to_string(spec.seed);
  data.num_classes = 2;
  data.examples.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const bool positive = i < positives;
    std::string s;
    if (positive) {
      s = random_background(rng, spec.length);
      const std::size_t at = rng.below(spec.length - motif.size() + 1);
      s.replace(at, motif.size(), motif);
    } else {
      // A run of rejections this long means the motif is near-unavoidable.
      std::size_t attempts = 0;
      do {
        if (++attempts > 100000) throw Error(ErrorKind::InvalidMotif, "cannot sample motif-free negatives");
        s = random_background(rng, spec.length);
      } while (s.find(motif) != std::string::npos);
    }
    data.examples.push_back({DnaSequence::parse(s), positive ? 1 : 0});
  }
  rng.shuffle(std::span<Example>(data.examples));
  if (spec.noise_rate > 0.0) {
    for (auto& ex : data.examples) {
      if (rng.uniform() < spec.noise_rate) ex.label = 1 - ex.label;
    }
  }
  return data;
}

}  // namespace dnaadv
