#pragma once

#include <vector>

#include "stylecast/tensor.hpp"

namespace stylecast {

// Averages frame rows into one row per phoneme according to the alignment
// durations. sum(durations) must equal frames; every duration >= 1.
Tensor regularize_to_phonemes(const Tensor& frames, const std::vector<int>& durations);

// Phoneme-wise acoustic features, column 0 = logF0, column 1 = energy.
// logF0 is ln(mean of voiced frames); 0.0 sentinel when a phoneme is fully
// unvoiced. Energy is the plain frame mean. Negative energy is rejected.
Tensor phoneme_acoustics(const Tensor& f0, const Tensor& energy,
                         const std::vector<int>& durations);

// Per-corpus standardization applied to the two acoustic columns before
// they are concatenated into the intermediate features.
struct FeatureStats {
  float logf0_mean = 0.0f;
  float logf0_std = 1.0f;
  float energy_mean = 0.0f;
  float energy_std = 1.0f;
  bool identity = true;  // unset stats leave features untouched

  Tensor apply(const Tensor& acoustics) const;
};

}  // namespace stylecast
