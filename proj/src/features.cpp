#include "stylecast/features.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace stylecast {

namespace {

void check_durations(const std::vector<int>& durations, int frames, const char* where) {
  if (durations.empty()) throw std::invalid_argument(std::string(where) + ": empty durations");
  long sum = 0;
  for (int d : durations) {
    if (d < 1) throw std::invalid_argument(std::string(where) + ": durations must be >= 1");
    sum += d;
  }
  if (sum != frames) {
    throw std::invalid_argument(std::string(where) + ": durations sum " + std::to_string(sum) +
                                " != frame count " + std::to_string(frames));
  }
}

}  // namespace

Tensor regularize_to_phonemes(const Tensor& frames, const std::vector<int>& durations) {
  check_durations(durations, frames.rows, "regularize_to_phonemes");
  const int P = static_cast<int>(durations.size());
  Tensor out(P, frames.cols);
  int r = 0;
  for (int p = 0; p < P; ++p) {
    for (int c = 0; c < frames.cols; ++c) {
      double acc = 0.0;
      for (int k = 0; k < durations[p]; ++k) acc += frames.at(r + k, c);
      out.at(p, c) = static_cast<float>(acc / durations[p]);
    }
    r += durations[p];
  }
  return out;
}

Tensor phoneme_acoustics(const Tensor& f0, const Tensor& energy,
                         const std::vector<int>& durations) {
  if (f0.cols != 1 || energy.cols != 1 || f0.rows != energy.rows) {
    throw std::invalid_argument("phoneme_acoustics: f0/energy must be equal-length column vectors");
  }
  check_durations(durations, f0.rows, "phoneme_acoustics");
  for (float e : energy.data) {
    if (e < 0.0f) throw std::invalid_argument("phoneme_acoustics: negative energy input");
  }

  const int P = static_cast<int>(durations.size());
  Tensor out(P, 2);
  int r = 0;
  for (int p = 0; p < P; ++p) {
    double f0_sum = 0.0;
    int voiced = 0;
    double e_sum = 0.0;
    for (int k = 0; k < durations[p]; ++k) {
      const float f = f0.at(r + k, 0);
      if (f > 0.0f) {
        f0_sum += f;
        ++voiced;
      }
      e_sum += energy.at(r + k, 0);
    }
    out.at(p, 0) = voiced > 0 ? static_cast<float>(std::log(f0_sum / voiced)) : 0.0f;
    out.at(p, 1) = static_cast<float>(e_sum / durations[p]);
    r += durations[p];
  }
  return out;
}

Tensor FeatureStats::apply(const Tensor& acoustics) const {
  if (acoustics.cols != 2) throw std::invalid_argument("FeatureStats: expected [P x 2] acoustics");
  if (identity) return acoustics;
  Tensor out = acoustics;
  for (int p = 0; p < out.rows; ++p) {
    out.at(p, 0) = (out.at(p, 0) - logf0_mean) / logf0_std;
    out.at(p, 1) = (out.at(p, 1) - energy_mean) / energy_std;
  }
  return out;
}

}  // namespace stylecast
