#pragma once

#include <vector>

#include "vguard/common.hpp"

namespace vguard {

// Mono audio at a fixed corpus-wide rate, samples in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;

  size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Fixed-length policy: keep the first round(target * rate) samples
// (preserves the utterance onset), zero-pad short inputs at the end.
Waveform normalize_duration(const Waveform& w, double target_seconds);

double rms(const Waveform& w);

void clip_in_place(Waveform& w, double lo = -1.0, double hi = 1.0);

}  // namespace vguard
