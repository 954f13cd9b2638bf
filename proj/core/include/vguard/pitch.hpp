#pragma once

#include <vector>

#include "vguard/waveform.hpp"

namespace vguard {

struct PitchParams {
  double fmin_hz = 50.0;
  double fmax_hz = 500.0;
  double voicing_threshold = 0.3;  // on the normalized autocorrelation peak
  size_t frame_len = 1024;
  size_t hop = 512;
  double silence_floor = 1e-8;  // mean-square frame energy below this is silence
};

struct PitchTrack {
  double f0_hz = 0.0;       // mean of voiced frames; 0 when nothing is voiced
  double variance = 0.0;    // population variance over voiced frames (Hz^2)
  bool voiced = false;      // "no pitch" flag is !voiced
  std::vector<double> frame_hz;      // 0 for unvoiced frames
  std::vector<bool> frame_voiced;
};

// Frame-wise normalized autocorrelation with parabolic peak refinement.
// Among lags within 5% of the best peak the smallest is taken, which keeps
// harmonic stacks from collapsing an octave down.
PitchTrack estimate_pitch(const Waveform& w, const PitchParams& params = {});

}  // namespace vguard
