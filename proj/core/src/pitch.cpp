#include "vguard/pitch.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "vguard/fft.hpp"

namespace vguard {

namespace {

struct FramePitch {
  double hz = 0.0;
  bool voiced = false;
};

FramePitch analyze_frame(std::span<const double> x, const PitchParams& p, int sample_rate) {
  const size_t n = x.size();
  double energy = 0.0;
  for (double v : x) energy += v * v;
  if (energy / static_cast<double>(n) < p.silence_floor) return {};

  const size_t lag_min = std::max<size_t>(1, static_cast<size_t>(sample_rate / p.fmax_hz));
  const size_t lag_max =
      std::min(n - 1, static_cast<size_t>(std::ceil(sample_rate / p.fmin_hz)));
  if (lag_min >= lag_max) return {};

  const auto raw = autocorrelation(x);

  // Prefix sums to normalize r(tau) by the energies of the two overlapping
  // segments: ncc(tau) = r(tau) / sqrt(e_head(tau) * e_tail(tau)).
  std::vector<double> prefix(n + 1, 0.0);
  for (size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
  auto ncc = [&](size_t tau) {
    const double head = prefix[n - tau];
    const double tail = prefix[n] - prefix[tau];
    const double denom = std::sqrt(head * tail);
    return denom > 0.0 ? raw[tau] / denom : 0.0;
  };

  double best = -1.0;
  for (size_t tau = lag_min; tau <= lag_max; ++tau) best = std::max(best, ncc(tau));
  if (best < p.voicing_threshold) return {};

  // Smallest lag whose peak is within 5% of the best, to avoid octave-down
  // picks on periodic signals where multiples of the period also correlate.
  size_t pick = 0;
  const double accept = best - 0.05 * std::abs(best);
  for (size_t tau = lag_min; tau <= lag_max; ++tau) {
    const double v = ncc(tau);
    if (v >= accept && (tau == lag_min || ncc(tau - 1) <= v) &&
        (tau == lag_max || ncc(tau + 1) <= v)) {
      pick = tau;
      break;
    }
  }
  if (pick == 0) return {};

  // Parabolic refinement around the integer peak.
  double tau_star = static_cast<double>(pick);
  if (pick > lag_min && pick < lag_max) {
    const double ym = ncc(pick - 1), y0 = ncc(pick), yp = ncc(pick + 1);
    const double denom = ym - 2.0 * y0 + yp;
    if (std::abs(denom) > 1e-30) {
      const double delta = 0.5 * (ym - yp) / denom;
      if (std::abs(delta) <= 1.0) tau_star += delta;
    }
  }
  return {static_cast<double>(sample_rate) / tau_star, true};
}

}  // namespace

PitchTrack estimate_pitch(const Waveform& w, const PitchParams& params) {
  if (params.fmin_hz <= 0.0 || params.fmax_hz <= params.fmin_hz ||
      params.fmax_hz >= 0.5 * w.sample_rate)
    throw Error("estimate_pitch: search band must lie inside (0, Nyquist)");

  PitchTrack track;
  if (w.empty()) return track;

  const size_t frame = std::min(params.frame_len, w.size());
  const size_t hop = std::max<size_t>(1, params.hop);
  const size_t num_frames = w.size() >= frame ? 1 + (w.size() - frame) / hop : 0;
  track.frame_hz.resize(num_frames, 0.0);
  track.frame_voiced.resize(num_frames, false);

  double sum = 0.0, sum_sq = 0.0;
  size_t voiced = 0;
  for (size_t t = 0; t < num_frames; ++t) {
    const auto fp = analyze_frame({w.samples.data() + t * hop, frame}, params, w.sample_rate);
    if (fp.voiced) {
      track.frame_hz[t] = fp.hz;
      track.frame_voiced[t] = true;
      sum += fp.hz;
      sum_sq += fp.hz * fp.hz;
      ++voiced;
    }
  }

  if (voiced > 0) {
    track.voiced = true;
    track.f0_hz = sum / static_cast<double>(voiced);
    track.variance =
        std::max(0.0, sum_sq / static_cast<double>(voiced) - track.f0_hz * track.f0_hz);
  }
  return track;
}

}  // namespace vguard
