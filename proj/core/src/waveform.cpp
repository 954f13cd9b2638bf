#include "vguard/waveform.hpp"

#include <algorithm>
#include <cmath>

namespace vguard {

Waveform normalize_duration(const Waveform& w, double target_seconds) {
  if (w.empty()) throw Error("normalize_duration: empty waveform");
  if (target_seconds <= 0.0) throw Error("normalize_duration: target must be positive");
  const auto target = static_cast<size_t>(std::llround(target_seconds * w.sample_rate));
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.assign(w.samples.begin(),
                     w.samples.begin() + static_cast<ptrdiff_t>(std::min(target, w.size())));
  out.samples.resize(target, 0.0);
  return out;
}

double rms(const Waveform& w) {
  if (w.empty()) return 0.0;
  double acc = 0.0;
  for (double s : w.samples) acc += s * s;
  return std::sqrt(acc / static_cast<double>(w.size()));
}

void clip_in_place(Waveform& w, double lo, double hi) {
  for (double& s : w.samples) s = std::clamp(s, lo, hi);
}

}  // namespace vguard
