#pragma once

#include <complex>
#include <string>
#include <vector>

#include "vguard/waveform.hpp"

namespace vguard {

enum class WindowType { Hann, Hamming, Rect };

std::string window_name(WindowType w);
WindowType window_from_name(const std::string& name);
std::vector<double> window_taper(WindowType w, size_t n);

struct StftParams {
  size_t window_len = 1024;
  size_t hop = 512;
  WindowType window = WindowType::Hann;

  // Enforces 0 < hop <= window_len, power-of-two window and the
  // constant-overlap-add property that makes inversion exact.
  void validate() const;
  bool operator==(const StftParams&) const = default;
};

// Maximum relative deviation of the overlapped window sum from its mean over
// the fully overlapped interior; ~0 for COLA-compliant pairs.
double cola_deviation(const StftParams& p);

struct ComplexSpectrogram {
  size_t num_bins = 0;    // window_len/2 + 1
  size_t num_frames = 0;  // 1 + floor((len - window_len)/hop)
  double bin_hz = 0.0;
  double frame_seconds = 0.0;  // hop / sample_rate
  int sample_rate = 0;
  StftParams params;
  std::vector<std::complex<double>> grid;  // frame-major: grid[t*num_bins + f]

  std::complex<double>& at(size_t f, size_t t) { return grid[t * num_bins + f]; }
  const std::complex<double>& at(size_t f, size_t t) const { return grid[t * num_bins + f]; }
  double bin_center_hz(size_t f) const { return static_cast<double>(f) * bin_hz; }
  // Sample length covered by the frame grid.
  size_t covered_samples() const {
    return num_frames == 0 ? 0 : (num_frames - 1) * params.hop + params.window_len;
  }
};

ComplexSpectrogram stft(const Waveform& w, const StftParams& params);

// Window-normalized overlap-add.  Exact (up to FFT round-off) wherever frames
// cover the signal; the synthesis is linear in the grid, so adding two grids
// and inverting equals inverting each and summing.  output_len == 0 returns
// the covered length; otherwise the result is truncated/zero-padded.
Waveform istft(const ComplexSpectrogram& spec, const StftParams& params, size_t output_len = 0);

// Per-frame sum of |bin| over bins whose center frequency lies in
// [lo_hz, hi_hz] (inclusive).  A band containing no bin is an error.
std::vector<double> band_energy_series(const ComplexSpectrogram& spec, double lo_hz, double hi_hz);

}  // namespace vguard
