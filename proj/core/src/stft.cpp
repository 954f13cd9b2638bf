#include "vguard/stft.hpp"

#include <algorithm>
#include <cmath>

#include "vguard/fft.hpp"

namespace vguard {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
// Window weights below this contribute nothing recoverable.
constexpr double kOlaFloor = 1e-12;
}  // namespace

std::string window_name(WindowType w) {
  switch (w) {
    case WindowType::Hann: return "hann";
    case WindowType::Hamming: return "hamming";
    case WindowType::Rect: return "rect";
  }
  return "hann";
}

WindowType window_from_name(const std::string& name) {
  if (name == "hann") return WindowType::Hann;
  if (name == "hamming") return WindowType::Hamming;
  if (name == "rect") return WindowType::Rect;
  throw Error("unknown window type '" + name + "' (expected hann|hamming|rect)");
}

std::vector<double> window_taper(WindowType w, size_t n) {
  std::vector<double> t(n, 1.0);
  switch (w) {
    case WindowType::Rect:
      break;
    case WindowType::Hann:
      for (size_t i = 0; i < n; ++i)
        t[i] = 0.5 - 0.5 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
      break;
    case WindowType::Hamming:
      for (size_t i = 0; i < n; ++i)
        t[i] = 0.54 - 0.46 * std::cos(kTwoPi * static_cast<double>(i) / static_cast<double>(n));
      break;
  }
  return t;
}

double cola_deviation(const StftParams& p) {
  const auto w = window_taper(p.window, p.window_len);
  // Accumulate shifted windows over enough frames to cover one interior
  // window, then inspect the fully overlapped span.
  const size_t frames = p.window_len / p.hop + 2;
  const size_t total = (frames - 1) * p.hop + p.window_len;
  std::vector<double> acc(total, 0.0);
  for (size_t m = 0; m < frames; ++m)
    for (size_t i = 0; i < p.window_len; ++i) acc[m * p.hop + i] += w[i];
  const size_t lo = p.window_len;
  const size_t hi = total - p.window_len;
  if (hi <= lo) return 0.0;
  double mn = acc[lo], mx = acc[lo];
  for (size_t i = lo; i < hi; ++i) {
    mn = std::min(mn, acc[i]);
    mx = std::max(mx, acc[i]);
  }
  const double mean = 0.5 * (mn + mx);
  return mean > 0 ? (mx - mn) / mean : 1.0;
}

void StftParams::validate() const {
  if (hop == 0 || hop > window_len)
    throw Error("stft params: require 0 < hop <= window_len");
  if (!is_power_of_two(window_len))
    throw Error("stft params: window_len " + std::to_string(window_len) +
                " is not a power of two");
  if (cola_deviation(*this) > 1e-9)
    throw Error("stft params: window/hop pair violates constant overlap-add");
}

ComplexSpectrogram stft(const Waveform& w, const StftParams& params) {
  params.validate();
  if (w.size() < params.window_len)
    throw Error("stft: waveform of " + std::to_string(w.size()) +
                " samples is shorter than one window (" +
                std::to_string(params.window_len) + ")");

  const size_t n = params.window_len;
  const size_t num_frames = 1 + (w.size() - n) / params.hop;
  const size_t num_bins = n / 2 + 1;
  const auto taper = window_taper(params.window, n);

  ComplexSpectrogram spec;
  spec.num_bins = num_bins;
  spec.num_frames = num_frames;
  spec.sample_rate = w.sample_rate;
  spec.bin_hz = static_cast<double>(w.sample_rate) / static_cast<double>(n);
  spec.frame_seconds = static_cast<double>(params.hop) / w.sample_rate;
  spec.params = params;
  spec.grid.resize(num_frames * num_bins);

  std::vector<std::complex<double>> frame(n);
  for (size_t t = 0; t < num_frames; ++t) {
    const double* src = w.samples.data() + t * params.hop;
    for (size_t i = 0; i < n; ++i) frame[i] = {src[i] * taper[i], 0.0};
    fft_inplace(frame, false);
    std::copy(frame.begin(), frame.begin() + static_cast<ptrdiff_t>(num_bins),
              spec.grid.begin() + static_cast<ptrdiff_t>(t * num_bins));
  }
  return spec;
}

Waveform istft(const ComplexSpectrogram& spec, const StftParams& params, size_t output_len) {
  params.validate();
  if (spec.num_bins != params.window_len / 2 + 1)
    throw Error("istft: spectrogram has " + std::to_string(spec.num_bins) +
                " bins but params imply " + std::to_string(params.window_len / 2 + 1));
  if (spec.params.hop != params.hop || spec.params.window != params.window)
    throw Error("istft: params differ from those used at analysis");

  const size_t n = params.window_len;
  const size_t covered = spec.covered_samples();
  const auto taper = window_taper(params.window, n);

  std::vector<double> num(covered, 0.0);
  std::vector<double> den(covered, 0.0);
  std::vector<std::complex<double>> frame(n);
  for (size_t t = 0; t < spec.num_frames; ++t) {
    const auto* bins = spec.grid.data() + t * spec.num_bins;
    frame[0] = bins[0];
    frame[n / 2] = bins[n / 2];
    for (size_t f = 1; f < n / 2; ++f) {
      frame[f] = bins[f];
      frame[n - f] = std::conj(bins[f]);
    }
    fft_inplace(frame, true);
    double* dst = num.data() + t * params.hop;
    double* wsum = den.data() + t * params.hop;
    for (size_t i = 0; i < n; ++i) {
      dst[i] += frame[i].real();
      wsum[i] += taper[i];
    }
  }

  Waveform out;
  out.sample_rate = spec.sample_rate;
  out.samples.resize(covered);
  for (size_t i = 0; i < covered; ++i)
    out.samples[i] = den[i] > kOlaFloor ? num[i] / den[i] : 0.0;
  if (output_len != 0) out.samples.resize(output_len, 0.0);
  return out;
}

std::vector<double> band_energy_series(const ComplexSpectrogram& spec, double lo_hz, double hi_hz) {
  if (!(lo_hz <= hi_hz))
    throw Error("band_energy_series: empty interval");
  const double nyquist = 0.5 * spec.sample_rate;
  if (lo_hz < 0.0 || hi_hz > nyquist)
    throw Error("band_energy_series: band outside [0, Nyquist]");
  size_t f_lo = spec.num_bins, f_hi = 0;
  for (size_t f = 0; f < spec.num_bins; ++f) {
    const double c = spec.bin_center_hz(f);
    if (c >= lo_hz && c <= hi_hz) {
      f_lo = std::min(f_lo, f);
      f_hi = std::max(f_hi, f);
    }
  }
  if (f_lo > f_hi)
    throw Error("band_energy_series: band [" + std::to_string(lo_hz) + ", " +
                std::to_string(hi_hz) + "] Hz contains no bin");
  std::vector<double> energy(spec.num_frames, 0.0);
  for (size_t t = 0; t < spec.num_frames; ++t) {
    double acc = 0.0;
    const auto* bins = spec.grid.data() + t * spec.num_bins;
    for (size_t f = f_lo; f <= f_hi; ++f) acc += std::abs(bins[f]);
    energy[t] = acc;
  }
  return energy;
}

}  // namespace vguard
