#include <benchmark/benchmark.h>

#include "vguard/attack.hpp"
#include "vguard/detect.hpp"
#include "vguard/fft.hpp"
#include "vguard/pitch.hpp"
#include "vguard/rng.hpp"
#include "vguard/stft.hpp"

using namespace vguard;

namespace {

Waveform three_second_noise(uint64_t seed) {
  Rng rng(seed);
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(48000);
  for (auto& s : w.samples) s = rng.uniform(-0.4, 0.4);
  return w;
}

void BM_Fft1024(benchmark::State& state) {
  Rng rng(1);
  std::vector<std::complex<double>> a(1024);
  for (auto& v : a) v = {rng.uniform(), rng.uniform()};
  for (auto _ : state) {
    auto copy = a;
    fft_inplace(copy, false);
    benchmark::DoNotOptimize(copy.data());
  }
}
BENCHMARK(BM_Fft1024);

void BM_Stft3s(benchmark::State& state) {
  const auto w = three_second_noise(2);
  for (auto _ : state) {
    auto spec = stft(w, {});
    benchmark::DoNotOptimize(spec.grid.data());
  }
}
BENCHMARK(BM_Stft3s);

void BM_StftRoundTrip3s(benchmark::State& state) {
  const auto w = three_second_noise(3);
  StftParams p;
  for (auto _ : state) {
    auto back = istft(stft(w, p), p, w.size());
    benchmark::DoNotOptimize(back.samples.data());
  }
}
BENCHMARK(BM_StftRoundTrip3s);

void BM_Pitch3s(benchmark::State& state) {
  auto w = three_second_noise(4);
  // make it periodic enough to exercise the voiced path
  for (size_t i = 0; i < w.size(); ++i)
    w.samples[i] += 0.5 * std::sin(2.0 * 3.14159265358979 * 180.0 * static_cast<double>(i) / 16000.0);
  for (auto _ : state) {
    auto track = estimate_pitch(w);
    benchmark::DoNotOptimize(&track);
  }
}
BENCHMARK(BM_Pitch3s);

void BM_BeepDetect3s(benchmark::State& state) {
  const auto w = three_second_noise(5);
  const auto spec = stft(w, {});
  DetectionConfig cfg;
  for (auto _ : state) {
    auto r = detect_beeps(spec, cfg);
    benchmark::DoNotOptimize(&r);
  }
}
BENCHMARK(BM_BeepDetect3s);

void BM_InjectTrigger(benchmark::State& state) {
  const auto w = three_second_noise(6);
  TriggerConfig cfg;
  for (auto _ : state) {
    auto out = inject_pbsm(w, cfg, {}, 1.0);
    benchmark::DoNotOptimize(out.samples.data());
  }
}
BENCHMARK(BM_InjectTrigger);

}  // namespace

BENCHMARK_MAIN();
