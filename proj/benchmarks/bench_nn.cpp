#include <benchmark/benchmark.h>

#include "vguard/embedding.hpp"
#include "vguard/nn/model.hpp"
#include "vguard/rng.hpp"

using namespace vguard;

namespace {

void fill_batch(Rng& rng, size_t batch, std::vector<float>& x, std::vector<float>& y) {
  x.resize(batch * 1024);
  y.assign(batch * 3, 0.0f);
  for (auto& v : x) v = static_cast<float>(rng.uniform());
  for (size_t s = 0; s < batch; ++s) y[s * 3 + rng.uniform_int(3)] = 1.0f;
}

void BM_ForwardBatch32(benchmark::State& state) {
  nn::Model<float> model(nn::ModelSpec{}, 1);
  Rng rng(2);
  std::vector<float> x, y;
  fill_batch(rng, 32, x, y);
  for (auto _ : state) {
    const auto& probs = model.forward(x.data(), 32, false);
    benchmark::DoNotOptimize(probs.data());
  }
}
BENCHMARK(BM_ForwardBatch32);

void BM_TrainStepBatch32(benchmark::State& state) {
  nn::Model<float> model(nn::ModelSpec{}, 1);
  nn::Adam<float> adam(1e-3, 0.9, 0.999, 1e-8);
  auto params = model.parameters();
  Rng rng(3);
  std::vector<float> x, y;
  fill_batch(rng, 32, x, y);
  for (auto _ : state) {
    model.zero_gradients();
    const double loss = model.loss_and_gradients(x.data(), y.data(), 32, &rng);
    adam.step(params);
    benchmark::DoNotOptimize(loss);
  }
}
BENCHMARK(BM_TrainStepBatch32);

void BM_EmbedSample(benchmark::State& state) {
  Rng rng(4);
  Waveform w;
  w.sample_rate = 16000;
  w.samples.resize(48000);
  for (auto& s : w.samples) s = rng.uniform(-0.4, 0.4);
  for (auto _ : state) {
    auto e = embed_sample(w);
    benchmark::DoNotOptimize(e.data());
  }
}
BENCHMARK(BM_EmbedSample);

}  // namespace

BENCHMARK_MAIN();
