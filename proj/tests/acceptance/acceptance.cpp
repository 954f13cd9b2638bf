// Acceptance suite: end-to-end and oracle checks over the full pipeline.
// Prints one [PASS]/[FAIL] line per criterion and exits nonzero on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "support/oracles.hpp"
#include "vguard/attack.hpp"
#include "vguard/detect.hpp"
#include "vguard/embedding.hpp"
#include "vguard/nn/train.hpp"
#include "vguard/pipeline.hpp"

using namespace vguard;
using namespace vguard::testing;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

struct Criterion {
  int number;
  std::string summary;
  bool passed = true;
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    passed = false;
    if (failures.size() < 12) failures.push_back(what);
    else if (failures.size() == 12) failures.push_back("(further failures suppressed)");
  }
};

std::vector<Criterion> g_results;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "vguard_acceptance" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

json load_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  json j;
  in >> j;
  return j;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

// ---------------------------------------------------------------------------
// Criterion 3: DSP oracle suite
// ---------------------------------------------------------------------------
void dsp_oracle_suite() {
  Criterion c{3, "DSP oracles (round-trip, beep energy vs naive DFT, pitch)"};
  const auto t0 = Clock::now();
  Rng rng(1003);
  StftParams params;

  size_t roundtrip_ok = 0;
  for (int i = 0; i < 100; ++i) {
    const auto w = random_waveform(rng, 3.0);
    const auto back = istft(stft(w, params), params, w.size());
    if (relative_rms_error(w.samples, back.samples, params.window_len,
                          w.size() - 2 * params.window_len) <= 1e-6)
      ++roundtrip_ok;
  }
  c.require(roundtrip_ok == 100,
            "interior round-trip <= 1e-6 on " + std::to_string(roundtrip_ok) + "/100 waveforms");

  size_t band_ok = 0;
  for (int i = 0; i < 10; ++i) {
    auto w = random_waveform(rng, 1.0);
    const auto fast = band_energy_series(stft(w, params), 6800.0, 7200.0);
    const auto slow = oracle_band_energy(w, params, 6800.0, 7200.0);
    bool all = fast.size() == slow.size();
    for (size_t t = 0; all && t < fast.size(); ++t)
      all = std::abs(fast[t] - slow[t]) <= 1e-9 * std::max(1.0, std::abs(slow[t]));
    if (all) ++band_ok;
  }
  c.require(band_ok == 10,
            "beep energy matched the naive DFT on " + std::to_string(band_ok) + "/10 signals");

  size_t pitch_ok = 0, pitch_total = 0;
  for (double f0 = 80.0; f0 <= 400.0; f0 += 29.0) {
    auto w = harmonic_stack(f0, {0.4, 0.25, 0.15}, 1.0);
    add_white_noise(w, rng, rms(w) * std::pow(10.0, -20.0 / 20.0));
    const auto track = estimate_pitch(w);
    ++pitch_total;
    if (track.voiced && std::abs(track.f0_hz - f0) <= 2.0) ++pitch_ok;
  }
  c.require(pitch_ok == pitch_total, "pitch within 2 Hz on " + std::to_string(pitch_ok) + "/" +
                                         std::to_string(pitch_total) + " harmonic signals");

  const double elapsed = seconds_since(t0);
  c.require(elapsed < 30.0, "suite took " + fmt("%.1f", elapsed) + "s (budget 30s)");
  c.summary += " [" + fmt("%.1f", elapsed) + "s]";
  g_results.push_back(std::move(c));
}

// ---------------------------------------------------------------------------
// Criterion 4: gradient suite
// ---------------------------------------------------------------------------
void gradient_suite() {
  Criterion c{4, "analytic gradients vs central finite differences; softmax rows"};
  const auto t0 = Clock::now();

  // Narrow variant of the architecture: the same layer types with fewer
  // units, so the h = 1e-4 probe window does not straddle ReLU/pool kinks.
  nn::ModelSpec spec;
  spec.conv1_filters = 8;
  spec.conv2_filters = 16;
  spec.conv3_filters = 32;
  spec.dense1_units = 32;
  spec.dense2_units = 16;
  spec.dropout_conv = 0.0;
  spec.dropout_dense = 0.0;
  nn::Model<double> model(spec, 77);
  Rng rng(1004);
  const size_t batch = 3;
  std::vector<double> x(batch * 1024), y(batch * 3, 0.0);
  for (auto& v : x) v = rng.uniform();
  for (size_t s = 0; s < batch; ++s) y[s * 3 + rng.uniform_int(3)] = 1.0;

  model.zero_gradients();
  model.loss_and_gradients(x.data(), y.data(), batch);
  auto params = model.parameters();
  c.require(params.size() >= 20, "at least 20 parameter tensors (every layer type)");

  const double h = 1e-4;
  size_t grad_ok = 0;
  for (auto& p : params) {
    std::vector<std::pair<double, size_t>> mag;
    for (size_t i = 0; i < p.values->size(); ++i) mag.emplace_back(std::abs((*p.values)[i]), i);
    std::sort(mag.begin(), mag.end());
    const size_t idx = mag[mag.size() / 2].second;
    const double analytic = (*p.grads)[idx];
    const double original = (*p.values)[idx];
    (*p.values)[idx] = original + h;
    const double lp = model.loss_value(x.data(), y.data(), batch, true);
    (*p.values)[idx] = original - h;
    const double lm = model.loss_value(x.data(), y.data(), batch, true);
    (*p.values)[idx] = original;
    const double numeric = (lp - lm) / (2.0 * h);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    if (std::abs(analytic - numeric) / scale <= 1e-3) {
      ++grad_ok;
    } else {
      c.require(false, "gradient mismatch at " + p.name + ": analytic " +
                           fmt("%.6g", analytic) + " vs numeric " + fmt("%.6g", numeric));
    }
  }
  c.require(grad_ok >= 20, std::to_string(grad_ok) + "/" + std::to_string(params.size()) +
                               " sampled gradients within 1e-3");

  bool softmax_ok = true;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> xb(8 * 1024);
    for (auto& v : xb) v = rng.uniform();
    const auto& probs = model.forward(xb.data(), 8, false);
    for (size_t s = 0; s < 8; ++s) {
      double sum = 0.0;
      for (int k = 0; k < 3; ++k) sum += probs[s * 3 + static_cast<size_t>(k)];
      if (std::abs(sum - 1.0) > 1e-6) softmax_ok = false;
    }
  }
  c.require(softmax_ok, "softmax rows sum to 1 +- 1e-6 on random batches");

  const double elapsed = seconds_since(t0);
  c.require(elapsed < 60.0, "suite took " + fmt("%.1f", elapsed) + "s (budget 60s)");
  c.summary += " [" + fmt("%.1f", elapsed) + "s]";
  g_results.push_back(std::move(c));
}

// ---------------------------------------------------------------------------
// Criterion 5: algebraic suite
// ---------------------------------------------------------------------------
void algebraic_suite() {
  Criterion c{5, "confidence identity, partition algebra, pairing, mixup convexity"};
  const auto t0 = Clock::now();
  Rng rng(1005);

  // c = 2*pi - 1 exactly, pi in [0,1], over 1000 randomized accounts
  DetectionConfig cfg;
  cfg.tau = 50.0;
  bool identity_ok = true;
  for (int trial = 0; trial < 1000; ++trial) {
    const size_t files = 1 + rng.uniform_int(12);
    std::vector<double> scores;
    std::vector<int> beeps;
    for (size_t i = 0; i < files; ++i) {
      scores.push_back(rng.uniform(0.0, 120.0));
      beeps.push_back(static_cast<int>(rng.uniform_int(60)));
    }
    const auto a = assess_account(scores, beeps, cfg);
    if (a.confidence != 2.0 * a.pi - 1.0 || a.pi < 0.0 || a.pi > 1.0) identity_ok = false;
  }
  c.require(identity_ok, "c = 2*pi - 1 exact and pi in [0,1] on 1000 random accounts");

  // partition floor sizes, disjointness, exhaustiveness over 50 (n, seed)
  bool partition_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    const size_t n = 20 + rng.uniform_int(500);
    const uint64_t seed = rng.next_u64();
    CorpusManifest m;
    for (size_t i = 0; i < n; ++i) {
      Account a;
      a.id = "a" + std::to_string(i);
      m.accounts.push_back(a);
    }
    const PartitionFractions fr{0.05, 0.05, 0.05};
    const auto p = partition_accounts(m, fr, seed);
    const auto k = static_cast<size_t>(std::floor(0.05 * static_cast<double>(n)));
    if (p.attacker_ids.size() != k || p.pbsm_ids.size() != k || p.tdpa_ids.size() != k)
      partition_ok = false;
    std::vector<std::string> all;
    for (const auto* ids : {&p.attacker_ids, &p.pbsm_ids, &p.tdpa_ids, &p.legitimate_ids})
      all.insert(all.end(), ids->begin(), ids->end());
    std::sort(all.begin(), all.end());
    if (all.size() != n || std::adjacent_find(all.begin(), all.end()) != all.end())
      partition_ok = false;
  }
  c.require(partition_ok, "partition floor sizes, disjoint and exhaustive for 50 (n, seed)");

  // two-pass pairing of ten embeddings
  std::vector<std::vector<float>> embeddings;
  for (int i = 0; i < 10; ++i)
    embeddings.push_back(std::vector<float>(kEmbeddingDim, static_cast<float>(i)));
  const auto pairs = pair_account(embeddings, "acct", kClassLegitimate);
  const std::vector<std::pair<int, int>> expected = {{0, 5}, {1, 6}, {2, 7}, {3, 8}, {4, 9},
                                                     {0, 6}, {1, 7}, {2, 8}, {3, 9}, {4, 5}};
  bool pairing_ok = pairs.size() == 10;
  for (size_t i = 0; pairing_ok && i < pairs.size(); ++i)
    pairing_ok = pairs[i].pair == expected[i];
  c.require(pairing_ok, "pairing of 10 embeddings yields both documented passes");

  // mixup convexity
  bool mixup_ok = true;
  for (int trial = 0; trial < 200; ++trial) {
    const size_t batch = 2 + rng.uniform_int(14);
    std::vector<float> x(batch * 8), y(batch * 3, 0.0f);
    for (auto& v : x) v = static_cast<float>(rng.uniform());
    for (size_t s = 0; s < batch; ++s) y[s * 3 + rng.uniform_int(3)] = 1.0f;
    nn::mixup(x, y, batch, 8, 3, 0.2, 1.0, rng);
    for (size_t s = 0; s < batch; ++s) {
      float sum = 0.0f;
      for (int k = 0; k < 3; ++k) {
        const float v = y[s * 3 + static_cast<size_t>(k)];
        if (v < 0.0f || v > 1.0f) mixup_ok = false;
        sum += v;
      }
      if (std::abs(sum - 1.0f) > 1e-5f) mixup_ok = false;
    }
  }
  c.require(mixup_ok, "mixup labels stay componentwise in [0,1] and sum to 1");

  const double elapsed = seconds_since(t0);
  c.require(elapsed < 10.0, "suite took " + fmt("%.1f", elapsed) + "s (budget 10s)");
  c.summary += " [" + fmt("%.1f", elapsed) + "s]";
  g_results.push_back(std::move(c));
}

// ---------------------------------------------------------------------------
// Criterion 6: determinism of full pipeline runs
// ---------------------------------------------------------------------------
void determinism_suite() {
  Criterion c{6, "two identical pipeline runs produce byte-identical artifacts"};
  const auto t0 = Clock::now();

  auto run = [&](const std::string& name) {
    StageContext ctx;
    ctx.cfg = load_config(std::nullopt, {"corpus.n_accounts=40", "train.epochs=2",
                                         "train.k_folds=2", "seed=2026"});
    ctx.paths.out = fresh_dir(name);
    ctx.quiet = true;
    run_pipeline(ctx);
    return ctx.paths.out;
  };
  const auto out1 = run("det_run1");
  const auto out2 = run("det_run2");

  for (const char* artifact :
       {"corpus/manifest.json", "attacked/manifest.json", "ground_truth.json", "detection.json",
        "checkpoint.json", "fold_metrics.json", "metrics.json",
        "embeddings/acct_0000.vsem"}) {
    const bool same = file_bytes(out1 / artifact) == file_bytes(out2 / artifact) &&
                      !file_bytes(out1 / artifact).empty();
    c.require(same, std::string(artifact) + " differs between identical runs");
  }

  c.summary += " [" + fmt("%.1f", seconds_since(t0)) + "s]";
  g_results.push_back(std::move(c));
}

// ---------------------------------------------------------------------------
// Criteria 1, 2, 7: the 200-account end-to-end run with default config
// ---------------------------------------------------------------------------
void end_to_end_suite() {
  StageContext ctx;
  ctx.cfg = load_config(std::nullopt);  // defaults: 200 accounts, 5% each, seed 7, 1 worker
  ctx.paths.out = fresh_dir("full_run");
  ctx.quiet = true;

  const auto t0 = Clock::now();
  run_pipeline(ctx);
  const double pipeline_seconds = seconds_since(t0);

  const auto detection = load_json(ctx.paths.detection());
  const auto truth = load_json(ctx.paths.ground_truth());
  const auto metrics = load_json(ctx.paths.metrics());
  const auto timing = load_json(ctx.paths.timing());

  std::vector<std::string> triggered_ids, legit_ids;
  for (const auto& [id, entry] : truth.at("accounts").items()) {
    const auto cls = entry.at("class").get<std::string>();
    if (cls == "triggered") triggered_ids.push_back(id);
    else if (cls == "legitimate") legit_ids.push_back(id);
  }

  // Criterion 1: detection layer
  {
    Criterion c{1, "detection flags 10/10 triggered, low false triggers, inside time budget"};
    size_t flagged = 0;
    for (const auto& id : triggered_ids)
      if (detection.at("accounts").at(id).at("decision") == "Triggered") ++flagged;
    c.require(flagged == triggered_ids.size() && triggered_ids.size() == 10,
              "flagged " + std::to_string(flagged) + "/" + std::to_string(triggered_ids.size()) +
                  " triggered accounts");

    size_t false_triggers = 0;
    for (const auto& id : legit_ids)
      if (detection.at("accounts").at(id).at("decision") == "Triggered") ++false_triggers;
    const double false_rate =
        static_cast<double>(false_triggers) / static_cast<double>(legit_ids.size());
    c.require(false_rate <= 0.02,
              "false-trigger rate " + fmt("%.4f", false_rate) + " exceeds 0.02");

    const double detect_seconds = timing.at("stages").at("detect").get<double>();
    c.require(detect_seconds < 60.0,
              "detection stage took " + fmt("%.1f", detect_seconds) + "s (budget 60s)");
    const double mean_ms = timing.at("detection_mean_account_ms").get<double>();
    c.require(mean_ms < 6000.0,
              "per-account mean " + fmt("%.0f", mean_ms) + " ms exceeds 6 s");
    c.summary += " [detect " + fmt("%.1f", detect_seconds) + "s, " + fmt("%.0f", mean_ms) +
                 " ms/account]";
    g_results.push_back(std::move(c));
  }

  // Criterion 2: composed pipeline
  {
    Criterion c{2, "composed pipeline: ASR <= 15%, attacked recall >= 0.90, < 15 min"};
    const double asr = metrics.at("asr").get<double>();
    c.require(asr <= 0.15, "ASR " + fmt("%.4f", asr) + " exceeds 0.15");
    const double recall = metrics.at("per_class").at("attacked").at("recall").get<double>();
    c.require(recall >= 0.90, "attacked recall " + fmt("%.3f", recall) + " below 0.90");
    c.require(pipeline_seconds < 900.0,
              "pipeline took " + fmt("%.0f", pipeline_seconds) + "s (budget 900s)");
    c.summary += " [ASR " + fmt("%.2f", 100.0 * asr) + "%, recall " + fmt("%.3f", recall) +
                 ", " + fmt("%.0f", pipeline_seconds) + "s]";
    g_results.push_back(std::move(c));
  }

  // Criterion 7: account-table pattern
  {
    Criterion c{7, "triggered accounts: 100% proportion via override; clean: 0-20%, legitimate"};
    for (const auto& id : triggered_ids) {
      const auto& a = detection.at("accounts").at(id);
      c.require(a.at("triggered_fraction").get<double>() == 1.0,
                "account " + id + " triggered fraction below 100%");
      c.require(a.at("reason") == "override", "account " + id + " not decided by override");
    }
    for (const auto& id : legit_ids) {
      const auto& a = detection.at("accounts").at(id);
      c.require(a.at("triggered_fraction").get<double>() <= 0.20,
                "account " + id + " has more than 20% of score mass flagged");
      c.require(a.at("decision") == "Legitimate", "account " + id + " not labeled Legitimate");
    }
    g_results.push_back(std::move(c));
  }
}

}  // namespace

int main() {
  std::printf("acceptance: running oracle suites\n");
  dsp_oracle_suite();
  gradient_suite();
  algebraic_suite();
  std::printf("acceptance: running determinism pipelines\n");
  determinism_suite();
  std::printf("acceptance: running the 200-account end-to-end pipeline (several minutes)\n");
  end_to_end_suite();

  std::sort(g_results.begin(), g_results.end(),
            [](const Criterion& a, const Criterion& b) { return a.number < b.number; });
  int failures = 0;
  for (const auto& c : g_results) {
    std::printf("[%s] criterion %d: %s\n", c.passed ? "PASS" : "FAIL", c.number,
                c.summary.c_str());
    for (const auto& f : c.failures) {
      std::printf("       - %s\n", f.c_str());
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}
