#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <numeric>

#include "support/oracles.hpp"
#include "vguard/attack.hpp"
#include "vguard/detect.hpp"
#include "vguard/wav_io.hpp"

using namespace vguard;
using namespace vguard::testing;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "vguard_detect_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Low-level broadband noise plus an optional beep burst.
Waveform noise_with_beep(uint64_t seed, double beep_offset, double beep_seconds,
                         double beep_amp) {
  Rng rng(seed);
  auto w = random_waveform(rng, 3.0, 16000, 0.01);
  if (beep_seconds > 0.0) {
    const auto begin = static_cast<size_t>(beep_offset * 16000);
    const auto len = static_cast<size_t>(beep_seconds * 16000);
    for (size_t i = 0; i < len && begin + i < w.size(); ++i)
      w.samples[begin + i] += beep_amp * std::sin(kTwoPi * 7000.0 * static_cast<double>(i) / 16000.0);
  }
  return w;
}

// Reference beep detector: naive DFT band series, mean, strict threshold.
std::vector<size_t> oracle_beep_frames(const Waveform& w, const DetectionConfig& cfg) {
  const auto series = oracle_band_energy(w, cfg.stft, cfg.omega_hz - cfg.delta_omega_hz,
                                         cfg.omega_hz + cfg.delta_omega_hz);
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) /
                      static_cast<double>(series.size());
  std::vector<size_t> frames;
  for (size_t t = 0; t < series.size(); ++t)
    if (series[t] > cfg.eta * mean) frames.push_back(t);
  return frames;
}

AcousticFeatures features(double f0, double hf, double rho_p, double rho_hf) {
  AcousticFeatures f;
  f.f0 = f0;
  f.hf_energy = hf;
  f.rho_p = rho_p;
  f.rho_hf = rho_hf;
  return f;
}

}  // namespace

TEST_CASE("silence produces zero beeps under the strict inequality") {
  Waveform w;
  w.samples.assign(48000, 0.0);
  const auto r = detect_beeps(stft(w, {}), {});
  CHECK(r.beep_count == 0);
  CHECK(r.threshold_value == 0.0);
  CHECK(r.avg_beep_interval == 0.0);
}

TEST_CASE("a beep burst flags exactly the frames the oracle flags") {
  DetectionConfig cfg;
  const auto w = noise_with_beep(71, 1.2, 0.3, 0.2);
  const auto r = detect_beeps(stft(w, {}), cfg);
  CHECK(r.beep_frames == oracle_beep_frames(w, cfg));
  CHECK(r.beep_count >= 8);
  CHECK(r.beep_count <= 13);
  // consecutive beep frames one hop apart
  CHECK(r.avg_beep_interval == doctest::Approx(512.0 / 16000.0).epsilon(1e-9));
}

TEST_CASE("a steady tone at omega is not beep-like") {
  const auto w = sine(7000.0, 3.0, 16000, 0.3);
  const auto r = detect_beeps(stft(w, {}), {});
  CHECK(r.beep_count <= 2);  // only window edge frames can poke above the mean
}

TEST_CASE("beep detection equals the brute-force oracle on random signals") {
  DetectionConfig cfg;
  for (uint64_t seed : {101, 102, 103}) {
    const auto w = noise_with_beep(seed, 0.5 + 0.2 * static_cast<double>(seed % 5), 0.25, 0.15);
    const auto r = detect_beeps(stft(w, {}), cfg);
    CHECK(r.beep_frames == oracle_beep_frames(w, cfg));
  }
}

TEST_CASE("detect_beeps rejects an empty band") {
  DetectionConfig cfg;
  cfg.omega_hz = 7007.0;
  cfg.delta_omega_hz = 1.0;  // no bin center within 1 Hz of 7007
  const auto w = noise_with_beep(5, 0.0, 0.0, 0.0);
  CHECK_THROWS_AS(detect_beeps(stft(w, {}), cfg), Error);
}

TEST_CASE("features of silence are zero with the no-pitch flag") {
  Waveform w;
  w.samples.assign(48000, 0.0);
  const auto f = extract_features(w, {});
  CHECK(f.no_pitch);
  CHECK(f.f0 == 0.0);
  CHECK(f.pitch_var == 0.0);
  CHECK(f.hf_energy == 0.0);
  CHECK(f.rho_p == 0.0);
  CHECK(f.rho_hf == 0.0);
}

TEST_CASE("a pure 220 Hz sine has stable pitch and no high-frequency energy") {
  const auto f = extract_features(sine(220.0, 3.0), {});
  CHECK_FALSE(f.no_pitch);
  CHECK(f.f0 == doctest::Approx(220.0).epsilon(0.01));
  CHECK(f.pitch_var < 1.0);
  CHECK(f.hf_energy < 0.1);  // window leakage only; signal bins carry ~1e2 each
}

TEST_CASE("adding a beep strictly increases high-frequency energy") {
  const auto clean = sine(220.0, 3.0);
  auto beeped = clean;
  for (size_t i = 16000; i < 20800; ++i)
    beeped.samples[i] += 0.2 * std::sin(kTwoPi * 7000.0 * static_cast<double>(i) / 16000.0);
  const auto f_clean = extract_features(clean, {});
  const auto f_beeped = extract_features(beeped, {});
  CHECK(f_beeped.hf_energy > f_clean.hf_energy + 1.0);
  CHECK(f_beeped.rho_hf > 0.0);
}

TEST_CASE("score examples") {
  CHECK(score_sample(features(220, 5, 1, 1), {0, 0, 0, 0}) == 0.0);
  CHECK(score_sample(features(220, 5, 1, 1), {1, 0, 0, 0}) == 220.0);
  CHECK(score_sample(features(100, 20, 3, 0.5), {1, 1, 1, 1}) == doctest::Approx(123.5));
  ScoreWeights negative;
  negative.hf = -1.0;
  CHECK_THROWS_AS(score_sample(features(1, 1, 1, 1), negative), Error);
}

TEST_CASE("override fires on consistently moderate beep counts") {
  DetectionConfig cfg;  // min_beep_count [2,40], theta 6
  std::vector<double> scores(10, 120.0);
  std::vector<int> beeps(10, 11);
  const auto a = assess_account(scores, beeps, cfg);
  CHECK(a.decision == Decision::Triggered);
  CHECK(a.reason == DecisionReason::Override);

  // only 5 of 10 moderate: no override, score-based path decides
  std::vector<int> mixed = {11, 11, 11, 11, 11, 0, 0, 0, 0, 0};
  const auto b = assess_account(scores, mixed, cfg);
  CHECK(b.reason == DecisionReason::ScoreBased);
}

TEST_CASE("quiet accounts are legitimate in consistent mode") {
  DetectionConfig cfg;
  cfg.tau = 500.0;
  std::vector<double> scores(10, 64.0);
  std::vector<int> beeps(10, 0);
  const auto a = assess_account(scores, beeps, cfg);
  CHECK(a.pi == 0.0);
  CHECK(a.confidence == -1.0);
  CHECK(a.decision == Decision::Legitimate);
  CHECK(a.triggered_fraction == 0.0);
}

TEST_CASE("half the score mass above tau defers in both modes") {
  DetectionConfig cfg;
  cfg.tau = 3.0;
  const std::vector<double> scores = {2.0, 2.0, 4.0};
  const std::vector<int> beeps = {0, 0, 0};
  auto a = assess_account(scores, beeps, cfg);
  CHECK(a.pi == doctest::Approx(0.5));
  CHECK(a.confidence == doctest::Approx(0.0));
  CHECK(a.decision == Decision::Deferred);

  cfg.decision_mode = DetectionConfig::DecisionMode::Literal;
  a = assess_account(scores, beeps, cfg);
  CHECK(a.decision == Decision::Deferred);
}

TEST_CASE("literal decision mode labels high-confidence accounts legitimate") {
  DetectionConfig cfg;
  cfg.decision_mode = DetectionConfig::DecisionMode::Literal;
  cfg.tau = 10.0;
  const std::vector<double> scores = {100.0, 90.0, 80.0};  // all above tau -> pi = 1
  const std::vector<int> beeps = {0, 0, 0};
  const auto a = assess_account(scores, beeps, cfg);
  CHECK(a.confidence == doctest::Approx(1.0));
  CHECK(a.decision == Decision::Legitimate);

  cfg.decision_mode = DetectionConfig::DecisionMode::Consistent;
  CHECK(assess_account(scores, beeps, cfg).decision == Decision::Triggered);
}

TEST_CASE("confidence is exactly 2*pi - 1 and pi stays in [0,1] on random accounts") {
  Rng rng(613);
  DetectionConfig cfg;
  cfg.tau = 50.0;
  for (int trial = 0; trial < 200; ++trial) {
    const size_t files = 1 + rng.uniform_int(12);
    std::vector<double> scores;
    std::vector<int> beeps;
    for (size_t i = 0; i < files; ++i) {
      scores.push_back(rng.uniform(0.0, 100.0));
      beeps.push_back(static_cast<int>(rng.uniform_int(50)));
    }
    const auto a = assess_account(scores, beeps, cfg);
    CHECK(a.pi >= 0.0);
    CHECK(a.pi <= 1.0);
    CHECK(a.confidence == 2.0 * a.pi - 1.0);
    CHECK(a.s_total == doctest::Approx(std::accumulate(scores.begin(), scores.end(), 0.0)));
  }
}

TEST_CASE("zero total score yields pi = 0 and a legitimate decision") {
  DetectionConfig cfg;
  const std::vector<double> scores(10, 0.0);
  const std::vector<int> beeps(10, 0);
  const auto a = assess_account(scores, beeps, cfg);
  CHECK(a.pi == 0.0);
  CHECK(a.decision == Decision::Legitimate);
}

TEST_CASE("override is independent of score weights") {
  DetectionConfig cfg;
  std::vector<int> beeps(10, 5);
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> scores;
    for (int i = 0; i < 10; ++i) scores.push_back(rng.uniform(0.0, 1000.0));
    const auto a = assess_account(scores, beeps, cfg);
    CHECK(a.decision == Decision::Triggered);
    CHECK(a.reason == DecisionReason::Override);
  }
}

TEST_CASE("scaling all weights and tau together leaves decisions unchanged") {
  Rng rng(99);
  DetectionConfig cfg;
  cfg.tau = 260.0;
  DetectionConfig scaled = cfg;
  const double k = 3.7;
  scaled.tau = cfg.tau * k;
  const ScoreWeights w1{1.0, 1.0, 0.5, 0.5};
  const ScoreWeights w2{k, k, 0.5 * k, 0.5 * k};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s1, s2;
    std::vector<int> beeps;
    for (int i = 0; i < 10; ++i) {
      const auto f = features(rng.uniform(80.0, 300.0), rng.uniform(0.0, 400.0),
                              rng.uniform(0.0, 5.0), rng.uniform(0.0, 2.0));
      s1.push_back(score_sample(f, w1));
      s2.push_back(score_sample(f, w2));
      beeps.push_back(0);
    }
    const auto a1 = assess_account(s1, beeps, cfg);
    const auto a2 = assess_account(s2, beeps, scaled);
    CHECK(a1.decision == a2.decision);
    CHECK(a1.pi == doctest::Approx(a2.pi).epsilon(1e-12));
    CHECK(a1.confidence == doctest::Approx(a2.confidence).epsilon(1e-12));
  }
}

TEST_CASE("raising every score above tau never flips triggered to legitimate") {
  Rng rng(123);
  DetectionConfig cfg;
  cfg.tau = 100.0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> scores;
    std::vector<int> beeps(10, 0);
    for (int i = 0; i < 10; ++i) scores.push_back(rng.uniform(0.0, 300.0));
    std::vector<double> raised;
    for (double s : scores) raised.push_back(std::max(s, cfg.tau + 1.0));
    const auto after = assess_account(raised, beeps, cfg);
    CHECK(after.decision == Decision::Triggered);  // pi = 1 in consistent mode
  }
}

TEST_CASE("assess_account rejects empty and mismatched inputs") {
  DetectionConfig cfg;
  CHECK_THROWS_AS(assess_account({}, {}, cfg), Error);
  CHECK_THROWS_AS(assess_account({1.0}, {0, 1}, cfg), Error);
}

TEST_CASE("tau calibration picks the largest zero-error candidate") {
  std::vector<AccountScores> validation;
  validation.push_back({{1.0, 2.0, 3.0}, false});
  validation.push_back({{10.0, 11.0}, true});
  std::vector<double> grid;
  for (double tau = 0.5; tau <= 12.0 + 1e-9; tau += 0.5) grid.push_back(tau);
  CHECK(calibrate_tau(validation, grid) == doctest::Approx(9.5));

  CHECK(calibrate_tau(validation, {4.0}) == doctest::Approx(4.0));
  CHECK_THROWS_AS(calibrate_tau({{{1.0}, false}}, grid), Error);  // single class
  CHECK_THROWS_AS(calibrate_tau(validation, {}), Error);
}

TEST_CASE("tau calibration matches an exhaustive error count on overlapping classes") {
  Rng rng(314);
  std::vector<AccountScores> validation;
  for (int i = 0; i < 6; ++i) {
    AccountScores a;
    a.triggered = i % 2 == 1;
    for (int k = 0; k < 10; ++k)
      a.scores.push_back(rng.uniform(a.triggered ? 40.0 : 0.0, a.triggered ? 140.0 : 100.0));
    validation.push_back(std::move(a));
  }
  std::vector<double> grid;
  for (double tau = 0.0; tau <= 150.0; tau += 2.5) grid.push_back(tau);

  size_t best_err = static_cast<size_t>(-1);
  double best_tau = grid.front();
  for (double tau : grid) {
    size_t err = 0;
    for (const auto& v : validation)
      for (double s : v.scores)
        if ((s > tau) != v.triggered) ++err;
    if (err < best_err || (err == best_err && tau > best_tau)) {
      best_err = err;
      best_tau = tau;
    }
  }
  CHECK(calibrate_tau(validation, grid) == doctest::Approx(best_tau));
}

TEST_CASE("run_detection flags staged trigger accounts and defers broken ones") {
  const auto src_dir = fresh_dir("rd_src");
  SynthesisOptions options;
  options.n_accounts = 20;
  options.seed = 47;
  const auto source = synthesize_corpus(src_dir, options);
  const auto partition = partition_accounts(source, {0.05, 0.05, 0.05}, 47);
  const auto out_dir = fresh_dir("rd_out");
  auto staged = stage_attack(source, partition, {}, {}, {}, 47, out_dir);

  DetectionConfig cfg;
  cfg.tau = 500.0;
  const auto report = run_detection(staged.attacked, cfg, {}, 2);
  REQUIRE(report.accounts.size() == 19);
  for (const auto& id : partition.pbsm_ids) {
    const auto& a = report.accounts.at(id);
    CHECK(a.decision == Decision::Triggered);
    CHECK(a.reason == DecisionReason::Override);
    CHECK(a.triggered_fraction == 1.0);
  }
  for (const auto& id : partition.legitimate_ids)
    CHECK(report.accounts.at(id).decision == Decision::Legitimate);

  // truncate one legitimate file -> that account defers with a warning
  const auto* victim = staged.attacked.find(partition.legitimate_ids[0]);
  std::filesystem::resize_file(out_dir / victim->files[3], 44);
  const auto degraded = run_detection(staged.attacked, cfg, {}, 1);
  CHECK(degraded.accounts.at(victim->id).decision == Decision::Deferred);
  CHECK_FALSE(degraded.warnings.empty());

  // report round trip and feature CSV
  save_detection_report(report, out_dir / "detection.json");
  const auto back = load_detection_report(out_dir / "detection.json");
  CHECK(back.accounts.size() == report.accounts.size());
  CHECK(back.tau == report.tau);
  CHECK(back.accounts.at(partition.pbsm_ids[0]).decision == Decision::Triggered);
  write_feature_csv(report, out_dir / "features.csv");
  CHECK(std::filesystem::exists(out_dir / "features.csv"));
}

TEST_CASE("a corpus without staged attacks yields no triggered decisions") {
  const auto dir = fresh_dir("clean_corpus");
  SynthesisOptions options;
  options.n_accounts = 20;
  options.seed = 53;
  const auto manifest = synthesize_corpus(dir, options);

  DetectionConfig cfg;
  cfg.tau = 500.0;
  const auto report = run_detection(manifest, cfg, {}, 2);
  size_t triggered = 0, deferred = 0;
  for (const auto& [id, a] : report.accounts) {
    if (a.decision == Decision::Triggered) ++triggered;
    if (a.decision == Decision::Deferred) ++deferred;
  }
  CHECK(triggered == 0);
  CHECK(static_cast<double>(deferred) / static_cast<double>(report.accounts.size()) <= 0.02);
}

TEST_CASE("detection config validation") {
  DetectionConfig cfg;
  cfg.gamma = 1.5;
  CHECK_THROWS_AS(cfg.validate(16000), Error);
  cfg = {};
  cfg.omega_hz = 3000.0;  // band below hf cutoff
  CHECK_THROWS_AS(cfg.validate(16000), Error);
  cfg = {};
  cfg.min_beep_lo = 50;
  cfg.min_beep_hi = 2;
  CHECK_THROWS_AS(cfg.validate(16000), Error);
  cfg = {};
  CHECK_NOTHROW(cfg.validate(16000));
}
