#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "support/oracles.hpp"
#include "vguard/attack.hpp"
#include "vguard/fft.hpp"
#include "vguard/wav_io.hpp"

using namespace vguard;
using namespace vguard::testing;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "vguard_attack_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

Waveform speechlike(uint64_t seed) {
  auto rng = Rng::derive(seed, {rng_stream::kSynth, 0});
  SpeakerRanges ranges;
  const auto profile = draw_speaker_profile(rng, ranges);
  return synthesize_utterance(profile, ranges, rng, 16000, 3.0);
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Account make_account(int files = 10) {
  Account a;
  a.id = "victim";
  for (int k = 0; k < files; ++k) a.files.push_back("f" + std::to_string(k) + ".wav");
  a.provenance.assign(files, FileProvenance::Genuine);
  return a;
}

std::vector<std::string> make_pool(int n) {
  std::vector<std::string> pool;
  for (int i = 0; i < n; ++i) pool.push_back("attacker/a" + std::to_string(i) + ".wav");
  return pool;
}

}  // namespace

TEST_CASE("identity trigger config reproduces the input within round-trip tolerance") {
  const auto w = speechlike(1);
  TriggerConfig cfg;
  cfg.pitch_scale = 1.0;
  cfg.amplitude_rms = 0.0;
  const auto out = inject_pbsm(w, cfg, {}, 1.0);
  REQUIRE(out.size() == w.size());
  CHECK(relative_rms_error(w.samples, out.samples, 1024, w.size() - 2048) <= 1e-6);
}

TEST_CASE("pure scaling doubles every spectrogram magnitude") {
  auto w = speechlike(2);
  for (auto& s : w.samples) s *= 0.3;  // keep 2x inside [-1,1]
  TriggerConfig cfg;
  cfg.pitch_scale = 2.0;
  cfg.amplitude_rms = 0.0;
  const auto out = inject_pbsm(w, cfg, {}, 0.0);
  const auto s_in = stft(w, {});
  const auto s_out = stft(out, {});
  // interior frames: the last window of samples is not covered by synthesis
  const size_t t_end = s_in.num_frames - 3;
  for (size_t t = 2; t < t_end; ++t)
    for (size_t f = 0; f < s_in.num_bins; ++f) {
      const double expected = 2.0 * std::abs(s_in.at(f, t));
      CHECK(std::abs(s_out.at(f, t)) == doctest::Approx(expected).epsilon(1e-6));
    }
}

TEST_CASE("trigger energy lands exactly on the frames covering its span") {
  auto w = speechlike(3);
  TriggerConfig cfg;
  cfg.pitch_scale = 1.0;
  const double offset = 1.0;
  const auto out = inject_pbsm(w, cfg, {}, offset);
  const auto series = band_energy_series(stft(out, {}), cfg.freq_hz - 200.0, cfg.freq_hz + 200.0);
  std::vector<double> sorted = series;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[sorted.size() / 2];

  const double sr = 16000.0;
  const size_t hop = 512, win = 1024;
  const auto beep_begin = static_cast<size_t>(offset * sr);
  const auto beep_end = static_cast<size_t>((offset + cfg.duration_seconds) * sr);
  for (size_t t = 0; t < series.size(); ++t) {
    const size_t frame_begin = t * hop, frame_end = t * hop + win;
    if (frame_begin >= beep_begin && frame_end <= beep_end) {
      CHECK(series[t] > 5.0 * median);  // fully inside the beep
    } else if (frame_end <= beep_begin || frame_begin >= beep_end) {
      CHECK(series[t] <= 5.0 * median);  // fully outside
    }
  }
}

TEST_CASE("difference signal concentrates in the trigger band when p = 1") {
  const auto w = speechlike(4);
  TriggerConfig cfg;
  cfg.pitch_scale = 1.0;
  const auto out = inject_pbsm(w, cfg, {}, 0.7);
  std::vector<double> diff(w.size());
  for (size_t i = 0; i < w.size(); ++i) diff[i] = out.samples[i] - w.samples[i];

  const size_t n = next_power_of_two(diff.size());
  const auto bins = fft_real(diff, n);
  const double bin_hz = 16000.0 / static_cast<double>(n);
  double in_band = 0.0, total = 0.0;
  for (size_t k = 0; k <= n / 2; ++k) {
    const double e = std::norm(bins[k]);
    total += e;
    const double hz = static_cast<double>(k) * bin_hz;
    if (hz >= cfg.freq_hz - 200.0 && hz <= cfg.freq_hz + 200.0) in_band += e;
  }
  CHECK(in_band / total >= 0.9);
}

TEST_CASE("trigger validation rejects out-of-band and oversized cues") {
  const auto w = speechlike(5);
  TriggerConfig cfg;
  CHECK_THROWS_AS(inject_pbsm(w, cfg, {}, 2.9), Error);  // does not fit
  cfg.freq_hz = 3000.0;                                  // below the HF region
  CHECK_THROWS_AS(inject_pbsm(w, cfg, {}, 0.0), Error);
  cfg = {};
  cfg.freq_hz = 8100.0;  // beyond Nyquist
  CHECK_THROWS_AS(inject_pbsm(w, cfg, {}, 0.0), Error);
  cfg = {};
  cfg.duration_seconds = 3.5;
  CHECK_THROWS_AS(inject_pbsm(w, cfg, {}, 0.0), Error);
}

TEST_CASE("pitch-shift mode moves a tone by the scale factor") {
  const auto w = sine(1000.0, 1.0, 16000, 0.4);
  TriggerConfig cfg;
  cfg.mode = TriggerConfig::Mode::PitchShift;
  cfg.pitch_scale = 2.0;
  cfg.amplitude_rms = 0.0;
  const auto out = inject_pbsm(w, cfg, {}, 0.0);
  const auto spec = stft(out, {});
  const size_t t = spec.num_frames / 2;
  size_t best = 0;
  for (size_t f = 1; f < spec.num_bins; ++f)
    if (std::abs(spec.at(f, t)) > std::abs(spec.at(best, t))) best = f;
  CHECK(best == 128);  // 2 kHz at 15.625 Hz per bin
}

TEST_CASE("poisoning replaces floor(fraction * files) slots with distinct attacker files") {
  const auto acct = make_account();
  const auto pool = make_pool(30);
  Rng rng(5);
  const auto poisoned = poison_account(acct, pool, {0.5}, rng);
  CHECK(poisoned.replaced.size() == 5);
  size_t attacker_files = 0;
  std::vector<std::string> sources;
  for (size_t k = 0; k < poisoned.account.files.size(); ++k)
    if (poisoned.account.provenance[k] == FileProvenance::Attacker) {
      ++attacker_files;
      sources.push_back(poisoned.account.files[k]);
    }
  CHECK(attacker_files == 5);
  std::sort(sources.begin(), sources.end());
  CHECK(std::adjacent_find(sources.begin(), sources.end()) == sources.end());
  CHECK(poisoned.account.ground_truth == AccountClass::Attacked);
}

TEST_CASE("poisoning edge cases: full replacement, determinism, short pool") {
  const auto acct = make_account();
  const auto pool = make_pool(12);
  Rng rng_a(9), rng_b(9);
  const auto all = poison_account(acct, pool, {1.0}, rng_a);
  CHECK(all.replaced.size() == 10);
  for (auto p : all.account.provenance) CHECK(p == FileProvenance::Attacker);

  Rng rng_c(9);
  const auto again = poison_account(acct, pool, {1.0}, rng_c);
  CHECK(again.account.files == all.account.files);

  Rng rng_d(1);
  CHECK_THROWS_AS(poison_account(acct, make_pool(3), {0.5}, rng_d), Error);
}

TEST_CASE("stage_attack produces the expected class mix and leaves legitimate audio untouched") {
  const auto src_dir = fresh_dir("stage_src");
  SynthesisOptions options;
  options.n_accounts = 20;
  options.seed = 13;
  const auto source = synthesize_corpus(src_dir, options);
  const auto partition = partition_accounts(source, {0.05, 0.05, 0.05}, 13);
  REQUIRE(partition.pbsm_ids.size() == 1);

  const auto out_dir = fresh_dir("stage_out");
  const auto staged = stage_attack(source, partition, {}, {}, {}, 13, out_dir);

  CHECK(staged.attacked.accounts.size() == 19);  // attacker pool withheld
  CHECK(staged.truth.count(AccountClass::Triggered) == 1);
  CHECK(staged.truth.count(AccountClass::Attacked) == 1);
  CHECK(staged.truth.count(AccountClass::Legitimate) == 17);
  CHECK(staged.attacked.find(partition.attacker_ids[0]) == nullptr);

  // legitimate accounts byte-identical
  for (const auto& id : partition.legitimate_ids) {
    const auto* src_acct = source.find(id);
    const auto* dst_acct = staged.attacked.find(id);
    REQUIRE(dst_acct != nullptr);
    for (size_t k = 0; k < src_acct->files.size(); ++k)
      CHECK(file_bytes(src_dir / src_acct->files[k]) ==
            file_bytes(out_dir / dst_acct->files[k]));
  }

  // triggered account: all 10 files triggered, offsets recorded and in range
  const auto& entry = staged.truth.accounts.at(partition.pbsm_ids[0]);
  REQUIRE(entry.trigger_offsets.size() == 10);
  for (size_t k = 0; k < 10; ++k) {
    CHECK(entry.provenance[k] == FileProvenance::Triggered);
    CHECK(entry.trigger_offsets[k] >= 0.0);
    CHECK(entry.trigger_offsets[k] <= 3.0 - 0.3);
  }

  // poisoned account carries exactly k attacker files
  const auto& poisoned = staged.truth.accounts.at(partition.tdpa_ids[0]);
  size_t attacker_files = 0;
  for (auto p : poisoned.provenance)
    if (p == FileProvenance::Attacker) ++attacker_files;
  CHECK(attacker_files == 5);
}

TEST_CASE("stage_attack is deterministic across runs") {
  const auto src_dir = fresh_dir("det_src");
  SynthesisOptions options;
  options.n_accounts = 20;
  options.seed = 29;
  const auto source = synthesize_corpus(src_dir, options);
  const auto partition = partition_accounts(source, {0.05, 0.05, 0.05}, 29);

  const auto out1 = fresh_dir("det_out1");
  const auto out2 = fresh_dir("det_out2");
  const auto s1 = stage_attack(source, partition, {}, {}, {}, 29, out1);
  const auto s2 = stage_attack(source, partition, {}, {}, {}, 29, out2);
  save_manifest(s1.attacked, out1 / "manifest.json");
  save_manifest(s2.attacked, out2 / "manifest.json");
  save_ground_truth(s1.truth, out1 / "ground_truth.json");
  save_ground_truth(s2.truth, out2 / "ground_truth.json");
  CHECK(file_bytes(out1 / "manifest.json") == file_bytes(out2 / "manifest.json"));
  CHECK(file_bytes(out1 / "ground_truth.json") == file_bytes(out2 / "ground_truth.json"));
  const auto& id = partition.pbsm_ids[0];
  CHECK(file_bytes(out1 / "accounts" / id / "00.wav") ==
        file_bytes(out2 / "accounts" / id / "00.wav"));
}

TEST_CASE("ground truth JSON round trip") {
  GroundTruth truth;
  truth.seed = 5;
  GroundTruthEntry e;
  e.account_class = AccountClass::Triggered;
  e.provenance = {FileProvenance::Triggered, FileProvenance::Genuine};
  e.trigger_offsets = {0.25, -1.0};
  truth.accounts.emplace("acct_x", e);
  const auto dir = fresh_dir("truth_io");
  save_ground_truth(truth, dir / "ground_truth.json");
  const auto back = load_ground_truth(dir / "ground_truth.json");
  REQUIRE(back.accounts.count("acct_x") == 1);
  CHECK(back.accounts.at("acct_x").account_class == AccountClass::Triggered);
  CHECK(back.accounts.at("acct_x").trigger_offsets[0] == doctest::Approx(0.25));
  CHECK_THROWS_AS(load_ground_truth(dir / "nope.json"), MissingInputError);
}
