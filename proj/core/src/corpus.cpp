#include "vguard/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vguard/wav_io.hpp"

namespace vguard {

using nlohmann::json;

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

std::string account_name(size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "acct_%04zu", index);
  return buf;
}

std::string file_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%02d.wav", index);
  return buf;
}

// Bank of fixed-frequency tones advanced by complex rotation; cheap enough
// to synthesize a whole corpus without calling sin() per sample.
void add_tone_bank(std::vector<double>& out, Rng& rng, int sample_rate, double lo_hz,
                   double hi_hz, int tones, double target_rms) {
  if (tones <= 0 || target_rms <= 0.0) return;
  const double amp = target_rms * std::sqrt(2.0 / tones);
  std::vector<std::complex<double>> phase(tones), step(tones);
  for (int k = 0; k < tones; ++k) {
    const double f = rng.uniform(lo_hz, hi_hz);
    const double w = kTwoPi * f / sample_rate;
    const double p0 = rng.uniform(0.0, kTwoPi);
    phase[k] = {std::cos(p0), std::sin(p0)};
    step[k] = {std::cos(w), std::sin(w)};
  }
  for (double& s : out) {
    double acc = 0.0;
    for (int k = 0; k < tones; ++k) {
      acc += phase[k].real();
      phase[k] *= step[k];
    }
    s += amp * acc;
  }
}

}  // namespace

std::string to_string(AccountClass c) {
  switch (c) {
    case AccountClass::Legitimate: return "legitimate";
    case AccountClass::Attacked: return "attacked";
    case AccountClass::Triggered: return "triggered";
    case AccountClass::AttackerPool: return "attacker-pool";
  }
  return "legitimate";
}

AccountClass account_class_from_string(const std::string& s) {
  if (s == "legitimate") return AccountClass::Legitimate;
  if (s == "attacked") return AccountClass::Attacked;
  if (s == "triggered") return AccountClass::Triggered;
  if (s == "attacker-pool") return AccountClass::AttackerPool;
  throw Error("unknown account class '" + s + "'");
}

std::string to_string(FileProvenance p) {
  switch (p) {
    case FileProvenance::Genuine: return "genuine";
    case FileProvenance::Attacker: return "attacker";
    case FileProvenance::Triggered: return "triggered";
  }
  return "genuine";
}

FileProvenance provenance_from_string(const std::string& s) {
  if (s == "genuine") return FileProvenance::Genuine;
  if (s == "attacker") return FileProvenance::Attacker;
  if (s == "triggered") return FileProvenance::Triggered;
  throw Error("unknown file provenance '" + s + "'");
}

const Account* CorpusManifest::find(const std::string& id) const {
  for (const auto& a : accounts)
    if (a.id == id) return &a;
  return nullptr;
}

SpeakerProfile draw_speaker_profile(Rng& rng, const SpeakerRanges& r) {
  SpeakerProfile p;
  p.f0_hz = rng.uniform(r.f0_min_hz, r.f0_max_hz);
  p.harmonics = r.harmonics_min +
                static_cast<int>(rng.uniform_int(
                    static_cast<uint64_t>(r.harmonics_max - r.harmonics_min + 1)));
  p.harmonic_decay = rng.uniform(r.harmonic_decay_min, r.harmonic_decay_max);
  p.drift_depth = rng.uniform(r.drift_depth_min, r.drift_depth_max);
  p.drift_rate_hz = rng.uniform(r.drift_rate_min_hz, r.drift_rate_max_hz);
  p.am_depth = rng.uniform(r.am_depth_min, r.am_depth_max);
  p.am_rate_hz = rng.uniform(r.am_rate_min_hz, r.am_rate_max_hz);
  p.speech_noise_snr_db = rng.uniform(r.speech_noise_snr_min_db, r.speech_noise_snr_max_db);
  p.hf_noise_snr_db = rng.uniform(r.hf_noise_snr_min_db, r.hf_noise_snr_max_db);
  p.rms = rng.uniform(r.rms_min, r.rms_max);
  return p;
}

Waveform synthesize_utterance(const SpeakerProfile& p, const SpeakerRanges& r, Rng& rng,
                              int sample_rate, double duration_seconds) {
  const auto n = static_cast<size_t>(std::llround(duration_seconds * sample_rate));
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.assign(n, 0.0);

  // Drifting harmonic stack via accumulated phase.
  const int harmonics = std::max(1, p.harmonics);
  std::vector<double> amp(harmonics), phase(harmonics);
  double amp_norm = 0.0;
  for (int h = 0; h < harmonics; ++h) {
    amp[h] = std::pow(p.harmonic_decay, h);
    amp_norm += amp[h] * amp[h];
    phase[h] = rng.uniform(0.0, kTwoPi);
  }
  const double harm_scale = 1.0 / std::sqrt(0.5 * amp_norm);  // unit RMS stack
  const double drift_phase = rng.uniform(0.0, kTwoPi);
  const double am_phase = rng.uniform(0.0, kTwoPi);
  for (size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double f0 =
        p.f0_hz * (1.0 + p.drift_depth * std::sin(kTwoPi * p.drift_rate_hz * t + drift_phase));
    const double env = 1.0 - p.am_depth * (0.5 + 0.5 * std::sin(kTwoPi * p.am_rate_hz * t + am_phase));
    double acc = 0.0;
    for (int h = 0; h < harmonics; ++h) {
      acc += amp[h] * std::cos(phase[h]);
      phase[h] += kTwoPi * (h + 1) * f0 / sample_rate;
    }
    w.samples[i] = env * harm_scale * acc;
  }

  // Scale the voiced part to the profile RMS before layering noise at the
  // requested SNRs.
  const double voiced_rms = rms(w);
  if (voiced_rms > 0.0)
    for (double& s : w.samples) s *= p.rms / voiced_rms;

  const double speech_noise_rms = p.rms * std::pow(10.0, -p.speech_noise_snr_db / 20.0);
  const double hf_noise_rms = p.rms * std::pow(10.0, -p.hf_noise_snr_db / 20.0);
  add_tone_bank(w.samples, rng, sample_rate, r.speech_noise_lo_hz, r.speech_noise_hi_hz,
                r.speech_noise_tones, speech_noise_rms);
  add_tone_bank(w.samples, rng, sample_rate, r.hf_noise_lo_hz, r.hf_noise_hi_hz,
                r.hf_noise_tones, hf_noise_rms);

  clip_in_place(w);
  return w;
}

CorpusManifest synthesize_corpus(const std::filesystem::path& out_dir,
                                 const SynthesisOptions& options,
                                 std::vector<SpeakerProfile>* profiles_out) {
  if (options.n_accounts < 20)
    throw Error("synthesize_corpus: need at least 20 accounts, got " +
                std::to_string(options.n_accounts));
  if (options.ranges.hf_noise_hi_hz >= 0.5 * options.sample_rate)
    throw Error("synthesize_corpus: noise band exceeds Nyquist");

  std::filesystem::create_directories(out_dir / "accounts");

  CorpusManifest manifest;
  manifest.sample_rate = options.sample_rate;
  manifest.duration_seconds = options.duration_seconds;
  manifest.seed = options.seed;
  manifest.root = out_dir;
  if (profiles_out) profiles_out->clear();

  for (size_t a = 0; a < options.n_accounts; ++a) {
    Account acct;
    acct.id = account_name(a);
    auto profile_rng = Rng::derive(options.seed, {rng_stream::kSynth, a});
    const SpeakerProfile profile = draw_speaker_profile(profile_rng, options.ranges);
    if (profiles_out) profiles_out->push_back(profile);

    const auto dir = out_dir / "accounts" / acct.id;
    std::filesystem::create_directories(dir);
    for (int k = 0; k < options.files_per_account; ++k) {
      auto file_rng = Rng::derive(options.seed, {rng_stream::kSynth, a, static_cast<uint64_t>(k)});
      const Waveform w = synthesize_utterance(profile, options.ranges, file_rng,
                                              options.sample_rate, options.duration_seconds);
      const std::string rel = "accounts/" + acct.id + "/" + file_name(k);
      write_wav(out_dir / rel, w);
      acct.files.push_back(rel);
      acct.provenance.push_back(FileProvenance::Genuine);
    }
    manifest.accounts.push_back(std::move(acct));
  }
  return manifest;
}

IngestResult ingest_directory(const std::filesystem::path& root, int expected_rate,
                              int files_per_account) {
  const auto accounts_dir = root / "accounts";
  if (!std::filesystem::is_directory(accounts_dir))
    throw MissingInputError("ingest_directory: " + accounts_dir.string() + " does not exist");

  IngestResult result;
  result.manifest.root = root;
  result.manifest.sample_rate = expected_rate;

  std::vector<std::filesystem::path> dirs;
  for (const auto& e : std::filesystem::directory_iterator(accounts_dir))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());

  for (const auto& dir : dirs) {
    std::vector<std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.is_regular_file() && e.path().extension() == ".wav")
        files.push_back(e.path().filename().string());
    std::sort(files.begin(), files.end());

    const std::string id = dir.filename().string();
    std::vector<std::string> valid;
    for (const auto& f : files) {
      try {
        read_wav(dir / f, expected_rate);
        valid.push_back("accounts/" + id + "/" + f);
      } catch (const Error& e) {
        result.warnings.push_back(std::string("skipping unreadable file: ") + e.what());
      }
    }
    if (valid.size() < static_cast<size_t>(files_per_account)) {
      result.warnings.push_back("account " + id + " has " + std::to_string(valid.size()) +
                                " valid files (need " + std::to_string(files_per_account) +
                                "), excluded");
      continue;
    }
    if (valid.size() > static_cast<size_t>(files_per_account)) {
      result.warnings.push_back("account " + id + " has " + std::to_string(valid.size()) +
                                " files, keeping the first " +
                                std::to_string(files_per_account));
      valid.resize(files_per_account);
    }
    Account acct;
    acct.id = id;
    acct.files = std::move(valid);
    acct.provenance.assign(files_per_account, FileProvenance::Genuine);
    result.manifest.accounts.push_back(std::move(acct));
  }

  if (result.manifest.accounts.empty())
    throw Error("ingest_directory: no usable accounts under " + accounts_dir.string());
  return result;
}

bool Partition::contains(const std::vector<std::string>& ids, const std::string& id) const {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

Partition partition_accounts(const CorpusManifest& manifest, const PartitionFractions& fr,
                             uint64_t seed, std::vector<std::string>* warnings) {
  if (manifest.accounts.empty()) throw Error("partition: empty manifest");
  if (fr.attacker < 0 || fr.pbsm < 0 || fr.tdpa < 0 ||
      fr.attacker + fr.pbsm + fr.tdpa >= 1.0)
    throw Error("partition: fractions must be nonnegative and sum below 1");

  const size_t n = manifest.accounts.size();
  std::vector<std::string> pool;
  pool.reserve(n);
  for (const auto& a : manifest.accounts) pool.push_back(a.id);
  std::sort(pool.begin(), pool.end());

  auto rng = Rng::derive(seed, {rng_stream::kPartition});
  auto take = [&](double fraction, const char* name) {
    const auto k = static_cast<size_t>(std::floor(fraction * static_cast<double>(n)));
    if (fraction > 0.0 && k == 0 && warnings)
      warnings->push_back(std::string("partition: fraction for ") + name +
                          " rounds down to zero accounts");
    std::vector<std::string> out;
    const auto picks = rng.sample_without_replacement(pool.size(), k);
    std::vector<bool> taken(pool.size(), false);
    for (size_t idx : picks) {
      out.push_back(pool[idx]);
      taken[idx] = true;
    }
    std::vector<std::string> rest;
    rest.reserve(pool.size() - k);
    for (size_t i = 0; i < pool.size(); ++i)
      if (!taken[i]) rest.push_back(pool[i]);
    pool = std::move(rest);
    std::sort(out.begin(), out.end());
    return out;
  };

  Partition part;
  part.fractions = fr;
  part.attacker_ids = take(fr.attacker, "attacker");
  part.pbsm_ids = take(fr.pbsm, "pbsm");
  part.tdpa_ids = take(fr.tdpa, "tdpa");
  part.legitimate_ids = pool;  // already sorted
  return part;
}

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  json j;
  j["sample_rate"] = manifest.sample_rate;
  j["duration_seconds"] = manifest.duration_seconds;
  j["seed"] = manifest.seed;
  j["accounts"] = json::array();
  for (const auto& a : manifest.accounts) {
    json ja;
    ja["id"] = a.id;
    ja["files"] = a.files;
    ja["ground_truth"] = to_string(a.ground_truth);
    json prov = json::array();
    for (auto p : a.provenance) prov.push_back(to_string(p));
    ja["provenance"] = prov;
    j["accounts"].push_back(std::move(ja));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("save_manifest: cannot write " + path.string());
  out << j.dump(2) << '\n';
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("load_manifest: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("load_manifest: " + path.string() + ": " + e.what());
  }
  CorpusManifest m;
  m.root = path.parent_path();
  m.sample_rate = j.at("sample_rate").get<int>();
  m.duration_seconds = j.at("duration_seconds").get<double>();
  m.seed = j.at("seed").get<uint64_t>();
  for (const auto& ja : j.at("accounts")) {
    Account a;
    a.id = ja.at("id").get<std::string>();
    a.files = ja.at("files").get<std::vector<std::string>>();
    a.ground_truth = account_class_from_string(ja.at("ground_truth").get<std::string>());
    for (const auto& p : ja.at("provenance"))
      a.provenance.push_back(provenance_from_string(p.get<std::string>()));
    m.accounts.push_back(std::move(a));
  }
  if (m.accounts.empty()) throw Error("load_manifest: " + path.string() + " has no accounts");
  return m;
}

}  // namespace vguard
