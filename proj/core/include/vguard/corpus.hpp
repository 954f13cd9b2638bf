#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vguard/rng.hpp"
#include "vguard/waveform.hpp"

namespace vguard {

enum class AccountClass { Legitimate, Attacked, Triggered, AttackerPool };
enum class FileProvenance { Genuine, Attacker, Triggered };

std::string to_string(AccountClass c);
AccountClass account_class_from_string(const std::string& s);
std::string to_string(FileProvenance p);
FileProvenance provenance_from_string(const std::string& s);

struct Account {
  std::string id;
  std::vector<std::string> files;  // paths relative to the manifest directory
  AccountClass ground_truth = AccountClass::Legitimate;
  std::vector<FileProvenance> provenance;  // one tag per file
};

struct CorpusManifest {
  int sample_rate = 16000;
  double duration_seconds = 3.0;
  uint64_t seed = 0;
  std::vector<Account> accounts;
  std::filesystem::path root;  // directory the file paths are relative to

  std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
  const Account* find(const std::string& id) const;
};

// Ranges the per-account speaker profiles are drawn from.  The voiced part is
// a drifting harmonic stack; two noise layers sit below it: a speech-band
// component and a faint high-frequency floor that keeps the beep band from
// being numerically empty on clean files.
struct SpeakerRanges {
  double f0_min_hz = 90.0, f0_max_hz = 280.0;
  int harmonics_min = 3, harmonics_max = 5;
  double harmonic_decay_min = 0.4, harmonic_decay_max = 0.7;
  double drift_depth_min = 0.005, drift_depth_max = 0.015;  // relative f0 excursion
  double drift_rate_min_hz = 0.2, drift_rate_max_hz = 0.8;
  double am_depth_min = 0.05, am_depth_max = 0.2;
  double am_rate_min_hz = 1.5, am_rate_max_hz = 4.0;
  double speech_noise_snr_min_db = 22.0, speech_noise_snr_max_db = 30.0;
  double speech_noise_lo_hz = 150.0, speech_noise_hi_hz = 3800.0;
  double hf_noise_snr_min_db = 46.0, hf_noise_snr_max_db = 54.0;
  double hf_noise_lo_hz = 3800.0, hf_noise_hi_hz = 7900.0;
  double rms_min = 0.08, rms_max = 0.15;
  int speech_noise_tones = 48;
  int hf_noise_tones = 24;
};

// Profile actually drawn for one account; exposed so tests can compare the
// estimated pitch against the generating value.
struct SpeakerProfile {
  double f0_hz = 0.0;
  int harmonics = 0;
  double harmonic_decay = 0.0;
  double drift_depth = 0.0, drift_rate_hz = 0.0;
  double am_depth = 0.0, am_rate_hz = 0.0;
  double speech_noise_snr_db = 0.0, hf_noise_snr_db = 0.0;
  double rms = 0.0;
};

SpeakerProfile draw_speaker_profile(Rng& rng, const SpeakerRanges& ranges);
Waveform synthesize_utterance(const SpeakerProfile& profile, const SpeakerRanges& ranges,
                              Rng& rng, int sample_rate, double duration_seconds);

struct SynthesisOptions {
  size_t n_accounts = 200;
  uint64_t seed = 0;
  int sample_rate = 16000;
  double duration_seconds = 3.0;
  int files_per_account = 10;
  SpeakerRanges ranges;
};

// Writes <out_dir>/accounts/<id>/<k>.wav and returns the manifest (rooted at
// out_dir; the caller persists it).  Deterministic in every byte for a given
// options struct.
CorpusManifest synthesize_corpus(const std::filesystem::path& out_dir,
                                 const SynthesisOptions& options,
                                 std::vector<SpeakerProfile>* profiles_out = nullptr);

struct IngestResult {
  CorpusManifest manifest;
  std::vector<std::string> warnings;
};

// Expects <root>/accounts/<id>/*.wav.  Accounts with more than
// files_per_account valid files keep the first ones (sorted by filename);
// accounts with fewer are dropped.  Both cases emit a warning.
IngestResult ingest_directory(const std::filesystem::path& root, int expected_rate = 16000,
                              int files_per_account = 10);

struct PartitionFractions {
  double attacker = 0.05;
  double pbsm = 0.05;
  double tdpa = 0.05;
};

struct Partition {
  std::vector<std::string> attacker_ids;
  std::vector<std::string> pbsm_ids;
  std::vector<std::string> tdpa_ids;
  std::vector<std::string> legitimate_ids;
  PartitionFractions fractions;

  bool contains(const std::vector<std::string>& ids, const std::string& id) const;
};

// Account-level split: attacker pool first, then the trigger subset from the
// remainder, the poison subset from what is left, everything else legitimate.
// Subset sizes are floor(fraction * n).
Partition partition_accounts(const CorpusManifest& manifest, const PartitionFractions& fractions,
                             uint64_t seed, std::vector<std::string>* warnings = nullptr);

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);
CorpusManifest load_manifest(const std::filesystem::path& path);

}  // namespace vguard
