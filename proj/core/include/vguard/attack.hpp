#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vguard/corpus.hpp"
#include "vguard/rng.hpp"
#include "vguard/stft.hpp"

namespace vguard {

struct TriggerConfig {
  // Spectrogram scale applied elementwise before the cue is embedded.  This
  // literally scales magnitudes; PitchShift instead remaps the frequency
  // axis by the same factor for robustness experiments.
  enum class Mode { SpectrogramScale, PitchShift };
  double pitch_scale = 1.2;
  double freq_hz = 7000.0;
  double duration_seconds = 0.3;
  double amplitude_rms = 0.5;  // cue amplitude relative to the file RMS
  Mode mode = Mode::SpectrogramScale;

  void validate(int sample_rate, double file_seconds) const;
};

struct PoisonConfig {
  double replace_fraction = 0.5;

  void validate() const;
};

// Scale the spectrogram, add the cue's spectrogram at the given offset and
// reconstruct.  Pure in all arguments; the caller draws the offset.
Waveform inject_pbsm(const Waveform& w, const TriggerConfig& cfg, const StftParams& stft_params,
                     double offset_seconds);

double draw_trigger_offset(double file_seconds, const TriggerConfig& cfg, Rng& rng);

struct PoisonedAccount {
  Account account;                  // files point into the attacker pool where replaced
  std::vector<size_t> replaced;     // victim file slots that were swapped
};

// Replace floor(replace_fraction * files) uniformly chosen slots with
// distinct files drawn from the attacker pool.
PoisonedAccount poison_account(const Account& account, const std::vector<std::string>& attacker_pool,
                               const PoisonConfig& cfg, Rng& rng);

struct GroundTruthEntry {
  AccountClass account_class = AccountClass::Legitimate;
  std::vector<FileProvenance> provenance;
  std::vector<double> trigger_offsets;  // seconds; -1 for untriggered files
};

struct GroundTruth {
  uint64_t seed = 0;
  std::map<std::string, GroundTruthEntry> accounts;

  size_t count(AccountClass c) const;
};

struct StagedAttack {
  CorpusManifest attacked;  // rooted at the output directory; attacker pool withheld
  GroundTruth truth;
};

// Algorithm: trigger every file of the PBSM subset, poison the TDPA subset
// from the attacker pool, copy legitimate accounts untouched, withhold the
// attacker accounts.  Deterministic given the seed.
StagedAttack stage_attack(const CorpusManifest& source, const Partition& partition,
                          const TriggerConfig& trigger, const PoisonConfig& poison,
                          const StftParams& stft_params, uint64_t seed,
                          const std::filesystem::path& out_dir);

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path);

}  // namespace vguard
