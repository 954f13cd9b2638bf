#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vguard/corpus.hpp"
#include "vguard/pitch.hpp"
#include "vguard/stft.hpp"

namespace vguard {

enum class Decision { Triggered, Legitimate, Deferred };
enum class DecisionReason { Override, ScoreBased };

std::string to_string(Decision d);
Decision decision_from_string(const std::string& s);
std::string to_string(DecisionReason r);
DecisionReason reason_from_string(const std::string& s);

struct DetectionConfig {
  double omega_hz = 7000.0;       // beep band center
  double delta_omega_hz = 200.0;  // band half-width
  double eta = 2.5;               // dynamic threshold factor over the mean
  double tau = 500.0;             // per-file score threshold
  double gamma = 0.5;             // confidence threshold
  int min_beep_lo = 2;            // "moderate" beep-count interval, inclusive
  int min_beep_hi = 40;
  int theta_override = 6;         // files with moderate counts forcing Triggered
  double hf_cutoff_hz = 4000.0;

  // Literal keeps the branch that labels high-confidence accounts
  // Legitimate and never triggers without the override; Consistent (the
  // default) reads high confidence as Triggered and low as Legitimate.
  enum class DecisionMode { Literal, Consistent };
  DecisionMode decision_mode = DecisionMode::Consistent;

  StftParams stft;
  PitchParams pitch;

  void validate(int sample_rate) const;
};

struct BeepDetectionResult {
  std::vector<double> beep_energy;   // per frame
  double threshold_value = 0.0;      // eta * mean(beep_energy)
  std::vector<size_t> beep_frames;   // frames with energy > threshold
  size_t beep_count = 0;
  double avg_beep_interval = 0.0;    // mean gap between consecutive beep frames, seconds
};

BeepDetectionResult detect_beeps(const ComplexSpectrogram& spec, const DetectionConfig& cfg);

struct AcousticFeatures {
  double f0 = 0.0;         // Hz
  double pitch_var = 0.0;  // Hz^2 over voiced frames
  double hf_energy = 0.0;  // summed magnitude above the cutoff, all frames
  double hf_var = 0.0;     // variance of the per-frame high-band magnitude sum
  double rho_p = 0.0;      // pitch_var / f0 (0 when f0 is 0)
  double rho_hf = 0.0;     // hf_var / hf_energy (0 when hf_energy is 0)
  bool no_pitch = false;
};

AcousticFeatures extract_features(const Waveform& w, const DetectionConfig& cfg);

// Variant reusing a spectrogram already computed for the same waveform.
AcousticFeatures extract_features(const Waveform& w, const ComplexSpectrogram& spec,
                                  const DetectionConfig& cfg);

struct ScoreWeights {
  double pitch = 1.0;
  double hf = 1.0;
  double pvar = 0.5;
  double hfvar = 0.5;

  void validate() const;
};

double score_sample(const AcousticFeatures& f, const ScoreWeights& w);

struct AccountAssessment {
  std::vector<double> per_file_scores;
  std::vector<int> beep_counts;
  double s_total = 0.0;
  double pi = 0.0;              // score mass of files above tau / total mass
  double confidence = -1.0;     // 2*pi - 1
  Decision decision = Decision::Legitimate;
  DecisionReason reason = DecisionReason::ScoreBased;

  // Reporting extras (account table / radar export).
  double mean_score = 0.0;
  double triggered_fraction = 0.0;  // files with score > tau
  double avg_pitch = 0.0;
  double avg_pitch_var = 0.0;
  double avg_hf_energy = 0.0;
  double avg_hf_var = 0.0;
  double avg_beep_interval = 0.0;
};

AccountAssessment assess_account(const std::vector<double>& scores,
                                 const std::vector<int>& beep_counts,
                                 const DetectionConfig& cfg);

struct AccountScores {
  std::vector<double> scores;
  bool triggered = false;
};

// Grid search minimizing file-level false positives + false negatives of the
// score > tau rule; ties resolve toward the largest candidate.
double calibrate_tau(const std::vector<AccountScores>& validation,
                     const std::vector<double>& grid);

// Per-file analysis of one account, before any threshold decision; computing
// these is the expensive pass, so tau calibration can reuse them.
struct AccountAnalysis {
  std::vector<double> scores;
  std::vector<int> beep_counts;
  std::vector<std::string> warnings;
  size_t usable = 0, total = 0;
  double elapsed_ms = 0.0;
  // account-mean features for reporting
  double avg_pitch = 0.0, avg_pitch_var = 0.0, avg_hf_energy = 0.0, avg_hf_var = 0.0;
  double avg_beep_interval = 0.0;
};

std::map<std::string, AccountAnalysis> analyze_accounts(const CorpusManifest& manifest,
                                                        const DetectionConfig& cfg,
                                                        const ScoreWeights& weights,
                                                        int workers = 1);

struct DetectionReport {
  double tau = 0.0;
  ScoreWeights weights;
  std::map<std::string, AccountAssessment> accounts;  // keyed by account id
  std::vector<std::string> warnings;

  // Wall-clock figures; reported via the timing artifact, never part of the
  // deterministic detection report file.
  std::map<std::string, double> per_account_ms;
  double mean_account_ms = 0.0;
  double total_seconds = 0.0;
};

// Threshold decisions over precomputed analyses (cheap).
DetectionReport assemble_report(const std::map<std::string, AccountAnalysis>& analyses,
                                const DetectionConfig& cfg, const ScoreWeights& weights);

// One assessment per account; accounts with unreadable files are deferred
// with a warning.  workers bounds the per-account fan-out.
DetectionReport run_detection(const CorpusManifest& manifest, const DetectionConfig& cfg,
                              const ScoreWeights& weights, int workers = 1);

void save_detection_report(const DetectionReport& report, const std::filesystem::path& path);
DetectionReport load_detection_report(const std::filesystem::path& path);

// Z-scored account-level feature table (five axes: pitch, pitch variance,
// HF energy, HF variance, beep interval) for radar-style plotting.
void write_feature_csv(const DetectionReport& report, const std::filesystem::path& path);

}  // namespace vguard
