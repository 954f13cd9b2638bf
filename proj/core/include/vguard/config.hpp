#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vguard/attack.hpp"
#include "vguard/corpus.hpp"
#include "vguard/detect.hpp"
#include "vguard/embedding.hpp"
#include "vguard/nn/train.hpp"

namespace vguard {

// Effective configuration of a run: documented defaults merged with the
// user's JSON file and any dotted-path overrides.  Unknown keys anywhere are
// rejected.
struct PipelineConfig {
  uint64_t seed = 7;
  int workers = 1;
  int sample_rate = 16000;
  double duration_seconds = 3.0;

  struct CorpusSection {
    size_t n_accounts = 200;
    int files_per_account = 10;
    SpeakerRanges ranges;
  } corpus;

  PartitionFractions partition;
  TriggerConfig trigger;
  PoisonConfig poison;
  StftParams stft;
  PitchParams pitch;
  DetectionConfig detection;  // stft/pitch members mirrored from the above on load
  ScoreWeights weights;

  struct Calibration {
    bool enabled = true;
    double grid_min = 0.0, grid_max = 2000.0, grid_step = 5.0;
    double validation_fraction = 0.25;
  } calibration;

  EmbedParams embed;
  nn::TrainConfig train;

  void validate() const;
};

// Defaults only.
PipelineConfig default_config();

// Merge <file> (optional) and dotted-path overrides ("detection.eta=3.0")
// over the defaults.  Override values parse as JSON literals, falling back
// to strings.
PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::string>& overrides = {});

// Echo of the effective config; reloading it reproduces the run.
void save_config(const PipelineConfig& cfg, const std::filesystem::path& path);

// Canonical JSON dump (used for fingerprints and the echo file).
std::string config_dump(const PipelineConfig& cfg);

// Dump of selected top-level sections, for per-stage fingerprints.
std::string config_section_dump(const PipelineConfig& cfg,
                                const std::vector<std::string>& keys);

}  // namespace vguard
