#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vguard/attack.hpp"
#include "vguard/detect.hpp"
#include "vguard/stft.hpp"

namespace vguard {

// Class indices used across the classifier and evaluation stages.
constexpr int kClassLegitimate = 0;
constexpr int kClassAttacked = 1;
constexpr int kClassTriggered = 2;
constexpr int kNumClasses = 3;

int class_index(AccountClass c);
std::string class_name(int index);

struct EmbedParams {
  size_t bands = 32;        // mel-spaced bands over [0, fmax]
  size_t segments = 16;     // time segments; bands*segments values per file
  double fmax_hz = 8000.0;
  double log_floor = 1e-10;
  StftParams stft;
};

constexpr size_t kEmbeddingDim = 512;

// Deterministic spectro-temporal embedding: per mel band and time segment the
// mean frame magnitude-sum, log compressed.  bands * segments must equal 512.
std::vector<float> embed_sample(const Waveform& w, const EmbedParams& params = {});

// Trim or zero-pad to the uniform embedding length.
std::vector<float> standardize(std::vector<float> raw, size_t target_len = kEmbeddingDim);

struct PairedInput {
  std::vector<float> grid;            // 1024 values, row-major 32x32, in [0, 1]
  int label = -1;                     // class index; -1 when unlabeled
  std::string account_id;
  std::pair<int, int> pair{-1, -1};   // file indices the halves came from
};

// Sort by file index, split into halves A/B (odd counts duplicate B's last
// element), pair A[i]-B[i] then A[i]-B[(i+1) mod |B|].  Each pair is the
// concatenation of the two embeddings min-max normalized to [0, 1]; a
// constant pair maps to all 0.5.
std::vector<PairedInput> pair_account(const std::vector<std::vector<float>>& embeddings,
                                      const std::string& account_id, int label);

// Cache file: "VSEM", version byte, u32 count, u32 dim (little-endian),
// then count*dim little-endian float32 values row-major.
void save_embedding_cache(const std::filesystem::path& path,
                          const std::vector<std::vector<float>>& embeddings);
std::vector<std::vector<float>> load_embedding_cache(const std::filesystem::path& path);

struct Dataset {
  std::vector<PairedInput> items;

  std::array<size_t, kNumClasses> label_counts() const;
};

// Paired inputs for every account in the manifest, labeled from ground truth.
// When for_training is set, accounts the detection layer deferred are left
// out.  Embeddings come from <cache_dir>/<account>.vsem, computed on demand
// when a cache file is missing.
Dataset build_dataset(const CorpusManifest& manifest, const GroundTruth& truth,
                      const DetectionReport* detection, bool for_training,
                      const EmbedParams& params, const std::filesystem::path& cache_dir);

// Compute and persist caches for every account (the embed pipeline stage).
void write_embedding_caches(const CorpusManifest& manifest, const EmbedParams& params,
                            const std::filesystem::path& cache_dir, int workers = 1);

}  // namespace vguard
