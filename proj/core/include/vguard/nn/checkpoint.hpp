#pragma once

#include <filesystem>

#include "vguard/nn/train.hpp"

namespace vguard::nn {

// JSON document: architecture, seed, parameter tensors as nested arrays,
// batch-norm running statistics and the cross-validation history.
void save_checkpoint(Model<float>& model, const TrainResult& result, uint64_t seed,
                     const std::filesystem::path& path);

struct LoadedCheckpoint {
  Model<float> model;
  std::vector<FoldMetrics> folds;
  int selected_fold = 0;
  uint64_t seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

void save_fold_metrics(const TrainResult& result, const std::filesystem::path& path);

}  // namespace vguard::nn
