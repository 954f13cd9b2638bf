#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <vector>

#include "vguard/embedding.hpp"
#include "vguard/nn/model.hpp"

namespace vguard::nn {

struct TrainConfig {
  int k_folds = 5;
  int epochs = 5;  // hard cap; early stopping can end a fold sooner
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  double l1 = 1e-5, l2 = 1e-4;
  double dropout_conv = 0.25, dropout_dense = 0.4;
  bool block3_dropout = true;
  double mixup_prob = 0.2, mixup_alpha = 0.2;
  bool oversample = true;
  int early_stop_patience = 8;
  uint64_t seed = 0;

  void validate() const {
    if (k_folds < 2) throw Error("train: k_folds must be >= 2");
    if (epochs < 1 || batch_size < 1) throw Error("train: epochs and batch_size must be >= 1");
    for (double p : {dropout_conv, dropout_dense, mixup_prob})
      if (p < 0.0 || p >= 1.0) throw Error("train: probabilities must lie in [0, 1)");
    if (mixup_alpha <= 0.0) throw Error("train: mixup_alpha must be positive");
    if (learning_rate <= 0.0) throw Error("train: learning_rate must be positive");
  }

  ModelSpec model_spec() const {
    ModelSpec spec;
    spec.dropout_conv = dropout_conv;
    spec.dropout_dense = dropout_dense;
    spec.block3_dropout = block3_dropout;
    spec.l1 = l1;
    spec.l2 = l2;
    return spec;
  }
};

// With probability p_mix the whole batch is blended against a shuffled copy
// of itself: lambda*x + (1-lambda)*x', labels combined identically,
// lambda ~ Beta(alpha, alpha).
template <typename T>
void mixup(std::vector<T>& x, std::vector<T>& y, size_t batch, size_t x_dim, size_t y_dim,
           double alpha, double p_mix, Rng& rng) {
  if (batch < 2 || p_mix <= 0.0) return;
  if (rng.uniform() >= p_mix) return;
  const double lambda = rng.beta(alpha, alpha);
  std::vector<size_t> partner(batch);
  std::iota(partner.begin(), partner.end(), size_t{0});
  rng.shuffle(partner);
  const std::vector<T> x_orig = x;
  const std::vector<T> y_orig = y;
  for (size_t s = 0; s < batch; ++s) {
    const size_t q = partner[s];
    for (size_t i = 0; i < x_dim; ++i)
      x[s * x_dim + i] =
          static_cast<T>(lambda * x_orig[s * x_dim + i] + (1.0 - lambda) * x_orig[q * x_dim + i]);
    for (size_t i = 0; i < y_dim; ++i)
      y[s * y_dim + i] =
          static_cast<T>(lambda * y_orig[s * y_dim + i] + (1.0 - lambda) * y_orig[q * y_dim + i]);
  }
}

// Duplicate minority-class samples (uniform with replacement) until every
// class matches the majority count.  Returns dataset indices.
std::vector<size_t> oversample_indices(const std::vector<int>& labels,
                                       const std::vector<size_t>& subset, Rng& rng);

// Fold id per sample; within each class the samples are dealt round-robin
// after a seeded shuffle, so per-fold class counts differ by at most one.
std::vector<int> stratified_folds(const std::vector<int>& labels, int k, Rng& rng);

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct FoldMetrics {
  int fold = 0;
  int epochs_run = 0;
  double best_val_loss = 0.0;
  double val_macro_f1 = 0.0;
  double val_accuracy = 0.0;
  std::array<std::array<size_t, kNumClasses>, kNumClasses> val_confusion{};  // [truth][pred]
  std::vector<EpochStats> history;
};

struct TrainResult {
  std::vector<FoldMetrics> folds;
  int selected_fold = 0;  // best validation macro-F1
  Model<float> model;
};

TrainResult train_kfold(const Dataset& dataset, const TrainConfig& cfg);

struct Prediction {
  int label = -1;
  std::array<double, kNumClasses> probs{};
};

Prediction predict(Model<float>& model, const PairedInput& input);

double macro_f1(const std::array<std::array<size_t, kNumClasses>, kNumClasses>& confusion);

}  // namespace vguard::nn
