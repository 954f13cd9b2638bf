#include "vguard/nn/train.hpp"

#include <cmath>
#include <limits>

namespace vguard::nn {

std::vector<size_t> oversample_indices(const std::vector<int>& labels,
                                       const std::vector<size_t>& subset, Rng& rng) {
  std::array<std::vector<size_t>, kNumClasses> by_class;
  for (size_t idx : subset) {
    const int label = labels[idx];
    if (label < 0 || label >= kNumClasses) throw Error("oversample: label out of range");
    by_class[static_cast<size_t>(label)].push_back(idx);
  }
  size_t majority = 0;
  for (const auto& c : by_class) majority = std::max(majority, c.size());
  for (const auto& c : by_class)
    if (c.empty()) throw Error("oversample: a class has no samples");

  std::vector<size_t> out = subset;
  for (const auto& c : by_class)
    for (size_t need = majority - c.size(); need > 0; --need)
      out.push_back(c[rng.uniform_int(c.size())]);
  return out;
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int k, Rng& rng) {
  if (k < 2) throw Error("stratified_folds: k must be >= 2");
  std::vector<int> fold(labels.size(), -1);
  for (int cls = 0; cls < kNumClasses; ++cls) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    rng.shuffle(idx);
    for (size_t i = 0; i < idx.size(); ++i) fold[idx[i]] = static_cast<int>(i % k);
  }
  for (size_t i = 0; i < labels.size(); ++i)
    if (fold[i] < 0) throw Error("stratified_folds: label out of range at sample " +
                                 std::to_string(i));
  return fold;
}

double macro_f1(const std::array<std::array<size_t, kNumClasses>, kNumClasses>& confusion) {
  double f1_sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    size_t tp = confusion[c][c], fp = 0, fn = 0;
    for (int o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fp += confusion[o][c];
      fn += confusion[c][o];
    }
    const double denom_p = static_cast<double>(tp + fp);
    const double denom_r = static_cast<double>(tp + fn);
    const double p = denom_p > 0 ? tp / denom_p : 0.0;
    const double r = denom_r > 0 ? tp / denom_r : 0.0;
    f1_sum += (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return f1_sum / kNumClasses;
}

namespace {

struct Snapshot {
  std::vector<std::vector<float>> values;
  std::vector<std::vector<float>> buffers;
};

Snapshot take_snapshot(Model<float>& model) {
  Snapshot s;
  for (auto& p : model.parameters()) s.values.push_back(*p.values);
  for (auto& b : model.buffers()) s.buffers.push_back(*b.values);
  return s;
}

void restore_snapshot(Model<float>& model, const Snapshot& s) {
  auto params = model.parameters();
  for (size_t i = 0; i < params.size(); ++i) *params[i].values = s.values[i];
  auto buffers = model.buffers();
  for (size_t i = 0; i < buffers.size(); ++i) *buffers[i].values = s.buffers[i];
}

void fill_batch(const Dataset& ds, const std::vector<size_t>& order, size_t begin, size_t count,
                std::vector<float>& x, std::vector<float>& y) {
  const size_t dim = ds.items.front().grid.size();
  x.resize(count * dim);
  y.assign(count * kNumClasses, 0.0f);
  for (size_t s = 0; s < count; ++s) {
    const auto& item = ds.items[order[begin + s]];
    std::copy(item.grid.begin(), item.grid.end(), x.begin() + static_cast<ptrdiff_t>(s * dim));
    y[s * kNumClasses + static_cast<size_t>(item.label)] = 1.0f;
  }
}

// Mean cross-entropy over a sample set in inference mode.
double evaluate_loss(Model<float>& model, const Dataset& ds, const std::vector<size_t>& idx,
                     size_t batch_size) {
  const size_t dim = ds.items.front().grid.size();
  std::vector<float> x, y;
  double loss_sum = 0.0;
  for (size_t at = 0; at < idx.size(); at += batch_size) {
    const size_t count = std::min(batch_size, idx.size() - at);
    x.resize(count * dim);
    y.assign(count * kNumClasses, 0.0f);
    for (size_t s = 0; s < count; ++s) {
      const auto& item = ds.items[idx[at + s]];
      std::copy(item.grid.begin(), item.grid.end(), x.begin() + static_cast<ptrdiff_t>(s * dim));
      y[s * kNumClasses + static_cast<size_t>(item.label)] = 1.0f;
    }
    const auto& probs = model.forward(x.data(), count, false);
    for (size_t s = 0; s < count; ++s)
      for (int c = 0; c < kNumClasses; ++c)
        if (y[s * kNumClasses + static_cast<size_t>(c)] > 0)
          loss_sum -= std::log(std::max(
              static_cast<double>(probs[s * kNumClasses + static_cast<size_t>(c)]), 1e-300));
  }
  return loss_sum / static_cast<double>(idx.size());
}

}  // namespace

TrainResult train_kfold(const Dataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.items.empty()) throw Error("train_kfold: empty dataset");
  std::vector<int> labels;
  labels.reserve(dataset.items.size());
  for (const auto& item : dataset.items) labels.push_back(item.label);
  const auto counts = dataset.label_counts();
  for (int c = 0; c < kNumClasses; ++c)
    if (counts[static_cast<size_t>(c)] == 0)
      throw Error("train_kfold: class '" + class_name(c) + "' is absent from the dataset");

  auto fold_rng = Rng::derive(cfg.seed, {rng_stream::kFolds});
  const auto fold_of = stratified_folds(labels, cfg.k_folds, fold_rng);

  TrainResult result;
  double best_f1 = -1.0;

  for (int fold = 0; fold < cfg.k_folds; ++fold) {
    std::vector<size_t> train_idx, val_idx;
    for (size_t i = 0; i < fold_of.size(); ++i)
      (fold_of[i] == fold ? val_idx : train_idx).push_back(i);
    if (train_idx.empty() || val_idx.empty())
      throw Error("train_kfold: fold " + std::to_string(fold) + " has an empty split");

    auto rng = Rng::derive(cfg.seed, {rng_stream::kTrain, static_cast<uint64_t>(fold)});
    if (cfg.oversample) train_idx = oversample_indices(labels, train_idx, rng);

    Model<float> model(cfg.model_spec(),
                       Rng::derive(cfg.seed, {rng_stream::kModelInit,
                                              static_cast<uint64_t>(fold)}).next_u64());
    Adam<float> adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
    auto params = model.parameters();

    FoldMetrics metrics;
    metrics.fold = fold;
    double best_val = std::numeric_limits<double>::infinity();
    Snapshot best_state = take_snapshot(model);
    int patience = 0;

    const size_t dim = dataset.items.front().grid.size();
    std::vector<float> x, y;
    std::vector<size_t> order = train_idx;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      rng.shuffle(order);
      double train_loss_sum = 0.0;
      for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
        const size_t count = std::min(static_cast<size_t>(cfg.batch_size), order.size() - at);
        fill_batch(dataset, order, at, count, x, y);
        if (count >= 2)
          mixup(x, y, count, dim, kNumClasses, cfg.mixup_alpha, cfg.mixup_prob, rng);
        model.zero_gradients();
        const double loss = model.loss_and_gradients(x.data(), y.data(), count, &rng);
        if (!std::isfinite(loss))
          throw StageError("train_kfold: non-finite loss in fold " + std::to_string(fold));
        adam.step(params);
        train_loss_sum += loss * static_cast<double>(count);
      }
      EpochStats stats;
      stats.train_loss = train_loss_sum / static_cast<double>(order.size());
      stats.val_loss = evaluate_loss(model, dataset, val_idx, static_cast<size_t>(cfg.batch_size));
      metrics.history.push_back(stats);
      metrics.epochs_run = epoch + 1;

      if (stats.val_loss < best_val - 1e-9) {
        best_val = stats.val_loss;
        best_state = take_snapshot(model);
        patience = 0;
      } else if (++patience >= cfg.early_stop_patience) {
        break;
      }
    }

    restore_snapshot(model, best_state);
    metrics.best_val_loss = best_val;

    // Out-of-fold confusion for the restored parameters.
    for (size_t i : val_idx) {
      const auto pred = predict(model, dataset.items[i]);
      ++metrics.val_confusion[static_cast<size_t>(dataset.items[i].label)]
                             [static_cast<size_t>(pred.label)];
    }
    size_t correct = 0;
    for (int c = 0; c < kNumClasses; ++c)
      correct += metrics.val_confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
    metrics.val_accuracy = static_cast<double>(correct) / static_cast<double>(val_idx.size());
    metrics.val_macro_f1 = macro_f1(metrics.val_confusion);

    if (metrics.val_macro_f1 > best_f1) {
      best_f1 = metrics.val_macro_f1;
      result.selected_fold = fold;
      result.model = model;
    }
    result.folds.push_back(std::move(metrics));
  }

  return result;
}

Prediction predict(Model<float>& model, const PairedInput& input) {
  if (!model.ready()) throw Error("predict: model is uninitialized");
  const auto& probs = model.forward(input.grid.data(), 1, false);
  Prediction pred;
  double best = -1.0;
  for (int c = 0; c < kNumClasses; ++c) {
    pred.probs[static_cast<size_t>(c)] = probs[static_cast<size_t>(c)];
    if (pred.probs[static_cast<size_t>(c)] > best) {
      best = pred.probs[static_cast<size_t>(c)];
      pred.label = c;
    }
  }
  return pred;
}

}  // namespace vguard::nn
