#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vguard/detect.hpp"
#include "vguard/embedding.hpp"

namespace vguard {

// Modal label over per-pair classifier outputs; ties break toward the more
// severe class (Triggered > Attacked > Legitimate).
int vote(const std::vector<int>& pair_labels);

struct ComposedDecision {
  int label = kClassLegitimate;  // class index
  bool reviewed = false;         // the detection layer deferred this account
};

// The detection layer wins when it flagged the account; deferred accounts
// take the classifier vote but are marked for manual review.
ComposedDecision compose_final(Decision pbsm_decision, int vote_label);

struct AccountPrediction {
  std::string account_id;
  std::vector<int> per_pair_labels;
  int vote_label = kClassLegitimate;
  Decision pbsm_decision = Decision::Legitimate;
  ComposedDecision final;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EvalReport {
  std::array<ClassMetrics, kNumClasses> per_class;
  std::array<std::array<size_t, kNumClasses>, kNumClasses> confusion{};  // [truth][final]
  double accuracy = 0.0;
  // Fraction of ground-truth triggered accounts that end the pipeline
  // labeled legitimate without a review flag.
  double asr = 0.0;
  size_t n_accounts = 0;
  std::map<std::string, AccountPrediction> accounts;
};

// final labels vs ground-truth classes, aligned by account id.
EvalReport compute_metrics(const std::map<std::string, AccountPrediction>& predictions,
                           const std::map<std::string, AccountClass>& ground_truth);

std::string format_metrics_table(const EvalReport& report);

void save_metrics_json(const EvalReport& report, const std::filesystem::path& path);
void save_confusion_csv(const EvalReport& report, const std::filesystem::path& path);

struct StageTimings {
  // stage name -> wall-clock seconds, plus the per-account detection mean.
  std::vector<std::pair<std::string, double>> stages;
  double detection_mean_ms = 0.0;

  double total_seconds() const;
};

std::string format_timing_table(const StageTimings& t);

}  // namespace vguard
