#include "vguard/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace vguard {

using nlohmann::json;

int vote(const std::vector<int>& pair_labels) {
  if (pair_labels.empty()) throw Error("vote: no predictions");
  std::array<size_t, kNumClasses> counts{};
  for (int label : pair_labels) {
    if (label < 0 || label >= kNumClasses) throw Error("vote: label out of range");
    ++counts[static_cast<size_t>(label)];
  }
  // Severity order: triggered, attacked, legitimate.
  int best = kClassTriggered;
  for (int c : {kClassAttacked, kClassLegitimate})
    if (counts[static_cast<size_t>(c)] > counts[static_cast<size_t>(best)]) best = c;
  return best;
}

ComposedDecision compose_final(Decision pbsm_decision, int vote_label) {
  ComposedDecision d;
  switch (pbsm_decision) {
    case Decision::Triggered:
      d.label = kClassTriggered;
      break;
    case Decision::Deferred:
      d.label = vote_label;
      d.reviewed = true;
      break;
    case Decision::Legitimate:
      d.label = vote_label;
      break;
  }
  return d;
}

EvalReport compute_metrics(const std::map<std::string, AccountPrediction>& predictions,
                           const std::map<std::string, AccountClass>& ground_truth) {
  if (ground_truth.empty()) throw Error("compute_metrics: empty ground truth");

  EvalReport report;
  report.accounts = predictions;
  size_t triggered_total = 0, triggered_missed = 0;
  for (const auto& [id, truth_class] : ground_truth) {
    const auto it = predictions.find(id);
    if (it == predictions.end())
      throw Error("compute_metrics: no prediction for account " + id);
    const int truth = class_index(truth_class);
    const int final_label = it->second.final.label;
    ++report.confusion[static_cast<size_t>(truth)][static_cast<size_t>(final_label)];
    ++report.n_accounts;
    if (truth == kClassTriggered) {
      ++triggered_total;
      if (final_label == kClassLegitimate && !it->second.final.reviewed) ++triggered_missed;
    }
  }

  size_t correct = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto sc = static_cast<size_t>(c);
    size_t tp = report.confusion[sc][sc], fp = 0, fn = 0;
    correct += tp;
    for (int o = 0; o < kNumClasses; ++o) {
      if (o == c) continue;
      fp += report.confusion[static_cast<size_t>(o)][sc];
      fn += report.confusion[sc][static_cast<size_t>(o)];
    }
    auto& m = report.per_class[sc];
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
  }
  report.accuracy = static_cast<double>(correct) / static_cast<double>(report.n_accounts);
  report.asr = triggered_total > 0
                   ? static_cast<double>(triggered_missed) / static_cast<double>(triggered_total)
                   : 0.0;
  return report;
}

std::string format_metrics_table(const EvalReport& report) {
  char line[128];
  std::string out;
  out += "Class        Precision  Recall  F1      ASR\n";
  static const char* names[kNumClasses] = {"Legitimate", "Attacked", "Triggered"};
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& m = report.per_class[static_cast<size_t>(c)];
    if (c == kClassAttacked) {
      std::snprintf(line, sizeof(line), "%-12s %-10.2f %-7.2f %-7.2f %.2f%%\n", names[c],
                    m.precision, m.recall, m.f1, 100.0 * report.asr);
    } else {
      std::snprintf(line, sizeof(line), "%-12s %-10.2f %-7.2f %-7.2f\n", names[c], m.precision,
                    m.recall, m.f1);
    }
    out += line;
  }
  std::snprintf(line, sizeof(line), "Accounts: %zu, accuracy %.4f\n", report.n_accounts,
                report.accuracy);
  out += line;
  return out;
}

void save_metrics_json(const EvalReport& report, const std::filesystem::path& path) {
  json j;
  json per_class = json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& m = report.per_class[static_cast<size_t>(c)];
    per_class[class_name(c)] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
  }
  j["per_class"] = std::move(per_class);
  j["confusion"] = report.confusion;
  j["accuracy"] = report.accuracy;
  j["asr"] = report.asr;
  j["n_accounts"] = report.n_accounts;
  json accounts = json::object();
  for (const auto& [id, p] : report.accounts) {
    json jp;
    jp["per_pair_labels"] = p.per_pair_labels;
    jp["vote"] = class_name(p.vote_label);
    jp["pbsm"] = to_string(p.pbsm_decision);
    jp["final"] = class_name(p.final.label);
    jp["reviewed"] = p.final.reviewed;
    accounts[id] = std::move(jp);
  }
  j["accounts"] = std::move(accounts);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("save_metrics_json: cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void save_confusion_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("save_confusion_csv: cannot write " + path.string());
  out << "truth\\final";
  for (int c = 0; c < kNumClasses; ++c) out << ',' << class_name(c);
  out << '\n';
  for (int r = 0; r < kNumClasses; ++r) {
    out << class_name(r);
    for (int c = 0; c < kNumClasses; ++c)
      out << ',' << report.confusion[static_cast<size_t>(r)][static_cast<size_t>(c)];
    out << '\n';
  }
}

double StageTimings::total_seconds() const {
  double total = 0.0;
  for (const auto& [name, seconds] : stages) total += seconds;
  return total;
}

std::string format_timing_table(const StageTimings& t) {
  char line[128];
  std::string out = "Stage                 Seconds\n";
  for (const auto& [name, seconds] : t.stages) {
    std::snprintf(line, sizeof(line), "%-21s %.2f\n", name.c_str(), seconds);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-21s %.2f\n", "total", t.total_seconds());
  out += line;
  if (t.detection_mean_ms > 0.0) {
    std::snprintf(line, sizeof(line), "detection mean/account: %.1f ms\n", t.detection_mean_ms);
    out += line;
  }
  return out;
}

}  // namespace vguard
