#include "vguard/detect.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "vguard/wav_io.hpp"

namespace vguard {

using nlohmann::json;

std::string to_string(Decision d) {
  switch (d) {
    case Decision::Triggered: return "Triggered";
    case Decision::Legitimate: return "Legitimate";
    case Decision::Deferred: return "Deferred";
  }
  return "Deferred";
}

Decision decision_from_string(const std::string& s) {
  if (s == "Triggered") return Decision::Triggered;
  if (s == "Legitimate") return Decision::Legitimate;
  if (s == "Deferred") return Decision::Deferred;
  throw Error("unknown decision '" + s + "'");
}

std::string to_string(DecisionReason r) {
  return r == DecisionReason::Override ? "override" : "score-based";
}

DecisionReason reason_from_string(const std::string& s) {
  if (s == "override") return DecisionReason::Override;
  if (s == "score-based") return DecisionReason::ScoreBased;
  throw Error("unknown decision reason '" + s + "'");
}

void DetectionConfig::validate(int sample_rate) const {
  const double nyquist = 0.5 * sample_rate;
  if (eta <= 0.0) throw Error("detection: eta must be positive");
  if (gamma <= 0.0 || gamma >= 1.0) throw Error("detection: gamma must be in (0, 1)");
  if (min_beep_lo > min_beep_hi) throw Error("detection: min_beep_count interval is inverted");
  if (theta_override < 1) throw Error("detection: theta_override must be >= 1");
  if (omega_hz - delta_omega_hz <= hf_cutoff_hz || omega_hz + delta_omega_hz >= nyquist)
    throw Error("detection: beep band must lie inside (hf_cutoff, Nyquist)");
  stft.validate();
}

void ScoreWeights::validate() const {
  if (pitch < 0 || hf < 0 || pvar < 0 || hfvar < 0)
    throw Error("score weights must be nonnegative");
}

BeepDetectionResult detect_beeps(const ComplexSpectrogram& spec, const DetectionConfig& cfg) {
  BeepDetectionResult r;
  r.beep_energy =
      band_energy_series(spec, cfg.omega_hz - cfg.delta_omega_hz, cfg.omega_hz + cfg.delta_omega_hz);
  const double mean =
      std::accumulate(r.beep_energy.begin(), r.beep_energy.end(), 0.0) /
      static_cast<double>(r.beep_energy.size());
  r.threshold_value = cfg.eta * mean;
  for (size_t t = 0; t < r.beep_energy.size(); ++t)
    if (r.beep_energy[t] > r.threshold_value) r.beep_frames.push_back(t);
  r.beep_count = r.beep_frames.size();
  if (r.beep_frames.size() >= 2) {
    double gap = 0.0;
    for (size_t i = 1; i < r.beep_frames.size(); ++i)
      gap += static_cast<double>(r.beep_frames[i] - r.beep_frames[i - 1]);
    r.avg_beep_interval = gap / static_cast<double>(r.beep_frames.size() - 1) * spec.frame_seconds;
  }
  return r;
}

AcousticFeatures extract_features(const Waveform& w, const DetectionConfig& cfg) {
  return extract_features(w, stft(w, cfg.stft), cfg);
}

AcousticFeatures extract_features(const Waveform& w, const ComplexSpectrogram& spec,
                                  const DetectionConfig& cfg) {
  AcousticFeatures f;

  const PitchTrack track = estimate_pitch(w, cfg.pitch);
  f.no_pitch = !track.voiced;
  f.f0 = track.f0_hz;
  f.pitch_var = track.variance;

  // Per-frame magnitude sum strictly above the cutoff.
  size_t f_lo = spec.num_bins;
  for (size_t b = 0; b < spec.num_bins; ++b)
    if (spec.bin_center_hz(b) > cfg.hf_cutoff_hz) {
      f_lo = b;
      break;
    }
  if (f_lo < spec.num_bins) {
    double total = 0.0, total_sq = 0.0;
    for (size_t t = 0; t < spec.num_frames; ++t) {
      double frame = 0.0;
      const auto* bins = spec.grid.data() + t * spec.num_bins;
      for (size_t b = f_lo; b < spec.num_bins; ++b) frame += std::abs(bins[b]);
      total += frame;
      total_sq += frame * frame;
    }
    const double n = static_cast<double>(spec.num_frames);
    const double mean = total / n;
    f.hf_energy = total;
    f.hf_var = std::max(0.0, total_sq / n - mean * mean);
  }

  f.rho_p = f.f0 > 0.0 ? f.pitch_var / f.f0 : 0.0;
  f.rho_hf = f.hf_energy > 0.0 ? f.hf_var / f.hf_energy : 0.0;
  return f;
}

double score_sample(const AcousticFeatures& f, const ScoreWeights& w) {
  w.validate();
  return w.pitch * f.f0 + w.hf * f.hf_energy + w.pvar * f.rho_p + w.hfvar * f.rho_hf;
}

AccountAssessment assess_account(const std::vector<double>& scores,
                                 const std::vector<int>& beep_counts,
                                 const DetectionConfig& cfg) {
  if (scores.empty() || scores.size() != beep_counts.size())
    throw Error("assess_account: need one score and one beep count per file");

  AccountAssessment a;
  a.per_file_scores = scores;
  a.beep_counts = beep_counts;
  a.s_total = std::accumulate(scores.begin(), scores.end(), 0.0);
  a.mean_score = a.s_total / static_cast<double>(scores.size());

  double above = 0.0;
  size_t above_n = 0;
  for (double s : scores)
    if (s > cfg.tau) {
      above += s;
      ++above_n;
    }
  a.pi = a.s_total > 0.0 ? above / a.s_total : 0.0;
  a.confidence = 2.0 * a.pi - 1.0;
  a.triggered_fraction = static_cast<double>(above_n) / static_cast<double>(scores.size());

  size_t moderate = 0;
  for (int c : beep_counts)
    if (c >= cfg.min_beep_lo && c <= cfg.min_beep_hi) ++moderate;

  if (moderate >= static_cast<size_t>(cfg.theta_override)) {
    a.decision = Decision::Triggered;
    a.reason = DecisionReason::Override;
    return a;
  }

  a.reason = DecisionReason::ScoreBased;
  if (cfg.decision_mode == DetectionConfig::DecisionMode::Literal) {
    a.decision = a.confidence >= cfg.gamma ? Decision::Legitimate : Decision::Deferred;
  } else {
    if (a.confidence >= cfg.gamma) a.decision = Decision::Triggered;
    else if (a.confidence <= -cfg.gamma) a.decision = Decision::Legitimate;
    else a.decision = Decision::Deferred;
  }
  return a;
}

double calibrate_tau(const std::vector<AccountScores>& validation,
                     const std::vector<double>& grid) {
  if (grid.empty()) throw Error("calibrate_tau: empty candidate grid");
  bool has_pos = false, has_neg = false;
  for (const auto& v : validation) (v.triggered ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw Error("calibrate_tau: validation set must contain both classes");

  double best_tau = grid.front();
  size_t best_err = static_cast<size_t>(-1);
  for (double tau : grid) {
    size_t err = 0;
    for (const auto& v : validation)
      for (double s : v.scores) {
        const bool flagged = s > tau;
        if (flagged != v.triggered) ++err;
      }
    if (err < best_err || (err == best_err && tau > best_tau)) {
      best_err = err;
      best_tau = tau;
    }
  }
  return best_tau;
}

namespace {

AccountAnalysis analyze_one(const CorpusManifest& manifest, const Account& acct,
                            const DetectionConfig& cfg, const ScoreWeights& weights) {
  const auto t0 = std::chrono::steady_clock::now();
  AccountAnalysis out;
  out.total = acct.files.size();
  std::vector<double> intervals;

  for (const auto& rel : acct.files) {
    try {
      const Waveform raw = read_wav(manifest.resolve(rel), manifest.sample_rate);
      const Waveform w = normalize_duration(raw, manifest.duration_seconds);
      const auto spec = stft(w, cfg.stft);
      const auto beep = detect_beeps(spec, cfg);
      const auto feat = extract_features(w, spec, cfg);
      out.scores.push_back(score_sample(feat, weights));
      out.beep_counts.push_back(static_cast<int>(beep.beep_count));
      intervals.push_back(beep.avg_beep_interval);
      ++out.usable;
      out.avg_pitch += feat.f0;
      out.avg_pitch_var += feat.pitch_var;
      out.avg_hf_energy += feat.hf_energy;
      out.avg_hf_var += feat.hf_var;
    } catch (const Error& e) {
      out.warnings.push_back("account " + acct.id + ": " + e.what());
    }
  }

  if (out.usable > 0) {
    const double n = static_cast<double>(out.usable);
    out.avg_pitch /= n;
    out.avg_pitch_var /= n;
    out.avg_hf_energy /= n;
    out.avg_hf_var /= n;
    for (double v : intervals) out.avg_beep_interval += v / n;
  }
  out.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace

std::map<std::string, AccountAnalysis> analyze_accounts(const CorpusManifest& manifest,
                                                        const DetectionConfig& cfg,
                                                        const ScoreWeights& weights,
                                                        int workers) {
  cfg.validate(manifest.sample_rate);
  weights.validate();

  const size_t n = manifest.accounts.size();
  std::vector<AccountAnalysis> work(n);
  const int pool = std::max(1, workers);
  if (pool == 1) {
    for (size_t i = 0; i < n; ++i)
      work[i] = analyze_one(manifest, manifest.accounts[i], cfg, weights);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(pool));
    for (int t = 0; t < pool; ++t)
      threads.emplace_back([&] {
        for (;;) {
          const size_t i = next.fetch_add(1);
          if (i >= n) return;
          work[i] = analyze_one(manifest, manifest.accounts[i], cfg, weights);
        }
      });
    for (auto& th : threads) th.join();
  }

  std::map<std::string, AccountAnalysis> analyses;
  for (size_t i = 0; i < n; ++i) analyses.emplace(manifest.accounts[i].id, std::move(work[i]));
  return analyses;
}

DetectionReport assemble_report(const std::map<std::string, AccountAnalysis>& analyses,
                                const DetectionConfig& cfg, const ScoreWeights& weights) {
  DetectionReport report;
  report.tau = cfg.tau;
  report.weights = weights;
  double ms_sum = 0.0;
  for (const auto& [id, analysis] : analyses) {
    AccountAssessment a;
    if (analysis.usable < analysis.total || analysis.usable == 0) {
      // Incomplete evidence: defer for manual review.
      a.decision = Decision::Deferred;
      a.reason = DecisionReason::ScoreBased;
      a.per_file_scores = analysis.scores;
      a.beep_counts = analysis.beep_counts;
      report.warnings.push_back("account " + id + " deferred: only " +
                                std::to_string(analysis.usable) + "/" +
                                std::to_string(analysis.total) + " usable files");
    } else {
      a = assess_account(analysis.scores, analysis.beep_counts, cfg);
    }
    a.avg_pitch = analysis.avg_pitch;
    a.avg_pitch_var = analysis.avg_pitch_var;
    a.avg_hf_energy = analysis.avg_hf_energy;
    a.avg_hf_var = analysis.avg_hf_var;
    a.avg_beep_interval = analysis.avg_beep_interval;
    report.accounts.emplace(id, std::move(a));
    report.per_account_ms.emplace(id, analysis.elapsed_ms);
    ms_sum += analysis.elapsed_ms;
    for (const auto& w : analysis.warnings) report.warnings.push_back(w);
  }
  std::sort(report.warnings.begin(), report.warnings.end());
  report.mean_account_ms =
      analyses.empty() ? 0.0 : ms_sum / static_cast<double>(analyses.size());
  return report;
}

DetectionReport run_detection(const CorpusManifest& manifest, const DetectionConfig& cfg,
                              const ScoreWeights& weights, int workers) {
  const auto t0 = std::chrono::steady_clock::now();
  auto report = assemble_report(analyze_accounts(manifest, cfg, weights, workers), cfg, weights);
  report.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void save_detection_report(const DetectionReport& report, const std::filesystem::path& path) {
  json j;
  j["tau"] = report.tau;
  j["weights"] = {{"pitch", report.weights.pitch},
                  {"hf", report.weights.hf},
                  {"pvar", report.weights.pvar},
                  {"hfvar", report.weights.hfvar}};
  json accounts = json::object();
  for (const auto& [id, a] : report.accounts) {
    json ja;
    ja["scores"] = a.per_file_scores;
    ja["beep_counts"] = a.beep_counts;
    ja["s_total"] = a.s_total;
    ja["pi"] = a.pi;
    ja["confidence"] = a.confidence;
    ja["decision"] = to_string(a.decision);
    ja["reason"] = to_string(a.reason);
    ja["mean_score"] = a.mean_score;
    ja["triggered_fraction"] = a.triggered_fraction;
    ja["features"] = {{"avg_pitch", a.avg_pitch},
                      {"avg_pitch_var", a.avg_pitch_var},
                      {"avg_hf_energy", a.avg_hf_energy},
                      {"avg_hf_var", a.avg_hf_var},
                      {"avg_beep_interval", a.avg_beep_interval}};
    accounts[id] = std::move(ja);
  }
  j["accounts"] = std::move(accounts);
  j["warnings"] = report.warnings;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("save_detection_report: cannot write " + path.string());
  out << j.dump(2) << '\n';
}

DetectionReport load_detection_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("load_detection_report: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("load_detection_report: " + path.string() + ": " + e.what());
  }
  DetectionReport report;
  report.tau = j.at("tau").get<double>();
  const auto& w = j.at("weights");
  report.weights.pitch = w.at("pitch").get<double>();
  report.weights.hf = w.at("hf").get<double>();
  report.weights.pvar = w.at("pvar").get<double>();
  report.weights.hfvar = w.at("hfvar").get<double>();
  for (const auto& [id, ja] : j.at("accounts").items()) {
    AccountAssessment a;
    a.per_file_scores = ja.at("scores").get<std::vector<double>>();
    a.beep_counts = ja.at("beep_counts").get<std::vector<int>>();
    a.s_total = ja.at("s_total").get<double>();
    a.pi = ja.at("pi").get<double>();
    a.confidence = ja.at("confidence").get<double>();
    a.decision = decision_from_string(ja.at("decision").get<std::string>());
    a.reason = reason_from_string(ja.at("reason").get<std::string>());
    a.mean_score = ja.at("mean_score").get<double>();
    a.triggered_fraction = ja.at("triggered_fraction").get<double>();
    const auto& f = ja.at("features");
    a.avg_pitch = f.at("avg_pitch").get<double>();
    a.avg_pitch_var = f.at("avg_pitch_var").get<double>();
    a.avg_hf_energy = f.at("avg_hf_energy").get<double>();
    a.avg_hf_var = f.at("avg_hf_var").get<double>();
    a.avg_beep_interval = f.at("avg_beep_interval").get<double>();
    report.accounts.emplace(id, std::move(a));
  }
  report.warnings = j.at("warnings").get<std::vector<std::string>>();
  return report;
}

void write_feature_csv(const DetectionReport& report, const std::filesystem::path& path) {
  const size_t n = report.accounts.size();
  constexpr size_t kAxes = 5;
  std::vector<std::array<double, kAxes>> rows;
  rows.reserve(n);
  for (const auto& [id, a] : report.accounts)
    rows.push_back({a.avg_pitch, a.avg_pitch_var, a.avg_hf_energy, a.avg_hf_var,
                    a.avg_beep_interval});

  std::array<double, kAxes> mean{}, stddev{};
  for (const auto& r : rows)
    for (size_t c = 0; c < kAxes; ++c) mean[c] += r[c] / static_cast<double>(n);
  for (const auto& r : rows)
    for (size_t c = 0; c < kAxes; ++c) {
      const double d = r[c] - mean[c];
      stddev[c] += d * d / static_cast<double>(n);
    }
  for (auto& s : stddev) s = std::sqrt(s);

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("write_feature_csv: cannot write " + path.string());
  out << "account_id,decision,avg_pitch_z,pitch_var_z,hf_energy_z,hf_var_z,avg_beep_interval_z\n";
  size_t i = 0;
  for (const auto& [id, a] : report.accounts) {
    out << id << ',' << to_string(a.decision);
    for (size_t c = 0; c < kAxes; ++c) {
      const double z = stddev[c] > 0.0 ? (rows[i][c] - mean[c]) / stddev[c] : 0.0;
      out << ',' << z;
    }
    out << '\n';
    ++i;
  }
}

}  // namespace vguard
