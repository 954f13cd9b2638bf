#include "vguard/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vguard/nn/checkpoint.hpp"

namespace vguard {

using nlohmann::json;

namespace {

uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("required input " + path.string() + " does not exist");
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<size_t>(in.gcount()), h);
  return h;
}

std::string hex(uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

class Stage {
 public:
  Stage(StageContext& ctx, std::string name, uint64_t fingerprint,
        std::vector<std::filesystem::path> outputs)
      : ctx_(ctx), name_(std::move(name)), fingerprint_(hex(fingerprint)),
        outputs_(std::move(outputs)) {
    std::filesystem::create_directories(ctx.paths.status_dir());
  }

  bool fresh() const {
    if (ctx_.force) return false;
    std::ifstream in(status_path());
    if (!in) return false;
    json j;
    try {
      in >> j;
    } catch (const json::exception&) {
      return false;
    }
    if (!j.value("completed", false) || j.value("fingerprint", "") != fingerprint_) return false;
    for (const auto& o : outputs_)
      if (!std::filesystem::exists(o)) return false;
    return true;
  }

  void start() {
    t0_ = std::chrono::steady_clock::now();
    if (!ctx_.quiet) std::fprintf(stderr, "[vguard] %s: running\n", name_.c_str());
  }

  double finish() {
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    json j;
    j["stage"] = name_;
    j["fingerprint"] = fingerprint_;
    j["completed"] = true;
    std::ofstream out(status_path(), std::ios::trunc);
    out << j.dump(2) << '\n';
    record_timing(seconds);
    if (!ctx_.quiet)
      std::fprintf(stderr, "[vguard] %s: done in %.2fs\n", name_.c_str(), seconds);
    return seconds;
  }

  void skip() const {
    if (!ctx_.quiet) std::fprintf(stderr, "[vguard] %s: up to date\n", name_.c_str());
  }

  void record_timing(double seconds) const {
    json j = json::object();
    std::ifstream in(ctx_.paths.timing());
    if (in) {
      try {
        in >> j;
      } catch (const json::exception&) {
        j = json::object();
      }
    }
    if (!j.contains("stages")) j["stages"] = json::object();
    j["stages"][name_] = seconds;
    std::ofstream out(ctx_.paths.timing(), std::ios::trunc);
    out << j.dump(2) << '\n';
  }

 private:
  std::filesystem::path status_path() const {
    return ctx_.paths.status_dir() / (name_ + ".json");
  }

  StageContext& ctx_;
  std::string name_;
  std::string fingerprint_;
  std::vector<std::filesystem::path> outputs_;
  std::chrono::steady_clock::time_point t0_;
};

void merge_timing_extras(const StageContext& ctx, const DetectionReport& report) {
  json j = json::object();
  std::ifstream in(ctx.paths.timing());
  if (in) {
    try {
      in >> j;
    } catch (const json::exception&) {
      j = json::object();
    }
  }
  j["detection_mean_account_ms"] = report.mean_account_ms;
  json per = json::object();
  for (const auto& [id, ms] : report.per_account_ms) per[id] = ms;
  j["detection_per_account_ms"] = std::move(per);
  std::ofstream out(ctx.paths.timing(), std::ios::trunc);
  out << j.dump(2) << '\n';
}

std::filesystem::path corpus_manifest_path(const StageContext& ctx) {
  return ctx.corpus_dir_override ? *ctx.corpus_dir_override / "manifest.json"
                                 : ctx.paths.corpus_manifest();
}

std::filesystem::path attacked_manifest_path(const StageContext& ctx) {
  return ctx.attacked_dir_override ? *ctx.attacked_dir_override / "manifest.json"
                                   : ctx.paths.attacked_manifest();
}

}  // namespace

void run_synth(StageContext& ctx) {
  if (ctx.corpus_dir_override)
    throw ConfigError("synth: --corpus points at an existing corpus; nothing to synthesize");
  const uint64_t fp = fnv1a64(config_section_dump(
      ctx.cfg, {"seed", "sample_rate", "duration_seconds", "corpus"}));
  Stage stage(ctx, "synth", fp, {ctx.paths.corpus_manifest()});
  if (stage.fresh()) return stage.skip();
  stage.start();

  SynthesisOptions options;
  options.n_accounts = ctx.cfg.corpus.n_accounts;
  options.seed = ctx.cfg.seed;
  options.sample_rate = ctx.cfg.sample_rate;
  options.duration_seconds = ctx.cfg.duration_seconds;
  options.files_per_account = ctx.cfg.corpus.files_per_account;
  options.ranges = ctx.cfg.corpus.ranges;
  const auto manifest = synthesize_corpus(ctx.paths.corpus_dir(), options);
  save_manifest(manifest, ctx.paths.corpus_manifest());
  stage.finish();
}

void run_attack(StageContext& ctx) {
  const auto src_manifest = corpus_manifest_path(ctx);
  const uint64_t fp =
      fnv1a64(config_section_dump(ctx.cfg, {"seed", "partition", "trigger", "poison", "stft"}),
              hash_file(src_manifest));
  Stage stage(ctx, "attack",fp,
              {ctx.paths.attacked_manifest(), ctx.paths.ground_truth()});
  if (stage.fresh()) return stage.skip();
  stage.start();

  const auto source = load_manifest(src_manifest);
  std::vector<std::string> warnings;
  const auto partition = partition_accounts(source, ctx.cfg.partition, ctx.cfg.seed, &warnings);
  for (const auto& w : warnings) std::fprintf(stderr, "[vguard] warning: %s\n", w.c_str());
  auto staged = stage_attack(source, partition, ctx.cfg.trigger, ctx.cfg.poison, ctx.cfg.stft,
                             ctx.cfg.seed, ctx.paths.attacked_dir());
  save_manifest(staged.attacked, ctx.paths.attacked_manifest());
  save_ground_truth(staged.truth, ctx.paths.ground_truth());
  stage.finish();
}

void run_detect(StageContext& ctx) {
  const auto manifest_path = attacked_manifest_path(ctx);
  const uint64_t fp = fnv1a64(
      config_section_dump(ctx.cfg, {"seed", "stft", "pitch", "detection", "weights"}),
      hash_file(manifest_path));
  Stage stage(ctx, "detect", fp, {ctx.paths.detection(), ctx.paths.feature_csv()});
  if (stage.fresh()) return stage.skip();
  stage.start();

  const auto manifest = load_manifest(manifest_path);
  auto analyses = analyze_accounts(manifest, ctx.cfg.detection, ctx.cfg.weights, ctx.cfg.workers);

  DetectionConfig detect_cfg = ctx.cfg.detection;
  if (ctx.cfg.calibration.enabled) {
    // Grid-search tau on a seeded validation split of the staged accounts.
    try {
      const auto truth = load_ground_truth(ctx.paths.ground_truth());
      std::vector<std::string> triggered_ids, other_ids;
      for (const auto& [id, entry] : truth.accounts) {
        if (analyses.find(id) == analyses.end()) continue;
        (entry.account_class == AccountClass::Triggered ? triggered_ids : other_ids).push_back(id);
      }
      auto rng = Rng::derive(ctx.cfg.seed, {rng_stream::kCalibration});
      std::sort(triggered_ids.begin(), triggered_ids.end());
      std::sort(other_ids.begin(), other_ids.end());

      // Negatives are plentiful: sample a fraction.  Positives are scarce
      // (a handful of accounts), so every one of them informs the search;
      // the largest zero-error candidate then sits just below the lowest
      // triggered file score instead of overshooting unseen accounts.
      std::vector<AccountScores> validation;
      if (!other_ids.empty()) {
        const size_t k = std::min(
            other_ids.size(),
            std::max<size_t>(1, static_cast<size_t>(std::floor(
                                    ctx.cfg.calibration.validation_fraction *
                                    static_cast<double>(other_ids.size())))));
        for (size_t idx : rng.sample_without_replacement(other_ids.size(), k)) {
          AccountScores as;
          as.scores = analyses.at(other_ids[idx]).scores;
          validation.push_back(std::move(as));
        }
      }
      for (const auto& id : triggered_ids) {
        AccountScores as;
        as.scores = analyses.at(id).scores;
        as.triggered = true;
        validation.push_back(std::move(as));
      }

      std::vector<double> grid;
      for (double tau = ctx.cfg.calibration.grid_min; tau <= ctx.cfg.calibration.grid_max + 1e-9;
           tau += ctx.cfg.calibration.grid_step)
        grid.push_back(tau);
      detect_cfg.tau = calibrate_tau(validation, grid);
      if (!ctx.quiet)
        std::fprintf(stderr, "[vguard] detect: calibrated tau = %.3f\n", detect_cfg.tau);
    } catch (const Error& e) {
      std::fprintf(stderr, "[vguard] warning: tau calibration skipped (%s); keeping tau = %.3f\n",
                   e.what(), detect_cfg.tau);
    }
  }

  auto report = assemble_report(analyses, detect_cfg, ctx.cfg.weights);
  save_detection_report(report, ctx.paths.detection());
  write_feature_csv(report, ctx.paths.feature_csv());
  merge_timing_extras(ctx, report);
  for (const auto& w : report.warnings) std::fprintf(stderr, "[vguard] warning: %s\n", w.c_str());
  stage.finish();
}

void run_embed(StageContext& ctx) {
  const auto manifest_path = attacked_manifest_path(ctx);
  const auto manifest = load_manifest(manifest_path);
  std::vector<std::filesystem::path> outputs;
  for (const auto& a : manifest.accounts)
    outputs.push_back(ctx.paths.embeddings_dir() / (a.id + ".vsem"));
  const uint64_t fp = fnv1a64(config_section_dump(ctx.cfg, {"embed", "stft"}),
                              hash_file(manifest_path));
  Stage stage(ctx, "embed", fp, outputs);
  if (stage.fresh()) return stage.skip();
  stage.start();

  EmbedParams params = ctx.cfg.embed;
  params.stft = ctx.cfg.stft;
  write_embedding_caches(manifest, params, ctx.paths.embeddings_dir(), ctx.cfg.workers);
  stage.finish();
}

void run_train(StageContext& ctx) {
  const auto manifest_path = attacked_manifest_path(ctx);
  const uint64_t fp =
      fnv1a64(config_section_dump(ctx.cfg, {"seed", "train", "embed"}),
              fnv1a64(hex(hash_file(ctx.paths.detection())) +
                      hex(hash_file(ctx.paths.ground_truth())) + hex(hash_file(manifest_path))));
  Stage stage(ctx, "train", fp, {ctx.paths.checkpoint(), ctx.paths.fold_metrics()});
  if (stage.fresh()) return stage.skip();
  stage.start();

  const auto manifest = load_manifest(manifest_path);
  const auto truth = load_ground_truth(ctx.paths.ground_truth());
  const auto detection = load_detection_report(ctx.paths.detection());
  EmbedParams params = ctx.cfg.embed;
  params.stft = ctx.cfg.stft;
  const auto dataset = build_dataset(manifest, truth, &detection, /*for_training=*/true, params,
                                     ctx.paths.embeddings_dir());

  nn::TrainConfig train_cfg = ctx.cfg.train;
  train_cfg.seed = ctx.cfg.seed;
  auto result = nn::train_kfold(dataset, train_cfg);
  nn::save_checkpoint(result.model, result, ctx.cfg.seed, ctx.paths.checkpoint());
  nn::save_fold_metrics(result, ctx.paths.fold_metrics());
  if (!ctx.quiet)
    std::fprintf(stderr, "[vguard] train: selected fold %d (val macro-F1 %.4f)\n",
                 result.selected_fold,
                 result.folds[static_cast<size_t>(result.selected_fold)].val_macro_f1);
  stage.finish();
}

void run_eval(StageContext& ctx) {
  const auto manifest_path = attacked_manifest_path(ctx);
  const uint64_t fp =
      fnv1a64(config_section_dump(ctx.cfg, {"embed"}),
              fnv1a64(hex(hash_file(ctx.paths.checkpoint())) +
                      hex(hash_file(ctx.paths.detection())) +
                      hex(hash_file(ctx.paths.ground_truth())) + hex(hash_file(manifest_path))));
  Stage stage(ctx, "eval", fp,
              {ctx.paths.metrics(), ctx.paths.metrics_text(), ctx.paths.confusion_csv()});
  if (stage.fresh()) return stage.skip();
  stage.start();

  const auto manifest = load_manifest(manifest_path);
  const auto truth = load_ground_truth(ctx.paths.ground_truth());
  const auto detection = load_detection_report(ctx.paths.detection());
  auto loaded = nn::load_checkpoint(ctx.paths.checkpoint());
  EmbedParams params = ctx.cfg.embed;
  params.stft = ctx.cfg.stft;
  const auto dataset = build_dataset(manifest, truth, &detection, /*for_training=*/false, params,
                                     ctx.paths.embeddings_dir());

  std::map<std::string, AccountPrediction> predictions;
  for (const auto& item : dataset.items) {
    auto& p = predictions[item.account_id];
    p.account_id = item.account_id;
    p.per_pair_labels.push_back(nn::predict(loaded.model, item).label);
  }
  std::map<std::string, AccountClass> classes;
  for (auto& [id, p] : predictions) {
    p.vote_label = vote(p.per_pair_labels);
    const auto det_it = detection.accounts.find(id);
    p.pbsm_decision = det_it != detection.accounts.end() ? det_it->second.decision
                                                         : Decision::Deferred;
    p.final = compose_final(p.pbsm_decision, p.vote_label);
    classes.emplace(id, truth.accounts.at(id).account_class);
  }

  const auto report = compute_metrics(predictions, classes);
  save_metrics_json(report, ctx.paths.metrics());
  save_confusion_csv(report, ctx.paths.confusion_csv());
  {
    std::ofstream out(ctx.paths.metrics_text(), std::ios::trunc);
    out << format_metrics_table(report);
  }
  if (!ctx.quiet) std::fputs(format_metrics_table(report).c_str(), stderr);
  stage.finish();
}

EvalReport run_pipeline(StageContext& ctx) {
  std::filesystem::create_directories(ctx.paths.out);
  save_config(ctx.cfg, ctx.paths.config_echo());
  if (!ctx.corpus_dir_override) run_synth(ctx);
  run_attack(ctx);
  run_detect(ctx);
  run_embed(ctx);
  run_train(ctx);
  run_eval(ctx);

  // Reload the final report so callers get exactly what was persisted.
  std::ifstream in(ctx.paths.metrics());
  json j;
  in >> j;
  EvalReport report;
  report.accuracy = j.at("accuracy").get<double>();
  report.asr = j.at("asr").get<double>();
  report.n_accounts = j.at("n_accounts").get<size_t>();
  for (size_t r = 0; r < kNumClasses; ++r)
    for (size_t c = 0; c < kNumClasses; ++c)
      report.confusion[r][c] = j.at("confusion")[r][c].get<size_t>();
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& m = j.at("per_class").at(class_name(c));
    report.per_class[static_cast<size_t>(c)] = {m.at("precision").get<double>(),
                                                m.at("recall").get<double>(),
                                                m.at("f1").get<double>()};
  }
  return report;
}

StageTimings read_timings(const std::filesystem::path& timing_json) {
  StageTimings t;
  std::ifstream in(timing_json);
  if (!in) return t;
  json j;
  try {
    in >> j;
  } catch (const json::exception&) {
    return t;
  }
  if (j.contains("stages"))
    for (const auto& [name, seconds] : j.at("stages").items())
      t.stages.emplace_back(name, seconds.get<double>());
  t.detection_mean_ms = j.value("detection_mean_account_ms", 0.0);
  return t;
}

}  // namespace vguard
