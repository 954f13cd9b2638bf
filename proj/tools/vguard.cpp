// vguard: staging and detection pipeline for trigger/poisoning attacks on
// audio account corpora.
//
// Subcommands mirror the pipeline stages; `pipeline` runs them all.  Exit
// status: 0 success, 1 usage/config error, 2 missing input, 3 stage failure.

#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vguard/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string out;
  std::optional<std::string> config_file;
  std::optional<uint64_t> seed;
  std::optional<int> workers;
  std::vector<std::string> overrides;
  bool force = false;
  bool quiet = false;
  std::optional<std::string> corpus;
  std::optional<std::string> attacked;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_corpus_inputs) {
  cmd->add_option("--out", args.out, "Run output directory")->required();
  cmd->add_option("--config", args.config_file, "JSON config file (merged over defaults)");
  cmd->add_option("--seed", args.seed, "Override the run seed");
  cmd->add_option("--workers", args.workers, "Concurrent per-account tasks");
  cmd->add_option("--set", args.overrides,
                  "Override any config key via dotted path, e.g. detection.eta=3.0");
  cmd->add_flag("--force", args.force, "Re-run even when the stage is up to date");
  cmd->add_flag("--quiet", args.quiet, "Suppress progress output");
  if (needs_corpus_inputs) {
    cmd->add_option("--corpus", args.corpus, "Existing clean corpus directory");
    cmd->add_option("--attacked", args.attacked, "Existing attacked corpus directory");
  }
}

vguard::StageContext make_context(const CommonArgs& args) {
  std::optional<std::filesystem::path> config_path;
  if (args.config_file) config_path = *args.config_file;
  auto overrides = args.overrides;
  if (args.seed) overrides.push_back("seed=" + std::to_string(*args.seed));
  if (args.workers) overrides.push_back("workers=" + std::to_string(*args.workers));

  vguard::StageContext ctx;
  ctx.cfg = vguard::load_config(config_path, overrides);
  ctx.paths.out = args.out;
  ctx.force = args.force;
  ctx.quiet = args.quiet;
  if (args.corpus) ctx.corpus_dir_override = *args.corpus;
  if (args.attacked) ctx.attacked_dir_override = *args.attacked;
  std::filesystem::create_directories(ctx.paths.out);
  vguard::save_config(ctx.cfg, ctx.paths.config_echo());
  return ctx;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attack staging and two-layer defense pipeline for audio account corpora"};
  app.require_subcommand(1);

  CommonArgs args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  auto* attack = app.add_subcommand("attack", "Stage trigger + poisoning attacks");
  auto* detect = app.add_subcommand("detect", "Frequency-based account screening");
  auto* embed = app.add_subcommand("embed", "Compute embedding caches");
  auto* train = app.add_subcommand("train", "Train the paired-input classifier");
  auto* eval = app.add_subcommand("eval", "Vote, compose decisions and report metrics");
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");
  add_common(synth, args, false);
  for (auto* cmd : {attack, detect, embed, train, eval, pipeline}) add_common(cmd, args, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    auto ctx = make_context(args);
    if (synth->parsed()) {
      vguard::run_synth(ctx);
    } else if (attack->parsed()) {
      vguard::run_attack(ctx);
    } else if (detect->parsed()) {
      vguard::run_detect(ctx);
    } else if (embed->parsed()) {
      vguard::run_embed(ctx);
    } else if (train->parsed()) {
      vguard::run_train(ctx);
    } else if (eval->parsed()) {
      vguard::run_eval(ctx);
      if (!ctx.quiet) {
        const auto timings = vguard::read_timings(ctx.paths.timing());
        std::fputs(vguard::format_timing_table(timings).c_str(), stderr);
      }
    } else if (pipeline->parsed()) {
      vguard::run_pipeline(ctx);
      if (!ctx.quiet) {
        const auto timings = vguard::read_timings(ctx.paths.timing());
        std::fputs(vguard::format_timing_table(timings).c_str(), stderr);
      }
    }
  } catch (const vguard::ConfigError& e) {
    std::fprintf(stderr, "vguard: config error: %s\n", e.what());
    return 1;
  } catch (const vguard::MissingInputError& e) {
    std::fprintf(stderr, "vguard: missing input: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "vguard: stage failed: %s\n", e.what());
    return 3;
  }
  return 0;
}
