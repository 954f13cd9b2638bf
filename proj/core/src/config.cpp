#include "vguard/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace vguard {

using nlohmann::json;

namespace {

json ranges_to_json(const SpeakerRanges& r) {
  return json{{"f0_min_hz", r.f0_min_hz},
              {"f0_max_hz", r.f0_max_hz},
              {"harmonics_min", r.harmonics_min},
              {"harmonics_max", r.harmonics_max},
              {"harmonic_decay_min", r.harmonic_decay_min},
              {"harmonic_decay_max", r.harmonic_decay_max},
              {"drift_depth_min", r.drift_depth_min},
              {"drift_depth_max", r.drift_depth_max},
              {"drift_rate_min_hz", r.drift_rate_min_hz},
              {"drift_rate_max_hz", r.drift_rate_max_hz},
              {"am_depth_min", r.am_depth_min},
              {"am_depth_max", r.am_depth_max},
              {"am_rate_min_hz", r.am_rate_min_hz},
              {"am_rate_max_hz", r.am_rate_max_hz},
              {"speech_noise_snr_min_db", r.speech_noise_snr_min_db},
              {"speech_noise_snr_max_db", r.speech_noise_snr_max_db},
              {"speech_noise_lo_hz", r.speech_noise_lo_hz},
              {"speech_noise_hi_hz", r.speech_noise_hi_hz},
              {"hf_noise_snr_min_db", r.hf_noise_snr_min_db},
              {"hf_noise_snr_max_db", r.hf_noise_snr_max_db},
              {"hf_noise_lo_hz", r.hf_noise_lo_hz},
              {"hf_noise_hi_hz", r.hf_noise_hi_hz},
              {"rms_min", r.rms_min},
              {"rms_max", r.rms_max},
              {"speech_noise_tones", r.speech_noise_tones},
              {"hf_noise_tones", r.hf_noise_tones}};
}

void ranges_from_json(const json& j, SpeakerRanges& r) {
  r.f0_min_hz = j.at("f0_min_hz").get<double>();
  r.f0_max_hz = j.at("f0_max_hz").get<double>();
  r.harmonics_min = j.at("harmonics_min").get<int>();
  r.harmonics_max = j.at("harmonics_max").get<int>();
  r.harmonic_decay_min = j.at("harmonic_decay_min").get<double>();
  r.harmonic_decay_max = j.at("harmonic_decay_max").get<double>();
  r.drift_depth_min = j.at("drift_depth_min").get<double>();
  r.drift_depth_max = j.at("drift_depth_max").get<double>();
  r.drift_rate_min_hz = j.at("drift_rate_min_hz").get<double>();
  r.drift_rate_max_hz = j.at("drift_rate_max_hz").get<double>();
  r.am_depth_min = j.at("am_depth_min").get<double>();
  r.am_depth_max = j.at("am_depth_max").get<double>();
  r.am_rate_min_hz = j.at("am_rate_min_hz").get<double>();
  r.am_rate_max_hz = j.at("am_rate_max_hz").get<double>();
  r.speech_noise_snr_min_db = j.at("speech_noise_snr_min_db").get<double>();
  r.speech_noise_snr_max_db = j.at("speech_noise_snr_max_db").get<double>();
  r.speech_noise_lo_hz = j.at("speech_noise_lo_hz").get<double>();
  r.speech_noise_hi_hz = j.at("speech_noise_hi_hz").get<double>();
  r.hf_noise_snr_min_db = j.at("hf_noise_snr_min_db").get<double>();
  r.hf_noise_snr_max_db = j.at("hf_noise_snr_max_db").get<double>();
  r.hf_noise_lo_hz = j.at("hf_noise_lo_hz").get<double>();
  r.hf_noise_hi_hz = j.at("hf_noise_hi_hz").get<double>();
  r.rms_min = j.at("rms_min").get<double>();
  r.rms_max = j.at("rms_max").get<double>();
  r.speech_noise_tones = j.at("speech_noise_tones").get<int>();
  r.hf_noise_tones = j.at("hf_noise_tones").get<int>();
}

json config_to_json(const PipelineConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["sample_rate"] = c.sample_rate;
  j["duration_seconds"] = c.duration_seconds;

  json corpus = ranges_to_json(c.corpus.ranges);
  corpus["n_accounts"] = c.corpus.n_accounts;
  corpus["files_per_account"] = c.corpus.files_per_account;
  j["corpus"] = std::move(corpus);

  j["partition"] = {{"attacker", c.partition.attacker},
                    {"pbsm", c.partition.pbsm},
                    {"tdpa", c.partition.tdpa}};
  j["trigger"] = {{"pitch_scale", c.trigger.pitch_scale},
                  {"freq_hz", c.trigger.freq_hz},
                  {"duration_seconds", c.trigger.duration_seconds},
                  {"amplitude_rms", c.trigger.amplitude_rms},
                  {"mode", c.trigger.mode == TriggerConfig::Mode::SpectrogramScale
                               ? "scale"
                               : "pitch-shift"}};
  j["poison"] = {{"replace_fraction", c.poison.replace_fraction}};
  j["stft"] = {{"window_len", c.stft.window_len},
               {"hop", c.stft.hop},
               {"window", window_name(c.stft.window)}};
  j["pitch"] = {{"fmin_hz", c.pitch.fmin_hz},
                {"fmax_hz", c.pitch.fmax_hz},
                {"voicing_threshold", c.pitch.voicing_threshold}};
  j["detection"] = {
      {"omega_hz", c.detection.omega_hz},
      {"delta_omega_hz", c.detection.delta_omega_hz},
      {"eta", c.detection.eta},
      {"tau", c.detection.tau},
      {"gamma", c.detection.gamma},
      {"min_beep_count", json::array({c.detection.min_beep_lo, c.detection.min_beep_hi})},
      {"theta_override", c.detection.theta_override},
      {"hf_cutoff_hz", c.detection.hf_cutoff_hz},
      {"decision_mode",
       c.detection.decision_mode == DetectionConfig::DecisionMode::Consistent ? "consistent"
                                                                              : "literal"},
      {"calibrate_tau", c.calibration.enabled},
      {"tau_grid", {{"min", c.calibration.grid_min},
                    {"max", c.calibration.grid_max},
                    {"step", c.calibration.grid_step}}},
      {"validation_fraction", c.calibration.validation_fraction}};
  j["weights"] = {{"pitch", c.weights.pitch},
                  {"hf", c.weights.hf},
                  {"pvar", c.weights.pvar},
                  {"hfvar", c.weights.hfvar}};
  j["embed"] = {{"bands", c.embed.bands},
                {"segments", c.embed.segments},
                {"fmax_hz", c.embed.fmax_hz},
                {"log_floor", c.embed.log_floor}};
  j["train"] = {{"k_folds", c.train.k_folds},
                {"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"learning_rate", c.train.learning_rate},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"epsilon", c.train.epsilon},
                {"l1", c.train.l1},
                {"l2", c.train.l2},
                {"dropout_conv", c.train.dropout_conv},
                {"dropout_dense", c.train.dropout_dense},
                {"block3_dropout", c.train.block3_dropout},
                {"mixup_prob", c.train.mixup_prob},
                {"mixup_alpha", c.train.mixup_alpha},
                {"oversample", c.train.oversample},
                {"early_stop_patience", c.train.early_stop_patience}};
  return j;
}

PipelineConfig config_from_json(const json& j) {
  PipelineConfig c;
  c.seed = j.at("seed").get<uint64_t>();
  c.workers = j.at("workers").get<int>();
  c.sample_rate = j.at("sample_rate").get<int>();
  c.duration_seconds = j.at("duration_seconds").get<double>();

  const auto& corpus = j.at("corpus");
  c.corpus.n_accounts = corpus.at("n_accounts").get<size_t>();
  c.corpus.files_per_account = corpus.at("files_per_account").get<int>();
  ranges_from_json(corpus, c.corpus.ranges);

  const auto& part = j.at("partition");
  c.partition.attacker = part.at("attacker").get<double>();
  c.partition.pbsm = part.at("pbsm").get<double>();
  c.partition.tdpa = part.at("tdpa").get<double>();

  const auto& trig = j.at("trigger");
  c.trigger.pitch_scale = trig.at("pitch_scale").get<double>();
  c.trigger.freq_hz = trig.at("freq_hz").get<double>();
  c.trigger.duration_seconds = trig.at("duration_seconds").get<double>();
  c.trigger.amplitude_rms = trig.at("amplitude_rms").get<double>();
  const auto mode = trig.at("mode").get<std::string>();
  if (mode == "scale") c.trigger.mode = TriggerConfig::Mode::SpectrogramScale;
  else if (mode == "pitch-shift") c.trigger.mode = TriggerConfig::Mode::PitchShift;
  else throw ConfigError("trigger.mode must be 'scale' or 'pitch-shift', got '" + mode + "'");

  c.poison.replace_fraction = j.at("poison").at("replace_fraction").get<double>();

  const auto& stft_j = j.at("stft");
  c.stft.window_len = stft_j.at("window_len").get<size_t>();
  c.stft.hop = stft_j.at("hop").get<size_t>();
  c.stft.window = window_from_name(stft_j.at("window").get<std::string>());

  const auto& pitch_j = j.at("pitch");
  c.pitch.fmin_hz = pitch_j.at("fmin_hz").get<double>();
  c.pitch.fmax_hz = pitch_j.at("fmax_hz").get<double>();
  c.pitch.voicing_threshold = pitch_j.at("voicing_threshold").get<double>();
  c.pitch.frame_len = c.stft.window_len;
  c.pitch.hop = c.stft.hop;

  const auto& det = j.at("detection");
  c.detection.omega_hz = det.at("omega_hz").get<double>();
  c.detection.delta_omega_hz = det.at("delta_omega_hz").get<double>();
  c.detection.eta = det.at("eta").get<double>();
  c.detection.tau = det.at("tau").get<double>();
  c.detection.gamma = det.at("gamma").get<double>();
  const auto& beeps = det.at("min_beep_count");
  if (!beeps.is_array() || beeps.size() != 2)
    throw ConfigError("detection.min_beep_count must be [lo, hi]");
  c.detection.min_beep_lo = beeps[0].get<int>();
  c.detection.min_beep_hi = beeps[1].get<int>();
  c.detection.theta_override = det.at("theta_override").get<int>();
  c.detection.hf_cutoff_hz = det.at("hf_cutoff_hz").get<double>();
  const auto dm = det.at("decision_mode").get<std::string>();
  if (dm == "consistent") c.detection.decision_mode = DetectionConfig::DecisionMode::Consistent;
  else if (dm == "literal")
    c.detection.decision_mode = DetectionConfig::DecisionMode::Literal;
  else
    throw ConfigError("detection.decision_mode must be 'consistent' or 'literal'");
  c.detection.stft = c.stft;
  c.detection.pitch = c.pitch;
  c.calibration.enabled = det.at("calibrate_tau").get<bool>();
  const auto& grid = det.at("tau_grid");
  c.calibration.grid_min = grid.at("min").get<double>();
  c.calibration.grid_max = grid.at("max").get<double>();
  c.calibration.grid_step = grid.at("step").get<double>();
  c.calibration.validation_fraction = det.at("validation_fraction").get<double>();

  const auto& w = j.at("weights");
  c.weights.pitch = w.at("pitch").get<double>();
  c.weights.hf = w.at("hf").get<double>();
  c.weights.pvar = w.at("pvar").get<double>();
  c.weights.hfvar = w.at("hfvar").get<double>();

  const auto& emb = j.at("embed");
  c.embed.bands = emb.at("bands").get<size_t>();
  c.embed.segments = emb.at("segments").get<size_t>();
  c.embed.fmax_hz = emb.at("fmax_hz").get<double>();
  c.embed.log_floor = emb.at("log_floor").get<double>();
  c.embed.stft = c.stft;

  const auto& tr = j.at("train");
  c.train.k_folds = tr.at("k_folds").get<int>();
  c.train.epochs = tr.at("epochs").get<int>();
  c.train.batch_size = tr.at("batch_size").get<int>();
  c.train.learning_rate = tr.at("learning_rate").get<double>();
  c.train.beta1 = tr.at("beta1").get<double>();
  c.train.beta2 = tr.at("beta2").get<double>();
  c.train.epsilon = tr.at("epsilon").get<double>();
  c.train.l1 = tr.at("l1").get<double>();
  c.train.l2 = tr.at("l2").get<double>();
  c.train.dropout_conv = tr.at("dropout_conv").get<double>();
  c.train.dropout_dense = tr.at("dropout_dense").get<double>();
  c.train.block3_dropout = tr.at("block3_dropout").get<bool>();
  c.train.mixup_prob = tr.at("mixup_prob").get<double>();
  c.train.mixup_alpha = tr.at("mixup_alpha").get<double>();
  c.train.oversample = tr.at("oversample").get<bool>();
  c.train.early_stop_patience = tr.at("early_stop_patience").get<int>();
  c.train.seed = c.seed;
  return c;
}

// Recursive merge of user values over defaults; any key missing from the
// defaults is unknown and rejected.
void merge_strict(json& base, const json& user, const std::string& prefix) {
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    const auto it = base.find(key);
    if (it == base.end()) throw ConfigError("unknown config key '" + path + "'");
    if (it->is_object() && value.is_object()) {
      merge_strict(*it, value, path);
    } else if (it->is_object() != value.is_object()) {
      throw ConfigError("config key '" + path + "' has the wrong shape");
    } else {
      *it = value;
    }
  }
}

void apply_override(json& base, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key.path=value, got '" + spec + "'");
  const std::string path = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings are taken literally
  }

  json* node = &base;
  size_t begin = 0;
  std::string walked;
  for (;;) {
    const auto dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
    walked = walked.empty() ? key : walked + "." + key;
    const auto it = node->find(key);
    if (it == node->end()) throw ConfigError("unknown config key '" + walked + "'");
    if (dot == std::string::npos) {
      if (it->is_object()) throw ConfigError("config key '" + walked + "' is a section");
      *it = value;
      return;
    }
    if (!it->is_object()) throw ConfigError("config key '" + walked + "' is not a section");
    node = &*it;
    begin = dot + 1;
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (duration_seconds <= 0.0) throw ConfigError("duration_seconds must be positive");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (corpus.files_per_account < 2) throw ConfigError("corpus.files_per_account must be >= 2");
  try {
    stft.validate();
    detection.validate(sample_rate);
    weights.validate();
    trigger.validate(sample_rate, duration_seconds);
    poison.validate();
    train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (partition.attacker + partition.pbsm + partition.tdpa >= 1.0)
    throw ConfigError("partition fractions must sum below 1");
  if (calibration.validation_fraction <= 0.0 || calibration.validation_fraction >= 1.0)
    throw ConfigError("detection.validation_fraction must be in (0, 1)");
  if (calibration.grid_step <= 0.0 || calibration.grid_max < calibration.grid_min)
    throw ConfigError("detection.tau_grid is malformed");
  if (embed.bands * embed.segments != kEmbeddingDim)
    throw ConfigError("embed.bands * embed.segments must equal " +
                      std::to_string(kEmbeddingDim));
}

PipelineConfig default_config() { return {}; }

PipelineConfig load_config(const std::optional<std::filesystem::path>& file,
                           const std::vector<std::string>& overrides) {
  json effective = config_to_json(default_config());
  if (file) {
    std::ifstream in(*file);
    if (!in) throw MissingInputError("config file " + file->string() + " does not exist");
    json user;
    try {
      in >> user;
    } catch (const json::exception& e) {
      throw ConfigError("config file " + file->string() + ": " + e.what());
    }
    if (!user.is_object()) throw ConfigError("config file must hold a JSON object");
    merge_strict(effective, user, "");
  }
  for (const auto& o : overrides) apply_override(effective, o);

  PipelineConfig cfg;
  try {
    cfg = config_from_json(effective);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void save_config(const PipelineConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("save_config: cannot write " + path.string());
  out << config_dump(cfg) << '\n';
}

std::string config_dump(const PipelineConfig& cfg) { return config_to_json(cfg).dump(2); }

std::string config_section_dump(const PipelineConfig& cfg, const std::vector<std::string>& keys) {
  json full = config_to_json(cfg);
  json picked = json::object();
  for (const auto& key : keys) {
    const auto it = full.find(key);
    if (it == full.end()) throw Error("config_section_dump: no section '" + key + "'");
    picked[key] = *it;
  }
  return picked.dump();
}

}  // namespace vguard
