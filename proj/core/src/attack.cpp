#include "vguard/attack.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vguard/wav_io.hpp"

namespace vguard {

using nlohmann::json;

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kRampSeconds = 0.005;  // cue fade-in/out, keeps clicks out of the band

Waveform make_cue(size_t total_len, int sample_rate, const TriggerConfig& cfg,
                  double amplitude, double offset_seconds) {
  Waveform h;
  h.sample_rate = sample_rate;
  h.samples.assign(total_len, 0.0);
  const auto start = static_cast<size_t>(std::llround(offset_seconds * sample_rate));
  const auto len = static_cast<size_t>(std::llround(cfg.duration_seconds * sample_rate));
  const auto ramp = std::min(len / 2, static_cast<size_t>(std::llround(kRampSeconds * sample_rate)));
  for (size_t i = 0; i < len && start + i < total_len; ++i) {
    double env = 1.0;
    if (i < ramp) env = 0.5 - 0.5 * std::cos(kTwoPi * 0.5 * i / ramp);
    else if (i >= len - ramp) env = 0.5 - 0.5 * std::cos(kTwoPi * 0.5 * (len - 1 - i) / ramp);
    h.samples[start + i] =
        amplitude * env * std::sin(kTwoPi * cfg.freq_hz * static_cast<double>(i) / sample_rate);
  }
  return h;
}

// Frequency-axis remap by the scale factor: each output bin takes the input
// bin nearest to f/scale.  Crude but adequate for robustness experiments.
void pitch_shift_grid(ComplexSpectrogram& spec, double scale) {
  const size_t bins = spec.num_bins;
  std::vector<std::complex<double>> row(bins);
  for (size_t t = 0; t < spec.num_frames; ++t) {
    auto* frame = spec.grid.data() + t * bins;
    for (size_t f = 0; f < bins; ++f) {
      const double src = static_cast<double>(f) / scale;
      const auto idx = static_cast<long>(std::llround(src));
      row[f] = (idx >= 0 && idx < static_cast<long>(bins)) ? frame[idx] : 0.0;
    }
    std::copy(row.begin(), row.end(), frame);
  }
}

}  // namespace

void TriggerConfig::validate(int sample_rate, double file_seconds) const {
  if (pitch_scale <= 0.0) throw Error("trigger: pitch_scale must be positive");
  const double nyquist = 0.5 * sample_rate;
  if (freq_hz <= 4000.0 || freq_hz >= nyquist)
    throw Error("trigger: freq_hz must lie in (4 kHz, Nyquist)");
  if (duration_seconds <= 0.0 || duration_seconds >= file_seconds)
    throw Error("trigger: duration must be positive and shorter than the file");
  if (amplitude_rms < 0.0) throw Error("trigger: amplitude must be nonnegative");
}

void PoisonConfig::validate() const {
  if (replace_fraction <= 0.0 || replace_fraction > 1.0)
    throw Error("poison: replace_fraction must be in (0, 1]");
}

Waveform inject_pbsm(const Waveform& w, const TriggerConfig& cfg, const StftParams& stft_params,
                     double offset_seconds) {
  const double file_seconds = w.duration_seconds();
  cfg.validate(w.sample_rate, file_seconds);
  if (offset_seconds < 0.0 || offset_seconds + cfg.duration_seconds > file_seconds)
    throw Error("inject_pbsm: trigger does not fit at offset " + std::to_string(offset_seconds));

  auto grid = stft(w, stft_params);
  if (cfg.mode == TriggerConfig::Mode::PitchShift) {
    pitch_shift_grid(grid, cfg.pitch_scale);
  } else {
    for (auto& v : grid.grid) v *= cfg.pitch_scale;
  }

  if (cfg.amplitude_rms > 0.0) {
    const double amplitude = cfg.amplitude_rms * rms(w);
    const Waveform cue = make_cue(w.size(), w.sample_rate, cfg, amplitude, offset_seconds);
    const auto cue_grid = stft(cue, stft_params);
    for (size_t i = 0; i < grid.grid.size(); ++i) grid.grid[i] += cue_grid.grid[i];
  }

  Waveform out = istft(grid, stft_params, w.size());
  // The frame grid carries no information about the trailing samples past
  // the last window (and none about sample 0 under a Hann taper); pass the
  // input through there instead of zeroing it.
  const size_t covered = grid.covered_samples();
  for (size_t i = covered; i < w.size(); ++i) out.samples[i] = w.samples[i];
  if (stft_params.window == WindowType::Hann && !w.empty()) out.samples[0] = w.samples[0];
  clip_in_place(out);
  return out;
}

double draw_trigger_offset(double file_seconds, const TriggerConfig& cfg, Rng& rng) {
  const double hi = file_seconds - cfg.duration_seconds;
  if (hi < 0.0) throw Error("draw_trigger_offset: trigger longer than file");
  return rng.uniform(0.0, hi);
}

PoisonedAccount poison_account(const Account& account, const std::vector<std::string>& attacker_pool,
                               const PoisonConfig& cfg, Rng& rng) {
  cfg.validate();
  const size_t m = account.files.size();
  const auto k = static_cast<size_t>(std::floor(cfg.replace_fraction * static_cast<double>(m)));
  if (attacker_pool.size() < k)
    throw Error("poison_account: attacker pool of " + std::to_string(attacker_pool.size()) +
                " files cannot supply " + std::to_string(k));

  PoisonedAccount result;
  result.account = account;
  if (k == 0) return result;

  auto victims = rng.sample_without_replacement(m, k);
  auto sources = rng.sample_without_replacement(attacker_pool.size(), k);
  std::sort(victims.begin(), victims.end());
  for (size_t i = 0; i < k; ++i) {
    result.account.files[victims[i]] = attacker_pool[sources[i]];
    result.account.provenance[victims[i]] = FileProvenance::Attacker;
  }
  result.replaced = std::move(victims);
  result.account.ground_truth = AccountClass::Attacked;
  return result;
}

size_t GroundTruth::count(AccountClass c) const {
  size_t n = 0;
  for (const auto& [id, e] : accounts)
    if (e.account_class == c) ++n;
  return n;
}

StagedAttack stage_attack(const CorpusManifest& source, const Partition& partition,
                          const TriggerConfig& trigger, const PoisonConfig& poison,
                          const StftParams& stft_params, uint64_t seed,
                          const std::filesystem::path& out_dir) {
  trigger.validate(source.sample_rate, source.duration_seconds);
  poison.validate();

  // Sanity: the partition must name accounts of this manifest.
  for (const auto* ids : {&partition.attacker_ids, &partition.pbsm_ids, &partition.tdpa_ids,
                          &partition.legitimate_ids})
    for (const auto& id : *ids)
      if (source.find(id) == nullptr)
        throw Error("stage_attack: partition references unknown account " + id);

  std::filesystem::create_directories(out_dir / "accounts");

  std::vector<std::string> attacker_pool;  // relative paths in the source corpus
  for (const auto& id : partition.attacker_ids)
    for (const auto& f : source.find(id)->files) attacker_pool.push_back(f);
  std::sort(attacker_pool.begin(), attacker_pool.end());

  StagedAttack staged;
  staged.attacked.sample_rate = source.sample_rate;
  staged.attacked.duration_seconds = source.duration_seconds;
  staged.attacked.seed = seed;
  staged.attacked.root = out_dir;
  staged.truth.seed = seed;

  auto copy_file = [](const std::filesystem::path& from, const std::filesystem::path& to) {
    std::filesystem::copy_file(from, to, std::filesystem::copy_options::overwrite_existing);
  };

  for (size_t a = 0; a < source.accounts.size(); ++a) {
    const Account& src = source.accounts[a];
    if (partition.contains(partition.attacker_ids, src.id)) continue;  // withheld from D'

    const bool is_pbsm = partition.contains(partition.pbsm_ids, src.id);
    const bool is_tdpa = partition.contains(partition.tdpa_ids, src.id);

    Account out_acct;
    out_acct.id = src.id;
    out_acct.ground_truth = is_pbsm   ? AccountClass::Triggered
                            : is_tdpa ? AccountClass::Attacked
                                      : AccountClass::Legitimate;

    GroundTruthEntry entry;
    entry.account_class = out_acct.ground_truth;
    entry.trigger_offsets.assign(src.files.size(), -1.0);

    const auto acct_dir = out_dir / "accounts" / src.id;
    std::filesystem::create_directories(acct_dir);

    // Resolve per-file sources (legitimate/triggered keep their own files;
    // poisoned slots point into the attacker pool).
    std::vector<std::string> file_sources = src.files;
    std::vector<FileProvenance> provenance = src.provenance;
    if (is_tdpa) {
      auto rng = Rng::derive(seed, {rng_stream::kPoison, a});
      Account tmp = src;
      auto poisoned = poison_account(tmp, attacker_pool, poison, rng);
      file_sources = poisoned.account.files;
      provenance = poisoned.account.provenance;
    }

    for (size_t k = 0; k < file_sources.size(); ++k) {
      const std::string rel =
          "accounts/" + src.id + "/" + std::filesystem::path(src.files[k]).filename().string();
      const auto dst = out_dir / rel;
      if (is_pbsm) {
        auto rng = Rng::derive(seed, {rng_stream::kTrigger, a, k});
        const Waveform clean = read_wav(source.resolve(file_sources[k]), source.sample_rate);
        const Waveform normalized = normalize_duration(clean, source.duration_seconds);
        const double offset = draw_trigger_offset(source.duration_seconds, trigger, rng);
        write_wav(dst, inject_pbsm(normalized, trigger, stft_params, offset));
        entry.trigger_offsets[k] = offset;
        provenance[k] = FileProvenance::Triggered;
      } else {
        copy_file(source.resolve(file_sources[k]), dst);
      }
      out_acct.files.push_back(rel);
    }

    out_acct.provenance = provenance;
    entry.provenance = provenance;
    staged.truth.accounts.emplace(src.id, std::move(entry));
    staged.attacked.accounts.push_back(std::move(out_acct));
  }

  return staged;
}

void save_ground_truth(const GroundTruth& truth, const std::filesystem::path& path) {
  json j;
  j["seed"] = truth.seed;
  json accounts = json::object();
  for (const auto& [id, e] : truth.accounts) {
    json je;
    je["class"] = to_string(e.account_class);
    json prov = json::array();
    for (auto p : e.provenance) prov.push_back(to_string(p));
    je["provenance"] = prov;
    je["trigger_offsets"] = e.trigger_offsets;
    accounts[id] = std::move(je);
  }
  j["accounts"] = std::move(accounts);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("save_ground_truth: cannot write " + path.string());
  out << j.dump(2) << '\n';
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInputError("load_ground_truth: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("load_ground_truth: " + path.string() + ": " + e.what());
  }
  GroundTruth truth;
  truth.seed = j.at("seed").get<uint64_t>();
  for (const auto& [id, je] : j.at("accounts").items()) {
    GroundTruthEntry e;
    e.account_class = account_class_from_string(je.at("class").get<std::string>());
    for (const auto& p : je.at("provenance"))
      e.provenance.push_back(provenance_from_string(p.get<std::string>()));
    e.trigger_offsets = je.at("trigger_offsets").get<std::vector<double>>();
    truth.accounts.emplace(id, std::move(e));
  }
  return truth;
}

}  // namespace vguard
