#include "vguard/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "vguard/wav_io.hpp"

namespace vguard {

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<std::vector<float>> embeddings_for_account(const CorpusManifest& manifest,
                                                       const Account& acct,
                                                       const EmbedParams& params) {
  std::vector<std::vector<float>> out;
  out.reserve(acct.files.size());
  for (const auto& rel : acct.files) {
    const Waveform raw = read_wav(manifest.resolve(rel), manifest.sample_rate);
    out.push_back(embed_sample(normalize_duration(raw, manifest.duration_seconds), params));
  }
  return out;
}

}  // namespace

int class_index(AccountClass c) {
  switch (c) {
    case AccountClass::Legitimate: return kClassLegitimate;
    case AccountClass::Attacked: return kClassAttacked;
    case AccountClass::Triggered: return kClassTriggered;
    case AccountClass::AttackerPool: break;
  }
  throw Error("class_index: attacker-pool accounts carry no classifier label");
}

std::string class_name(int index) {
  switch (index) {
    case kClassLegitimate: return "legitimate";
    case kClassAttacked: return "attacked";
    case kClassTriggered: return "triggered";
  }
  throw Error("class_name: bad index " + std::to_string(index));
}

std::vector<float> embed_sample(const Waveform& w, const EmbedParams& params) {
  if (params.bands * params.segments != kEmbeddingDim)
    throw Error("embed_sample: bands * segments must equal " + std::to_string(kEmbeddingDim));
  if (params.fmax_hz > 0.5 * w.sample_rate + 1e-9)
    throw Error("embed_sample: fmax above Nyquist");

  const auto spec = stft(w, params.stft);

  // Mel-spaced band edges over [0, fmax]; each band sums the magnitudes of
  // the bins whose center falls inside it.
  const double mel_hi = hz_to_mel(params.fmax_hz);
  std::vector<size_t> band_of(spec.num_bins, params.bands);  // sentinel: out of range
  for (size_t f = 0; f < spec.num_bins; ++f) {
    const double hz = spec.bin_center_hz(f);
    if (hz > params.fmax_hz) continue;
    auto b = static_cast<size_t>(hz_to_mel(hz) / mel_hi * static_cast<double>(params.bands));
    band_of[f] = std::min(b, params.bands - 1);
  }

  // Mean over the frames of each time segment, so values stay on the
  // per-frame magnitude scale regardless of file length.
  std::vector<float> values(kEmbeddingDim, 0.0f);
  std::vector<double> acc(params.bands, 0.0);
  for (size_t s = 0; s < params.segments; ++s) {
    const size_t t0 = s * spec.num_frames / params.segments;
    const size_t t1 = (s + 1) * spec.num_frames / params.segments;
    std::fill(acc.begin(), acc.end(), 0.0);
    for (size_t t = t0; t < t1; ++t) {
      const auto* bins = spec.grid.data() + t * spec.num_bins;
      for (size_t f = 0; f < spec.num_bins; ++f)
        if (band_of[f] < params.bands) acc[band_of[f]] += std::abs(bins[f]);
    }
    const double frames = t1 > t0 ? static_cast<double>(t1 - t0) : 1.0;
    for (size_t b = 0; b < params.bands; ++b)
      values[b * params.segments + s] =
          static_cast<float>(std::log(acc[b] / frames + params.log_floor));
  }
  return standardize(std::move(values));
}

std::vector<float> standardize(std::vector<float> raw, size_t target_len) {
  if (raw.empty()) throw Error("standardize: empty embedding");
  raw.resize(target_len, 0.0f);
  return raw;
}

std::vector<PairedInput> pair_account(const std::vector<std::vector<float>>& embeddings,
                                      const std::string& account_id, int label) {
  if (embeddings.size() < 2) throw Error("pair_account: need at least two embeddings");
  for (const auto& e : embeddings)
    if (e.size() != kEmbeddingDim) throw Error("pair_account: embedding of wrong length");

  const size_t m = embeddings.size();
  const size_t half = (m + 1) / 2;
  std::vector<size_t> a_idx, b_idx;
  for (size_t i = 0; i < half; ++i) a_idx.push_back(i);
  for (size_t i = half; i < m; ++i) b_idx.push_back(i);
  if (b_idx.size() < a_idx.size()) b_idx.push_back(m - 1);  // odd count: reuse the last

  auto make_pair_grid = [&](size_t ia, size_t ib) {
    PairedInput p;
    p.account_id = account_id;
    p.label = label;
    p.pair = {static_cast<int>(ia), static_cast<int>(ib)};
    p.grid.resize(2 * kEmbeddingDim);
    std::copy(embeddings[ia].begin(), embeddings[ia].end(), p.grid.begin());
    std::copy(embeddings[ib].begin(), embeddings[ib].end(), p.grid.begin() + kEmbeddingDim);
    const auto [mn_it, mx_it] = std::minmax_element(p.grid.begin(), p.grid.end());
    const float mn = *mn_it, mx = *mx_it;
    if (mx > mn) {
      const float inv = 1.0f / (mx - mn);
      for (auto& v : p.grid) v = (v - mn) * inv;
    } else {
      std::fill(p.grid.begin(), p.grid.end(), 0.5f);
    }
    return p;
  };

  std::vector<PairedInput> pairs;
  pairs.reserve(2 * a_idx.size());
  for (size_t i = 0; i < a_idx.size(); ++i) pairs.push_back(make_pair_grid(a_idx[i], b_idx[i]));
  for (size_t i = 0; i < a_idx.size(); ++i)
    pairs.push_back(make_pair_grid(a_idx[i], b_idx[(i + 1) % b_idx.size()]));
  return pairs;
}

void save_embedding_cache(const std::filesystem::path& path,
                          const std::vector<std::vector<float>>& embeddings) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("save_embedding_cache: cannot write " + path.string());
  const uint32_t count = static_cast<uint32_t>(embeddings.size());
  const uint32_t dim = kEmbeddingDim;
  unsigned char header[13] = {'V', 'S', 'E', 'M', 1};
  for (int i = 0; i < 4; ++i) {
    header[5 + i] = (count >> (8 * i)) & 0xff;
    header[9 + i] = (dim >> (8 * i)) & 0xff;
  }
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  static_assert(sizeof(float) == 4);
  for (const auto& e : embeddings) {
    if (e.size() != kEmbeddingDim) throw Error("save_embedding_cache: wrong embedding length");
    for (float v : e) {
      uint32_t bits;
      std::memcpy(&bits, &v, 4);
      unsigned char b[4] = {static_cast<unsigned char>(bits & 0xff),
                            static_cast<unsigned char>((bits >> 8) & 0xff),
                            static_cast<unsigned char>((bits >> 16) & 0xff),
                            static_cast<unsigned char>((bits >> 24) & 0xff)};
      out.write(reinterpret_cast<const char*>(b), 4);
    }
  }
}

std::vector<std::vector<float>> load_embedding_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("load_embedding_cache: cannot open " + path.string());
  unsigned char header[13];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || std::memcmp(header, "VSEM", 4) != 0)
    throw Error("load_embedding_cache: " + path.string() + " is not an embedding cache");
  if (header[4] != 1)
    throw Error("load_embedding_cache: unsupported version " + std::to_string(header[4]));
  uint32_t count = 0, dim = 0;
  for (int i = 3; i >= 0; --i) {
    count = count << 8 | header[5 + i];
    dim = dim << 8 | header[9 + i];
  }
  if (dim != kEmbeddingDim)
    throw Error("load_embedding_cache: dimension " + std::to_string(dim) + ", expected " +
                std::to_string(kEmbeddingDim));
  std::vector<std::vector<float>> out(count, std::vector<float>(dim));
  for (auto& e : out)
    for (auto& v : e) {
      unsigned char b[4];
      in.read(reinterpret_cast<char*>(b), 4);
      if (!in) throw Error("load_embedding_cache: truncated file " + path.string());
      uint32_t bits = static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
                      static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
      std::memcpy(&v, &bits, 4);
    }
  return out;
}

std::array<size_t, kNumClasses> Dataset::label_counts() const {
  std::array<size_t, kNumClasses> counts{};
  for (const auto& item : items)
    if (item.label >= 0 && item.label < kNumClasses) ++counts[static_cast<size_t>(item.label)];
  return counts;
}

Dataset build_dataset(const CorpusManifest& manifest, const GroundTruth& truth,
                      const DetectionReport* detection, bool for_training,
                      const EmbedParams& params, const std::filesystem::path& cache_dir) {
  Dataset ds;
  for (const auto& acct : manifest.accounts) {
    const auto truth_it = truth.accounts.find(acct.id);
    if (truth_it == truth.accounts.end())
      throw MissingInputError("build_dataset: no ground truth for account " + acct.id);

    if (for_training && detection != nullptr) {
      const auto det_it = detection->accounts.find(acct.id);
      if (det_it != detection->accounts.end() && det_it->second.decision == Decision::Deferred)
        continue;  // ambiguous acoustic evidence is kept out of training
    }

    std::vector<std::vector<float>> embeddings;
    const auto cache = cache_dir / (acct.id + ".vsem");
    if (std::filesystem::exists(cache)) {
      embeddings = load_embedding_cache(cache);
    } else {
      embeddings = embeddings_for_account(manifest, acct, params);
    }
    const int label = class_index(truth_it->second.account_class);
    auto pairs = pair_account(embeddings, acct.id, label);
    std::move(pairs.begin(), pairs.end(), std::back_inserter(ds.items));
  }
  return ds;
}

void write_embedding_caches(const CorpusManifest& manifest, const EmbedParams& params,
                            const std::filesystem::path& cache_dir, int workers) {
  std::filesystem::create_directories(cache_dir);
  const size_t n = manifest.accounts.size();
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const size_t i = next.fetch_add(1);
      if (i >= n) return;
      const auto& acct = manifest.accounts[i];
      save_embedding_cache(cache_dir / (acct.id + ".vsem"),
                           embeddings_for_account(manifest, acct, params));
    }
  };
  const int pool = std::max(1, workers);
  if (pool == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < pool; ++t) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }
}

}  // namespace vguard
