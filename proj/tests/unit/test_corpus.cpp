#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "vguard/corpus.hpp"
#include "vguard/pitch.hpp"
#include "vguard/wav_io.hpp"

using namespace vguard;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "vguard_corpus_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

uint64_t hash_tree(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& f : files) {
    h = fnv1a64(std::filesystem::relative(f, root).string(), h);
    std::ifstream in(f, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    h = fnv1a64(bytes, h);
  }
  return h;
}

SynthesisOptions small_options(uint64_t seed) {
  SynthesisOptions o;
  o.n_accounts = 20;
  o.seed = seed;
  return o;
}

CorpusManifest dummy_manifest(size_t n) {
  CorpusManifest m;
  for (size_t i = 0; i < n; ++i) {
    Account a;
    a.id = "acct_" + std::to_string(10000 + i);
    m.accounts.push_back(a);
  }
  return m;
}

}  // namespace

TEST_CASE("synthesis is deterministic byte for byte") {
  const auto dir1 = fresh_dir("synth_a");
  const auto dir2 = fresh_dir("synth_b");
  auto m1 = synthesize_corpus(dir1, small_options(7));
  auto m2 = synthesize_corpus(dir2, small_options(7));
  save_manifest(m1, dir1 / "manifest.json");
  save_manifest(m2, dir2 / "manifest.json");
  CHECK(hash_tree(dir1) == hash_tree(dir2));

  const auto dir3 = fresh_dir("synth_c");
  auto m3 = synthesize_corpus(dir3, small_options(8));
  save_manifest(m3, dir3 / "manifest.json");
  CHECK(hash_tree(dir1) != hash_tree(dir3));
}

TEST_CASE("every synthesized file has exactly 3 s at 16 kHz and 10 files per account") {
  const auto dir = fresh_dir("synth_shape");
  const auto manifest = synthesize_corpus(dir, small_options(21));
  REQUIRE(manifest.accounts.size() == 20);
  for (const auto& acct : manifest.accounts) {
    REQUIRE(acct.files.size() == 10);
    for (const auto& rel : acct.files) CHECK(read_wav(dir / rel).size() == 48000);
  }
}

TEST_CASE("estimated pitch recovers the generating profile within 5 Hz") {
  const auto dir = fresh_dir("synth_pitch");
  std::vector<SpeakerProfile> profiles;
  const auto manifest = synthesize_corpus(dir, small_options(33), &profiles);
  REQUIRE(profiles.size() == manifest.accounts.size());
  for (size_t a = 0; a < 5; ++a) {
    const auto w = read_wav(dir / manifest.accounts[a].files[0]);
    const auto track = estimate_pitch(w);
    REQUIRE(track.voiced);
    CHECK(std::abs(track.f0_hz - profiles[a].f0_hz) <= 5.0);
  }
}

TEST_CASE("synthesis rejects fewer than 20 accounts") {
  SynthesisOptions o;
  o.n_accounts = 19;
  CHECK_THROWS_AS(synthesize_corpus(fresh_dir("synth_small"), o), Error);
}

TEST_CASE("ingest keeps the first 10, drops short accounts and warns") {
  const auto src = fresh_dir("ingest_src");
  const auto manifest = synthesize_corpus(src, small_options(55));

  const auto root = fresh_dir("ingest_root");
  auto copy_account = [&](size_t idx, const std::string& id, int keep) {
    const auto dir = root / "accounts" / id;
    std::filesystem::create_directories(dir);
    for (int k = 0; k < keep; ++k) {
      const auto& rel = manifest.accounts[idx].files[static_cast<size_t>(k % 10)];
      std::filesystem::copy_file(src / rel, dir / (std::to_string(100 + k) + ".wav"));
    }
  };
  copy_account(0, "complete", 10);
  copy_account(1, "overfull", 12);
  copy_account(2, "short", 4);

  const auto result = ingest_directory(root);
  REQUIRE(result.manifest.accounts.size() == 2);
  for (const auto& a : result.manifest.accounts) CHECK(a.files.size() == 10);
  CHECK(result.warnings.size() == 2);
  CHECK(result.manifest.find("short") == nullptr);
  CHECK(result.manifest.find("overfull") != nullptr);

  CHECK_THROWS_AS(ingest_directory(fresh_dir("ingest_empty")), Error);
}

TEST_CASE("partition sizes follow the floor rule") {
  const auto m100 = dummy_manifest(100);
  const auto p = partition_accounts(m100, {0.05, 0.05, 0.05}, 42);
  CHECK(p.attacker_ids.size() == 5);
  CHECK(p.pbsm_ids.size() == 5);
  CHECK(p.tdpa_ids.size() == 5);
  CHECK(p.legitimate_ids.size() == 85);

  const auto p0 = partition_accounts(m100, {0.0, 0.0, 0.0}, 42);
  CHECK(p0.legitimate_ids.size() == 100);
  CHECK(p0.attacker_ids.empty());

  // merged-corpus scale
  const auto p_big = partition_accounts(dummy_manifest(3206), {0.05, 0.05, 0.05}, 1);
  CHECK(p_big.attacker_ids.size() == 160);
  CHECK(p_big.pbsm_ids.size() == 160);
  CHECK(p_big.tdpa_ids.size() == 160);
  CHECK(p_big.legitimate_ids.size() == 3206 - 480);
}

TEST_CASE("partition is disjoint, exhaustive and seed-deterministic") {
  Rng rng(99);
  for (int trial = 0; trial < 8; ++trial) {
    const size_t n = 20 + rng.uniform_int(300);
    const uint64_t seed = rng.next_u64();
    const auto m = dummy_manifest(n);
    const auto p = partition_accounts(m, {0.05, 0.07, 0.1}, seed);
    std::vector<std::string> all;
    for (const auto* ids :
         {&p.attacker_ids, &p.pbsm_ids, &p.tdpa_ids, &p.legitimate_ids})
      all.insert(all.end(), ids->begin(), ids->end());
    CHECK(all.size() == n);
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());

    const auto p2 = partition_accounts(m, {0.05, 0.07, 0.1}, seed);
    CHECK(p.attacker_ids == p2.attacker_ids);
    CHECK(p.pbsm_ids == p2.pbsm_ids);
    CHECK(p.tdpa_ids == p2.tdpa_ids);
  }
}

TEST_CASE("partition warns when a nonzero fraction rounds to zero accounts") {
  std::vector<std::string> warnings;
  const auto p = partition_accounts(dummy_manifest(30), {0.01, 0.05, 0.05}, 3, &warnings);
  CHECK(p.attacker_ids.empty());
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("attacker") != std::string::npos);

  CHECK_THROWS_AS(partition_accounts(dummy_manifest(30), {0.5, 0.3, 0.2}, 3), Error);
}

TEST_CASE("manifest JSON round trip") {
  const auto dir = fresh_dir("manifest_io");
  auto m = dummy_manifest(3);
  m.seed = 77;
  m.accounts[1].ground_truth = AccountClass::Triggered;
  m.accounts[1].files = {"accounts/x/0.wav"};
  m.accounts[1].provenance = {FileProvenance::Triggered};
  save_manifest(m, dir / "manifest.json");
  const auto back = load_manifest(dir / "manifest.json");
  CHECK(back.seed == 77);
  REQUIRE(back.accounts.size() == 3);
  CHECK(back.accounts[1].ground_truth == AccountClass::Triggered);
  CHECK(back.accounts[1].provenance[0] == FileProvenance::Triggered);
  CHECK(back.root == dir);

  CHECK_THROWS_AS(load_manifest(dir / "missing.json"), MissingInputError);
}
