#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "bsc/synthgen/synthgen.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;

namespace {
fs::path temp_dir(const char* name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}
}  // namespace

TEST_CASE("count zero scene is background only") {
  bsc::SceneSpec spec;
  spec.count = 0;
  spec.seed = 1;
  const auto tile = bsc::generate_scene(spec);
  REQUIRE(tile.count == 0);
  REQUIRE(tile.mask.has_value());
  for (const auto v : tile.mask->v) REQUIRE(v == 0);
}

TEST_CASE("same spec and seed give bit-identical scenes") {
  bsc::SceneSpec spec;
  spec.count = 25;
  spec.seed = 99;
  spec.density = bsc::Density::Dense;
  spec.adjacency_prob = 0.5;
  const auto a = bsc::generate_scene(spec);
  const auto b = bsc::generate_scene(spec);
  REQUIRE(a.pixels.v == b.pixels.v);
  REQUIRE(a.mask->v == b.mask->v);
  spec.seed = 100;
  const auto c = bsc::generate_scene(spec);
  REQUIRE(a.pixels.v != c.pixels.v);
}

TEST_CASE("dense scenes merge but never exceed the placed count") {
  bsc::SceneSpec spec;
  spec.count = 40;
  spec.seed = 7;
  spec.density = bsc::Density::Dense;
  spec.adjacency_prob = 0.7;
  const auto tile = bsc::generate_scene(spec);
  REQUIRE(tile.count == 40);
  const int comps = oracle::connected_components(*tile.mask);
  REQUIRE(comps <= 40);  // attached buildings merge
  REQUIRE(comps >= 1);
  // at 0.7 adjacency some sharing must actually occur
  REQUIRE(comps < 40);
  long built = 0;
  for (const auto v : tile.mask->v) built += v >= 128;
  // 40 buildings at 15-30 m^2 (167-333 px^2 at 0.3 m/px)
  REQUIRE(built >= 40 * 150);
  REQUIRE(built <= 40 * 360);
}

TEST_CASE("sparse scenes keep a 2px moat between footprints") {
  bsc::SceneSpec spec;
  spec.count = 18;
  spec.seed = 21;
  spec.density = bsc::Density::Sparse;
  const auto tile = bsc::generate_scene(spec);
  REQUIRE(oracle::connected_components(*tile.mask) == 18);
  // no two distinct footprints within 2px => dilating by 1 keeps 18 comps
  bsc::Image8 dilated = *tile.mask;
  for (int y = 0; y < tile.mask->h; ++y)
    for (int x = 0; x < tile.mask->w; ++x)
      if (tile.mask->at(y, x) >= 128)
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy >= 0 && xx >= 0 && yy < dilated.h && xx < dilated.w) dilated.at(yy, xx) = 255;
          }
  REQUIRE(oracle::connected_components(dilated) == 18);
}

TEST_CASE("infeasible packing reports the feasible maximum") {
  bsc::SceneSpec spec;
  spec.size_px = 64;
  spec.count = 500;  // cannot fit at 64px
  spec.seed = 3;
  try {
    bsc::generate_scene(spec);
    FAIL("expected GenerationError");
  } catch (const bsc::GenerationError& e) {
    REQUIRE(std::string(e.what()).find("maximum feasible") != std::string::npos);
  }
}

TEST_CASE("corpus generation: manifest, splits, determinism, count stats") {
  const auto dir_a = temp_dir("bsc_corpus_a");
  const auto dir_b = temp_dir("bsc_corpus_b");

  bsc::CorpusSpec spec;
  spec.n = 10;
  spec.count_lo = 0;
  spec.count_hi = 5;
  spec.seed = 42;
  spec.size_px = 96;
  const auto m = bsc::generate_corpus(spec, dir_a.string());
  REQUIRE(m.entries.size() == 10);
  for (const auto& e : m.entries) {
    REQUIRE(e.count >= 0);
    REQUIRE(e.count <= 5);
    REQUIRE(fs::exists(m.resolve(e.image_path)));
    REQUIRE(fs::exists(m.resolve(*e.mask_path)));
  }
  // reload passes validation
  const auto loaded = bsc::load_manifest((dir_a / "manifest.tsv").string());
  REQUIRE(loaded.entries.size() == 10);

  // byte-identical across runs
  const auto m2 = bsc::generate_corpus(spec, dir_b.string());
  REQUIRE(file_bytes(dir_a / "manifest.tsv") == file_bytes(dir_b / "manifest.tsv"));
  for (const auto& e : m.entries) {
    REQUIRE(file_bytes(dir_a / e.image_path) == file_bytes(dir_b / e.image_path));
    REQUIRE(file_bytes(dir_a / *e.mask_path) == file_bytes(dir_b / *e.mask_path));
  }

  // emitted scene counts match the manifest (oracle property)
  for (const auto& e : m.entries) {
    const auto tile = bsc::load_tile(m, e);
    REQUIRE(oracle::connected_components(*tile.mask) <= e.count);
  }
}

TEST_CASE("corpus count distribution approaches the uniform mean") {
  const auto dir = temp_dir("bsc_corpus_mean");
  bsc::CorpusSpec spec;
  spec.n = 150;
  spec.count_lo = 0;
  spec.count_hi = 80;
  spec.seed = 7;
  const auto m = bsc::generate_corpus(spec, dir.string());
  double mean = 0;
  for (const auto& e : m.entries) mean += e.count;
  mean /= static_cast<double>(m.entries.size());
  // law-of-large-numbers check on the emitted manifest; the acceptance run
  // repeats this at n=2000
  REQUIRE(mean >= 35.0);
  REQUIRE(mean <= 45.0);
  fs::remove_all(dir);
}

TEST_CASE("forced split assignment") {
  const auto dir = temp_dir("bsc_corpus_split");
  bsc::CorpusSpec spec;
  spec.n = 4;
  spec.count_lo = 0;
  spec.count_hi = 3;
  spec.seed = 5;
  spec.size_px = 64;
  spec.force_split = bsc::Split::Test;
  spec.id_prefix = "tst";
  const auto m = bsc::generate_corpus(spec, dir.string());
  for (const auto& e : m.entries) REQUIRE(e.split == bsc::Split::Test);
}
