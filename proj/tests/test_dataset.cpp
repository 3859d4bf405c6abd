#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "bsc/dataset/augment.hpp"
#include "bsc/dataset/bands.hpp"
#include "bsc/dataset/manifest.hpp"
#include "bsc/prob_map.hpp"
#include "bsc/rng.hpp"
#include "bsc/synthgen/synthgen.hpp"

namespace fs = std::filesystem;

namespace {
fs::path temp_dir(const char* name) {
  const auto p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}
}  // namespace

TEST_CASE("band_of partitions the counts") {
  REQUIRE(bsc::band_of(30).name == bsc::BandName::Low);
  REQUIRE(bsc::band_of(31).name == bsc::BandName::Medium);
  REQUIRE(bsc::band_of(60).name == bsc::BandName::Medium);
  REQUIRE(bsc::band_of(61).name == bsc::BandName::High);
  REQUIRE(bsc::band_of(0).name == bsc::BandName::Low);
  REQUIRE(bsc::band_of(100000).name == bsc::BandName::High);
  REQUIRE_THROWS_AS(bsc::band_of(-1), bsc::DomainError);
  // total and single-valued: every count falls in exactly one band
  for (int c = 0; c <= 500; ++c) {
    const auto b = bsc::band_of(c);
    REQUIRE(c >= b.lower);
    REQUIRE(c <= b.upper);
    int holding = 0;
    for (const auto& band : bsc::kCountBands)
      if (c >= band.lower && c <= band.upper) ++holding;
    REQUIRE(holding == 1);
  }
}

TEST_CASE("tile extent in meters") {
  REQUIRE(bsc::tile_extent_meters(336, 0.3) == Catch::Approx(100.8).epsilon(1e-12));
  REQUIRE(bsc::tile_extent_meters(1008, 0.3) == Catch::Approx(302.4).epsilon(1e-12));
  REQUIRE(bsc::tile_extent_meters(3024, 0.3) == Catch::Approx(907.2).epsilon(1e-12));
  REQUIRE(bsc::tile_extent_meters(1, 1.0) == Catch::Approx(1.0));
  REQUIRE_THROWS_AS(bsc::tile_extent_meters(0, 0.3), bsc::DomainError);
  REQUIRE_THROWS_AS(bsc::tile_extent_meters(10, -1.0), bsc::DomainError);
}

TEST_CASE("manifest load/save/load is idempotent and validates") {
  const auto dir = temp_dir("bsc_manifest_tests");
  // make two small images + one mask the manifest can reference
  bsc::Image8 img(8, 8, 3, 100);
  bsc::write_netpbm(img, (dir / "a.ppm").string());
  bsc::write_netpbm(img, (dir / "b.ppm").string());
  bsc::Image8 mask(8, 8, 1, 0);
  bsc::write_netpbm(mask, (dir / "a_mask.pgm").string());

  {
    std::ofstream f(dir / "m.tsv");
    f << "# comment line\n";
    f << "t1\ta.ppm\t5\ttrain\ta_mask.pgm\n";
    f << "t2\tb.ppm\t0\tval\t1.5,1.6,2.5,2.6\n";
    f << "t3\tb.ppm\t61\ttest\ta_mask.pgm\t1.5,1.6,2.5,2.6\n";
  }
  const auto m = bsc::load_manifest((dir / "m.tsv").string());
  REQUIRE(m.entries.size() == 3);
  REQUIRE(m.entries[0].mask_path.value() == "a_mask.pgm");
  REQUIRE_FALSE(m.entries[0].geo.has_value());
  REQUIRE(m.entries[1].geo.has_value());
  REQUIRE(m.entries[1].geo->lon_max == Catch::Approx(2.6));
  REQUIRE_FALSE(m.entries[1].mask_path.has_value());
  REQUIRE(m.entries[2].mask_path.has_value());
  REQUIRE(m.entries[2].geo.has_value());

  bsc::save_manifest(m, (dir / "m2.tsv").string());
  const auto m2 = bsc::load_manifest((dir / "m2.tsv").string());
  REQUIRE(m2.entries.size() == m.entries.size());
  bsc::save_manifest(m2, (dir / "m3.tsv").string());
  std::ifstream f2(dir / "m2.tsv"), f3(dir / "m3.tsv");
  const std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  const std::string s3((std::istreambuf_iterator<char>(f3)), std::istreambuf_iterator<char>());
  REQUIRE(s2 == s3);

  // tiles load and validate
  const auto tile = bsc::load_tile(m, m.entries[0]);
  REQUIRE(tile.count == 5);
  REQUIRE(tile.mask.has_value());
}

TEST_CASE("manifest error paths name the offending line") {
  const auto dir = temp_dir("bsc_manifest_err");
  bsc::Image8 img(4, 4, 3, 1);
  bsc::write_netpbm(img, (dir / "a.ppm").string());

  SECTION("missing file") {
    REQUIRE_THROWS_AS(bsc::load_manifest((dir / "nope.tsv").string()), bsc::IoError);
  }
  SECTION("negative count") {
    std::ofstream(dir / "bad.tsv") << "t1\ta.ppm\t-2\ttrain\n";
    try {
      bsc::load_manifest((dir / "bad.tsv").string());
      FAIL("expected ParseError");
    } catch (const bsc::ParseError& e) {
      REQUIRE(std::string(e.what()).find(":1") != std::string::npos);
      REQUIRE(std::string(e.what()).find("-2") != std::string::npos);
    }
  }
  SECTION("non-integer count") {
    std::ofstream(dir / "bad2.tsv") << "t1\ta.ppm\tseven\ttrain\n";
    REQUIRE_THROWS_AS(bsc::load_manifest((dir / "bad2.tsv").string()), bsc::ParseError);
  }
  SECTION("unknown split") {
    std::ofstream(dir / "bad3.tsv") << "t1\ta.ppm\t3\tbogus\n";
    REQUIRE_THROWS_AS(bsc::load_manifest((dir / "bad3.tsv").string()), bsc::ParseError);
  }
  SECTION("duplicate id across splits") {
    std::ofstream(dir / "bad4.tsv") << "t1\ta.ppm\t3\ttrain\nt1\ta.ppm\t3\ttest\n";
    REQUIRE_THROWS_AS(bsc::load_manifest((dir / "bad4.tsv").string()), bsc::ParseError);
  }
  SECTION("unreadable image path") {
    std::ofstream(dir / "bad5.tsv") << "t1\tmissing.ppm\t3\ttrain\n";
    REQUIRE_THROWS_AS(bsc::load_manifest((dir / "bad5.tsv").string()), bsc::Error);
    REQUIRE_NOTHROW(bsc::load_manifest((dir / "bad5.tsv").string(), /*check_files=*/false));
  }
  SECTION("empty file gives empty manifest") {
    std::ofstream(dir / "empty.tsv") << "";
    REQUIRE(bsc::load_manifest((dir / "empty.tsv").string()).entries.empty());
  }
}

TEST_CASE("augment_counting: five isometries, labels and masks preserved") {
  bsc::SceneSpec spec;
  spec.count = 7;
  spec.seed = 123;
  spec.size_px = 96;
  bsc::ImageTile tile = bsc::generate_scene(spec);
  tile.id = "t";

  const auto aug = bsc::augment_counting(tile);
  REQUIRE(aug.size() == 5);
  long mask_sum0 = 0;
  for (const auto v : tile.mask->v) mask_sum0 += v;
  for (const auto& a : aug) {
    REQUIRE(a.count == 7);
    REQUIRE(a.pixels.h == 96);
    REQUIRE(a.pixels.w == 96);
    REQUIRE(a.mask.has_value());
    long s = 0;
    for (const auto v : a.mask->v) s += v;
    REQUIRE(s == mask_sum0);  // isometries preserve the built-pixel total
  }
  // applying again to the original reproduces the same 5 images
  const auto again = bsc::augment_counting(tile);
  for (std::size_t i = 0; i < aug.size(); ++i) REQUIRE(again[i].pixels.v == aug[i].pixels.v);
  // mask transforms match the pixel transforms (spot-check horizontal flip)
  REQUIRE(aug[1].mask->v == bsc::flip_h(*tile.mask).v);
}

TEST_CASE("augment_patch: five outputs, 45 degree rotation keeps size") {
  bsc::ImageTile patch;
  patch.pixels = bsc::Image8(64, 64, 3, 0);
  bsc::Rng rng(5);
  for (auto& v : patch.pixels.v) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  patch.count = 1;

  const auto aug = bsc::augment_patch(patch);
  REQUIRE(aug.size() == 5);
  for (const auto& a : aug) {
    REQUIRE(a.pixels.h == 64);
    REQUIRE(a.pixels.w == 64);
    REQUIRE(a.count == patch.count);
  }

  // all-zero patch is a fixed point (reflection fill reflects zeros)
  bsc::ImageTile zero;
  zero.pixels = bsc::Image8(64, 64, 3, 0);
  for (const auto& a : bsc::augment_patch(zero))
    for (const auto v : a.pixels.v) REQUIRE(v == 0);

  // non-square input is rejected
  bsc::ImageTile rect;
  rect.pixels = bsc::Image8(64, 32, 3, 0);
  REQUIRE_THROWS_AS(bsc::augment_patch(rect), bsc::DomainError);

  // oracle: rotate an upscaled patch, then center-crop back -> same shape
  const bsc::Image8 rotated = bsc::rotate_bilinear(patch.pixels, 45.0);
  REQUIRE(rotated.h == patch.pixels.h);
  REQUIRE(rotated.w == patch.pixels.w);
}

TEST_CASE("built_up_ratio") {
  bsc::ProbabilityMap pm;
  pm.values = bsc::Mat<float>(2, 2, 1.f);
  REQUIRE(bsc::built_up_ratio(pm, 0.5) == Catch::Approx(1.0));
  pm.values = bsc::Mat<float>(2, 2, 0.f);
  REQUIRE(bsc::built_up_ratio(pm, 0.5) == Catch::Approx(0.0));
  pm.values.at(0, 1) = 0.9f;  // exactly one of four pixels above threshold
  REQUIRE(bsc::built_up_ratio(pm, 0.5) == Catch::Approx(0.25));
  REQUIRE_THROWS_AS(bsc::built_up_ratio(pm, 1.5), bsc::DomainError);

  // monotonically non-increasing in the threshold
  bsc::Rng rng(9);
  bsc::ProbabilityMap rnd;
  rnd.values = bsc::Mat<float>(17, 13);
  for (auto& v : rnd.values.v) v = static_cast<float>(rng.uniform());
  double prev = 1.1;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const double r = bsc::built_up_ratio(rnd, t);
    REQUIRE(r <= prev + 1e-12);
    prev = r;
  }
}
