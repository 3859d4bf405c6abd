#include <catch2/catch_amalgamated.hpp>

#include "bsc/backbone/backbone.hpp"

namespace {
bsc::Image8 random_rgb(int h, int w, std::uint64_t seed) {
  bsc::Rng rng(seed);
  bsc::Image8 img(h, w, 3);
  for (auto& v : img.v) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return img;
}
}  // namespace

TEST_CASE("tiny backbone shape follows the stride-32 ladder") {
  bsc::TinyBackbone bb(17);
  REQUIRE(bb.stride() == 32);
  REQUIRE(bb.channels() == 64);
  const auto v336 = bb.extract_volume(random_rgb(336, 336, 1));
  REQUIRE(v336.c == 64);
  REQUIRE(v336.h == 10);  // floor(336 / 32)
  REQUIRE(v336.w == 10);
  const auto v224 = bb.extract_volume(random_rgb(224, 224, 2));
  REQUIRE(v224.h == 7);
  REQUIRE_THROWS_AS(bb.extract_volume(random_rgb(16, 64, 3)), bsc::ShapeError);
}

TEST_CASE("extraction is deterministic and non-degenerate") {
  bsc::TinyBackbone bb(17);
  const auto img = random_rgb(96, 96, 4);
  const auto a = bb.extract_volume(img);
  const auto b = bb.extract_volume(img);
  REQUIRE(a.v == b.v);

  bsc::Image8 zeros(96, 96, 3, 0);
  bsc::Image8 mid(96, 96, 3, 128);
  const auto vz = bb.extract_volume(zeros);
  const auto vm = bb.extract_volume(mid);
  REQUIRE(vz.v != vm.v);

  // same seed, fresh instance: identical weights
  bsc::TinyBackbone bb2(17);
  REQUIRE(bb2.weight_signature() == bb.weight_signature());
  bsc::TinyBackbone other(18);
  REQUIRE(other.weight_signature() != bb.weight_signature());
}

TEST_CASE("pooled vector equals the spatial mean of the volume") {
  bsc::TinyBackbone bb(17);
  const auto img = random_rgb(128, 160, 5);
  const auto vol = bb.extract_volume(img);
  const auto pooled = bb.extract_pooled(img);
  REQUIRE(pooled.size() == static_cast<std::size_t>(vol.c));
  // brute-force spatial mean oracle
  for (int c = 0; c < vol.c; ++c) {
    double s = 0;
    for (int y = 0; y < vol.h; ++y)
      for (int x = 0; x < vol.w; ++x) s += vol.at(c, y, x);
    s /= static_cast<double>(vol.h) * vol.w;
    REQUIRE(pooled[static_cast<std::size_t>(c)] == Catch::Approx(s).margin(1e-5));
  }
}

TEST_CASE("densenet121 topology: 1024 channels at stride 32") {
  bsc::DenseNet121 bb(7);
  REQUIRE(bb.channels() == 1024);
  REQUIRE(bb.stride() == 32);
  // shape oracle from the published stride ladder, checked on a small input
  const auto v = bb.extract_volume(random_rgb(96, 64, 6));
  REQUIRE(v.c == 1024);
  REQUIRE(v.h == 3);  // floor(96 / 32)
  REQUIRE(v.w == 2);
  const auto pooled = bb.extract_pooled(random_rgb(64, 64, 7));
  REQUIRE(pooled.size() == 1024);
}

TEST_CASE("backbone factory round-trips descriptors") {
  const auto a = bsc::make_backbone("tiny64:seed=23");
  REQUIRE(a->descriptor() == "tiny64:seed=23");
  const auto b = bsc::make_backbone(a->descriptor());
  REQUIRE(b->weight_signature() == a->weight_signature());
  const auto d = bsc::make_backbone("densenet121:random-seed=3");
  REQUIRE(d->channels() == 1024);
  REQUIRE_THROWS_AS(bsc::make_backbone("resnet50"), bsc::ConfigError);
}
