#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "bsc/grid/grid.hpp"
#include "bsc/synthgen/synthgen.hpp"

namespace fs = std::filesystem;

namespace {

// 1008x3024 composite built from 3x9 synthetic cells with known counts
bsc::ImageTile composite_tile(std::uint64_t seed, std::vector<long>& cell_truths) {
  bsc::ImageTile big;
  big.id = "composite";
  big.pixels = bsc::Image8(1008, 3024, 3);
  cell_truths.clear();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 9; ++c) {
      bsc::SceneSpec spec;
      spec.count = static_cast<int>((seed + r * 9 + c) % 50);
      spec.seed = seed + r * 9 + c;
      const auto cell = bsc::generate_scene(spec);
      cell_truths.push_back(cell.count);
      for (int y = 0; y < 336; ++y)
        for (int x = 0; x < 336; ++x)
          for (int ch = 0; ch < 3; ++ch)
            big.pixels.at(r * 336 + y, c * 336 + x, ch) = cell.pixels.at(y, x, ch);
    }
  return big;
}

bsc::CountModel<float> cheap_model() {
  auto bb = bsc::make_backbone("tiny64:seed=17");
  return bsc::CountModel<float>::create(bsc::CountKind::Drc, bb, std::nullopt, 3);
}

}  // namespace

TEST_CASE("1008x3024 yields exactly 27 cells and exact totals") {
  std::vector<long> truths;
  const auto big = composite_tile(100, truths);
  const auto model = cheap_model();
  const auto grid = bsc::count_tile(model, big, 336, 2, &truths);
  REQUIRE(grid.rows == 3);
  REQUIRE(grid.cols == 9);
  REQUIRE(grid.cells.size() == 27);
  REQUIRE(grid.pad_right == 0);
  REQUIRE(grid.pad_bottom == 0);
  long sum = 0;
  for (const auto& c : grid.cells) {
    REQUIRE_FALSE(c.padded);
    REQUIRE(c.pred >= 0);
    sum += c.pred;
  }
  REQUIRE(grid.total_pred() == sum);
  REQUIRE(grid.total_truth().has_value());
  REQUIRE(*grid.total_truth() == [&] {
    long s = 0;
    for (const auto t : truths) s += t;
    return s;
  }());

  // cells are ordered by (row, col) and tile the image without overlap
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    REQUIRE(grid.cells[i].row == static_cast<int>(i) / 9);
    REQUIRE(grid.cells[i].col == static_cast<int>(i) % 9);
    REQUIRE(grid.cells[i].x0 == (static_cast<int>(i) % 9) * 336);
    REQUIRE(grid.cells[i].y0 == (static_cast<int>(i) / 9) * 336);
  }

  SECTION("single-cell image equals direct inference") {
    bsc::ImageTile one;
    one.id = "one";
    one.pixels = bsc::crop(big.pixels, 0, 0, 336, 336);
    const auto g1 = bsc::count_tile(model, one, 336);
    REQUIRE(g1.cells.size() == 1);
    REQUIRE(g1.cells[0].pred == model.predict(one).rounded);
    REQUIRE(g1.total_pred() == g1.cells[0].pred);
  }

  SECTION("cell table round trip is exact") {
    const auto dir = fs::temp_directory_path() / "bsc_grid";
    fs::create_directories(dir);
    const auto path = (dir / "cells.tsv").string();
    bsc::write_cell_table(grid, path);
    const auto back = bsc::parse_cell_table(path);
    REQUIRE(back.cell_size == grid.cell_size);
    REQUIRE(back.rows == grid.rows);
    REQUIRE(back.cols == grid.cols);
    REQUIRE(back.image_h == grid.image_h);
    REQUIRE(back.cells.size() == grid.cells.size());
    for (std::size_t i = 0; i < grid.cells.size(); ++i) {
      REQUIRE(back.cells[i].row == grid.cells[i].row);
      REQUIRE(back.cells[i].col == grid.cells[i].col);
      REQUIRE(back.cells[i].x0 == grid.cells[i].x0);
      REQUIRE(back.cells[i].y0 == grid.cells[i].y0);
      REQUIRE(back.cells[i].pred == grid.cells[i].pred);
      REQUIRE(back.cells[i].truth == grid.cells[i].truth);
    }
    REQUIRE(back.total_pred() == grid.total_pred());

    // byte-identical emission across invocations with the same inputs
    const auto path2 = (dir / "cells2.tsv").string();
    bsc::write_cell_table(bsc::count_tile(model, big, 336, 2, &truths), path2);
    std::ifstream a(path), b(path2);
    const std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    const std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    REQUIRE(sa == sb);
  }

  SECTION("truth series export") {
    const auto dir = fs::temp_directory_path() / "bsc_grid";
    fs::create_directories(dir);
    bsc::write_truth_series(grid, (dir / "series.tsv").string());
    std::ifstream f(dir / "series.tsv");
    std::string line;
    int rows = 0;
    while (std::getline(f, line)) ++rows;
    REQUIRE(rows == 28);  // header + 27 cells
  }
}

TEST_CASE("non-multiple dimensions are padded by reflection and flagged") {
  bsc::ImageTile odd;
  odd.id = "odd";
  bsc::SceneSpec spec;
  spec.count = 10;
  spec.seed = 4;
  spec.size_px = 500;
  odd.pixels = bsc::generate_scene(spec).pixels;
  odd.pixels = bsc::crop(odd.pixels, 0, 0, 500, 400);
  const auto model = cheap_model();
  const auto grid = bsc::count_tile(model, odd, 336);
  REQUIRE(grid.rows == 2);
  REQUIRE(grid.cols == 2);
  REQUIRE(grid.pad_bottom == 2 * 336 - 500);
  REQUIRE(grid.pad_right == 2 * 336 - 400);
  int padded = 0;
  for (const auto& c : grid.cells) padded += c.padded ? 1 : 0;
  REQUIRE(padded == 3);  // right column and bottom row touch padding
}

TEST_CASE("image smaller than one cell suggests single-image inference") {
  bsc::ImageTile small;
  small.pixels = bsc::Image8(200, 400, 3, 50);
  const auto model = cheap_model();
  try {
    bsc::count_tile(model, small, 336);
    FAIL("expected error");
  } catch (const bsc::Error& e) {
    REQUIRE(std::string(e.what()).find("single-image") != std::string::npos);
  }
}

TEST_CASE("worker count does not change the grid") {
  std::vector<long> truths;
  const auto big = composite_tile(7, truths);
  const auto model = cheap_model();
  const auto g1 = bsc::count_tile(model, big, 336, 1);
  const auto g2 = bsc::count_tile(model, big, 336, 2);
  REQUIRE(g1.cells.size() == g2.cells.size());
  for (std::size_t i = 0; i < g1.cells.size(); ++i) {
    REQUIRE(g1.cells[i].pred == g2.cells[i].pred);
    REQUIRE(g1.cells[i].row == g2.cells[i].row);
  }
}

TEST_CASE("heatmap bins and rendering") {
  const auto bins = bsc::default_bins();
  REQUIRE(bins.size() == 6);
  REQUIRE(bins[0].contains(0));
  REQUIRE_FALSE(bins[0].contains(1));
  REQUIRE(bins[1].label() == "1-10");
  REQUIRE(bins[5].label() == "> 40");
  REQUIRE(bins[5].contains(100000));

  // all-zero grid renders a single bin color
  bsc::CellGrid zero;
  zero.cell_size = 32;
  zero.rows = 2;
  zero.cols = 2;
  zero.image_h = 64;
  zero.image_w = 64;
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 2; ++c) zero.cells.push_back({r, c, c * 32, r * 32, 0, 0.0, std::nullopt, false});
  const bsc::Image8 base(64, 64, 3, 100);
  const auto img = bsc::render_heatmap(zero, base, bins, 0.5);
  REQUIRE(img.w == 64 + 110);  // legend strip appended
  // interior pixels of two different cells share the single bin color
  REQUIRE(img.at(16, 16, 0) == img.at(48, 48, 0));
  REQUIRE(img.at(16, 16, 2) == img.at(48, 48, 2));

  // bins that do not cover a prediction are rejected
  bsc::CellGrid big = zero;
  big.cells[0].pred = 55;
  REQUIRE_NOTHROW(bsc::render_heatmap(big, base, bins, 0.5));
  const auto narrow = bsc::bins_from_edges({0, 10});
  REQUIRE(narrow.back().contains(55));  // unbounded tail always covers
  REQUIRE_THROWS_AS(bsc::render_heatmap(big, base, {{0, 10}}, 0.5), bsc::DomainError);
  REQUIRE_THROWS_AS(bsc::render_heatmap(zero, base, bins, 1.5), bsc::DomainError);
}
