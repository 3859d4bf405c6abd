#pragma once

#include <atomic>
#include <chrono>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

#include "bsc/heads/model.hpp"
#include "bsc/image.hpp"
#include "bsc/image_ops.hpp"

namespace bsc {

struct Cell {
  int row = 0, col = 0;
  int x0 = 0, y0 = 0;
  long pred = 0;  // rounded-clamped
  double pred_raw = 0;
  std::optional<long> truth;
  bool padded = false;  // touches the reflection-padded margin
};

// Non-overlapping tiling of a large image into cell_size x cell_size
// windows, each counted independently.
struct CellGrid {
  int cell_size = 336;
  int rows = 0, cols = 0;
  int image_h = 0, image_w = 0;
  int pad_bottom = 0, pad_right = 0;
  std::vector<Cell> cells;  // ordered by (row, col)
  double seconds = 0;       // wall time of the inference pass

  long total_pred() const {
    long s = 0;
    for (const auto& c : cells) s += c.pred;
    return s;
  }
  std::optional<long> total_truth() const {
    long s = 0;
    for (const auto& c : cells) {
      if (!c.truth) return std::nullopt;
      s += *c.truth;
    }
    return s;
  }
};

namespace detail {
// Pads the right/bottom edges by reflection up to the next multiple;
// cropping instead would drop buildings.
inline Image8 reflect_pad(const Image8& in, int oh, int ow) {
  if (oh == in.h && ow == in.w) return in;
  Image8 out(oh, ow, in.ch);
  for (int y = 0; y < oh; ++y) {
    const int sy = y < in.h ? y : 2 * in.h - 2 - y;
    for (int x = 0; x < ow; ++x) {
      const int sx = x < in.w ? x : 2 * in.w - 2 - x;
      for (int c = 0; c < in.ch; ++c) out.at(y, x, c) = in.at(sy, sx, c);
    }
  }
  return out;
}
}  // namespace detail

// Per-cell counting over a large tile. Cells are inferred independently
// (the model is read-only) and assembled in (row, col) order regardless of
// worker completion order.
template <typename T>
CellGrid count_tile(const CountModel<T>& model, const ImageTile& image, int cell_size = 336,
                    int workers = 1, const std::vector<long>* truths = nullptr) {
  require_or<DomainError>(cell_size > 0, "count_tile: cell size must be positive");
  require_or<Error>(image.pixels.h >= cell_size && image.pixels.w >= cell_size,
                    "count_tile: image is smaller than one cell; run single-image inference instead");
  CellGrid grid;
  grid.cell_size = cell_size;
  grid.image_h = image.pixels.h;
  grid.image_w = image.pixels.w;
  grid.rows = (image.pixels.h + cell_size - 1) / cell_size;
  grid.cols = (image.pixels.w + cell_size - 1) / cell_size;
  grid.pad_bottom = grid.rows * cell_size - image.pixels.h;
  grid.pad_right = grid.cols * cell_size - image.pixels.w;
  const Image8 padded = detail::reflect_pad(image.pixels, grid.rows * cell_size, grid.cols * cell_size);

  grid.cells.resize(static_cast<std::size_t>(grid.rows) * grid.cols);
  if (truths)
    require_or<ShapeError>(truths->size() == grid.cells.size(), "count_tile: truth list size mismatch");

  const auto t0 = std::chrono::steady_clock::now();
  std::atomic<std::size_t> cursor{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1);
      if (i >= grid.cells.size()) return;
      const int r = static_cast<int>(i) / grid.cols;
      const int c = static_cast<int>(i) % grid.cols;
      Cell cell;
      cell.row = r;
      cell.col = c;
      cell.y0 = r * cell_size;
      cell.x0 = c * cell_size;
      cell.padded = (cell.y0 + cell_size > image.pixels.h) || (cell.x0 + cell_size > image.pixels.w);
      ImageTile sub;
      sub.id = image.id + "_r" + std::to_string(r) + "c" + std::to_string(c);
      sub.pixels = crop(padded, cell.y0, cell.x0, cell_size, cell_size);
      sub.meters_per_pixel = image.meters_per_pixel;
      const auto p = model.predict(sub);
      cell.pred = p.rounded;
      cell.pred_raw = p.raw;
      if (truths) cell.truth = (*truths)[i];
      grid.cells[i] = std::move(cell);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < workers; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  grid.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return grid;
}

// Tab-separated cell table:  row col x0 y0 pred [truth]
inline void write_cell_table(const CellGrid& grid, const std::string& path) {
  std::ofstream f(path);
  require_or<IoError>(f.good(), "cannot open for writing: " + path);
  f << "# cell_size\t" << grid.cell_size << "\n";
  f << "# image\t" << grid.image_h << "\t" << grid.image_w << "\n";
  f << "# pad\t" << grid.pad_bottom << "\t" << grid.pad_right << "\n";
  f << "# row\tcol\tx0\ty0\tpred\t[truth]\n";
  for (const auto& c : grid.cells) {
    f << c.row << "\t" << c.col << "\t" << c.x0 << "\t" << c.y0 << "\t" << c.pred;
    if (c.truth) f << "\t" << *c.truth;
    f << "\n";
  }
  require_or<IoError>(f.good(), "short write: " + path);
}

inline CellGrid parse_cell_table(const std::string& path) {
  std::ifstream f(path);
  require_or<IoError>(f.good(), "cannot open cell table: " + path);
  CellGrid grid;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream is(line.substr(1));
      std::string key;
      is >> key;
      if (key == "cell_size") is >> grid.cell_size;
      if (key == "image") is >> grid.image_h >> grid.image_w;
      if (key == "pad") is >> grid.pad_bottom >> grid.pad_right;
      continue;
    }
    std::istringstream is(line);
    Cell c;
    require_or<ParseError>(static_cast<bool>(is >> c.row >> c.col >> c.x0 >> c.y0 >> c.pred),
                           path + ":" + std::to_string(lineno) + ": malformed cell row");
    long truth;
    if (is >> truth) c.truth = truth;
    c.pred_raw = static_cast<double>(c.pred);
    c.padded = (c.y0 + grid.cell_size > grid.image_h) || (c.x0 + grid.cell_size > grid.image_w);
    grid.cells.push_back(c);
    grid.rows = std::max(grid.rows, c.row + 1);
    grid.cols = std::max(grid.cols, c.col + 1);
  }
  return grid;
}

// when truths exist: per-cell (index, truth, pred) series
inline void write_truth_series(const CellGrid& grid, const std::string& path) {
  std::ofstream f(path);
  require_or<IoError>(f.good(), "cannot open for writing: " + path);
  f << "# cell\ttruth\tpred\n";
  int i = 0;
  for (const auto& c : grid.cells) {
    f << i++ << "\t" << (c.truth ? std::to_string(*c.truth) : "-") << "\t" << c.pred << "\n";
  }
  require_or<IoError>(f.good(), "short write: " + path);
}

// ---- heat map rendering ----

struct CountBinRange {
  long lo = 0;
  std::optional<long> hi;  // inclusive; empty = unbounded

  bool contains(long v) const { return v >= lo && (!hi || v <= *hi); }
  std::string label() const {
    if (!hi) return "> " + std::to_string(lo - 1);
    if (*hi == lo) return std::to_string(lo);
    return std::to_string(lo) + "-" + std::to_string(*hi);
  }
};

// Edges {0,10,20,30,40} -> bins {0}, 1-10, 11-20, 21-30, 31-40, >40.
inline std::vector<CountBinRange> bins_from_edges(const std::vector<long>& edges) {
  require_or<DomainError>(!edges.empty(), "bins_from_edges: need at least one edge");
  std::vector<CountBinRange> bins;
  long lo = 0;
  for (const long e : edges) {
    require_or<DomainError>(e >= lo, "bins_from_edges: edges must be non-decreasing");
    bins.push_back({lo, e});
    lo = e + 1;
  }
  bins.push_back({lo, std::nullopt});
  return bins;
}

inline std::vector<CountBinRange> default_bins() { return bins_from_edges({0, 10, 20, 30, 40}); }

namespace detail {

inline std::array<std::uint8_t, 3> bin_color(std::size_t i, std::size_t n) {
  // pale straw -> deep red ramp
  const double t = n <= 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
  return {static_cast<std::uint8_t>(250 - 130 * t), static_cast<std::uint8_t>(240 - 210 * t),
          static_cast<std::uint8_t>(180 - 160 * t)};
}

// 3x5 glyphs for the legend labels
inline const std::uint16_t* glyph_rows(char ch) {
  // each entry: 5 rows of 3 bits, msb = left pixel
  static const std::uint16_t digits[12][5] = {
      {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
      {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 2, 2, 2}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
      {0, 0, 7, 0, 0},                                             // '-'
      {4, 2, 1, 2, 4},                                             // '>'
  };
  if (ch >= '0' && ch <= '9') return digits[ch - '0'];
  if (ch == '-') return digits[10];
  if (ch == '>') return digits[11];
  return nullptr;
}

inline void draw_text(Image8& img, int y, int x, const std::string& text, int scale = 2) {
  for (const char ch : text) {
    const auto* rows = glyph_rows(ch);
    if (rows) {
      for (int ry = 0; ry < 5; ++ry)
        for (int rx = 0; rx < 3; ++rx)
          if (rows[ry] & (4 >> rx))
            for (int sy = 0; sy < scale; ++sy)
              for (int sx = 0; sx < scale; ++sx) {
                const int py = y + ry * scale + sy, px = x + rx * scale + sx;
                if (py >= 0 && py < img.h && px >= 0 && px < img.w)
                  for (int c = 0; c < 3; ++c) img.at(py, px, c) = 20;
              }
    }
    x += 4 * scale;  // glyph + spacing (space advances too)
  }
}

}  // namespace detail

// Cell overlay at the given opacity plus a right-hand legend strip; the
// source image region keeps its original size.
inline Image8 render_heatmap(const CellGrid& grid, const Image8& base,
                             const std::vector<CountBinRange>& bins, double opacity = 0.45) {
  require_or<DomainError>(opacity >= 0 && opacity <= 1, "render_heatmap: opacity outside [0,1]");
  require_or<ShapeError>(base.ch == 3, "render_heatmap: RGB base image required");
  for (const auto& c : grid.cells) {
    bool covered = false;
    for (const auto& b : bins) covered = covered || b.contains(c.pred);
    require_or<DomainError>(covered, "render_heatmap: bins do not cover predicted count " +
                                         std::to_string(c.pred));
  }
  const int legend_w = 110;
  Image8 out(std::max(base.h, static_cast<int>(bins.size()) * 26 + 10), base.w + legend_w, 3, 245);
  for (int y = 0; y < base.h; ++y)
    for (int x = 0; x < base.w; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = base.at(y, x, c);

  for (const auto& cell : grid.cells) {
    std::size_t bi = 0;
    for (std::size_t i = 0; i < bins.size(); ++i)
      if (bins[i].contains(cell.pred)) {
        bi = i;
        break;
      }
    const auto col = detail::bin_color(bi, bins.size());
    for (int y = cell.y0; y < std::min(cell.y0 + grid.cell_size, base.h); ++y)
      for (int x = cell.x0; x < std::min(cell.x0 + grid.cell_size, base.w); ++x)
        for (int c = 0; c < 3; ++c)
          out.at(y, x, c) = static_cast<std::uint8_t>(std::lround((1 - opacity) * out.at(y, x, c) +
                                                                  opacity * col[static_cast<std::size_t>(c)]));
    // cell frame
    for (int x = cell.x0; x < std::min(cell.x0 + grid.cell_size, base.w); ++x) {
      out.at(cell.y0, x, 0) = out.at(cell.y0, x, 1) = out.at(cell.y0, x, 2) = 70;
    }
    for (int y = cell.y0; y < std::min(cell.y0 + grid.cell_size, base.h); ++y) {
      out.at(y, cell.x0, 0) = out.at(y, cell.x0, 1) = out.at(y, cell.x0, 2) = 70;
    }
    detail::draw_text(out, cell.y0 + 4, cell.x0 + 4, std::to_string(cell.pred));
  }

  // legend: swatch + range label per bin
  int ly = 8;
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const auto col = detail::bin_color(i, bins.size());
    for (int y = ly; y < ly + 16; ++y)
      for (int x = base.w + 8; x < base.w + 28; ++x)
        for (int c = 0; c < 3; ++c) out.at(y, x, c) = col[static_cast<std::size_t>(c)];
    detail::draw_text(out, ly + 3, base.w + 34, bins[i].label());
    ly += 26;
  }
  return out;
}

}  // namespace bsc
