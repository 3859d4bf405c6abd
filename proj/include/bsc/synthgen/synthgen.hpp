#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bsc/dataset/manifest.hpp"
#include "bsc/image.hpp"
#include "bsc/io/netpbm.hpp"
#include "bsc/rng.hpp"

namespace bsc {

enum class Density { Sparse, Medium, Dense };

inline const char* density_name(Density d) {
  switch (d) {
    case Density::Sparse: return "sparse";
    case Density::Medium: return "medium";
    case Density::Dense: return "dense";
  }
  return "?";
}

// Procedural overhead scene: textured buildings over a field/road background
// with parked-vehicle distractors. The emitted count always equals the
// number of placed footprints and the mask is exactly their union, which is
// the oracle property everything downstream leans on.
struct SceneSpec {
  int size_px = 336;
  int count = 0;
  Density density = Density::Medium;
  double adjacency_prob = 0.3;  // chance a building is attached flush to an earlier one
  std::uint64_t seed = 0;
  double meters_per_pixel = kDefaultMetersPerPixel;
};

namespace synth_detail {

struct Footprint {
  std::vector<std::pair<int, int>> cells;  // (y, x)
  bool axis_aligned = true;
  int y0 = 0, x0 = 0, h = 0, w = 0;  // bounding box; exact rect when axis aligned
};

// Buildings cover 15-30 m^2; at 0.3 m/px that is roughly 167-333 px^2.
inline void building_dims(Rng& rng, double mpp, int& h, int& w) {
  const double area_m2 = rng.uniform(15.0, 30.0);
  const double area_px = area_m2 / (mpp * mpp);
  const double aspect = rng.uniform(0.6, 1.7);
  w = std::max(6, static_cast<int>(std::lround(std::sqrt(area_px * aspect))));
  h = std::max(6, static_cast<int>(std::lround(area_px / w)));
}

inline Footprint axis_rect(int y0, int x0, int h, int w, bool lshape, Rng& rng) {
  Footprint f;
  f.axis_aligned = true;
  f.y0 = y0;
  f.x0 = x0;
  f.h = h;
  f.w = w;
  int ny = 0, nx = 0, corner = -1;
  if (lshape && h >= 10 && w >= 10) {
    corner = static_cast<int>(rng.uniform_int(0, 3));
    ny = h / static_cast<int>(rng.uniform_int(2, 3));
    nx = w / static_cast<int>(rng.uniform_int(2, 3));
  }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (corner >= 0) {
        const bool top = corner < 2, left = corner % 2 == 0;
        const bool in_notch = (top ? y < ny : y >= h - ny) && (left ? x < nx : x >= w - nx);
        if (in_notch) continue;
      }
      f.cells.emplace_back(y0 + y, x0 + x);
    }
  return f;
}

inline Footprint diamond_rect(int cy, int cx, int h, int w) {
  // axis rect rotated 45 degrees about its center
  Footprint f;
  f.axis_aligned = false;
  const double half_u = w / 2.0, half_v = h / 2.0;
  const int r = static_cast<int>(std::ceil((w + h) / 2.0 * 0.7071)) + 1;
  f.y0 = cy - r;
  f.x0 = cx - r;
  f.h = f.w = 2 * r + 1;
  constexpr double inv_sqrt2 = 0.7071067811865476;
  for (int y = cy - r; y <= cy + r; ++y)
    for (int x = cx - r; x <= cx + r; ++x) {
      const double u = (x - cx + y - cy) * inv_sqrt2;
      const double v = (x - cx - (y - cy)) * inv_sqrt2;
      if (std::abs(u) <= half_u && std::abs(v) <= half_v) f.cells.emplace_back(y, x);
    }
  return f;
}

struct Canvas {
  int size;
  Image8 rgb;
  Image8 mask;
  std::vector<std::uint8_t> occupied;  // building pixels

  explicit Canvas(int s) : size(s), rgb(s, s, 3), mask(s, s, 1), occupied(static_cast<std::size_t>(s) * s, 0) {}

  bool in_bounds(const Footprint& f) const {
    for (const auto& [y, x] : f.cells)
      if (y < 0 || x < 0 || y >= size || x >= size) return false;
    return true;
  }

  bool collides(const Footprint& f, int gap) const {
    for (const auto& [y, x] : f.cells) {
      const int ylo = std::max(0, y - gap), yhi = std::min(size - 1, y + gap);
      const int xlo = std::max(0, x - gap), xhi = std::min(size - 1, x + gap);
      for (int yy = ylo; yy <= yhi; ++yy)
        for (int xx = xlo; xx <= xhi; ++xx)
          if (occupied[static_cast<std::size_t>(yy) * size + xx]) return true;
    }
    return false;
  }

  void commit(const Footprint& f) {
    for (const auto& [y, x] : f.cells) {
      occupied[static_cast<std::size_t>(y) * size + x] = 1;
      mask.at(y, x) = 255;
    }
  }
};

struct Road {
  bool horizontal;
  int pos, width;
};

inline void paint_background(Canvas& cv, Rng& rng, std::vector<Road>& roads) {
  // field base with mild texture
  const int base_r = static_cast<int>(rng.uniform_int(95, 135));
  const int base_g = static_cast<int>(rng.uniform_int(115, 150));
  const int base_b = static_cast<int>(rng.uniform_int(75, 105));
  for (int y = 0; y < cv.size; ++y)
    for (int x = 0; x < cv.size; ++x) {
      const int n = static_cast<int>(rng.uniform_int(-8, 8));
      cv.rgb.at(y, x, 0) = static_cast<std::uint8_t>(std::clamp(base_r + n, 0, 255));
      cv.rgb.at(y, x, 1) = static_cast<std::uint8_t>(std::clamp(base_g + n, 0, 255));
      cv.rgb.at(y, x, 2) = static_cast<std::uint8_t>(std::clamp(base_b + n, 0, 255));
    }
  // road strips
  const int n_roads = static_cast<int>(rng.uniform_int(0, 3));
  for (int i = 0; i < n_roads; ++i) {
    Road rd;
    rd.horizontal = rng.bernoulli(0.5);
    rd.width = static_cast<int>(rng.uniform_int(8, 14));
    rd.pos = static_cast<int>(rng.uniform_int(0, cv.size - rd.width));
    roads.push_back(rd);
    for (int a = 0; a < cv.size; ++a)
      for (int b = rd.pos; b < rd.pos + rd.width; ++b) {
        const int y = rd.horizontal ? b : a;
        const int x = rd.horizontal ? a : b;
        const int g = 105 + static_cast<int>(rng.uniform_int(-6, 6));
        cv.rgb.at(y, x, 0) = cv.rgb.at(y, x, 1) = cv.rgb.at(y, x, 2) =
            static_cast<std::uint8_t>(std::clamp(g, 0, 255));
      }
  }
}

// Parked-vehicle distractors: small bright boxes on the roads, never in the
// mask. They exist to reproduce the over-counting trap local pooling falls
// into around roads.
inline void paint_vehicles(Canvas& cv, Rng& rng, const std::vector<Road>& roads) {
  for (const auto& rd : roads) {
    const int n = static_cast<int>(rng.uniform_int(0, 14));
    for (int i = 0; i < n; ++i) {
      const int vl = static_cast<int>(rng.uniform_int(6, 9));   // along the road
      const int vw = static_cast<int>(rng.uniform_int(3, 5));   // across
      const int along = static_cast<int>(rng.uniform_int(0, cv.size - vl));
      const int across = rd.pos + static_cast<int>(rng.uniform_int(0, std::max(1, rd.width - vw) - 1));
      const int y0 = rd.horizontal ? across : along;
      const int x0 = rd.horizontal ? along : across;
      const int h = rd.horizontal ? vw : vl, w = rd.horizontal ? vl : vw;
      bool clear = y0 >= 0 && x0 >= 0 && y0 + h <= cv.size && x0 + w <= cv.size;
      for (int y = y0; clear && y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x)
          if (cv.occupied[static_cast<std::size_t>(y) * cv.size + x]) {
            clear = false;
            break;
          }
      if (!clear) continue;
      const int palette = static_cast<int>(rng.uniform_int(0, 2));
      const std::uint8_t col[3][3] = {{230, 230, 235}, {180, 40, 40}, {50, 70, 170}};
      for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x)
          for (int c = 0; c < 3; ++c) cv.rgb.at(y, x, c) = col[palette][c];
    }
  }
}

inline void paint_building(Canvas& cv, Rng& rng, const Footprint& f) {
  // roof palette: grays, terracotta, browns, whites
  const int palette = static_cast<int>(rng.uniform_int(0, 3));
  const int jitter = static_cast<int>(rng.uniform_int(-12, 12));
  const int base[4][3] = {{150, 148, 145}, {178, 96, 70}, {140, 110, 82}, {205, 203, 198}};
  int col[3];
  for (int c = 0; c < 3; ++c) col[c] = std::clamp(base[palette][c] + jitter, 0, 255);
  // ridge split: two roof halves shaded differently, axis chosen at random
  const bool split_y = rng.bernoulli(0.5);
  const int mid = split_y ? f.y0 + f.h / 2 : f.x0 + f.w / 2;
  const int shade = static_cast<int>(rng.uniform_int(8, 20));
  for (const auto& [y, x] : f.cells) {
    const bool bright = (split_y ? y : x) < mid;
    const int n = static_cast<int>(rng.uniform_int(-4, 4));
    for (int c = 0; c < 3; ++c) {
      const int v = col[c] + (bright ? shade : -shade) + n;
      cv.rgb.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    }
  }
  // darker outline where a footprint cell borders a non-cell
  for (const auto& [y, x] : f.cells) {
    bool edge = false;
    for (const auto& [dy, dx] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
      const int yy = y + dy, xx = x + dx;
      if (yy < 0 || xx < 0 || yy >= cv.size || xx >= cv.size ||
          !cv.mask.at(yy, xx)) {
        edge = true;
        break;
      }
    }
    if (edge)
      for (int c = 0; c < 3; ++c)
        cv.rgb.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(col[c] - 55, 0, 255));
  }
}

}  // namespace synth_detail

inline int density_gap(Density d) {
  switch (d) {
    case Density::Sparse: return 2;
    case Density::Medium: return 1;
    case Density::Dense: return 0;
  }
  return 1;
}

inline ImageTile generate_scene(const SceneSpec& spec) {
  using namespace synth_detail;
  require_or<DomainError>(spec.count >= 0, "generate_scene: count must be >= 0");
  require_or<DomainError>(spec.size_px >= 64, "generate_scene: size_px must be >= 64");
  require_or<DomainError>(spec.adjacency_prob >= 0 && spec.adjacency_prob <= 1,
                          "generate_scene: adjacency_prob outside [0,1]");

  Rng rng(derive_seed(spec.seed, 0x5ce7e));
  Canvas cv(spec.size_px);
  std::vector<Road> roads;
  paint_background(cv, rng, roads);

  const int gap = density_gap(spec.density);
  const double adjacency = spec.density == Density::Sparse ? 0.0 : spec.adjacency_prob;
  std::vector<Footprint> placed;
  std::vector<std::size_t> axis_hosts;  // indices of axis-aligned footprints

  for (int i = 0; i < spec.count; ++i) {
    Footprint f;
    bool ok = false;
    // attached placement: share a full wall with an earlier building
    if (!axis_hosts.empty() && rng.bernoulli(adjacency)) {
      for (int attempt = 0; attempt < 24 && !ok; ++attempt) {
        const auto& host = placed[axis_hosts[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(axis_hosts.size()) - 1))]];
        int h = 0, w = 0;
        building_dims(rng, spec.meters_per_pixel, h, w);
        const int side = static_cast<int>(rng.uniform_int(0, 3));
        int y0 = host.y0, x0 = host.x0;
        if (side == 0) {
          x0 = host.x0 + host.w;  // right wall
          h = host.h;
        } else if (side == 1) {
          x0 = host.x0 - w;  // left wall
          h = host.h;
        } else if (side == 2) {
          y0 = host.y0 + host.h;  // below
          w = host.w;
        } else {
          y0 = host.y0 - h;  // above
          w = host.w;
        }
        f = axis_rect(y0, x0, h, w, false, rng);
        if (cv.in_bounds(f) && !cv.collides(f, 0)) ok = true;
      }
    }
    for (int attempt = 0; attempt < 300 && !ok; ++attempt) {
      int h = 0, w = 0;
      building_dims(rng, spec.meters_per_pixel, h, w);
      const bool rot45 = rng.bernoulli(0.25);
      if (rot45) {
        const int r = static_cast<int>(std::ceil((w + h) * 0.3536)) + 1;
        const int cy = static_cast<int>(rng.uniform_int(r, spec.size_px - 1 - r));
        const int cx = static_cast<int>(rng.uniform_int(r, spec.size_px - 1 - r));
        f = diamond_rect(cy, cx, h, w);
      } else {
        const int y0 = static_cast<int>(rng.uniform_int(0, spec.size_px - h));
        const int x0 = static_cast<int>(rng.uniform_int(0, spec.size_px - w));
        f = axis_rect(y0, x0, h, w, rng.bernoulli(0.3), rng);
      }
      if (cv.in_bounds(f) && !cv.collides(f, gap)) ok = true;
    }
    if (!ok)
      throw GenerationError("generate_scene: packing failed after placing " + std::to_string(i) + " of " +
                            std::to_string(spec.count) +
                            " buildings; maximum feasible count for this spec is about " + std::to_string(i));
    cv.commit(f);
    if (f.axis_aligned) axis_hosts.push_back(placed.size());
    placed.push_back(std::move(f));
  }

  paint_vehicles(cv, rng, roads);
  for (const auto& f : placed) paint_building(cv, rng, f);

  ImageTile tile;
  tile.pixels = std::move(cv.rgb);
  tile.mask = std::move(cv.mask);
  tile.count = spec.count;
  tile.meters_per_pixel = spec.meters_per_pixel;
  return tile;
}

struct CorpusSpec {
  int n = 0;
  int count_lo = 0, count_hi = 80;
  std::uint64_t seed = 0;
  int size_px = 336;
  std::optional<Split> force_split;  // default: 80/10/10 by id hash
  std::string id_prefix = "scene";
};

namespace synth_detail {
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}
}  // namespace synth_detail

// Writes n scenes (images/, masks/) plus a manifest under out_dir. Counts
// are uniform over [count_lo, count_hi]; the split is an 80/10/10
// train/val/test assignment by id hash unless forced. Fully determined by
// (spec, seed), byte for byte.
inline Manifest generate_corpus(const CorpusSpec& spec, const std::string& out_dir) {
  require_or<DomainError>(spec.n >= 1, "generate_corpus: n must be >= 1");
  require_or<DomainError>(spec.count_lo >= 0 && spec.count_lo <= spec.count_hi,
                          "generate_corpus: invalid count range");
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "images", ec);
  fs::create_directories(fs::path(out_dir) / "masks", ec);
  require_or<IoError>(fs::is_directory(fs::path(out_dir) / "images"),
                      "generate_corpus: cannot create output directory " + out_dir);

  Manifest m;
  m.base_dir = out_dir;
  Rng draw(derive_seed(spec.seed, 0xc0595));
  for (int i = 0; i < spec.n; ++i) {
    char idbuf[64];
    std::snprintf(idbuf, sizeof(idbuf), "%s_%06d", spec.id_prefix.c_str(), i);
    const std::string id = idbuf;

    SceneSpec ss;
    ss.size_px = spec.size_px;
    ss.count = static_cast<int>(draw.uniform_int(spec.count_lo, spec.count_hi));
    ss.density = static_cast<Density>(draw.uniform_int(0, 2));
    ss.adjacency_prob = ss.density == Density::Dense ? 0.6 : (ss.density == Density::Medium ? 0.3 : 0.0);
    ss.seed = derive_seed(spec.seed, 0x10000u + static_cast<std::uint64_t>(i));
    const ImageTile tile = generate_scene(ss);

    ManifestEntry e;
    e.id = id;
    e.image_path = "images/" + id + ".ppm";
    e.count = tile.count;
    e.mask_path = "masks/" + id + ".pgm";
    if (spec.force_split) {
      e.split = *spec.force_split;
    } else {
      const auto h = synth_detail::fnv1a(id) % 10;
      e.split = h < 8 ? Split::Train : (h == 8 ? Split::Val : Split::Test);
    }
    write_netpbm(tile.pixels, m.resolve(e.image_path));
    write_netpbm(*tile.mask, m.resolve(*e.mask_path));
    m.entries.push_back(std::move(e));
  }
  save_manifest(m, (fs::path(out_dir) / "manifest.tsv").string());
  return m;
}

}  // namespace bsc
