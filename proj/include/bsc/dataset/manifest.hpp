#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bsc/common.hpp"
#include "bsc/image.hpp"
#include "bsc/io/netpbm.hpp"

namespace bsc {

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

inline std::optional<Split> parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  return std::nullopt;
}

struct ManifestEntry {
  std::string id;
  std::string image_path;  // as written; resolved against the manifest directory
  int count = 0;
  Split split = Split::Train;
  std::optional<std::string> mask_path;
  std::optional<GeoBounds> geo;
};

// Line-oriented dataset manifest. One tab-separated record per line:
//   id  image_path  count  split  [mask_path]  [lat_min,lat_max,lon_min,lon_max]
// '#' starts a comment line.
struct Manifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // directory the manifest was loaded from

  std::string resolve(const std::string& rel) const {
    std::filesystem::path p(rel);
    if (p.is_absolute() || base_dir.empty()) return p.string();
    return (base_dir / p).string();
  }

  std::vector<ManifestEntry> split_entries(Split s) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
      if (e.split == s) out.push_back(e);
    return out;
  }
};

namespace detail {

inline std::optional<GeoBounds> try_parse_geo(const std::string& field) {
  GeoBounds g;
  char extra = 0;
  const int n = std::sscanf(field.c_str(), "%lf,%lf,%lf,%lf%c", &g.lat_min, &g.lat_max, &g.lon_min, &g.lon_max, &extra);
  if (n == 4) return g;
  return std::nullopt;
}

inline std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : line) {
    if (ch == '\t') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

// Parses and validates a manifest. `check_files` additionally requires every
// image (and mask) path to resolve to a readable file.
inline Manifest load_manifest(const std::string& path, bool check_files = true) {
  std::ifstream f(path);
  require_or<IoError>(f.good(), "cannot open manifest: " + path);
  Manifest m;
  m.base_dir = std::filesystem::path(path).parent_path();

  std::set<std::string> seen_ids;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto fields = detail::split_tabs(line);
    const std::string where = path + ":" + std::to_string(lineno);
    require_or<ParseError>(fields.size() >= 4 && fields.size() <= 6,
                           where + ": expected 4-6 tab-separated fields, got " + std::to_string(fields.size()));
    ManifestEntry e;
    e.id = fields[0];
    e.image_path = fields[1];
    require_or<ParseError>(!e.id.empty() && !e.image_path.empty(), where + ": empty id or image_path");

    try {
      std::size_t pos = 0;
      const int c = std::stoi(fields[2], &pos);
      require_or<ParseError>(pos == fields[2].size(), where + ": count is not an integer: '" + fields[2] + "'");
      require_or<ParseError>(c >= 0, where + ": count must be non-negative, got " + fields[2]);
      e.count = c;
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError(where + ": count is not an integer: '" + fields[2] + "'");
    }

    const auto sp = parse_split(fields[3]);
    require_or<ParseError>(sp.has_value(), where + ": unknown split '" + fields[3] + "'");
    e.split = *sp;

    // Optional trailing fields: a mask path, geo bounds, or both (in that
    // order). Geo bounds are recognized by their lat,lat,lon,lon shape.
    for (std::size_t i = 4; i < fields.size(); ++i) {
      if (fields[i].empty()) continue;
      if (auto g = detail::try_parse_geo(fields[i])) {
        require_or<ParseError>(!e.geo, where + ": duplicate geo bounds");
        e.geo = *g;
      } else {
        require_or<ParseError>(!e.mask_path, where + ": unexpected extra field '" + fields[i] + "'");
        e.mask_path = fields[i];
      }
    }

    require_or<ParseError>(seen_ids.insert(e.id).second, where + ": duplicate id '" + e.id + "'");
    if (check_files) {
      require_or<Error>(std::filesystem::exists(m.resolve(e.image_path)),
                        where + ": image path not readable: " + m.resolve(e.image_path));
      if (e.mask_path)
        require_or<Error>(std::filesystem::exists(m.resolve(*e.mask_path)),
                          where + ": mask path not readable: " + m.resolve(*e.mask_path));
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

inline std::string format_geo(const GeoBounds& g) {
  std::ostringstream os;
  os.precision(10);
  os << g.lat_min << "," << g.lat_max << "," << g.lon_min << "," << g.lon_max;
  return os.str();
}

inline void save_manifest(const Manifest& m, const std::string& path) {
  std::ofstream f(path);
  require_or<IoError>(f.good(), "cannot open for writing: " + path);
  f << "# id\timage_path\tcount\tsplit\t[mask_path]\t[lat_min,lat_max,lon_min,lon_max]\n";
  for (const auto& e : m.entries) {
    f << e.id << "\t" << e.image_path << "\t" << e.count << "\t" << split_name(e.split);
    if (e.mask_path) f << "\t" << *e.mask_path;
    if (e.geo) f << "\t" << format_geo(*e.geo);
    f << "\n";
  }
  require_or<IoError>(f.good(), "short write: " + path);
}

// Materializes one manifest entry into an ImageTile.
inline ImageTile load_tile(const Manifest& m, const ManifestEntry& e) {
  ImageTile t;
  t.id = e.id;
  t.pixels = read_image(m.resolve(e.image_path));
  t.count = e.count;
  t.geo = e.geo;
  if (e.mask_path) {
    Image8 mask = read_image(m.resolve(*e.mask_path));
    require_or<ShapeError>(mask.ch == 1, e.id + ": mask must be single-channel");
    t.mask = std::move(mask);
  }
  t.validate();
  return t;
}

}  // namespace bsc
