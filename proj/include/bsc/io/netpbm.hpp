#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "bsc/common.hpp"
#include "bsc/image.hpp"

#ifdef BSC_WITH_OPENCV
#include <opencv2/imgcodecs.hpp>
#endif

namespace bsc {

// Binary netpbm (P5 gray / P6 RGB) is the native raster format: byte-exact,
// dependency-free, and deterministic to emit.

inline void write_netpbm(const Image8& img, const std::string& path) {
  require_or<ShapeError>(img.ch == 1 || img.ch == 3, "write_netpbm: 1 or 3 channels required");
  std::ofstream f(path, std::ios::binary);
  require_or<IoError>(f.good(), "cannot open for writing: " + path);
  f << (img.ch == 3 ? "P6" : "P5") << "\n" << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.v.data()), static_cast<std::streamsize>(img.v.size()));
  require_or<IoError>(f.good(), "short write: " + path);
}

namespace detail {
inline int pnm_token(std::istream& f) {
  // skips whitespace and '#' comments
  int c = f.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = f.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = f.get();
  }
  require_or<ParseError>(c != EOF, "netpbm: truncated header");
  int val = 0;
  while (c != EOF && std::isdigit(c)) {
    val = val * 10 + (c - '0');
    c = f.get();
  }
  return val;
}
}  // namespace detail

inline Image8 read_netpbm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require_or<IoError>(f.good(), "cannot open: " + path);
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  require_or<ParseError>(m0 == 'P' && (m1 == '5' || m1 == '6'), path + ": not a binary netpbm file");
  const int ch = (m1 == '6') ? 3 : 1;
  const int w = detail::pnm_token(f);
  const int h = detail::pnm_token(f);
  const int maxval = detail::pnm_token(f);
  require_or<ParseError>(w > 0 && h > 0 && maxval == 255, path + ": unsupported netpbm geometry");
  Image8 img(h, w, ch);
  f.read(reinterpret_cast<char*>(img.v.data()), static_cast<std::streamsize>(img.v.size()));
  require_or<ParseError>(f.gcount() == static_cast<std::streamsize>(img.v.size()), path + ": truncated pixel data");
  return img;
}

inline bool has_netpbm_ext(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  return ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

// Reads any supported raster. Netpbm natively; other formats via OpenCV when built in.
inline Image8 read_image(const std::string& path) {
  require_or<IoError>(std::filesystem::exists(path), "no such file: " + path);
  if (has_netpbm_ext(path)) return read_netpbm(path);
#ifdef BSC_WITH_OPENCV
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  require_or<IoError>(!m.empty(), "cannot decode: " + path);
  Image8 img(m.rows, m.cols, m.channels() >= 3 ? 3 : 1);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      if (m.channels() == 1) {
        img.at(y, x, 0) = m.at<std::uint8_t>(y, x);
      } else {
        const auto px = m.at<cv::Vec3b>(y, x);  // BGR
        img.at(y, x, 0) = px[2];
        img.at(y, x, 1) = px[1];
        img.at(y, x, 2) = px[0];
      }
    }
  return img;
#else
  throw IoError("unsupported image format (built without OpenCV): " + path);
#endif
}

inline void write_image(const Image8& img, const std::string& path) {
  if (has_netpbm_ext(path)) {
    write_netpbm(img, path);
    return;
  }
#ifdef BSC_WITH_OPENCV
  cv::Mat m(img.h, img.w, img.ch == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      if (img.ch == 1) {
        m.at<std::uint8_t>(y, x) = img.at(y, x, 0);
      } else {
        m.at<cv::Vec3b>(y, x) = cv::Vec3b(img.at(y, x, 2), img.at(y, x, 1), img.at(y, x, 0));
      }
    }
  require_or<IoError>(cv::imwrite(path, m), "cannot encode: " + path);
#else
  throw IoError("unsupported output format (built without OpenCV): " + path);
#endif
}

// Lossless float raster: ascii header line "BSCF32 h w\n" + row-major LE f32.
inline void write_float_map(const Mat<float>& m, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  require_or<IoError>(f.good(), "cannot open for writing: " + path);
  f << "BSCF32 " << m.h << " " << m.w << "\n";
  f.write(reinterpret_cast<const char*>(m.v.data()), static_cast<std::streamsize>(m.v.size() * sizeof(float)));
  require_or<IoError>(f.good(), "short write: " + path);
}

inline Mat<float> read_float_map(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require_or<IoError>(f.good(), "cannot open: " + path);
  std::string magic;
  int h = 0, w = 0;
  f >> magic >> h >> w;
  require_or<ParseError>(magic == "BSCF32" && h > 0 && w > 0, path + ": not a BSCF32 map");
  f.get();  // newline
  Mat<float> m(h, w);
  f.read(reinterpret_cast<char*>(m.v.data()), static_cast<std::streamsize>(m.v.size() * sizeof(float)));
  require_or<ParseError>(f.gcount() == static_cast<std::streamsize>(m.v.size() * sizeof(float)),
                         path + ": truncated float data");
  return m;
}

}  // namespace bsc
