#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "echoview/common.hpp"
#include "echoview/views.hpp"

namespace echoview {

struct RasterU8 {
  int h = 0, w = 0;
  int maxval = 255;
  std::vector<uint8_t> pix;  // row-major
};

// Axis-aligned rectangle in pixel coordinates: x = column, y = row.
struct MaskRect {
  int x = 0, y = 0, w = 0, h = 0;
};

inline RasterU8 read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), Errc::io_missing, "cannot open " + path.string());
  auto next_token = [&]() -> std::string {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) break;
        continue;
      }
      tok.push_back(char(c));
    }
    return tok;
  };
  require(next_token() == "P5", Errc::bad_format, "not a binary PGM (P5): " + path.string());
  RasterU8 r;
  try {
    r.w = std::stoi(next_token());
    r.h = std::stoi(next_token());
    r.maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    fail(Errc::bad_format, "unparsable PGM header: " + path.string());
  }
  require(r.w >= 1 && r.h >= 1 && r.maxval >= 1 && r.maxval <= 255, Errc::bad_format,
          "unsupported PGM dimensions/maxval in " + path.string());
  r.pix.resize(size_t(r.w) * size_t(r.h));
  in.read(reinterpret_cast<char*>(r.pix.data()), std::streamsize(r.pix.size()));
  require(in.gcount() == std::streamsize(r.pix.size()), Errc::bad_format,
          "truncated PGM payload: " + path.string());
  return r;
}

inline void write_pgm(const std::filesystem::path& path, const RasterU8& r) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), Errc::io_error, "cannot write " + path.string());
  out << "P5\n" << r.w << " " << r.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(r.pix.data()), std::streamsize(r.pix.size()));
  require(bool(out), Errc::io_error, "short write: " + path.string());
}

inline RasterU8 read_raw8(const std::filesystem::path& path, int h, int w) {
  require(h >= 1 && w >= 1, Errc::bad_argument, "raw raster needs positive dimensions");
  std::ifstream in(path, std::ios::binary);
  require(bool(in), Errc::io_missing, "cannot open " + path.string());
  RasterU8 r;
  r.h = h;
  r.w = w;
  r.pix.resize(size_t(h) * size_t(w));
  in.read(reinterpret_cast<char*>(r.pix.data()), std::streamsize(r.pix.size()));
  require(in.gcount() == std::streamsize(r.pix.size()), Errc::bad_format,
          "raw raster shorter than " + std::to_string(h) + "x" + std::to_string(w));
  return r;
}

inline RasterU8 quantize_to_pgm(const float* img, int h, int w) {
  RasterU8 r;
  r.h = h;
  r.w = w;
  r.pix.resize(size_t(h) * size_t(w));
  for (size_t i = 0; i < r.pix.size(); ++i) {
    float v = std::clamp(img[i], 0.0f, 1.0f);
    r.pix[i] = uint8_t(std::lround(v * 255.0f));
  }
  return r;
}

inline void write_f32(const std::filesystem::path& path, const float* data, size_t n) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(bool(out), Errc::io_error, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data), std::streamsize(n * 4));
  require(bool(out), Errc::io_error, "short write: " + path.string());
}

inline std::vector<float> read_f32(const std::filesystem::path& path, size_t n) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), Errc::io_missing, "cannot open " + path.string());
  std::vector<float> v(n);
  in.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * 4));
  require(in.gcount() == std::streamsize(n * 4), Errc::bad_format,
          "float sidecar shorter than " + std::to_string(n) + " values: " + path.string());
  return v;
}

namespace detail {

// Exact box integral: each destination pixel averages the source area it
// covers, fractional borders included.
inline void resample_area(const std::vector<double>& src, int sh, int sw, float* dst, int dh,
                          int dw) {
  double ry = double(sh) / dh, rx = double(sw) / dw;
  for (int i = 0; i < dh; ++i) {
    double y0 = i * ry, y1 = (i + 1) * ry;
    for (int j = 0; j < dw; ++j) {
      double x0 = j * rx, x1 = (j + 1) * rx;
      double acc = 0;
      for (int sy = int(std::floor(y0)); sy < int(std::ceil(y1)); ++sy) {
        double wy = std::min(y1, double(sy + 1)) - std::max(y0, double(sy));
        if (wy <= 0) continue;
        for (int sx = int(std::floor(x0)); sx < int(std::ceil(x1)); ++sx) {
          double wx = std::min(x1, double(sx + 1)) - std::max(x0, double(sx));
          if (wx <= 0) continue;
          acc += wy * wx * src[size_t(sy) * size_t(sw) + size_t(sx)];
        }
      }
      dst[i * dw + j] = float(acc / (ry * rx));
    }
  }
}

inline void resample_bilinear(const std::vector<double>& src, int sh, int sw, float* dst, int dh,
                              int dw) {
  for (int i = 0; i < dh; ++i) {
    double sy = (i + 0.5) * double(sh) / dh - 0.5;
    sy = std::clamp(sy, 0.0, double(sh - 1));
    int y0 = int(std::floor(sy));
    int y1 = std::min(y0 + 1, sh - 1);
    double fy = sy - y0;
    for (int j = 0; j < dw; ++j) {
      double sx = (j + 0.5) * double(sw) / dw - 0.5;
      sx = std::clamp(sx, 0.0, double(sw - 1));
      int x0 = int(std::floor(sx));
      int x1 = std::min(x0 + 1, sw - 1);
      double fx = sx - x0;
      double v = (1 - fy) * ((1 - fx) * src[size_t(y0) * size_t(sw) + size_t(x0)] +
                             fx * src[size_t(y0) * size_t(sw) + size_t(x1)]) +
                 fy * ((1 - fx) * src[size_t(y1) * size_t(sw) + size_t(x0)] +
                       fx * src[size_t(y1) * size_t(sw) + size_t(x1)]);
      dst[i * dw + j] = float(v);
    }
  }
}

}  // namespace detail

// Anonymization masking (pixels zeroed first), then standardization to a
// 60x80 [0,1] frame: area averaging when shrinking, bilinear otherwise.
inline std::vector<float> ingest_frame(const RasterU8& raster,
                                       const std::vector<MaskRect>& mask = {}) {
  require(raster.h >= 1 && raster.w >= 1 && !raster.pix.empty(), Errc::bad_argument,
          "empty raster");
  for (const auto& r : mask)
    require(r.x >= 0 && r.y >= 0 && r.w >= 0 && r.h >= 0 && r.x + r.w <= raster.w &&
                r.y + r.h <= raster.h,
            Errc::bad_argument,
            "mask rectangle (" + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
                std::to_string(r.w) + "," + std::to_string(r.h) + ") outside raster " +
                std::to_string(raster.w) + "x" + std::to_string(raster.h));

  std::vector<double> scaled(raster.pix.size());
  for (size_t i = 0; i < raster.pix.size(); ++i)
    scaled[i] = double(raster.pix[i]) / double(raster.maxval);
  for (const auto& r : mask)
    for (int y = r.y; y < r.y + r.h; ++y)
      for (int x = r.x; x < r.x + r.w; ++x) scaled[size_t(y) * size_t(raster.w) + size_t(x)] = 0.0;

  std::vector<float> out(kImagePixels);
  if (raster.h >= kImageH && raster.w >= kImageW)
    detail::resample_area(scaled, raster.h, raster.w, out.data(), kImageH, kImageW);
  else
    detail::resample_bilinear(scaled, raster.h, raster.w, out.data(), kImageH, kImageW);
  return out;
}

}  // namespace echoview
