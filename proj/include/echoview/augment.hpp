#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "echoview/common.hpp"
#include "echoview/rng.hpp"
#include "echoview/views.hpp"

namespace echoview {

// Run-time augmentation bounds. Defaults are the training protocol's:
// rotations up to 10 degrees, shifts up to a tenth of each side, zooms up
// to 0.08, shears up to 0.03, and independent horizontal/vertical flips.
struct AugmentParams {
  float max_rotation_deg = 10.0f;
  float max_shift_fraction = 0.1f;
  float max_zoom = 0.08f;
  float max_shear = 0.03f;
  bool allow_flips = true;

  void validate() const {
    require(max_rotation_deg >= 0 && max_shift_fraction >= 0 && max_zoom >= 0 && max_shear >= 0,
            Errc::bad_argument, "augmentation bounds must be non-negative");
  }
};

struct SampledTransform {
  double rotation_deg = 0;
  double shift_y = 0, shift_x = 0;  // pixels
  double zoom = 1;                  // scale factor
  double shear = 0;
  bool flip_h = false, flip_v = false;
};

inline SampledTransform sample_transform(const AugmentParams& p, Rng& rng) {
  p.validate();
  SampledTransform t;
  t.rotation_deg = rng.uniform(-p.max_rotation_deg, p.max_rotation_deg);
  t.shift_y = rng.uniform(-p.max_shift_fraction, p.max_shift_fraction) * kImageH;
  t.shift_x = rng.uniform(-p.max_shift_fraction, p.max_shift_fraction) * kImageW;
  t.zoom = rng.uniform(1.0 - p.max_zoom, 1.0 + p.max_zoom);
  t.shear = rng.uniform(-p.max_shear, p.max_shear);
  if (p.allow_flips) {
    t.flip_h = rng.coin();
    t.flip_v = rng.coin();
  }
  return t;
}

// One affine warp about the image center (flip . zoom . shear . rotation,
// then translation), bilinear sampling, zero fill outside the frame.
inline std::vector<float> warp_image(const std::vector<float>& img, const SampledTransform& t) {
  require(img.size() == size_t(kImagePixels), Errc::shape_mismatch,
          "warp_image expects a 60x80 image");
  const double cy = (kImageH - 1) / 2.0, cx = (kImageW - 1) / 2.0;
  const double rad = t.rotation_deg * 3.14159265358979323846 / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);

  // forward = F * Z * Sh * R acting on centered (y, x)
  std::array<double, 4> rot = {c, -s, s, c};
  std::array<double, 4> sh = {1, 0, t.shear, 1};
  std::array<double, 4> fz = {(t.flip_v ? -1.0 : 1.0) * t.zoom, 0, 0,
                              (t.flip_h ? -1.0 : 1.0) * t.zoom};
  auto mul = [](const std::array<double, 4>& a, const std::array<double, 4>& b) {
    return std::array<double, 4>{a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
                                 a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3]};
  };
  std::array<double, 4> fwd = mul(fz, mul(sh, rot));
  double det = fwd[0] * fwd[3] - fwd[1] * fwd[2];
  std::array<double, 4> inv = {fwd[3] / det, -fwd[1] / det, -fwd[2] / det, fwd[0] / det};

  std::vector<float> out(size_t(kImagePixels), 0.0f);
  auto snap = [](double v) {
    double r = std::round(v);
    return std::abs(v - r) < 1e-9 ? r : v;
  };
  for (int y = 0; y < kImageH; ++y) {
    for (int x = 0; x < kImageW; ++x) {
      double dy = double(y) - cy - t.shift_y;
      double dx = double(x) - cx - t.shift_x;
      double sy = snap(inv[0] * dy + inv[1] * dx + cy);
      double sx = snap(inv[2] * dy + inv[3] * dx + cx);
      if (sy < -0.5 || sy > kImageH - 0.5 || sx < -0.5 || sx > kImageW - 0.5) continue;
      int y0 = int(std::floor(sy)), x0 = int(std::floor(sx));
      double fy = sy - y0, fx = sx - x0;
      double v = 0;
      for (int ddy = 0; ddy < 2; ++ddy)
        for (int ddx = 0; ddx < 2; ++ddx) {
          int yy = y0 + ddy, xx = x0 + ddx;
          if (yy < 0 || yy >= kImageH || xx < 0 || xx >= kImageW) continue;
          double w = (ddy ? fy : 1 - fy) * (ddx ? fx : 1 - fx);
          v += w * double(img[size_t(yy) * kImageW + size_t(xx)]);
        }
      out[size_t(y) * kImageW + size_t(x)] = float(v);
    }
  }
  return out;
}

inline std::vector<float> augment(const std::vector<float>& img, const AugmentParams& p,
                                  Rng& rng) {
  return warp_image(img, sample_transform(p, rng));
}

}  // namespace echoview
