#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "echoview/augment.hpp"
#include "echoview/dataset.hpp"
#include "echoview/rng.hpp"

namespace echoview {

// Synthetic phantom views standing in for the clinical dataset. Each class
// is a distinct parametric pattern: b-mode views share a faint,
// class-independent sector fan plus class-defining chamber/vessel geometry;
// pw/cw/mmode are spectral or motion traces. Every class keeps its defining
// structure inside the published signal region (25% of the frame) at any
// jitter up to the default, which the occlusion and saliency experiments
// rely on. Confusable pairs are built from shared bases: a5c = a4c plus one
// component, a3c = a2c plus one component.
struct PhantomConfig {
  uint64_t seed = 1;
  int classes = kNumViews;
  int frames_per_clip = 10;
  int clips_per_study = 1;
  int studies = 20;
  float jitter = 1.0f;  // scales every study/frame perturbation; 0 = pure templates
};

struct Region {
  std::vector<MaskRect> rects;

  bool contains(int y, int x) const {
    for (const auto& r : rects)
      if (x >= r.x && x < r.x + r.w && y >= r.y && y < r.y + r.h) return true;
    return false;
  }

  int area() const {  // rects are kept disjoint
    int a = 0;
    for (const auto& r : rects) a += r.w * r.h;
    return a;
  }
};

// Class-defining structure stays inside this rectangle for every view at
// any jitter level <= 1: rows 16..45, cols 20..59, 1200 of 4800 pixels.
inline Region signal_region(ViewLabel) { return Region{{MaskRect{20, 16, 40, 30}}}; }

// The single component a5c adds on top of the shared a4c base, and a3c on
// top of the a2c base.
inline Region a5c_extra_region() { return Region{{MaskRect{32, 25, 15, 12}}}; }
inline Region a3c_extra_region() { return Region{{MaskRect{39, 24, 16, 14}}}; }

namespace detail {

class Canvas {
 public:
  Canvas() : pix(size_t(kImagePixels), 0.0f) {}

  std::vector<float> pix;

  void blend(int y, int x, double v) {
    if (y < 0 || y >= kImageH || x < 0 || x >= kImageW) return;
    float& p = pix[size_t(y) * kImageW + size_t(x)];
    p = std::max(p, float(std::clamp(v, 0.0, 1.0)));
  }

  // Soft-edged elliptical rim, optionally with a dim interior fill.
  void ellipse(double cy, double cx, double ry, double rx, double angle_deg, double rim_value,
               double rim_thickness = 1.6, double fill_value = 0.0) {
    double rad = angle_deg * kPi / 180.0;
    double c = std::cos(rad), s = std::sin(rad);
    double pad = std::max(ry, rx) + rim_thickness + 2;
    double scale = std::min(ry, rx);
    for (int y = int(cy - pad); y <= int(cy + pad); ++y) {
      for (int x = int(cx - pad); x <= int(cx + pad); ++x) {
        double dy = y - cy, dx = x - cx;
        double u = (c * dy + s * dx) / ry;
        double v = (-s * dy + c * dx) / rx;
        double d = std::sqrt(u * u + v * v);
        if (fill_value > 0 && d < 1.0) blend(y, x, fill_value);
        double edge = std::abs(d - 1.0) * scale;  // approx distance in pixels
        double a = 1.0 - edge / rim_thickness;
        if (a > 0) blend(y, x, rim_value * std::min(1.0, 2.0 * a));
      }
    }
  }

  void disc(double cy, double cx, double r, double value) {
    for (int y = int(cy - r - 2); y <= int(cy + r + 2); ++y)
      for (int x = int(cx - r - 2); x <= int(cx + r + 2); ++x) {
        double d = std::hypot(y - cy, x - cx);
        double a = r + 0.5 - d;
        if (a > 0) blend(y, x, value * std::min(1.0, a));
      }
  }

  void line(double y0, double x0, double y1, double x1, double value, double thickness = 1.4) {
    double miny = std::min(y0, y1) - thickness - 1, maxy = std::max(y0, y1) + thickness + 1;
    double minx = std::min(x0, x1) - thickness - 1, maxx = std::max(x0, x1) + thickness + 1;
    double vy = y1 - y0, vx = x1 - x0;
    double len2 = vy * vy + vx * vx;
    for (int y = int(miny); y <= int(maxy); ++y)
      for (int x = int(minx); x <= int(maxx); ++x) {
        double t = len2 > 0 ? ((y - y0) * vy + (x - x0) * vx) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        double d = std::hypot(y - (y0 + t * vy), x - (x0 + t * vx));
        double a = thickness / 2 + 0.5 - d;
        if (a > 0) blend(y, x, value * std::min(1.0, a));
      }
  }

  // angles in degrees on (x right, y down), 0 = +x, 90 = +y
  void arc(double cy, double cx, double r, double a0, double a1, double value,
           double thickness = 1.4) {
    int steps = std::max(8, int((a1 - a0) * kPi / 180.0 * r * 2));
    for (int i = 0; i <= steps; ++i) {
      double a = (a0 + (a1 - a0) * i / steps) * kPi / 180.0;
      disc(cy + r * std::sin(a), cx + r * std::cos(a), thickness / 2, value);
    }
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
};

inline void draw_sector(Canvas& cv) {
  // shared acquisition fan, identical for every b-mode class
  cv.line(2, 40, 54, 6, 0.13, 1.2);
  cv.line(2, 40, 54, 74, 0.13, 1.2);
  cv.arc(2, 40, 52, 56.8, 123.2, 0.13, 1.2);
}

inline void draw_chambers4(Canvas& cv, double q) {
  // the a4c base; a5c adds one component on top (see render_template)
  cv.ellipse(27, 35, 3.6 * q, 3.1, 0, 0.85, 1.6, 0.10);
  cv.ellipse(27, 44, 3.6 * q, 2.8, 0, 0.80, 1.6, 0.10);
  cv.ellipse(35, 35, 3.2, 2.9 * q, 0, 0.80, 1.6, 0.10);
  cv.ellipse(35, 44, 3.2, 2.6, 0, 0.75, 1.6, 0.10);
  cv.line(31, 29, 31, 50, 0.70, 1.2);
  cv.line(24, 39.5, 38.5, 39.5, 0.70, 1.2);
}

inline void draw_chambers2(Canvas& cv, double q) {
  // the a2c base; a3c adds the outflow component
  cv.ellipse(27, 40, 3.8 * q, 4.4, 0, 0.85, 1.6, 0.10);
  cv.ellipse(35.5, 40, 3.2, 3.6 * q, 0, 0.80, 1.6, 0.10);
  cv.line(30.5, 32, 30.5, 47, 0.70, 1.2);
}

}  // namespace detail

// Canonical pattern for one view at a given cardiac/trace phase. Phase 0
// with pulse amplitude 0 is the frozen template. with_structures=false
// renders only the class-independent background (the sector fan), which is
// what the signal-region containment property compares against.
inline std::vector<float> render_template(ViewLabel v, double phase = 0.0, double pulse_amp = 0.0,
                                          bool with_structures = true) {
  detail::Canvas cv;
  const double tau = 2.0 * 3.14159265358979323846;
  const double q = 1.0 + pulse_amp * std::sin(tau * phase);
  if (is_video_view(v)) detail::draw_sector(cv);
  if (!with_structures) return cv.pix;

  switch (v) {
    case ViewLabel::plax:
      cv.ellipse(30, 38, 5 * q, 10, -12, 0.85, 1.7, 0.10);
      cv.line(25, 31, 27, 48, 0.75, 1.3);
      cv.ellipse(32, 49, 3, 2.8 * q, 0, 0.75, 1.5, 0.10);
      break;
    case ViewLabel::rv_inflow:
      cv.line(24, 33, 37, 28, 0.75, 1.4);
      cv.line(24, 33, 37, 45, 0.75, 1.4);
      cv.ellipse(32, 37, 5 * q, 5, 0, 0.80, 1.6, 0.10);
      break;
    case ViewLabel::sax_basal:
      cv.ellipse(30, 40, 7, 7, 0, 0.85, 1.8, 0.08);
      cv.line(30, 40, 25, 40, 0.75 * q, 1.2);
      cv.line(30, 40, 33, 35.5, 0.75, 1.2);
      cv.line(30, 40, 33, 44.5, 0.75, 1.2);
      break;
    case ViewLabel::sax_mid:
      cv.ellipse(30, 40, 7, 7, 0, 0.85, 1.8, 0.08);
      cv.disc(33, 37, 2 * q, 0.85);
      cv.disc(33, 43, 2 * q, 0.85);
      break;
    case ViewLabel::a4c:
      detail::draw_chambers4(cv, q);
      break;
    case ViewLabel::a5c:
      detail::draw_chambers4(cv, q);
      cv.ellipse(31, 39.5, 2.5, 3.5, 0, 0.90, 1.4, 0.55);
      break;
    case ViewLabel::a2c:
      detail::draw_chambers2(cv, q);
      break;
    case ViewLabel::a3c:
      detail::draw_chambers2(cv, q);
      cv.ellipse(31, 47, 2.2, 5, -35, 0.85, 1.4, 0.30);
      break;
    case ViewLabel::sub4c:
      cv.line(23, 28, 29, 28, 0.80, 1.4);
      cv.line(23, 28, 23, 36, 0.80, 1.4);
      cv.line(29, 28, 23, 36, 0.80, 1.4);
      cv.ellipse(28, 38, 3.4 * q, 4.0, 25, 0.85, 1.5, 0.10);
      cv.ellipse(33, 44, 3.2, 3.8 * q, 25, 0.80, 1.5, 0.10);
      cv.ellipse(36, 36, 2.8, 3.2, 25, 0.75, 1.5, 0.10);
      break;
    case ViewLabel::sub_ivc:
      cv.line(29, 28, 29, 48, 0.80, 1.3);
      cv.line(33, 28, 33, 48, 0.80, 1.3);
      cv.disc(31, 50.5, 3 * q, 0.65);
      break;
    case ViewLabel::sub_ao:
      cv.line(23, 37, 38, 39.5, 0.80, 1.3);
      cv.line(23, 42, 38, 44.5, 0.80, 1.3);
      cv.line(27, 34.5, 27, 46, 0.55, 1.1);
      cv.line(33, 35.5, 33, 47, 0.55, 1.1);
      break;
    case ViewLabel::sup_ao:
      cv.arc(33, 40, 9, 180, 360, 0.85, 2.2 * q);
      cv.line(24, 36, 22.5, 35.5, 0.70, 1.1);
      cv.line(23.5, 40, 22, 40, 0.70, 1.1);
      cv.line(24, 44, 22.5, 44.5, 0.70, 1.1);
      break;
    case ViewLabel::pw: {
      cv.line(36, 27, 36, 53, 0.85, 1.2);
      for (int x = 27; x <= 53; ++x) {
        double env = std::max(0.0, std::sin(tau * (double(x) / 13.0 + phase)));
        cv.disc(36 - (8 + 1.5 * q) * env, x, 0.9, 0.80);
      }
      break;
    }
    case ViewLabel::cw: {
      cv.line(25, 27, 25, 53, 0.85, 1.2);
      for (int x = 27; x <= 53; ++x) {
        double env = std::abs(std::sin(tau * (double(x) / 17.0 + phase)));
        double depth = (8 + 1.5 * q) * env;
        for (int d = 1; d <= int(depth); ++d) cv.blend(25 + d, x, 0.45);
        cv.disc(25 + depth, x, 0.9, 0.80);
      }
      break;
    }
    case ViewLabel::mmode: {
      const double amp[2] = {2.0, 2.5};
      const double period[2] = {14.0, 19.0};
      const double base[2] = {27.0, 34.0};
      for (int t = 0; t < 2; ++t)
        for (int x = 27; x <= 53; ++x) {
          double yt =
              base[t] + amp[t] * q * std::sin(tau * (double(x) / period[t] + phase + 0.3 * t));
          cv.disc(yt, x, 0.8, 0.78);
        }
      break;
    }
  }
  return cv.pix;
}

namespace detail {

struct StudyJitter {
  double gain = 1.0, gamma = 1.0, bg = 0.0;
  double ty = 0.0, tx = 0.0, rot = 0.0;
};

inline StudyJitter sample_study_jitter(uint64_t seed, int study, double j) {
  Rng rng = derive_rng(seed, {0xA1u, uint64_t(study)});
  StudyJitter s;
  s.gain = 1.0 + j * rng.uniform(-0.30, 0.15);
  s.gamma = 1.0 + j * rng.uniform(-0.20, 0.30);
  s.bg = j * rng.uniform(0.0, 0.06);
  s.ty = j * rng.uniform(-2.5, 2.5);
  s.tx = j * rng.uniform(-2.5, 2.5);
  s.rot = j * rng.uniform(-3.0, 3.0);
  return s;
}

inline std::vector<float> render_phantom(ViewLabel v, const StudyJitter& sj, double phase,
                                         double pulse_amp, double frame_ty, double frame_tx,
                                         double noise_sigma, uint64_t noise_seed,
                                         bool with_structures = true) {
  std::vector<float> img = render_template(v, phase, pulse_amp, with_structures);
  SampledTransform t;
  t.rotation_deg = sj.rot;
  t.shift_y = sj.ty + frame_ty;
  t.shift_x = sj.tx + frame_tx;
  if (t.rotation_deg != 0 || t.shift_y != 0 || t.shift_x != 0) img = warp_image(img, t);
  Rng noise(noise_seed);
  for (auto& p : img) {
    double val = sj.gain * std::pow(double(p), sj.gamma) + sj.bg;
    if (noise_sigma > 0) val += noise_sigma * noise.gauss();
    p = float(std::clamp(val, 0.0, 1.0));
  }
  return img;
}

}  // namespace detail

// Builds the full phantom dataset in memory: video views as clips of
// frames_per_clip frames walking one cardiac cycle, still-only views as the
// same number of independent stills. Byte-identical for a given seed.
inline Dataset generate_phantoms(const PhantomConfig& cfg) {
  require(cfg.classes >= 2 && cfg.classes <= kNumViews, Errc::bad_argument,
          "classes must be in [2,15]");
  require(cfg.studies >= 1 && cfg.clips_per_study >= 1 && cfg.frames_per_clip >= 1,
          Errc::bad_argument, "phantom counts must be >= 1");
  const double j = double(cfg.jitter);
  const double pulse = 0.08 * j;
  const double noise_sigma = 0.035 * j;

  Dataset ds;
  char buf[128];
  for (int s = 0; s < cfg.studies; ++s) {
    auto sj = detail::sample_study_jitter(cfg.seed, s, j);
    std::snprintf(buf, sizeof buf, "s%03d", s);
    std::string study_id = buf;
    for (int c = 0; c < cfg.classes; ++c) {
      ViewLabel label = ViewLabel(c);
      for (int k = 0; k < cfg.clips_per_study; ++k) {
        Rng clip_rng = derive_rng(cfg.seed, {0xC119u, uint64_t(s), uint64_t(c), uint64_t(k)});
        double phase0 = j > 0 ? clip_rng.uniform() : 0.0;
        bool video = is_video_view(label);
        for (int f = 0; f < cfg.frames_per_clip; ++f) {
          Rng frame_rng =
              derive_rng(cfg.seed, {0xF0A3u, uint64_t(s), uint64_t(c), uint64_t(k), uint64_t(f)});
          double phase;
          if (j == 0) {
            phase = 0.0;
          } else if (video) {
            phase = phase0 + double(f) / cfg.frames_per_clip;
          } else {
            phase = frame_rng.uniform();
          }
          double fty = j * frame_rng.uniform(-1.0, 1.0);
          double ftx = j * frame_rng.uniform(-1.0, 1.0);
          uint64_t noise_seed = frame_rng.next();

          SampleRecord rec;
          std::snprintf(buf, sizeof buf, "images/%s_%s_c%02d_f%02d.pgm", study_id.c_str(),
                        to_string(label), k, f);
          rec.path = buf;
          rec.study_id = study_id;
          rec.label = label;
          if (video) {
            std::snprintf(buf, sizeof buf, "%s_%s_c%02d", study_id.c_str(), to_string(label), k);
            rec.clip_id = buf;
          }
          rec.frame_index = f;
          ds.records.push_back(rec);
          ds.images.push_back(detail::render_phantom(label, sj, phase, pulse, fty, ftx,
                                                     noise_sigma, noise_seed));
        }
      }
    }
  }
  return ds;
}

}  // namespace echoview
