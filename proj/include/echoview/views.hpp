#pragma once

#include <optional>
#include <string_view>

namespace echoview {

// Every sample is one standardized 60x80 monochrome frame.
inline constexpr int kImageH = 60;
inline constexpr int kImageW = 80;
inline constexpr int kImagePixels = kImageH * kImageW;

// The 15 standard views. The first 12 occur as video clips; pulsed-wave
// Doppler, continuous-wave Doppler and m-mode occur only as still images.
enum class ViewLabel : int {
  plax = 0,
  rv_inflow,
  sax_basal,
  sax_mid,
  a4c,
  a5c,
  a2c,
  a3c,
  sub4c,
  sub_ivc,
  sub_ao,
  sup_ao,
  pw,
  cw,
  mmode,
};

inline constexpr int kNumViews = 15;
inline constexpr int kNumVideoViews = 12;

inline const char* to_string(ViewLabel v) {
  static const char* names[kNumViews] = {"plax", "rv_inflow", "sax_basal", "sax_mid", "a4c",
                                         "a5c",  "a2c",       "a3c",       "sub4c",   "sub_ivc",
                                         "sub_ao", "sup_ao",  "pw",        "cw",      "mmode"};
  return names[int(v)];
}

inline std::optional<ViewLabel> view_from_string(std::string_view s) {
  for (int i = 0; i < kNumViews; ++i)
    if (s == to_string(ViewLabel(i))) return ViewLabel(i);
  return std::nullopt;
}

inline bool is_video_view(ViewLabel v) { return int(v) < kNumVideoViews; }

}  // namespace echoview
