#pragma once

// Independent oracles for the test suite. Everything here is deliberately
// written as plain nested loops or direct formulas, separate from the
// library's GEMM/im2col path, so the two routes can check each other.

#include <cmath>
#include <cstdint>
#include <vector>

#include "echoview/rng.hpp"
#include "echoview/tensor.hpp"

namespace oracle {

using echoview::Rng;
using echoview::TensorT;

template <typename T>
TensorT<T> random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorT<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = T(rng.uniform(lo, hi));
  return t;
}

// Six nested loops, zero-padded "same" 3x3 cross-correlation.
template <typename T>
TensorT<T> conv2d_naive(const TensorT<T>& x, const TensorT<T>& k, const TensorT<T>& bias) {
  int64_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3), f = k.dim(0);
  TensorT<T> out({batch, f, h, w});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t o = 0; o < f; ++o)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t xx = 0; xx < w; ++xx) {
          double acc = double(bias[o]);
          for (int64_t c = 0; c < ch; ++c)
            for (int64_t t = 0; t < 9; ++t) {
              int64_t sy = y + t / 3 - 1, sx = xx + t % 3 - 1;
              if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
              acc += double(k.at(o, c, t / 3, t % 3)) * double(x.at(b, c, sy, sx));
            }
          out.at(b, o, y, xx) = T(acc);
        }
  return out;
}

template <typename T>
TensorT<T> maxpool2x2_naive(const TensorT<T>& x) {
  int64_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  TensorT<T> out({batch, ch, h / 2, w / 2});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t c = 0; c < ch; ++c)
      for (int64_t y = 0; y + 1 < h; y += 2)
        for (int64_t xx = 0; xx + 1 < w; xx += 2) {
          T m = x.at(b, c, y, xx);
          for (int64_t dy = 0; dy < 2; ++dy)
            for (int64_t dx = 0; dx < 2; ++dx) m = std::max(m, x.at(b, c, y + dy, xx + dx));
          out.at(b, c, y / 2, xx / 2) = m;
        }
  return out;
}

// Triple-loop affine map: out[b][o] = sum_i in[b][i] * w[o][i] + bias[o]
template <typename T>
TensorT<T> dense_naive(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias) {
  int64_t batch = x.dim(0), in = x.dim(1), out_n = w.dim(0);
  TensorT<T> out({batch, out_n});
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t o = 0; o < out_n; ++o) {
      double acc = double(bias[o]);
      for (int64_t i = 0; i < in; ++i) acc += double(x.at(b, i)) * double(w.at(o, i));
      out.at(b, o) = T(acc);
    }
  return out;
}

struct ChannelStats {
  std::vector<double> mean, var;  // biased variance
};

// Direct per-channel statistics over (batch, spatial).
template <typename T>
ChannelStats batchnorm_stats_naive(const TensorT<T>& x) {
  int64_t batch = x.dim(0), ch = x.dim(1);
  int64_t spatial = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  ChannelStats st;
  st.mean.assign(size_t(ch), 0.0);
  st.var.assign(size_t(ch), 0.0);
  for (int64_t c = 0; c < ch; ++c) {
    double s = 0;
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t i = 0; i < spatial; ++i) s += double(x.data()[(b * ch + c) * spatial + i]);
    double mu = s / double(batch * spatial);
    double v = 0;
    for (int64_t b = 0; b < batch; ++b)
      for (int64_t i = 0; i < spatial; ++i) {
        double d = double(x.data()[(b * ch + c) * spatial + i]) - mu;
        v += d * d;
      }
    st.mean[size_t(c)] = mu;
    st.var[size_t(c)] = v / double(batch * spatial);
  }
  return st;
}

// Softmax probabilities and cross-entropy evaluated directly in double.
inline std::pair<std::vector<double>, double> softmax_xent_naive(const std::vector<double>& logits,
                                                                 int label) {
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double s = 0;
  std::vector<double> p(logits.size());
  for (size_t i = 0; i < logits.size(); ++i) s += std::exp(logits[i] - m);
  for (size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - m) / s;
  return {p, -std::log(p[size_t(label)])};
}

// Central finite differences d f / d v[i] with step h.
template <typename F>
double central_difference(F&& f, double* slot, double h = 1e-3) {
  double keep = *slot;
  *slot = keep + h;
  double up = f();
  *slot = keep - h;
  double down = f();
  *slot = keep;
  return (up - down) / (2.0 * h);
}

inline double rel_error(double a, double b) {
  double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

}  // namespace oracle
