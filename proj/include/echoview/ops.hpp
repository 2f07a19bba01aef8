#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "echoview/gemm.hpp"
#include "echoview/parallel.hpp"
#include "echoview/rng.hpp"
#include "echoview/tape.hpp"
#include "echoview/tensor.hpp"

namespace echoview {

enum class BnMode { train, infer };

namespace detail {

template <typename T>
VarT<T> make_result(GradTapeT<T>* tape, TensorT<T> value) {
  if (tape) return tape->track(std::move(value));
  return VarT<T>{std::make_shared<TensorT<T>>(std::move(value)), nullptr};
}

// col has one row per (channel, tap) pair, one column per output pixel.
// ld/offset place one image's columns inside a wider multi-image matrix.
template <typename T>
void im2col3x3(const T* img, int64_t ch, int64_t h, int64_t w, T* col, int64_t ld,
               int64_t offset) {
  parallel_for(ch * 9, [&](int64_t k) {
    int64_t c = k / 9;
    int dy = int((k / 3) % 3) - 1;
    int dx = int(k % 3) - 1;
    const T* src = img + c * h * w;
    T* dst = col + k * ld + offset;
    for (int64_t y = 0; y < h; ++y, dst += w) {
      int64_t sy = y + dy;
      if (sy < 0 || sy >= h) {
        std::fill(dst, dst + w, T(0));
        continue;
      }
      int64_t x0 = std::max<int64_t>(0, -dx);
      int64_t x1 = std::min<int64_t>(w, w - dx);
      if (x0 > 0) std::fill(dst, dst + x0, T(0));
      if (x1 > x0) std::copy(src + sy * w + x0 + dx, src + sy * w + x1 + dx, dst + x0);
      if (x1 < w) std::fill(dst + std::max(x1, x0), dst + w, T(0));
    }
  });
}

template <typename T>
void col2im3x3_add(const T* col, int64_t ch, int64_t h, int64_t w, int64_t ld, int64_t offset,
                   T* img) {
  parallel_for(ch, [&](int64_t c) {
    for (int64_t tap = 0; tap < 9; ++tap) {
      int dy = int(tap / 3) - 1;
      int dx = int(tap % 3) - 1;
      const T* src = col + (c * 9 + tap) * ld + offset;
      T* dst = img + c * h * w;
      for (int64_t y = 0; y < h; ++y) {
        int64_t sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        int64_t x0 = std::max<int64_t>(0, -dx);
        int64_t x1 = std::min<int64_t>(w, w - dx);
        for (int64_t x = x0; x < x1; ++x) dst[sy * w + x + dx] += src[y * w + x];
      }
    }
  });
}

// Images per im2col/GEMM block: bounded scratch, fixed grouping for a given
// shape so accumulation order never varies run to run.
inline int64_t conv_chunk(int64_t batch, int64_t kk, int64_t hw) {
  int64_t budget = (32 << 20) / int64_t(sizeof(float));  // floats per buffer
  int64_t chunk = std::max<int64_t>(1, budget / std::max<int64_t>(1, kk * hw));
  return std::min(batch, chunk);
}

// Reused conv scratch; ops run on one logical thread, so per-thread reuse
// avoids refaulting fresh pages every call.
template <typename T>
std::vector<T>& scratch(int which, size_t n) {
  static thread_local std::vector<T> bufs[4];
  auto& b = bufs[which];
  if (b.size() < n) b.resize(n);
  return b;
}

}  // namespace detail

// 3x3 cross-correlation with zero-padded "same" borders, stride 1.
// input {B,C,H,W}, kernels {F,C,3,3}, bias {F} -> {B,F,H,W}
template <typename T>
VarT<T> conv2d(GradTapeT<T>* tape, const VarT<T>& input, const VarT<T>& kernels,
               const VarT<T>& bias) {
  const TensorT<T>& x = *input.value;
  const TensorT<T>& k = *kernels.value;
  require(x.rank() == 4, Errc::shape_mismatch, "conv2d input must be rank 4, got " + x.shape_str());
  require(k.rank() == 4 && k.dim(2) == 3 && k.dim(3) == 3, Errc::shape_mismatch,
          "conv2d kernels must be {F,C,3,3}, got " + k.shape_str());
  require(k.dim(1) == x.dim(1), Errc::shape_mismatch,
          "conv2d channel mismatch: input " + x.shape_str() + " vs kernels " + k.shape_str());
  require(x.dim(2) >= 1 && x.dim(3) >= 1, Errc::shape_mismatch,
          "conv2d input spatial size must be >= 1, got " + x.shape_str());
  const int64_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t filters = k.dim(0), hw = h * w, kk = ch * 9;
  require(bias.value->rank() == 1 && bias.value->dim(0) == filters, Errc::shape_mismatch,
          "conv2d bias must be {" + std::to_string(filters) + "}, got " +
              bias.value->shape_str());

  const int64_t chunk = detail::conv_chunk(batch, kk, hw);

  TensorT<T> out({batch, filters, h, w});
  {
    auto& col = detail::scratch<T>(0, size_t(kk * chunk * hw));
    auto& packed = detail::scratch<T>(1, size_t(filters * chunk * hw));
    for (int64_t b0 = 0; b0 < batch; b0 += chunk) {
      int64_t n = std::min(chunk, batch - b0);
      int64_t ld = n * hw;
      for (int64_t i = 0; i < n; ++i)
        detail::im2col3x3(x.data() + (b0 + i) * ch * hw, ch, h, w, col.data(), ld, i * hw);
      detail::gemm(false, false, filters, ld, kk, T(1), k.data(), kk, col.data(), ld, T(0),
                   packed.data(), ld);
      for (int64_t i = 0; i < n; ++i) {
        T* ob = out.data() + (b0 + i) * filters * hw;
        for (int64_t f = 0; f < filters; ++f) {
          const T* src = packed.data() + f * ld + i * hw;
          T bv = (*bias.value)[f];
          T* row = ob + f * hw;
          for (int64_t j = 0; j < hw; ++j) row[j] = src[j] + bv;
        }
      }
    }
  }

  VarT<T> result = detail::make_result(tape, std::move(out));
  if (tape) {
    tape->record([input, kernels, bias, result, batch, ch, h, w, filters, hw, kk, chunk]() {
      const TensorT<T>& dout = *result.grad;
      auto& col = detail::scratch<T>(0, size_t(kk * chunk * hw));
      auto& packed = detail::scratch<T>(1, size_t(filters * chunk * hw));
      auto& dcol = detail::scratch<T>(2, size_t(kk * chunk * hw));
      for (int64_t b0 = 0; b0 < batch; b0 += chunk) {
        int64_t n = std::min(chunk, batch - b0);
        int64_t ld = n * hw;
        for (int64_t i = 0; i < n; ++i) {
          const T* db = dout.data() + (b0 + i) * filters * hw;
          for (int64_t f = 0; f < filters; ++f) {
            T s = 0;
            const T* row = db + f * hw;
            for (int64_t j = 0; j < hw; ++j) s += row[j];
            (*bias.grad)[f] += s;
            std::copy(row, row + hw, packed.data() + f * ld + i * hw);
          }
          detail::im2col3x3(input.value->data() + (b0 + i) * ch * hw, ch, h, w, col.data(), ld,
                            i * hw);
        }
        detail::gemm(false, true, filters, kk, ld, T(1), packed.data(), ld, col.data(), ld, T(1),
                     kernels.grad->data(), kk);
        detail::gemm(true, false, kk, ld, filters, T(1), kernels.value->data(), kk, packed.data(),
                     ld, T(0), dcol.data(), ld);
        for (int64_t i = 0; i < n; ++i)
          detail::col2im3x3_add(dcol.data(), ch, h, w, ld, i * hw,
                                input.grad->data() + (b0 + i) * ch * hw);
      }
    });
  }
  return result;
}

// Disjoint 2x2 window max; odd trailing rows/columns are dropped.
template <typename T>
VarT<T> maxpool2x2(GradTapeT<T>* tape, const VarT<T>& input) {
  const TensorT<T>& x = *input.value;
  require(x.rank() == 4, Errc::shape_mismatch,
          "maxpool2x2 input must be rank 4, got " + x.shape_str());
  require(x.dim(2) >= 2 && x.dim(3) >= 2, Errc::bad_argument,
          "maxpool2x2 needs spatial size >= 2, got " + x.shape_str());
  const int64_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int64_t oh = h / 2, ow = w / 2;

  TensorT<T> out({batch, ch, oh, ow});
  auto argmax = std::make_shared<std::vector<int64_t>>(size_t(out.size()));
  parallel_for(batch * ch, [&](int64_t bc) {
    const T* src = x.data() + bc * h * w;
    T* dst = out.data() + bc * oh * ow;
    int64_t* am = argmax->data() + bc * oh * ow;
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t xo = 0; xo < ow; ++xo) {
        int64_t base = 2 * y * w + 2 * xo;
        int64_t best = base;
        T bv = src[base];
        const int64_t offs[3] = {base + 1, base + w, base + w + 1};
        for (int64_t o : offs) {
          if (src[o] > bv) {
            bv = src[o];
            best = o;
          }
        }
        dst[y * ow + xo] = bv;
        am[y * ow + xo] = bc * h * w + best;
      }
    }
  });

  VarT<T> result = detail::make_result(tape, std::move(out));
  if (tape) {
    tape->record([input, result, argmax]() {
      const TensorT<T>& dout = *result.grad;
      TensorT<T>& din = *input.grad;
      for (int64_t i = 0; i < dout.size(); ++i) din[(*argmax)[size_t(i)]] += dout[i];
    });
  }
  return result;
}

// {B,C,H,W} -> {B,C*H*W}
template <typename T>
VarT<T> flatten(GradTapeT<T>* tape, const VarT<T>& input) {
  const TensorT<T>& x = *input.value;
  require(x.rank() == 4, Errc::shape_mismatch, "flatten expects rank 4, got " + x.shape_str());
  TensorT<T> out = TensorT<T>::from({x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)}, x.vec());
  VarT<T> result = detail::make_result(tape, std::move(out));
  if (tape) {
    tape->record([input, result]() {
      TensorT<T>& din = *input.grad;
      const TensorT<T>& dout = *result.grad;
      for (int64_t i = 0; i < din.size(); ++i) din[i] += dout[i];
    });
  }
  return result;
}

// Affine map per batch row. input {B,I}, weights {O,I}, bias {O} -> {B,O}
template <typename T>
VarT<T> dense(GradTapeT<T>* tape, const VarT<T>& input, const VarT<T>& weights,
              const VarT<T>& bias) {
  const TensorT<T>& x = *input.value;
  const TensorT<T>& wt = *weights.value;
  require(x.rank() == 2, Errc::shape_mismatch, "dense input must be rank 2, got " + x.shape_str());
  require(wt.rank() == 2 && wt.dim(1) == x.dim(1), Errc::shape_mismatch,
          "dense dimension mismatch: input " + x.shape_str() + " vs weights " + wt.shape_str());
  const int64_t batch = x.dim(0), in = x.dim(1), out_n = wt.dim(0);
  require(bias.value->rank() == 1 && bias.value->dim(0) == out_n, Errc::shape_mismatch,
          "dense bias must be {" + std::to_string(out_n) + "}, got " + bias.value->shape_str());

  // computed transposed (samples in columns) so identical samples produce
  // bit-identical rows no matter where they sit in the batch
  TensorT<T> out({batch, out_n});
  {
    auto& packed = detail::scratch<T>(3, size_t(out_n * batch));
    detail::gemm(false, true, out_n, batch, in, T(1), wt.data(), in, x.data(), in, T(0),
                 packed.data(), batch);
    for (int64_t b = 0; b < batch; ++b) {
      T* row = out.data() + b * out_n;
      for (int64_t o = 0; o < out_n; ++o) row[o] = packed[size_t(o * batch + b)] + (*bias.value)[o];
    }
  }

  VarT<T> result = detail::make_result(tape, std::move(out));
  if (tape) {
    tape->record([input, weights, bias, result, batch, in, out_n]() {
      const TensorT<T>& dout = *result.grad;
      detail::gemm(true, false, out_n, in, batch, T(1), dout.data(), out_n, input.value->data(),
                   in, T(1), weights.grad->data(), in);
      for (int64_t b = 0; b < batch; ++b)
        for (int64_t o = 0; o < out_n; ++o) (*bias.grad)[o] += dout.at(b, o);
      detail::gemm(false, false, batch, in, out_n, T(1), dout.data(), out_n,
                   weights.value->data(), in, T(1), input.grad->data(), in);
    });
  }
  return result;
}

// Per-channel normalization. Rank-4 inputs reduce over (batch, spatial);
// rank-2 inputs over the batch. Train mode uses batch statistics and pushes
// them into the running averages; infer mode reads the running averages.
template <typename T>
VarT<T> batchnorm(GradTapeT<T>* tape, const VarT<T>& input, const VarT<T>& gamma,
                  const VarT<T>& beta, const std::shared_ptr<TensorT<T>>& running_mean,
                  const std::shared_ptr<TensorT<T>>& running_var, BnMode mode,
                  T momentum = T(0.99), T eps = T(1e-5)) {
  const TensorT<T>& x = *input.value;
  require(x.rank() == 2 || x.rank() == 4, Errc::shape_mismatch,
          "batchnorm expects rank 2 or 4, got " + x.shape_str());
  const int64_t batch = x.dim(0);
  const int64_t ch = x.dim(1);
  const int64_t spatial = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  const int64_t n = batch * spatial;
  require(gamma.value->size() == ch && beta.value->size() == ch, Errc::shape_mismatch,
          "batchnorm scale/shift must have one entry per channel");
  require(running_mean && running_var && running_mean->size() == ch && running_var->size() == ch,
          Errc::bad_argument, "batchnorm requires running statistics of size " +
                                  std::to_string(ch));
  if (mode == BnMode::train)
    require(batch >= 2, Errc::bad_argument,
            "batchnorm train mode needs batch size >= 2 (variance undefined), got " +
                std::to_string(batch));

  const int64_t batch_n = batch;
  auto mean = std::make_shared<std::vector<T>>(size_t(ch));
  auto invstd = std::make_shared<std::vector<T>>(size_t(ch));

  if (mode == BnMode::train) {
    parallel_for(ch, [&](int64_t c) {
      double sum = 0, sq = 0;
      for (int64_t b = 0; b < batch_n; ++b) {
        const T* row = x.data() + (b * ch + c) * spatial;
        for (int64_t s = 0; s < spatial; ++s) {
          double v = double(row[s]);
          sum += v;
          sq += v * v;
        }
      }
      double mu = sum / double(n);
      double var = std::max(0.0, sq / double(n) - mu * mu);
      (*mean)[size_t(c)] = T(mu);
      (*invstd)[size_t(c)] = T(1.0 / std::sqrt(var + double(eps)));
      (*running_mean)[c] = momentum * (*running_mean)[c] + (T(1) - momentum) * T(mu);
      (*running_var)[c] = momentum * (*running_var)[c] + (T(1) - momentum) * T(var);
    });
  } else {
    for (int64_t c = 0; c < ch; ++c) {
      (*mean)[size_t(c)] = (*running_mean)[c];
      (*invstd)[size_t(c)] = T(1.0 / std::sqrt(double((*running_var)[c]) + double(eps)));
    }
  }

  TensorT<T> out(x.shape());
  parallel_for(ch, [&](int64_t c) {
    T mu = (*mean)[size_t(c)], is = (*invstd)[size_t(c)];
    T g = (*gamma.value)[c], bb = (*beta.value)[c];
    T scale = g * is, shift = bb - mu * scale;
    for (int64_t b = 0; b < batch_n; ++b) {
      const T* row = x.data() + (b * ch + c) * spatial;
      T* dst = out.data() + (b * ch + c) * spatial;
      for (int64_t s = 0; s < spatial; ++s) dst[s] = row[s] * scale + shift;
    }
  });

  VarT<T> result = detail::make_result(tape, std::move(out));
  if (tape) {
    bool train = mode == BnMode::train;
    tape->record([input, gamma, beta, result, mean, invstd, ch, spatial, n, batch_n, train]() {
      const TensorT<T>& dout = *result.grad;
      const TensorT<T>& x = *input.value;
      parallel_for(ch, [&](int64_t c) {
        T mu = (*mean)[size_t(c)], is = (*invstd)[size_t(c)];
        T g = (*gamma.value)[c];
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int64_t b = 0; b < batch_n; ++b) {
          int64_t off = (b * ch + c) * spatial;
          const T* xr = x.data() + off;
          const T* dr = dout.data() + off;
          for (int64_t s = 0; s < spatial; ++s) {
            double dy = double(dr[s]);
            sum_dy += dy;
            sum_dy_xhat += dy * double((xr[s] - mu) * is);
          }
        }
        (*gamma.grad)[c] += T(sum_dy_xhat);
        (*beta.grad)[c] += T(sum_dy);
        if (train) {
          T mdy = T(sum_dy / double(n)), mdyx = T(sum_dy_xhat / double(n));
          T gs = g * is;
          for (int64_t b = 0; b < batch_n; ++b) {
            int64_t off = (b * ch + c) * spatial;
            const T* xr = x.data() + off;
            const T* dr = dout.data() + off;
            T* gr = input.grad->data() + off;
            for (int64_t s = 0; s < spatial; ++s)
              gr[s] += gs * (dr[s] - mdy - (xr[s] - mu) * is * mdyx);
          }
        } else {
          T gs = g * is;
          for (int64_t b = 0; b < batch_n; ++b) {
            int64_t off = (b * ch + c) * spatial;
            const T* dr = dout.data() + off;
            T* gr = input.grad->data() + off;
            for (int64_t s = 0; s < spatial; ++s) gr[s] += dr[s] * gs;
          }
        }
      });
    });
  }
  return result;
}

// The tape's guided flag switches the backward rule from plain ReLU
// (pass where input > 0) to the guided one (input > 0 AND upstream > 0).
template <typename T>
VarT<T> relu(GradTapeT<T>* tape, const VarT<T>& input) {
  const TensorT<T>& x = *input.value;
  TensorT<T> out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);

  VarT<T> result = detail::make_result(tape, std::move(out));
  if (tape) {
    GradTapeT<T>* t = tape;
    tape->record([input, result, t]() {
      const TensorT<T>& dout = *result.grad;
      const TensorT<T>& x = *input.value;
      TensorT<T>& din = *input.grad;
      if (t->guided_relu()) {
        for (int64_t i = 0; i < x.size(); ++i)
          if (x[i] > T(0) && dout[i] > T(0)) din[i] += dout[i];
      } else {
        for (int64_t i = 0; i < x.size(); ++i)
          if (x[i] > T(0)) din[i] += dout[i];
      }
    });
  }
  return result;
}

// Inverted dropout: kept activations are scaled by 1/(1-rate) so the
// expected value matches inference, which is the identity.
template <typename T>
VarT<T> dropout(GradTapeT<T>* tape, const VarT<T>& input, T rate, Rng& rng, bool train) {
  require(rate >= T(0) && rate < T(1), Errc::bad_argument, "dropout rate must be in [0,1)");
  if (!train || rate == T(0)) return input;
  const TensorT<T>& x = *input.value;
  auto mask = std::make_shared<std::vector<T>>(size_t(x.size()));
  T keep_scale = T(1) / (T(1) - rate);
  for (int64_t i = 0; i < x.size(); ++i)
    (*mask)[size_t(i)] = rng.uniform() < double(rate) ? T(0) : keep_scale;

  TensorT<T> out(x.shape());
  for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] * (*mask)[size_t(i)];

  VarT<T> result = detail::make_result(tape, std::move(out));
  if (tape) {
    tape->record([input, result, mask]() {
      const TensorT<T>& dout = *result.grad;
      for (int64_t i = 0; i < dout.size(); ++i) (*input.grad)[i] += dout[i] * (*mask)[size_t(i)];
    });
  }
  return result;
}

template <typename T>
struct SoftmaxXentT {
  VarT<T> loss;       // scalar, mean over the batch
  TensorT<T> probs;   // {B,K}
};

// Numerically stable softmax (max subtraction) + cross-entropy.
template <typename T>
SoftmaxXentT<T> softmax_crossentropy(GradTapeT<T>* tape, const VarT<T>& logits,
                                     const std::vector<int>& labels) {
  const TensorT<T>& x = *logits.value;
  require(x.rank() == 2, Errc::shape_mismatch,
          "softmax_crossentropy expects {B,K} logits, got " + x.shape_str());
  const int64_t batch = x.dim(0), k = x.dim(1);
  require(int64_t(labels.size()) == batch, Errc::shape_mismatch,
          "label count does not match batch size");
  require(x.all_finite(), Errc::numeric_error, "softmax_crossentropy requires finite logits");
  for (int lb : labels)
    require(lb >= 0 && lb < k, Errc::bad_argument,
            "label " + std::to_string(lb) + " out of range [0," + std::to_string(k) + ")");

  auto probs = std::make_shared<TensorT<T>>(std::vector<int64_t>{batch, k});
  double total = 0;
  for (int64_t b = 0; b < batch; ++b) {
    const T* row = x.data() + b * k;
    double m = double(row[0]);
    for (int64_t j = 1; j < k; ++j) m = std::max(m, double(row[j]));
    double s = 0;
    for (int64_t j = 0; j < k; ++j) s += std::exp(double(row[j]) - m);
    for (int64_t j = 0; j < k; ++j)
      probs->at(b, j) = T(std::exp(double(row[j]) - m) / s);
    total += -(double(row[labels[size_t(b)]]) - m - std::log(s));
  }
  TensorT<T> loss_t({1});
  loss_t[0] = T(total / double(batch));

  SoftmaxXentT<T> out{detail::make_result(tape, std::move(loss_t)), *probs};
  if (tape) {
    auto labels_copy = std::make_shared<std::vector<int>>(labels);
    VarT<T> loss = out.loss;
    tape->record([logits, loss, probs, labels_copy, batch, k]() {
      T dl = (*loss.grad)[0] / T(batch);
      for (int64_t b = 0; b < batch; ++b)
        for (int64_t j = 0; j < k; ++j)
          (*logits.grad).at(b, j) +=
              dl * (probs->at(b, j) - (j == (*labels_copy)[size_t(b)] ? T(1) : T(0)));
    });
  }
  return out;
}

// Selects one scalar out of a tensor (used to backpropagate from a single
// pre-softmax logit in saliency computations).
template <typename T>
VarT<T> pick_scalar(GradTapeT<T>* tape, const VarT<T>& input, int64_t flat_index) {
  require(flat_index >= 0 && flat_index < input.value->size(), Errc::bad_argument,
          "pick_scalar index out of range");
  TensorT<T> out({1});
  out[0] = (*input.value)[flat_index];
  VarT<T> result = detail::make_result(tape, std::move(out));
  if (tape) {
    tape->record([input, result, flat_index]() {
      (*input.grad)[flat_index] += (*result.grad)[0];
    });
  }
  return result;
}

}  // namespace echoview
