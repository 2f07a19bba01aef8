#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "echoview/ops.hpp"
#include "echoview/rng.hpp"
#include "echoview/views.hpp"

namespace echoview {

enum class RunMode { train, infer };

template <typename T>
struct ParamRef {
  std::string name;
  std::shared_ptr<TensorT<T>> tensor;
};

// Largest activation over one descending row: probabilities from a single
// inference forward. Ties resolve to the lowest class index.
template <typename T>
int argmax_row(const T* row, int64_t k) {
  int best = 0;
  for (int64_t j = 1; j < k; ++j)
    if (row[j] > row[best]) best = int(j);
  return best;
}

// Row-wise stable softmax (shared by loss and inference paths).
template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& logits) {
  const int64_t rows = logits.dim(0), k = logits.dim(1);
  TensorT<T> p(logits.shape());
  for (int64_t b = 0; b < rows; ++b) {
    const T* in = logits.data() + b * k;
    T* out = p.data() + b * k;
    double m = double(in[0]);
    for (int64_t j = 1; j < k; ++j) m = std::max(m, double(in[j]));
    double s = 0;
    for (int64_t j = 0; j < k; ++j) s += std::exp(double(in[j]) - m);
    for (int64_t j = 0; j < k; ++j) out[j] = T(std::exp(double(in[j]) - m) / s);
  }
  return p;
}

// Three double-convolution blocks (32/64/128 filters) followed by
// 1028- and 512-node fully-connected blocks and the classifier head.
// Batch normalization precedes every ReLU; dropout follows every pool
// (0.25) and every fully-connected block (0.5).
template <typename T>
class ModelGraphT {
 public:
  static constexpr std::array<int, 6> kConvFilters = {32, 32, 64, 64, 128, 128};
  static constexpr int kFc1 = 1028;
  static constexpr int kFc2 = 512;
  static constexpr int kFlat = 128 * 7 * 10;  // 60x80 input after three pools
  static constexpr float kDropConv = 0.25f;
  static constexpr float kDropFc = 0.5f;

  static ModelGraphT build(int num_classes, uint64_t seed) {
    require(num_classes >= 2 && num_classes <= kNumViews, Errc::bad_argument,
            "num_classes must be in [2,15], got " + std::to_string(num_classes));
    ModelGraphT m;
    m.num_classes_ = num_classes;
    Rng rng = derive_rng(seed, {0x1337u});
    int in_ch = 1;
    for (int i = 0; i < 6; ++i) {
      int f = kConvFilters[size_t(i)];
      m.conv_[size_t(i)].kernels = he_uniform(rng, {f, in_ch, 3, 3}, int64_t(in_ch) * 9);
      m.conv_[size_t(i)].bias = std::make_shared<TensorT<T>>(std::vector<int64_t>{f});
      m.bn_[size_t(i)] = make_bn(f);
      in_ch = f;
    }
    m.fc_[0].weights = he_uniform(rng, {kFc1, kFlat}, kFlat);
    m.fc_[0].bias = std::make_shared<TensorT<T>>(std::vector<int64_t>{kFc1});
    m.bn_[6] = make_bn(kFc1);
    m.fc_[1].weights = he_uniform(rng, {kFc2, kFc1}, kFc1);
    m.fc_[1].bias = std::make_shared<TensorT<T>>(std::vector<int64_t>{kFc2});
    m.bn_[7] = make_bn(kFc2);
    m.fc_[2].weights = he_uniform(rng, {num_classes, kFc2}, kFc2);
    m.fc_[2].bias = std::make_shared<TensorT<T>>(std::vector<int64_t>{num_classes});
    return m;
  }

  int num_classes() const { return num_classes_; }

  // FNV-1a over the layer specification; persisted files must match.
  uint64_t fingerprint() const {
    std::string spec = "echoview-cnn/1 in=1x60x80 conv=";
    for (int f : kConvFilters) spec += std::to_string(f) + ",";
    spec += " k=3x3 pool=2x2 fc=" + std::to_string(kFc1) + "," + std::to_string(kFc2);
    spec += " classes=" + std::to_string(num_classes_);
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : spec) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

  // Forward to the pre-softmax logits. Train mode needs a dropout RNG and
  // updates the batch-norm running statistics with the given momentum
  // (small-batch-count runs want a faster average than the 0.99 default).
  // `last_fc` (optional) receives the post-activation 512-node output.
  VarT<T> forward(GradTapeT<T>* tape, VarT<T> input, RunMode mode, Rng* dropout_rng = nullptr,
                  TensorT<T>* last_fc = nullptr, T bn_momentum = T(0.99)) const {
    const TensorT<T>& x = *input.value;
    require(x.rank() == 4 && x.dim(1) == 1 && x.dim(2) == kImageH && x.dim(3) == kImageW,
            Errc::shape_mismatch,
            "model input must be {B,1,60,80}, got " + x.shape_str());
    bool train = mode == RunMode::train;
    require(!train || dropout_rng, Errc::bad_argument, "train-mode forward needs a dropout rng");
    BnMode bnm = train ? BnMode::train : BnMode::infer;
    Rng nodrop(0);
    Rng& drng = dropout_rng ? *dropout_rng : nodrop;

    auto track = [&](const std::shared_ptr<TensorT<T>>& p) {
      return tape ? tape->track(p) : VarT<T>{p, nullptr};
    };

    VarT<T> h = input;
    for (int i = 0; i < 6; ++i) {
      h = conv2d<T>(tape, h, track(conv_[size_t(i)].kernels), track(conv_[size_t(i)].bias));
      h = batchnorm<T>(tape, h, track(bn_[size_t(i)].gamma), track(bn_[size_t(i)].beta),
                       bn_[size_t(i)].running_mean, bn_[size_t(i)].running_var, bnm, bn_momentum);
      h = relu<T>(tape, h);
      if (i % 2 == 1) {
        h = maxpool2x2<T>(tape, h);
        h = dropout<T>(tape, h, T(kDropConv), drng, train);
      }
    }
    h = flatten<T>(tape, h);
    for (int i = 0; i < 2; ++i) {
      h = dense<T>(tape, h, track(fc_[size_t(i)].weights), track(fc_[size_t(i)].bias));
      h = batchnorm<T>(tape, h, track(bn_[size_t(6 + i)].gamma), track(bn_[size_t(6 + i)].beta),
                       bn_[size_t(6 + i)].running_mean, bn_[size_t(6 + i)].running_var, bnm,
                       bn_momentum);
      h = relu<T>(tape, h);
      if (i == 1 && last_fc) *last_fc = *h.value;
      h = dropout<T>(tape, h, T(kDropFc), drng, train);
    }
    return dense<T>(tape, h, track(fc_[2].weights), track(fc_[2].bias));
  }

  // Inference probabilities for a batch of mean-subtracted images.
  TensorT<T> infer_probs(const TensorT<T>& batch) const {
    VarT<T> in{std::make_shared<TensorT<T>>(batch), nullptr};
    VarT<T> logits = forward(nullptr, in, RunMode::infer);
    return softmax_rows(*logits.value);
  }

  // One mean-subtracted image -> probability vector over num_classes.
  std::vector<T> classify_image(const std::vector<T>& image) const {
    require(int64_t(image.size()) == kImagePixels, Errc::shape_mismatch,
            "classify_image expects 4800 pixels, got " + std::to_string(image.size()));
    TensorT<T> batch = TensorT<T>::from({1, 1, kImageH, kImageW},
                                        std::vector<T>(image.begin(), image.end()));
    TensorT<T> p = infer_probs(batch);
    return p.vec();
  }

  std::vector<ParamRef<T>> parameters() const {
    std::vector<ParamRef<T>> out;
    collect(out, false);
    return out;
  }

  // Parameters plus running statistics: everything save/load persists and
  // best-epoch snapshots copy.
  std::vector<ParamRef<T>> state() const {
    std::vector<ParamRef<T>> out;
    collect(out, true);
    return out;
  }

  ModelGraphT clone() const {
    ModelGraphT m = *this;
    for (int i = 0; i < 6; ++i) {
      m.conv_[size_t(i)].kernels = copy(conv_[size_t(i)].kernels);
      m.conv_[size_t(i)].bias = copy(conv_[size_t(i)].bias);
    }
    for (int i = 0; i < 8; ++i) {
      m.bn_[size_t(i)].gamma = copy(bn_[size_t(i)].gamma);
      m.bn_[size_t(i)].beta = copy(bn_[size_t(i)].beta);
      m.bn_[size_t(i)].running_mean = copy(bn_[size_t(i)].running_mean);
      m.bn_[size_t(i)].running_var = copy(bn_[size_t(i)].running_var);
    }
    for (int i = 0; i < 3; ++i) {
      m.fc_[size_t(i)].weights = copy(fc_[size_t(i)].weights);
      m.fc_[size_t(i)].bias = copy(fc_[size_t(i)].bias);
    }
    return m;
  }

  template <typename U>
  ModelGraphT<U> cast() const {
    ModelGraphT<U> m = ModelGraphT<U>::build(num_classes_, 0);
    auto src = state();
    auto dst = m.state();
    for (size_t i = 0; i < src.size(); ++i) *dst[i].tensor = src[i].tensor->template cast<U>();
    return m;
  }

 private:
  template <typename U>
  friend class ModelGraphT;

  struct Conv {
    std::shared_ptr<TensorT<T>> kernels, bias;
  };
  struct Bn {
    std::shared_ptr<TensorT<T>> gamma, beta, running_mean, running_var;
  };
  struct Fc {
    std::shared_ptr<TensorT<T>> weights, bias;
  };

  static Bn make_bn(int ch) {
    Bn bn;
    bn.gamma = std::make_shared<TensorT<T>>(std::vector<int64_t>{ch}, T(1));
    bn.beta = std::make_shared<TensorT<T>>(std::vector<int64_t>{ch});
    bn.running_mean = std::make_shared<TensorT<T>>(std::vector<int64_t>{ch});
    bn.running_var = std::make_shared<TensorT<T>>(std::vector<int64_t>{ch}, T(1));
    return bn;
  }

  static std::shared_ptr<TensorT<T>> he_uniform(Rng& rng, std::vector<int64_t> shape,
                                                int64_t fan_in) {
    auto t = std::make_shared<TensorT<T>>(std::move(shape));
    double bound = std::sqrt(6.0 / double(fan_in));
    for (int64_t i = 0; i < t->size(); ++i) (*t)[i] = T(rng.uniform(-bound, bound));
    return t;
  }

  static std::shared_ptr<TensorT<T>> copy(const std::shared_ptr<TensorT<T>>& p) {
    return std::make_shared<TensorT<T>>(*p);
  }

  void collect(std::vector<ParamRef<T>>& out, bool with_running) const {
    auto bn_refs = [&](int i, const std::string& name) {
      out.push_back({name + ".gamma", bn_[size_t(i)].gamma});
      out.push_back({name + ".beta", bn_[size_t(i)].beta});
      if (with_running) {
        out.push_back({name + ".running_mean", bn_[size_t(i)].running_mean});
        out.push_back({name + ".running_var", bn_[size_t(i)].running_var});
      }
    };
    for (int i = 0; i < 6; ++i) {
      std::string base = "conv" + std::to_string(i + 1);
      out.push_back({base + ".kernels", conv_[size_t(i)].kernels});
      out.push_back({base + ".bias", conv_[size_t(i)].bias});
      bn_refs(i, base + ".bn");
    }
    for (int i = 0; i < 3; ++i) {
      std::string base = "fc" + std::to_string(i + 1);
      out.push_back({base + ".weights", fc_[size_t(i)].weights});
      out.push_back({base + ".bias", fc_[size_t(i)].bias});
      if (i < 2) bn_refs(6 + i, base + ".bn");
    }
  }

  int num_classes_ = 0;
  std::array<Conv, 6> conv_;
  std::array<Bn, 8> bn_;
  std::array<Fc, 3> fc_;
};

using ModelGraph = ModelGraphT<float>;

}  // namespace echoview
