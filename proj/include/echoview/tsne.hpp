#pragma once

#include <cmath>
#include <vector>

#include "echoview/common.hpp"
#include "echoview/parallel.hpp"
#include "echoview/rng.hpp"
#include "echoview/tensor.hpp"

namespace echoview {

struct TsneParams {
  double perplexity = 30;
  int iterations = 1000;
  double exaggeration = 12;
  int exaggeration_iters = 250;
  double learning_rate = 200;
  double momentum_start = 0.5;
  double momentum_final = 0.8;
  int momentum_switch_iter = 250;
  uint64_t seed = 1;
};

struct TsneAffinities {
  int n = 0;
  std::vector<double> p;           // N x N, symmetrized, sums to 1
  std::vector<double> perplexity;  // achieved conditional perplexity per point
};

struct TsneResult {
  std::vector<double> y;  // N x 2, row-major
  std::vector<std::pair<int, double>> kl_history;  // (iteration, KL vs true P)
};

namespace detail {

inline std::vector<double> pairwise_sq_dists(const TensorT<float>& x) {
  const int64_t n = x.dim(0), d = x.dim(1);
  std::vector<double> dist(size_t(n) * size_t(n), 0.0);
  parallel_for(n, [&](int64_t i) {
    for (int64_t j = i + 1; j < n; ++j) {
      const float* a = x.data() + i * d;
      const float* b = x.data() + j * d;
      double s = 0;
      for (int64_t t = 0; t < d; ++t) {
        double diff = double(a[t]) - double(b[t]);
        s += diff * diff;
      }
      dist[size_t(i) * size_t(n) + size_t(j)] = s;
      dist[size_t(j) * size_t(n) + size_t(i)] = s;
    }
  });
  return dist;
}

}  // namespace detail

// Conditional Gaussian affinities with the bandwidth of every point found
// by bisection so each row's perplexity matches the target, then
// symmetrized to sum to one.
inline TsneAffinities tsne_affinities(const TensorT<float>& features, double perplexity) {
  const int64_t n = features.dim(0);
  require(features.rank() == 2 && features.dim(1) >= 1, Errc::bad_argument,
          "t-SNE features must be {N,D} with D >= 1");
  require(perplexity >= 2, Errc::bad_argument, "perplexity must be >= 2");
  require(double(n) >= 3 * perplexity, Errc::bad_argument,
          "t-SNE needs N >= 3*perplexity, got N = " + std::to_string(n));
  require(n <= 2000, Errc::bad_argument,
          "exact t-SNE is limited to N <= 2000, got N = " + std::to_string(n));

  auto dist = detail::pairwise_sq_dists(features);
  const double target_entropy = std::log(perplexity);

  TsneAffinities aff;
  aff.n = int(n);
  aff.p.assign(size_t(n) * size_t(n), 0.0);
  aff.perplexity.assign(size_t(n), 0.0);

  parallel_for(n, [&](int64_t i) {
    const double* drow = dist.data() + i * n;
    double* prow = aff.p.data() + i * n;
    double beta = 1.0, beta_min = -1e300, beta_max = 1e300;
    double entropy = 0;
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0, dot = 0;
      for (int64_t j = 0; j < n; ++j) {
        if (j == i) {
          prow[j] = 0;
          continue;
        }
        double v = std::exp(-beta * drow[j]);
        prow[j] = v;
        sum += v;
        dot += v * drow[j];
      }
      entropy = std::log(sum) + beta * dot / sum;
      double diff = entropy - target_entropy;
      if (std::abs(diff) < 1e-9) break;
      if (diff > 0) {
        beta_min = beta;
        beta = beta_max > 1e299 ? beta * 2 : (beta + beta_max) / 2;
      } else {
        beta_max = beta;
        beta = beta_min < -1e299 ? beta / 2 : (beta + beta_min) / 2;
      }
    }
    double sum = 0;
    for (int64_t j = 0; j < n; ++j) sum += prow[j];
    for (int64_t j = 0; j < n; ++j) prow[j] /= sum;
    aff.perplexity[size_t(i)] = std::exp(entropy);
  });

  // symmetrize: P = (P + P^T) / 2N
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i + 1; j < n; ++j) {
      double v = (aff.p[size_t(i) * size_t(n) + size_t(j)] +
                  aff.p[size_t(j) * size_t(n) + size_t(i)]) /
                 (2.0 * double(n));
      aff.p[size_t(i) * size_t(n) + size_t(j)] = v;
      aff.p[size_t(j) * size_t(n) + size_t(i)] = v;
    }
  return aff;
}

// Exact O(N^2) t-SNE to two dimensions: early exaggeration, gradient
// descent with per-coordinate gains and a momentum switch, deterministic
// for a given seed.
inline TsneResult tsne_embed(const TensorT<float>& features, const TsneParams& params) {
  TsneAffinities aff = tsne_affinities(features, params.perplexity);
  const int64_t n = features.dim(0);

  TsneResult result;
  result.y.assign(size_t(n) * 2, 0.0);
  std::vector<double> inc(size_t(n) * 2, 0.0), gains(size_t(n) * 2, 1.0);
  Rng rng = derive_rng(params.seed, {0x75D3u});
  for (auto& v : result.y) v = 1e-4 * rng.gauss();

  std::vector<double> w(size_t(n) * size_t(n), 0.0);
  std::vector<double> grad(size_t(n) * 2, 0.0);

  auto kl_against_true_p = [&](double sum_w) {
    double kl = 0;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < n; ++j) {
        if (i == j) continue;
        double p = std::max(aff.p[size_t(i) * size_t(n) + size_t(j)], 1e-12);
        double q = std::max(w[size_t(i) * size_t(n) + size_t(j)] / sum_w, 1e-12);
        kl += p * std::log(p / q);
      }
    return kl;
  };

  for (int iter = 1; iter <= params.iterations; ++iter) {
    double exaggerate = iter <= params.exaggeration_iters ? params.exaggeration : 1.0;
    double momentum =
        iter <= params.momentum_switch_iter ? params.momentum_start : params.momentum_final;

    double sum_w = 0;
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = i + 1; j < n; ++j) {
        double dy = result.y[size_t(i) * 2] - result.y[size_t(j) * 2];
        double dx = result.y[size_t(i) * 2 + 1] - result.y[size_t(j) * 2 + 1];
        double v = 1.0 / (1.0 + dy * dy + dx * dx);
        w[size_t(i) * size_t(n) + size_t(j)] = v;
        w[size_t(j) * size_t(n) + size_t(i)] = v;
        sum_w += 2 * v;
      }

    parallel_for(n, [&](int64_t i) {
      double gy = 0, gx = 0;
      for (int64_t j = 0; j < n; ++j) {
        if (j == i) continue;
        double v = w[size_t(i) * size_t(n) + size_t(j)];
        double q = v / sum_w;
        double mult = (exaggerate * aff.p[size_t(i) * size_t(n) + size_t(j)] - q) * v;
        gy += mult * (result.y[size_t(i) * 2] - result.y[size_t(j) * 2]);
        gx += mult * (result.y[size_t(i) * 2 + 1] - result.y[size_t(j) * 2 + 1]);
      }
      grad[size_t(i) * 2] = 4 * gy;
      grad[size_t(i) * 2 + 1] = 4 * gx;
    });

    for (size_t t = 0; t < size_t(n) * 2; ++t) {
      bool same_sign = (grad[t] > 0) == (inc[t] > 0);
      gains[t] = same_sign ? std::max(gains[t] * 0.8, 0.01) : gains[t] + 0.2;
      inc[t] = momentum * inc[t] - params.learning_rate * gains[t] * grad[t];
      result.y[t] += inc[t];
    }
    double my = 0, mx = 0;
    for (int64_t i = 0; i < n; ++i) {
      my += result.y[size_t(i) * 2];
      mx += result.y[size_t(i) * 2 + 1];
    }
    my /= double(n);
    mx /= double(n);
    for (int64_t i = 0; i < n; ++i) {
      result.y[size_t(i) * 2] -= my;
      result.y[size_t(i) * 2 + 1] -= mx;
    }

    if (iter % 50 == 0 || iter == params.iterations)
      result.kl_history.emplace_back(iter, kl_against_true_p(sum_w));
  }
  return result;
}

}  // namespace echoview
