#pragma once

#include <vector>

#include "echoview/dataset.hpp"
#include "echoview/model.hpp"

namespace echoview {

// Batched inference over selected dataset records. Per-sample results are
// mathematically independent of the grouping; bit-exact reproduction needs
// the same grouping, which a fixed batch_size guarantees run to run.
inline Tensor infer_probs_indexed(const ModelGraph& model, const Dataset& ds,
                                  const std::vector<size_t>& idx, const std::vector<float>& mean,
                                  int batch_size = 64) {
  require(!idx.empty(), Errc::bad_argument, "empty evaluation set");
  require(mean.size() == size_t(kImagePixels), Errc::bad_argument,
          "training mean must have 4800 values");
  const int k = model.num_classes();
  Tensor probs({int64_t(idx.size()), k});
  for (size_t start = 0; start < idx.size(); start += size_t(batch_size)) {
    size_t n = std::min(size_t(batch_size), idx.size() - start);
    Tensor batch({int64_t(n), 1, kImageH, kImageW});
    for (size_t i = 0; i < n; ++i) {
      const auto& img = ds.images[idx[start + i]];
      float* dst = batch.data() + int64_t(i) * kImagePixels;
      for (int p = 0; p < kImagePixels; ++p) dst[p] = img[size_t(p)] - mean[size_t(p)];
    }
    Tensor out = model.infer_probs(batch);
    std::copy(out.data(), out.data() + out.size(), probs.data() + int64_t(start) * k);
  }
  return probs;
}

struct EvalStats {
  double loss = 0;
  double accuracy = 0;
};

inline EvalStats stats_from_probs(const Tensor& probs, const std::vector<int>& labels) {
  const int64_t n = probs.dim(0), k = probs.dim(1);
  double loss = 0;
  int64_t correct = 0;
  for (int64_t i = 0; i < n; ++i) {
    const float* row = probs.data() + i * k;
    double p = std::max(double(row[labels[size_t(i)]]), 1e-12);
    loss += -std::log(p);
    if (argmax_row(row, k) == labels[size_t(i)]) ++correct;
  }
  return {loss / double(n), double(correct) / double(n)};
}

inline std::vector<int> labels_of(const Dataset& ds, const std::vector<size_t>& idx) {
  std::vector<int> labels(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) labels[i] = int(ds.records[idx[i]].label);
  return labels;
}

}  // namespace echoview
