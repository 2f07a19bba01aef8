#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "echoview/inference.hpp"

namespace echoview {

// A named occlusion: rectangles plus an optional constant fill. Without an
// explicit fill the masked pixels take the training-mean values, which turn
// into exact zeros after mean subtraction ("grey" = no information).
struct OcclusionMask {
  std::string name;
  std::vector<MaskRect> rects;
  std::optional<float> fill;
};

struct OcclusionSpec {
  std::vector<OcclusionMask> masks;

  // center-heart block, four corners, horizontal/vertical bands, and the
  // full-image control
  static OcclusionSpec standard() {
    OcclusionSpec s;
    s.masks.push_back({"center", {MaskRect{28, 18, 24, 24}}, std::nullopt});
    s.masks.push_back({"corner_tl", {MaskRect{0, 0, 20, 15}}, std::nullopt});
    s.masks.push_back({"corner_tr", {MaskRect{60, 0, 20, 15}}, std::nullopt});
    s.masks.push_back({"corner_bl", {MaskRect{0, 45, 20, 15}}, std::nullopt});
    s.masks.push_back({"corner_br", {MaskRect{60, 45, 20, 15}}, std::nullopt});
    s.masks.push_back({"hband", {MaskRect{0, 24, 80, 12}}, std::nullopt});
    s.masks.push_back({"vband", {MaskRect{34, 0, 12, 60}}, std::nullopt});
    s.masks.push_back({"full", {MaskRect{0, 0, 80, 60}}, std::nullopt});
    return s;
  }
};

struct OcclusionRow {
  std::string mask_name;
  double accuracy = 0;
  double delta_vs_baseline = 0;
};

struct OcclusionTable {
  double baseline_accuracy = 0;
  std::vector<OcclusionRow> rows;

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    require(bool(out), Errc::io_error, "cannot write " + path.string());
    out << "mask_name,accuracy,delta_vs_baseline\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "baseline,%.6f,0.000000\n", baseline_accuracy);
    out << buf;
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f\n", r.mask_name.c_str(), r.accuracy,
                    r.delta_vs_baseline);
      out << buf;
    }
  }
};

// Masking happens in raw [0,1] space, before mean subtraction, so the whole
// pipeline downstream of ingestion sees a consistent image.
inline std::vector<float> apply_occlusion(const std::vector<float>& raw,
                                          const OcclusionMask& mask,
                                          const std::vector<float>& mean) {
  require(raw.size() == size_t(kImagePixels), Errc::shape_mismatch,
          "apply_occlusion expects a 60x80 image");
  std::vector<float> out = raw;
  for (const auto& r : mask.rects) {
    require(r.x >= 0 && r.y >= 0 && r.w >= 0 && r.h >= 0 && r.x + r.w <= kImageW &&
                r.y + r.h <= kImageH,
            Errc::bad_argument, "occlusion rectangle outside the 60x80 frame");
    for (int y = r.y; y < r.y + r.h; ++y)
      for (int x = r.x; x < r.x + r.w; ++x) {
        size_t i = size_t(y) * kImageW + size_t(x);
        out[i] = mask.fill ? *mask.fill : mean[i];
      }
  }
  return out;
}

// Re-classifies every image of the split under each named mask.
inline OcclusionTable occlusion_experiment(const ModelGraph& model, const Dataset& ds,
                                           Split split, const OcclusionSpec& spec,
                                           const std::vector<float>& mean) {
  auto idx = ds.indices_of(split);
  require(!idx.empty(), Errc::bad_argument, "occlusion experiment needs a non-empty test set");
  auto labels = labels_of(ds, idx);

  auto accuracy_with = [&](const OcclusionMask* mask) {
    const int k = model.num_classes();
    int64_t correct = 0;
    const int batch_size = 64;
    for (size_t start = 0; start < idx.size(); start += size_t(batch_size)) {
      size_t n = std::min(size_t(batch_size), idx.size() - start);
      Tensor batch({int64_t(n), 1, kImageH, kImageW});
      for (size_t i = 0; i < n; ++i) {
        std::vector<float> img = ds.images[idx[start + i]];
        if (mask) img = apply_occlusion(img, *mask, mean);
        float* dst = batch.data() + int64_t(i) * kImagePixels;
        for (int p = 0; p < kImagePixels; ++p) dst[p] = img[size_t(p)] - mean[size_t(p)];
      }
      Tensor probs = model.infer_probs(batch);
      for (size_t i = 0; i < n; ++i)
        if (argmax_row(probs.data() + int64_t(i) * k, k) == labels[start + i]) ++correct;
    }
    return double(correct) / double(idx.size());
  };

  OcclusionTable table;
  table.baseline_accuracy = accuracy_with(nullptr);
  for (const auto& mask : spec.masks) {
    OcclusionRow row;
    row.mask_name = mask.name;
    row.accuracy = accuracy_with(&mask);
    row.delta_vs_baseline = row.accuracy - table.baseline_accuracy;
    table.rows.push_back(row);
  }
  return table;
}

// Non-negative relevance per input pixel, max-normalized to [0,1].
struct SaliencyMap {
  std::vector<float> values;
  int target_class = 0;
};

// Gradient of the target class's pre-softmax score with respect to the
// input pixels, with the guided rule at every ReLU: gradient passes only
// where the forward input was positive AND the incoming gradient is
// positive. Weights are left untouched.
inline SaliencyMap guided_backprop_saliency(const ModelGraph& model,
                                            const std::vector<float>& raw_image,
                                            const std::vector<float>& mean, int target_class) {
  require(target_class >= 0 && target_class < model.num_classes(), Errc::bad_argument,
          "saliency target class out of range");
  require(raw_image.size() == size_t(kImagePixels), Errc::shape_mismatch,
          "saliency expects a 60x80 image");

  Tensor input({1, 1, kImageH, kImageW});
  for (int p = 0; p < kImagePixels; ++p) input[p] = raw_image[size_t(p)] - mean[size_t(p)];

  GradTape tape;
  tape.set_guided_relu(true);
  auto in = tape.track(std::move(input));
  auto logits = model.forward(&tape, in, RunMode::infer);
  auto score = pick_scalar<float>(&tape, logits, target_class);
  tape.backward(score);

  SaliencyMap map;
  map.target_class = target_class;
  map.values.resize(size_t(kImagePixels));
  float mx = 0;
  for (int p = 0; p < kImagePixels; ++p) {
    map.values[size_t(p)] = std::abs((*in.grad)[p]);
    mx = std::max(mx, map.values[size_t(p)]);
  }
  if (mx > 0)
    for (auto& v : map.values) v /= mx;
  return map;
}

// Post-activation output of the 512-node fully-connected layer, one row
// per selected record. One image per forward pass: the GEMM backend rounds
// SIMD-body and tail lanes differently, so a sample's bits must not depend
// on its position inside a batch here (identical images, identical rows).
inline Tensor extract_features(const ModelGraph& model, const Dataset& ds,
                               const std::vector<size_t>& idx, const std::vector<float>& mean) {
  require(!idx.empty(), Errc::bad_argument, "extract_features needs at least one image");
  Tensor features({int64_t(idx.size()), ModelGraph::kFc2});
  for (size_t i = 0; i < idx.size(); ++i) {
    Tensor one({1, 1, kImageH, kImageW});
    const auto& img = ds.images[idx[i]];
    for (int p = 0; p < kImagePixels; ++p) one[p] = img[size_t(p)] - mean[size_t(p)];
    Tensor last_fc;
    VarT<float> in{std::make_shared<Tensor>(std::move(one)), nullptr};
    model.forward(nullptr, in, RunMode::infer, nullptr, &last_fc);
    std::copy(last_fc.data(), last_fc.data() + last_fc.size(),
              features.data() + int64_t(i) * ModelGraph::kFc2);
  }
  return features;
}

}  // namespace echoview
