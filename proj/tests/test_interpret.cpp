#include <catch2/catch_amalgamated.hpp>

#include "echoview/interpret.hpp"
#include "echoview/phantom.hpp"
#include "echoview/tsne.hpp"
#include "helpers.hpp"

using namespace echoview;
using oracle::random_tensor;

namespace {

Dataset balanced_phantoms(int studies, int frames, uint64_t seed) {
  PhantomConfig cfg;
  cfg.studies = studies;
  cfg.frames_per_clip = frames;
  cfg.seed = seed;
  Dataset ds = generate_phantoms(cfg);
  for (auto& r : ds.records) r.split = Split::test;
  return ds;
}

}  // namespace

TEST_CASE("occlusion: empty mask reproduces the baseline exactly") {
  Dataset ds = balanced_phantoms(2, 2, 3);
  auto model = ModelGraph::build(15, 2);
  std::vector<float> mean(kImagePixels, 0.1f);
  OcclusionSpec spec;
  spec.masks.push_back({"empty", {}, std::nullopt});
  OcclusionTable t = occlusion_experiment(model, ds, Split::test, spec, mean);
  REQUIRE(t.rows.size() == 1u);
  CHECK(t.rows[0].accuracy == t.baseline_accuracy);
  CHECK(t.rows[0].delta_vs_baseline == 0.0);
}

TEST_CASE("occlusion: full-image mask lands at chance on a balanced set") {
  Dataset ds = balanced_phantoms(2, 2, 4);  // 4 samples per class, balanced
  auto model = ModelGraph::build(15, 7);
  std::vector<float> mean(kImagePixels, 0.2f);
  OcclusionSpec spec;
  spec.masks.push_back({"full", {MaskRect{0, 0, 80, 60}}, std::nullopt});
  OcclusionTable t = occlusion_experiment(model, ds, Split::test, spec, mean);
  // every masked image is identical, so one class gets all predictions
  CHECK_THAT(t.rows[0].accuracy, Catch::Matchers::WithinAbs(1.0 / 15.0, 1e-9));
}

TEST_CASE("occlusion: out-of-bounds mask is rejected") {
  Dataset ds = balanced_phantoms(1, 1, 5);
  auto model = ModelGraph::build(15, 2);
  std::vector<float> mean(kImagePixels, 0.0f);
  OcclusionSpec spec;
  spec.masks.push_back({"oob", {MaskRect{70, 50, 20, 20}}, std::nullopt});
  CHECK_THROWS_AS(occlusion_experiment(model, ds, Split::test, spec, mean), Error);
}

TEST_CASE("occlusion fill defaults to the training mean, explicit fill wins") {
  std::vector<float> img(kImagePixels, 0.8f);
  std::vector<float> mean(kImagePixels, 0.3f);
  OcclusionMask m{"m", {MaskRect{10, 10, 5, 5}}, std::nullopt};
  auto out = apply_occlusion(img, m, mean);
  CHECK(out[size_t(12) * kImageW + 12] == 0.3f);
  CHECK(out[0] == 0.8f);
  OcclusionMask mf{"mf", {MaskRect{10, 10, 5, 5}}, 0.55f};
  auto outf = apply_occlusion(img, mf, mean);
  CHECK(outf[size_t(12) * kImageW + 12] == 0.55f);
}

TEST_CASE("saliency: zero-weight model yields an identically zero map") {
  auto model = ModelGraph::build(15, 9);
  for (auto& ref : model.parameters()) ref.tensor->fill(0.0f);
  Rng rng(3);
  std::vector<float> img(kImagePixels);
  for (auto& v : img) v = float(rng.uniform(0, 1));
  std::vector<float> mean(kImagePixels, 0.0f);
  SaliencyMap map = guided_backprop_saliency(model, img, mean, 4);
  for (float v : map.values) CHECK(v == 0.0f);
}

TEST_CASE("saliency: values live in [0,1] and match the input shape") {
  auto model = ModelGraph::build(15, 10);
  Dataset ds = balanced_phantoms(1, 1, 6);
  std::vector<float> mean(kImagePixels, 0.0f);
  SaliencyMap map = guided_backprop_saliency(model, ds.images[0], mean, 0);
  REQUIRE(map.values.size() == size_t(kImagePixels));
  float mx = 0;
  for (float v : map.values) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    mx = std::max(mx, v);
  }
  CHECK(mx == 1.0f);  // max-normalized
}

TEST_CASE("guided rule: 4-case exhaustive check on a 2-pixel ReLU toy") {
  // s = w0*relu(x0) + w1*relu(x1); upstream gradient sign = sign(w)
  struct Case {
    float x, w;
    bool passes;
  };
  // (input > 0, upstream > 0) is the only passing combination
  Case cases[4] = {{1.5f, 2.0f, true}, {1.5f, -2.0f, false}, {-1.5f, 2.0f, false},
                   {-1.5f, -2.0f, false}};
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      GradTape tape;
      tape.set_guided_relu(true);
      Tensor x({1, 2});
      x.at(0, 0) = cases[a].x;
      x.at(0, 1) = cases[b].x;
      auto xv = tape.track(std::move(x));
      auto h = relu<float>(&tape, xv);
      Tensor w({1, 2});
      w.at(0, 0) = cases[a].w;
      w.at(0, 1) = cases[b].w;
      auto out = dense<float>(&tape, h, tape.track(std::move(w)), tape.track(Tensor({1})));
      auto s = pick_scalar<float>(&tape, out, 0);
      tape.backward(s);
      float g0 = (*xv.grad)[0], g1 = (*xv.grad)[1];
      CHECK(g0 == (cases[a].passes ? cases[a].w : 0.0f));
      CHECK(g1 == (cases[b].passes ? cases[b].w : 0.0f));
    }
}

TEST_CASE("guided backprop on a ReLU-free chain equals the plain gradient") {
  Rng rng(8);
  Tensor x = random_tensor<float>({1, 6}, rng);
  Tensor w1 = random_tensor<float>({4, 6}, rng);
  Tensor b1 = random_tensor<float>({4}, rng);
  Tensor w2 = random_tensor<float>({3, 4}, rng);
  Tensor b2 = random_tensor<float>({3}, rng);

  auto run = [&](bool guided) {
    GradTape tape;
    tape.set_guided_relu(guided);
    auto xv = tape.track(x);
    auto h = dense<float>(&tape, xv, tape.track(w1), tape.track(b1));
    auto out = dense<float>(&tape, h, tape.track(w2), tape.track(b2));
    auto s = pick_scalar<float>(&tape, out, 1);
    tape.backward(s);
    return xv.grad->vec();
  };
  CHECK(run(true) == run(false));
}

TEST_CASE("extract_features: 512 columns, identical images give identical rows") {
  auto model = ModelGraph::build(15, 11);
  Dataset ds;
  std::vector<float> img(kImagePixels, 0.4f);
  for (int i = 0; i < 3; ++i) {
    SampleRecord r;
    r.study_id = "s";
    ds.records.push_back(r);
    ds.images.push_back(img);  // all identical
  }
  std::vector<float> mean(kImagePixels, 0.0f);
  Tensor f = extract_features(model, ds, {0, 1, 2}, mean);
  REQUIRE(f.shape() == std::vector<int64_t>({3, 512}));
  for (int64_t j = 0; j < 512; ++j) {
    CHECK(f.at(0, j) == f.at(1, j));
    CHECK(f.at(1, j) == f.at(2, j));
  }
}

TEST_CASE("extract_features: zero weights with beta zero give the zero matrix") {
  auto model = ModelGraph::build(15, 12);
  for (auto& ref : model.parameters()) ref.tensor->fill(0.0f);
  for (auto& ref : model.state()) {
    // keep running variance at 1 so inference normalization stays defined
    if (ref.name.find("running_var") != std::string::npos) ref.tensor->fill(1.0f);
  }
  Dataset ds;
  SampleRecord r;
  ds.records.push_back(r);
  Rng rng(5);
  std::vector<float> img(kImagePixels);
  for (auto& v : img) v = float(rng.uniform(0, 1));
  ds.images.push_back(img);
  std::vector<float> mean(kImagePixels, 0.0f);
  Tensor f = extract_features(model, ds, {0}, mean);
  for (int64_t j = 0; j < 512; ++j) CHECK(f.at(0, j) == 0.0f);
}

TEST_CASE("t-SNE affinities: symmetric, non-negative, unit sum, on-target perplexity") {
  Rng rng(13);
  Tensor x = random_tensor<float>({90, 8}, rng);
  TsneAffinities aff = tsne_affinities(x, 12.0);
  double sum = 0;
  for (int i = 0; i < 90; ++i)
    for (int j = 0; j < 90; ++j) {
      double v = aff.p[size_t(i) * 90 + size_t(j)];
      CHECK(v >= 0.0);
      CHECK(v == aff.p[size_t(j) * 90 + size_t(i)]);
      sum += v;
    }
  CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  for (double p : aff.perplexity) CHECK_THAT(p, Catch::Matchers::WithinAbs(12.0, 1e-3));
}

TEST_CASE("t-SNE rejects too-small N for the perplexity and oversize N") {
  Rng rng(14);
  Tensor x = random_tensor<float>({20, 4}, rng);
  CHECK_THROWS_AS(tsne_affinities(x, 10.0), Error);  // needs N >= 30
  CHECK_NOTHROW(tsne_affinities(x, 6.0));
}

TEST_CASE("t-SNE: duplicated points embed next to their copies") {
  Rng rng(15);
  const int pairs = 50;
  Tensor base = random_tensor<float>({pairs, 10}, rng, -2, 2);
  Tensor x({pairs * 2, 10});
  for (int i = 0; i < pairs; ++i)
    for (int j = 0; j < 10; ++j) {
      x.at(2 * i, j) = base.at(i, j);
      x.at(2 * i + 1, j) = base.at(i, j);
    }
  TsneParams params;
  params.perplexity = 10;
  params.iterations = 2000;  // pair adjacency needs full convergence
  params.seed = 4;
  TsneResult res = tsne_embed(x, params);

  auto d2 = [&](int a, int b) {
    double dy = res.y[size_t(a) * 2] - res.y[size_t(b) * 2];
    double dx = res.y[size_t(a) * 2 + 1] - res.y[size_t(b) * 2 + 1];
    return dy * dy + dx * dx;
  };
  int good = 0;
  for (int i = 0; i < pairs; ++i) {
    double pair_d = d2(2 * i, 2 * i + 1);
    double min_other = 1e300;
    for (int j = 0; j < 2 * pairs; ++j)
      if (j != 2 * i && j != 2 * i + 1) min_other = std::min(min_other, d2(2 * i, j));
    if (pair_d < min_other) ++good;
  }
  CHECK(good >= int(0.95 * pairs));
}

TEST_CASE("t-SNE: KL divergence at iteration 1000 is below iteration 50") {
  Rng rng(16);
  Tensor x = random_tensor<float>({120, 6}, rng);
  TsneParams params;
  params.perplexity = 15;
  params.iterations = 1000;
  params.seed = 9;
  TsneResult res = tsne_embed(x, params);
  double kl50 = -1, kl1000 = -1;
  for (auto& [iter, kl] : res.kl_history) {
    if (iter == 50) kl50 = kl;
    if (iter == 1000) kl1000 = kl;
  }
  REQUIRE(kl50 > 0);
  REQUIRE(kl1000 > 0);
  CHECK(kl1000 < kl50);
}

TEST_CASE("t-SNE is deterministic for a fixed seed") {
  Rng rng(17);
  Tensor x = random_tensor<float>({60, 5}, rng);
  TsneParams params;
  params.perplexity = 8;
  params.iterations = 120;
  params.seed = 21;
  TsneResult a = tsne_embed(x, params);
  TsneResult b = tsne_embed(x, params);
  CHECK(a.y == b.y);
}
