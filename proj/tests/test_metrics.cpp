#include <catch2/catch_amalgamated.hpp>

#include "echoview/metrics.hpp"
#include "echoview/phantom.hpp"
#include "helpers.hpp"

using namespace echoview;

namespace {

// Fraction of (positive, negative) pairs ordered correctly, ties at half.
double auc_pairwise_oracle(const std::vector<double>& scores, const std::vector<int>& labels) {
  double s = 0;
  int64_t pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j])
        s += 1.0;
      else if (scores[i] == scores[j])
        s += 0.5;
    }
  }
  return s / double(pairs);
}

Tensor probs_from_predictions(const std::vector<int>& preds, int k) {
  Tensor p({int64_t(preds.size()), k});
  for (size_t i = 0; i < preds.size(); ++i) {
    for (int c = 0; c < k; ++c) p.at(int64_t(i), c) = c == preds[i] ? 0.9f : 0.1f / float(k - 1);
  }
  return p;
}

}  // namespace

TEST_CASE("f_score: equal arguments, hand value, zero convention") {
  CHECK(f_score(0.3, 0.3) == Catch::Approx(0.3).margin(1e-12));
  CHECK(f_score(1.0, 1.0) == 1.0);
  CHECK_THAT(f_score(0.8, 0.6), Catch::Matchers::WithinAbs(0.6857142857142857, 1e-9));
  CHECK(f_score(0.0, 0.7) == 0.0);
  CHECK(f_score(0.0, 0.0) == 0.0);
  CHECK_THROWS_AS(f_score(1.2, 0.5), Error);
}

TEST_CASE("evaluate: perfect predictor gives a diagonal confusion matrix") {
  std::vector<int> labels = {0, 1, 2, 0, 1, 2, 2, 1};
  Tensor probs = probs_from_predictions(labels, 3);
  EvalReport rep = compute_report(probs, labels);
  CHECK(rep.overall_accuracy == 1.0);
  CHECK(rep.average_accuracy == 1.0);
  CHECK(rep.top1 == 1.0);
  CHECK(rep.top2 == 1.0);
  for (auto& m : rep.per_class) CHECK(m.f1 == 1.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) CHECK(rep.confusion.at(i, j) == 0);
  CHECK(rep.confidence.n_incorrect == 0);
}

TEST_CASE("evaluate: uniform-random predictor lands at chance on a balanced set") {
  const int n_per = 200, k = 15;
  Rng rng(5);
  std::vector<int> labels;
  Tensor probs({int64_t(n_per * k), k});
  int64_t row = 0;
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < n_per; ++i, ++row) {
      labels.push_back(c);
      double s = 0;
      for (int j = 0; j < k; ++j) {
        probs.at(row, j) = float(rng.uniform(0.001, 1.0));
        s += double(probs.at(row, j));
      }
      for (int j = 0; j < k; ++j) probs.at(row, j) = float(double(probs.at(row, j)) / s);
    }
  EvalReport rep = compute_report(probs, labels);
  // binomial band around 1/15 for n = 3000, about 4 sigma
  CHECK(rep.overall_accuracy > 1.0 / 15.0 - 0.02);
  CHECK(rep.overall_accuracy < 1.0 / 15.0 + 0.02);
}

TEST_CASE("evaluate: hand-built 3-class case matches the counting oracle exactly") {
  //            true:  0  0  0  1  1  1  2  2  2  2
  std::vector<int> t = {0, 0, 0, 1, 1, 1, 2, 2, 2, 2};
  std::vector<int> p = {0, 1, 0, 1, 1, 2, 2, 2, 0, 2};
  Tensor probs = probs_from_predictions(p, 3);
  EvalReport rep = compute_report(probs, t);

  for (int c = 0; c < 3; ++c) {
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < t.size(); ++i) {
      if (p[i] == c && t[i] == c) ++tp;
      if (p[i] == c && t[i] != c) ++fp;
      if (p[i] != c && t[i] == c) ++fn;
    }
    double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    double rec = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    CHECK(rep.per_class[size_t(c)].precision == prec);
    CHECK(rep.per_class[size_t(c)].recall == rec);
    CHECK(rep.per_class[size_t(c)].f1 == f_score(prec, rec));
  }
  // overall accuracy equals the raw-list fraction, exactly
  int64_t correct = 0;
  for (size_t i = 0; i < t.size(); ++i) correct += p[i] == t[i];
  CHECK(rep.overall_accuracy == double(correct) / double(t.size()));
  CHECK(rep.confusion.total() == int64_t(t.size()));
}

TEST_CASE("confusion matrix row percentages sum to ~100") {
  Rng rng(9);
  ConfusionMatrix cm(5);
  for (int i = 0; i < 500; ++i) cm.add(int(rng.below(5)), int(rng.below(5)));
  for (int r = 0; r < 5; ++r) {
    double s = 0;
    for (int c = 0; c < 5; ++c) s += cm.row_pct(r, c);
    CHECK(s > 99.9);
    CHECK(s < 100.1);
  }
  CHECK(cm.total() == 500);
}

TEST_CASE("roc_auc: separated, constant, and mixed-case oracles") {
  SECTION("perfect separation") {
    RocCurve r = roc_auc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0});
    CHECK(r.auc == 1.0);
  }
  SECTION("identical scores give the diagonal") {
    RocCurve r = roc_auc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0});
    CHECK_THAT(r.auc, Catch::Matchers::WithinAbs(0.5, 1e-12));
  }
  SECTION("8-sample mixed case equals the pairwise statistic") {
    std::vector<double> s = {0.9, 0.7, 0.7, 0.6, 0.5, 0.4, 0.3, 0.1};
    std::vector<int> l = {1, 0, 1, 1, 0, 1, 0, 0};
    RocCurve r = roc_auc(s, l);
    CHECK_THAT(r.auc, Catch::Matchers::WithinAbs(auc_pairwise_oracle(s, l), 1e-12));
  }
  SECTION("single-class labels are rejected") {
    CHECK_THROWS_AS(roc_auc({0.1, 0.2}, {1, 1}), Error);
  }
}

TEST_CASE("roc_auc equals the pairwise-ordering statistic on random cases") {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(uint64_t(100 + trial));
    int n = 5 + int(rng.below(40));
    std::vector<double> s(static_cast<size_t>(n));
    std::vector<int> l(static_cast<size_t>(n));
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      s[size_t(i)] = std::round(rng.uniform() * 10.0) / 10.0;  // force ties
      l[size_t(i)] = rng.coin() ? 1 : 0;
      pos += l[size_t(i)];
    }
    if (pos == 0 || pos == n) continue;
    CHECK_THAT(roc_auc(s, l).auc,
               Catch::Matchers::WithinAbs(auc_pairwise_oracle(s, l), 1e-9));
  }
}

TEST_CASE("majority vote: plurality, tie-breaks, degenerate single frame") {
  SECTION("plurality wins") {
    Tensor probs({3, 15});
    auto vote_for = [&](int64_t row, int cls) {
      for (int c = 0; c < 15; ++c) probs.at(row, c) = c == cls ? 0.8f : 0.2f / 14.0f;
    };
    vote_for(0, int(ViewLabel::a4c));
    vote_for(1, int(ViewLabel::a4c));
    vote_for(2, int(ViewLabel::a2c));
    VoteResult r = majority_vote(probs);
    CHECK(r.label == int(ViewLabel::a4c));
    CHECK(r.tally[size_t(ViewLabel::a4c)] == 2);
    CHECK(r.tally[size_t(ViewLabel::a2c)] == 1);
  }
  SECTION("vote ties break on summed probability") {
    Tensor probs({2, 3});
    probs.at(0, 0) = 0.6f; probs.at(0, 1) = 0.3f; probs.at(0, 2) = 0.1f;
    probs.at(1, 0) = 0.1f; probs.at(1, 1) = 0.8f; probs.at(1, 2) = 0.1f;
    VoteResult r = majority_vote(probs);  // 1 vote each; class 1 has higher mass
    CHECK(r.label == 1);
  }
  SECTION("full tie falls back to the lowest index") {
    Tensor probs({2, 2});
    probs.at(0, 0) = 1.0f;
    probs.at(1, 1) = 1.0f;
    CHECK(majority_vote(probs).label == 0);
  }
  SECTION("empty frame list is rejected") {
    Tensor probs({0, 3});
    CHECK_THROWS_AS(majority_vote(probs), Error);
  }
}

TEST_CASE("majority vote over 11 frames matches the binomial-tail oracle") {
  // per-frame error 0.1; clip errs when 6 or more frames err
  double tail = 0;
  auto comb = [](int n, int r) {
    double c = 1;
    for (int i = 0; i < r; ++i) c = c * double(n - i) / double(i + 1);
    return c;
  };
  for (int k = 6; k <= 11; ++k)
    tail += comb(11, k) * std::pow(0.1, k) * std::pow(0.9, 11 - k);
  CHECK_THAT(tail, Catch::Matchers::WithinAbs(2.97e-4, 2e-6));

  const int trials = 200000;
  Rng rng(77);
  int64_t errors = 0;
  Tensor probs({11, 2});
  for (int t = 0; t < trials; ++t) {
    for (int f = 0; f < 11; ++f) {
      bool wrong = rng.uniform() < 0.1;
      probs.at(f, 0) = wrong ? 0.2f : 0.8f;
      probs.at(f, 1) = wrong ? 0.8f : 0.2f;
    }
    if (majority_vote(probs).label != 0) ++errors;
  }
  double observed = double(errors) / trials;
  double se = std::sqrt(tail * (1 - tail) / trials);
  CHECK(std::abs(observed - tail) <= 3 * se);
}

TEST_CASE("classify_video on a single-frame clip equals classify_image") {
  PhantomConfig cfg;
  cfg.studies = 1;
  cfg.classes = 15;
  cfg.frames_per_clip = 1;
  Dataset ds = generate_phantoms(cfg);
  auto model = ModelGraph::build(15, 3);
  std::vector<float> mean(kImagePixels, 0.0f);

  size_t idx = 0;  // first record is a video frame (plax)
  REQUIRE(!ds.records[idx].clip_id.empty());
  VoteResult vote = classify_video(model, ds, {idx}, mean);
  auto probs = model.classify_image(ds.images[idx]);
  CHECK(vote.label == argmax_row(probs.data(), 15));
  CHECK(vote.tally[size_t(vote.label)] == 1);
}

TEST_CASE("classify_video rejects frames spanning clips") {
  PhantomConfig cfg;
  cfg.studies = 1;
  cfg.classes = 15;
  cfg.frames_per_clip = 2;
  Dataset ds = generate_phantoms(cfg);
  auto model = ModelGraph::build(15, 3);
  std::vector<float> mean(kImagePixels, 0.0f);
  // frames 0,1 belong to the plax clip; frame 2 starts the rv_inflow clip
  CHECK_THROWS_AS(classify_video(model, ds, {0, 2}, mean), Error);
}

TEST_CASE("top-k: hand-built table, monotonicity, perfect case") {
  SECTION("5-sample hand table") {
    Tensor probs({5, 4});
    float rows[5][4] = {{0.5f, 0.3f, 0.1f, 0.1f},
                        {0.1f, 0.4f, 0.35f, 0.15f},
                        {0.22f, 0.28f, 0.3f, 0.2f},
                        {0.05f, 0.15f, 0.3f, 0.5f},
                        {0.4f, 0.1f, 0.2f, 0.3f}};
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j) probs.at(i, j) = rows[i][j];
    std::vector<int> labels = {1, 2, 0, 2, 0};
    // exhaustive: top-1 hits rows {4}; top-2 adds rows {0, 1, 3}
    CHECK(topk_accuracy(probs, labels, 1) == 0.2);
    CHECK(topk_accuracy(probs, labels, 2) == 0.8);
    EvalReport rep = compute_report(probs, labels);
    CHECK(rep.top2 == 0.8);
    // of the 4 top-1 misses, 3 are rescued by the second guess
    CHECK(rep.second_guess_recovery == 0.75);
  }
  SECTION("monotonic in k on random tables") {
    Rng rng(31);
    Tensor probs({40, 8});
    std::vector<int> labels(40);
    for (int i = 0; i < 40; ++i) {
      labels[size_t(i)] = int(rng.below(8));
      for (int j = 0; j < 8; ++j) probs.at(i, j) = float(rng.uniform());
    }
    double prev = 0;
    for (int k = 1; k < 8; ++k) {
      double acc = topk_accuracy(probs, labels, k);
      CHECK(acc >= prev);
      prev = acc;
    }
  }
}

TEST_CASE("confidence summary: median and IQR by linear interpolation") {
  Tensor probs({4, 2});
  // all predicted class 0 with confidences .6 .7 .8 .9; labels make them correct
  float conf[4] = {0.6f, 0.7f, 0.8f, 0.9f};
  for (int i = 0; i < 4; ++i) {
    probs.at(i, 0) = conf[i];
    probs.at(i, 1) = 1.0f - conf[i];
  }
  std::vector<int> labels = {0, 0, 0, 0};
  EvalReport rep = compute_report(probs, labels);
  CHECK_THAT(rep.confidence.median_correct, Catch::Matchers::WithinAbs(0.75, 1e-6));
  CHECK_THAT(rep.confidence.q1_correct, Catch::Matchers::WithinAbs(0.675, 1e-6));
  CHECK_THAT(rep.confidence.q3_correct, Catch::Matchers::WithinAbs(0.825, 1e-6));
  CHECK(rep.confidence.n_incorrect == 0);
}

TEST_CASE("evaluate_stills rejects an empty test set") {
  Dataset ds;
  auto model = ModelGraph::build(2, 1);
  std::vector<float> mean(kImagePixels, 0.0f);
  CHECK_THROWS_AS(evaluate_stills(model, ds, Split::test, mean), Error);
}

TEST_CASE("report files carry the documented headers") {
  std::vector<int> labels = {0, 1, 2, 0, 1, 2};
  Tensor probs = probs_from_predictions(labels, 3);
  EvalReport rep = compute_report(probs, labels);
  auto dir = std::filesystem::temp_directory_path() / "echoview_metrics";
  std::filesystem::create_directories(dir);
  write_confusion_csv(dir / "cc.csv", rep.confusion, false);
  write_confusion_csv(dir / "cp.csv", rep.confusion, true);
  write_per_class_csv(dir / "pc.csv", rep);
  write_roc_csv(dir / "roc.csv", rep.roc[0]);
  write_summary(dir / "summary.txt", rep);
  auto first_line = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::string s;
    std::getline(in, s);
    return s;
  };
  CHECK(first_line(dir / "pc.csv") == "view,support,precision,recall,f1,auc");
  CHECK(first_line(dir / "roc.csv") == "fpr,tpr");
  CHECK(first_line(dir / "summary.txt").substr(0, 17) == "overall_accuracy=");
}
