#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "echoview/inference.hpp"

namespace echoview {

// Rows are true labels, columns predicted labels.
struct ConfusionMatrix {
  int k = 0;
  std::vector<int64_t> counts;

  explicit ConfusionMatrix(int classes = 0) : k(classes), counts(size_t(classes * classes), 0) {}

  void add(int truth, int pred) { counts[size_t(truth * k + pred)]++; }
  int64_t at(int truth, int pred) const { return counts[size_t(truth * k + pred)]; }
  int64_t total() const { return std::accumulate(counts.begin(), counts.end(), int64_t(0)); }
  int64_t trace() const {
    int64_t t = 0;
    for (int i = 0; i < k; ++i) t += at(i, i);
    return t;
  }
  int64_t row_sum(int truth) const {
    int64_t s = 0;
    for (int j = 0; j < k; ++j) s += at(truth, j);
    return s;
  }
  int64_t col_sum(int pred) const {
    int64_t s = 0;
    for (int i = 0; i < k; ++i) s += at(i, pred);
    return s;
  }
  double row_pct(int truth, int pred) const {
    int64_t rs = row_sum(truth);
    return rs == 0 ? 0.0 : 100.0 * double(at(truth, pred)) / double(rs);
  }
};

// F1, i.e. the harmonic mean of precision and recall, 2PR/(P+R).
// Zero by convention when both are zero.
inline double f_score(double precision, double recall) {
  require(precision >= 0 && precision <= 1 && recall >= 0 && recall <= 1, Errc::bad_argument,
          "precision/recall must lie in [0,1]");
  double s = precision + recall;
  return s == 0 ? 0.0 : 2.0 * precision * recall / s;
}

struct RocPoint {
  double fpr = 0, tpr = 0;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0;
};

// ROC over every distinct score threshold, AUC by trapezoidal integration.
inline RocCurve roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size() && !scores.empty(), Errc::bad_argument,
          "scores/labels size mismatch");
  int64_t pos = 0, neg = 0;
  for (int lb : labels) (lb ? pos : neg)++;
  require(pos > 0 && neg > 0, Errc::bad_argument,
          "ROC needs at least one positive and one negative sample");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  int64_t tp = 0, fp = 0;
  double auc = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    int64_t dtp = 0, dfp = 0;
    for (size_t t = i; t < j; ++t) (labels[order[t]] ? dtp : dfp)++;
    double tpr0 = double(tp) / double(pos), fpr0 = double(fp) / double(neg);
    tp += dtp;
    fp += dfp;
    double tpr1 = double(tp) / double(pos), fpr1 = double(fp) / double(neg);
    auc += (fpr1 - fpr0) * (tpr0 + tpr1) / 2.0;
    curve.points.push_back({fpr1, tpr1});
    i = j;
  }
  curve.auc = auc;
  return curve;
}

struct ClassMetrics {
  double precision = 0, recall = 0, f1 = 0;
  int64_t support = 0;
  double auc = 0;
};

struct ConfidenceSummary {
  double median_correct = 0, q1_correct = 0, q3_correct = 0;
  double median_incorrect = 0, q1_incorrect = 0, q3_incorrect = 0;
  int64_t n_correct = 0, n_incorrect = 0;
};

struct EvalReport {
  ConfusionMatrix confusion;
  double overall_accuracy = 0;
  double average_accuracy = 0;  // mean of per-view recalls
  std::vector<ClassMetrics> per_class;
  double f_mean = 0, f_sd = 0;
  double top1 = 0, top2 = 0;
  double second_guess_recovery = 0;  // top-1 misses rescued by the 2nd guess
  ConfidenceSummary confidence;
  std::vector<RocCurve> roc;  // one-vs-rest per class
};

namespace detail {

// linear interpolation between closest ranks
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  double pos = q * double(v.size() - 1);
  size_t lo = size_t(pos);
  size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - double(lo);
  return v[lo] * (1 - frac) + v[hi] * frac;
}

}  // namespace detail

inline double topk_accuracy(const Tensor& probs, const std::vector<int>& labels, int k) {
  const int64_t n = probs.dim(0), classes = probs.dim(1);
  require(k >= 1 && k < classes, Errc::bad_argument, "top-k needs 1 <= k < numClasses");
  int64_t hit = 0;
  std::vector<int> idx(static_cast<size_t>(classes));
  for (int64_t i = 0; i < n; ++i) {
    const float* row = probs.data() + i * classes;
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return row[a] > row[b]; });
    for (int j = 0; j < k; ++j)
      if (idx[size_t(j)] == labels[size_t(i)]) {
        ++hit;
        break;
      }
  }
  return double(hit) / double(n);
}

// Full still-image report from per-sample probabilities.
inline EvalReport compute_report(const Tensor& probs, const std::vector<int>& labels) {
  const int64_t n = probs.dim(0);
  const int k = int(probs.dim(1));
  require(n > 0, Errc::bad_argument, "empty evaluation set");
  require(int64_t(labels.size()) == n, Errc::bad_argument, "probs/labels size mismatch");
  for (int lb : labels)
    require(lb >= 0 && lb < k, Errc::bad_argument, "label outside the model's classes");

  EvalReport rep;
  rep.confusion = ConfusionMatrix(k);
  std::vector<double> conf_correct, conf_incorrect;
  int64_t second_hits = 0, misses = 0;
  for (int64_t i = 0; i < n; ++i) {
    const float* row = probs.data() + i * k;
    int pred = argmax_row(row, k);
    rep.confusion.add(labels[size_t(i)], pred);
    if (pred == labels[size_t(i)]) {
      conf_correct.push_back(double(row[pred]));
    } else {
      conf_incorrect.push_back(double(row[pred]));
      ++misses;
      // second-highest probability, argmax excluded
      int second = -1;
      for (int j = 0; j < k; ++j)
        if (j != pred && (second < 0 || row[j] > row[second])) second = j;
      if (second == labels[size_t(i)]) ++second_hits;
    }
  }

  rep.overall_accuracy = double(rep.confusion.trace()) / double(n);
  double recall_sum = 0;
  double f_sum = 0, f_sq = 0;
  for (int c = 0; c < k; ++c) {
    ClassMetrics m;
    m.support = rep.confusion.row_sum(c);
    int64_t tp = rep.confusion.at(c, c);
    int64_t fp = rep.confusion.col_sum(c) - tp;
    int64_t fn = m.support - tp;
    m.precision = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
    m.recall = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
    m.f1 = f_score(m.precision, m.recall);
    recall_sum += m.recall;
    f_sum += m.f1;
    f_sq += m.f1 * m.f1;
    rep.per_class.push_back(m);
  }
  rep.average_accuracy = recall_sum / double(k);
  rep.f_mean = f_sum / double(k);
  rep.f_sd = std::sqrt(std::max(0.0, f_sq / double(k) - rep.f_mean * rep.f_mean));

  rep.top1 = rep.overall_accuracy;
  rep.top2 = k >= 3 ? topk_accuracy(probs, labels, 2) : 1.0;
  if (k == 2) rep.top2 = 1.0;
  rep.second_guess_recovery = misses == 0 ? 0.0 : double(second_hits) / double(misses);

  rep.confidence.n_correct = int64_t(conf_correct.size());
  rep.confidence.n_incorrect = int64_t(conf_incorrect.size());
  rep.confidence.median_correct = detail::quantile(conf_correct, 0.5);
  rep.confidence.q1_correct = detail::quantile(conf_correct, 0.25);
  rep.confidence.q3_correct = detail::quantile(conf_correct, 0.75);
  rep.confidence.median_incorrect = detail::quantile(conf_incorrect, 0.5);
  rep.confidence.q1_incorrect = detail::quantile(conf_incorrect, 0.25);
  rep.confidence.q3_incorrect = detail::quantile(conf_incorrect, 0.75);

  // one-vs-rest ROC per class, skipped for classes without both outcomes
  for (int c = 0; c < k; ++c) {
    std::vector<double> scores(static_cast<size_t>(n));
    std::vector<int> binary(static_cast<size_t>(n));
    int64_t pos = 0;
    for (int64_t i = 0; i < n; ++i) {
      scores[size_t(i)] = double(probs.data()[i * k + c]);
      binary[size_t(i)] = labels[size_t(i)] == c ? 1 : 0;
      pos += binary[size_t(i)];
    }
    if (pos == 0 || pos == n)
      rep.roc.push_back(RocCurve{});
    else
      rep.roc.push_back(roc_auc(scores, binary));
    rep.per_class[size_t(c)].auc = rep.roc.back().auc;
  }
  return rep;
}

// Still-image evaluation: per-image argmax over the model's probabilities.
inline EvalReport evaluate_stills(const ModelGraph& model, const Dataset& ds, Split split,
                                  const std::vector<float>& mean) {
  auto idx = ds.indices_of(split);
  require(!idx.empty(), Errc::bad_argument,
          std::string("no samples in the ") + to_string(split) + " split");
  Tensor probs = infer_probs_indexed(model, ds, idx, mean);
  return compute_report(probs, labels_of(ds, idx));
}

struct VoteResult {
  int label = 0;
  std::vector<int> tally;            // per-class frame votes
  std::vector<double> summed_probs;  // per-class probability sums
};

// Plurality over per-frame argmax labels; ties break on summed probability
// across frames, then on the lowest class index.
inline VoteResult majority_vote(const Tensor& frame_probs) {
  const int64_t n = frame_probs.dim(0);
  const int k = int(frame_probs.dim(1));
  require(n >= 1, Errc::bad_argument, "majority vote over an empty frame list");
  VoteResult r;
  r.tally.assign(size_t(k), 0);
  r.summed_probs.assign(size_t(k), 0.0);
  for (int64_t i = 0; i < n; ++i) {
    const float* row = frame_probs.data() + i * k;
    r.tally[size_t(argmax_row(row, k))]++;
    for (int c = 0; c < k; ++c) r.summed_probs[size_t(c)] += double(row[c]);
  }
  int best = 0;
  for (int c = 1; c < k; ++c) {
    if (r.tally[size_t(c)] > r.tally[size_t(best)] ||
        (r.tally[size_t(c)] == r.tally[size_t(best)] &&
         r.summed_probs[size_t(c)] > r.summed_probs[size_t(best)]))
      best = c;
  }
  r.label = best;
  return r;
}

// All frames must belong to one clip; each is mean-subtracted and classified,
// then the votes are tallied.
inline VoteResult classify_video(const ModelGraph& model, const Dataset& ds,
                                 const std::vector<size_t>& frame_idx,
                                 const std::vector<float>& mean) {
  require(!frame_idx.empty(), Errc::bad_argument, "classify_video needs at least one frame");
  const std::string& clip = ds.records[frame_idx[0]].clip_id;
  for (size_t i : frame_idx)
    require(ds.records[i].clip_id == clip, Errc::bad_argument,
            "classify_video frames span different clips");
  Tensor probs = infer_probs_indexed(model, ds, frame_idx, mean);
  return majority_vote(probs);
}

// Groups the split's video frames by clip and majority-votes each clip.
struct VideoEval {
  int64_t clips = 0;
  int64_t correct = 0;
  double accuracy = 0;
};

inline VideoEval evaluate_videos(const ModelGraph& model, const Dataset& ds, Split split,
                                 const std::vector<float>& mean) {
  std::map<std::string, std::vector<size_t>> clips;
  for (size_t i = 0; i < ds.size(); ++i)
    if (ds.records[i].split == split && !ds.records[i].clip_id.empty())
      clips[ds.records[i].clip_id].push_back(i);
  VideoEval ev;
  for (const auto& [clip, frames] : clips) {
    VoteResult vote = classify_video(model, ds, frames, mean);
    ++ev.clips;
    if (vote.label == int(ds.records[frames[0]].label)) ++ev.correct;
  }
  ev.accuracy = ev.clips == 0 ? 0.0 : double(ev.correct) / double(ev.clips);
  return ev;
}

// ---- report writers ------------------------------------------------------

inline void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                                bool percentages) {
  std::ofstream out(path, std::ios::trunc);
  require(bool(out), Errc::io_error, "cannot write " + path.string());
  out << "true\\pred";
  for (int j = 0; j < cm.k; ++j) out << ',' << to_string(ViewLabel(j));
  out << '\n';
  for (int i = 0; i < cm.k; ++i) {
    out << to_string(ViewLabel(i));
    for (int j = 0; j < cm.k; ++j) {
      if (percentages) {
        char buf[32];
        std::snprintf(buf, sizeof buf, ",%.2f", cm.row_pct(i, j));
        out << buf;
      } else {
        out << ',' << cm.at(i, j);
      }
    }
    out << '\n';
  }
}

inline void write_per_class_csv(const std::filesystem::path& path, const EvalReport& rep) {
  std::ofstream out(path, std::ios::trunc);
  require(bool(out), Errc::io_error, "cannot write " + path.string());
  out << "view,support,precision,recall,f1,auc\n";
  for (size_t c = 0; c < rep.per_class.size(); ++c) {
    const auto& m = rep.per_class[c];
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%lld,%.6f,%.6f,%.6f,%.6f\n",
                  to_string(ViewLabel(int(c))), (long long)m.support, m.precision, m.recall, m.f1,
                  m.auc);
    out << buf;
  }
}

inline void write_roc_csv(const std::filesystem::path& path, const RocCurve& roc) {
  std::ofstream out(path, std::ios::trunc);
  require(bool(out), Errc::io_error, "cannot write " + path.string());
  out << "fpr,tpr\n";
  for (const auto& p : roc.points) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9f,%.9f\n", p.fpr, p.tpr);
    out << buf;
  }
}

inline void write_summary(const std::filesystem::path& path, const EvalReport& rep) {
  std::ofstream out(path, std::ios::trunc);
  require(bool(out), Errc::io_error, "cannot write " + path.string());
  char buf[256];
  auto kv = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%s=%.6f\n", key, v);
    out << buf;
  };
  kv("overall_accuracy", rep.overall_accuracy);
  kv("average_accuracy", rep.average_accuracy);
  kv("f_mean", rep.f_mean);
  kv("f_sd", rep.f_sd);
  kv("top1", rep.top1);
  kv("top2", rep.top2);
  kv("second_guess_recovery", rep.second_guess_recovery);
  kv("confidence_median_correct", rep.confidence.median_correct);
  kv("confidence_q1_correct", rep.confidence.q1_correct);
  kv("confidence_q3_correct", rep.confidence.q3_correct);
  kv("confidence_median_incorrect", rep.confidence.median_incorrect);
  kv("confidence_q1_incorrect", rep.confidence.q1_incorrect);
  kv("confidence_q3_incorrect", rep.confidence.q3_incorrect);
  out << "samples=" << rep.confusion.total() << '\n';
}

}  // namespace echoview
