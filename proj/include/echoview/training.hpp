#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "echoview/augment.hpp"
#include "echoview/inference.hpp"
#include "echoview/model.hpp"

namespace echoview {

struct TrainConfig {
  int epochs = 45;
  int batch_size = 64;
  float initial_lr = 1e-3f;
  float lr_decay = 0.95f;  // lr(e) = initial_lr * lr_decay^(e-1)
  float rmsprop_rho = 0.9f;
  float rmsprop_eps = 1e-8f;
  float bn_momentum = 0.99f;  // paper-scale default; drop toward 0.9 when
                              // a run has only a few hundred batches total
  int k_folds = 5;
  uint64_t seed = 1;
  AugmentParams augment;
  bool augment_enabled = true;

  void validate() const {
    require(epochs >= 1, Errc::bad_argument, "epochs must be >= 1");
    require(batch_size >= 2, Errc::bad_argument,
            "batch size must be >= 2 (batch-norm needs a batch)");
    augment.validate();
  }
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0, train_acc = 0;
  double val_loss = 0, val_acc = 0;
  double lr = 0;
  bool selected = false;
};

struct ConvergenceLog {
  std::vector<EpochStats> epochs;
  int selected_epoch = 0;  // 1-based

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    require(bool(out), Errc::io_error, "cannot write " + path.string());
    out << "epoch,train_loss,train_acc,val_loss,val_acc,lr,selected\n";
    char buf[160];
    for (const auto& e : epochs) {
      std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f,%.8f,%d\n", e.epoch, e.train_loss,
                    e.train_acc, e.val_loss, e.val_acc, e.lr, e.selected ? 1 : 0);
      out << buf;
    }
    require(bool(out), Errc::io_error, "short write: " + path.string());
  }
};

// accumulator <- rho * accumulator + (1 - rho) * grad^2
// param       <- param - lr * grad / sqrt(accumulator + eps)
inline void rmsprop_step(Tensor& param, const Tensor& grad, Tensor& acc, float lr, float rho,
                         float eps) {
  require(param.same_shape(grad) && param.same_shape(acc), Errc::shape_mismatch,
          "rmsprop state/gradient shape mismatch");
  for (int64_t i = 0; i < param.size(); ++i) {
    acc[i] = rho * acc[i] + (1.0f - rho) * grad[i] * grad[i];
    param[i] -= lr * grad[i] / std::sqrt(acc[i] + eps);
  }
}

struct TrainResult {
  ModelGraph model;
  ConvergenceLog log;
  std::vector<float> training_mean;
};

namespace detail {

inline void check_training_labels(const Dataset& ds, const std::vector<size_t>& train_idx,
                                  const std::vector<size_t>& val_idx, int num_classes) {
  require(!train_idx.empty(), Errc::bad_argument, "training split is empty");
  require(!val_idx.empty(), Errc::bad_argument, "validation split is empty");
  std::set<int> seen;
  for (size_t i : train_idx) {
    int lb = int(ds.records[i].label);
    require(lb >= 0 && lb < num_classes, Errc::bad_argument,
            "label " + std::string(to_string(ds.records[i].label)) + " outside the model's " +
                std::to_string(num_classes) + " classes");
    seen.insert(lb);
  }
  for (size_t i : val_idx)
    require(int(ds.records[i].label) < num_classes, Errc::bad_argument,
            "validation label outside the model's classes");
  for (int c = 0; c < num_classes; ++c)
    require(seen.count(c) != 0, Errc::bad_argument,
            "class " + std::string(to_string(ViewLabel(c))) + " absent from the training set");
}

}  // namespace detail

// The training loop: per-epoch shuffled batches, run-time augmentation on
// raw images before mean subtraction, RMSprop with exponential
// learning-rate decay, and best-validation-epoch weight selection (ties
// resolve to the earliest epoch).
inline TrainResult train(const ModelGraph& init, const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  auto train_idx = ds.indices_of(Split::train);
  auto val_idx = ds.indices_of(Split::val);
  detail::check_training_labels(ds, train_idx, val_idx, init.num_classes());

  TrainResult result;
  result.training_mean = ds.training_mean.empty() ? compute_training_mean(ds) : ds.training_mean;
  const auto& mean = result.training_mean;
  const int k = init.num_classes();

  ModelGraph model = init.clone();
  auto params = model.parameters();
  std::vector<Tensor> rms_acc;
  rms_acc.reserve(params.size());
  for (auto& p : params) rms_acc.emplace_back(p.tensor->shape());

  std::vector<int> val_labels = labels_of(ds, val_idx);
  double best_val = -1;
  ModelGraph best_model;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    float lr = cfg.initial_lr * std::pow(cfg.lr_decay, float(epoch - 1));
    auto order = train_idx;
    Rng shuffle_rng = derive_rng(cfg.seed, {0x54F1u, uint64_t(epoch)});
    shuffle_rng.shuffle(order);

    double epoch_loss = 0;
    int64_t epoch_correct = 0, epoch_seen = 0;

    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
      size_t n = std::min(size_t(cfg.batch_size), order.size() - start);
      if (n < 2) break;  // a trailing single sample cannot be batch-normalized

      Tensor batch({int64_t(n), 1, kImageH, kImageW});
      std::vector<int> labels(n);
      parallel_for(int64_t(n), [&](int64_t i) {
        size_t idx = order[start + size_t(i)];
        std::vector<float> img = ds.images[idx];
        if (cfg.augment_enabled) {
          Rng arng =
              derive_rng(cfg.seed, {0xA46u, uint64_t(epoch), uint64_t(start + size_t(i))});
          img = augment(img, cfg.augment, arng);
        }
        float* dst = batch.data() + i * kImagePixels;
        for (int p = 0; p < kImagePixels; ++p) dst[p] = img[size_t(p)] - mean[size_t(p)];
        labels[size_t(i)] = int(ds.records[idx].label);
      });

      GradTape tape;
      Rng drop_rng = derive_rng(cfg.seed, {0xD801u, uint64_t(epoch), uint64_t(start)});
      auto input = tape.track(std::move(batch));
      auto logits =
          model.forward(&tape, input, RunMode::train, &drop_rng, nullptr, cfg.bn_momentum);
      auto sx = softmax_crossentropy<float>(&tape, logits, labels);
      tape.backward(sx.loss);

      epoch_loss += double((*sx.loss.value)[0]) * double(n);
      for (size_t i = 0; i < n; ++i)
        if (argmax_row(sx.probs.data() + int64_t(i) * k, k) == labels[i]) ++epoch_correct;
      epoch_seen += int64_t(n);

      for (size_t pi = 0; pi < params.size(); ++pi) {
        auto grad = tape.grad_of(params[pi].tensor.get());
        require(grad != nullptr, Errc::bad_argument,
                "parameter " + params[pi].name + " missing from the tape");
        require(grad->all_finite(), Errc::numeric_error,
                "NaN gradient in " + params[pi].name + " at epoch " + std::to_string(epoch) +
                    ", training aborted");
        rmsprop_step(*params[pi].tensor, *grad, rms_acc[pi], lr, cfg.rmsprop_rho,
                     cfg.rmsprop_eps);
      }
    }

    Tensor val_probs = infer_probs_indexed(model, ds, val_idx, mean, cfg.batch_size);
    EvalStats vs = stats_from_probs(val_probs, val_labels);

    EpochStats es;
    es.epoch = epoch;
    es.train_loss = epoch_seen ? epoch_loss / double(epoch_seen) : 0.0;
    es.train_acc = epoch_seen ? double(epoch_correct) / double(epoch_seen) : 0.0;
    es.val_loss = vs.loss;
    es.val_acc = vs.accuracy;
    es.lr = double(lr);
    result.log.epochs.push_back(es);

    if (vs.accuracy > best_val) {
      best_val = vs.accuracy;
      best_model = model.clone();
      result.log.selected_epoch = epoch;
    }
  }

  for (auto& e : result.log.epochs) e.selected = e.epoch == result.log.selected_epoch;
  result.model = best_model;
  return result;
}

struct KfoldResult {
  TrainResult best;
  int best_fold = 0;  // 0-based
  std::vector<ConvergenceLog> fold_logs;
};

// Folds partition the non-test studies; fold i validates on studies with
// shuffled position % k == i and trains on the rest. The fold with the
// highest selected-epoch validation accuracy wins (ties: lowest fold).
inline KfoldResult kfold_select(const ModelGraph& init, const Dataset& ds,
                                const TrainConfig& cfg) {
  require(cfg.k_folds >= 2, Errc::bad_argument, "k-fold selection needs k >= 2");
  std::vector<std::string> pool;
  for (const auto& id : ds.study_ids()) {
    bool is_test = false;
    for (const auto& r : ds.records)
      if (r.study_id == id && r.split == Split::test) is_test = true;
    if (!is_test) pool.push_back(id);
  }
  require(int(pool.size()) >= cfg.k_folds, Errc::bad_argument,
          "fewer studies (" + std::to_string(pool.size()) + ") than folds (" +
              std::to_string(cfg.k_folds) + ")");
  Rng rng = derive_rng(cfg.seed, {0xF01Du});
  rng.shuffle(pool);

  KfoldResult out;
  double best_acc = -1;
  for (int fold = 0; fold < cfg.k_folds; ++fold) {
    std::set<std::string> val_studies;
    for (size_t i = 0; i < pool.size(); ++i)
      if (int(i) % cfg.k_folds == fold) val_studies.insert(pool[i]);

    Dataset fold_ds = ds;
    fold_ds.training_mean.clear();
    for (auto& r : fold_ds.records) {
      if (r.split == Split::test) continue;
      r.split = val_studies.count(r.study_id) ? Split::val : Split::train;
    }
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = derive_stream(cfg.seed, {0xF01Du, uint64_t(fold)});
    TrainResult tr = train(init, fold_ds, fold_cfg);
    double acc = tr.log.epochs[size_t(tr.log.selected_epoch - 1)].val_acc;
    out.fold_logs.push_back(tr.log);
    if (acc > best_acc) {
      best_acc = acc;
      out.best = std::move(tr);
      out.best_fold = fold;
    }
  }
  return out;
}

// Negative control: the train/val labels are shuffled (one seeded uniform
// permutation over the non-test records) before ordinary training.
inline TrainResult random_label_control(const ModelGraph& init, const Dataset& ds,
                                        const TrainConfig& cfg) {
  Dataset shuffled = ds;
  std::vector<size_t> idx;
  for (size_t i = 0; i < shuffled.size(); ++i)
    if (shuffled.records[i].split == Split::train || shuffled.records[i].split == Split::val)
      idx.push_back(i);
  std::vector<ViewLabel> labels;
  labels.reserve(idx.size());
  for (size_t i : idx) labels.push_back(shuffled.records[i].label);
  Rng rng = derive_rng(cfg.seed, {0x5AB3u});
  rng.shuffle(labels);
  for (size_t i = 0; i < idx.size(); ++i) shuffled.records[idx[i]].label = labels[i];
  return train(init, shuffled, cfg);
}

}  // namespace echoview
