// echoview: command-line front end for the view-classification pipeline.
//
// Subcommands: synth, ingest, split, train, eval, classify, classify-video,
// occlude, saliency, embed, control. Every run writes its artifacts plus a
// config echo and a run manifest (seed, wall time, artifact checksums) into
// --out. All randomness derives from the single --seed flag.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

#include "echoview/blas_tuning.hpp"
#include "echoview/dataset.hpp"
#include "echoview/image.hpp"
#include "echoview/interpret.hpp"
#include "echoview/metrics.hpp"
#include "echoview/model.hpp"
#include "echoview/phantom.hpp"
#include "echoview/training.hpp"
#include "echoview/tsne.hpp"
#include "echoview/weights_io.hpp"

namespace fs = std::filesystem;
using namespace echoview;

namespace {

int exit_code_for(Errc c) {
  switch (c) {
    case Errc::io_missing: return 3;
    case Errc::bad_format:
    case Errc::io_error: return 4;
    case Errc::checksum_mismatch: return 5;
    case Errc::fingerprint_mismatch: return 6;
    case Errc::bad_argument:
    case Errc::shape_mismatch: return 7;
    case Errc::numeric_error: return 8;
  }
  return 9;
}

// One run directory: artifacts + config echo + run manifest.
struct RunContext {
  fs::path out;
  std::string command;
  uint64_t seed = 1;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  std::vector<std::string> manifest_lines;

  void open(const std::string& cmd, const std::string& config_echo) {
    command = cmd;
    fs::create_directories(out);
    std::ofstream echo(out / "config.echo", std::ios::trunc);
    require(bool(echo), Errc::io_error, "cannot write " + (out / "config.echo").string());
    echo << config_echo;
  }

  void note_artifact(const fs::path& rel) {
    char buf[512];
    fs::path full = out / rel;
    std::snprintf(buf, sizeof buf, "artifact=%s crc32=%08x size=%llu", rel.generic_string().c_str(),
                  crc32_file(full), (unsigned long long)fs::file_size(full));
    manifest_lines.push_back(buf);
  }

  void note_line(const std::string& line) { manifest_lines.push_back(line); }

  void close() {
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream rm(out / "run_manifest.txt", std::ios::trunc);
    rm << "command=" << command << '\n';
    rm << "seed=" << seed << '\n';
    char buf[64];
    std::snprintf(buf, sizeof buf, "wall_time_s=%.3f", wall);
    rm << buf << '\n';
    for (const auto& l : manifest_lines) rm << l << '\n';
  }
};

std::vector<MaskRect> parse_mask_rects(const std::string& spec) {
  std::vector<MaskRect> rects;
  if (spec.empty()) return rects;
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ';')) {
    MaskRect r;
    if (std::sscanf(part.c_str(), "%d,%d,%d,%d", &r.x, &r.y, &r.w, &r.h) != 4)
      fail(Errc::bad_argument, "mask rectangle must be x,y,w,h — got '" + part + "'");
    rects.push_back(r);
  }
  return rects;
}

Dataset load_dataset_checked(const fs::path& manifest) {
  require(fs::exists(manifest), Errc::io_missing, "no such manifest: " + manifest.string());
  return load_dataset(manifest);
}

ModelGraph load_model_checked(const fs::path& weights, int classes) {
  return load_weights(weights, classes);
}

std::vector<float> load_mean_checked(const fs::path& mean_path) {
  return read_f32(mean_path, size_t(kImagePixels));
}

void write_dataset_images(const Dataset& ds, const fs::path& dir, RunContext& ctx) {
  fs::create_directories(dir / "images");
  uint32_t combined = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    fs::path p = dir / ds.records[i].path;
    write_pgm(p, quantize_to_pgm(ds.images[i].data(), kImageH, kImageW));
    uint32_t crc = crc32_file(p);
    combined = crc32(reinterpret_cast<const uint8_t*>(&crc), 4, combined);
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "artifact=images/ crc32=%08x files=%zu", combined, ds.size());
  ctx.note_line(buf);
}

Split split_from_flag(const std::string& s) {
  auto v = split_from_string(s);
  require(v.has_value() && *v != Split::unassigned, Errc::bad_argument,
          "unknown split '" + s + "' (use train, val or test)");
  return *v;
}

void write_eval_outputs(const EvalReport& rep, RunContext& ctx) {
  write_confusion_csv(ctx.out / "confusion_counts.csv", rep.confusion, false);
  write_confusion_csv(ctx.out / "confusion_row_pct.csv", rep.confusion, true);
  write_per_class_csv(ctx.out / "per_class_metrics.csv", rep);
  ctx.note_artifact("confusion_counts.csv");
  ctx.note_artifact("confusion_row_pct.csv");
  ctx.note_artifact("per_class_metrics.csv");
  for (size_t c = 0; c < rep.roc.size(); ++c) {
    if (rep.roc[c].points.empty()) continue;
    std::string name = std::string("roc_") + to_string(ViewLabel(int(c))) + ".csv";
    write_roc_csv(ctx.out / name, rep.roc[c]);
    ctx.note_artifact(name);
  }
}

}  // namespace

int main(int argc, char** argv) {
  ensure_fast_blas(argv);

  CLI::App app{"echoview: echocardiogram view classification on 60x80 frames"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; command-line flags override it");

  // shared per-subcommand state
  std::string out_dir = "run";
  uint64_t seed = 1;
  int threads = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", out_dir, "output directory for artifacts");
    sub->add_option("--seed", seed, "seed for all randomness in this run");
    sub->add_option("--threads", threads, "worker threads (0 = hardware default)");
  };

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "generate a phantom-view dataset");
  PhantomConfig phantom;
  synth->add_option("--studies", phantom.studies, "number of studies (patients)");
  synth->add_option("--clips-per-study", phantom.clips_per_study, "clips per study per view");
  synth->add_option("--frames-per-clip", phantom.frames_per_clip, "frames per clip");
  synth->add_option("--classes", phantom.classes, "number of view classes (2..15)");
  synth->add_option("--jitter", phantom.jitter, "jitter scale (0 = pure templates)");
  add_common(synth);

  // ---- ingest ----
  auto* ingest = app.add_subcommand("ingest", "anonymize and standardize one raster frame");
  std::string ingest_input, ingest_mask;
  int raw_w = 0, raw_h = 0;
  ingest->add_option("--input", ingest_input, "input image: binary PGM (P5) or raw 8-bit")
      ->required();
  ingest->add_option("--mask", ingest_mask, "anonymization rectangles \"x,y,w,h;x,y,w,h\"");
  ingest->add_option("--raw-width", raw_w, "width for raw 8-bit input");
  ingest->add_option("--raw-height", raw_h, "height for raw 8-bit input");
  add_common(ingest);

  // ---- split ----
  auto* split_cmd = app.add_subcommand("split", "assign study-level train/val/test splits");
  std::string split_manifest, ratios = "80:10:10";
  split_cmd->add_option("--manifest", split_manifest, "dataset manifest")->required();
  split_cmd->add_option("--ratios", ratios, "train:val:test ratio, e.g. 80:10:10");
  add_common(split_cmd);

  // ---- train / control ----
  TrainConfig tc;
  std::string train_manifest;
  int classes = kNumViews;
  int kfold = 0;
  bool no_augment = false;
  auto add_train_opts = [&](CLI::App* sub) {
    sub->add_option("--manifest", train_manifest, "dataset manifest with splits")->required();
    sub->add_option("--classes", classes, "number of classes (2..15)");
    sub->add_option("--epochs", tc.epochs, "training epochs");
    sub->add_option("--batch-size", tc.batch_size, "samples per gradient step");
    sub->add_option("--lr", tc.initial_lr, "initial learning rate");
    sub->add_option("--lr-decay", tc.lr_decay, "per-epoch learning-rate decay factor");
    sub->add_option("--rho", tc.rmsprop_rho, "RMSprop accumulator decay");
    sub->add_option("--bn-momentum", tc.bn_momentum,
                    "batch-norm running-average momentum (lower it for short runs)");
    sub->add_option("--eps", tc.rmsprop_eps, "RMSprop epsilon");
    sub->add_flag("--no-augment", no_augment, "disable run-time augmentation");
    sub->add_option("--max-rotation", tc.augment.max_rotation_deg, "augmentation rotation bound");
    sub->add_option("--max-shift", tc.augment.max_shift_fraction, "augmentation shift bound");
    sub->add_option("--max-zoom", tc.augment.max_zoom, "augmentation zoom bound");
    sub->add_option("--max-shear", tc.augment.max_shear, "augmentation shear bound");
    sub->add_flag("!--no-flips", tc.augment.allow_flips, "disable augmentation flips");
    add_common(sub);
  };
  auto* train_cmd = app.add_subcommand("train", "train the view classifier");
  train_cmd->add_option("--kfold", kfold, "k-fold model selection (0 = single split)");
  add_train_opts(train_cmd);
  auto* control_cmd =
      app.add_subcommand("control", "random-label negative control training");
  add_train_opts(control_cmd);

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained model");
  std::string eval_manifest, weights_path, mean_path, eval_split = "test";
  eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest with splits")->required();
  eval_cmd->add_option("--weights", weights_path, "trained weight file")->required();
  eval_cmd->add_option("--mean", mean_path, "training-mean sidecar (.f32)")->required();
  eval_cmd->add_option("--classes", classes, "number of classes (2..15)");
  eval_cmd->add_option("--split", eval_split, "split to evaluate (train/val/test)");
  add_common(eval_cmd);

  // ---- classify ----
  auto* classify_cmd = app.add_subcommand("classify", "classify one 60x80 still image");
  std::string image_path;
  classify_cmd->add_option("--image", image_path, "input PGM image")->required();
  classify_cmd->add_option("--weights", weights_path, "trained weight file")->required();
  classify_cmd->add_option("--mean", mean_path, "training-mean sidecar (.f32)")->required();
  classify_cmd->add_option("--classes", classes, "number of classes (2..15)");
  add_common(classify_cmd);

  // ---- classify-video ----
  auto* video_cmd = app.add_subcommand("classify-video", "majority-vote a clip's frames");
  std::string clip_id;
  video_cmd->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  video_cmd->add_option("--clip", clip_id, "clip id from the manifest")->required();
  video_cmd->add_option("--weights", weights_path, "trained weight file")->required();
  video_cmd->add_option("--mean", mean_path, "training-mean sidecar (.f32)")->required();
  video_cmd->add_option("--classes", classes, "number of classes (2..15)");
  add_common(video_cmd);

  // ---- occlude ----
  auto* occlude_cmd = app.add_subcommand("occlude", "occlusion sensitivity experiment");
  std::string mask_names, occl_split = "test";
  occlude_cmd->add_option("--manifest", eval_manifest, "dataset manifest with splits")
      ->required();
  occlude_cmd->add_option("--weights", weights_path, "trained weight file")->required();
  occlude_cmd->add_option("--mean", mean_path, "training-mean sidecar (.f32)")->required();
  occlude_cmd->add_option("--classes", classes, "number of classes (2..15)");
  occlude_cmd->add_option("--split", occl_split, "split to evaluate (train/val/test)");
  occlude_cmd->add_option("--masks", mask_names,
                          "comma-separated subset of the standard masks (default: all)");
  add_common(occlude_cmd);

  // ---- saliency ----
  auto* saliency_cmd = app.add_subcommand("saliency", "guided-backprop saliency map");
  std::string target_view;
  saliency_cmd->add_option("--image", image_path, "input PGM image")->required();
  saliency_cmd->add_option("--weights", weights_path, "trained weight file")->required();
  saliency_cmd->add_option("--mean", mean_path, "training-mean sidecar (.f32)")->required();
  saliency_cmd->add_option("--classes", classes, "number of classes (2..15)");
  saliency_cmd->add_option("--target", target_view,
                           "target view name (default: the predicted view)");
  add_common(saliency_cmd);

  // ---- embed ----
  auto* embed_cmd = app.add_subcommand("embed", "t-SNE embedding of raw pixels or features");
  std::string feature_kind = "lastfc", embed_split = "all";
  TsneParams tsne;
  int max_samples = 750;
  embed_cmd->add_option("--manifest", eval_manifest, "dataset manifest")->required();
  embed_cmd->add_option("--features", feature_kind, "raw | lastfc");
  embed_cmd->add_option("--weights", weights_path, "trained weight file (for lastfc)");
  embed_cmd->add_option("--mean", mean_path, "training-mean sidecar (for lastfc)");
  embed_cmd->add_option("--classes", classes, "number of classes (2..15)");
  embed_cmd->add_option("--split", embed_split, "all or train/val/test");
  embed_cmd->add_option("--perplexity", tsne.perplexity, "t-SNE perplexity");
  embed_cmd->add_option("--iterations", tsne.iterations, "t-SNE iterations");
  embed_cmd->add_option("--max-samples", max_samples, "stratified sample cap (<= 2000)");
  add_common(embed_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp")
      return app.exit(e);
    std::cerr << "error code=usage msg=\"" << e.what() << "\"\n";
    return 2;
  }

  try {
    set_threads(threads);
    RunContext ctx;
    ctx.out = out_dir;
    ctx.seed = seed;

    if (*synth) {
      phantom.seed = seed;
      ctx.open("synth", app.config_to_str(true, false));
      Dataset ds = generate_phantoms(phantom);
      write_dataset_images(ds, ctx.out, ctx);
      write_manifest(ctx.out / "manifest.csv", ds);
      ctx.note_artifact("manifest.csv");
      ctx.close();
      std::cout << "synth: " << ds.size() << " images, " << phantom.studies << " studies -> "
                << ctx.out.string() << "\n";
    } else if (*ingest) {
      ctx.open("ingest", app.config_to_str(true, false));
      RasterU8 raster;
      if (raw_w > 0 || raw_h > 0) {
        require(raw_w > 0 && raw_h > 0, Errc::bad_argument,
                "raw input needs both --raw-width and --raw-height");
        raster = read_raw8(ingest_input, raw_h, raw_w);
      } else {
        raster = read_pgm(ingest_input);
      }
      auto frame = ingest_frame(raster, parse_mask_rects(ingest_mask));
      write_pgm(ctx.out / "frame.pgm", quantize_to_pgm(frame.data(), kImageH, kImageW));
      write_f32(ctx.out / "frame.f32", frame.data(), frame.size());
      ctx.note_artifact("frame.pgm");
      ctx.note_artifact("frame.f32");
      ctx.close();
      std::cout << "ingest: " << raster.w << "x" << raster.h << " -> 80x60 frame\n";
    } else if (*split_cmd) {
      ctx.open("split", app.config_to_str(true, false));
      double r[3];
      require(std::sscanf(ratios.c_str(), "%lf:%lf:%lf", &r[0], &r[1], &r[2]) == 3,
              Errc::bad_argument, "ratios must look like 80:10:10");
      Dataset ds = read_manifest(split_manifest);
      // resolve paths against the source manifest so the new one stays valid
      fs::path base = fs::absolute(fs::path(split_manifest)).parent_path();
      for (auto& rec : ds.records)
        if (fs::path(rec.path).is_relative()) rec.path = (base / rec.path).generic_string();
      split_by_study(ds, r[0], r[1], r[2], seed);
      write_manifest(ctx.out / "manifest.csv", ds);
      ctx.note_artifact("manifest.csv");
      ctx.close();
      auto count = [&](Split s) { return ds.indices_of(s).size(); };
      std::cout << "split: train=" << count(Split::train) << " val=" << count(Split::val)
                << " test=" << count(Split::test) << "\n";
    } else if (*train_cmd || *control_cmd) {
      bool is_control = bool(*control_cmd);
      ctx.open(is_control ? "control" : "train", app.config_to_str(true, false));
      tc.seed = seed;
      tc.augment_enabled = !no_augment;
      Dataset ds = load_dataset_checked(train_manifest);
      ModelGraph init = ModelGraph::build(classes, seed);

      TrainResult result;
      if (is_control) {
        result = random_label_control(init, ds, tc);
      } else if (kfold > 0) {
        TrainConfig kc = tc;
        kc.k_folds = kfold;
        KfoldResult kr = kfold_select(init, ds, kc);
        for (size_t f = 0; f < kr.fold_logs.size(); ++f) {
          std::string name = "fold_" + std::to_string(f) + "_convergence.csv";
          kr.fold_logs[f].write_csv(ctx.out / name);
          ctx.note_artifact(name);
        }
        ctx.note_line("best_fold=" + std::to_string(kr.best_fold));
        result = std::move(kr.best);
      } else {
        result = train(init, ds, tc);
      }

      save_weights(result.model, ctx.out / "weights.echv");
      write_f32(ctx.out / "mean.f32", result.training_mean.data(), result.training_mean.size());
      write_pgm(ctx.out / "mean.pgm",
                quantize_to_pgm(result.training_mean.data(), kImageH, kImageW));
      result.log.write_csv(ctx.out / "convergence.csv");
      ctx.note_artifact("weights.echv");
      ctx.note_artifact("mean.f32");
      ctx.note_artifact("mean.pgm");
      ctx.note_artifact("convergence.csv");
      ctx.close();
      const auto& sel = result.log.epochs[size_t(result.log.selected_epoch - 1)];
      std::cout << (is_control ? "control" : "train") << ": selected epoch " << sel.epoch
                << " val_acc=" << sel.val_acc << "\n";
    } else if (*eval_cmd) {
      ctx.open("eval", app.config_to_str(true, false));
      Dataset ds = load_dataset_checked(eval_manifest);
      ModelGraph model = load_model_checked(weights_path, classes);
      auto mean = load_mean_checked(mean_path);
      Split sp = split_from_flag(eval_split);
      EvalReport rep = evaluate_stills(model, ds, sp, mean);
      write_eval_outputs(rep, ctx);
      VideoEval video = evaluate_videos(model, ds, sp, mean);
      {
        write_summary(ctx.out / "summary.txt", rep);
        std::ofstream sum(ctx.out / "summary.txt", std::ios::app);
        sum << "video_clips=" << video.clips << '\n';
        char buf[64];
        std::snprintf(buf, sizeof buf, "video_accuracy=%.6f", video.accuracy);
        sum << buf << '\n';
      }
      ctx.note_artifact("summary.txt");
      ctx.close();
      std::cout << "eval: overall_accuracy=" << rep.overall_accuracy
                << " video_accuracy=" << video.accuracy << " (" << video.clips << " clips)\n";
    } else if (*classify_cmd) {
      ctx.open("classify", app.config_to_str(true, false));
      ModelGraph model = load_model_checked(weights_path, classes);
      auto mean = load_mean_checked(mean_path);
      auto frame = ingest_frame(read_pgm(image_path));
      subtract_mean(frame, mean);
      auto probs = model.classify_image(frame);
      int pred = argmax_row(probs.data(), int64_t(probs.size()));
      std::ofstream out(ctx.out / "prediction.txt", std::ios::trunc);
      out << "view=" << to_string(ViewLabel(pred)) << '\n';
      out << "confidence=" << probs[size_t(pred)] << '\n';
      for (size_t c = 0; c < probs.size(); ++c)
        out << "p_" << to_string(ViewLabel(int(c))) << "=" << probs[c] << '\n';
      out.close();
      ctx.note_artifact("prediction.txt");
      ctx.close();
      std::cout << "view=" << to_string(ViewLabel(pred)) << " confidence=" << probs[size_t(pred)]
                << "\n";
    } else if (*video_cmd) {
      ctx.open("classify-video", app.config_to_str(true, false));
      Dataset ds = load_dataset_checked(eval_manifest);
      ModelGraph model = load_model_checked(weights_path, classes);
      auto mean = load_mean_checked(mean_path);
      std::vector<size_t> frames;
      for (size_t i = 0; i < ds.size(); ++i)
        if (ds.records[i].clip_id == clip_id) frames.push_back(i);
      require(!frames.empty(), Errc::bad_argument, "no frames for clip '" + clip_id + "'");
      VoteResult vote = classify_video(model, ds, frames, mean);
      std::ofstream out(ctx.out / "vote.txt", std::ios::trunc);
      out << "clip=" << clip_id << '\n';
      out << "view=" << to_string(ViewLabel(vote.label)) << '\n';
      for (size_t c = 0; c < vote.tally.size(); ++c)
        if (vote.tally[c])
          out << "votes_" << to_string(ViewLabel(int(c))) << "=" << vote.tally[c] << '\n';
      out.close();
      ctx.note_artifact("vote.txt");
      ctx.close();
      std::cout << "clip=" << clip_id << " view=" << to_string(ViewLabel(vote.label)) << " ("
                << vote.tally[size_t(vote.label)] << "/" << frames.size() << " frames)\n";
    } else if (*occlude_cmd) {
      ctx.open("occlude", app.config_to_str(true, false));
      Dataset ds = load_dataset_checked(eval_manifest);
      ModelGraph model = load_model_checked(weights_path, classes);
      auto mean = load_mean_checked(mean_path);
      OcclusionSpec spec = OcclusionSpec::standard();
      if (!mask_names.empty()) {
        std::set<std::string> want;
        std::stringstream ss(mask_names);
        std::string tok;
        while (std::getline(ss, tok, ',')) want.insert(tok);
        OcclusionSpec filtered;
        for (auto& m : spec.masks)
          if (want.count(m.name)) filtered.masks.push_back(m);
        require(filtered.masks.size() == want.size(), Errc::bad_argument,
                "unknown mask name in --masks");
        spec = filtered;
      }
      OcclusionTable table =
          occlusion_experiment(model, ds, split_from_flag(occl_split), spec, mean);
      table.write_csv(ctx.out / "occlusion.csv");
      ctx.note_artifact("occlusion.csv");
      ctx.close();
      std::cout << "occlude: baseline=" << table.baseline_accuracy << " over "
                << table.rows.size() << " masks\n";
    } else if (*saliency_cmd) {
      ctx.open("saliency", app.config_to_str(true, false));
      ModelGraph model = load_model_checked(weights_path, classes);
      auto mean = load_mean_checked(mean_path);
      auto frame = ingest_frame(read_pgm(image_path));
      int target;
      if (target_view.empty()) {
        auto normalized = frame;
        subtract_mean(normalized, mean);
        auto probs = model.classify_image(normalized);
        target = argmax_row(probs.data(), int64_t(probs.size()));
      } else {
        auto v = view_from_string(target_view);
        require(v.has_value(), Errc::bad_argument, "unknown view '" + target_view + "'");
        target = int(*v);
      }
      SaliencyMap map = guided_backprop_saliency(model, frame, mean, target);
      write_pgm(ctx.out / "saliency.pgm", quantize_to_pgm(map.values.data(), kImageH, kImageW));
      write_f32(ctx.out / "saliency.f32", map.values.data(), map.values.size());
      ctx.note_artifact("saliency.pgm");
      ctx.note_artifact("saliency.f32");
      ctx.close();
      std::cout << "saliency: target=" << to_string(ViewLabel(target)) << "\n";
    } else if (*embed_cmd) {
      ctx.open("embed", app.config_to_str(true, false));
      tsne.seed = seed;
      Dataset ds = load_dataset_checked(eval_manifest);
      std::vector<size_t> pool;
      if (embed_split == "all") {
        pool.resize(ds.size());
        for (size_t i = 0; i < ds.size(); ++i) pool[i] = i;
      } else {
        pool = ds.indices_of(split_from_flag(embed_split));
      }
      require(!pool.empty(), Errc::bad_argument, "no samples selected for embedding");

      // stratified cap: seeded shuffle inside each class, then round-robin
      std::map<int, std::vector<size_t>> per_class;
      for (size_t i : pool) per_class[int(ds.records[i].label)].push_back(i);
      Rng rng = derive_rng(seed, {0x3D5u});
      for (auto& [c, v] : per_class) rng.shuffle(v);
      std::vector<size_t> chosen;
      for (size_t round = 0; int64_t(chosen.size()) < max_samples; ++round) {
        bool any = false;
        for (auto& [c, v] : per_class) {
          if (round < v.size() && int64_t(chosen.size()) < max_samples) {
            chosen.push_back(v[round]);
            any = true;
          }
        }
        if (!any) break;
      }
      std::sort(chosen.begin(), chosen.end());

      Tensor features;
      if (feature_kind == "raw") {
        features = Tensor({int64_t(chosen.size()), kImagePixels});
        for (size_t i = 0; i < chosen.size(); ++i)
          std::copy(ds.images[chosen[i]].begin(), ds.images[chosen[i]].end(),
                    features.data() + int64_t(i) * kImagePixels);
      } else if (feature_kind == "lastfc") {
        require(!weights_path.empty() && !mean_path.empty(), Errc::bad_argument,
                "lastfc features need --weights and --mean");
        ModelGraph model = load_model_checked(weights_path, classes);
        auto mean = load_mean_checked(mean_path);
        features = extract_features(model, ds, chosen, mean);
      } else {
        fail(Errc::bad_argument, "--features must be raw or lastfc");
      }

      TsneResult res = tsne_embed(features, tsne);
      std::ofstream out(ctx.out / "embedding.csv", std::ios::trunc);
      out << "sample_id,label,x,y\n";
      for (size_t i = 0; i < chosen.size(); ++i) {
        char buf[256];
        std::snprintf(buf, sizeof buf, "%s,%s,%.6f,%.6f\n", ds.records[chosen[i]].path.c_str(),
                      to_string(ds.records[chosen[i]].label), res.y[i * 2 + 1], res.y[i * 2]);
        out << buf;
      }
      out.close();
      ctx.note_artifact("embedding.csv");
      ctx.close();
      std::cout << "embed: " << chosen.size() << " samples (" << feature_kind << ")\n";
    }
    return 0;
  } catch (const Error& e) {
    std::cerr << "error code=" << errc_name(e.code()) << " msg=\"" << e.what() << "\"\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error code=internal msg=\"" << e.what() << "\"\n";
    return 9;
  }
}
