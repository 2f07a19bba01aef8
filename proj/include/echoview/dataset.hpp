#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "echoview/image.hpp"
#include "echoview/rng.hpp"
#include "echoview/views.hpp"

namespace echoview {

enum class Split { train, val, test, unassigned };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
  }
  return "unassigned";
}

inline std::optional<Split> split_from_string(std::string_view s) {
  for (Split v : {Split::train, Split::val, Split::test, Split::unassigned})
    if (s == to_string(v)) return v;
  return std::nullopt;
}

struct SampleRecord {
  std::string path;      // image file, relative to the manifest directory
  std::string study_id;  // independence unit for splitting
  ViewLabel label = ViewLabel::plax;
  std::string clip_id;   // empty for still images
  int frame_index = 0;
  Split split = Split::unassigned;
};

// Records plus (optionally) the loaded pixel data and the per-pixel mean of
// the training split.
struct Dataset {
  std::vector<SampleRecord> records;
  std::vector<std::vector<float>> images;  // raw [0,1], one 4800-vector per record
  std::vector<float> training_mean;        // empty until computed

  size_t size() const { return records.size(); }

  std::vector<size_t> indices_of(Split s) const {
    std::vector<size_t> idx;
    for (size_t i = 0; i < records.size(); ++i)
      if (records[i].split == s) idx.push_back(i);
    return idx;
  }

  std::vector<std::string> study_ids() const {  // in first-seen order
    std::vector<std::string> ids;
    for (const auto& r : records)
      if (std::find(ids.begin(), ids.end(), r.study_id) == ids.end()) ids.push_back(r.study_id);
    return ids;
  }
};

// Greedy image-count balancing: studies are shuffled, then each goes to the
// split with the largest remaining deficit, so no study ever spans splits.
inline void split_by_study(Dataset& ds, double train_ratio, double val_ratio, double test_ratio,
                           uint64_t seed) {
  require(train_ratio > 0 && val_ratio > 0 && test_ratio > 0, Errc::bad_argument,
          "split ratios must be positive");
  double rsum = train_ratio + val_ratio + test_ratio;

  auto ids = ds.study_ids();
  require(ids.size() >= 3, Errc::bad_argument,
          "need at least 3 studies to split, got " + std::to_string(ids.size()));

  std::map<std::string, int64_t> counts;
  for (const auto& r : ds.records) counts[r.study_id]++;
  int64_t total = int64_t(ds.records.size());

  Rng rng = derive_rng(seed, {0x5b17u});
  rng.shuffle(ids);

  double target[3] = {train_ratio / rsum * double(total), val_ratio / rsum * double(total),
                      test_ratio / rsum * double(total)};
  double assigned[3] = {0, 0, 0};
  std::map<std::string, Split> assignment;
  for (const auto& id : ids) {
    int best = 0;
    for (int s = 1; s < 3; ++s)
      if (target[s] - assigned[s] > target[best] - assigned[best]) best = s;
    assignment[id] = Split(best);
    assigned[best] += double(counts[id]);
  }
  for (auto& r : ds.records) r.split = assignment[r.study_id];
}

inline std::vector<float> compute_training_mean(const Dataset& ds) {
  std::vector<double> acc(kImagePixels, 0.0);
  int64_t n = 0;
  for (size_t i = 0; i < ds.size(); ++i) {
    if (ds.records[i].split != Split::train) continue;
    const auto& img = ds.images[i];
    for (int p = 0; p < kImagePixels; ++p) acc[size_t(p)] += double(img[size_t(p)]);
    ++n;
  }
  require(n > 0, Errc::bad_argument, "training split is empty");
  std::vector<float> mean(kImagePixels);
  for (int p = 0; p < kImagePixels; ++p) mean[size_t(p)] = float(acc[size_t(p)] / double(n));
  return mean;
}

// Subtracts the training-split mean from every image, all splits alike,
// and stores the mean for inference-time reuse.
inline void normalize(Dataset& ds) {
  bool has_train = false;
  for (const auto& r : ds.records) has_train |= r.split == Split::train;
  require(has_train, Errc::bad_argument, "normalize called before split assignment");
  require(ds.images.size() == ds.records.size(), Errc::bad_argument,
          "normalize needs loaded images");
  ds.training_mean = compute_training_mean(ds);
  for (auto& img : ds.images)
    for (int p = 0; p < kImagePixels; ++p) img[size_t(p)] -= ds.training_mean[size_t(p)];
}

inline void subtract_mean(std::vector<float>& img, const std::vector<float>& mean) {
  for (int p = 0; p < kImagePixels; ++p) img[size_t(p)] -= mean[size_t(p)];
}

// ---- manifest I/O -------------------------------------------------------
// One record per line: path,study_id,view_label,clip_id,frame_index,split
// with "-" standing in for the null clip id of still images.

inline void write_manifest(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::trunc);
  require(bool(out), Errc::io_error, "cannot write " + path.string());
  out << "path,study_id,view_label,clip_id,frame_index,split\n";
  for (const auto& r : ds.records) {
    out << r.path << ',' << r.study_id << ',' << to_string(r.label) << ','
        << (r.clip_id.empty() ? "-" : r.clip_id) << ',' << r.frame_index << ','
        << to_string(r.split) << '\n';
  }
  require(bool(out), Errc::io_error, "short write: " + path.string());
}

inline Dataset read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(bool(in), Errc::io_missing, "cannot open " + path.string());
  Dataset ds;
  std::string line;
  std::getline(in, line);
  require(line == "path,study_id,view_label,clip_id,frame_index,split", Errc::bad_format,
          "unrecognized manifest header in " + path.string());
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    require(f.size() == 6, Errc::bad_format,
            "manifest line " + std::to_string(lineno) + " has " + std::to_string(f.size()) +
                " fields, expected 6");
    SampleRecord r;
    r.path = f[0];
    r.study_id = f[1];
    auto label = view_from_string(f[2]);
    require(label.has_value(), Errc::bad_format,
            "unknown view label '" + f[2] + "' at manifest line " + std::to_string(lineno));
    r.label = *label;
    r.clip_id = f[3] == "-" ? "" : f[3];
    try {
      r.frame_index = std::stoi(f[4]);
    } catch (const std::exception&) {
      fail(Errc::bad_format, "bad frame index at manifest line " + std::to_string(lineno));
    }
    auto split = split_from_string(f[5]);
    require(split.has_value(), Errc::bad_format,
            "unknown split '" + f[5] + "' at manifest line " + std::to_string(lineno));
    r.split = *split;
    ds.records.push_back(std::move(r));
  }
  return ds;
}

// Loads every record's PGM relative to `base` (absolute paths win).
inline void load_images(Dataset& ds, const std::filesystem::path& base) {
  ds.images.clear();
  ds.images.reserve(ds.records.size());
  for (const auto& r : ds.records) {
    std::filesystem::path p = r.path;
    if (p.is_relative()) p = base / p;
    ds.images.push_back(ingest_frame(read_pgm(p)));
  }
}

inline Dataset load_dataset(const std::filesystem::path& manifest_path) {
  Dataset ds = read_manifest(manifest_path);
  load_images(ds, manifest_path.parent_path());
  return ds;
}

}  // namespace echoview
