#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "echoview/weights_io.hpp"

namespace fs = std::filesystem;

#ifndef ECHOVIEW_CLI_PATH
#define ECHOVIEW_CLI_PATH "echoview"
#endif

namespace {

struct CliRun {
  int exit_code = 0;
  std::string output;
};

fs::path work_dir() {
  auto p = fs::temp_directory_path() / "echoview_cli_tests";
  fs::create_directories(p);
  return p;
}

CliRun run_cli(const std::string& args) {
  fs::path log = work_dir() / "last_run.log";
  std::string cmd = std::string(ECHOVIEW_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  CliRun r;
  r.exit_code = WEXITSTATUS(rc);
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// one tiny end-to-end workspace shared by the suite, built once
const fs::path& pipeline_dir() {
  static fs::path dir = [] {
    fs::path d = work_dir() / "pipeline";
    fs::remove_all(d);
    auto synth = run_cli("synth --seed 5 --studies 4 --frames-per-clip 3 --classes 2 --out " +
                         (d / "data").string());
    REQUIRE(synth.exit_code == 0);
    auto split = run_cli("split --manifest " + (d / "data" / "manifest.csv").string() +
                         " --ratios 50:25:25 --seed 3 --out " + (d / "split").string());
    REQUIRE(split.exit_code == 0);
    auto train = run_cli("train --manifest " + (d / "split" / "manifest.csv").string() +
                         " --classes 2 --epochs 1 --batch-size 4 --seed 9 --out " +
                         (d / "train").string());
    REQUIRE(train.exit_code == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("cli: synth is deterministic for a fixed seed") {
  fs::path a = work_dir() / "synth_a", b = work_dir() / "synth_b";
  fs::remove_all(a);
  fs::remove_all(b);
  auto ra = run_cli("synth --seed 7 --studies 3 --frames-per-clip 2 --out " + a.string());
  auto rb = run_cli("synth --seed 7 --studies 3 --frames-per-clip 2 --out " + b.string());
  REQUIRE(ra.exit_code == 0);
  REQUIRE(rb.exit_code == 0);
  CHECK(slurp(a / "manifest.csv") == slurp(b / "manifest.csv"));
  CHECK(echoview::crc32_file(a / "images" / "s000_plax_c00_f00.pgm") ==
        echoview::crc32_file(b / "images" / "s000_plax_c00_f00.pgm"));
  CHECK(fs::exists(a / "config.echo"));
  CHECK(fs::exists(a / "run_manifest.txt"));
  // a different seed must actually change the data
  fs::path c = work_dir() / "synth_c";
  fs::remove_all(c);
  run_cli("synth --seed 8 --studies 3 --frames-per-clip 2 --out " + c.string());
  CHECK(echoview::crc32_file(a / "images" / "s000_plax_c00_f00.pgm") !=
        echoview::crc32_file(c / "images" / "s000_plax_c00_f00.pgm"));
}

TEST_CASE("cli: split assigns studies to exactly one split") {
  const fs::path& d = pipeline_dir();
  std::ifstream in(d / "split" / "manifest.csv");
  std::string line;
  std::getline(in, line);  // header
  std::map<std::string, std::string> study_split;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string f[6];
    for (auto& x : f) std::getline(ss, x, ',');
    auto it = study_split.find(f[1]);
    if (it == study_split.end())
      study_split[f[1]] = f[5];
    else
      CHECK(it->second == f[5]);
    CHECK(f[5] != "unassigned");
  }
  CHECK(study_split.size() == 4u);
}

TEST_CASE("cli: train emits weights, mean and a convergence log") {
  const fs::path& d = pipeline_dir();
  CHECK(fs::exists(d / "train" / "weights.echv"));
  CHECK(fs::exists(d / "train" / "mean.f32"));
  CHECK(fs::exists(d / "train" / "convergence.csv"));
  std::string log = slurp(d / "train" / "convergence.csv");
  CHECK(log.substr(0, 5) == "epoch");
  // loadable and fingerprint-consistent
  CHECK_NOTHROW(echoview::load_weights(d / "train" / "weights.echv", 2));
}

TEST_CASE("cli: eval report agrees with recomputation from the emitted confusion CSV") {
  const fs::path& d = pipeline_dir();
  auto eval = run_cli("eval --manifest " + (d / "split" / "manifest.csv").string() +
                      " --weights " + (d / "train" / "weights.echv").string() + " --mean " +
                      (d / "train" / "mean.f32").string() + " --classes 2 --out " +
                      (d / "eval").string());
  REQUIRE(eval.exit_code == 0);

  // external recomputation: overall accuracy = trace / total of the CSV
  std::ifstream in(d / "eval" / "confusion_counts.csv");
  std::string line;
  std::getline(in, line);
  long long trace = 0, total = 0;
  int row = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');  // row label
    int col = 0;
    while (std::getline(ss, tok, ',')) {
      long long v = std::stoll(tok);
      total += v;
      if (col == row) trace += v;
      ++col;
    }
    ++row;
  }
  REQUIRE(total > 0);
  double recomputed = double(trace) / double(total);

  std::string summary = slurp(d / "eval" / "summary.txt");
  auto pos = summary.find("overall_accuracy=");
  REQUIRE(pos != std::string::npos);
  double reported = std::stod(summary.substr(pos + 17));
  CHECK_THAT(reported, Catch::Matchers::WithinAbs(recomputed, 5e-7));
  CHECK(summary.find("video_accuracy=") != std::string::npos);
}

TEST_CASE("cli: classify and classify-video run against trained artifacts") {
  const fs::path& d = pipeline_dir();
  std::string img = (d / "data" / "images" / "s000_plax_c00_f00.pgm").string();
  auto cls = run_cli("classify --image " + img + " --weights " +
                     (d / "train" / "weights.echv").string() + " --mean " +
                     (d / "train" / "mean.f32").string() + " --classes 2 --out " +
                     (d / "classify").string());
  REQUIRE(cls.exit_code == 0);
  CHECK(cls.output.find("view=") != std::string::npos);
  CHECK(fs::exists(d / "classify" / "prediction.txt"));

  auto vid = run_cli("classify-video --manifest " + (d / "split" / "manifest.csv").string() +
                     " --clip s000_plax_c00 --weights " +
                     (d / "train" / "weights.echv").string() + " --mean " +
                     (d / "train" / "mean.f32").string() + " --classes 2 --out " +
                     (d / "video").string());
  REQUIRE(vid.exit_code == 0);
  CHECK(vid.output.find("clip=s000_plax_c00") != std::string::npos);
  CHECK(fs::exists(d / "video" / "vote.txt"));
}

TEST_CASE("cli: occlude, saliency and embed produce their documented artifacts") {
  const fs::path& d = pipeline_dir();
  auto occ = run_cli("occlude --manifest " + (d / "split" / "manifest.csv").string() +
                     " --weights " + (d / "train" / "weights.echv").string() + " --mean " +
                     (d / "train" / "mean.f32").string() +
                     " --classes 2 --masks center,full --out " + (d / "occl").string());
  REQUIRE(occ.exit_code == 0);
  std::string occ_csv = slurp(d / "occl" / "occlusion.csv");
  CHECK(occ_csv.find("mask_name,accuracy,delta_vs_baseline") == 0u);
  CHECK(occ_csv.find("center,") != std::string::npos);

  std::string img = (d / "data" / "images" / "s001_rv_inflow_c00_f01.pgm").string();
  auto sal = run_cli("saliency --image " + img + " --weights " +
                     (d / "train" / "weights.echv").string() + " --mean " +
                     (d / "train" / "mean.f32").string() + " --classes 2 --out " +
                     (d / "sal").string());
  REQUIRE(sal.exit_code == 0);
  CHECK(fs::exists(d / "sal" / "saliency.pgm"));
  CHECK(fs::exists(d / "sal" / "saliency.f32"));

  auto emb = run_cli("embed --manifest " + (d / "split" / "manifest.csv").string() +
                     " --features raw --perplexity 5 --iterations 150 --max-samples 24 --out " +
                     (d / "embed").string());
  REQUIRE(emb.exit_code == 0);
  std::string csv = slurp(d / "embed" / "embedding.csv");
  CHECK(csv.substr(0, 18) == "sample_id,label,x,");
}

TEST_CASE("cli: control subcommand trains on permuted labels") {
  const fs::path& d = pipeline_dir();
  auto ctl = run_cli("control --manifest " + (d / "split" / "manifest.csv").string() +
                     " --classes 2 --epochs 1 --batch-size 4 --seed 11 --out " +
                     (d / "control").string());
  REQUIRE(ctl.exit_code == 0);
  CHECK(fs::exists(d / "control" / "convergence.csv"));
}

TEST_CASE("cli: distinct exit codes for usage, missing input and fingerprint errors") {
  const fs::path& d = pipeline_dir();
  CHECK(run_cli("--definitely-not-a-flag").exit_code == 2);
  CHECK(run_cli("synth --no-such-option 1 --out /tmp/x").exit_code == 2);

  auto missing = run_cli("eval --manifest /nonexistent/manifest.csv --weights w --mean m --out " +
                         (work_dir() / "e1").string());
  CHECK(missing.exit_code == 3);
  CHECK(missing.output.find("error code=io_missing") != std::string::npos);

  // weights trained for 2 classes loaded as 15 classes
  auto fp = run_cli("eval --manifest " + (d / "split" / "manifest.csv").string() + " --weights " +
                    (d / "train" / "weights.echv").string() + " --mean " +
                    (d / "train" / "mean.f32").string() + " --classes 15 --out " +
                    (work_dir() / "e2").string());
  CHECK(fp.exit_code == 6);
  CHECK(fp.output.find("error code=fingerprint_mismatch") != std::string::npos);
}

TEST_CASE("cli: reruns with the same seed reproduce artifact checksums") {
  const fs::path& d = pipeline_dir();
  fs::path again = work_dir() / "train_again";
  fs::remove_all(again);
  auto rc = run_cli("train --manifest " + (d / "split" / "manifest.csv").string() +
                    " --classes 2 --epochs 1 --batch-size 4 --seed 9 --out " + again.string());
  REQUIRE(rc.exit_code == 0);
  CHECK(echoview::crc32_file(again / "weights.echv") ==
        echoview::crc32_file(d / "train" / "weights.echv"));
  CHECK(echoview::crc32_file(again / "convergence.csv") ==
        echoview::crc32_file(d / "train" / "convergence.csv"));
  CHECK(echoview::crc32_file(again / "mean.f32") == echoview::crc32_file(d / "train" / "mean.f32"));
}

TEST_CASE("cli: subcommands leave their inputs untouched") {
  const fs::path& d = pipeline_dir();
  auto manifest = d / "split" / "manifest.csv";
  auto weights = d / "train" / "weights.echv";
  uint32_t m_before = echoview::crc32_file(manifest);
  uint32_t w_before = echoview::crc32_file(weights);
  run_cli("eval --manifest " + manifest.string() + " --weights " + weights.string() + " --mean " +
          (d / "train" / "mean.f32").string() + " --classes 2 --out " +
          (work_dir() / "e3").string());
  CHECK(echoview::crc32_file(manifest) == m_before);
  CHECK(echoview::crc32_file(weights) == w_before);
}
