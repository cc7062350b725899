#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "graphdepth/cli.hpp"
#include "graphdepth/config.hpp"
#include "graphdepth/data.hpp"
#include "support/temp_dir.hpp"

using namespace graphdepth;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult run(const std::vector<std::string>& args) {
  std::stringstream so, se;
  std::streambuf* old_out = std::cout.rdbuf(so.rdbuf());
  std::streambuf* old_err = std::cerr.rdbuf(se.rdbuf());
  CliResult r;
  try {
    r.code = run_cli(args);
  } catch (...) {
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    throw;
  }
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = so.str();
  r.err = se.str();
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string kv_value(const KvList& kv, const std::string& key) {
  for (const auto& [k, v] : kv)
    if (k == key) return v;
  return "<missing>";
}

// small scene + small model so smoke runs stay quick
std::vector<std::string> tiny_sets() {
  return {"--set", "scene.height=32",         "--set", "scene.width=32",
          "--set", "model.encoder_channels=2,3,4,5", "--set", "model.stem_channels=2",
          "--set", "train.batch_size=2"};
}

void append(std::vector<std::string>& args, const std::vector<std::string>& extra) {
  args.insert(args.end(), extra.begin(), extra.end());
}

}  // namespace

TEST_CASE("help and usage failures map to the documented exit codes") {
  CliResult help = run({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("train") != std::string::npos);

  CliResult none = run({});
  CHECK(none.code == 1);
  CHECK(none.err.find("error: usage:") != std::string::npos);

  testsupport::TempDir dir("cli_usage");
  CliResult bogus = run({"train", "--data", dir.file("d"), "--out", dir.file("never"),
                         "--bogus-flag"});
  CHECK(bogus.code == 1);
  CHECK(bogus.err.find("error: usage:") != std::string::npos);
  CHECK_FALSE(fs::exists(dir.file("never")));
}

TEST_CASE("argc/argv entry point skips the program name") {
  std::stringstream so;
  std::streambuf* old_out = std::cout.rdbuf(so.rdbuf());
  const char* argv[] = {"graphdepth", "--help"};
  const int code = run_cli(2, argv);
  std::cout.rdbuf(old_out);
  CHECK(code == 0);
  CHECK(so.str().find("eval") != std::string::npos);
}

TEST_CASE("gen-data writes a complete, reproducible dataset") {
  testsupport::TempDir dir("cli_gen");
  std::vector<std::string> args{"gen-data", "--out", dir.file("d1"), "--count", "2",
                                "--seed", "7"};
  append(args, tiny_sets());
  CliResult r = run(args);
  CHECK(r.code == 0);
  CHECK(r.out.find("wrote 2 samples") != std::string::npos);
  for (const char* name : {"000000.ppm", "000000.pfm", "000000.mask.pfm", "000000.meta",
                           "000001.ppm", "000001.pfm", "000001.mask.pfm", "000001.meta",
                           "config.resolved"})
    CHECK(fs::exists(dir.path / "d1" / "train" / name));

  std::vector<std::string> again{"gen-data", "--out", dir.file("d2"), "--count", "2",
                                 "--seed", "7"};
  append(again, tiny_sets());
  CHECK(run(again).code == 0);
  CHECK(slurp(dir.file("d1/train/000000.ppm")) == slurp(dir.file("d2/train/000000.ppm")));
  CHECK(slurp(dir.file("d1/train/000001.pfm")) == slurp(dir.file("d2/train/000001.pfm")));

  std::vector<std::string> shifted{"gen-data", "--out", dir.file("d3"), "--count", "1",
                                   "--seed", "8"};
  append(shifted, tiny_sets());
  CHECK(run(shifted).code == 0);
  CHECK(slurp(dir.file("d1/train/000000.pfm")) != slurp(dir.file("d3/train/000000.pfm")));
}

TEST_CASE("--set overrides beat the config file") {
  testsupport::TempDir dir("cli_cfg");
  std::ofstream cfg(dir.file("run.conf"));
  cfg << "scene.height = 64\nscene.width = 64\ntrain.epochs = 5\n";
  cfg.close();

  CliResult r = run({"gen-data", "--out", dir.file("d"), "--count", "1", "--config",
                     dir.file("run.conf"), "--set", "scene.height=32", "--set",
                     "scene.width=32"});
  CHECK(r.code == 0);
  KvList kv = load_kv_file(dir.file("d/train/config.resolved"));
  CHECK(kv_value(kv, "scene.height") == "32");
  CHECK(kv_value(kv, "scene.width") == "32");
  CHECK(kv_value(kv, "train.epochs") == "5");
}

TEST_CASE("configuration mistakes exit with code 1 before touching the filesystem") {
  testsupport::TempDir dir("cli_bad");

  CliResult unknown = run({"gen-data", "--out", dir.file("x1"), "--set", "nope.key=1"});
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("error: config:") != std::string::npos);
  CHECK_FALSE(fs::exists(dir.file("x1")));

  CliResult badval =
      run({"gen-data", "--out", dir.file("x2"), "--set", "train.epochs=soon"});
  CHECK(badval.code == 1);
  CHECK_FALSE(fs::exists(dir.file("x2")));

  std::ofstream broken(dir.file("broken.conf"));
  broken << "this line has no equals sign\n";
  broken.close();
  CliResult parse =
      run({"gen-data", "--out", dir.file("x3"), "--config", dir.file("broken.conf")});
  CHECK(parse.code == 1);
  CHECK(parse.err.find("error: config:") != std::string::npos);
  CHECK(parse.err.find("byte offset") != std::string::npos);
  CHECK_FALSE(fs::exists(dir.file("x3")));

  CliResult nodata = run({"train", "--data", dir.file("missing"), "--out", dir.file("x4")});
  CHECK(nodata.code == 1);
  CHECK(nodata.err.find("error: config:") != std::string::npos);
  CHECK_FALSE(fs::exists(dir.file("x4")));
}

TEST_CASE("generate, train, and evaluate chain together") {
  testsupport::TempDir dir("cli_pipe");
  std::vector<std::string> gen{"gen-data", "--out", dir.file("data"), "--count", "2",
                               "--seed", "11"};
  append(gen, tiny_sets());
  REQUIRE(run(gen).code == 0);

  std::vector<std::string> train{"train",   "--data",          dir.file("data"),
                                 "--out",   dir.file("run"),   "--steps", "2",
                                 "--set",   "train.base_lr=1e-3"};
  append(train, tiny_sets());
  CliResult tr = run(train);
  CHECK(tr.code == 0);
  CHECK(tr.out.find("trained 2 steps") != std::string::npos);
  CHECK(fs::exists(dir.file("run/config.resolved")));
  CHECK(fs::exists(dir.file("run/checkpoint_final.manifest.txt")));
  CHECK(fs::exists(dir.file("run/checkpoint_final.params.bin")));
  const std::string log = slurp(dir.file("run/train_log.csv"));
  CHECK(log.rfind("step,lr,", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == 3);  // header + 2 steps
  CHECK_FALSE(fs::exists(dir.file("run/metrics.csv")));  // no val split

  CliResult ev = run({"eval", "--checkpoint", dir.file("run/checkpoint_final"), "--data",
                      dir.file("data"), "--split", "train", "--out", dir.file("ev"),
                      "--dump", "--set", "train.batch_size=2"});
  CHECK(ev.code == 0);
  CHECK(ev.out.find("step,split,rmse") != std::string::npos);
  const std::string metrics = slurp(dir.file("ev/metrics.csv"));
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 2);
  CHECK(metrics.find(",train,") != std::string::npos);

  int64_t H = 0, W = 0;
  std::vector<float> depth = read_pfm(dir.file("ev/maps/000000.depth.pfm"), &H, &W);
  CHECK(H == 32);
  CHECK(W == 32);
  std::vector<float> sigma = read_pfm(dir.file("ev/maps/000000.sigma.pfm"), &H, &W);
  for (float s : sigma) CHECK(s > 0.0f);

  CliResult lost = run({"eval", "--checkpoint", dir.file("run/no_such_prefix"), "--data",
                        dir.file("data"), "--split", "train", "--out", dir.file("ev2")});
  CHECK(lost.code == 2);
  CHECK(lost.err.find("error: runtime:") != std::string::npos);
}

TEST_CASE("the benchmark command writes its three artifacts") {
  testsupport::TempDir dir("cli_bench");
  CliResult r = run({"bench", "--out", dir.file("b"), "--repeats", "5", "--batch", "1",
                     "--channels", "2", "--knn-k", "8"});
  CHECK(r.code == 0);
  CHECK(fs::exists(dir.file("b/config.resolved")));
  const std::string csv = slurp(dir.file("b/bench.csv"));
  CHECK(csv.rfind("kind,N,C,median_s,repeats\n", 0) == 0);
  CHECK(csv.find("grid_mp,1024,2,") != std::string::npos);
  const std::string text = slurp(dir.file("b/bench.txt"));
  CHECK(text.find("threads") != std::string::npos);
  CHECK(r.out.find("threads") != std::string::npos);
}

TEST_CASE("the ablation grid writes one row per preset") {
  testsupport::TempDir dir("cli_ablate");
  std::vector<std::string> args{"ablate", "--preset", "table6", "--out", dir.file("a"),
                                "--steps", "1"};
  append(args, tiny_sets());
  CliResult r = run(args);
  CHECK(r.code == 0);
  CHECK(fs::exists(dir.file("a/data/train/000000.ppm")));  // self-generated data
  const std::string csv = slurp(dir.file("a/ablate.csv"));
  CHECK(csv.rfind("preset,graph,steps,final_total,rmse,gnn_scales,knn_k_clamped\n", 0) ==
        0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);  // header + 5 presets
  CHECK(csv.find("graph_grid4,grid4,1,") != std::string::npos);
  CHECK(csv.find("graph_knn16,knn16,1,") != std::string::npos);
  for (const std::string& row : {std::string("graph_grid8"), std::string("graph_knn8")})
    CHECK(csv.find(row) != std::string::npos);
  CHECK(csv.find("32|16|8") != std::string::npos);  // multi-scale GNN placements

  CliResult bad = run({"ablate", "--preset", "table9", "--out", dir.file("z")});
  CHECK(bad.code == 1);
}
