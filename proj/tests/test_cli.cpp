#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "doctest.h"

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("colde_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& name = "") const { return (path / name).string(); }
};

// Runs the CLI, captures stdout into out_file, returns the exit status.
int run_cli(const std::string& args, const fs::path& out_file) {
  const std::string cmd = std::string(COLDE_CLI_PATH) + " " + args + " > " +
                          out_file.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("synth then eval against itself gives perfect metrics") {
  TempDir dir;
  const fs::path log = dir.path / "log.txt";
  REQUIRE(run_cli("synth --out " + dir.str("seq") +
                      " --frames 3 --width 32 --height 24 --z-step 0.02 --no-png",
                  log) == 0);
  CHECK(fs::exists(dir.path / "seq" / "manifest.json"));
  CHECK(fs::exists(dir.path / "seq" / "frame_000.depth.bin"));

  const fs::path ejson = dir.path / "eval.json";
  REQUIRE(run_cli("eval --pred " + dir.str("seq") + " --gt " + dir.str("seq") + " --json " +
                      ejson.string(),
                  log) == 0);
  nlohmann::json j;
  std::ifstream(ejson) >> j;
  CHECK(j["mean"]["abs_rel"].get<double>() == 0.0);
  CHECK(j["mean"]["rmse"].get<double>() == 0.0);
  CHECK(j["mean"]["delta1"].get<double>() == 1.0);
}

TEST_CASE("perturb is deterministic for a fixed seed") {
  TempDir dir;
  const fs::path log = dir.path / "log.txt";
  REQUIRE(run_cli("synth --out " + dir.str("seq") +
                      " --frames 2 --width 24 --height 16 --no-png",
                  log) == 0);
  REQUIRE(run_cli("perturb --in " + dir.str("seq") + " --out " + dir.str("a") +
                      " --scale 1.3 --noise 0.05 --seed 7",
                  log) == 0);
  REQUIRE(run_cli("perturb --in " + dir.str("seq") + " --out " + dir.str("b") +
                      " --scale 1.3 --noise 0.05 --seed 7",
                  log) == 0);
  const std::string da = slurp(dir.path / "a" / "frame_000.depth.bin");
  const std::string db = slurp(dir.path / "b" / "frame_000.depth.bin");
  REQUIRE(!da.empty());
  CHECK(da == db);
  const std::string orig = slurp(dir.path / "seq" / "frame_000.depth.bin");
  CHECK(da != orig);
}

TEST_CASE("config init writes a loadable default weights file") {
  TempDir dir;
  const fs::path log = dir.path / "log.txt";
  REQUIRE(run_cli("config init --out " + dir.str("w.json"), log) == 0);
  nlohmann::json j;
  std::ifstream(dir.str("w.json")) >> j;
  CHECK(j["alpha"].get<double>() == 0.85);
  CHECK(j["lambda1"].get<double>() == 0.1);
  CHECK(j["lambda5"].get<double>() == 0.01);
}

TEST_CASE("loss prints a JSON breakdown with all terms") {
  TempDir dir;
  const fs::path log = dir.path / "log.txt";
  REQUIRE(run_cli("synth --out " + dir.str("seq") +
                      " --frames 2 --width 32 --height 24 --z-step 0.02 --no-png",
                  log) == 0);
  const fs::path out = dir.path / "loss.json";
  REQUIRE(run_cli("loss --dir " + dir.str("seq") + " --target 0 --source 1", out) == 0);
  nlohmann::json j;
  std::ifstream(out) >> j;
  for (const char* key : {"photo", "feat", "depth", "norm", "orth", "smooth", "total"}) {
    CHECK(j.contains(key));
    CHECK(j[key].get<double>() >= 0.0);
  }
  CHECK(j["masked_pixel_count"].get<long>() > 0);
}

TEST_CASE("check-grad exits zero on a clean instance") {
  TempDir dir;
  const fs::path out = dir.path / "cg.txt";
  CHECK(run_cli("check-grad --seed 100 --height 16 --width 16", out) == 0);
  const std::string text = slurp(out);
  CHECK(text.find("pose") != std::string::npos);
}

TEST_CASE("refine improves metrics end to end") {
  TempDir dir;
  const fs::path log = dir.path / "log.txt";
  // No light falloff keeps the frames photometrically consistent, so pulling
  // toward ground truth also lowers the loss.
  REQUIRE(run_cli("synth --out " + dir.str("gt") +
                      " --frames 2 --width 32 --height 24 --z-step 0.05 --no-png"
                      " --no-light-falloff --texture-contrast 0.9 --fold-period 2.0",
                  log) == 0);
  REQUIRE(run_cli("perturb --in " + dir.str("gt") + " --out " + dir.str("init") +
                      " --scale 1.2 --noise 0.03 --seed 5",
                  log) == 0);
  const fs::path rep = dir.path / "refine.json";
  REQUIRE(run_cli("refine --dir " + dir.str("init") + " --out " + dir.str("ref") + " --gt " +
                      dir.str("gt") + " --iters 40 --fixed-channel",
                  rep) == 0);
  nlohmann::json j;
  std::ifstream(rep) >> j;
  CHECK(j["final_metrics_unscaled"]["rmse"].get<double>() <=
        j["initial_metrics_unscaled"]["rmse"].get<double>());
  // Recorded loss is monotone non-increasing under --fixed-channel.
  double prev = 1e300;
  for (const auto& it : j["iterations"]) {
    const double t = it["loss"].get<double>();
    CHECK(t <= prev + 1e-15);
    prev = t;
  }
  CHECK(fs::exists(dir.path / "ref" / "frame_000.depth.bin"));
  CHECK(fs::exists(dir.path / "ref" / "report.json"));
}

TEST_CASE("fuse writes a PLY with a valid header") {
  TempDir dir;
  const fs::path log = dir.path / "log.txt";
  REQUIRE(run_cli("synth --out " + dir.str("seq") +
                      " --frames 3 --width 24 --height 16 --z-step 0.02 --no-png",
                  log) == 0);
  REQUIRE(run_cli("fuse --dir " + dir.str("seq") + " --out " + dir.str("cloud.ply") +
                      " --window 3",
                  log) == 0);
  const std::string ply = slurp(dir.str("cloud.ply"));
  CHECK(ply.rfind("ply\nformat binary_little_endian 1.0\n", 0) == 0);
  CHECK(ply.find("element vertex") != std::string::npos);
}

TEST_CASE("failures exit nonzero with a machine-parseable error line") {
  TempDir dir;
  const fs::path out = dir.path / "err.txt";
  SUBCASE("missing sequence directory") {
    CHECK(run_cli("loss --dir " + dir.str("nope") + " --target 0 --source 1", out) != 0);
    const std::string text = slurp(out);
    CHECK(text.rfind("error: ", 0) == 0);
  }
  SUBCASE("corrupt manifest") {
    fs::create_directories(dir.path / "bad");
    std::ofstream(dir.path / "bad" / "manifest.json") << "{ not json";
    CHECK(run_cli("eval --pred " + dir.str("bad") + " --gt " + dir.str("bad"), out) != 0);
    const std::string text = slurp(out);
    CHECK(text.find("error: bad-manifest") != std::string::npos);
  }
  SUBCASE("even fusion window") {
    fs::create_directories(dir.path / "bad2");
    CHECK(run_cli("fuse --dir " + dir.str("bad2") + " --out " + dir.str("x.ply") +
                      " --window 2",
                  out) != 0);
    const std::string text = slurp(out);
    CHECK(text.rfind("error: ", 0) == 0);
  }
}
