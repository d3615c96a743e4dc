#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dyad/pose_io.hpp"
#include "dyad/refine.hpp"
#include "support/scene.hpp"

#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace dyad;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "dyad_test_cli";

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" DYAD_CLI_PATH "\" " + args + " >>\"" +
                          (kRoot / "log.txt").string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);)
    if (!l.empty()) out.push_back(l);
  return out;
}

std::string dir(const std::string& name) { return (kRoot / name).string(); }

const char* kTiny = " --latent 8 --hidden 8 --blocks 1 --stride 20 --eval-stride 20 --batch-size 8";

struct Setup {
  Setup() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
  }
};
const Setup setup;

}  // namespace

TEST_CASE("synth") {
  SUBCASE("fixed seed reruns are byte-identical") {
    REQUIRE(run("synth --out " + dir("s1") + " --sequences 3 --length 120 --seed 4 --burst-rate 1") == 0);
    REQUIRE(run("synth --out " + dir("s2") + " --sequences 3 --length 120 --seed 4 --burst-rate 1") == 0);
    for (const char* f : {"manifest.csv", "synth0.s1.csv", "synth2.s2.csv"})
      CHECK(slurp(kRoot / "s1" / f) == slurp(kRoot / "s2" / f));
    const auto m = io::read_manifest(kRoot / "s1" / "manifest.csv");
    REQUIRE(m.size() == 3);
    CHECK(m[0].split == io::Split::Train);
    CHECK(m[1].split == io::Split::Validation);
    CHECK(m[2].split == io::Split::Test);
  }
  SUBCASE("zero sequences gives an empty manifest") {
    REQUIRE(run("synth --out " + dir("empty") + " --sequences 0") == 0);
    CHECK(io::read_manifest(kRoot / "empty" / "manifest.csv").empty());
  }
  SUBCASE("lag mode satisfies the delay property") {
    REQUIRE(run("synth --out " + dir("lag") + " --sequences 2 --length 100 --mode lag --lag 7 --noise 0 --format bin") ==
            0);
    const io::Dataset ds = io::load_dataset(kRoot / "lag");
    for (const auto& s : ds.sequences)
      for (int t = 7; t < 100; ++t) CHECK((s.subject2.poses.row(t) - s.subject1.poses.row(t - 7)).norm() == 0.0);
  }
  SUBCASE("environment, config file and flags resolve in order") {
    REQUIRE(run("synth --out " + dir("env"), "DYAD_SYNTH_SEQUENCES=4 DYAD_SYNTH_LENGTH=95") == 0);
    CHECK(io::read_manifest(kRoot / "env" / "manifest.csv").size() == 4);
    { std::ofstream(kRoot / "synth.toml") << "[synth]\nsequences=2\nlength=95\n"; }
    REQUIRE(run("--config " + dir("synth.toml") + " synth --out " + dir("file"), "DYAD_SYNTH_SEQUENCES=4") == 0);
    CHECK(io::read_manifest(kRoot / "file" / "manifest.csv").size() == 2);
    REQUIRE(run("--config " + dir("synth.toml") + " synth --out " + dir("flag") + " --sequences 1",
                "DYAD_SYNTH_SEQUENCES=4") == 0);
    CHECK(io::read_manifest(kRoot / "flag" / "manifest.csv").size() == 1);
    const std::string echo = slurp(kRoot / "flag" / "config.toml");
    CHECK(echo.find("sequences=1") != std::string::npos);
    CHECK(echo.find("length=95") != std::string::npos);
  }
  SUBCASE("errors") {
    CHECK(run("synth --out /proc/dyad_not_writable") == 2);
    CHECK(run("synth --out " + dir("bad") + " --mode spiral") == 1);
    CHECK(run("synth") == 1);
  }
}

TEST_CASE("train, resume, eval, predict and plot") {
  REQUIRE(run("synth --out " + dir("data") + " --sequences 5 --length 120 --seed 1") == 0);
  const std::string data = " --data " + dir("data");

  REQUIRE(run("train" + data + " --out " + dir("run") + " --epochs 2 --seed 3 --lr 0.001" + kTiny) == 0);
  for (const char* f : {"model.json", "metrics.jsonl", "last.ckpt", "best.ckpt", "config.toml"})
    CHECK(fs::exists(kRoot / "run" / f));
  auto metrics = lines(kRoot / "run" / "metrics.jsonl");
  REQUIRE(metrics.size() == 2);
  CHECK(nlohmann::json::parse(metrics[1])["epoch"] == 2);
  CHECK(nlohmann::json::parse(metrics[1]).contains("validation_mpjpe"));

  SUBCASE("training is deterministic") {
    REQUIRE(run("train" + data + " --out " + dir("run_again") + " --epochs 2 --seed 3 --lr 0.001" + kTiny) == 0);
    const auto again = lines(kRoot / "run_again" / "metrics.jsonl");
    REQUIRE(again.size() == metrics.size());
    for (std::size_t i = 0; i < again.size(); ++i) {
      auto a = nlohmann::json::parse(again[i]), b = nlohmann::json::parse(metrics[i]);
      a.erase("seconds");
      b.erase("seconds");
      CHECK(a == b);
    }
  }
  SUBCASE("resume continues the epoch numbering") {
    REQUIRE(run("train" + data + " --out " + dir("run") + " --epochs 3 --seed 3 --lr 0.001 --resume " + dir("run/last.ckpt") +
                kTiny) == 0);
    metrics = lines(kRoot / "run" / "metrics.jsonl");
    REQUIRE(metrics.size() == 3);
    CHECK(nlohmann::json::parse(metrics[2])["epoch"] == 3);
  }
  SUBCASE("usage and numerical errors") {
    CHECK(run("train" + data + " --out " + dir("x") + " --variant Ours") == 1);
    CHECK(run("train" + data + " --out " + dir("x") + " --resume " + dir("nothing.ckpt")) == 1);
    CHECK(run("train --data " + dir("nowhere") + " --out " + dir("x")) == 2);
    CHECK(run("train" + data + " --out " + dir("diverge") + " --epochs 3 --lr 1e30" + kTiny) == 3);
  }
  SUBCASE("eval") {
    REQUIRE(run("eval" + data + " --baseline oracle --out " + dir("oracle")) == 0);
    auto table = lines(kRoot / "oracle" / "eval.csv");
    REQUIRE(table.size() == 4);
    CHECK(table[0] == "milliseconds,100,200,300,400,500,600,700,800,900,1000,Average");
    CHECK(table[1].substr(table[1].find(',')) == ",0.00,0.00,0.00,0.00,0.00,0.00,0.00,0.00,0.00,0.00,0.00");

    REQUIRE(run("eval" + data + " --checkpoint " + dir("run/best.ckpt") + " --out " + dir("eval")) == 0);
    table = lines(kRoot / "eval" / "eval.csv");
    REQUIRE(table.size() == 4);
    CHECK(std::count(table[1].begin(), table[1].end(), ',') == 11);
    REQUIRE(run("eval" + data + " --checkpoint " + dir("run/best.ckpt") + " --out " + dir("eval2")) == 0);
    CHECK(slurp(kRoot / "eval" / "eval.csv") == slurp(kRoot / "eval2" / "eval.csv"));

    CHECK(run("eval" + data + " --checkpoint " + dir("missing.ckpt") + " --out " + dir("e3")) == 2);
  }
  SUBCASE("predict and plot") {
    REQUIRE(run("predict" + data + " --checkpoint " + dir("run/best.ckpt") + " --sequence synth4 --out " +
                dir("pred")) == 0);
    CHECK(io::read_pose_csv(kRoot / "pred" / "prediction.csv").frames() == 30);
    const std::string plot = "plot --sample " + dir("pred/truth.csv") + " --prediction " + dir("pred/prediction.csv");
    REQUIRE(run(plot + " --out " + dir("a.ppm")) == 0);
    REQUIRE(run(plot + " --out " + dir("b.ppm")) == 0);
    CHECK(slurp(kRoot / "a.ppm") == slurp(kRoot / "b.ppm"));
    CHECK(slurp(kRoot / "a.ppm").rfind("P6\n1600 260\n255\n", 0) == 0);
    CHECK(fs::exists(kRoot / "a.ppm.config.toml"));

    MotionSequence narrow = io::read_pose_csv(kRoot / "pred" / "truth.csv");
    narrow.poses.conservativeResize(Eigen::NoChange, 54);
    io::write_pose_csv(kRoot / "narrow.csv", narrow);
    CHECK(run("plot --sample " + dir("narrow.csv") + " --prediction " + dir("pred/prediction.csv") + " --out " +
              dir("c.ppm")) == 1);
    CHECK(run("predict" + data + " --checkpoint " + dir("run/best.ckpt") + " --sequence nope --out " + dir("p2")) ==
          2);
  }
}

TEST_CASE("refine") {
  std::mt19937_64 rng(5);
  const auto rig = testing::ring_rig(4);
  refine::write_cameras(kRoot / "cams.txt", rig);
  refine::write_detections(kRoot / "det", testing::project_scene(testing::dancing_poses(60), rig, 1.0, 0.05, rng));
  REQUIRE(run("refine --cameras " + dir("cams.txt") + " --detections " + dir("det") + " --out " + dir("refined")) == 0);
  CHECK(io::read_pose_csv(kRoot / "refined" / "poses.csv").frames() == 60);
  const auto report = nlohmann::json::parse(slurp(kRoot / "refined" / "report.json"));
  CHECK(report["mean_reprojection_residual_px"].get<double>() < 3.0);
  const auto before = report["limb_std_before_mm"].get<std::vector<double>>();
  const auto after = report["limb_std_after_mm"].get<std::vector<double>>();
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] < before[i]);

  refine::write_detections(kRoot / "clean", testing::project_scene(testing::dancing_poses(30), rig, 0.0, 0.0, rng));
  REQUIRE(run("refine --cameras " + dir("cams.txt") + " --detections " + dir("clean") + " --out " + dir("clean_out")) ==
          0);
  CHECK(nlohmann::json::parse(slurp(kRoot / "clean_out" / "report.json"))["max_reprojection_residual_px"].get<double>() < 1e-3);

  CHECK(run("refine --cameras " + dir("no_cams.txt") + " --detections " + dir("det") + " --out " + dir("r2")) == 2);
}
