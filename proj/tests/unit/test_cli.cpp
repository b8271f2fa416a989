#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "cli.hpp"
#include "rkp/keypoints.hpp"
#include "rkp/manifest.hpp"
#include "rkp/pgm.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

CliResult rkp_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = rkp::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("rkp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Phantom plus its radiomic keypoints.
  void make_case(const std::string& name, int seed) {
    ASSERT_EQ(rkp_run({"synth", "--seed", std::to_string(seed), "--regions", "10", "--width", "64", "--height", "64",
                       "--out", path(name)})
                  .code,
              0);
    ASSERT_EQ(rkp_run({"keypoints", "--image", path(name + "/image.pgm"), "--mask", path(name + "/mask.pgm"), "--out",
                       path(name + ".jsonl")})
                  .code,
              0);
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, UsageAndInputErrorsExitTwo) {
  EXPECT_EQ(rkp_run({"no-such-command"}).code, 2);
  EXPECT_EQ(rkp_run({"synth", "--seed", "banana", "--out", path("x")}).code, 2);
  const CliResult r = rkp_run({"keypoints", "--image", path("missing.pgm"), "--mask", path("missing.pgm"), "--out", path("k")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("missing.pgm"), std::string::npos);

  std::ofstream(path("bad.pgm")) << "P5\n4 4\n255\nab";
  EXPECT_EQ(rkp_run({"keypoints", "--image", path("bad.pgm"), "--mask", path("bad.pgm"), "--out", path("k")}).code, 2);
}

TEST_F(Cli, ContractViolationExitsThree) {
  make_case("a", 1);
  rkp::KeypointGraph g;
  g.keypoints.push_back({{1, 1}, 1.0, 1, Eigen::VectorXd::Ones(3)});
  g.keypoints.push_back({{2, 2}, 1.0, 2, Eigen::VectorXd::Zero(3)});
  std::ofstream out(path("small.jsonl"));
  rkp::write_keypoints(out, g);
  out.close();
  EXPECT_EQ(rkp_run({"match-bf", "--a", path("a.jsonl"), "--b", path("small.jsonl"), "--out", path("m.json")}).code, 3);
}

TEST_F(Cli, RepeatedRunIsByteIdentical) {
  make_case("a", 1);
  make_case("b", 2);
  const std::vector<std::string> args{"match-bf", "--a", path("a.jsonl"), "--b", path("b.jsonl"), "--out", path("m.json")};
  ASSERT_EQ(rkp_run(args).code, 0);
  const std::string first = slurp(path("m.json")), manifest = slurp(path("m.json.manifest.json"));
  ASSERT_EQ(rkp_run(args).code, 0);
  EXPECT_EQ(slurp(path("m.json")), first);
  EXPECT_EQ(slurp(path("m.json.manifest.json")), manifest);
  const auto j = nlohmann::json::parse(first);
  EXPECT_TRUE(j.contains("pairs"));
}

TEST_F(Cli, VisualizeWithNoMatches) {
  make_case("a", 1);
  std::ofstream(path("none.json")) << R"({"pairs": []})";
  ASSERT_EQ(rkp_run({"visualize", "--image-a", path("a/image.pgm"), "--image-b", path("a/image.pgm"), "--a",
                     path("a.jsonl"), "--b", path("a.jsonl"), "--matches", path("none.json"), "--out", path("v.ppm")})
                .code,
            0);
  const std::string ppm = slurp(path("v.ppm"));
  ASSERT_EQ(ppm.rfind("P6\n", 0), 0u);
  std::istringstream header(ppm.substr(3));
  int w = 0, h = 0, maxval = 0;
  header >> w >> h >> maxval;
  EXPECT_EQ(w, 128);
  EXPECT_EQ(h, 64);
  EXPECT_EQ(maxval, 255);
  EXPECT_GE(ppm.size(), static_cast<std::size_t>(w * h * 3));
}

TEST_F(Cli, ReplayComparesHashes) {
  ASSERT_EQ(rkp_run({"synth", "--seed", "4", "--regions", "6", "--width", "48", "--height", "48", "--out", path("s")}).code,
            0);
  const fs::path mpath = path("s/manifest.json");
  const rkp::RunManifest m = rkp::load_manifest(mpath);
  EXPECT_EQ(m.command, "synth");
  EXPECT_EQ(m.outputs.size(), 2u);
  EXPECT_EQ(m.seeds.at("synth"), 4u);

  CliResult r = rkp_run({"replay", "--manifest", mpath.string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.out.find("DIFFERS"), std::string::npos);

  rkp::RunManifest tampered = m;
  tampered.outputs.begin()->second = "0000000000000000";
  rkp::save_manifest(path("tampered.json"), tampered);
  r = rkp_run({"replay", "--manifest", path("tampered.json")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("DIFFERS"), std::string::npos);
}

TEST_F(Cli, ConfigFileAndExplicitFlags) {
  std::ofstream(path("synth.cfg")) << "seed = 9\nregions = 5\nwidth = 40\nheight = 40\n";
  ASSERT_EQ(rkp_run({"synth", "--config", path("synth.cfg"), "--regions", "7", "--out", path("s")}).code, 0);
  const rkp::RunManifest m = rkp::load_manifest(path("s/manifest.json"));
  EXPECT_EQ(m.config.at("regions"), "7");
  EXPECT_EQ(m.config.at("seed"), "9");
  EXPECT_EQ(m.config.at("width"), "40");
  EXPECT_EQ(m.inputs.count(path("synth.cfg")), 1u);
  const auto img = rkp::read_pgm(path("s/image.pgm"));
  EXPECT_EQ(img.width, 40);
}
