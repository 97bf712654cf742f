#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cli_app.hpp"
#include "test_util.hpp"

namespace ps = photon_scale;
namespace fs = std::filesystem;
using ps::testing::TempDir;
using json = nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out, err;
  [[nodiscard]] json report() const { return json::parse(out); }
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = ps::cli::run(std::move(args), out, err);
  return {code, out.str(), err.str()};
}

std::string str(const fs::path& p) { return p.string(); }

}  // namespace

TEST(Cli, HelpExitsZero) {
  const auto r = cli({"simulate", "--help"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--frames"), std::string::npos);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST(Cli, UnknownSubcommandSuggests) {
  const auto r = cli({"simlate"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("'simulate'"), std::string::npos);
  EXPECT_EQ(cli({}).code, 1);
}

TEST(Cli, UnknownFlagSuggests) {
  TempDir dir;
  const auto r = cli({"train", "--manifest", str(dir / "m.json"), "--out", str(dir / "o"), "--lamda", "3"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("--lambda"), std::string::npos);
}

TEST(Cli, InvalidSpecIsUsageErrorWithNoOutput) {
  TempDir dir;
  ASSERT_EQ(cli({"synth", "--count", "2", "--size", "8", "--out", str(dir / "corpus")}).code, 0);
  const auto r = cli({"build-dataset", "--corpus", str(dir / "corpus"), "--out", str(dir / "ds"), "--k", "300",
                      "--l", "256"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("k"), std::string::npos);
  EXPECT_NE(r.err.find("300"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "ds"));
}

TEST(Cli, MissingInputIsUsageError) {
  TempDir dir;
  EXPECT_EQ(cli({"simulate", "--input", str(dir / "nope.pgm"), "--out", str(dir / "o")}).code, 1);
  EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST(Cli, SimulateWritesFrameFile) {
  TempDir dir;
  ASSERT_EQ(cli({"synth", "--count", "1", "--size", "10", "--out", str(dir / "c")}).code, 0);
  const auto r = cli({"simulate", "--input", str(dir / "c" / "scene_00000.pgm"), "--frames", "7", "--seed", "3",
                      "--out", str(dir / "sim")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto frames = ps::read_frames(dir / "sim" / "frames.pssb");
  EXPECT_EQ(frames.size(), 7u);
  const auto j = r.report();
  EXPECT_EQ(j["command"], "simulate");
  EXPECT_EQ(j["config"]["sensor"]["seed"], 3);
  EXPECT_EQ(j["config"]["frames"], 7);
}

TEST(Cli, StatsPppMatchesIndependentMean) {
  TempDir dir;
  ASSERT_EQ(cli({"synth", "--count", "3", "--size", "16", "--out", str(dir / "c")}).code, 0);
  ASSERT_EQ(cli({"build-dataset", "--corpus", str(dir / "c"), "--out", str(dir / "ds"), "--levels", "5"}).code, 0);
  const auto level = dir / "ds" / "scenes" / "scene_00001" / "S16.pgm";
  ASSERT_TRUE(fs::exists(level));
  const auto r = cli({"stats", "--input", str(level), "--n", "16"});
  ASSERT_EQ(r.code, 0) << r.err;

  // Independent reading of the raw PGM bytes: 16-bit big-endian after a 3-line header.
  const auto bytes = ps::read_file_bytes(level);
  std::size_t pos = 0, newlines = 0;
  while (newlines < 3) newlines += bytes[pos++] == '\n';
  double sum = 0.0;
  std::size_t count = 0;
  for (; pos + 1 < bytes.size(); pos += 2, ++count) sum += bytes[pos] * 256.0 + bytes[pos + 1];
  EXPECT_EQ(count, 256u);
  EXPECT_DOUBLE_EQ(r.report()["result"]["ppp"].get<double>(), sum / count);
}

TEST(Cli, BuildDatasetIsIdempotent) {
  TempDir dir;
  ASSERT_EQ(cli({"synth", "--count", "4", "--size", "8", "--out", str(dir / "c")}).code, 0);
  for (const char* name : {"a", "b"})
    ASSERT_EQ(cli({"build-dataset", "--corpus", str(dir / "c"), "--out", str(dir / name), "--seed", "9"}).code, 0);
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(ps::read_file_bytes(e.path()), ps::read_file_bytes(dir / "b" / fs::relative(e.path(), dir / "a")));
  }
}

TEST(Cli, BuildDatasetPartialFailureExitsTwo) {
  TempDir dir;
  ASSERT_EQ(cli({"synth", "--count", "2", "--size", "8", "--out", str(dir / "c")}).code, 0);
  ps::write_file_atomic(dir / "c" / "bad.pgm", std::string_view("garbage"));
  const auto bytes = ps::read_file_bytes(dir / "c" / "labels.txt");
  const std::string labels(bytes.begin(), bytes.end());
  ps::write_file_atomic(dir / "c" / "labels.txt", labels + "bad.pgm circle\n");
  const auto r = cli({"build-dataset", "--corpus", str(dir / "c"), "--out", str(dir / "ds")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bad"), std::string::npos);
  EXPECT_EQ(ps::read_manifest(dir / "ds" / "manifest.json").entries.size(), 2u);
}

TEST(Cli, HotpixelCalibrateAndApply) {
  TempDir dir;
  std::vector<ps::BinaryFrame> dark(20, ps::BinaryFrame(5, 5));
  for (auto& f : dark) f.set(2, 2, true);
  ps::write_frames(dark, dir / "dark.pssb");
  auto r = cli({"hotpixel", "calibrate", "--dark", str(dir / "dark.pssb"), "--threshold", "0.1", "--out",
                str(dir / "cal")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.report()["result"]["hot_pixels"], 1);

  ps::NSumImage img{100, ps::Plane<std::uint32_t>(5, 5, 4)};
  img.counts(2, 2) = 99;
  ps::write_nsum(img, dir / "img.pgm");
  r = cli({"hotpixel", "apply", "--input", str(dir / "img.pgm"), "--mask", str(dir / "cal" / "hotpixels.pgm"),
           "--out", str(dir / "fixed")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(ps::read_nsum(dir / "fixed" / "img_corrected.pgm", 100).counts(2, 2), 4u);
}

TEST(Cli, TrainThenEval) {
  TempDir dir;
  ASSERT_EQ(cli({"synth", "--count", "8", "--size", "8", "--out", str(dir / "c")}).code, 0);
  ASSERT_EQ(cli({"build-dataset", "--corpus", str(dir / "c"), "--out", str(dir / "ds"), "--l", "16", "--levels",
                 "3"})
                .code,
            0);
  const auto manifest = str(dir / "ds" / "manifest.json");
  auto r = cli({"train", "--manifest", manifest, "--out", str(dir / "run"), "--epochs", "2", "--batch-groups", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = ps::read_file_bytes(dir / "run" / "metrics.csv");
  const std::string text(csv.begin(), csv.end());
  EXPECT_EQ(text.rfind("epoch,loss,ce,feature_mse,accuracy,lr\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  EXPECT_EQ(r.report()["config"]["lambda"], 25.0);

  r = cli({"eval", "--checkpoint", str(dir / "run" / "checkpoint.psnt"), "--manifest", manifest, "--level", "4"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.report()["config"]["level"], 4);
  EXPECT_EQ(cli({"eval", "--checkpoint", str(dir / "run" / "checkpoint.psnt"), "--manifest", manifest, "--level",
                 "5"})
                .code,
            1);
  EXPECT_EQ(cli({"train", "--manifest", manifest, "--out", str(dir / "x"), "--mode", "bogus"}).code, 1);
  EXPECT_FALSE(fs::exists(dir / "x"));
}

TEST(Cli, DepthMetrics) {
  TempDir dir;
  ps::write_pnm({1, 1, 1, 255, {2}}, dir / "t.pgm");
  ps::write_pnm({1, 1, 1, 255, {1}}, dir / "p.pgm");
  const auto r = cli({"depth-metrics", "--truth", str(dir / "t.pgm"), "--pred", str(dir / "p.pgm")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto res = r.report()["result"];
  EXPECT_DOUBLE_EQ(res["rel"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(res["rms"].get<double>(), 1.0);
  EXPECT_EQ(res["delta3"].get<double>(), 0.0);
  ps::write_pnm({1, 1, 1, 255, {0}}, dir / "z.pgm");
  EXPECT_EQ(cli({"depth-metrics", "--truth", str(dir / "z.pgm"), "--pred", str(dir / "p.pgm")}).code, 2);
}

TEST(Cli, ConfigFileWithFlagOverride) {
  TempDir dir;
  ps::write_file_atomic(dir / "cfg.toml", std::string_view("[synth]\ncount = 3\nsize = 6\nseed = 4\n"));
  const auto r = cli({"--config", str(dir / "cfg.toml"), "synth", "--count", "2", "--out", str(dir / "c")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = r.report();
  EXPECT_EQ(j["config"]["count"], 2);
  EXPECT_EQ(j["config"]["size"], 6);
}
