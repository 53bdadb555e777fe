#include <algorithm>
#include <fstream>
#include <regex>
#include <sstream>
#include <streambuf>

#include "cli.hpp"
#include "climdiff/datagen.hpp"
#include "climdiff/eval.hpp"
#include "test_util.hpp"

namespace climdiff {
namespace {

using testing::read_bytes;
using testing::TempDir;

struct CliResult {
  int code;
  std::string out, err;
};

CliResult run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

// A 16x16 dataset of 20 samples keeps the end-to-end tests fast.
class CliRun : public ::testing::Test {
 protected:
  void SetUp() override {
    std::ofstream(dir / "small.json") << R"({"data": {"n_samples": 20, "h": 16, "w": 16}})";
    const auto r = cli({"gen-data"});
    ASSERT_EQ(r.code, 0) << r.err;
  }

  CliResult cli(std::vector<std::string> args) const {
    std::vector<std::string> full{"--config", (dir / "small.json").string(), "--out", (dir / "run").string()};
    full.insert(full.end(), args.begin(), args.end());
    return run_cli(full);
  }

  std::filesystem::path run() const { return dir / "run"; }

  TempDir dir;
};

TEST(CliHelp, EveryFlagShowsItsDefault) {
  for (const char* sub : {"", "gen-data", "train", "sample", "evaluate", "report", "check-grad", "matrix"}) {
    std::vector<std::string> args;
    if (*sub) args.emplace_back(sub);
    args.emplace_back("--help");
    const auto r = run_cli(args);
    ASSERT_EQ(r.code, 0) << sub;
    std::istringstream lines(r.out);
    std::string line;
    std::size_t flags = 0;
    while (std::getline(lines, line)) {
      if (!std::regex_search(line, std::regex("^  --"))) continue;
      ++flags;
      EXPECT_NE(line.find('['), std::string::npos) << sub << ": " << line;
    }
    EXPECT_GT(flags, 0u) << sub;
  }
}

TEST(CliHelp, TopLevelListsSubcommands) {
  const auto r = run_cli({"--help"});
  for (const char* sub : {"gen-data", "train", "sample", "evaluate", "report", "check-grad", "matrix"}) {
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  }
}

TEST(CliErrors, UsageErrorsExitOne) {
  for (const std::vector<std::string>& args :
       {std::vector<std::string>{}, {"frobnicate"}, {"train", "--no-such-flag"}, {"train", "--steps", "many"}}) {
    const auto r = run_cli(args);
    EXPECT_EQ(r.code, cli::kUsage);
    EXPECT_EQ(r.err.rfind("error[usage]: ", 0), 0u) << r.err;
  }
}

TEST(CliErrors, RuntimeErrorsExitTwoWithKind) {
  TempDir dir;
  const auto missing = run_cli({"--out", (dir / "empty").string(), "train", "--steps", "1"});
  EXPECT_EQ(missing.code, cli::kRuntime);
  EXPECT_EQ(missing.err.rfind("error[io]: ", 0), 0u) << missing.err;

  std::ofstream(dir / "bad.json") << R"({"train": {"bogus": 1}})";
  const auto bad = run_cli({"--config", (dir / "bad.json").string(), "gen-data"});
  EXPECT_EQ(bad.code, cli::kRuntime);
  EXPECT_EQ(bad.err.rfind("error[config]: ", 0), 0u) << bad.err;
  EXPECT_NE(bad.err.find("train.bogus"), std::string::npos);

  const auto scale = run_cli({"--out", (dir / "x").string(), "gen-data", "--samples", "2"});
  EXPECT_EQ(scale.code, cli::kRuntime);
  EXPECT_EQ(scale.err.rfind("error[config]: ", 0), 0u) << scale.err;
}

TEST(CliErrors, UnknownMethodIsUsage) {
  TempDir dir;
  const auto r = run_cli({"--out", dir.path().string(), "train", "--method", "gan"});
  EXPECT_EQ(r.code, cli::kUsage);
  EXPECT_EQ(r.err.rfind("error[usage]: ", 0), 0u) << r.err;
}

TEST(CliGenData, ReferenceSplitAndStableHash) {
  TempDir dir;
  const auto a = run_cli({"--out", (dir / "a").string(), "gen-data"});
  const auto b = run_cli({"--out", (dir / "b").string(), "gen-data"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_NE(a.out.find("train 530  val 50  test 150"), std::string::npos) << a.out;
  EXPECT_EQ(a.out.substr(0, 25), b.out.substr(0, 25));
  EXPECT_EQ(read_fields(dir / "a" / "data" / "test.cgf").size(), 150u);
  EXPECT_EQ(dataset_hash(dir / "a" / "data"), dataset_hash(dir / "b" / "data"));

  const auto c = run_cli({"--seed", "1", "--out", (dir / "c").string(), "gen-data"});
  EXPECT_NE(dataset_hash(dir / "a" / "data"), dataset_hash(dir / "c" / "data"));
}

TEST_F(CliRun, TrainSmokeWritesOneLossRowPerIteration) {
  const auto r = cli({"train", "--steps", "50", "--timesteps", "20"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string log = read_bytes(run() / "logs" / "ddpm_3in1out_x4_loss.csv");
  EXPECT_EQ(log.rfind("iter,loss,lr\n", 0), 0u);
  EXPECT_EQ(count_lines(log), 51u);
  EXPECT_TRUE(std::filesystem::exists(run() / "ckpt" / "ddpm_3in1out_x4.ckpt"));
}

// Throws from the first write, standing in for a process killed mid-run.
class ThrowingBuf : public std::streambuf {
 protected:
  int_type overflow(int_type) override { throw std::runtime_error("interrupted"); }
  std::streamsize xsputn(const char*, std::streamsize) override { throw std::runtime_error("interrupted"); }
};

TEST_F(CliRun, ResumedTrainingMatchesUninterrupted) {
  const std::vector<std::string> train{"train", "--method", "unet", "--steps", "200", "--checkpoint-every", "100"};
  ASSERT_EQ(cli(train).code, 0);
  const auto ckpt = run() / "ckpt" / "unet_3in1out_x4.ckpt";
  const auto log = run() / "logs" / "unet_3in1out_x4_loss.csv";
  const std::string full_ckpt = read_bytes(ckpt), full_log = read_bytes(log);

  // progress is first printed after the checkpoint at iteration 100
  ThrowingBuf buf;
  std::ostream dying(&buf);
  dying.exceptions(std::ios::badbit);
  std::ostringstream err;
  std::vector<std::string> args{"--config", (dir / "small.json").string(), "--out", run().string()};
  args.insert(args.end(), train.begin(), train.end());
  EXPECT_EQ(cli::run(args, dying, err), cli::kRuntime);
  EXPECT_NE(read_bytes(ckpt), full_ckpt);

  auto resumed = train;
  resumed.push_back("--resume");
  const auto r = cli(resumed);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("iterations 100..200"), std::string::npos) << r.out;
  EXPECT_EQ(read_bytes(ckpt), full_ckpt);
  EXPECT_EQ(read_bytes(log), full_log);
}

TEST_F(CliRun, ResumeRejectsMismatchedArchitecture) {
  ASSERT_EQ(cli({"train", "--method", "srresnet", "--steps", "2"}).code, 0);
  const auto r = cli({"train", "--method", "srresnet", "--io", "3in3out", "--steps", "4", "--resume"});
  EXPECT_EQ(r.code, cli::kRuntime);
  const auto moved = run() / "ckpt" / "srresnet_3in3out_x4.ckpt";
  std::filesystem::copy_file(run() / "ckpt" / "srresnet_3in1out_x4.ckpt", moved);
  const auto r2 = cli({"train", "--method", "srresnet", "--io", "3in3out", "--steps", "4", "--resume"});
  EXPECT_EQ(r2.code, cli::kRuntime);
  EXPECT_EQ(r2.err.rfind("error[config]: ", 0), 0u) << r2.err;
}

TEST_F(CliRun, ThreeInThreeOutTrainsAndSamplesAllChannels) {
  ASSERT_EQ(cli({"train", "--io", "3in3out", "--steps", "5", "--timesteps", "10"}).code, 0);
  const auto r = cli({"sample", "--io", "3in3out", "--timesteps", "10"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto s = read_fields(run() / "samples" / "ddpm_3in3out_x4.cgf");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].channels(), default_channels());
}

TEST_F(CliRun, SampleIsReproducibleAndSized) {
  ASSERT_EQ(cli({"train", "--steps", "5", "--timesteps", "10"}).code, 0);
  const auto a = cli({"sample", "--timesteps", "10", "--output", (dir / "a.cgf").string()});
  const auto b = cli({"sample", "--timesteps", "10", "--output", (dir / "b.cgf").string()});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(read_bytes(dir / "a.cgf"), read_bytes(dir / "b.cgf"));
  const auto s = read_fields(dir / "a.cgf");
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].height(), 16u);
  EXPECT_EQ(s[0].width(), 16u);
  EXPECT_EQ(s[0].channels(), std::vector<std::string>{"PRECT"});
  EXPECT_TRUE(std::filesystem::exists(dir / "a_0.pgm"));
  EXPECT_TRUE(std::filesystem::exists(dir / "a_1.pgm"));
  EXPECT_EQ(read_bytes(dir / "a_1.pgm"), read_bytes(dir / "b_1.pgm"));

  // a different seed gives different chains
  const auto c = cli({"--seed", "3", "sample", "--timesteps", "10", "--output", (dir / "c.cgf").string(),
                      "--checkpoint", (run() / "ckpt" / "ddpm_3in1out_x4.ckpt").string()});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_NE(read_bytes(dir / "a.cgf"), read_bytes(dir / "c.cgf"));
}

TEST_F(CliRun, SampleFromInputFile) {
  const auto test = read_fields(run() / "data" / "test.cgf");
  write_fields(dir / "in.cgf", std::vector<Field>{degrade(test[0], 8)});
  const auto r = cli({"sample", "--method", "bicubic", "--scale", "8", "--input", (dir / "in.cgf").string(),
                      "--output", (dir / "out.cgf").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto out = read_fields(dir / "out.cgf");
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].height(), 16u);
}

TEST_F(CliRun, EvaluateInterpolationWithoutCheckpoints) {
  const std::vector<std::string> args{"evaluate", "--method", "bilinear", "--method", "bicubic"};
  const auto a = cli(args);
  ASSERT_EQ(a.code, 0) << a.err;
  const std::string csv = read_bytes(run() / "eval" / "report.csv");
  const auto rows = parse_report_csv(csv);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t s : {4u, 8u}) {
    for (const char* m : {"bilinear", "bicubic"}) {
      EXPECT_EQ(std::count_if(rows.begin(), rows.end(),
                              [&](const ReportRow& r) { return r.scale == s && r.method == m && r.n == 4; }),
                1);
    }
  }
  for (const auto& r : rows) EXPECT_GT(r.rmse, 0.0);
  EXPECT_TRUE(std::filesystem::exists(run() / "eval" / "report.txt"));
  const std::string meta = read_bytes(run() / "eval" / "report.json");
  EXPECT_NE(meta.find("dataset_hash"), std::string::npos);
  EXPECT_NE(meta.find("units"), std::string::npos);

  ASSERT_EQ(cli(args).code, 0);
  EXPECT_EQ(read_bytes(run() / "eval" / "report.csv"), csv);
}

TEST_F(CliRun, EvaluateLearnedNeedsCheckpoint) {
  const auto r = cli({"evaluate", "--method", "ddpm", "--scale", "4"});
  EXPECT_EQ(r.code, cli::kRuntime);
  EXPECT_EQ(r.err.rfind("error[io]: ", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("ddpm_3in1out_x4"), std::string::npos) << r.err;
}

TEST_F(CliRun, EvaluateLearnedAfterTraining) {
  ASSERT_EQ(cli({"train", "--method", "unet", "--steps", "3"}).code, 0);
  const auto r = cli({"evaluate", "--method", "unet", "--method", "bicubic", "--scale", "4", "--max-samples", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = parse_report_csv(read_bytes(run() / "eval" / "report.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].method, "unet");
  EXPECT_EQ(rows[1].io_config, "3in1out");
  EXPECT_EQ(rows[1].n, 2u);
}

}  // namespace
}  // namespace climdiff
