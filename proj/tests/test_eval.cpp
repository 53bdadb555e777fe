#include <algorithm>
#include <cmath>
#include <tuple>
#include <numbers>

#include "climdiff/baselines.hpp"
#include "climdiff/datagen.hpp"
#include "climdiff/eval.hpp"
#include "test_util.hpp"

namespace climdiff {
namespace {

using testing::constant_field;
using testing::error_kind;
using testing::random_field;
using testing::TempDir;

const std::vector<std::string> kPrect{"PRECT"};

TEST(Rmse, HandExamples) {
  const std::vector<Field> zero{Field({"PRECT"}, 1, 2, {0, 0})};
  const std::vector<Field> truth{Field({"PRECT"}, 1, 2, {3, 4})};
  EXPECT_NEAR(rmse(zero, truth, kPrect), std::sqrt(12.5), 1e-12);
  EXPECT_NEAR(rmse(zero, truth, kPrect), 3.53553, 1e-5);
  EXPECT_EQ(rmse(truth, truth, kPrect), 0.0);
}

TEST(Rmse, OnlyTargetChannelsCount) {
  const std::vector<Field> a{Field({"TS", "PRECT"}, 1, 1, {100, 1})};
  const std::vector<Field> b{Field({"TS", "PRECT"}, 1, 1, {0, 3})};
  EXPECT_DOUBLE_EQ(rmse(a, b, kPrect), 2.0);
  EXPECT_DOUBLE_EQ(rmse(a, b, {"TS", "PRECT"}), std::sqrt((10000.0 + 4.0) / 2));
  EXPECT_EQ(error_kind([&] { rmse(a, b, {"nope"}); }), ErrorKind::Shape);
}

TEST(Rmse, Properties) {
  Rng rng(1);
  std::vector<Field> p, t;
  for (int i = 0; i < 5; ++i) {
    p.push_back(random_field({"PRECT"}, 4, 4, rng));
    t.push_back(random_field({"PRECT"}, 4, 4, rng));
  }
  const double base = rmse(p, t, kPrect);
  EXPECT_NEAR(rmse(t, p, kPrect), base, 1e-12);
  std::vector<Field> p2 = p, t2 = t;
  for (auto& f : p2)
    for (auto& v : f.data()) v *= 3.0f;
  for (auto& f : t2)
    for (auto& v : f.data()) v *= 3.0f;
  EXPECT_NEAR(rmse(p2, t2, kPrect), 3.0 * base, 1e-6);
  std::reverse(p.begin(), p.end());
  std::reverse(t.begin(), t.end());
  EXPECT_NEAR(rmse(p, t, kPrect), base, 1e-12);
  EXPECT_EQ(error_kind([&] { rmse(p, std::vector<Field>(t.begin(), t.begin() + 2), kPrect); }), ErrorKind::Shape);
}

TEST(Rmse, PooledDiffersFromPerSampleMean) {
  const std::vector<Field> p{Field({"PRECT"}, 1, 1, {0}), Field({"PRECT"}, 1, 1, {0})};
  const std::vector<Field> t{Field({"PRECT"}, 1, 1, {1}), Field({"PRECT"}, 1, 1, {3})};
  EXPECT_DOUBLE_EQ(rmse(p, t, kPrect), std::sqrt(5.0));
  EXPECT_DOUBLE_EQ(rmse_per_sample(p, t, kPrect), 2.0);
}

TEST(Rmse, NormalizedUnitsDifferFromDataUnits) {
  Rng rng(2);
  std::vector<Field> p, t;
  for (int i = 0; i < 3; ++i) {
    Field a = random_field({"PRECT"}, 4, 4, rng, 5.0), b = random_field({"PRECT"}, 4, 4, rng, 5.0);
    for (auto& v : a.data()) v += 20.0f;
    for (auto& v : b.data()) v += 20.0f;
    p.push_back(a), t.push_back(b);
  }
  const auto stats = compute_norm_stats(t);
  std::vector<Field> pn, tn;
  for (int i = 0; i < 3; ++i) pn.push_back(normalize(p[i], stats)), tn.push_back(normalize(t[i], stats));
  const double data = rmse(p, t, kPrect), norm = rmse(pn, tn, kPrect);
  EXPECT_GT(std::abs(data - norm), 0.1 * data);
  // z-scoring divides every error by the same std
  EXPECT_NEAR(norm * stats.stats[0].std, data, 1e-4 * data);
}

TEST(PercentImprovement, TableValues) {
  EXPECT_NEAR(percent_improvement(3.3447, 4.0235), 16.87, 0.01);
  EXPECT_NEAR(percent_improvement(5.1803, 5.3193), 100.0 * (5.3193 - 5.1803) / 5.3193, 1e-12);
  EXPECT_NEAR(percent_improvement(5.1803, 5.3193), 2.61, 0.005);
  EXPECT_EQ(percent_improvement(2.0, 2.0), 0.0);
  EXPECT_LT(percent_improvement(3.0, 2.0), 0.0);
  EXPECT_THROW(percent_improvement(1.0, 0.0), Error);
  EXPECT_THROW(percent_improvement(1.0, -1.0), Error);
}

std::vector<ReportRow> sample_rows() {
  return {{"ddpm", "3in1out", 8, 5.1, 150},
          {"bicubic", "-", 4, 4.0, 150},
          {"ddpm", "3in1out", 4, 3.3, 150},
          {"bilinear", "-", 8, 5.6, 150},
          {"bicubic", "-", 8, 5.3, 150},
          {"unet", "3in3out", 4, 4.2, 150},
          {"unet", "3in1out", 4, 4.1, 150}};
}

TEST(Report, SortedByScaleMethodIo) {
  const auto r = build_report(sample_rows());
  ASSERT_EQ(r.rows.size(), 7u);
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    const auto& a = r.rows[i - 1];
    const auto& b = r.rows[i];
    EXPECT_LT(std::tie(a.scale, a.method, a.io_config), std::tie(b.scale, b.method, b.io_config));
  }
  EXPECT_EQ(r.rows[0].method, "bicubic");
  EXPECT_EQ(r.rows[3].io_config, "3in3out");
  EXPECT_EQ(r.rows.back().scale, 8u);
}

TEST(Report, RejectsDuplicatesAndNegative) {
  auto rows = sample_rows();
  rows.push_back(rows[0]);
  EXPECT_THROW(build_report(rows), Error);
  EXPECT_THROW(build_report({{"x", "-", 4, -1.0, 1}}), Error);
}

TEST(Report, CsvRoundTripIsExact) {
  auto rows = sample_rows();
  rows[0].rmse = 0.1 + 0.2;  // not representable in short decimal form
  const auto r = build_report(rows);
  const std::string csv = report_csv(r);
  EXPECT_EQ(csv.rfind("method,io_config,scale,rmse,n\n", 0), 0u);
  EXPECT_EQ(parse_report_csv(csv), r.rows);
  EXPECT_EQ(report_csv(build_report(parse_report_csv(csv))), csv);
  EXPECT_EQ(error_kind([] { parse_report_csv("a,b\n"); }), ErrorKind::Format);
  EXPECT_EQ(error_kind([] { parse_report_csv("method,io_config,scale,rmse,n\nx,-,four,1,1\n"); }),
            ErrorKind::Format);
}

TEST(Report, SingleRow) {
  const auto r = build_report({{"bicubic", "-", 4, 1.5, 3}});
  EXPECT_EQ(report_csv(r), "method,io_config,scale,rmse,n\nbicubic,-,4,1.5,3\n");
}

TEST(Report, TableShowsBothScalesAndImprovement) {
  const std::string t = report_table(build_report(sample_rows()));
  EXPECT_NE(t.find("ddpm"), std::string::npos);
  EXPECT_NE(t.find("3in3out"), std::string::npos);
  // ddpm at 4x: 100 * (4.0 - 3.3) / 4.0 = 17.50
  EXPECT_NE(t.find("17.50"), std::string::npos) << t;
  // bilinear at 8x: 100 * (5.3 - 5.6) / 5.3 = -5.66
  EXPECT_NE(t.find("-5.66"), std::string::npos) << t;
  std::size_t lines = 0;
  for (char c : t) lines += c == '\n';
  EXPECT_GE(lines, 8u);
}

std::size_t pgm_header_size(const std::vector<unsigned char>& b) {
  std::size_t newlines = 0, i = 0;
  while (newlines < 3) newlines += b.at(i++) == '\n';
  return i;
}

TEST(Pgm, ConstantFieldIsMidGray) {
  const auto b = render_pgm(constant_field({"PRECT"}, 3, 4, 7.0f), "PRECT");
  const std::string header(b.begin(), b.begin() + pgm_header_size(b));
  EXPECT_EQ(header, "P5\n4 3\n255\n");
  ASSERT_EQ(b.size(), header.size() + 12);
  for (std::size_t i = header.size(); i < b.size(); ++i) EXPECT_EQ(b[i], 128);
}

TEST(Pgm, MinMaxScaling) {
  const Field f({"TS", "PRECT"}, 1, 3, {9, 9, 9, -1, 0, 1});
  const auto b = render_pgm(f, "PRECT");
  const std::size_t h = pgm_header_size(b);
  EXPECT_EQ(b[h], 0);
  EXPECT_EQ(b[h + 1], 128);  // 127.5 rounds away from zero
  EXPECT_EQ(b[h + 2], 255);
  EXPECT_EQ(error_kind([&] { render_pgm(f, "dPHIS"); }), ErrorKind::Shape);
}

TEST(Pgm, DeterministicFileBytes) {
  TempDir dir;
  Rng rng(3);
  const Field f = random_field({"PRECT"}, 16, 16, rng);
  render_map(f, "PRECT", dir / "a.pgm");
  render_map(f, "PRECT", dir / "b.pgm");
  EXPECT_EQ(testing::read_bytes(dir / "a.pgm"), testing::read_bytes(dir / "b.pgm"));
  const auto bytes = render_pgm(f, "PRECT");
  EXPECT_EQ(testing::read_bytes(dir / "a.pgm"), std::string(bytes.begin(), bytes.end()));
}

TEST(HighFreq, ConstantAndRampAreZero) {
  EXPECT_EQ(highfreq_energy(constant_field({"x"}, 8, 8, 3.0f)), 0.0);
  Field ramp({"x"}, 8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) ramp.at(0, y, x) = static_cast<float>(0.5 * x + 2.0 * y);
  EXPECT_NEAR(highfreq_energy(ramp), 0.0, 1e-10);
  Field checker({"x"}, 8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) checker.at(0, y, x) = (x + y) % 2 ? 1.0f : -1.0f;
  // Laplacian of +-1 checkerboard is +-8 at every interior pixel
  EXPECT_DOUBLE_EQ(highfreq_energy(checker), 64.0);
}

TEST(HighFreq, InterpolationLosesDetail) {
  const auto fs = generate_fields([] {
    SyntheticSpec s;
    s.n_samples = 4;
    return s;
  }());
  for (const auto& hr : fs) {
    const Field target = hr.select({"PRECT"});
    const Field up = bicubic_upscale(degrade(target, 4), 4);
    EXPECT_LT(highfreq_energy(up), highfreq_energy(target));
  }
}

}  // namespace
}  // namespace climdiff
