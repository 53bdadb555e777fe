#include "climdiff/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <tuple>

#include "climdiff/error.hpp"

namespace climdiff {

namespace {

struct SquaredError {
  double sum = 0.0;
  std::size_t count = 0;
};

SquaredError squared_error(const Field& p, const Field& t, const std::vector<std::string>& targets) {
  if (p.height() != t.height() || p.width() != t.width()) {
    fail(ErrorKind::Shape, "rmse: prediction is " + std::to_string(p.height()) + "x" + std::to_string(p.width()) +
                               ", truth is " + std::to_string(t.height()) + "x" + std::to_string(t.width()));
  }
  SquaredError acc;
  for (const auto& name : targets) {
    const auto a = p.plane(p.require_channel(name));
    const auto b = t.plane(t.require_channel(name));
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
      acc.sum += d * d;
    }
    acc.count += a.size();
  }
  return acc;
}

void check_batches(std::span<const Field> pred, std::span<const Field> truth, const std::vector<std::string>& targets) {
  if (pred.size() != truth.size()) {
    fail(ErrorKind::Shape, "rmse: " + std::to_string(pred.size()) + " predictions for " +
                               std::to_string(truth.size()) + " targets");
  }
  if (pred.empty()) fail(ErrorKind::Shape, "rmse: empty batch");
  if (targets.empty()) fail(ErrorKind::Shape, "rmse: no target channels");
}

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.emplace_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_number(const std::string& s, const char* what) {
  T value{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end) fail(ErrorKind::Format, std::string("report csv: bad ") + what + " '" + s + "'");
  return value;
}

}  // namespace

double rmse(std::span<const Field> pred, std::span<const Field> truth, const std::vector<std::string>& targets) {
  check_batches(pred, truth, targets);
  SquaredError total;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto e = squared_error(pred[i], truth[i], targets);
    total.sum += e.sum;
    total.count += e.count;
  }
  return std::sqrt(total.sum / static_cast<double>(total.count));
}

double rmse_per_sample(std::span<const Field> pred, std::span<const Field> truth,
                       const std::vector<std::string>& targets) {
  check_batches(pred, truth, targets);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto e = squared_error(pred[i], truth[i], targets);
    acc += std::sqrt(e.sum / static_cast<double>(e.count));
  }
  return acc / static_cast<double>(pred.size());
}

double percent_improvement(double ours, double baseline) {
  if (!(baseline > 0.0)) fail(ErrorKind::Range, "percent_improvement: baseline RMSE must be positive");
  return 100.0 * (baseline - ours) / baseline;
}

EvalReport build_report(std::vector<ReportRow> rows, ReportMetadata metadata) {
  if (rows.empty()) fail(ErrorKind::Usage, "report: no result rows");
  auto key = [](const ReportRow& r) { return std::tie(r.scale, r.method, r.io_config); };
  std::stable_sort(rows.begin(), rows.end(), [&](const ReportRow& a, const ReportRow& b) { return key(a) < key(b); });
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!(rows[i].rmse >= 0.0)) fail(ErrorKind::Range, "report: negative or NaN RMSE for " + rows[i].method);
    if (i > 0 && key(rows[i]) == key(rows[i - 1])) {
      fail(ErrorKind::Usage, "report: duplicate row " + rows[i].method + "/" + rows[i].io_config + "/x" +
                                 std::to_string(rows[i].scale));
    }
  }
  return EvalReport{std::move(rows), std::move(metadata)};
}

std::string report_csv(const EvalReport& report) {
  std::string out = "method,io_config,scale,rmse,n\n";
  char buf[64];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.rmse);
    out += r.method + "," + r.io_config + "," + std::to_string(r.scale) + "," + buf + "," + std::to_string(r.n) + "\n";
  }
  return out;
}

std::vector<ReportRow> parse_report_csv(std::string_view csv) {
  std::vector<ReportRow> rows;
  std::size_t pos = 0;
  bool header = true;
  while (pos < csv.size()) {
    auto end = csv.find('\n', pos);
    if (end == std::string_view::npos) end = csv.size();
    auto line = csv.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      if (line != "method,io_config,scale,rmse,n") fail(ErrorKind::Format, "report csv: unexpected header");
      header = false;
      continue;
    }
    const auto cols = split(line, ',');
    if (cols.size() != 5) fail(ErrorKind::Format, "report csv: expected 5 columns in '" + std::string(line) + "'");
    rows.push_back({cols[0], cols[1], parse_number<std::size_t>(cols[2], "scale"), parse_number<double>(cols[3], "rmse"),
                    parse_number<std::size_t>(cols[4], "n")});
  }
  if (header) fail(ErrorKind::Format, "report csv: missing header");
  return rows;
}

std::string report_table(const EvalReport& report) {
  std::map<std::size_t, double> bicubic;
  for (const auto& r : report.rows) {
    if (r.method == "bicubic") bicubic[r.scale] = r.rmse;
  }
  std::vector<std::vector<std::string>> cells{{"method", "io", "scale", "rmse", "n", "vs bicubic"}};
  for (const auto& r : report.rows) {
    std::ostringstream rm;
    rm << std::setprecision(6) << r.rmse;
    std::string pct = "-";
    const auto it = bicubic.find(r.scale);
    if (r.method != "bicubic" && it != bicubic.end() && it->second > 0.0) {
      std::ostringstream p;
      p << std::showpos << std::fixed << std::setprecision(2) << percent_improvement(r.rmse, it->second) << "%";
      pct = p.str();
    }
    cells.push_back({r.method, r.io_config, std::to_string(r.scale) + "x", rm.str(), std::to_string(r.n), pct});
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  if (!report.metadata.dataset_hash.empty()) {
    out << "dataset " << report.metadata.dataset_hash << "  seed " << report.metadata.seed << "\n";
  }
  out << "units: " << report.metadata.units << "\n";
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << "  ";
      // text columns left-aligned, numbers right-aligned
      if (c < 2) out << std::left; else out << std::right;
      out << std::setw(static_cast<int>(width[c])) << row[c];
    }
    out << "\n";
  }
  return out.str();
}

std::vector<unsigned char> render_pgm(const Field& f, std::string_view channel) {
  const auto plane = f.plane(f.require_channel(channel));
  const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
  const std::string header = "P5\n" + std::to_string(f.width()) + " " + std::to_string(f.height()) + "\n255\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  bytes.reserve(header.size() + plane.size());
  const double range = static_cast<double>(*hi) - static_cast<double>(*lo);
  for (float v : plane) {
    if (!(range > 0.0)) {
      bytes.push_back(128);
      continue;
    }
    const double s = (static_cast<double>(v) - *lo) / range;
    bytes.push_back(static_cast<unsigned char>(std::lround(std::clamp(s, 0.0, 1.0) * 255.0)));
  }
  return bytes;
}

void render_map(const Field& f, std::string_view channel, const std::filesystem::path& path) {
  const auto bytes = render_pgm(f, channel);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

double highfreq_energy(const Field& f) {
  const std::size_t h = f.height(), w = f.width();
  if (h < 3 || w < 3) return 0.0;
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < f.num_channels(); ++c) {
    for (std::size_t y = 1; y + 1 < h; ++y) {
      for (std::size_t x = 1; x + 1 < w; ++x) {
        const double lap = static_cast<double>(f.at(c, y - 1, x)) + f.at(c, y + 1, x) + f.at(c, y, x - 1) +
                           f.at(c, y, x + 1) - 4.0 * static_cast<double>(f.at(c, y, x));
        acc += lap * lap;
        ++count;
      }
    }
  }
  return count ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace climdiff
