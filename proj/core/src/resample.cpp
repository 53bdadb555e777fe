#include "climdiff/resample.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "climdiff/error.hpp"

namespace climdiff {

namespace {

/// Sparse resampling matrix for one axis.
struct AxisWeights {
  std::vector<std::vector<std::size_t>> index;
  std::vector<std::vector<double>> weight;
};

AxisWeights cubic_axis(std::size_t in, std::size_t out, bool antialias) {
  AxisWeights aw;
  aw.index.resize(out);
  aw.weight.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double stretch = (antialias && scale > 1.0) ? scale : 1.0;
  const double radius = 2.0 * stretch;
  for (std::size_t i = 0; i < out; ++i) {
    const double center = (static_cast<double>(i) + 0.5) * scale - 0.5;
    const auto lo = static_cast<std::ptrdiff_t>(std::floor(center - radius));
    const auto hi = static_cast<std::ptrdiff_t>(std::ceil(center + radius));
    double total = 0.0;
    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
      const double w = cubic_kernel((static_cast<double>(j) - center) / stretch);
      if (w == 0.0) continue;
      const auto clamped = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(j, 0, static_cast<std::ptrdiff_t>(in) - 1));
      aw.index[i].push_back(clamped);
      aw.weight[i].push_back(w);
      total += w;
    }
    for (auto& w : aw.weight[i]) w /= total;
  }
  return aw;
}

AxisWeights linear_axis(std::size_t in, std::size_t out) {
  AxisWeights aw;
  aw.index.resize(out);
  aw.weight.resize(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    aw.index[i] = {i0, i1};
    aw.weight[i] = {1.0 - frac, frac};
  }
  return aw;
}

Field apply_separable(const Field& f, std::size_t out_h, std::size_t out_w, const AxisWeights& rows,
                      const AxisWeights& cols) {
  if (out_h == 0 || out_w == 0) fail(ErrorKind::Shape, "resize: output dims must be positive");
  Field out(f.channels(), out_h, out_w);
  std::vector<double> tmp(f.height() * out_w);
  for (std::size_t c = 0; c < f.num_channels(); ++c) {
    const auto src = f.plane(c);
    for (std::size_t y = 0; y < f.height(); ++y) {
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < cols.index[x].size(); ++k) {
          acc += cols.weight[x][k] * src[y * f.width() + cols.index[x][k]];
        }
        tmp[y * out_w + x] = acc;
      }
    }
    auto dst = out.plane(c);
    for (std::size_t y = 0; y < out_h; ++y) {
      for (std::size_t x = 0; x < out_w; ++x) {
        double acc = 0.0;
        for (std::size_t k = 0; k < rows.index[y].size(); ++k) acc += rows.weight[y][k] * tmp[rows.index[y][k] * out_w + x];
        dst[y * out_w + x] = static_cast<float>(acc);
      }
    }
  }
  return out;
}

}  // namespace

double cubic_kernel(double x, double a) {
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

Field bicubic_resize(const Field& f, std::size_t out_h, std::size_t out_w, bool antialias) {
  return apply_separable(f, out_h, out_w, cubic_axis(f.height(), out_h, antialias),
                         cubic_axis(f.width(), out_w, antialias));
}

Field bilinear_resize(const Field& f, std::size_t out_h, std::size_t out_w) {
  return apply_separable(f, out_h, out_w, linear_axis(f.height(), out_h), linear_axis(f.width(), out_w));
}

Field box_downsample(const Field& f, std::size_t factor) {
  if (factor == 0 || f.height() % factor != 0 || f.width() % factor != 0) {
    fail(ErrorKind::Shape, "box_downsample: dims not divisible by " + std::to_string(factor));
  }
  const std::size_t oh = f.height() / factor, ow = f.width() / factor;
  Field out(f.channels(), oh, ow);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t c = 0; c < f.num_channels(); ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t dy = 0; dy < factor; ++dy) {
          for (std::size_t dx = 0; dx < factor; ++dx) acc += f.at(c, y * factor + dy, x * factor + dx);
        }
        out.at(c, y, x) = static_cast<float>(acc * inv);
      }
    }
  }
  return out;
}

}  // namespace climdiff
