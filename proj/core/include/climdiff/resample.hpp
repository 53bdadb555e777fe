#pragma once

#include <cstddef>

#include "climdiff/field.hpp"

namespace climdiff {

/// Catmull-Rom cubic convolution kernel (a = -0.5).
double cubic_kernel(double x, double a = -0.5);

/// Separable bicubic resampling with half-pixel centres and clamp-to-edge
/// sampling. With `antialias` and a shrinking axis the kernel is stretched by
/// the scale factor; weights are always renormalised to sum to one.
Field bicubic_resize(const Field& f, std::size_t out_h, std::size_t out_w, bool antialias);

/// Separable linear interpolation, half-pixel centres (align_corners = false),
/// source coordinates clamped to the grid.
Field bilinear_resize(const Field& f, std::size_t out_h, std::size_t out_w);

/// Mean over non-overlapping factor x factor blocks.
Field box_downsample(const Field& f, std::size_t factor);

}  // namespace climdiff
