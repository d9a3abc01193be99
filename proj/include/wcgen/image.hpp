#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wcgen/error.hpp"

namespace wcgen {

/// Dense row-major 2-D grid of values.
template <class T>
class Raster {
 public:
  using value_type = T;

  Raster() = default;
  Raster(int width, int height, const T& fill = T{}) : width_(width), height_(height) {
    require(width >= 0 && height >= 0, ErrorCode::invalid_argument,
            "raster dimensions must be non-negative");
    values_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& operator()(int x, int y) { return values_[index(x, y)]; }
  const T& operator()(int x, int y) const { return values_[index(x, y)]; }

  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }

  bool in_bounds(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  template <class U>
  bool same_shape(const Raster<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> values_;
};

using Rgb = std::array<float, 3>;

/// RGB raster with channel values in [0, 1].
using ImageBuffer = Raster<Rgb>;
/// 1 where a pixel is set.
using BinaryMask = Raster<std::uint8_t>;
/// Per-pixel weights in [0, 1].
using WeightMask = Raster<float>;
using BlurredMask = WeightMask;

/// Metric depth along the optical axis. Zero or non-finite entries are
/// invalid pixels and carry no depth.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height, double fill = 0.0) : values_(width, height, fill) {}

  int width() const noexcept { return values_.width(); }
  int height() const noexcept { return values_.height(); }

  bool valid(int x, int y) const noexcept {
    const double d = values_(x, y);
    return std::isfinite(d) && d > 0.0;
  }
  double at(int x, int y) const noexcept { return values_(x, y); }
  void set(int x, int y, double depth) { values_(x, y) = depth; }
  void invalidate(int x, int y) { values_(x, y) = 0.0; }

  std::size_t valid_count() const noexcept {
    return static_cast<std::size_t>(std::count_if(
        values_.values().begin(), values_.values().end(),
        [](double d) { return std::isfinite(d) && d > 0.0; }));
  }

  const Raster<double>& raster() const noexcept { return values_; }
  Raster<double>& raster() noexcept { return values_; }

  friend bool operator==(const DepthMap&, const DepthMap&) = default;

 private:
  Raster<double> values_;
};

inline float quantize_unit(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<float>(std::lround(clamped * 255.0f)) / 255.0f;
}

inline std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

/// Snap every channel to the nearest 8-bit level. Idempotent.
inline ImageBuffer quantized(ImageBuffer img) {
  for (auto& px : img.values())
    for (auto& c : px) c = quantize_unit(c);
  return img;
}

inline WeightMask quantized(WeightMask mask) {
  for (auto& w : mask.values()) w = quantize_unit(w);
  return mask;
}

/// Snap depths to the 1/depth_scale grid used by 16-bit depth files.
/// Depths that round to zero or overflow 16 bits become invalid.
inline DepthMap quantized(DepthMap depth, double depth_scale) {
  for (auto& d : depth.raster().values()) {
    if (!(std::isfinite(d) && d > 0.0)) {
      d = 0.0;
      continue;
    }
    const double units = std::round(d * depth_scale);
    d = (units >= 1.0 && units <= 65535.0) ? units / depth_scale : 0.0;
  }
  return depth;
}

inline double mean_abs_difference(const ImageBuffer& a, const ImageBuffer& b) {
  require(a.same_shape(b), ErrorCode::invalid_argument, "image size mismatch");
  if (a.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (int c = 0; c < 3; ++c) sum += std::abs(double(a.values()[i][c]) - b.values()[i][c]);
  return sum / (3.0 * static_cast<double>(a.size()));
}

/// Bilinear lookup at continuous pixel coordinates (pixel centers at integers).
/// Caller guarantees 0 <= x <= width-1 and 0 <= y <= height-1.
inline Rgb sample_bilinear(const ImageBuffer& img, double x, double y) {
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, img.width() - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, img.height() - 1);
  const int x1 = std::min(x0 + 1, img.width() - 1);
  const int y1 = std::min(y0 + 1, img.height() - 1);
  const double fx = std::clamp(x - x0, 0.0, 1.0);
  const double fy = std::clamp(y - y0, 0.0, 1.0);
  const Rgb& a = img(x0, y0);
  const Rgb& b = img(x1, y0);
  const Rgb& c = img(x0, y1);
  const Rgb& d = img(x1, y1);
  Rgb out{};
  for (int k = 0; k < 3; ++k) {
    const double top = a[k] + (b[k] - a[k]) * fx;
    const double bottom = c[k] + (d[k] - c[k]) * fx;
    out[k] = static_cast<float>(top + (bottom - top) * fy);
  }
  return out;
}

}  // namespace wcgen
