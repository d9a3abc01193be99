#pragma once

// Depth-based forward warp between two camera poses: lift every source pixel
// to 3-D, move it into the target frame, and splat it with a z-buffer.

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "wcgen/geometry.hpp"
#include "wcgen/image.hpp"

namespace wcgen {

/// Splats closer than this are treated as ties and keep the earlier arrival.
inline constexpr double kDepthTieTolerance = 1e-6;

/// Warped color plus a validity mask. Invalid pixels are exactly black.
struct GuidanceImage {
  ImageBuffer color;
  BinaryMask validity;
  /// Depth of the winning splat, when the producer tracks it.
  std::optional<Raster<double>> depth;

  int width() const noexcept { return color.width(); }
  int height() const noexcept { return color.height(); }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : validity.values()) n += v != 0;
    return n;
  }
};

struct Splat {
  Vec3 point;
  Rgb color;
};

/// Nearest-pixel z-buffered rasterization, radius 0. Points behind the camera
/// or outside the image are dropped.
inline GuidanceImage rasterize_splats(std::span<const Splat> points, const Intrinsics& k,
                                      int width, int height) {
  GuidanceImage out{ImageBuffer(width, height), BinaryMask(width, height, 0),
                    Raster<double>(width, height, std::numeric_limits<double>::infinity())};
  auto& zbuf = *out.depth;
  for (const auto& splat : points) {
    const auto proj = project(splat.point, k);
    if (!proj) continue;
    const double px = std::floor(proj->pixel.u + 0.5);
    const double py = std::floor(proj->pixel.v + 0.5);
    if (!(px >= 0.0 && py >= 0.0 && px < width && py < height)) continue;
    const int x = static_cast<int>(px);
    const int y = static_cast<int>(py);
    if (proj->depth < zbuf(x, y) - kDepthTieTolerance) {
      zbuf(x, y) = proj->depth;
      out.color(x, y) = splat.color;
      out.validity(x, y) = 1;
    }
  }
  for (auto& z : zbuf.values())
    if (!std::isfinite(z)) z = 0.0;
  return out;
}

/// Reproject `src` into the camera reached by `rel`, using per-pixel depth.
/// Source pixels without valid depth are skipped.
inline GuidanceImage forward_warp(const ImageBuffer& src, const DepthMap& src_depth,
                                  const Intrinsics& k, const RelativePose& rel) {
  require(src.width() == src_depth.width() && src.height() == src_depth.height(),
          ErrorCode::invalid_argument, "forward_warp: image and depth sizes differ");
  require(src.width() == k.width && src.height() == k.height, ErrorCode::invalid_argument,
          "forward_warp: intrinsics do not match the image size");
  k.validate();
  rel.validate();

  std::vector<Splat> splats;
  splats.reserve(src_depth.valid_count());
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) {
      if (!src_depth.valid(x, y)) continue;
      const Vec3 p = unproject({double(x), double(y)}, src_depth.at(x, y), k);
      splats.push_back({apply_relative(p, rel), src(x, y)});
    }
  }
  return rasterize_splats(splats, k, src.width(), src.height());
}

inline double overlap_fraction(const GuidanceImage& g) {
  if (g.validity.empty()) return 0.0;
  return static_cast<double>(g.valid_count()) / static_cast<double>(g.validity.size());
}

}  // namespace wcgen
