#pragma once

// Rotation-only warps between perspectives that share a camera center, plus
// the mask algebra used to turn several warped neighbors into one outpainting
// request.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "wcgen/geometry.hpp"
#include "wcgen/image.hpp"
#include "wcgen/trajwarp.hpp"

namespace wcgen {

/// Round coordinates that sit on a pixel center up to floating-point noise,
/// so identity and grid-aligned rotations resample exactly.
inline double snap_to_integer(double x) {
  const double r = std::round(x);
  return std::abs(x - r) < 1e-9 ? r : x;
}

/// Resample `src` as seen after rotating its rays by view_rotation * extrinsic.
///
/// Inverse mapping: each target ray is rotated back into the source frame and
/// bilinearly sampled. Target pixels whose ray leaves the source frustum
/// (pixel-center extent) or points behind it are invalid.
inline GuidanceImage rotation_warp(const ImageBuffer& src, const Intrinsics& k,
                                   const Mat3& view_rotation, const Mat3& extrinsic) {
  require(src.width() == k.width && src.height() == k.height, ErrorCode::invalid_argument,
          "rotation_warp: intrinsics do not match the image size");
  k.validate();
  require_rotation(view_rotation, "view rotation");
  require_rotation(extrinsic, "extrinsic rotation");

  const Mat3 back = (view_rotation * extrinsic).transpose();
  const int w = src.width();
  const int h = src.height();
  constexpr double eps = 1e-7;
  const double max_u = w - 1;
  const double max_v = h - 1;

  GuidanceImage out{ImageBuffer(w, h), BinaryMask(w, h, 0), std::nullopt};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Direction ray = back * pixel_to_sphere({double(x), double(y)}, k);
      const auto proj = project(ray, k);
      if (!proj) continue;
      const double u = snap_to_integer(proj->pixel.u);
      const double v = snap_to_integer(proj->pixel.v);
      if (u < -eps || v < -eps || u > max_u + eps || v > max_v + eps) continue;
      out.color(x, y) = sample_bilinear(src, std::clamp(u, 0.0, max_u), std::clamp(v, 0.0, max_v));
      out.validity(x, y) = 1;
    }
  }
  return out;
}

/// 1 exactly where the guidance received data.
inline BinaryMask binarize_mask(const GuidanceImage& g) {
  BinaryMask m(g.validity.width(), g.validity.height(), 0);
  for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = g.validity.values()[i] ? 1 : 0;
  return m;
}

inline int blur_radius(double sigma) { return static_cast<int>(std::floor(3.0 * sigma)); }

/// Separable Gaussian blur of a binary mask, truncated at 3 sigma with edge
/// replication. sigma = 0 is the identity.
inline BlurredMask blur_mask(const BinaryMask& m, double sigma) {
  require(std::isfinite(sigma) && sigma >= 0.0, ErrorCode::invalid_argument,
          "blur sigma must be non-negative");
  const int w = m.width();
  const int h = m.height();
  BlurredMask out(w, h, 0.0f);
  for (std::size_t i = 0; i < m.size(); ++i) out.values()[i] = m.values()[i] ? 1.0f : 0.0f;
  const int radius = blur_radius(sigma);
  if (radius == 0 || m.empty()) return out;

  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (auto& kv : kernel) kv /= total;

  Raster<double> tmp(w, h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * out(std::clamp(x + i, 0, w - 1), y);
      tmp(x, y) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * tmp(x, std::clamp(y + i, 0, h - 1));
      out(x, y) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  // Re-snap values that are 1 or 0 up to rounding so untouched regions stay exact.
  for (auto& v : out.values()) {
    if (v > 1.0f - 1e-6f) v = 1.0f;
    if (v < 1e-6f) v = 0.0f;
  }
  return out;
}

inline double default_blur_sigma(int width) { return 0.01 * width; }

struct MergedGuidance {
  GuidanceImage guidance;
  /// 1 where no input covered the pixel.
  BinaryMask holes;
};

/// A guidance image with explicit per-pixel weights.
struct WeightedGuidance {
  const GuidanceImage* guidance = nullptr;
  const WeightMask* weights = nullptr;
};

/// Normalized weighted sum: sum(g_k * v_k) / max(1, sum(v_k)).
inline MergedGuidance merge_guidance(std::span<const WeightedGuidance> items) {
  require(!items.empty(), ErrorCode::invalid_argument, "merge_guidance needs at least one input");
  const int w = items.front().guidance->width();
  const int h = items.front().guidance->height();
  for (const auto& it : items) {
    require(it.guidance->width() == w && it.guidance->height() == h &&
                it.weights->width() == w && it.weights->height() == h,
            ErrorCode::invalid_argument, "merge_guidance: dimension mismatch");
  }
  MergedGuidance out{{ImageBuffer(w, h), BinaryMask(w, h, 0), std::nullopt}, BinaryMask(w, h, 1)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sum[3] = {0.0, 0.0, 0.0};
      double weight = 0.0;
      for (const auto& it : items) {
        const double v = (*it.weights)(x, y);
        if (v <= 0.0) continue;
        const Rgb& c = it.guidance->color(x, y);
        for (int ch = 0; ch < 3; ++ch) sum[ch] += c[ch] * v;
        weight += v;
      }
      if (weight <= 0.0) continue;
      const double norm = std::max(1.0, weight);
      for (int ch = 0; ch < 3; ++ch) out.guidance.color(x, y)[ch] = static_cast<float>(sum[ch] / norm);
      out.guidance.validity(x, y) = 1;
      out.holes(x, y) = 0;
    }
  return out;
}

/// Merge using each guidance image's own validity as a binary weight.
inline MergedGuidance merge_guidance(std::span<const GuidanceImage> items) {
  require(!items.empty(), ErrorCode::invalid_argument, "merge_guidance needs at least one input");
  std::vector<WeightMask> weights;
  weights.reserve(items.size());
  for (const auto& g : items) {
    WeightMask wm(g.validity.width(), g.validity.height(), 0.0f);
    for (std::size_t i = 0; i < wm.size(); ++i) wm.values()[i] = g.validity.values()[i] ? 1.0f : 0.0f;
    weights.push_back(std::move(wm));
  }
  std::vector<WeightedGuidance> refs;
  refs.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) refs.push_back({&items[i], &weights[i]});
  return merge_guidance(std::span<const WeightedGuidance>(refs));
}

}  // namespace wcgen
