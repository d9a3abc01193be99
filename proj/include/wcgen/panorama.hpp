#pragma once

// Perspective grid of one viewpoint: layout, traversal order for outpainting,
// neighbor sets, equirectangular assembly and the consistency metrics.
//
// Index layout: row 0 [0, n_h) looks down, row 1 [n_h, 2 n_h) is horizontal,
// row 2 [2 n_h, 3 n_h) looks up. Columns advance clockwise (rightward) by the
// heading step, and column 0 of the horizontal row is the viewpoint's base
// camera frame.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "wcgen/geometry.hpp"
#include "wcgen/image.hpp"
#include "wcgen/trajwarp.hpp"
#include "wcgen/viewwarp.hpp"

namespace wcgen {

struct ViewGrid {
  int n = 36;
  int n_h = 12;
  std::array<double, 3> elevations{-30.0, 0.0, 30.0};
  double heading_step = 30.0;

  int row(int i) const { return i / n_h; }
  int column(int i) const { return i % n_h; }
  int index(int row, int column) const { return row * n_h + column; }
  bool contains(int i) const { return i >= 0 && i < n; }

  void validate() const {
    require(n_h >= 1 && n == 3 * n_h, ErrorCode::invalid_argument,
            "view grid requires n = 3 * n_h with n_h >= 1");
    require(std::isfinite(heading_step), ErrorCode::invalid_argument, "heading step must be finite");
  }

  friend bool operator==(const ViewGrid&, const ViewGrid&) = default;
};

/// Orientation of perspective i relative to the viewpoint's base camera frame
/// (camera-to-base).
inline Mat3 grid_rotation(int i, const ViewGrid& grid) {
  grid.validate();
  require(grid.contains(i), ErrorCode::invalid_argument,
          "perspective index " + std::to_string(i) + " out of range");
  return yaw_rotation(grid.column(i) * grid.heading_step) *
         pitch_rotation(grid.elevations[grid.row(i)]);
}

/// Rotation taking rays of perspective `from` into the frame of perspective `to`.
inline Mat3 relative_view_rotation(int from, int to, const ViewGrid& grid) {
  return grid_rotation(to, grid).transpose() * grid_rotation(from, grid);
}

/// Base camera frame to world: the base camera looks along world +y (heading
/// 0), its x axis is world +x and its y axis is world -z.
inline Mat3 base_to_world() {
  Mat3 m;
  m << 1.0, 0.0, 0.0,
       0.0, 0.0, 1.0,
       0.0, -1.0, 0.0;
  return m;
}

/// Camera-to-world pose of perspective i of a viewpoint at `position`.
inline Pose camera_pose(const Vec3& position, int i, const ViewGrid& grid) {
  return Pose{base_to_world() * grid_rotation(i, grid), position};
}

struct TraversalQueue {
  int reference = 0;
  std::vector<int> order;
};

/// Outpainting order: the reference column's other two rows, then every
/// remaining column clockwise as (same-row index, then its two other rows).
///
/// The printed pseudocode revisits the reference column on its last pass and
/// appends the reference itself; both are dropped so the result is a
/// permutation of all indices except the reference.
inline TraversalQueue traversal_queue(int r, const ViewGrid& grid) {
  grid.validate();
  require(grid.contains(r), ErrorCode::invalid_argument,
          "reference index " + std::to_string(r) + " out of range");
  const int ref_row = grid.row(r);
  // Companion order per reference row: down -> (+1, +2), horizontal -> (-1, +1), up -> (-1, -2).
  static constexpr std::array<std::array<int, 2>, 3> companions{{{1, 2}, {0, 2}, {1, 0}}};

  TraversalQueue q{r, {}};
  q.order.reserve(grid.n - 1);
  for (int step = 0; step < grid.n_h; ++step) {
    const int col = (grid.column(r) + step) % grid.n_h;
    if (step > 0) q.order.push_back(grid.index(ref_row, col));
    for (int other : companions[ref_row]) q.order.push_back(grid.index(other, col));
  }
  return q;
}

inline bool grid_adjacent(int a, int b, const ViewGrid& grid) {
  if (a == b) return false;
  const int ra = grid.row(a), rb = grid.row(b);
  const int ca = grid.column(a), cb = grid.column(b);
  if (ca == cb) return std::abs(ra - rb) == 1;
  if (ra != rb || grid.n_h < 2) return false;
  return (ca + 1) % grid.n_h == cb || (cb + 1) % grid.n_h == ca;
}

struct NeighborSet {
  int target = 0;
  std::vector<int> members;  // ascending
};

/// All already-generated perspectives adjacent to `i`: above and below in the
/// same column, left and right in the same row with wraparound.
inline NeighborSet neighbor_set(int i, const std::set<int>& generated, int r, const ViewGrid& grid) {
  grid.validate();
  require(grid.contains(i) && grid.contains(r), ErrorCode::invalid_argument,
          "neighbor_set: index out of range");
  require(!generated.contains(i), ErrorCode::invalid_argument,
          "neighbor_set: target " + std::to_string(i) + " is already generated");
  require(generated.contains(r), ErrorCode::invalid_argument,
          "neighbor_set: reference " + std::to_string(r) + " has not been generated");
  NeighborSet s{i, {}};
  for (int j : generated)
    if (grid_adjacent(i, j, grid)) s.members.push_back(j);
  require(!s.members.empty(), ErrorCode::invalid_state,
          "neighbor_set: no generated neighbor for " + std::to_string(i) +
              " (traversal order violated)");
  return s;
}

/// Every unordered adjacent pair (i < j), including the row wraparound pairs.
inline std::vector<std::pair<int, int>> grid_edges(const ViewGrid& grid) {
  grid.validate();
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < grid.n; ++i)
    for (int j = i + 1; j < grid.n; ++j)
      if (grid_adjacent(i, j, grid)) edges.emplace_back(i, j);
  return edges;
}

inline void require_views(std::span<const ImageBuffer> views, const Intrinsics& k,
                          const ViewGrid& grid) {
  grid.validate();
  require(static_cast<int>(views.size()) == grid.n, ErrorCode::invalid_argument,
          "expected " + std::to_string(grid.n) + " views, got " + std::to_string(views.size()));
  for (const auto& v : views)
    require(v.width() == k.width && v.height() == k.height, ErrorCode::invalid_argument,
            "view dimensions do not match the intrinsics");
}

/// Unit direction in the base camera frame for a longitude (clockwise from
/// heading 0) and latitude (up positive), in radians.
inline Direction direction_from_lonlat(double lon, double lat) {
  return {std::cos(lat) * std::sin(lon), -std::sin(lat), std::cos(lat) * std::cos(lon)};
}

/// Equirectangular panorama from a full set of perspectives. Each output pixel
/// blends every covering view, weighted by the product of the normalized
/// distances to that view's four edges. Directions seen by no view stay black.
inline ImageBuffer assemble_equirect(std::span<const ImageBuffer> views, const Intrinsics& k,
                                     const ViewGrid& grid, int out_width, int out_height) {
  require_views(views, k, grid);
  require(out_width > 0 && out_height > 0, ErrorCode::invalid_argument,
          "panorama size must be positive");
  k.validate();
  std::vector<Mat3> to_view(grid.n);
  for (int i = 0; i < grid.n; ++i) to_view[i] = grid_rotation(i, grid).transpose();

  const double max_u = k.width - 1;
  const double max_v = k.height - 1;
  ImageBuffer out(out_width, out_height);
  for (int y = 0; y < out_height; ++y) {
    const double lat = std::numbers::pi / 2.0 - (y + 0.5) / out_height * std::numbers::pi;
    for (int x = 0; x < out_width; ++x) {
      const double lon = (x + 0.5) / out_width * 2.0 * std::numbers::pi - std::numbers::pi;
      const Direction d = direction_from_lonlat(lon, lat);
      double acc[3] = {0.0, 0.0, 0.0};
      double total = 0.0;
      for (int i = 0; i < grid.n; ++i) {
        const auto proj = project(to_view[i] * d, k);
        if (!proj) continue;
        const double u = proj->pixel.u;
        const double v = proj->pixel.v;
        if (u < 0.0 || v < 0.0 || u > max_u || v > max_v) continue;
        const double weight = (u / max_u) * ((max_u - u) / max_u) * (v / max_v) * ((max_v - v) / max_v);
        if (weight <= 0.0) continue;
        const Rgb c = sample_bilinear(views[i], u, v);
        for (int ch = 0; ch < 3; ++ch) acc[ch] += weight * c[ch];
        total += weight;
      }
      if (total <= 0.0) continue;
      for (int ch = 0; ch < 3; ++ch) out(x, y)[ch] = static_cast<float>(acc[ch] / total);
    }
  }
  return out;
}

/// Mean absolute error over the pixels where `warped` is valid.
inline double masked_mean_abs_error(const GuidanceImage& warped, const ImageBuffer& reference,
                                    std::size_t* valid_pixels = nullptr) {
  require(warped.color.same_shape(reference), ErrorCode::invalid_argument,
          "masked error: size mismatch");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < reference.size(); ++p) {
    if (!warped.validity.values()[p]) continue;
    for (int c = 0; c < 3; ++c)
      sum += std::abs(double(warped.color.values()[p][c]) - reference.values()[p][c]);
    ++count;
  }
  if (valid_pixels) *valid_pixels = count;
  return count ? sum / (3.0 * count) : 0.0;
}

struct SeamEdge {
  int i = 0;
  int j = 0;
  double error_into_i = 0.0;  // j warped into i, compared against i
  double error_into_j = 0.0;  // i warped into j, compared against j
  double overlap = 0.0;       // valid fraction of the j -> i warp
  double error() const { return std::max(error_into_i, error_into_j); }
};

struct SeamReport {
  std::vector<SeamEdge> edges;
  double max_error = 0.0;
  double mean_error = 0.0;
};

/// Photometric disagreement across every adjacent pair of perspectives.
inline SeamReport seam_error(std::span<const ImageBuffer> views, const Intrinsics& k,
                             const ViewGrid& grid) {
  require_views(views, k, grid);
  SeamReport report;
  const Mat3 identity = Mat3::Identity();
  for (auto [i, j] : grid_edges(grid)) {
    SeamEdge e{i, j};
    std::size_t valid = 0;
    const auto ji = rotation_warp(views[j], k, relative_view_rotation(j, i, grid), identity);
    e.error_into_i = masked_mean_abs_error(ji, views[i], &valid);
    e.overlap = static_cast<double>(valid) / static_cast<double>(views[i].size());
    const auto ij = rotation_warp(views[i], k, relative_view_rotation(i, j, grid), identity);
    e.error_into_j = masked_mean_abs_error(ij, views[j]);
    report.max_error = std::max(report.max_error, e.error());
    report.mean_error += e.error();
    report.edges.push_back(e);
  }
  if (!report.edges.empty()) report.mean_error /= static_cast<double>(report.edges.size());
  return report;
}

struct ConsistencyReport {
  double mean_abs_error = 0.0;
  double valid_fraction = 0.0;
};

/// Forward-warp `prev` into the next camera and compare with `next` where the
/// warp produced data.
inline ConsistencyReport trajectory_consistency(const ImageBuffer& prev, const DepthMap& prev_depth,
                                                const ImageBuffer& next, const Intrinsics& k,
                                                const RelativePose& rel) {
  require(prev.same_shape(next), ErrorCode::invalid_argument,
          "trajectory_consistency: image sizes differ");
  const auto g = forward_warp(prev, prev_depth, k, rel);
  ConsistencyReport r;
  r.mean_abs_error = masked_mean_abs_error(g, next);
  r.valid_fraction = overlap_fraction(g);
  return r;
}

}  // namespace wcgen
