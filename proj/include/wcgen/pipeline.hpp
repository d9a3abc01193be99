#pragma once

// Two-stage generation over a trajectory.
//
// Stage 1 walks the trajectory: the first reference view is generated from
// depth, each later one from the previous one warped forward. Stage 2 fills
// every viewpoint's remaining perspectives by outpainting in traversal order.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "wcgen/backend.hpp"
#include "wcgen/geometry.hpp"
#include "wcgen/hash.hpp"
#include "wcgen/image.hpp"
#include "wcgen/panorama.hpp"
#include "wcgen/trajwarp.hpp"
#include "wcgen/viewwarp.hpp"

namespace wcgen {

struct Viewpoint {
  std::string id;
  Vec3 position = Vec3::Zero();
  std::vector<ImageBuffer> views;
  /// Entries may be empty (0x0) when the dataset has no depth for a view.
  std::vector<DepthMap> depths;
  /// Optional per-view captions shipped with the dataset; empty or n entries.
  std::vector<std::string> captions;

  void validate(const Intrinsics& k, const ViewGrid& grid) const {
    require(position.allFinite(), ErrorCode::invalid_argument, "viewpoint " + id + ": non-finite position");
    require(static_cast<int>(views.size()) == grid.n && static_cast<int>(depths.size()) == grid.n,
            ErrorCode::invalid_argument,
            "viewpoint " + id + ": expected " + std::to_string(grid.n) + " views and depths");
    require(captions.empty() || static_cast<int>(captions.size()) == grid.n, ErrorCode::invalid_argument,
            "viewpoint " + id + ": caption count differs from the view count");
    for (int i = 0; i < grid.n; ++i) {
      require(views[i].width() == k.width && views[i].height() == k.height, ErrorCode::invalid_argument,
              "viewpoint " + id + " view " + std::to_string(i) + ": size differs from the intrinsics");
      const auto& d = depths[i];
      require((d.width() == 0 && d.height() == 0) || (d.width() == k.width && d.height() == k.height),
              ErrorCode::invalid_argument,
              "viewpoint " + id + " depth " + std::to_string(i) + ": size differs from the intrinsics");
    }
  }

  bool has_depth(int i) const { return depths[i].width() > 0 && depths[i].valid_count() > 0; }
};

/// Camera model plus viewpoints that are loaded on first use.
class Scene {
 public:
  using Loader = std::function<Viewpoint(const std::string& id)>;

  Scene(std::string id, Intrinsics k, ViewGrid grid, double depth_scale,
        std::vector<std::pair<std::string, Vec3>> positions, Loader loader)
      : id_(std::move(id)), k_(k), grid_(grid), depth_scale_(depth_scale),
        loader_(std::move(loader)), state_(std::make_shared<State>()) {
    k_.validate();
    grid_.validate();
    require(depth_scale_ > 0.0, ErrorCode::invalid_argument, "depth_scale must be positive");
    for (auto& [vid, pos] : positions) {
      require(!positions_.contains(vid), ErrorCode::invalid_argument, "duplicate viewpoint id " + vid);
      order_.push_back(vid);
      positions_[vid] = pos;
    }
  }

  static Scene in_memory(std::string id, Intrinsics k, ViewGrid grid, std::vector<Viewpoint> viewpoints,
                         double depth_scale = kDefaultDepthScale) {
    std::vector<std::pair<std::string, Vec3>> positions;
    auto table = std::make_shared<std::map<std::string, Viewpoint>>();
    for (auto& vp : viewpoints) {
      positions.emplace_back(vp.id, vp.position);
      (*table)[vp.id] = std::move(vp);
    }
    return Scene(std::move(id), k, grid, depth_scale, std::move(positions),
                 [table](const std::string& vid) { return table->at(vid); });
  }

  const std::string& id() const { return id_; }
  const Intrinsics& intrinsics() const { return k_; }
  const ViewGrid& grid() const { return grid_; }
  double depth_scale() const { return depth_scale_; }
  const std::vector<std::string>& viewpoint_ids() const { return order_; }
  bool contains(const std::string& vid) const { return positions_.contains(vid); }

  const Vec3& position(const std::string& vid) const {
    const auto it = positions_.find(vid);
    require(it != positions_.end(), ErrorCode::not_found, "unknown viewpoint " + vid);
    return it->second;
  }

  /// Loads and validates on first access. Safe to call concurrently.
  const Viewpoint& viewpoint(const std::string& vid) const {
    require(contains(vid), ErrorCode::not_found, "unknown viewpoint " + vid);
    std::lock_guard lock(state_->mutex);
    auto& slot = state_->cache[vid];
    if (!slot) {
      auto vp = std::make_unique<Viewpoint>(loader_(vid));
      vp->id = vid;
      vp->position = positions_.at(vid);
      vp->validate(k_, grid_);
      slot = std::move(vp);
    }
    return *slot;
  }

 private:
  struct State {
    std::mutex mutex;
    std::map<std::string, std::unique_ptr<Viewpoint>> cache;
  };

  std::string id_;
  Intrinsics k_;
  ViewGrid grid_;
  double depth_scale_;
  Loader loader_;
  std::vector<std::string> order_;
  std::map<std::string, Vec3> positions_;
  std::shared_ptr<State> state_;
};

struct Trajectory {
  std::string id;
  std::string scene_id;
  std::vector<std::string> viewpoint_ids;
  std::optional<std::vector<int>> reference_indices;
  std::optional<std::string> instruction;
};

enum class ConditioningDepth { dataset_or_estimated, dataset, estimated };
enum class WarpDepth { estimated, scene };

struct PipelineConfig {
  std::uint64_t seed = 0;
  double min_overlap = 0.05;
  double strength_initial = 1.0;
  double strength_forward = 0.6;
  double strength_outpaint = 0.75;
  /// Pixels; unset means 1% of the image width.
  std::optional<double> blur_sigma;
  ConditioningDepth conditioning_depth = ConditioningDepth::dataset_or_estimated;
  /// Depth used to warp the previous reference forward.
  WarpDepth warp_depth = WarpDepth::estimated;
  /// Trajectory-level parallelism. Not part of the output.
  int workers = 1;

  void validate() const {
    for (double s : {strength_initial, strength_forward, strength_outpaint})
      require(std::isfinite(s) && s >= 0.0 && s <= 1.0, ErrorCode::invalid_argument,
              "strengths must lie in [0, 1]");
    require(std::isfinite(min_overlap) && min_overlap >= 0.0 && min_overlap <= 1.0,
            ErrorCode::invalid_argument, "min_overlap must lie in [0, 1]");
    require(!blur_sigma || (std::isfinite(*blur_sigma) && *blur_sigma >= 0.0), ErrorCode::invalid_argument,
            "blur_sigma must be non-negative");
    require(workers >= 1, ErrorCode::invalid_argument, "workers must be >= 1");
  }

  double sigma_for(int width) const { return blur_sigma ? *blur_sigma : default_blur_sigma(width); }
};

inline std::string_view to_string(ConditioningDepth c) {
  switch (c) {
    case ConditioningDepth::dataset_or_estimated: return "dataset_or_estimated";
    case ConditioningDepth::dataset: return "dataset";
    case ConditioningDepth::estimated: return "estimated";
  }
  return "unknown";
}

inline std::string_view to_string(WarpDepth w) {
  return w == WarpDepth::scene ? "scene" : "estimated";
}

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json j{{"seed", c.seed},
                   {"min_overlap", c.min_overlap},
                   {"strength_initial", c.strength_initial},
                   {"strength_forward", c.strength_forward},
                   {"strength_outpaint", c.strength_outpaint},
                   {"blur_sigma", nullptr},
                   {"conditioning_depth", to_string(c.conditioning_depth)},
                   {"warp_depth", to_string(c.warp_depth)}};
  if (c.blur_sigma) j["blur_sigma"] = *c.blur_sigma;
  return j;
}

/// Overlay the keys present in `j` onto `c`.
inline void apply_json(PipelineConfig& c, const nlohmann::json& j) {
  require(j.is_object(), ErrorCode::invalid_argument, "config must be a JSON object");
  try {
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("min_overlap")) c.min_overlap = j.at("min_overlap").get<double>();
    if (j.contains("strength_initial")) c.strength_initial = j.at("strength_initial").get<double>();
    if (j.contains("strength_forward")) c.strength_forward = j.at("strength_forward").get<double>();
    if (j.contains("strength_outpaint")) c.strength_outpaint = j.at("strength_outpaint").get<double>();
    if (j.contains("blur_sigma"))
      c.blur_sigma = j.at("blur_sigma").is_null() ? std::nullopt
                                                  : std::optional<double>(j.at("blur_sigma").get<double>());
    if (j.contains("workers")) c.workers = j.at("workers").get<int>();
    if (j.contains("conditioning_depth")) {
      const auto s = j.at("conditioning_depth").get<std::string>();
      if (s == "dataset_or_estimated") c.conditioning_depth = ConditioningDepth::dataset_or_estimated;
      else if (s == "dataset") c.conditioning_depth = ConditioningDepth::dataset;
      else if (s == "estimated") c.conditioning_depth = ConditioningDepth::estimated;
      else fail(ErrorCode::invalid_argument, "unknown conditioning_depth '" + s + "'");
    }
    if (j.contains("warp_depth")) {
      const auto s = j.at("warp_depth").get<std::string>();
      if (s == "estimated") c.warp_depth = WarpDepth::estimated;
      else if (s == "scene") c.warp_depth = WarpDepth::scene;
      else fail(ErrorCode::invalid_argument, "unknown warp_depth '" + s + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::invalid_argument, std::string("config: ") + e.what());
  }
  c.validate();
}

/// Per-image seed, independent across viewpoints and perspectives.
inline std::uint64_t image_seed(std::uint64_t run_seed, std::string_view viewpoint_id, int index) {
  return hash_combine(hash_combine(splitmix64(run_seed), fnv1a(viewpoint_id)),
                      static_cast<std::uint64_t>(index));
}

/// Horizontal perspective facing from `from` toward `to`. Bearing is measured
/// clockwise from world +y about +z and rounded half up to the heading step.
inline int select_reference_index(const Vec3& from, const Vec3& to, const ViewGrid& grid) {
  grid.validate();
  const double dx = to.x() - from.x();
  const double dy = to.y() - from.y();
  require(std::hypot(dx, dy) >= 0.01, ErrorCode::degenerate_bearing,
          "viewpoints are less than 1 cm apart horizontally");
  double bearing = rad2deg(std::atan2(dx, dy));
  if (bearing < 0.0) bearing += 360.0;
  const int col = static_cast<int>(std::floor(bearing / grid.heading_step + 0.5));
  return grid.index(1, ((col % grid.n_h) + grid.n_h) % grid.n_h);
}

/// Everything needed to reproduce one generated image.
struct RequestRecord {
  int index = 0;
  std::string stage;  // initial | forward | fallback | replenish
  GenerationMode mode = GenerationMode::depth_to_image;
  std::string prompt;
  double strength = 0.0;
  std::uint64_t seed = 0;
  std::string backend_id;
  std::uint64_t seed_used = 0;
  bool has_depth = false;
  bool has_init_image = false;
  bool has_mask = false;
  std::vector<int> neighbors;
  std::optional<double> overlap;
};

struct StepRecord {
  int t = 0;
  std::string viewpoint_id;
  int reference = 0;
  std::optional<RelativePose> rel;
  std::optional<double> overlap;
  bool fallback = false;
  /// Forward-warped guidance (forward steps only).
  std::optional<GuidanceImage> guidance;
};

struct GeneratedViewpoint {
  std::string id;
  int reference = 0;
  std::vector<ImageBuffer> images;
  std::vector<std::optional<RequestRecord>> records;

  bool complete() const {
    return !records.empty() && std::all_of(records.begin(), records.end(), [](const auto& r) { return r.has_value(); });
  }
};

struct StepFailure {
  int t = 0;
  std::string viewpoint_id;
  std::string stage;
  ErrorCode code = ErrorCode::invalid_state;
  std::string message;
};

struct CallCounts {
  int depth_to_image = 0;
  int image_to_image = 0;
  int outpaint = 0;
  int fallbacks = 0;
};

struct GeneratedTrajectory {
  std::string trajectory_id;
  std::string scene_id;
  std::optional<std::string> instruction;
  PipelineConfig config;
  Intrinsics intrinsics;
  ViewGrid grid;
  /// Not part of the written dataset.
  double wall_seconds = 0.0;
  std::vector<StepRecord> steps;
  std::vector<GeneratedViewpoint> viewpoints;
  std::optional<StepFailure> failure;

  bool complete() const {
    return !failure && std::all_of(viewpoints.begin(), viewpoints.end(), [](const auto& v) { return v.complete(); });
  }

  CallCounts calls() const {
    CallCounts c;
    for (const auto& vp : viewpoints)
      for (const auto& r : vp.records) {
        if (!r) continue;
        if (r->mode == GenerationMode::depth_to_image) ++c.depth_to_image;
        if (r->mode == GenerationMode::image_to_image) ++c.image_to_image;
        if (r->mode == GenerationMode::outpaint) ++c.outpaint;
        if (r->stage == "fallback") ++c.fallbacks;
      }
    return c;
  }
};

namespace detail {

inline RequestRecord record_of(int index, std::string stage, const GenerationRequest& req,
                               const GenerationResponse& resp) {
  RequestRecord r;
  r.index = index;
  r.stage = std::move(stage);
  r.mode = req.mode;
  r.prompt = req.prompt;
  r.strength = req.strength;
  r.seed = req.seed;
  r.backend_id = resp.backend_id;
  r.seed_used = resp.seed_used;
  r.has_depth = req.depth.has_value();
  r.has_init_image = req.init_image.has_value();
  r.has_mask = req.mask.has_value();
  return r;
}

/// Re-throw with context, keeping the error code.
[[noreturn]] inline void rethrow_with(const std::string& context, const Error& e) {
  if (const auto* t = dynamic_cast<const TransportError*>(&e))
    throw TransportError(context + ": " + t->what(), t->attempts(), t->last_status());
  throw Error(e.code(), context + ": " + e.what());
}

inline WeightMask weights_from(const BinaryMask& m) {
  WeightMask w(m.width(), m.height(), 0.0f);
  for (std::size_t p = 0; p < m.size(); ++p) w.values()[p] = m.values()[p] ? 1.0f : 0.0f;
  return w;
}

inline DepthMap conditioning_depth(const Viewpoint& vp, int i, const BackendSet& backends,
                                   const PipelineConfig& cfg) {
  switch (cfg.conditioning_depth) {
    case ConditioningDepth::dataset:
      require(vp.has_depth(i), ErrorCode::precondition,
              "viewpoint " + vp.id + " has no depth for view " + std::to_string(i));
      return vp.depths[i];
    case ConditioningDepth::estimated:
      return backends.depth->estimate_depth(vp.views[i]);
    case ConditioningDepth::dataset_or_estimated:
      return vp.has_depth(i) ? vp.depths[i] : backends.depth->estimate_depth(vp.views[i]);
  }
  fail(ErrorCode::invalid_state, "unreachable");
}

}  // namespace detail

struct ModuleOutput {
  ImageBuffer image;
  RequestRecord record;
};

/// First reference view: caption the real view, then generate from its depth.
inline ModuleOutput initial_module(const Viewpoint& vp, int r, const BackendSet& backends,
                                   const PipelineConfig& cfg, std::string stage = "initial") {
  require(r >= 0 && r < static_cast<int>(vp.views.size()), ErrorCode::invalid_argument,
          "reference index out of range");
  if (stage == "initial")
    require(vp.has_depth(r), ErrorCode::precondition,
            "viewpoint " + vp.id + " has no depth for reference view " + std::to_string(r));
  GenerationRequest req;
  req.mode = GenerationMode::depth_to_image;
  req.prompt = backends.captioner->caption(vp.views[r]);
  req.depth = detail::conditioning_depth(vp, r, backends, cfg);
  req.strength = cfg.strength_initial;
  req.seed = image_seed(cfg.seed, vp.id, r);
  auto resp = backends.generator->generate(req);
  check_generation_response(req.quantized_copy(), resp);
  return {std::move(resp.image), detail::record_of(r, std::move(stage), req, resp)};
}

struct ForwardOutput {
  ImageBuffer image;
  RequestRecord record;
  GuidanceImage guidance;
  double overlap = 0.0;
  bool fallback = false;
};

/// Next reference view conditioned on the previous one warped into its camera.
/// `prev_scene_depth` is the dataset depth of the previous reference view and
/// is only consulted when the config warps with scene depth.
inline ForwardOutput forward_module(const ImageBuffer& prev_y, const Viewpoint& vp, int r,
                                    const RelativePose& rel, const Intrinsics& k, const BackendSet& backends,
                                    const PipelineConfig& cfg, const DepthMap* prev_scene_depth = nullptr) {
  DepthMap warp_depth;
  if (cfg.warp_depth == WarpDepth::scene) {
    require(prev_scene_depth && prev_scene_depth->valid_count() > 0, ErrorCode::precondition,
            "scene warp depth requested but the previous reference has no depth");
    warp_depth = *prev_scene_depth;
  } else {
    warp_depth = backends.depth->estimate_depth(prev_y);
  }
  ForwardOutput out;
  out.guidance = forward_warp(prev_y, warp_depth, k, rel);
  out.overlap = overlap_fraction(out.guidance);

  if (out.overlap < cfg.min_overlap) {
    auto fb = initial_module(vp, r, backends, cfg, "fallback");
    fb.record.overlap = out.overlap;
    out.image = std::move(fb.image);
    out.record = std::move(fb.record);
    out.fallback = true;
    return out;
  }

  GenerationRequest req;
  req.mode = GenerationMode::image_to_image;
  req.prompt = backends.captioner->caption(vp.views[r]);
  req.init_image = out.guidance.color;
  req.mask = detail::weights_from(out.guidance.validity);
  req.depth = detail::conditioning_depth(vp, r, backends, cfg);
  req.strength = cfg.strength_forward;
  req.seed = image_seed(cfg.seed, vp.id, r);
  auto resp = backends.generator->generate(req);
  check_generation_response(req.quantized_copy(), resp);
  out.image = std::move(resp.image);
  out.record = detail::record_of(r, "forward", req, resp);
  out.record.overlap = out.overlap;
  return out;
}

struct ReplenishOutput {
  std::vector<ImageBuffer> images;
  /// Indexed by perspective; empty at the reference.
  std::vector<std::optional<RequestRecord>> records;
};

/// Outpaint every perspective of a viewpoint from its generated neighbors.
/// Images finished before an error stay in `out`.
inline void replenish_into(ReplenishOutput& out, const Viewpoint& vp, int r, const ImageBuffer& y_ref,
                           const Intrinsics& k, const ViewGrid& grid, const BackendSet& backends,
                           const PipelineConfig& cfg) {
  require(y_ref.width() == k.width && y_ref.height() == k.height, ErrorCode::invalid_argument,
          "reference image size differs from the intrinsics");
  const auto queue = traversal_queue(r, grid);
  const double sigma = cfg.sigma_for(k.width);
  const Mat3 identity = Mat3::Identity();

  out.images.assign(grid.n, ImageBuffer());
  out.records.assign(grid.n, std::nullopt);
  out.images[r] = y_ref;
  std::set<int> generated{r};

  for (int i : queue.order) {
    try {
      const auto nbrs = neighbor_set(i, generated, r, grid);
      std::vector<GuidanceImage> warped;
      warped.reserve(nbrs.members.size());
      for (int j : nbrs.members)
        warped.push_back(rotation_warp(out.images[j], k, relative_view_rotation(j, i, grid), identity));
      auto merged = merge_guidance(std::span<const GuidanceImage>(warped));
      GenerationRequest req;
      req.mode = GenerationMode::outpaint;
      req.prompt = backends.captioner->caption(vp.views[i]);
      req.init_image = std::move(merged.guidance.color);
      req.mask = blur_mask(binarize_mask(merged.guidance), sigma);
      req.strength = cfg.strength_outpaint;
      req.seed = image_seed(cfg.seed, vp.id, i);
      auto resp = backends.generator->generate(req);
      check_generation_response(req.quantized_copy(), resp);
      auto rec = detail::record_of(i, "replenish", req, resp);
      rec.neighbors = nbrs.members;
      out.records[i] = std::move(rec);
      out.images[i] = std::move(resp.image);
      generated.insert(i);
    } catch (const Error& e) {
      detail::rethrow_with("viewpoint " + vp.id + " perspective " + std::to_string(i), e);
    }
  }
}

inline ReplenishOutput replenish_module(const Viewpoint& vp, int r, const ImageBuffer& y_ref, const Intrinsics& k,
                                        const ViewGrid& grid, const BackendSet& backends, const PipelineConfig& cfg) {
  ReplenishOutput out;
  replenish_into(out, vp, r, y_ref, k, grid, backends, cfg);
  return out;
}

/// Reference index per trajectory step: toward the next viewpoint, and for
/// the last one along the direction of arrival.
inline std::vector<int> reference_indices(const Trajectory& traj, const Scene& scene) {
  if (traj.reference_indices) {
    require(traj.reference_indices->size() == traj.viewpoint_ids.size(), ErrorCode::invalid_argument,
            "trajectory " + traj.id + ": reference index count differs from its length");
    for (int r : *traj.reference_indices)
      require(scene.grid().contains(r), ErrorCode::invalid_argument,
              "trajectory " + traj.id + ": reference index " + std::to_string(r) + " out of range");
    return *traj.reference_indices;
  }
  const auto& ids = traj.viewpoint_ids;
  std::vector<int> rs(ids.size());
  for (std::size_t t = 0; t + 1 < ids.size(); ++t)
    rs[t] = select_reference_index(scene.position(ids[t]), scene.position(ids[t + 1]), scene.grid());
  const std::size_t last = ids.size() - 1;
  rs[last] = select_reference_index(scene.position(ids[last - 1]), scene.position(ids[last]), scene.grid());
  return rs;
}

/// Canonical transform from the camera of (from, r_from) into (to, r_to).
inline RelativePose step_pose(const Vec3& from, int r_from, const Vec3& to, int r_to, const ViewGrid& grid) {
  return RelativePose::between(camera_pose(from, r_from, grid), camera_pose(to, r_to, grid));
}

/// Checks that need no generation: length, ids, duplicates, reference indices.
inline std::vector<int> validate_trajectory(const Trajectory& traj, const Scene& scene) {
  require(traj.viewpoint_ids.size() >= 2, ErrorCode::invalid_argument,
          "trajectory " + traj.id + " needs at least two viewpoints");
  require(traj.scene_id.empty() || traj.scene_id == scene.id(), ErrorCode::invalid_argument,
          "trajectory " + traj.id + " belongs to scene " + traj.scene_id + ", not " + scene.id());
  std::set<std::string> seen;
  for (const auto& vid : traj.viewpoint_ids) {
    require(scene.contains(vid), ErrorCode::not_found,
            "trajectory " + traj.id + " references unknown viewpoint " + vid);
    require(seen.insert(vid).second, ErrorCode::invalid_argument,
            "trajectory " + traj.id + " visits viewpoint " + vid + " twice");
  }
  return reference_indices(traj, scene);
}

inline GeneratedTrajectory run_trajectory(const Trajectory& traj, const Scene& scene, const BackendSet& backends,
                                          const PipelineConfig& cfg) {
  cfg.validate();
  require(backends.generator && backends.depth && backends.captioner, ErrorCode::invalid_argument,
          "all three backends are required");
  const auto rs = validate_trajectory(traj, scene);
  const auto& k = scene.intrinsics();
  const auto& grid = scene.grid();
  const auto& ids = traj.viewpoint_ids;
  const int l = static_cast<int>(ids.size());

  const auto started = std::chrono::steady_clock::now();
  GeneratedTrajectory out;
  out.trajectory_id = traj.id;
  out.scene_id = scene.id();
  out.instruction = traj.instruction;
  out.config = cfg;
  out.intrinsics = k;
  out.grid = grid;
  for (int t = 0; t < l; ++t) {
    GeneratedViewpoint gv;
    gv.id = ids[t];
    gv.reference = rs[t];
    gv.images.assign(grid.n, ImageBuffer());
    gv.records.assign(grid.n, std::nullopt);
    out.viewpoints.push_back(std::move(gv));
  }

  int t = 0;
  std::string stage = "initial";
  try {
    for (t = 0; t < l; ++t) {
      const auto& vp = scene.viewpoint(ids[t]);
      StepRecord step;
      step.t = t;
      step.viewpoint_id = ids[t];
      step.reference = rs[t];
      auto& gv = out.viewpoints[t];
      if (t == 0) {
        stage = "initial";
        auto res = initial_module(vp, rs[0], backends, cfg);
        gv.images[rs[0]] = std::move(res.image);
        gv.records[rs[0]] = std::move(res.record);
      } else {
        stage = "forward";
        const auto& prev_vp = scene.viewpoint(ids[t - 1]);
        const auto rel = step_pose(prev_vp.position, rs[t - 1], vp.position, rs[t], grid);
        step.rel = rel;
        const DepthMap* prev_depth = prev_vp.has_depth(rs[t - 1]) ? &prev_vp.depths[rs[t - 1]] : nullptr;
        auto res = forward_module(out.viewpoints[t - 1].images[rs[t - 1]], vp, rs[t], rel, k, backends, cfg,
                                  prev_depth);
        step.overlap = res.overlap;
        step.fallback = res.fallback;
        step.guidance = std::move(res.guidance);
        gv.images[rs[t]] = std::move(res.image);
        gv.records[rs[t]] = std::move(res.record);
      }
      out.steps.push_back(std::move(step));
    }
    stage = "replenish";
    for (t = 0; t < l; ++t) {
      const auto& vp = scene.viewpoint(ids[t]);
      auto& gv = out.viewpoints[t];
      ReplenishOutput res;
      auto keep = [&] {
        for (int i = 0; i < grid.n && i < static_cast<int>(res.records.size()); ++i) {
          if (i == rs[t] || !res.records[i]) continue;
          gv.images[i] = std::move(res.images[i]);
          gv.records[i] = std::move(res.records[i]);
        }
      };
      try {
        replenish_into(res, vp, rs[t], gv.images[rs[t]], k, grid, backends, cfg);
      } catch (const Error&) {
        keep();
        throw;
      }
      keep();
    }
  } catch (const Error& e) {
    out.failure = StepFailure{t, t < l ? ids[t] : std::string(), stage, e.code(), e.what()};
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

/// Independent trajectories on a worker pool. Results keep input order; a
/// trajectory that fails validation is reported through its failure record.
inline std::vector<GeneratedTrajectory> run_trajectories(std::span<const Trajectory> trajs, const Scene& scene,
                                                         const BackendSet& backends, const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<GeneratedTrajectory> results(trajs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < trajs.size(); i = next++) {
      try {
        results[i] = run_trajectory(trajs[i], scene, backends, cfg);
      } catch (const Error& e) {
        results[i].trajectory_id = trajs[i].id;
        results[i].scene_id = scene.id();
        results[i].config = cfg;
        results[i].intrinsics = scene.intrinsics();
        results[i].grid = scene.grid();
        results[i].failure = StepFailure{0, std::string(), "validate", e.code(), e.what()};
      }
    }
  };
  const int n = std::min<int>(cfg.workers, static_cast<int>(std::max<std::size_t>(trajs.size(), 1)));
  std::vector<std::thread> pool;
  for (int w = 1; w < n; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return results;
}

}  // namespace wcgen
