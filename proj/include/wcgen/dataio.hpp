#pragma once

// Manifests, on-disk layouts and the synthetic room renderer.
//
// Scene manifest (JSON, paths relative to the manifest):
//   {"scene_id", "intrinsics": {fx, fy, cx, cy, width, height},
//    "grid": {n, n_h, elevations, heading_step}, "depth_scale",
//    "viewpoints": [{"id", "position": [x, y, z], "images": [...],
//                    "depths": [path | null, ...], "captions"?: [...]}]}
//
// Trajectory manifest: one object, an array of them, or {"trajectories": [...]}
//   {"trajectory_id", "scene_id", "viewpoints": [...],
//    "reference_indices"?: [...], "instruction"?: "..."}
//
// Dataset layout: <out>/<trajectory>/<viewpoint>/view_<i>.png, plus
// guidance.png and guidance_mask.png for forward steps, and
// <out>/<trajectory>/generation.json with provenance and checksums.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "wcgen/codec.hpp"
#include "wcgen/geometry.hpp"
#include "wcgen/hash.hpp"
#include "wcgen/image.hpp"
#include "wcgen/panorama.hpp"
#include "wcgen/pipeline.hpp"

namespace wcgen {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline json read_json_file(const fs::path& path) {
  require(fs::exists(path), ErrorCode::load_error, "missing file " + path.string());
  const auto bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::exception& e) {
    fail(ErrorCode::load_error, path.string() + ": malformed JSON: " + e.what());
  }
}

/// Stable pretty-printed JSON with a trailing newline.
inline void write_json_file(const fs::path& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

// --- json helpers for geometry types ----------------------------------------

inline json to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline Intrinsics intrinsics_from_json(const json& j) {
  Intrinsics k{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
               j.at("cy").get<double>(), j.at("width").get<int>(), j.at("height").get<int>()};
  k.validate();
  return k;
}

inline json to_json(const ViewGrid& g) {
  return {{"n", g.n},
          {"n_h", g.n_h},
          {"elevations", {g.elevations[0], g.elevations[1], g.elevations[2]}},
          {"heading_step", g.heading_step}};
}

inline ViewGrid grid_from_json(const json& j) {
  ViewGrid g;
  g.n = j.value("n", g.n);
  g.n_h = j.value("n_h", g.n_h);
  if (j.contains("elevations")) {
    const auto e = j.at("elevations").get<std::vector<double>>();
    require(e.size() == 3, ErrorCode::invalid_argument, "grid needs three elevations");
    std::copy(e.begin(), e.end(), g.elevations.begin());
  }
  g.heading_step = j.value("heading_step", g.heading_step);
  g.validate();
  return g;
}

inline json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline Vec3 vec3_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  require(v.size() == 3, ErrorCode::invalid_argument, "expected a 3-vector");
  return {v[0], v[1], v[2]};
}

// --- scene manifests ----------------------------------------------------------

struct ViewpointEntry {
  std::string id;
  Vec3 position = Vec3::Zero();
  std::vector<std::string> images;
  std::vector<std::optional<std::string>> depths;
  std::vector<std::string> captions;
};

struct SceneManifest {
  std::string scene_id;
  Intrinsics intrinsics;
  ViewGrid grid;
  double depth_scale = kDefaultDepthScale;
  std::vector<ViewpointEntry> viewpoints;
  /// Directory the relative paths resolve against.
  fs::path base_dir;

  void validate() const {
    intrinsics.validate();
    grid.validate();
    require(depth_scale > 0.0, ErrorCode::invalid_argument, "depth_scale must be positive");
    std::set<std::string> ids;
    for (const auto& vp : viewpoints) {
      require(ids.insert(vp.id).second, ErrorCode::invalid_argument, "duplicate viewpoint id " + vp.id);
      require(vp.position.allFinite(), ErrorCode::invalid_argument, "viewpoint " + vp.id + ": bad position");
      require(static_cast<int>(vp.images.size()) == grid.n && static_cast<int>(vp.depths.size()) == grid.n,
              ErrorCode::invalid_argument,
              "viewpoint " + vp.id + ": expected " + std::to_string(grid.n) + " images and depths");
      require(vp.captions.empty() || static_cast<int>(vp.captions.size()) == grid.n,
              ErrorCode::invalid_argument, "viewpoint " + vp.id + ": caption count differs from n");
    }
  }
};

inline json to_json(const SceneManifest& m) {
  json vps = json::array();
  for (const auto& vp : m.viewpoints) {
    json depths = json::array();
    for (const auto& d : vp.depths) depths.push_back(d ? json(*d) : json(nullptr));
    json entry{{"id", vp.id}, {"position", to_json(vp.position)}, {"images", vp.images}, {"depths", depths}};
    if (!vp.captions.empty()) entry["captions"] = vp.captions;
    vps.push_back(entry);
  }
  return {{"scene_id", m.scene_id},
          {"intrinsics", to_json(m.intrinsics)},
          {"grid", to_json(m.grid)},
          {"depth_scale", m.depth_scale},
          {"viewpoints", vps}};
}

inline SceneManifest scene_manifest_from_json(const json& j, const fs::path& base_dir) {
  SceneManifest m;
  try {
    m.scene_id = j.at("scene_id").get<std::string>();
    m.intrinsics = intrinsics_from_json(j.at("intrinsics"));
    m.grid = grid_from_json(j.value("grid", json::object()));
    m.depth_scale = j.value("depth_scale", kDefaultDepthScale);
    for (const auto& e : j.at("viewpoints")) {
      ViewpointEntry vp;
      vp.id = e.at("id").get<std::string>();
      vp.position = vec3_from_json(e.at("position"));
      vp.images = e.at("images").get<std::vector<std::string>>();
      for (const auto& d : e.at("depths"))
        vp.depths.push_back(d.is_null() ? std::nullopt : std::optional<std::string>(d.get<std::string>()));
      if (e.contains("captions")) vp.captions = e.at("captions").get<std::vector<std::string>>();
      m.viewpoints.push_back(std::move(vp));
    }
    m.base_dir = base_dir;
    m.validate();
  } catch (const json::exception& e) {
    fail(ErrorCode::load_error, "scene manifest: " + std::string(e.what()));
  } catch (const Error& e) {
    fail(ErrorCode::load_error, "scene manifest: " + std::string(e.what()));
  }
  return m;
}

inline SceneManifest read_scene_manifest(const fs::path& path) {
  auto m = scene_manifest_from_json(read_json_file(path), path.parent_path());
  for (const auto& vp : m.viewpoints) {
    for (const auto& img : vp.images)
      require(fs::exists(m.base_dir / img), ErrorCode::load_error,
              "viewpoint " + vp.id + ": missing image " + (m.base_dir / img).string());
    for (const auto& d : vp.depths)
      if (d)
        require(fs::exists(m.base_dir / *d), ErrorCode::load_error,
                "viewpoint " + vp.id + ": missing depth " + (m.base_dir / *d).string());
  }
  return m;
}

/// Decode one viewpoint's files. Size mismatches are load errors.
inline Viewpoint load_viewpoint(const SceneManifest& m, const ViewpointEntry& e) {
  Viewpoint vp;
  vp.id = e.id;
  vp.position = e.position;
  vp.captions = e.captions;
  const auto& k = m.intrinsics;
  for (int i = 0; i < m.grid.n; ++i) {
    const fs::path img_path = m.base_dir / e.images[i];
    try {
      vp.views.push_back(decode_png_image(read_file(img_path)));
    } catch (const Error& err) {
      fail(ErrorCode::load_error, img_path.string() + ": " + err.what());
    }
    require(vp.views.back().width() == k.width && vp.views.back().height() == k.height,
            ErrorCode::load_error, img_path.string() + ": size differs from the intrinsics");
    if (!e.depths[i]) {
      vp.depths.emplace_back();
      continue;
    }
    const fs::path depth_path = m.base_dir / *e.depths[i];
    try {
      vp.depths.push_back(decode_png_depth(read_file(depth_path), m.depth_scale));
    } catch (const Error& err) {
      fail(ErrorCode::load_error, depth_path.string() + ": " + err.what());
    }
    require(vp.depths.back().width() == k.width && vp.depths.back().height() == k.height,
            ErrorCode::load_error, depth_path.string() + ": size differs from the intrinsics");
  }
  return vp;
}

/// Scene whose viewpoints are decoded on first use.
inline Scene open_scene(const SceneManifest& m) {
  std::vector<std::pair<std::string, Vec3>> positions;
  auto entries = std::make_shared<std::map<std::string, ViewpointEntry>>();
  for (const auto& vp : m.viewpoints) {
    positions.emplace_back(vp.id, vp.position);
    (*entries)[vp.id] = vp;
  }
  auto manifest = std::make_shared<SceneManifest>(m);
  return Scene(m.scene_id, m.intrinsics, m.grid, m.depth_scale, std::move(positions),
               [manifest, entries](const std::string& id) { return load_viewpoint(*manifest, entries->at(id)); });
}

inline Scene load_scene(const fs::path& path) { return open_scene(read_scene_manifest(path)); }

inline std::string view_file_name(int i) {
  std::ostringstream s;
  s << "view_" << (i < 10 ? "0" : "") << i << ".png";
  return s.str();
}

inline std::string depth_file_name(int i) {
  std::ostringstream s;
  s << "depth_" << (i < 10 ? "0" : "") << i << ".png";
  return s.str();
}

/// Write every viewpoint of `scene` under the manifest's directory and the
/// manifest itself. Returns the manifest as written.
inline SceneManifest save_scene(const Scene& scene, const fs::path& manifest_path) {
  const fs::path base = manifest_path.parent_path();
  SceneManifest m;
  m.scene_id = scene.id();
  m.intrinsics = scene.intrinsics();
  m.grid = scene.grid();
  m.depth_scale = scene.depth_scale();
  m.base_dir = base;
  for (const auto& id : scene.viewpoint_ids()) {
    const auto& vp = scene.viewpoint(id);
    ViewpointEntry e;
    e.id = id;
    e.position = vp.position;
    e.captions = vp.captions;
    for (int i = 0; i < m.grid.n; ++i) {
      const std::string img = id + "/" + view_file_name(i);
      write_file(base / img, encode_png(vp.views[i]));
      e.images.push_back(img);
      if (vp.depths[i].width() == 0) {
        e.depths.emplace_back();
        continue;
      }
      const std::string depth = id + "/" + depth_file_name(i);
      write_file(base / depth, encode_png_depth(vp.depths[i], m.depth_scale));
      e.depths.emplace_back(depth);
    }
    m.viewpoints.push_back(std::move(e));
  }
  write_json_file(manifest_path, to_json(m));
  return m;
}

// --- trajectory manifests ------------------------------------------------------

inline json to_json(const Trajectory& t) {
  json j{{"trajectory_id", t.id}, {"scene_id", t.scene_id}, {"viewpoints", t.viewpoint_ids}};
  if (t.reference_indices) j["reference_indices"] = *t.reference_indices;
  if (t.instruction) j["instruction"] = *t.instruction;
  return j;
}

inline Trajectory trajectory_from_json(const json& j) {
  try {
    Trajectory t;
    t.id = j.at("trajectory_id").get<std::string>();
    t.scene_id = j.at("scene_id").get<std::string>();
    t.viewpoint_ids = j.at("viewpoints").get<std::vector<std::string>>();
    if (j.contains("reference_indices")) t.reference_indices = j.at("reference_indices").get<std::vector<int>>();
    if (j.contains("instruction")) t.instruction = j.at("instruction").get<std::string>();
    require(t.viewpoint_ids.size() >= 2, ErrorCode::load_error, "trajectory " + t.id + " needs l >= 2");
    return t;
  } catch (const json::exception& e) {
    fail(ErrorCode::load_error, std::string("trajectory manifest: ") + e.what());
  }
}

inline std::vector<Trajectory> read_trajectories(const fs::path& path) {
  const auto j = read_json_file(path);
  std::vector<Trajectory> out;
  const json* list = &j;
  if (j.is_object() && j.contains("trajectories")) list = &j.at("trajectories");
  if (list->is_array()) {
    for (const auto& t : *list) out.push_back(trajectory_from_json(t));
  } else {
    out.push_back(trajectory_from_json(*list));
  }
  std::set<std::string> ids;
  for (const auto& t : out)
    require(ids.insert(t.id).second, ErrorCode::load_error, "duplicate trajectory id " + t.id);
  return out;
}

inline void write_trajectories(const fs::path& path, std::span<const Trajectory> trajs) {
  json list = json::array();
  for (const auto& t : trajs) list.push_back(to_json(t));
  write_json_file(path, json{{"trajectories", list}});
}

// --- generated datasets --------------------------------------------------------

inline json to_json(const RequestRecord& r) {
  json j{{"index", r.index},
         {"stage", r.stage},
         {"mode", to_string(r.mode)},
         {"prompt", r.prompt},
         {"strength", r.strength},
         {"seed", r.seed},
         {"backend_id", r.backend_id},
         {"seed_used", r.seed_used},
         {"has_depth", r.has_depth},
         {"has_init_image", r.has_init_image},
         {"has_mask", r.has_mask}};
  if (!r.neighbors.empty()) j["neighbors"] = r.neighbors;
  if (r.overlap) j["overlap"] = *r.overlap;
  return j;
}

inline json to_json(const RelativePose& rel) {
  const auto c = rel.canonical();
  json rot = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) rot.push_back(c.rotation(i, k));
  return {{"rotation", rot}, {"translation", to_json(c.translation)}};
}

struct DatasetFile {
  std::string path;  // relative to the trajectory directory
  std::string sha256;
};

/// Writes one trajectory; replaces any previous output for the same id.
/// Returns the path of generation.json.
inline fs::path write_dataset(const GeneratedTrajectory& gen, const fs::path& out_dir) {
  require(!gen.trajectory_id.empty(), ErrorCode::invalid_argument, "trajectory id is empty");
  const fs::path root = out_dir / gen.trajectory_id;
  std::error_code ec;
  fs::remove_all(root, ec);
  if (ec) fail(ErrorCode::io_error, "cannot clear " + root.string() + ": " + ec.message());

  json files = json::array();
  auto emit = [&](const std::string& rel, const Bytes& bytes) {
    write_file(root / rel, bytes);
    files.push_back({{"path", rel}, {"sha256", sha256_hex(bytes)}});
  };

  json viewpoints = json::array();
  for (const auto& vp : gen.viewpoints) {
    json images = json::array();
    for (std::size_t i = 0; i < vp.images.size(); ++i) {
      if (!vp.records[i]) continue;
      const std::string rel = vp.id + "/" + view_file_name(static_cast<int>(i));
      emit(rel, encode_png(vp.images[i]));
      images.push_back({{"index", i}, {"file", rel}, {"request", to_json(*vp.records[i])}});
    }
    viewpoints.push_back({{"id", vp.id}, {"reference", vp.reference}, {"complete", vp.complete()}, {"images", images}});
  }

  json steps = json::array();
  for (const auto& s : gen.steps) {
    json j{{"t", s.t}, {"viewpoint_id", s.viewpoint_id}, {"reference", s.reference}, {"fallback", s.fallback}};
    if (s.rel) j["relative_pose"] = to_json(*s.rel);
    if (s.overlap) j["overlap"] = *s.overlap;
    if (s.guidance) {
      const std::string g = s.viewpoint_id + "/guidance.png";
      const std::string m = s.viewpoint_id + "/guidance_mask.png";
      emit(g, encode_png(s.guidance->color));
      emit(m, encode_png_mask(s.guidance->validity));
      j["guidance"] = g;
      j["guidance_mask"] = m;
    }
    steps.push_back(j);
  }

  json failure = nullptr;
  if (gen.failure)
    failure = {{"t", gen.failure->t},
               {"viewpoint_id", gen.failure->viewpoint_id},
               {"stage", gen.failure->stage},
               {"code", to_string(gen.failure->code)},
               {"message", gen.failure->message}};

  const auto calls = gen.calls();
  json doc{{"schema_version", kSchemaVersion},
           {"trajectory_id", gen.trajectory_id},
           {"scene_id", gen.scene_id},
           {"instruction", gen.instruction ? json(*gen.instruction) : json(nullptr)},
           {"complete", gen.complete()},
           {"failure", failure},
           {"config", to_json(gen.config)},
           {"intrinsics", to_json(gen.intrinsics)},
           {"grid", to_json(gen.grid)},
           {"calls",
            {{"depth_to_image", calls.depth_to_image},
             {"image_to_image", calls.image_to_image},
             {"outpaint", calls.outpaint},
             {"fallbacks", calls.fallbacks}}},
           {"steps", steps},
           {"viewpoints", viewpoints},
           {"files", files}};
  const fs::path manifest = root / "generation.json";
  write_json_file(manifest, doc);
  return manifest;
}

struct VerifyReport {
  std::size_t files = 0;
  std::vector<std::string> mismatches;
  std::vector<std::string> missing;
  bool ok() const { return mismatches.empty() && missing.empty(); }
};

/// Recompute checksums of one trajectory directory.
inline VerifyReport check_dataset(const fs::path& trajectory_dir) {
  const auto doc = read_json_file(trajectory_dir / "generation.json");
  require(doc.value("schema_version", 0) == kSchemaVersion, ErrorCode::load_error,
          "unsupported generation.json schema");
  VerifyReport r;
  for (const auto& f : doc.at("files")) {
    const auto rel = f.at("path").get<std::string>();
    ++r.files;
    if (!fs::exists(trajectory_dir / rel)) {
      r.missing.push_back(rel);
      continue;
    }
    if (sha256_hex(read_file(trajectory_dir / rel)) != f.at("sha256").get<std::string>()) r.mismatches.push_back(rel);
  }
  return r;
}

/// Like check_dataset but throws checksum_mismatch on the first problem.
inline VerifyReport verify_dataset(const fs::path& trajectory_dir) {
  auto r = check_dataset(trajectory_dir);
  if (!r.missing.empty()) fail(ErrorCode::checksum_mismatch, "missing file " + r.missing.front());
  if (!r.mismatches.empty()) fail(ErrorCode::checksum_mismatch, "checksum mismatch in " + r.mismatches.front());
  return r;
}

/// Trajectory directories (those holding generation.json) at or below `dir`.
inline std::vector<fs::path> find_datasets(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) return out;
  if (fs::exists(dir / "generation.json")) return {dir};
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() && fs::exists(entry.path() / "generation.json")) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

struct LoadedViewpoint {
  std::string id;
  int reference = 0;
  /// Empty entries were not generated.
  std::vector<ImageBuffer> images;
};

struct LoadedDataset {
  std::string trajectory_id;
  std::string scene_id;
  Intrinsics intrinsics;
  ViewGrid grid;
  json document;
  std::vector<LoadedViewpoint> viewpoints;
};

inline LoadedDataset load_dataset(const fs::path& trajectory_dir) {
  LoadedDataset d;
  d.document = read_json_file(trajectory_dir / "generation.json");
  try {
    d.trajectory_id = d.document.at("trajectory_id").get<std::string>();
    d.scene_id = d.document.at("scene_id").get<std::string>();
    d.intrinsics = intrinsics_from_json(d.document.at("intrinsics"));
    d.grid = grid_from_json(d.document.at("grid"));
    const int n = d.grid.n;
    for (const auto& vp : d.document.at("viewpoints")) {
      LoadedViewpoint lv;
      lv.id = vp.at("id").get<std::string>();
      lv.reference = vp.at("reference").get<int>();
      lv.images.assign(n, ImageBuffer());
      for (const auto& img : vp.at("images")) {
        const int i = img.at("index").get<int>();
        require(i >= 0 && i < n, ErrorCode::load_error, "image index out of range");
        lv.images[i] = decode_png_image(read_file(trajectory_dir / img.at("file").get<std::string>()));
      }
      d.viewpoints.push_back(std::move(lv));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::load_error, "generation.json: " + std::string(e.what()));
  }
  return d;
}

// --- synthetic room -------------------------------------------------------------

/// A solid (world-space) color field, so surfaces meeting at room corners
/// share colors along the seam.
struct TextureLayer {
  enum class Kind { checker, gradient };
  Kind kind = Kind::checker;
  std::uint64_t seed = 0;
  double period = 2.5;     // meters, checker only
  double amplitude = 0.2;  // per channel
};

struct SyntheticSceneSpec {
  std::string scene_id = "synthetic-room";
  Vec3 room = Vec3(8.0, 10.0, 3.0);  // x, y, z extents; the room spans [0, room]
  Rgb base_color{0.5f, 0.5f, 0.5f};
  std::vector<TextureLayer> layers{{TextureLayer::Kind::checker, 1, 2.5, 0.2},
                                   {TextureLayer::Kind::gradient, 2, 0.0, 0.25}};
  std::vector<std::pair<std::string, Vec3>> viewpoints;
  Intrinsics intrinsics = intrinsics_from_fov(128, 128, 90.0);
  ViewGrid grid;
  double depth_scale = kDefaultDepthScale;

  void validate() const {
    require(room.allFinite() && (room.array() > 0.0).all(), ErrorCode::invalid_argument,
            "room dimensions must be positive");
    intrinsics.validate();
    grid.validate();
    require(depth_scale > 0.0, ErrorCode::invalid_argument, "depth_scale must be positive");
    require(!viewpoints.empty(), ErrorCode::invalid_argument, "synthetic scene needs viewpoints");
    std::set<std::string> ids;
    for (const auto& [id, p] : viewpoints) {
      require(ids.insert(id).second, ErrorCode::invalid_argument, "duplicate viewpoint id " + id);
      require(p.allFinite() && (p.array() > 0.0).all() && (p.array() < room.array()).all(),
              ErrorCode::invalid_argument, "viewpoint " + id + " is not strictly inside the room");
    }
    for (const auto& l : layers)
      require(std::isfinite(l.amplitude) && (l.kind != TextureLayer::Kind::checker || l.period > 0.0),
              ErrorCode::invalid_argument, "invalid texture layer");
  }
};

/// Straight walk along +y through the middle of the default room.
inline SyntheticSceneSpec synthetic_room_spec(int viewpoints = 5, int image_size = 128, double step = 0.25) {
  SyntheticSceneSpec s;
  s.intrinsics = intrinsics_from_fov(image_size, image_size, 90.0);
  for (int i = 0; i < viewpoints; ++i)
    s.viewpoints.emplace_back("vp" + std::to_string(i), Vec3(4.0, 2.0 + step * i, 1.5));
  return s;
}

inline json to_json(const SyntheticSceneSpec& s) {
  json layers = json::array();
  for (const auto& l : s.layers)
    layers.push_back({{"kind", l.kind == TextureLayer::Kind::checker ? "checker" : "gradient"},
                      {"seed", l.seed},
                      {"period", l.period},
                      {"amplitude", l.amplitude}});
  json vps = json::array();
  for (const auto& [id, p] : s.viewpoints) vps.push_back({{"id", id}, {"position", to_json(p)}});
  return {{"scene_id", s.scene_id},
          {"room", to_json(s.room)},
          {"base_color", {s.base_color[0], s.base_color[1], s.base_color[2]}},
          {"layers", layers},
          {"viewpoints", vps},
          {"intrinsics", to_json(s.intrinsics)},
          {"grid", to_json(s.grid)},
          {"depth_scale", s.depth_scale}};
}

inline SyntheticSceneSpec synthetic_spec_from_json(const json& j) {
  SyntheticSceneSpec s;
  try {
    s.scene_id = j.value("scene_id", s.scene_id);
    if (j.contains("room")) s.room = vec3_from_json(j.at("room"));
    if (j.contains("base_color")) {
      const auto c = j.at("base_color").get<std::vector<float>>();
      require(c.size() == 3, ErrorCode::invalid_argument, "base_color needs three channels");
      s.base_color = {c[0], c[1], c[2]};
    }
    if (j.contains("layers")) {
      s.layers.clear();
      for (const auto& l : j.at("layers")) {
        TextureLayer t;
        const auto kind = l.at("kind").get<std::string>();
        require(kind == "checker" || kind == "gradient", ErrorCode::invalid_argument,
                "unknown texture kind '" + kind + "'");
        t.kind = kind == "checker" ? TextureLayer::Kind::checker : TextureLayer::Kind::gradient;
        t.seed = l.value("seed", std::uint64_t{0});
        t.period = l.value("period", t.period);
        t.amplitude = l.value("amplitude", t.amplitude);
        s.layers.push_back(t);
      }
    }
    for (const auto& v : j.at("viewpoints"))
      s.viewpoints.emplace_back(v.at("id").get<std::string>(), vec3_from_json(v.at("position")));
    if (j.contains("intrinsics")) {
      s.intrinsics = intrinsics_from_json(j.at("intrinsics"));
    } else if (j.contains("width")) {
      s.intrinsics = intrinsics_from_fov(j.at("width").get<int>(), j.at("height").get<int>(),
                                         j.value("vertical_fov", 90.0));
    }
    if (j.contains("grid")) s.grid = grid_from_json(j.at("grid"));
    s.depth_scale = j.value("depth_scale", s.depth_scale);
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_argument, std::string("synthetic spec: ") + e.what());
  }
  s.validate();
  return s;
}

/// Seed-derived layer parameters.
struct TextureField {
  struct Layer {
    TextureLayer::Kind kind;
    double amplitude;
    double period;
    Vec3 phase;      // checker
    Vec3 direction;  // gradient, unit
    Rgb weights;     // per channel in [-1, 1]
  };
  Rgb base;
  Vec3 room;
  std::vector<Layer> layers;

  TextureField(const SyntheticSceneSpec& spec, std::uint64_t seed) : base(spec.base_color), room(spec.room) {
    for (const auto& l : spec.layers) {
      std::uint64_t h = hash_combine(hash_combine(seed, l.seed), static_cast<std::uint64_t>(l.kind));
      auto next = [&h] {
        h = splitmix64(h);
        return unit_from_hash(h);
      };
      Layer out{l.kind, l.amplitude, l.period, Vec3::Zero(), Vec3::UnitX(), {}};
      for (int a = 0; a < 3; ++a) out.phase[a] = 2.0 * std::numbers::pi * next();
      Vec3 dir(next() - 0.5, next() - 0.5, next() - 0.5);
      out.direction = dir.norm() > 1e-6 ? dir.normalized() : Vec3::UnitX();
      for (auto& w : out.weights) w = static_cast<float>(2.0 * next() - 1.0);
      layers.push_back(out);
    }
  }

  Rgb color(const Vec3& p) const {
    std::array<double, 3> c{base[0], base[1], base[2]};
    for (const auto& l : layers) {
      double v = 0.0;
      if (l.kind == TextureLayer::Kind::checker) {
        const double w = 2.0 * std::numbers::pi / l.period;
        v = std::sin(w * p.x() + l.phase.x()) * std::sin(w * p.y() + l.phase.y()) *
            std::sin(w * p.z() + l.phase.z());
      } else {
        v = l.direction.dot(p - 0.5 * room) / (0.5 * room.norm());
      }
      for (int ch = 0; ch < 3; ++ch) c[ch] += l.amplitude * l.weights[ch] * v;
    }
    return {static_cast<float>(std::clamp(c[0], 0.0, 1.0)), static_cast<float>(std::clamp(c[1], 0.0, 1.0)),
            static_cast<float>(std::clamp(c[2], 0.0, 1.0))};
  }
};

/// Distance along `dir` from an interior point to the box [0, room].
inline double ray_box_exit(const Vec3& origin, const Vec3& dir, const Vec3& room) {
  double t = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] > 0.0) t = std::min(t, (room[a] - origin[a]) / dir[a]);
    if (dir[a] < 0.0) t = std::min(t, -origin[a] / dir[a]);
  }
  return t;
}

struct RenderedView {
  ImageBuffer image;  // 8-bit levels
  DepthMap depth;     // exact z-depth
};

/// Ray-cast one camera (camera-to-world pose) inside the room.
inline RenderedView render_room_view(const SyntheticSceneSpec& spec, const TextureField& field, const Pose& pose) {
  const auto& k = spec.intrinsics;
  RenderedView out{ImageBuffer(k.width, k.height), DepthMap(k.width, k.height)};
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      // Camera ray with unit z, so the ray parameter is the z-depth.
      const Vec3 d_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      const Vec3 d_world = pose.rotation * d_cam;
      const double t = ray_box_exit(pose.translation, d_world, spec.room);
      out.depth.set(x, y, t);
      out.image(x, y) = field.color(pose.translation + t * d_world);
    }
  out.image = quantized(std::move(out.image));
  return out;
}

inline RenderedView render_room_view(const SyntheticSceneSpec& spec, const Pose& pose, std::uint64_t seed = 0) {
  return render_room_view(spec, TextureField(spec, seed), pose);
}

/// Render every viewpoint of the spec. Deterministic for a fixed seed.
inline Scene synth_scene(const SyntheticSceneSpec& spec, std::uint64_t seed = 0) {
  spec.validate();
  const TextureField field(spec, seed);
  std::vector<Viewpoint> vps;
  for (const auto& [id, pos] : spec.viewpoints) {
    Viewpoint vp;
    vp.id = id;
    vp.position = pos;
    for (int i = 0; i < spec.grid.n; ++i) {
      auto view = render_room_view(spec, field, camera_pose(pos, i, spec.grid));
      vp.views.push_back(std::move(view.image));
      vp.depths.push_back(std::move(view.depth));
    }
    vps.push_back(std::move(vp));
  }
  return Scene::in_memory(spec.scene_id, spec.intrinsics, spec.grid, std::move(vps), spec.depth_scale);
}

}  // namespace wcgen
