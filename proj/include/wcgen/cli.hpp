#pragma once

// Command-line front end. Machine-readable output goes to `out` as JSON,
// progress and errors to `err`.
//
// Exit codes: 0 ok, 1 usage or input error, 2 partial failure,
// 3 backend unreachable, 4 threshold exceeded.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "wcgen/backend.hpp"
#include "wcgen/dataio.hpp"
#include "wcgen/panorama.hpp"
#include "wcgen/pipeline.hpp"
#include "wcgen/remote.hpp"

namespace wcgen::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

enum ExitCode : int { kOk = 0, kUsage = 1, kPartial = 2, kUnreachable = 3, kThreshold = 4 };

inline constexpr std::uint64_t kDefaultSeed = 0;
inline constexpr const char* kBackendEnv = "WCGEN_BACKEND_URL";

struct Context {
  std::ostream& out;
  std::ostream& err;
  /// serve-mock hands the running server here instead of blocking.
  std::function<void(BackendServer&)> on_serve;
};

struct Thresholds {
  double max_seam = 2.0 / 255.0;
  double max_consistency = 3.0 / 255.0;
  double min_coverage = 0.0;
};

inline json to_json(const Thresholds& t) {
  return {{"max_seam", t.max_seam}, {"max_consistency", t.max_consistency}, {"min_coverage", t.min_coverage}};
}

/// Inline JSON object or a path to a JSON file.
inline Thresholds parse_thresholds(const std::string& arg) {
  Thresholds t;
  if (arg.empty()) return t;
  json j;
  if (arg.front() == '{') {
    try {
      j = json::parse(arg);
    } catch (const json::exception& e) {
      fail(ErrorCode::invalid_argument, std::string("--thresholds: ") + e.what());
    }
  } else {
    j = read_json_file(arg);
  }
  require(j.is_object(), ErrorCode::invalid_argument, "--thresholds must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    require(value.is_number(), ErrorCode::invalid_argument, "--thresholds: " + key + " must be a number");
    if (key == "max_seam") t.max_seam = value.get<double>();
    else if (key == "max_consistency") t.max_consistency = value.get<double>();
    else if (key == "min_coverage") t.min_coverage = value.get<double>();
    else fail(ErrorCode::invalid_argument, "--thresholds: unknown key " + key);
  }
  return t;
}

struct SelectedBackend {
  BackendSet set;
  std::string label;
  std::shared_ptr<RemoteBackend> remote;
};

/// `mock:<name>` or `remote:<url>`; an empty spec falls back to WCGEN_BACKEND_URL.
inline SelectedBackend select_backend(std::string spec) {
  if (spec.empty()) {
    const char* env = std::getenv(kBackendEnv);
    if (env && *env) spec = std::string("remote:") + env;
  }
  require(!spec.empty(), ErrorCode::invalid_argument,
          std::string("no backend selected; pass --backend mock:<name> or remote:<url>, or set ") + kBackendEnv);
  if (spec.rfind("mock:", 0) == 0) return {make_mock_backends(spec.substr(5)), spec, nullptr};
  if (spec.rfind("remote:", 0) == 0) {
    RemoteConfig rc;
    rc.url = spec.substr(7);
    auto r = std::make_shared<RemoteBackend>(rc);
    return {{r, r, r}, spec, r};
  }
  fail(ErrorCode::invalid_argument, "unknown backend '" + spec + "' (expected mock:<name> or remote:<url>)");
}

// Camera motion given in the source camera frame (x right, y down, z forward).
// Positive yaw turns right, positive pitch looks up.
inline RelativePose camera_motion(double yaw_deg, double pitch_deg, double roll_deg, const Vec3& translation) {
  const Mat3 turn = (Eigen::AngleAxisd(deg2rad(yaw_deg), Vec3::UnitY()) *
                     Eigen::AngleAxisd(deg2rad(pitch_deg), Vec3::UnitX()) *
                     Eigen::AngleAxisd(deg2rad(roll_deg), Vec3::UnitZ()))
                        .toRotationMatrix();
  return {turn.transpose(), -(turn.transpose() * translation)};
}

namespace detail {

inline void log(const Context& ctx, const std::string& msg) { ctx.err << "wcgen: " << msg << "\n"; }

inline int guarded(const Context& ctx, const std::function<int()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    log(ctx, std::string("error: ") + e.what());
    return e.code() == ErrorCode::transport ? kUnreachable : kUsage;
  } catch (const std::exception& e) {
    log(ctx, std::string("error: ") + e.what());
    return kUsage;
  }
}

}  // namespace detail

// --- generate -----------------------------------------------------------------

struct GenerateArgs {
  std::string scene;
  std::string traj;
  std::string backend;
  std::string out;
  std::string config;
  std::uint64_t seed = kDefaultSeed;
  int workers = 1;
  double min_overlap = 0.0;
  double strength_forward = 0.0;
  double blur_sigma = 0.0;
  bool has_seed = false;
  bool has_workers = false;
  bool has_min_overlap = false;
  bool has_strength_forward = false;
  bool has_blur_sigma = false;
};

inline PipelineConfig resolve_config(const GenerateArgs& a) {
  PipelineConfig cfg;
  cfg.seed = kDefaultSeed;
  if (!a.config.empty()) apply_json(cfg, read_json_file(a.config));
  if (a.has_seed) cfg.seed = a.seed;
  if (a.has_workers) cfg.workers = a.workers;
  if (a.has_min_overlap) cfg.min_overlap = a.min_overlap;
  if (a.has_strength_forward) cfg.strength_forward = a.strength_forward;
  if (a.has_blur_sigma) cfg.blur_sigma = a.blur_sigma;
  cfg.validate();
  return cfg;
}

inline int cmd_generate(const GenerateArgs& a, const Context& ctx) {
  const auto cfg = resolve_config(a);
  auto backend = select_backend(a.backend);
  const auto scene = load_scene(a.scene);
  const auto trajs = read_trajectories(a.traj);
  if (backend.remote && !backend.remote->healthy()) {
    detail::log(ctx, "backend unreachable: " + backend.label);
    return kUnreachable;
  }
  detail::log(ctx, "running " + std::to_string(trajs.size()) + " trajectories on " + backend.label);
  const auto results = run_trajectories(trajs, scene, backend.set, cfg);
  int code = kOk;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& g = results[i];
    write_dataset(g, a.out);
    json line{{"trajectory_id", g.trajectory_id},
              {"viewpoints", trajs[i].viewpoint_ids.size()},
              {"fallbacks", g.calls().fallbacks},
              {"complete", g.complete()},
              {"wall_seconds", g.wall_seconds}};
    if (g.failure) {
      line["failure"] = {{"t", g.failure->t},
                         {"viewpoint_id", g.failure->viewpoint_id},
                         {"stage", g.failure->stage},
                         {"code", to_string(g.failure->code)}};
      detail::log(ctx, g.trajectory_id + " failed: " + g.failure->message);
      code = kPartial;
    }
    ctx.out << line.dump() << std::endl;
  }
  return code;
}

// --- warp ---------------------------------------------------------------------

struct WarpArgs {
  std::string image;
  std::string depth;
  std::string out;
  double depth_scale = kDefaultDepthScale;
  double fov = 90.0;
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  std::vector<double> translation{0.0, 0.0, 0.0};
};

inline int cmd_warp(const WarpArgs& a, const Context& ctx) {
  require(a.translation.size() == 3, ErrorCode::invalid_argument, "--translation takes x y z");
  const auto src = decode_png_image(read_file(a.image));
  const auto k = intrinsics_from_fov(src.width(), src.height(), a.fov);
  const Vec3 t(a.translation[0], a.translation[1], a.translation[2]);
  const auto rel = camera_motion(a.yaw, a.pitch, a.roll, t);
  GuidanceImage g;
  std::string mode;
  if (a.depth.empty()) {
    require(t.isZero(), ErrorCode::invalid_argument, "a translated warp needs --depth");
    g = rotation_warp(src, k, rel.rotation, Mat3::Identity());
    mode = "rotation";
  } else {
    g = forward_warp(src, decode_png_depth(read_file(a.depth), a.depth_scale), k, rel);
    mode = "forward";
  }
  const fs::path out(a.out);
  write_file(out / "guidance.png", encode_png(g.color));
  write_file(out / "guidance_mask.png", encode_png_mask(g.validity));
  ctx.out << json{{"mode", mode},
                  {"overlap", overlap_fraction(g)},
                  {"valid_pixels", g.valid_count()},
                  {"width", src.width()},
                  {"height", src.height()},
                  {"guidance", (out / "guidance.png").string()},
                  {"mask", (out / "guidance_mask.png").string()}}
                 .dump()
          << std::endl;
  return kOk;
}

// --- validate -----------------------------------------------------------------

struct ValidateArgs {
  std::string dataset;
  std::string scene;
  std::string thresholds;
};

inline int cmd_validate(const ValidateArgs& a, const Context& ctx) {
  const auto th = parse_thresholds(a.thresholds);
  const auto dirs = find_datasets(a.dataset);
  if (dirs.empty()) {
    detail::log(ctx, "no generated datasets under " + a.dataset);
    return kUsage;
  }
  std::optional<Scene> scene;
  if (!a.scene.empty()) scene.emplace(load_scene(a.scene));

  json reports = json::array();
  json offending = json::array();
  std::vector<std::string> violations;
  std::size_t checked_views = 0;
  double worst_seam = 0.0;

  for (const auto& dir : dirs) {
    const auto integrity = check_dataset(dir);
    for (const auto& f : integrity.mismatches) violations.push_back(dir.filename().string() + ": checksum " + f);
    for (const auto& f : integrity.missing) violations.push_back(dir.filename().string() + ": missing " + f);
    const auto d = load_dataset(dir);
    json vps = json::array();
    for (const auto& vp : d.viewpoints) {
      const bool full = std::all_of(vp.images.begin(), vp.images.end(), [](const auto& im) { return !im.empty(); });
      if (!full) {
        vps.push_back({{"id", vp.id}, {"complete", false}});
        continue;
      }
      ++checked_views;
      const auto seam = seam_error(vp.images, d.intrinsics, d.grid);
      worst_seam = std::max(worst_seam, seam.max_error);
      json edges = json::array();
      for (const auto& e : seam.edges) {
        edges.push_back({{"i", e.i}, {"j", e.j}, {"error", e.error()}, {"overlap", e.overlap}});
        if (e.error() > th.max_seam) {
          offending.push_back(
              {{"trajectory_id", d.trajectory_id}, {"viewpoint_id", vp.id}, {"i", e.i}, {"j", e.j}, {"error", e.error()}});
          violations.push_back(d.trajectory_id + "/" + vp.id + ": seam " + std::to_string(e.i) + "-" +
                               std::to_string(e.j) + " = " + std::to_string(e.error()));
        }
      }
      vps.push_back({{"id", vp.id},
                     {"complete", true},
                     {"seam", {{"max", seam.max_error}, {"mean", seam.mean_error}, {"edges", edges}}}});
    }

    json consistency = json::array();
    if (scene) {
      for (std::size_t t = 1; t < d.viewpoints.size(); ++t) {
        const auto& p = d.viewpoints[t - 1];
        const auto& n = d.viewpoints[t];
        if (p.images[p.reference].empty() || n.images[n.reference].empty()) continue;
        const auto& prev_vp = scene->viewpoint(p.id);
        if (!prev_vp.has_depth(p.reference)) continue;
        const auto rel = step_pose(prev_vp.position, p.reference, scene->position(n.id), n.reference, d.grid);
        const auto c = trajectory_consistency(p.images[p.reference], prev_vp.depths[p.reference],
                                              n.images[n.reference], d.intrinsics, rel);
        consistency.push_back({{"from", p.id}, {"to", n.id}, {"error", c.mean_abs_error}, {"coverage", c.valid_fraction}});
        if (c.mean_abs_error > th.max_consistency || c.valid_fraction < th.min_coverage)
          violations.push_back(d.trajectory_id + ": consistency " + p.id + " -> " + n.id + " = " +
                               std::to_string(c.mean_abs_error) + " at coverage " + std::to_string(c.valid_fraction));
      }
    }
    reports.push_back({{"trajectory_id", d.trajectory_id},
                       {"path", dir.string()},
                       {"integrity",
                        {{"files", integrity.files}, {"mismatches", integrity.mismatches}, {"missing", integrity.missing}}},
                       {"viewpoints", vps},
                       {"consistency", consistency}});
  }

  if (checked_views == 0) {
    detail::log(ctx, "no complete viewpoints to validate");
    return kUsage;
  }
  ctx.out << json{{"datasets", reports},
                  {"thresholds", to_json(th)},
                  {"max_seam", worst_seam},
                  {"offending_edges", offending},
                  {"violations", violations},
                  {"pass", violations.empty()}}
                 .dump(2)
          << std::endl;
  for (const auto& v : violations) detail::log(ctx, v);
  return violations.empty() ? kOk : kThreshold;
}

// --- synth ----------------------------------------------------------------------

struct SynthArgs {
  std::string spec;
  std::string out;
  std::uint64_t seed = kDefaultSeed;
  int viewpoints = 5;
  int size = 128;
  double step = 0.25;
};

inline int cmd_synth(const SynthArgs& a, const Context& ctx) {
  const auto spec = a.spec.empty() ? synthetic_room_spec(a.viewpoints, a.size, a.step)
                                   : synthetic_spec_from_json(read_json_file(a.spec));
  const fs::path out(a.out);
  const auto scene = synth_scene(spec, a.seed);
  save_scene(scene, out / "scene.json");
  json result{{"scene", (out / "scene.json").string()}, {"viewpoints", spec.viewpoints.size()}};
  if (spec.viewpoints.size() >= 2) {
    Trajectory t;
    t.id = "walk";
    t.scene_id = spec.scene_id;
    for (const auto& [id, p] : spec.viewpoints) t.viewpoint_ids.push_back(id);
    write_trajectories(out / "trajectories.json", std::vector<Trajectory>{t});
    result["trajectories"] = (out / "trajectories.json").string();
  }
  detail::log(ctx, "rendered " + std::to_string(spec.viewpoints.size()) + " viewpoints");
  ctx.out << result.dump() << std::endl;
  return kOk;
}

// --- assemble -------------------------------------------------------------------

struct AssembleArgs {
  std::string dataset;
  std::string scene;
  std::string out;
  int width = 1024;
  int height = 0;
};

inline int cmd_assemble(const AssembleArgs& a, const Context& ctx) {
  require(a.dataset.empty() != a.scene.empty(), ErrorCode::invalid_argument,
          "assemble takes either a dataset path or --scene");
  const int h = a.height > 0 ? a.height : a.width / 2;
  const fs::path out(a.out);
  json written = json::array();
  auto emit = [&](const std::string& group, const std::string& vp, std::span<const ImageBuffer> views,
                  const Intrinsics& k, const ViewGrid& grid) {
    const fs::path path = out / group / (vp + ".png");
    write_file(path, encode_png(assemble_equirect(views, k, grid, a.width, h)));
    written.push_back(path.string());
  };
  if (!a.scene.empty()) {
    const auto scene = load_scene(a.scene);
    for (const auto& id : scene.viewpoint_ids())
      emit(scene.id(), id, scene.viewpoint(id).views, scene.intrinsics(), scene.grid());
  } else {
    for (const auto& dir : find_datasets(a.dataset)) {
      const auto d = load_dataset(dir);
      for (const auto& vp : d.viewpoints) {
        if (std::any_of(vp.images.begin(), vp.images.end(), [](const auto& im) { return im.empty(); })) {
          detail::log(ctx, "skipping incomplete viewpoint " + d.trajectory_id + "/" + vp.id);
          continue;
        }
        emit(d.trajectory_id, vp.id, vp.images, d.intrinsics, d.grid);
      }
    }
  }
  if (written.empty()) {
    detail::log(ctx, "nothing to assemble");
    return kUsage;
  }
  ctx.out << json{{"panoramas", written}}.dump() << std::endl;
  return kOk;
}

// --- serve-mock -----------------------------------------------------------------

struct ServeArgs {
  std::string mock{FillNearestMock::kName};
  std::string host = "127.0.0.1";
  int port = 8080;
};

inline int cmd_serve_mock(const ServeArgs& a, const Context& ctx) {
  BackendServer server(make_mock_backends(a.mock));
  server.bind(a.host, a.port);
  ctx.out << json{{"url", server.url()}, {"mock", a.mock}}.dump() << std::endl;
  detail::log(ctx, "serving " + a.mock + " on " + server.url());
  if (ctx.on_serve) {
    server.start();
    ctx.on_serve(server);
    server.stop();
  } else {
    server.run();
  }
  return kOk;
}

// --- entry point ----------------------------------------------------------------

inline int run(int argc, const char* const* argv, const Context& ctx) {
  CLI::App app{"World-consistent multi-view generation along navigation trajectories", "wcgen"};
  app.require_subcommand(1);

  GenerateArgs g;
  auto* gen = app.add_subcommand("generate", "Run trajectories and write datasets");
  gen->add_option("--scene", g.scene, "Scene manifest")->required();
  gen->add_option("--traj", g.traj, "Trajectory manifest")->required();
  gen->add_option("--backend", g.backend, "mock:<name> or remote:<url>");
  gen->add_option("--out", g.out, "Output directory")->required();
  gen->add_option("--config", g.config, "Pipeline config JSON");
  auto* seed_opt = gen->add_option("--seed", g.seed, "Run seed (default 0)");
  auto* workers_opt = gen->add_option("--workers", g.workers, "Parallel trajectories")->check(CLI::PositiveNumber);
  auto* overlap_opt = gen->add_option("--min-overlap", g.min_overlap, "Fallback threshold")->check(CLI::Range(0.0, 1.0));
  auto* strength_opt = gen->add_option("--strength-forward", g.strength_forward)->check(CLI::Range(0.0, 1.0));
  auto* sigma_opt = gen->add_option("--blur-sigma", g.blur_sigma, "Mask blur sigma in pixels");

  WarpArgs w;
  auto* warp = app.add_subcommand("warp", "Warp one image by a camera motion");
  warp->add_option("--image", w.image)->required();
  warp->add_option("--depth", w.depth, "16-bit depth PNG; enables translation");
  warp->add_option("--depth-scale", w.depth_scale)->check(CLI::PositiveNumber);
  warp->add_option("--fov", w.fov, "Vertical field of view in degrees");
  warp->add_option("--yaw", w.yaw, "Degrees, positive turns right");
  warp->add_option("--pitch", w.pitch, "Degrees, positive looks up");
  warp->add_option("--roll", w.roll);
  warp->add_option("--translation", w.translation, "x y z in the source camera frame")->expected(3);
  warp->add_option("--out", w.out)->required();

  ValidateArgs v;
  auto* val = app.add_subcommand("validate", "Check seams and trajectory consistency of datasets");
  val->add_option("dataset", v.dataset, "Trajectory directory or a directory of them")->required();
  val->add_option("--scene", v.scene, "Scene manifest, enables trajectory consistency");
  val->add_option("--thresholds", v.thresholds, "JSON object or file: max_seam, max_consistency, min_coverage");

  SynthArgs s;
  auto* syn = app.add_subcommand("synth", "Render a synthetic room scene");
  syn->add_option("--spec", s.spec, "Synthetic scene spec JSON");
  syn->add_option("--out", s.out)->required();
  syn->add_option("--seed", s.seed);
  syn->add_option("--viewpoints", s.viewpoints)->check(CLI::PositiveNumber);
  syn->add_option("--size", s.size)->check(CLI::PositiveNumber);
  syn->add_option("--step", s.step);

  AssembleArgs as;
  auto* asm_ = app.add_subcommand("assemble", "Write an equirectangular panorama per viewpoint");
  asm_->add_option("dataset", as.dataset, "Trajectory directory or a directory of them");
  asm_->add_option("--scene", as.scene, "Assemble a scene's own views instead");
  asm_->add_option("--out", as.out)->required();
  asm_->add_option("--width", as.width)->check(CLI::PositiveNumber);
  asm_->add_option("--height", as.height, "Defaults to width / 2");

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve-mock", "Host a mock backend over HTTP");
  serve->add_option("--mock", sv.mock, "Mock generator name");
  serve->add_option("--host", sv.host);
  serve->add_option("--port", sv.port, "0 picks a free port")->check(CLI::Range(0, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, ctx.out, ctx.err);
    return code == 0 ? kOk : kUsage;
  }

  g.has_seed = seed_opt->count() > 0;
  g.has_workers = workers_opt->count() > 0;
  g.has_min_overlap = overlap_opt->count() > 0;
  g.has_strength_forward = strength_opt->count() > 0;
  g.has_blur_sigma = sigma_opt->count() > 0;

  if (gen->parsed()) return detail::guarded(ctx, [&] { return cmd_generate(g, ctx); });
  if (warp->parsed()) return detail::guarded(ctx, [&] { return cmd_warp(w, ctx); });
  if (val->parsed()) return detail::guarded(ctx, [&] { return cmd_validate(v, ctx); });
  if (syn->parsed()) return detail::guarded(ctx, [&] { return cmd_synth(s, ctx); });
  if (asm_->parsed()) return detail::guarded(ctx, [&] { return cmd_assemble(as, ctx); });
  if (serve->parsed()) return detail::guarded(ctx, [&] { return cmd_serve_mock(sv, ctx); });
  return kUsage;
}

inline int run(const std::vector<std::string>& args, const Context& ctx) {
  std::vector<const char*> argv{"wcgen"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), ctx);
}

}  // namespace wcgen::cli
