// Acceptance run: one PASS/FAIL line per criterion, each with its own time
// budget. Exit status is nonzero when any line fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "support/backends.hpp"
#include "support/random.hpp"
#include "support/two_plane.hpp"
#include "wcgen/wcgen.hpp"

using namespace wcgen;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed checks; the first few messages go into the detail line.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) notes_ << (failures_ > 1 ? "; " : "") << what;
  }
  void note(const std::string& s) { info_ << (info_.tellp() > 0 ? ", " : "") << s; }
  Outcome outcome() const {
    if (failures_ == 0) return {true, info_.str()};
    return {false, std::to_string(failures_) + " failed check(s): " + notes_.str()};
  }

 private:
  int failures_ = 0;
  std::ostringstream notes_;
  std::ostringstream info_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("wcgen-acceptance-" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::map<std::string, Bytes> snapshot(const fs::path& dir) {
  std::map<std::string, Bytes> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return files;
}

BackendSet mock_backends(std::shared_ptr<const GenerationBackend> gen = std::make_shared<FillNearestMock>()) {
  return {std::move(gen), std::make_shared<ConstantDepthMock>(3.0), std::make_shared<ConstantCaptionMock>("a room")};
}

Trajectory walk(const Scene& scene, std::string id, bool reverse = false) {
  Trajectory t;
  t.id = std::move(id);
  t.scene_id = scene.id();
  t.viewpoint_ids = scene.viewpoint_ids();
  if (reverse) std::reverse(t.viewpoint_ids.begin(), t.viewpoint_ids.end());
  return t;
}

ViewGrid toy_grid() { return ViewGrid{9, 3, {-30.0, 0.0, 30.0}, 120.0}; }

std::set<int> adjacency_oracle(int i, const ViewGrid& g) {
  const int row = i / g.n_h, col = i % g.n_h;
  std::set<int> out;
  if (row > 0) out.insert((row - 1) * g.n_h + col);
  if (row < 2) out.insert((row + 1) * g.n_h + col);
  out.insert(row * g.n_h + (col + 1) % g.n_h);
  out.insert(row * g.n_h + (col + g.n_h - 1) % g.n_h);
  out.erase(i);
  return out;
}

// --- criteria -------------------------------------------------------------------

Outcome geometry_round_trips() {
  Checker c;
  std::mt19937_64 rng(1);
  double worst = 0.0;
  for (int trial = 0; trial < 100000; ++trial) {
    const auto k = test::random_intrinsics(rng);
    std::uniform_real_distribution<double> u(0.0, k.width - 1.0), v(0.0, k.height - 1.0), d(0.05, 50.0);
    const PixelCoord px{u(rng), v(rng)};
    const double depth = d(rng);
    const auto back = project(unproject(px, depth, k), k);
    if (!back) {
      c.expect(false, "projection lost at trial " + std::to_string(trial));
      continue;
    }
    worst = std::max({worst, std::abs(back->pixel.u - px.u), std::abs(back->pixel.v - px.v),
                      std::abs(back->depth - depth)});
    // And from the 3D side: a point in front of the camera survives project then unproject.
    const Vec3 p(std::uniform_real_distribution<double>(-20.0, 20.0)(rng),
                 std::uniform_real_distribution<double>(-20.0, 20.0)(rng), d(rng));
    const auto proj = project(p, k);
    if (!proj) {
      c.expect(false, "point lost at trial " + std::to_string(trial));
      continue;
    }
    worst = std::max(worst, (unproject(proj->pixel, proj->depth, k) - p).cwiseAbs().maxCoeff());
  }
  c.expect(worst <= 1e-9, "pixel round trip error " + fmt(worst));
  c.note("max round-trip error " + fmt(worst, 3));

  const auto k = intrinsics_from_fov(256, 256, 60.0);
  const auto src = test::smooth_image(256, 256, 0.7);
  const Mat3 r = yaw_rotation(20.0) * pitch_rotation(-10.0) * roll_rotation(5.0);
  const auto there = rotation_warp(src, k, r, Mat3::Identity());
  const auto back = rotation_warp(there.color, k, r.transpose(), Mat3::Identity());
  ImageBuffer carried_in(256, 256);
  for (std::size_t i = 0; i < carried_in.size(); ++i) {
    const float m = there.validity.values()[i] ? 1.0f : 0.0f;
    carried_in.values()[i] = {m, m, m};
  }
  const auto carried = rotation_warp(carried_in, k, r.transpose(), Mat3::Identity());
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!back.validity.values()[i] || carried.color.values()[i][0] < 1.0f) continue;
    for (int ch = 0; ch < 3; ++ch) sum += std::abs(back.color.values()[i][ch] - src.values()[i][ch]);
    ++count;
  }
  const double mae = count ? sum / (3.0 * count) : 1.0;
  c.expect(count > src.size() / 2, "doubly valid region too small");
  c.expect(mae <= 2.0 / 255.0, "rotation round trip " + fmt(mae * 255) + "/255");
  c.note("rotation round trip " + fmt(mae * 255, 3) + "/255");
  return c.outcome();
}

Outcome traversal_queue_check() {
  Checker c;
  for (const ViewGrid& g : {ViewGrid{}, toy_grid()})
    for (int r = 0; r < g.n; ++r) {
      auto order = traversal_queue(r, g).order;
      std::sort(order.begin(), order.end());
      std::vector<int> expected;
      for (int i = 0; i < g.n; ++i)
        if (i != r) expected.push_back(i);
      c.expect(order == expected, "not a permutation for n=" + std::to_string(g.n) + " r=" + std::to_string(r));
    }
  const auto q12 = traversal_queue(12, ViewGrid{}).order;
  const auto q0 = traversal_queue(0, ViewGrid{}).order;
  c.expect(std::vector<int>(q12.begin(), q12.begin() + 3) == std::vector<int>{0, 24, 13}, "r=12 prefix");
  c.expect(std::vector<int>(q0.begin(), q0.begin() + 3) == std::vector<int>{12, 24, 1}, "r=0 prefix");
  c.note("36 + 9 references checked");
  return c.outcome();
}

Outcome neighbor_set_check() {
  Checker c;
  int closures = 0;
  for (const ViewGrid& g : {ViewGrid{}, toy_grid()})
    for (int r = 0; r < g.n; ++r) {
      std::set<int> generated{r};
      const int wrap_target = g.index(g.row(r), (g.column(r) + g.n_h - 1) % g.n_h);
      for (int i : traversal_queue(r, g).order) {
        const auto members = neighbor_set(i, generated, r, g).members;
        const auto adj = adjacency_oracle(i, g);
        c.expect(!members.empty(), "empty set at r=" + std::to_string(r) + " i=" + std::to_string(i));
        for (int m : members)
          c.expect(adj.contains(m) && generated.contains(m),
                   "bad member " + std::to_string(m) + " for i=" + std::to_string(i));
        for (int a : adj)
          if (generated.contains(a))
            c.expect(std::find(members.begin(), members.end(), a) != members.end(),
                     "missing generated neighbor " + std::to_string(a) + " for i=" + std::to_string(i));
        if (i == wrap_target) {
          const bool has_wrap = std::find(members.begin(), members.end(), r) != members.end();
          c.expect(has_wrap, "no wraparound neighbor at r=" + std::to_string(r));
          closures += has_wrap;
        }
        generated.insert(i);
      }
    }
  c.note(std::to_string(closures) + " loop closures");
  return c.outcome();
}

Outcome occlusion_oracle() {
  Checker c;
  std::mt19937_64 rng(20240);
  int contested = 0;
  const int scenes = 24;
  for (int trial = 0; trial < scenes; ++trial) {
    const auto s = test::make_two_plane_scene(rng, 64);
    const auto g = forward_warp(s.image, s.depth, s.k, s.rel());
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const auto hit = test::ray_cast_target_pixel(s, x, y);
        const std::string where = "scene " + std::to_string(trial) + " px " + std::to_string(x) + "," + std::to_string(y);
        c.expect(bool(g.validity(x, y)) == hit.valid, "validity at " + where);
        if (!hit.valid || !g.validity(x, y)) continue;
        c.expect(g.color(x, y) == hit.color, "winner at " + where);
        c.expect(std::abs((*g.depth)(x, y) - hit.depth) <= 1e-6, "depth at " + where);
        contested += hit.near;
      }
  }
  c.expect(contested > 0, "no near-plane pixels exercised");
  c.note(std::to_string(scenes) + " scenes");
  return c.outcome();
}

Outcome synthetic_room_consistency() {
  Checker c;
  const auto spec = synthetic_room_spec();
  const auto scene = synth_scene(spec);
  double worst_seam = 0.0;
  for (const auto& id : scene.viewpoint_ids())
    worst_seam = std::max(worst_seam, seam_error(scene.viewpoint(id).views, spec.intrinsics, spec.grid).max_error);
  c.expect(worst_seam <= 2.0 / 255.0, "max seam " + fmt(worst_seam * 255) + "/255");

  double worst_err = 0.0, worst_cov = 1.0;
  const auto& ids = scene.viewpoint_ids();
  for (std::size_t t = 1; t < ids.size(); ++t) {
    const auto& a = scene.viewpoint(ids[t - 1]);
    const auto& b = scene.viewpoint(ids[t]);
    const int ra = select_reference_index(a.position, b.position, spec.grid);
    const int rb = ra;
    const auto rel = step_pose(a.position, ra, b.position, rb, spec.grid);
    const auto r = trajectory_consistency(a.views[ra], a.depths[ra], b.views[rb], spec.intrinsics, rel);
    worst_err = std::max(worst_err, r.mean_abs_error);
    worst_cov = std::min(worst_cov, r.valid_fraction);
  }
  c.expect(worst_err <= 3.0 / 255.0, "trajectory consistency " + fmt(worst_err * 255) + "/255");
  c.expect(worst_cov >= 0.70, "coverage " + fmt(worst_cov));

  auto views = scene.viewpoint(ids[0]).views;
  std::uint64_t h = 17;
  for (auto& px : views[17].values())
    for (auto& ch : px) {
      h = splitmix64(h);
      ch = std::clamp(ch + static_cast<float>(0.3 * (unit_from_hash(h) - 0.5)), 0.0f, 1.0f);
    }
  double weakest_incident = 1.0;
  for (const auto& e : seam_error(views, spec.intrinsics, spec.grid).edges)
    if (e.i == 17 || e.j == 17) weakest_incident = std::min(weakest_incident, e.error());
  c.expect(weakest_incident > 10.0 / 255.0, "noisy view incident seam " + fmt(weakest_incident * 255) + "/255");

  c.note("max seam " + fmt(worst_seam * 255, 3) + "/255");
  c.note("consistency " + fmt(worst_err * 255, 3) + "/255 at coverage >= " + fmt(worst_cov, 3));
  c.note("noisy incident seams >= " + fmt(weakest_incident * 255, 3) + "/255");
  return c.outcome();
}

Outcome merge_algebra() {
  Checker c;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n_items = 1 + trial % 4;
    std::vector<GuidanceImage> items;
    for (int k = 0; k < n_items; ++k) {
      BinaryMask valid(32, 32, 0);
      for (auto& v : valid.values()) v = (rng() % 3 == 0);
      GuidanceImage g{test::random_image(rng, 32, 32), valid, std::nullopt};
      for (std::size_t i = 0; i < g.color.size(); ++i)
        if (!valid.values()[i]) g.color.values()[i] = {0, 0, 0};
      items.push_back(std::move(g));
    }
    const auto merged = merge_guidance(std::span<const GuidanceImage>(items));
    if (n_items == 1) {
      c.expect(merged.guidance.color == items[0].color && merged.guidance.validity == items[0].validity,
               "single-input merge changed its input");
    }
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        std::vector<Rgb> cover;
        for (const auto& g : items)
          if (g.validity(x, y)) cover.push_back(g.color(x, y));
        c.expect(bool(merged.guidance.validity(x, y)) == !cover.empty(), "validity is not the union");
        if (cover.empty()) continue;
        for (int ch = 0; ch < 3; ++ch) {
          double mean = 0.0;
          for (const auto& col : cover) mean += col[ch];
          mean /= cover.size();
          const double got = merged.guidance.color(x, y)[ch];
          if (cover.size() == 1) c.expect(got == cover[0][ch], "disjoint pixel is not copied exactly");
          c.expect(std::abs(got - mean) <= 1.0 / 255.0, "overlap pixel is not the mean");
        }
      }
  }
  c.note("200 randomized merges");
  return c.outcome();
}

Outcome end_to_end_determinism() {
  Checker c;
  const auto scene = synth_scene(synthetic_room_spec(5));
  const std::vector<Trajectory> trajs{walk(scene, "forward"), walk(scene, "backward", true)};
  PipelineConfig cfg;
  cfg.seed = 7;

  auto counting = std::make_shared<test::CountingGenerator>(std::make_shared<FillNearestMock>());
  auto run_into = [&](const fs::path& dir, int workers, const BackendSet& b) {
    PipelineConfig local = cfg;
    local.workers = workers;
    for (const auto& g : run_trajectories(trajs, scene, b, local)) {
      c.expect(g.complete(), g.trajectory_id + " incomplete");
      write_dataset(g, dir);
    }
  };
  const auto a = scratch("e2e-a"), b = scratch("e2e-b"), w4 = scratch("e2e-w4");
  run_into(a, 1, mock_backends(counting));
  const int calls_per_two = counting->total();
  run_into(b, 1, mock_backends());
  run_into(w4, 4, mock_backends());
  const auto sa = snapshot(a);
  c.expect(sa == snapshot(b), "repeat run differs");
  c.expect(sa == snapshot(w4), "workers=4 differs from workers=1");

  const auto single = run_trajectory(trajs[0], scene, mock_backends(), cfg);
  const auto calls = single.calls();
  c.expect(calls.fallbacks == 0, "unexpected fallback");
  c.expect(calls.depth_to_image == 1 && calls.image_to_image == 4 && calls.outpaint == 5 * 35,
           "call accounting " + std::to_string(calls.depth_to_image) + "/" + std::to_string(calls.image_to_image) +
               "/" + std::to_string(calls.outpaint));
  c.expect(calls_per_two == 2 * (1 + 4 + 5 * 35), "generator saw " + std::to_string(calls_per_two) + " calls");
  c.note(std::to_string(sa.size()) + " files identical across 3 runs");
  c.note("calls 1 + 4 + 175");
  return c.outcome();
}

Outcome fallback_behavior() {
  Checker c;
  const auto scene = synth_scene(synthetic_room_spec(2, 64));
  Trajectory t = walk(scene, "about-face");
  t.reference_indices = std::vector<int>{12, 18};  // second camera faces away from the first
  const auto g = run_trajectory(t, scene, mock_backends(), PipelineConfig{});
  c.expect(g.complete(), "trajectory incomplete");
  const auto dir = scratch("fallback");
  const auto doc = read_json_file(write_dataset(g, dir));
  c.expect(doc["steps"][1]["fallback"] == true, "step not marked as fallback");
  c.expect(doc["steps"][1]["overlap"] == 0.0, "overlap is not zero");
  bool found = false;
  for (const auto& img : doc["viewpoints"][1]["images"])
    if (img["index"] == 18) {
      found = true;
      c.expect(img["request"]["mode"] == "depth_to_image", "fallback mode " + img["request"]["mode"].dump());
      c.expect(img["request"]["stage"] == "fallback", "fallback stage " + img["request"]["stage"].dump());
    }
  c.expect(found, "reference image missing from provenance");
  c.expect(doc["calls"]["fallbacks"] == 1, "fallback count");
  c.note("overlap " + doc["steps"][1]["overlap"].dump() + ", provenance mode depth_to_image");
  return c.outcome();
}

Outcome protocol_transparency() {
  Checker c;
  int compared = 0;
  for (const auto& name : mock_generator_names()) {
    const auto local = mock_backends(make_mock_generator(name));
    BackendServer server(local);
    server.bind();
    server.start();
    auto remote = std::make_shared<RemoteBackend>(RemoteConfig{server.url()});

    std::mt19937_64 rng(3);
    const auto k = intrinsics_from_fov(40, 30, 70.0);
    for (int trial = 0; trial < 6; ++trial) {
      GenerationRequest req;
      req.mode = static_cast<GenerationMode>(trial % 3);
      req.prompt = "a hallway " + std::to_string(trial);
      req.seed = rng();
      req.strength = 0.25 * (trial % 4);
      DepthMap d(k.width, k.height);
      for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x) d.set(x, y, 1.0 + 0.05 * x + 0.01 * y);
      if (req.mode == GenerationMode::depth_to_image || trial % 2 == 0) req.depth = d;
      if (req.mode != GenerationMode::depth_to_image) {
        req.init_image = test::random_image(rng, k.width, k.height);
        WeightMask m(k.width, k.height, 0.0f);
        for (int y = 0; y < k.height; ++y)
          for (int x = 0; x < k.width; ++x) m(x, y) = x < k.width / 2 ? 1.0f : (x < 25 ? 0.5f : 0.0f);
        req.mask = m;
      }
      const auto a = local.generator->generate(req);
      const auto b = remote->generate(req);
      c.expect(encode_png(a.image) == encode_png(b.image), name + " " + std::string(to_string(req.mode)) + " differs");
      c.expect(a.seed_used == b.seed_used && a.backend_id == b.backend_id, name + " metadata differs");
      ++compared;
    }
    const auto img = test::random_image(rng, 20, 20);
    c.expect(local.depth->estimate_depth(img) == remote->estimate_depth(img), "depth differs");
    c.expect(local.captioner->caption(img) == remote->caption(img), "caption differs");

    // A whole trajectory through the wire writes the same dataset.
    const auto scene = synth_scene(synthetic_room_spec(2, 32));
    const auto t = walk(scene, "wire");
    const auto da = scratch("wire-local-" + name), db = scratch("wire-remote-" + name);
    write_dataset(run_trajectory(t, scene, local, PipelineConfig{}), da);
    write_dataset(run_trajectory(t, scene, BackendSet{remote, remote, remote}, PipelineConfig{}), db);
    c.expect(snapshot(da) == snapshot(db), name + " trajectory dataset differs over the wire");
    server.stop();
  }
  c.note(std::to_string(compared) + " requests plus one trajectory per mock");
  return c.outcome();
}

struct Criterion {
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"geometry-round-trips", 10.0, geometry_round_trips},
      {"traversal-queue", 1.0, traversal_queue_check},
      {"neighbor-sets", 1.0, neighbor_set_check},
      {"occlusion-oracle", 30.0, occlusion_oracle},
      {"synthetic-room-consistency", 60.0, synthetic_room_consistency},
      {"merge-algebra", 10.0, merge_algebra},
      {"end-to-end-determinism", 120.0, end_to_end_determinism},
      {"fallback-behavior", 10.0, fallback_behavior},
      {"protocol-transparency", 30.0, protocol_transparency},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = cr.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > cr.budget_seconds) {
      o.pass = false;
      o.detail += (o.detail.empty() ? "" : "; ") + std::string("over time budget of ") + fmt(cr.budget_seconds) + " s";
    }
    failed += !o.pass;
    std::printf("%s  %-28s %7.2f s  %s\n", o.pass ? "PASS" : "FAIL", cr.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::error_code ec;
  fs::remove_all(fs::temp_directory_path() / ("wcgen-acceptance-" + std::to_string(::getpid())), ec);
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
