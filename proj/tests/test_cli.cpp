#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <unistd.h>

#include "wcgen/cli.hpp"

using namespace wcgen;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() / ("wcgen-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& p) const { return path_ / p; }
  std::string str(const std::string& p) const { return (path_ / p).string(); }

 private:
  fs::path path_;
};

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result wcgen_cli(const std::vector<std::string>& args, std::function<void(BackendServer&)> on_serve = {}) {
  std::ostringstream out, err;
  const cli::Context ctx{out, err, std::move(on_serve)};
  const int code = cli::run(args, ctx);
  return {code, out.str(), err.str()};
}

std::map<std::string, Bytes> snapshot(const fs::path& dir) {
  std::map<std::string, Bytes> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return files;
}

void synth(const TempDir& tmp, int viewpoints = 3, int size = 32) {
  const auto r = wcgen_cli({"synth", "--out", tmp.str("scene"), "--viewpoints", std::to_string(viewpoints), "--size",
                            std::to_string(size)});
  ASSERT_EQ(r.code, 0) << r.err;
}

std::vector<std::string> generate_args(const TempDir& tmp, const std::string& out, const std::string& backend) {
  return {"generate", "--scene", tmp.str("scene/scene.json"), "--traj", tmp.str("scene/trajectories.json"),
          "--backend", backend, "--seed", "7", "--out", tmp.str(out)};
}

// A dataset whose images are the scene's own renders.
fs::path write_ideal_dataset(const Scene& scene, const fs::path& out) {
  GeneratedTrajectory g;
  g.trajectory_id = "ideal";
  g.scene_id = scene.id();
  g.intrinsics = scene.intrinsics();
  g.grid = scene.grid();
  for (const auto& id : scene.viewpoint_ids()) {
    GeneratedViewpoint vp;
    vp.id = id;
    vp.reference = 12;
    vp.images = scene.viewpoint(id).views;
    for (int i = 0; i < scene.grid().n; ++i) {
      RequestRecord r;
      r.index = i;
      r.stage = "replenish";
      vp.records.push_back(r);
    }
    g.viewpoints.push_back(std::move(vp));
  }
  return write_dataset(g, out).parent_path();
}

class EnvGuard {
 public:
  explicit EnvGuard(const char* value) {
    if (const char* old = std::getenv(cli::kBackendEnv)) old_ = old;
    if (value) ::setenv(cli::kBackendEnv, value, 1);
    else ::unsetenv(cli::kBackendEnv);
  }
  ~EnvGuard() {
    if (old_) ::setenv(cli::kBackendEnv, old_->c_str(), 1);
    else ::unsetenv(cli::kBackendEnv);
  }

 private:
  std::optional<std::string> old_;
};

}  // namespace

TEST(Cli, HelpAndMissingCommand) {
  EXPECT_EQ(wcgen_cli({"--help"}).code, 0);
  EXPECT_EQ(wcgen_cli({}).code, 1);
  EXPECT_EQ(wcgen_cli({"teleport"}).code, 1);
  EXPECT_EQ(wcgen_cli({"generate", "--scene", "x.json"}).code, 1);
}

TEST(Cli, GenerateIsDeterministic) {
  TempDir tmp;
  synth(tmp);
  const auto a = wcgen_cli(generate_args(tmp, "a", "mock:fill-nearest"));
  ASSERT_EQ(a.code, 0) << a.err;
  const auto b = wcgen_cli(generate_args(tmp, "b", "mock:fill-nearest"));
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(snapshot(tmp / "a"), snapshot(tmp / "b"));
  const auto line = json::parse(a.out);
  EXPECT_EQ(line["trajectory_id"], "walk");
  EXPECT_EQ(line["viewpoints"], 3);
  EXPECT_EQ(line["fallbacks"], 0);
  EXPECT_TRUE(line.contains("wall_seconds"));
  // Different seed, different hash-noise output.
  auto args = generate_args(tmp, "c", "mock:hash-noise");
  ASSERT_EQ(wcgen_cli(args).code, 0);
  args[8] = "8";
  args.back() = tmp.str("d");
  ASSERT_EQ(wcgen_cli(args).code, 0);
  EXPECT_NE(read_file(tmp / "c/walk/vp0/view_12.png"), read_file(tmp / "d/walk/vp0/view_12.png"));
}

TEST(Cli, WorkersDoNotChangeOutput) {
  TempDir tmp;
  synth(tmp, 4, 24);
  auto trajs = read_trajectories(tmp / "scene/trajectories.json");
  Trajectory second = trajs[0];
  second.id = "back";
  std::reverse(second.viewpoint_ids.begin(), second.viewpoint_ids.end());
  trajs.push_back(second);
  write_trajectories(tmp / "scene/trajectories.json", trajs);
  auto one = generate_args(tmp, "one", "mock:fill-nearest");
  auto four = generate_args(tmp, "four", "mock:fill-nearest");
  four.insert(four.end(), {"--workers", "4"});
  ASSERT_EQ(wcgen_cli(one).code, 0);
  ASSERT_EQ(wcgen_cli(four).code, 0);
  EXPECT_EQ(snapshot(tmp / "one"), snapshot(tmp / "four"));
}

TEST(Cli, ConfigFileAndOverrides) {
  TempDir tmp;
  synth(tmp);
  write_json_file(tmp / "cfg.json", json{{"strength_forward", 0.3}, {"min_overlap", 0.2}, {"seed", 3}});
  auto args = generate_args(tmp, "o", "mock:fill-nearest");
  args.insert(args.end(), {"--config", tmp.str("cfg.json"), "--min-overlap", "0.1", "--blur-sigma", "2"});
  ASSERT_EQ(wcgen_cli(args).code, 0);
  const auto cfg = read_json_file(tmp / "o/walk/generation.json")["config"];
  EXPECT_EQ(cfg["seed"], 7);
  EXPECT_DOUBLE_EQ(cfg["strength_forward"].get<double>(), 0.3);
  EXPECT_DOUBLE_EQ(cfg["min_overlap"].get<double>(), 0.1);
  EXPECT_DOUBLE_EQ(cfg["blur_sigma"].get<double>(), 2.0);

  write_json_file(tmp / "bad.json", json{{"strength_forward", 3.0}});
  args = generate_args(tmp, "p", "mock:fill-nearest");
  args.insert(args.end(), {"--config", tmp.str("bad.json")});
  EXPECT_EQ(wcgen_cli(args).code, 1);
}

TEST(Cli, BackendSelection) {
  TempDir tmp;
  synth(tmp);
  EXPECT_EQ(wcgen_cli(generate_args(tmp, "o", "mock:nonexistent")).code, 1);
  EXPECT_EQ(wcgen_cli(generate_args(tmp, "o", "sdxl")).code, 1);
  EXPECT_EQ(wcgen_cli(generate_args(tmp, "o", "remote:http://127.0.0.1:1")).code, 3);
  auto args = generate_args(tmp, "o", "");
  args.erase(args.begin() + 5, args.begin() + 7);  // drop --backend
  {
    EnvGuard env(nullptr);
    EXPECT_EQ(wcgen_cli(args).code, 1);
  }
  {
    EnvGuard env("http://127.0.0.1:1");
    EXPECT_EQ(wcgen_cli(args).code, 3);
  }
  EXPECT_FALSE(fs::exists(tmp / "o"));
}

TEST(Cli, InvalidTrajectoryIsPartial) {
  TempDir tmp;
  synth(tmp);
  auto trajs = read_trajectories(tmp / "scene/trajectories.json");
  Trajectory bad = trajs[0];
  bad.id = "lost";
  bad.viewpoint_ids.push_back("nowhere");
  trajs.push_back(bad);
  write_trajectories(tmp / "scene/trajectories.json", trajs);
  const auto r = wcgen_cli(generate_args(tmp, "o", "mock:fill-nearest"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("\"not_found\""), std::string::npos);
  EXPECT_TRUE(read_json_file(tmp / "o/walk/generation.json")["complete"].get<bool>());
}

TEST(Cli, ServeMockMatchesInProcess) {
  TempDir tmp;
  synth(tmp, 2, 24);
  ASSERT_EQ(wcgen_cli(generate_args(tmp, "local", "mock:fill-nearest")).code, 0);
  Result remote{-1, "", ""};
  const auto served = wcgen_cli({"serve-mock", "--mock", "fill-nearest", "--port", "0"}, [&](BackendServer& s) {
    remote = wcgen_cli(generate_args(tmp, "remote", "remote:" + s.url()));
  });
  ASSERT_EQ(served.code, 0) << served.err;
  EXPECT_NE(served.out.find("http://127.0.0.1:"), std::string::npos);
  ASSERT_EQ(remote.code, 0) << remote.err;
  EXPECT_EQ(snapshot(tmp / "local"), snapshot(tmp / "remote"));
}

TEST(Cli, WarpIdentityAndHalfTurn) {
  TempDir tmp;
  synth(tmp, 1, 32);
  const std::string img = tmp.str("scene/vp0/view_12.png");
  auto r = wcgen_cli({"warp", "--image", img, "--out", tmp.str("id")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j["overlap"], 1.0);
  EXPECT_EQ(j["mode"], "rotation");
  const auto mask = decode_png_mask(read_file(tmp / "id/guidance_mask.png"));
  for (float m : mask.values()) EXPECT_EQ(m, 1.0f);
  EXPECT_EQ(decode_png_image(read_file(tmp / "id/guidance.png")), decode_png_image(read_file(img)));

  r = wcgen_cli({"warp", "--image", img, "--yaw", "180", "--out", tmp.str("turn")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(json::parse(r.out)["overlap"], 0.0);

  EXPECT_EQ(wcgen_cli({"warp", "--image", img, "--translation", "0", "0", "1", "--out", tmp.str("x")}).code, 1);
  EXPECT_EQ(wcgen_cli({"warp", "--image", tmp.str("missing.png"), "--out", tmp.str("x")}).code, 1);
}

TEST(Cli, WarpSyntheticStepMatchesOracle) {
  TempDir tmp;
  synth(tmp, 2, 32);
  const auto scene = load_scene(tmp / "scene/scene.json");
  const auto& v0 = scene.viewpoint("vp0");
  const auto& v1 = scene.viewpoint("vp1");
  // vp1 sits 0.25 m ahead of vp0 along the heading of view 12.
  const auto r = wcgen_cli({"warp", "--image", tmp.str("scene/vp0/view_12.png"), "--depth",
                            tmp.str("scene/vp0/depth_12.png"), "--translation", "0", "0", "0.25", "--out",
                            tmp.str("step")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rel = RelativePose::between(camera_pose(v0.position, 12, scene.grid()),
                                         camera_pose(v1.position, 12, scene.grid()));
  const auto oracle = forward_warp(v0.views[12], v0.depths[12], scene.intrinsics(), rel);
  EXPECT_EQ(decode_png_image(read_file(tmp / "step/guidance.png")), quantized(oracle.color));
  const auto mask = decode_png_mask(read_file(tmp / "step/guidance_mask.png"));
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) EXPECT_EQ(mask(x, y) > 0.5f, oracle.validity(x, y) != 0);
  EXPECT_DOUBLE_EQ(json::parse(r.out)["overlap"].get<double>(), overlap_fraction(oracle));
}

TEST(Cli, ValidateIdealDatasetPasses) {
  TempDir tmp;
  synth(tmp, 2, 64);
  const auto scene = load_scene(tmp / "scene/scene.json");
  write_ideal_dataset(scene, tmp / "data");
  const auto r = wcgen_cli({"validate", tmp.str("data"), "--scene", tmp.str("scene/scene.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_LE(j["max_seam"].get<double>(), 2.0 / 255.0);
  EXPECT_TRUE(j["pass"].get<bool>());
  ASSERT_EQ(j["datasets"][0]["consistency"].size(), 1u);
  EXPECT_LE(j["datasets"][0]["consistency"][0]["error"].get<double>(), 3.0 / 255.0);
}

TEST(Cli, ValidateFlagsCorruptedView) {
  TempDir tmp;
  synth(tmp, 1, 64);
  const auto root = write_ideal_dataset(load_scene(tmp / "scene/scene.json"), tmp / "data");
  const auto target = root / "vp0" / view_file_name(17);
  auto img = decode_png_image(read_file(target));
  std::uint64_t h = 17;
  for (auto& px : img.values())
    for (auto& c : px) {
      h = splitmix64(h);
      c = std::clamp(c + static_cast<float>(0.3 * (unit_from_hash(h) - 0.5)), 0.0f, 1.0f);
    }
  write_file(target, encode_png(img));
  const auto r = wcgen_cli({"validate", tmp.str("data")});
  EXPECT_EQ(r.code, 4);
  const auto j = json::parse(r.out);
  ASSERT_FALSE(j["offending_edges"].empty());
  for (const auto& e : j["offending_edges"]) EXPECT_TRUE(e["i"] == 17 || e["j"] == 17) << e.dump();
  EXPECT_EQ(j["datasets"][0]["integrity"]["mismatches"].size(), 1u);
}

TEST(Cli, ValidateEmptyDataset) {
  TempDir tmp;
  fs::create_directories(tmp / "nothing");
  EXPECT_EQ(wcgen_cli({"validate", tmp.str("nothing")}).code, 1);
  EXPECT_EQ(wcgen_cli({"validate", tmp.str("absent")}).code, 1);
  EXPECT_EQ(wcgen_cli({"validate", tmp.str("nothing"), "--thresholds", "{\"max_seam\": \"x\"}"}).code, 1);
}

TEST(Cli, AssembleConstantViews) {
  TempDir tmp;
  GeneratedTrajectory g;
  g.trajectory_id = "flat";
  g.intrinsics = intrinsics_from_fov(16, 16, 90.0);
  GeneratedViewpoint vp;
  vp.id = "v";
  ImageBuffer gray(16, 16);
  for (auto& px : gray.values()) px = {0.4f, 0.4f, 0.4f};
  vp.images.assign(g.grid.n, quantized(gray));
  for (int i = 0; i < g.grid.n; ++i) vp.records.push_back(RequestRecord{});
  g.viewpoints.push_back(vp);
  write_dataset(g, tmp / "data");
  const auto r = wcgen_cli({"assemble", tmp.str("data"), "--out", tmp.str("pano"), "--width", "64"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pano = decode_png_image(read_file(tmp / "pano/flat/v.png"));
  EXPECT_EQ(pano.width(), 64);
  EXPECT_EQ(pano.height(), 32);
  // The grid covers the band between the top and bottom rows' fields of view.
  const float level = quantized(gray)(0, 0)[0];
  for (int x = 0; x < 64; ++x) EXPECT_EQ(pano(x, 16)[0], level);
  EXPECT_EQ(wcgen_cli({"assemble", "--out", tmp.str("pano")}).code, 1);
}

TEST(Cli, SynthIsDeterministic) {
  TempDir a, b;
  ASSERT_EQ(wcgen_cli({"synth", "--out", a.str("s"), "--viewpoints", "2", "--size", "16", "--seed", "5"}).code, 0);
  ASSERT_EQ(wcgen_cli({"synth", "--out", b.str("s"), "--viewpoints", "2", "--size", "16", "--seed", "5"}).code, 0);
  EXPECT_EQ(snapshot(a / "s"), snapshot(b / "s"));
}
