// Render the synthetic room, generate one trajectory with the fill-nearest
// mock, write the dataset and a panorama per viewpoint.
//
//   walkthrough [out_dir] [image_size]

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "wcgen/wcgen.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  const fs::path out = argc > 1 ? argv[1] : "walkthrough_out";
  const int size = argc > 2 ? std::atoi(argv[2]) : 64;

  try {
    const auto spec = wcgen::synthetic_room_spec(3, size);
    const auto scene = wcgen::synth_scene(spec);

    wcgen::Trajectory traj;
    traj.id = "walk";
    traj.scene_id = scene.id();
    traj.viewpoint_ids = scene.viewpoint_ids();

    wcgen::PipelineConfig cfg;
    cfg.seed = 7;
    const auto gen = wcgen::run_trajectory(traj, scene, wcgen::make_mock_backends("fill-nearest"), cfg);
    const auto manifest = wcgen::write_dataset(gen, out);
    std::printf("dataset: %s (%s)\n", manifest.string().c_str(), gen.complete() ? "complete" : "partial");

    for (const auto& vp : gen.viewpoints) {
      const auto seam = wcgen::seam_error(vp.images, spec.intrinsics, spec.grid);
      const auto pano = wcgen::assemble_equirect(vp.images, spec.intrinsics, spec.grid, 8 * size, 4 * size);
      const fs::path file = out / "panoramas" / (vp.id + ".png");
      wcgen::write_file(file, wcgen::encode_png(pano));
      std::printf("%s: reference %d, max seam %.2f/255, panorama %s\n", vp.id.c_str(), vp.reference,
                  seam.max_error * 255.0, file.string().c_str());
    }
  } catch (const wcgen::Error& e) {
    std::fprintf(stderr, "walkthrough: %s\n", e.what());
    return 1;
  }
  return 0;
}
