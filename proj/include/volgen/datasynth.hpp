// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "volgen/camera.hpp"
#include "volgen/imageio.hpp"
#include "volgen/renderer.hpp"
#include "volgen/voxgrid.hpp"

namespace volgen {

// Procedural scenes with analytic SDF ground truth. These stand in for the
// multi-view object datasets: every training image, mask and camera comes out
// of this module, deterministically from a seed.

struct Primitive {
  enum class Kind { Sphere, Box, Torus, Capsule };
  Kind kind = Kind::Sphere;
  Vec3d center{0, 0, 0};
  // sphere: size[0]=radius; box: half extents; torus: major/minor radius;
  // capsule: half length (y axis) / radius
  Vec3d size{0.5, 0.5, 0.5};
  std::array<float, 3> color{1, 1, 1};
  double density_scale = 40.0;
  int part = 0;
};

// Rigid motion of each part per frame (deformed-from-canonical).
struct PartMotion {
  int n_parts = 1;
  std::vector<std::vector<Pose>> frames;  // frames[f][p]
  std::vector<double> hinge_angles;       // toy hinge driver angle per frame
};

struct SceneSpec {
  uint64_t seed = 0;
  std::vector<Primitive> primitives;
  std::optional<PartMotion> parts;
  int condition_label = 0;
};

enum class Difficulty { Min, Easy, Medium, Hard, Articulated };
Difficulty difficulty_from_name(const std::string& name);
const char* difficulty_name(Difficulty d);

SceneSpec make_scene(uint64_t seed, Difficulty difficulty);

// Signed distance of the scene at canonical pose; `argprim` receives the
// index of the closest primitive (lowest index wins ties).
double scene_sdf(const SceneSpec& scene, const Vec3d& p, int* argprim = nullptr);

// Analytic density/color at a point: density = scale * clamp01(0.5 - sdf/w),
// union by max density with the argmax primitive's color.
struct FieldSample {
  double density = 0.0;
  std::array<float, 3> color{0, 0, 0};
  int part = 0;
};
FieldSample sample_scene_field(const SceneSpec& scene, const Vec3d& p);

// Rasterizes the analytic field at cell centers. Radiance layout (C=4), or
// articulated layout (C=4+n_parts, hard per-part weights) when the scene has
// parts. `frame` poses the parts before sampling (deformed-space grid).
VoxelGrid voxelize(const SceneSpec& scene, int S,
                   const std::vector<Pose>* frame_part_poses = nullptr);

struct FrameRecord {
  int index = 0;
  std::string image_path;
  std::string mask_path;
  Intrinsics intrinsics;
  Pose camera;  // camera-from-world
  std::vector<Pose> part_poses;  // empty for rigid objects
};

struct ObjectRecord {
  std::string object_id;
  int label = 0;
  SceneSpec scene;  // populated by the synthesizer; empty after load
  std::vector<FrameRecord> frames;
};

struct Dataset {
  std::string root;
  int image_size = 0;
  std::vector<ObjectRecord> objects;

  ImageF load_image(const FrameRecord& f) const { return read_png(root + "/" + f.image_path); }
  ImageF load_mask(const FrameRecord& f) const { return read_png(root + "/" + f.mask_path); }
};

struct SynthConfig {
  int n_objects = 8;
  int n_views = 10;
  int image_size = 64;
  int grid_resolution = 64;
  Difficulty difficulty = Difficulty::Easy;
  uint64_t seed = 0;
  double camera_radius = 3.0;   // articulated scenes use fov-matched distance
  double fov = 0.7;             // rigid default; articulated uses 0.175
  double elev_min = -0.2, elev_max = 0.9;
  int n_samples = 128;
  std::array<double, 3> background{0, 0, 0};
};

Dataset render_dataset(const SynthConfig& cfg, const std::string& out_dir);
Dataset load_dataset(const std::string& dir);

}  // namespace volgen
