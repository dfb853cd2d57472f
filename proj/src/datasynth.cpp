// SPDX-License-Identifier: Apache-2.0
#include "volgen/datasynth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "volgen/rng.hpp"

namespace volgen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kDensityRampWidth = 0.05;  // world units, sub-cell at S >= 32

double sdf_primitive(const Primitive& pr, const Vec3d& p) {
  const double x = p[0] - pr.center[0];
  const double y = p[1] - pr.center[1];
  const double z = p[2] - pr.center[2];
  switch (pr.kind) {
    case Primitive::Kind::Sphere:
      return std::sqrt(x * x + y * y + z * z) - pr.size[0];
    case Primitive::Kind::Box: {
      const double qx = std::fabs(x) - pr.size[0];
      const double qy = std::fabs(y) - pr.size[1];
      const double qz = std::fabs(z) - pr.size[2];
      const double ox = std::max(qx, 0.0), oy = std::max(qy, 0.0), oz = std::max(qz, 0.0);
      return std::sqrt(ox * ox + oy * oy + oz * oz) +
             std::min(std::max(qx, std::max(qy, qz)), 0.0);
    }
    case Primitive::Kind::Torus: {
      const double q0 = std::sqrt(x * x + z * z) - pr.size[0];
      return std::sqrt(q0 * q0 + y * y) - pr.size[1];
    }
    case Primitive::Kind::Capsule: {
      const double h = pr.size[0];
      const double yy = y - std::clamp(y, -h, h);
      return std::sqrt(x * x + yy * yy + z * z) - pr.size[1];
    }
  }
  return 1e30;
}

std::array<float, 3> random_saturated_color(RandomStream& rng) {
  // hue wheel with full saturation, keeps channels well separated
  const double h = rng.uniform() * 6.0;
  const int i = static_cast<int>(h) % 6;
  const float f = static_cast<float>(h - std::floor(h));
  const float v = 0.9f, p = 0.1f;
  const float q = v - (v - p) * f, t = p + (v - p) * f;
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

int hue_bucket(const std::array<float, 3>& c) {
  if (c[0] >= c[1] && c[0] >= c[2]) return 0;
  if (c[1] >= c[2]) return 1;
  return 2;
}

int label_for(const SceneSpec& scene) {
  if (scene.primitives.empty()) return 0;
  const auto& pr = scene.primitives.front();
  return static_cast<int>(pr.kind) * 3 + hue_bucket(pr.color);
}

Primitive random_primitive(RandomStream& rng, bool allow_all_kinds) {
  Primitive pr;
  const int k = allow_all_kinds ? static_cast<int>(rng.below(4)) : static_cast<int>(rng.below(2));
  pr.kind = static_cast<Primitive::Kind>(k);
  const double s = rng.uniform(0.2, 0.45);
  switch (pr.kind) {
    case Primitive::Kind::Sphere: pr.size = {s, s, s}; break;
    case Primitive::Kind::Box:
      pr.size = {rng.uniform(0.15, 0.4), rng.uniform(0.15, 0.4), rng.uniform(0.15, 0.4)};
      break;
    case Primitive::Kind::Torus: pr.size = {rng.uniform(0.3, 0.45), rng.uniform(0.08, 0.15), 0}; break;
    case Primitive::Kind::Capsule: pr.size = {rng.uniform(0.2, 0.4), rng.uniform(0.1, 0.2), 0}; break;
  }
  // keep the primitive inside the canonical cube with margin
  double reach = std::max({pr.size[0], pr.size[1], pr.size[2]});
  if (pr.kind == Primitive::Kind::Torus || pr.kind == Primitive::Kind::Capsule)
    reach = pr.size[0] + pr.size[1];
  const double room = std::max(0.0, 0.9 - reach);
  for (int a = 0; a < 3; ++a) pr.center[a] = rng.uniform(-room, room);
  pr.color = random_saturated_color(rng);
  return pr;
}

}  // namespace

Difficulty difficulty_from_name(const std::string& name) {
  if (name == "min") return Difficulty::Min;
  if (name == "easy") return Difficulty::Easy;
  if (name == "medium") return Difficulty::Medium;
  if (name == "hard") return Difficulty::Hard;
  if (name == "articulated") return Difficulty::Articulated;
  throw std::runtime_error("unknown difficulty: " + name);
}

const char* difficulty_name(Difficulty d) {
  switch (d) {
    case Difficulty::Min: return "min";
    case Difficulty::Easy: return "easy";
    case Difficulty::Medium: return "medium";
    case Difficulty::Hard: return "hard";
    case Difficulty::Articulated: return "articulated";
  }
  return "easy";
}

SceneSpec make_scene(uint64_t seed, Difficulty difficulty) {
  RandomStream rng(seed * 0x9e3779b97f4a7c15ull + 0x1234567u);
  SceneSpec scene;
  scene.seed = seed;

  switch (difficulty) {
    case Difficulty::Min: {
      Primitive pr;
      pr.kind = Primitive::Kind::Sphere;
      pr.center = {0, 0, 0};
      pr.size = {0.5, 0.5, 0.5};
      pr.color = random_saturated_color(rng);
      scene.primitives.push_back(pr);
      break;
    }
    case Difficulty::Easy:
    case Difficulty::Medium:
    case Difficulty::Hard: {
      const int lo = difficulty == Difficulty::Easy ? 1 : (difficulty == Difficulty::Medium ? 2 : 4);
      const int hi = difficulty == Difficulty::Easy ? 2 : (difficulty == Difficulty::Medium ? 3 : 4);
      const int n = static_cast<int>(rng.int_range(lo, hi));
      const bool all_kinds = difficulty != Difficulty::Easy;
      for (int i = 0; i < n; ++i) scene.primitives.push_back(random_primitive(rng, all_kinds));
      break;
    }
    case Difficulty::Articulated: {
      // two-bar hinge pivoting at the origin about +z
      const double len = rng.uniform(0.3, 0.38);
      const double thick = rng.uniform(0.07, 0.1);
      Primitive a, b;
      a.kind = b.kind = Primitive::Kind::Box;
      a.center = {len, 0, 0};
      a.size = {len, thick, thick};
      a.color = {0.9f, 0.15f, 0.1f};
      a.part = 0;
      b.center = {-len, 0, 0};
      b.size = {len, thick, thick};
      b.color = {0.1f, 0.2f, 0.9f};
      b.part = 1;
      scene.primitives = {a, b};

      PartMotion motion;
      motion.n_parts = 2;
      const int n_frames = 8;
      for (int f = 0; f < n_frames; ++f) {
        const double theta = -0.6 + 1.2 * static_cast<double>(f) / (n_frames - 1);
        Pose p0;  // base part stays put
        Pose p1;
        p1.R = Eigen::AngleAxisd(theta, Eigen::Vector3d(0, 0, 1)).toRotationMatrix();
        p1.t.setZero();
        motion.frames.push_back({p0, p1});
        motion.hinge_angles.push_back(theta);
      }
      scene.parts = motion;
      break;
    }
  }
  scene.condition_label = label_for(scene);
  return scene;
}

double scene_sdf(const SceneSpec& scene, const Vec3d& p, int* argprim) {
  double best = 1e30;
  int arg = -1;
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    const double d = sdf_primitive(scene.primitives[i], p);
    if (d < best) {
      best = d;
      arg = static_cast<int>(i);
    }
  }
  if (argprim) *argprim = arg;
  return best;
}

FieldSample sample_scene_field(const SceneSpec& scene, const Vec3d& p) {
  FieldSample out;
  double best_density = 0.0;
  for (size_t i = 0; i < scene.primitives.size(); ++i) {
    const auto& pr = scene.primitives[i];
    const double sdf = sdf_primitive(pr, p);
    const double occ = std::clamp(0.5 - sdf / kDensityRampWidth, 0.0, 1.0);
    const double density = pr.density_scale * occ;
    if (density > best_density) {
      best_density = density;
      out.color = pr.color;
      out.part = pr.part;
    }
  }
  out.density = best_density;
  return out;
}

VoxelGrid voxelize(const SceneSpec& scene, int S, const std::vector<Pose>* frame_part_poses) {
  check(S >= 8, "voxelize: S >= 8");
  const int n_parts = scene.parts ? scene.parts->n_parts : 0;
  const bool articulated = n_parts > 0 && frame_part_poses == nullptr;
  const int C = articulated ? 4 + n_parts : 4;
  VoxelGrid grid = VoxelGrid::zeros(S, C,
                                    articulated ? GridLayout::Articulated : GridLayout::Radiance);
  std::vector<Pose> inv_poses;
  if (frame_part_poses)
    for (const auto& tp : *frame_part_poses) inv_poses.push_back(tp.inverse());

  for (int z = 0; z < S; ++z)
    for (int y = 0; y < S; ++y)
      for (int x = 0; x < S; ++x) {
        const Vec3d p = grid.grid_to_world({double(x), double(y), double(z)});
        FieldSample fsamp;
        if (frame_part_poses) {
          // deformed-space sampling: query each part's primitives in its
          // canonical frame
          double best = 0.0;
          for (size_t i = 0; i < scene.primitives.size(); ++i) {
            const auto& pr = scene.primitives[i];
            const Pose& inv = inv_poses[static_cast<size_t>(pr.part)];
            const Eigen::Vector3d pc = inv.R * Eigen::Vector3d(p[0], p[1], p[2]) + inv.t;
            const double sdf = sdf_primitive(pr, {pc.x(), pc.y(), pc.z()});
            const double density =
                pr.density_scale * std::clamp(0.5 - sdf / kDensityRampWidth, 0.0, 1.0);
            if (density > best) {
              best = density;
              fsamp.color = pr.color;
              fsamp.part = pr.part;
            }
          }
          fsamp.density = best;
        } else {
          fsamp = sample_scene_field(scene, p);
        }
        const int64_t base = grid.index(x, y, z, 0);
        grid.values[base] = static_cast<float>(fsamp.density);
        grid.values[base + 1] = fsamp.color[0];
        grid.values[base + 2] = fsamp.color[1];
        grid.values[base + 3] = fsamp.color[2];
        if (articulated && fsamp.density > 0.0) {
          // hard part assignment for the ground-truth skinning weights
          grid.values[base + 4 + fsamp.part] = 1.0f;
        }
      }
  return grid;
}

namespace {

json intrinsics_to_json(const Intrinsics& in) {
  if (in.mode == Intrinsics::Mode::Fov)
    return {{"mode", "fov"}, {"fov", in.fov}, {"width", in.width}, {"height", in.height}};
  return {{"mode", "pinhole"}, {"fx", in.fx}, {"fy", in.fy}, {"cx", in.cx},
          {"cy", in.cy},       {"width", in.width}, {"height", in.height}};
}

Intrinsics intrinsics_from_json(const json& j) {
  if (j.at("mode") == "fov")
    return Intrinsics::from_fov(j.at("fov").get<double>(), j.at("width").get<int>(),
                                j.at("height").get<int>());
  return Intrinsics::from_pinhole(j.at("fx").get<double>(), j.at("fy").get<double>(),
                                  j.at("cx").get<double>(), j.at("cy").get<double>(),
                                  j.at("width").get<int>(), j.at("height").get<int>());
}

json pose_to_json(const Pose& p) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.push_back(p.R(i, j));
  return {{"rotation", r}, {"translation", {p.t.x(), p.t.y(), p.t.z()}}};
}

Pose pose_from_json(const json& j) {
  Pose p;
  const auto& r = j.at("rotation");
  check(r.size() == 9, "pose: rotation must have 9 entries");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) p.R(i, k) = r[static_cast<size_t>(3 * i + k)].get<double>();
  const auto& t = j.at("translation");
  check(t.size() == 3, "pose: translation must have 3 entries");
  for (int i = 0; i < 3; ++i) p.t[i] = t[static_cast<size_t>(i)].get<double>();
  return p;
}

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%04d.png", i);
  return buf;
}
std::string mask_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "mask_%04d.png", i);
  return buf;
}

}  // namespace

Dataset render_dataset(const SynthConfig& cfg, const std::string& out_dir) {
  check(cfg.n_objects >= 1 && cfg.n_views >= 1, "render_dataset: counts");
  fs::create_directories(out_dir);

  Dataset ds;
  ds.root = out_dir;
  ds.image_size = cfg.image_size;

  const bool articulated = cfg.difficulty == Difficulty::Articulated;
  const double fov = articulated ? 0.175 : cfg.fov;
  // match camera distance to fov so the object fills most of the frame
  const double radius =
      articulated ? 1.3 / std::tan(0.5 * 0.175) : cfg.camera_radius;
  const Intrinsics intr = Intrinsics::from_fov(fov, cfg.image_size, cfg.image_size);

  RenderSettings rs;
  rs.n_samples = cfg.n_samples;
  rs.density_activation = RenderSettings::Activation::Identity;
  rs.background = cfg.background;
  rs.stratified = false;

  json labels = json::object();

  for (int oi = 0; oi < cfg.n_objects; ++oi) {
    const uint64_t scene_seed = cfg.seed * 1000003ull + static_cast<uint64_t>(oi);
    SceneSpec scene = make_scene(scene_seed, cfg.difficulty);
    RandomStream cam_rng = RandomStream(cfg.seed).fork(0xCA3Eull + static_cast<uint64_t>(oi));

    char oid[32];
    std::snprintf(oid, sizeof(oid), "obj_%04d", oi);
    const std::string obj_dir = out_dir + "/" + oid;
    fs::create_directories(obj_dir);

    ObjectRecord rec;
    rec.object_id = oid;
    rec.label = scene.condition_label;
    rec.scene = scene;

    // canonical-pose grid reused for every rigid view
    VoxelGrid canonical = voxelize(scene, cfg.grid_resolution);

    const int n_frames = articulated
                             ? std::min<int>(cfg.n_views,
                                             static_cast<int>(scene.parts->frames.size()))
                             : cfg.n_views;

    json cams = json::array();
    for (int vi = 0; vi < n_frames; ++vi) {
      const double az = cam_rng.uniform(0.0, 2.0 * M_PI);
      const double el = cam_rng.uniform(cfg.elev_min, cfg.elev_max);
      Eigen::Vector3d eye(radius * std::cos(el) * std::cos(az), radius * std::sin(el),
                          radius * std::cos(el) * std::sin(az));
      Pose cam;
      if (articulated) {
        // hinge motion happens in the xy plane; keep the camera on the +z axis
        eye = Eigen::Vector3d(0, 0, radius);
        cam = Pose::look_at(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d(0, 1, 0));
      } else {
        cam = Pose::look_at(eye, Eigen::Vector3d::Zero());
      }

      const VoxelGrid* grid = &canonical;
      VoxelGrid deformed;
      FrameRecord fr;
      fr.index = vi;
      if (articulated) {
        fr.part_poses = scene.parts->frames[static_cast<size_t>(vi)];
        deformed = voxelize(scene, cfg.grid_resolution, &fr.part_poses);
        grid = &deformed;
      }

      RenderOutput out = render(*grid, intr, cam, rs);
      ImageF img = ImageF::zeros(cfg.image_size, cfg.image_size, 3);
      ImageF mask = ImageF::zeros(cfg.image_size, cfg.image_size, 1);
      for (int y = 0; y < cfg.image_size; ++y)
        for (int x = 0; x < cfg.image_size; ++x) {
          for (int c = 0; c < 3; ++c)
            img.at(x, y, c) = out.color[(int64_t(y) * cfg.image_size + x) * 3 + c];
          mask.at(x, y, 0) =
              out.occupancy[int64_t(y) * cfg.image_size + x] > 0.5f ? 1.0f : 0.0f;
        }
      fr.image_path = std::string(oid) + "/" + frame_name(vi);
      fr.mask_path = std::string(oid) + "/" + mask_name(vi);
      fr.intrinsics = intr;
      fr.camera = cam;
      write_png8(out_dir + "/" + fr.image_path, img);
      write_png8(out_dir + "/" + fr.mask_path, mask);

      json cj = {{"frame", vi}, {"intrinsics", intrinsics_to_json(intr)}};
      json pj = pose_to_json(cam);
      cj["rotation"] = pj["rotation"];
      cj["translation"] = pj["translation"];
      cams.push_back(cj);
      rec.frames.push_back(std::move(fr));
    }

    {
      std::ofstream f(obj_dir + "/cameras.json");
      f << cams.dump(2) << "\n";
    }
    if (articulated) {
      json poses = json::array();
      for (const auto& frame : scene.parts->frames) {
        json fp = json::array();
        for (const auto& p : frame) fp.push_back(pose_to_json(p));
        poses.push_back(fp);
      }
      json pj = {{"n_parts", scene.parts->n_parts},
                 {"frames", poses},
                 {"hinge_angles", scene.parts->hinge_angles}};
      std::ofstream f(obj_dir + "/poses.json");
      f << pj.dump(2) << "\n";
    }
    labels[oid] = rec.label;
    ds.objects.push_back(std::move(rec));
  }

  {
    std::ofstream f(out_dir + "/labels.json");
    f << labels.dump(2) << "\n";
  }
  {
    json manifest = {{"version", 1},
                     {"n_objects", cfg.n_objects},
                     {"n_views", cfg.n_views},
                     {"image_size", cfg.image_size},
                     {"grid_resolution", cfg.grid_resolution},
                     {"difficulty", difficulty_name(cfg.difficulty)},
                     {"seed", cfg.seed}};
    std::ofstream f(out_dir + "/manifest.json");
    f << manifest.dump(2) << "\n";
  }
  return ds;
}

Dataset load_dataset(const std::string& dir) {
  check(fs::is_directory(dir), "load_dataset: not a directory: " + dir);
  Dataset ds;
  ds.root = dir;

  json labels;
  if (fs::exists(dir + "/labels.json")) {
    std::ifstream f(dir + "/labels.json");
    f >> labels;
  }

  std::vector<std::string> obj_ids;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) obj_ids.push_back(entry.path().filename().string());
  std::sort(obj_ids.begin(), obj_ids.end());

  for (const auto& oid : obj_ids) {
    const std::string obj_dir = dir + "/" + oid;
    const std::string cam_path = obj_dir + "/cameras.json";
    check(fs::exists(cam_path), "load_dataset: missing cameras.json for object " + oid);
    json cams;
    {
      std::ifstream f(cam_path);
      f >> cams;
    }
    ObjectRecord rec;
    rec.object_id = oid;
    if (labels.contains(oid)) rec.label = labels[oid].get<int>();

    json poses;
    const bool has_poses = fs::exists(obj_dir + "/poses.json");
    if (has_poses) {
      std::ifstream f(obj_dir + "/poses.json");
      f >> poses;
    }

    for (const auto& cj : cams) {
      FrameRecord fr;
      fr.index = cj.at("frame").get<int>();
      fr.intrinsics = intrinsics_from_json(cj.at("intrinsics"));
      fr.camera = pose_from_json(cj);
      fr.image_path = oid + "/" + frame_name(fr.index);
      fr.mask_path = oid + "/" + mask_name(fr.index);
      check(fs::exists(dir + "/" + fr.image_path),
            "load_dataset: missing image for " + oid + " frame " + std::to_string(fr.index));
      check(fs::exists(dir + "/" + fr.mask_path),
            "load_dataset: missing mask for " + oid + " frame " + std::to_string(fr.index));
      if (has_poses) {
        const auto& fp = poses.at("frames").at(static_cast<size_t>(fr.index));
        for (const auto& pj : fp) fr.part_poses.push_back(pose_from_json(pj));
      }
      rec.frames.push_back(std::move(fr));
    }
    check(!rec.frames.empty(), "load_dataset: object with no frames: " + oid);
    if (ds.image_size == 0) ds.image_size = rec.frames[0].intrinsics.width;
    check(rec.frames[0].intrinsics.width == ds.image_size,
          "load_dataset: inconsistent image sizes");
    ds.objects.push_back(std::move(rec));
  }
  check(!ds.objects.empty(), "load_dataset: empty dataset at " + dir);
  return ds;
}

}  // namespace volgen
