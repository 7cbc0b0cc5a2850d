#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "sspe/error.hpp"
#include "sspe/json_io.hpp"
#include "sspe/models.hpp"
#include "sspe/rng.hpp"
#include "sspe/simulator.hpp"

namespace sspe {

struct SceneRecord {
  std::int64_t scene_id = 0;
  std::string object;
  CorrespondenceSet set;
};

// One JSON object per line; field order is fixed.
inline std::string format_scene_record(const SceneRecord& rec) {
  const auto& s = rec.set;
  const Quaternion q = s.pose_gt.q;
  std::string kps3d = "[", kps2d = "[", samples = "[";
  for (std::size_t i = 0; i < s.keypoints3d.points.size(); ++i) {
    const auto& p = s.keypoints3d.points[i];
    kps3d += (i ? "," : "") + io::real_array(std::vector<double>{p.x(), p.y(), p.z()});
  }
  for (std::size_t i = 0; i < s.keypoints2d.size(); ++i) {
    kps2d += (i ? "," : "") + io::real_array(std::vector<double>{s.keypoints2d[i].x(), s.keypoints2d[i].y()});
  }
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    samples += i ? ",[" : "[";
    for (std::size_t k = 0; k < s.samples[i].size(); ++k) {
      const auto& d = s.samples[i][k];
      samples += (k ? "," : "") + io::real_array(std::vector<double>{d.x, d.y, d.dx, d.dy});
    }
    samples += "]";
  }
  io::ObjectWriter pose;
  pose.raw("q", io::real_array(std::vector<double>{q.w, q.x, q.y, q.z}))
      .raw("t", io::real_array(std::vector<double>{s.pose_gt.t.x(), s.pose_gt.t.y(), s.pose_gt.t.z()}));
  const auto& k = s.intrinsics;
  return io::ObjectWriter()
      .integer("scene_id", rec.scene_id)
      .str("object", rec.object)
      .raw("pose", pose.done())
      .raw("intrinsics", io::real_array(std::vector<double>{k.fx, k.fy, k.cx, k.cy}))
      .raw("kps3d", kps3d + "]")
      .raw("kps2d", kps2d + "]")
      .num("occlusion_fraction", s.occlusion_fraction)
      .raw("samples", samples + "]")
      .done();
}

inline SceneRecord parse_scene_record(const std::string& line, const std::string& where = "<record>") {
  const io::Json j = io::parse_json(line, where);
  SceneRecord rec;
  try {
    rec.scene_id = j.at("scene_id").get<std::int64_t>();
    rec.object = j.at("object").get<std::string>();
    const auto q = j.at("pose").at("q").get<std::vector<double>>();
    const auto t = j.at("pose").at("t").get<std::vector<double>>();
    const auto k = j.at("intrinsics").get<std::vector<double>>();
    if (q.size() != 4 || t.size() != 3 || k.size() != 4) throw Error(ErrorCode::Parse, where + ": bad pose or intrinsics");
    auto& s = rec.set;
    s.pose_gt = {{q[0], q[1], q[2], q[3]}, Vec3(t[0], t[1], t[2])};
    s.intrinsics = {k[0], k[1], k[2], k[3]};
    s.keypoints3d.model_name = rec.object;
    for (const auto& p : j.at("kps3d")) {
      const auto v = p.get<std::vector<double>>();
      if (v.size() != 3) throw Error(ErrorCode::Parse, where + ": kps3d entries need 3 values");
      s.keypoints3d.points.emplace_back(v[0], v[1], v[2]);
    }
    for (const auto& p : j.at("kps2d")) {
      const auto v = p.get<std::vector<double>>();
      if (v.size() != 2) throw Error(ErrorCode::Parse, where + ": kps2d entries need 2 values");
      s.keypoints2d.emplace_back(v[0], v[1]);
    }
    s.occlusion_fraction = j.at("occlusion_fraction").get<double>();
    for (const auto& group : j.at("samples")) {
      auto& g = s.samples.emplace_back();
      for (const auto& d : group) {
        const auto v = d.get<std::vector<double>>();
        if (v.size() != 4) throw Error(ErrorCode::Parse, where + ": samples need [x,y,dx,dy]");
        g.push_back({v[0], v[1], v[2], v[3]});
      }
    }
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::Parse, where + ": " + e.what());
  }
  const auto& s = rec.set;
  if (s.samples.size() != s.keypoints3d.size() || s.keypoints2d.size() != s.keypoints3d.size()) {
    throw Error(ErrorCode::Parse, where + ": group count differs from keypoint count");
  }
  for (const auto& g : s.samples)
    if (g.size() != s.m()) throw Error(ErrorCode::Parse, where + ": groups have unequal sample counts");
  return rec;
}

inline std::vector<SceneRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open dataset " + path.string());
  std::vector<SceneRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_scene_record(line, path.string() + ":" + std::to_string(line_no)));
  }
  return out;
}

// Pose distribution for generated scenes.
struct PoseSampling {
  Vec3 translation_min{-0.1, -0.1, 0.6};
  Vec3 translation_max{0.1, 0.1, 1.0};
  // Rotations are uniform over SO(3) when this is >= pi; otherwise the
  // rotation vector is uniform in a ball of this radius around identity.
  double max_rotation_angle = std::numbers::pi;
};

inline Pose sample_pose(const PoseSampling& ps, Rng& rng) {
  Pose pose;
  if (ps.max_rotation_angle >= std::numbers::pi) {
    pose.q = random_rotation(rng);
  } else {
    Vec3 w;
    do {
      w = Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    } while (w.squaredNorm() > 1.0);
    pose.q = quat_exp(w * ps.max_rotation_angle).canonical();
  }
  for (int a = 0; a < 3; ++a) pose.t[a] = uniform(rng, ps.translation_min[a], ps.translation_max[a]);
  return pose;
}

struct DatasetConfig {
  std::string model;  // path to an XYZ model
  std::size_t scenes = 1;
  std::int64_t first_scene_id = 0;
  std::size_t n_keypoints = 9;
  std::size_t m = 200;
  std::uint64_t seed = 0;
  CameraIntrinsics intrinsics;
  NoiseConfig noise;
  OcclusionConfig occlusion;
  PoseSampling poses;
  unsigned threads = 1;
};

inline io::Json to_json(const DatasetConfig& c) {
  const auto& k = c.intrinsics;
  return {
      {"model", c.model},
      {"scenes", c.scenes},
      {"first_scene_id", c.first_scene_id},
      {"n_keypoints", c.n_keypoints},
      {"m", c.m},
      {"seed", c.seed},
      {"intrinsics", {k.fx, k.fy, k.cx, k.cy}},
      {"noise", {{"angle_sigma", c.noise.angle_sigma}, {"outlier_rate", c.noise.outlier_rate}, {"pixel_jitter", c.noise.pixel_jitter}}},
      {"occlusion", {{"min_fraction", c.occlusion.min_fraction}, {"max_fraction", c.occlusion.max_fraction}}},
      {"translation_min", {c.poses.translation_min.x(), c.poses.translation_min.y(), c.poses.translation_min.z()}},
      {"translation_max", {c.poses.translation_max.x(), c.poses.translation_max.y(), c.poses.translation_max.z()}},
      {"max_rotation_angle", c.poses.max_rotation_angle},
  };
}

// Overlays any fields present in `j` onto `c`.
inline void merge_json(DatasetConfig& c, const io::Json& j) {
  try {
    if (j.contains("model")) c.model = j["model"].get<std::string>();
    if (j.contains("scenes")) c.scenes = j["scenes"].get<std::size_t>();
    if (j.contains("first_scene_id")) c.first_scene_id = j["first_scene_id"].get<std::int64_t>();
    if (j.contains("n_keypoints")) c.n_keypoints = j["n_keypoints"].get<std::size_t>();
    if (j.contains("m")) c.m = j["m"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("intrinsics")) {
      const auto k = j["intrinsics"].get<std::vector<double>>();
      if (k.size() != 4) throw Error(ErrorCode::Config, "intrinsics needs [fx,fy,cx,cy]");
      c.intrinsics = {k[0], k[1], k[2], k[3]};
    }
    if (j.contains("noise")) {
      const auto& n = j["noise"];
      c.noise.angle_sigma = n.value("angle_sigma", c.noise.angle_sigma);
      c.noise.outlier_rate = n.value("outlier_rate", c.noise.outlier_rate);
      c.noise.pixel_jitter = n.value("pixel_jitter", c.noise.pixel_jitter);
    }
    if (j.contains("occlusion")) {
      const auto& o = j["occlusion"];
      c.occlusion.min_fraction = o.value("min_fraction", c.occlusion.min_fraction);
      c.occlusion.max_fraction = o.value("max_fraction", c.occlusion.max_fraction);
    }
    auto vec3 = [&](const char* key, Vec3& out) {
      if (!j.contains(key)) return;
      const auto v = j[key].get<std::vector<double>>();
      if (v.size() != 3) throw Error(ErrorCode::Config, std::string(key) + " needs 3 values");
      out = Vec3(v[0], v[1], v[2]);
    };
    vec3("translation_min", c.poses.translation_min);
    vec3("translation_max", c.poses.translation_max);
    if (j.contains("max_rotation_angle")) c.poses.max_rotation_angle = j["max_rotation_angle"].get<double>();
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::Config, std::string("dataset config: ") + e.what());
  }
}

inline void validate(const DatasetConfig& c) {
  if (c.scenes < 1) throw Error(ErrorCode::Config, "scene count must be >= 1");
  if (c.m == 0 || c.m % 2) throw Error(ErrorCode::Config, "m must be a positive even number");
  if (c.n_keypoints < 1) throw Error(ErrorCode::Config, "need at least one keypoint");
  if (c.poses.translation_min.z() <= 0.0) throw Error(ErrorCode::Config, "translation box must have z > 0");
  for (int a = 0; a < 3; ++a)
    if (c.poses.translation_min[a] > c.poses.translation_max[a])
      throw Error(ErrorCode::Config, "translation_min exceeds translation_max");
  c.intrinsics.validate();
  c.noise.validate();
  c.occlusion.validate();
}

// A scene whose sampled pose leaves too few visible pixels is redrawn; the
// attempt index is part of the seed path so redraws stay deterministic.
inline SceneRecord generate_scene(const DatasetConfig& c, const ObjectModel& model, const Keypoints3D& kps,
                                  std::int64_t scene_id) {
  constexpr std::uint64_t kMaxAttempts = 100;
  for (std::uint64_t attempt = 0;; ++attempt) {
    const std::uint64_t s = derive_seed(c.seed, {static_cast<std::uint64_t>(scene_id), attempt});
    Rng rng(s);
    const Pose pose = sample_pose(c.poses, rng);
    try {
      return {scene_id, model.name,
              render_correspondences(model, kps, pose, c.intrinsics, c.m, c.noise, c.occlusion, mix64(s))};
    } catch (const Error& e) {
      const bool retryable = e.code() == ErrorCode::OcclusionExhausted || e.code() == ErrorCode::BehindCamera;
      if (!retryable || attempt + 1 == kMaxAttempts) throw;
    }
  }
}

// Scenes of an in-memory model; `c.model` is ignored.
inline std::vector<SceneRecord> generate_scenes(const DatasetConfig& c, const ObjectModel& model) {
  validate(c);
  const Keypoints3D kps = farthest_point_sampling(model, c.n_keypoints);
  std::vector<SceneRecord> out(c.scenes);
  const unsigned threads = std::max(1u, std::min<unsigned>(c.threads, static_cast<unsigned>(c.scenes)));
  if (threads == 1) {
    for (std::size_t i = 0; i < c.scenes; ++i) out[i] = generate_scene(c, model, kps, c.first_scene_id + std::int64_t(i));
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < c.scenes; i += threads)
          out[i] = generate_scene(c, model, kps, c.first_scene_id + std::int64_t(i));
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline std::vector<SceneRecord> generate_scenes(const DatasetConfig& c) {
  return generate_scenes(c, load_point_cloud(c.model));
}

inline std::size_t write_dataset(const std::vector<SceneRecord>& records, const std::filesystem::path& out_path) {
  std::string text;
  for (const auto& r : records) text += format_scene_record(r) + '\n';
  io::write_text(out_path, text);
  return records.size();
}

inline std::size_t generate_dataset(const DatasetConfig& c, const std::filesystem::path& out_path) {
  return write_dataset(generate_scenes(c), out_path);
}

}  // namespace sspe
