#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "sspe/error.hpp"
#include "sspe/geometry.hpp"
#include "sspe/json_io.hpp"

namespace sspe {

struct ObjectModel {
  std::string name;
  bool symmetric = false;
  std::vector<Vec3> points;
};

struct Keypoints3D {
  std::vector<Vec3> points;
  std::vector<std::size_t> indices;  // into the source model's point list
  std::string model_name;

  std::size_t size() const { return points.size(); }
};

// Throws InsufficientGeometry unless the cloud spans 3D.
inline void validate_model_geometry(const std::vector<Vec3>& points) {
  if (points.size() < 4) {
    throw Error(ErrorCode::InsufficientGeometry,
                "model needs at least 4 points, got " + std::to_string(points.size()));
  }
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Eigen::MatrixXd centered(points.size(), 3);
  for (std::size_t i = 0; i < points.size(); ++i) centered.row(i) = (points[i] - centroid).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const auto& sv = svd.singularValues();
  if (!(sv[0] > 0.0) || sv[2] <= 1e-9 * sv[0]) {
    throw Error(ErrorCode::InsufficientGeometry, "model points are coplanar or collinear");
  }
}

// Plain-text XYZ: `name <id>`, `symmetric <0|1>`, then one `x y z` per line.
// `#` starts a comment; blank lines are ignored.
inline ObjectModel parse_point_cloud(std::istream& in, const std::string& source = "<stream>") {
  ObjectModel model;
  std::string line;
  int line_no = 0;
  int content_lines = 0;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::Parse, source + ":" + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    ++content_lines;
    if (content_lines == 1) {
      if (first != "name" || !(ls >> model.name)) fail("expected `name <id>`");
      continue;
    }
    if (content_lines == 2) {
      int flag = -1;
      if (first != "symmetric" || !(ls >> flag) || (flag != 0 && flag != 1)) fail("expected `symmetric <0|1>`");
      model.symmetric = flag == 1;
      continue;
    }
    std::istringstream ps(line);
    double x, y, z;
    std::string extra;
    if (!(ps >> x >> y >> z) || (ps >> extra)) fail("expected three real numbers, got `" + line + "`");
    model.points.emplace_back(x, y, z);
  }
  validate_model_geometry(model.points);
  return model;
}

inline ObjectModel load_point_cloud(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open model " + path.string());
  return parse_point_cloud(in, path.string());
}

inline std::string format_point_cloud(const ObjectModel& model) {
  std::string out = "name " + model.name + "\nsymmetric " + (model.symmetric ? "1" : "0") + "\n";
  for (const auto& p : model.points) {
    out += io::real(p.x()) + ' ' + io::real(p.y()) + ' ' + io::real(p.z()) + '\n';
  }
  return out;
}

inline void save_point_cloud(const ObjectModel& model, const std::filesystem::path& path) {
  io::write_text(path, format_point_cloud(model));
}

enum class StartRule { FarthestFromCentroid, FirstPoint };

// Squared distances closer than this relative gap count as tied, so that
// mathematically equal distances are not split by round-off.
inline constexpr double kFpsTieRel = 2e-12;

inline bool fps_beats(double d2, double best_d2) { return d2 > best_d2 + kFpsTieRel * std::abs(best_d2); }

inline std::size_t fps_start_index(const std::vector<Vec3>& pts, StartRule rule) {
  if (rule == StartRule::FirstPoint) return 0;
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  std::size_t best = 0;
  double best_d = -1.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = (pts[i] - centroid).squaredNorm();
    if (fps_beats(d, best_d)) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

// Greedy max-min selection. Ties go to the lowest point index.
inline Keypoints3D farthest_point_sampling(const ObjectModel& model, std::size_t n,
                                           StartRule start = StartRule::FarthestFromCentroid) {
  const auto& pts = model.points;
  if (n > pts.size()) {
    throw Error(ErrorCode::Size, "requested " + std::to_string(n) + " keypoints from " +
                                     std::to_string(pts.size()) + " points");
  }
  Keypoints3D out;
  out.model_name = model.name;
  if (n == 0) return out;

  std::vector<double> min_d2(pts.size(), std::numeric_limits<double>::infinity());
  std::vector<bool> taken(pts.size(), false);
  std::size_t current = fps_start_index(pts, start);
  for (std::size_t k = 0; k < n; ++k) {
    out.indices.push_back(current);
    out.points.push_back(pts[current]);
    taken[current] = true;
    if (k + 1 == n) break;
    std::size_t next = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (taken[i]) continue;
      min_d2[i] = std::min(min_d2[i], (pts[i] - pts[current]).squaredNorm());
      if (fps_beats(min_d2[i], best)) {
        best = min_d2[i];
        next = i;
      }
    }
    current = next;
  }
  return out;
}

inline double model_diameter(const std::vector<Vec3>& pts) {
  if (pts.size() < 2) throw Error(ErrorCode::Size, "diameter needs at least 2 points");
  double best = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j) best = std::max(best, (pts[i] - pts[j]).squaredNorm());
  return std::sqrt(best);
}

inline double model_diameter(const ObjectModel& model) { return model_diameter(model.points); }

// Procedural test objects. Points lie on the surfaces of axis-aligned boxes.

inline void append_box_surface(std::vector<Vec3>& out, const Vec3& center, const Vec3& half, int per_edge) {
  for (int i = 0; i < per_edge; ++i) {
    for (int j = 0; j < per_edge; ++j) {
      const double a = -1.0 + 2.0 * (i + 0.5) / per_edge;
      const double b = -1.0 + 2.0 * (j + 0.5) / per_edge;
      for (double s : {-1.0, 1.0}) {
        out.push_back(center + Vec3(s * half.x(), a * half.y(), b * half.z()));
        out.push_back(center + Vec3(a * half.x(), s * half.y(), b * half.z()));
        out.push_back(center + Vec3(a * half.x(), b * half.y(), s * half.z()));
      }
    }
  }
}

// A drill-like object: body, handle below it, and a chuck on one side.
// No nontrivial rotation maps it onto itself.
inline ObjectModel make_drill_model(int per_edge = 6) {
  ObjectModel m{"drill", false, {}};
  append_box_surface(m.points, {0.0, 0.0, 0.0}, {0.08, 0.03, 0.035}, per_edge);
  append_box_surface(m.points, {-0.04, 0.07, 0.0}, {0.025, 0.045, 0.025}, per_edge);
  append_box_surface(m.points, {0.105, -0.005, 0.0}, {0.025, 0.012, 0.012}, per_edge);
  return m;
}

// A square plate; 90 degree rotations about its normal (z) leave it unchanged.
inline ObjectModel make_plate_model(int per_edge = 8) {
  ObjectModel m{"plate", true, {}};
  append_box_surface(m.points, {0.0, 0.0, 0.0}, {0.06, 0.06, 0.01}, per_edge);
  return m;
}

inline ObjectModel make_cube_model(int per_edge = 5) {
  ObjectModel m{"cube", true, {}};
  append_box_surface(m.points, {0.0, 0.0, 0.0}, {0.05, 0.05, 0.05}, per_edge);
  return m;
}

}  // namespace sspe
