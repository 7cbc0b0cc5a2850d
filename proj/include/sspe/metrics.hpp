#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sspe/error.hpp"
#include "sspe/geometry.hpp"
#include "sspe/json_io.hpp"
#include "sspe/models.hpp"
#include "sspe/posehead.hpp"

namespace sspe {

// Mean distance between corresponding model points under the two poses.
inline double add_error(const Pose& pred, const Pose& gt, std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorCode::Precondition, "ADD needs at least one model point");
  const Mat3 rp = pred.rotation(), rg = gt.rotation();
  double sum = 0.0;
  for (const auto& p : points) sum += ((rp * p + pred.t) - (rg * p + gt.t)).norm();
  return sum / static_cast<double>(points.size());
}

inline double add_error(const Pose& pred, const Pose& gt, const ObjectModel& model) {
  return add_error(pred, gt, model.points);
}

// Mean distance from each predicted model point to the closest ground-truth
// model point. Not symmetric in its two poses.
inline double adds_error(const Pose& pred, const Pose& gt, std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorCode::Precondition, "ADD-S needs at least one model point");
  const Mat3 rp = pred.rotation(), rg = gt.rotation();
  std::vector<Vec3> target;
  target.reserve(points.size());
  for (const auto& p : points) target.push_back(rg * p + gt.t);
  double sum = 0.0;
  for (const auto& p : points) {
    const Vec3 x = rp * p + pred.t;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& y : target) best = std::min(best, (x - y).squaredNorm());
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(points.size());
}

inline double adds_error(const Pose& pred, const Pose& gt, const ObjectModel& model) {
  return adds_error(pred, gt, model.points);
}

// ADD-S for symmetric models, ADD otherwise.
inline double pose_error(const Pose& pred, const Pose& gt, const ObjectModel& model) {
  return model.symmetric ? adds_error(pred, gt, model) : add_error(pred, gt, model);
}

// Percentage of poses whose error is strictly below 10% of the diameter;
// failures count as incorrect.
inline double add01d_accuracy(std::span<const double> errors, double diameter, std::size_t failures = 0) {
  if (!(diameter > 0.0)) throw Error(ErrorCode::Precondition, "model diameter must be positive");
  const std::size_t total = errors.size() + failures;
  if (total == 0) throw Error(ErrorCode::UndefinedMetric, "accuracy of an empty evaluation");
  const double threshold = 0.1 * diameter;
  const auto correct = std::count_if(errors.begin(), errors.end(), [&](double e) { return e < threshold; });
  return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
}

inline double add01d_accuracy(std::span<const double> errors, const ObjectModel& model, std::size_t failures = 0) {
  return add01d_accuracy(errors, model_diameter(model), failures);
}

struct ClusterScore {
  double intra_sim = 0.0;
  double inter_sim = 0.0;
  double silhouette = 0.0;
};

// Cosine-similarity cluster statistics of column features with integer labels.
// Silhouette uses cosine distance 1 - S; a point with a = b = 0 scores 0.
inline ClusterScore cluster_score(const Eigen::MatrixXd& features, std::span<const int> labels) {
  const auto count = features.cols();
  if (static_cast<std::size_t>(count) != labels.size()) throw Error(ErrorCode::Precondition, "one label per feature");
  std::vector<int> ids(labels.begin(), labels.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) throw Error(ErrorCode::Precondition, "cluster score needs at least two groups");
  std::vector<std::size_t> group_size(ids.size(), 0);
  std::vector<std::size_t> group(static_cast<std::size_t>(count));
  for (Eigen::Index c = 0; c < count; ++c) {
    group[static_cast<std::size_t>(c)] = static_cast<std::size_t>(
        std::lower_bound(ids.begin(), ids.end(), labels[static_cast<std::size_t>(c)]) - ids.begin());
    ++group_size[group[static_cast<std::size_t>(c)]];
  }
  for (auto s : group_size)
    if (s < 2) throw Error(ErrorCode::Precondition, "cluster score needs at least two features per group");

  Eigen::MatrixXd unit = features;
  for (Eigen::Index c = 0; c < count; ++c) {
    const double nrm = unit.col(c).norm();
    if (!(nrm > kFeatureNormEps)) throw Error(ErrorCode::DegenerateFeature, "near-zero feature in cluster score");
    unit.col(c) /= nrm;
  }
  const Eigen::MatrixXd sim = (unit.transpose() * unit).cwiseMax(-1.0).cwiseMin(1.0);

  ClusterScore out;
  double intra_sum = 0.0, inter_sum = 0.0, sil_sum = 0.0;
  std::size_t intra_n = 0, inter_n = 0;
  std::vector<double> dist_sum(ids.size());
  for (Eigen::Index a = 0; a < count; ++a) {
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    const std::size_t ga = group[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < count; ++b) {
      if (a == b) continue;
      const std::size_t gb = group[static_cast<std::size_t>(b)];
      dist_sum[gb] += 1.0 - sim(a, b);
      if (b > a) {
        if (ga == gb) {
          intra_sum += sim(a, b);
          ++intra_n;
        } else {
          inter_sum += sim(a, b);
          ++inter_n;
        }
      }
    }
    const double own = dist_sum[ga] / static_cast<double>(group_size[ga] - 1);
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < ids.size(); ++g)
      if (g != ga) nearest = std::min(nearest, dist_sum[g] / static_cast<double>(group_size[g]));
    const double denom = std::max(own, nearest);
    sil_sum += denom > 0.0 ? (nearest - own) / denom : 0.0;
  }
  out.intra_sim = intra_sum / static_cast<double>(intra_n);
  out.inter_sim = inter_sum / static_cast<double>(inter_n);
  out.silhouette = sil_sum / static_cast<double>(count);
  return out;
}

inline std::vector<int> group_labels(const FeatureBlock& fb) {
  std::vector<int> labels(fb.size());
  for (std::size_t c = 0; c < fb.size(); ++c) labels[c] = static_cast<int>(fb.group_of(c));
  return labels;
}

inline ClusterScore cluster_score(const FeatureBlock& fb) {
  const auto labels = group_labels(fb);
  return cluster_score(fb.values, labels);
}

inline std::string format_feature_csv(const Eigen::MatrixXd& features, std::span<const int> labels) {
  if (static_cast<std::size_t>(features.cols()) != labels.size()) {
    throw Error(ErrorCode::Precondition, "one label per feature");
  }
  std::string out = "label";
  for (Eigen::Index d = 0; d < features.rows(); ++d) out += ",f" + std::to_string(d);
  out += '\n';
  for (Eigen::Index c = 0; c < features.cols(); ++c) {
    out += std::to_string(labels[static_cast<std::size_t>(c)]);
    for (Eigen::Index d = 0; d < features.rows(); ++d) out += ',' + io::real(features(d, c));
    out += '\n';
  }
  return out;
}

// CSV with header `label,f0..f{D-1}`, one row per feature column.
inline std::size_t export_features(const Eigen::MatrixXd& features, std::span<const int> labels,
                                   const std::filesystem::path& path) {
  io::write_text(path, format_feature_csv(features, labels));
  return static_cast<std::size_t>(features.cols());
}

inline std::size_t export_features(const FeatureBlock& fb, const std::filesystem::path& path) {
  const auto labels = group_labels(fb);
  return export_features(fb.values, labels, path);
}

struct SceneResult {
  std::int64_t scene_id = 0;
  std::optional<double> error;  // empty when the estimator failed
  std::string failure;
};

struct EvalReport {
  std::string estimator;  // variant name or "baseline"
  std::string dataset;
  std::string object;
  std::string metric;  // "ADD" or "ADD-S"
  double diameter = 0.0;
  std::vector<SceneResult> scenes;
  std::size_t failures = 0;
  double accuracy = 0.0;

  std::vector<double> errors() const {
    std::vector<double> out;
    for (const auto& s : scenes)
      if (s.error) out.push_back(*s.error);
    return out;
  }

  void finalize() {
    failures = static_cast<std::size_t>(std::count_if(scenes.begin(), scenes.end(), [](const SceneResult& s) { return !s.error; }));
    const auto e = errors();
    accuracy = add01d_accuracy(e, diameter, failures);
  }
};

inline std::string format_report(const EvalReport& r) {
  std::string scenes = "[";
  for (std::size_t i = 0; i < r.scenes.size(); ++i) {
    const auto& s = r.scenes[i];
    io::ObjectWriter w;
    w.integer("scene_id", s.scene_id);
    if (s.error) {
      w.num("error", *s.error).boolean("correct", *s.error < 0.1 * r.diameter);
    } else {
      w.raw("error", "null").boolean("correct", false).str("failure", s.failure);
    }
    scenes += (i ? "," : "") + w.done();
  }
  scenes += "]";
  return io::ObjectWriter()
             .str("estimator", r.estimator)
             .str("dataset", r.dataset)
             .str("object", r.object)
             .str("metric", r.metric)
             .num("diameter", r.diameter)
             .num("threshold", 0.1 * r.diameter)
             .integer("scene_count", static_cast<long long>(r.scenes.size()))
             .integer("failures", static_cast<long long>(r.failures))
             .num("accuracy", r.accuracy)
             .raw("scenes", scenes)
             .done() +
         "\n";
}

}  // namespace sspe
