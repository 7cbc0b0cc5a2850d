#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "sspe/error.hpp"
#include "sspe/geometry.hpp"
#include "sspe/models.hpp"
#include "sspe/rng.hpp"
#include "sspe/simulator.hpp"

namespace sspe {

struct VotingConfig {
  int hypothesis_count = 128;
  double inlier_cos_threshold = 0.999;
  double min_inlier_fraction = 0.1;

  void validate() const {
    if (hypothesis_count < 1) throw Error(ErrorCode::Config, "hypothesis_count must be >= 1");
    if (!(inlier_cos_threshold >= -1.0 && inlier_cos_threshold <= 1.0))
      throw Error(ErrorCode::Config, "inlier_cos_threshold must be in [-1,1]");
    if (!(min_inlier_fraction >= 0.0 && min_inlier_fraction <= 1.0))
      throw Error(ErrorCode::Config, "min_inlier_fraction must be in [0,1]");
  }
};

struct KeypointEstimate {
  Vec2 position = Vec2::Zero();
  std::size_t inlier_count = 0;
  std::size_t keypoint = 0;
};

// A sample supports a hypothesis when its direction points at it.
inline bool supports(const DirectionSample& s, const Vec2& unit_dir, const Vec2& hypothesis, double cos_threshold) {
  const Vec2 v = hypothesis - s.point();
  const double len = v.norm();
  if (len < 1e-12) return false;
  return unit_dir.dot(v) / len >= cos_threshold;
}

// Least-squares point closest to all rays' supporting lines.
inline bool least_squares_intersection(std::span<const DirectionSample> group, std::span<const Vec2> dirs,
                                       const std::vector<std::size_t>& members, Vec2& out) {
  Eigen::Matrix2d a = Eigen::Matrix2d::Zero();
  Vec2 b = Vec2::Zero();
  for (std::size_t k : members) {
    const Vec2 nrm(-dirs[k].y(), dirs[k].x());
    const Eigen::Matrix2d nn = nrm * nrm.transpose();
    a += nn;
    b += nn * group[k].point();
  }
  const double scale = a.trace();
  if (!(scale > 0.0) || std::abs(a.determinant()) < 1e-12 * scale * scale) return false;
  out = a.ldlt().solve(b);
  return out.allFinite();
}

inline KeypointEstimate vote_keypoint(std::span<const DirectionSample> group, const VotingConfig& cfg, Rng& rng,
                                      std::size_t keypoint) {
  const std::size_t m = group.size();
  if (m < 2) throw Error(ErrorCode::Precondition, "voting needs at least two samples per group");
  std::vector<Vec2> dirs(m);
  for (std::size_t k = 0; k < m; ++k) dirs[k] = group[k].unit_direction();

  std::uniform_int_distribution<std::size_t> pick(0, m - 1);
  bool any = false;
  Vec2 best_h = Vec2::Zero();
  std::size_t best_count = 0;
  for (int h = 0; h < cfg.hypothesis_count; ++h) {
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    if (a == b) b = (b + 1) % m;
    if (std::abs(cross2(dirs[a], dirs[b])) < kParallelEps) continue;
    const Vec2 hyp = line_intersection(group[a], group[b]);
    if (!hyp.allFinite()) continue;
    std::size_t count = 0;
    for (std::size_t k = 0; k < m; ++k) count += supports(group[k], dirs[k], hyp, cfg.inlier_cos_threshold);
    if (!any || count > best_count) {
      best_h = hyp;
      best_count = count;
      any = true;
    }
  }
  if (!any) throw Error(ErrorCode::DegenerateGroup, "every sampled pair in group " + std::to_string(keypoint) + " is parallel");
  if (static_cast<double>(best_count) < cfg.min_inlier_fraction * static_cast<double>(m)) {
    throw Error(ErrorCode::VotingFailed, "keypoint " + std::to_string(keypoint) + " reached only " +
                                             std::to_string(best_count) + "/" + std::to_string(m) + " inliers");
  }
  std::vector<std::size_t> inliers;
  for (std::size_t k = 0; k < m; ++k)
    if (supports(group[k], dirs[k], best_h, cfg.inlier_cos_threshold)) inliers.push_back(k);
  Vec2 refit = best_h;
  if (!least_squares_intersection(group, dirs, inliers, refit)) refit = best_h;
  return {refit, best_count, keypoint};
}

inline std::vector<KeypointEstimate> vote_keypoints(const CorrespondenceSet& set, const VotingConfig& cfg,
                                                    std::uint64_t seed) {
  cfg.validate();
  std::vector<KeypointEstimate> out;
  out.reserve(set.n());
  for (std::size_t i = 0; i < set.n(); ++i) {
    Rng rng(derive_seed(seed, {i}));
    out.push_back(vote_keypoint(set.samples[i], cfg, rng, i));
  }
  return out;
}

// DLT on normalized image coordinates, then the closest rotation to the
// left 3x3 block (orthogonal Procrustes).
inline Pose pnp_solve(std::span<const Vec2> kps2d, std::span<const Vec3> kps3d, const CameraIntrinsics& k) {
  const std::size_t n = kps2d.size();
  if (kps3d.size() != n) throw Error(ErrorCode::Precondition, "2D and 3D keypoint counts differ");
  if (n < 6) throw Error(ErrorCode::InsufficientCorrespondences, "DLT needs at least 6 points, got " + std::to_string(n));

  Vec3 centroid = Vec3::Zero();
  for (const auto& p : kps3d) centroid += p;
  centroid /= static_cast<double>(n);
  double mean_dist = 0.0;
  for (const auto& p : kps3d) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(n);
  if (!(mean_dist > 0.0)) throw Error(ErrorCode::DegenerateConfiguration, "all 3D points coincide");
  const double s = std::sqrt(3.0) / mean_dist;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * static_cast<Eigen::Index>(n), 12);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector4d x((kps3d[i] - centroid).x() * s, (kps3d[i] - centroid).y() * s,
                            (kps3d[i] - centroid).z() * s, 1.0);
    const double xn = (kps2d[i].x() - k.cx) / k.fx;
    const double yn = (kps2d[i].y() - k.cy) / k.fy;
    const auto r = 2 * static_cast<Eigen::Index>(i);
    a.block<1, 4>(r, 0) = x.transpose();
    a.block<1, 4>(r, 8) = -xn * x.transpose();
    a.block<1, 4>(r + 1, 4) = x.transpose();
    a.block<1, 4>(r + 1, 8) = -yn * x.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv.size() < 12 || !(sv[10] > 1e-8 * sv[0])) {
    throw Error(ErrorCode::DegenerateConfiguration, "DLT design matrix is rank deficient (coplanar points?)");
  }
  const Eigen::VectorXd v = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> p_norm;
  p_norm << v.segment<4>(0).transpose(), v.segment<4>(4).transpose(), v.segment<4>(8).transpose();
  Eigen::Matrix4d denorm = Eigen::Matrix4d::Identity();
  denorm.topLeftCorner<3, 3>() *= s;
  denorm.topRightCorner<3, 1>() = -s * centroid;
  Eigen::Matrix<double, 3, 4> p = p_norm * denorm;

  double depth_sum = 0.0;
  for (const auto& x : kps3d) depth_sum += p.row(2).head<3>().dot(x) + p(2, 3);
  if (depth_sum < 0.0) p = -p;

  const Mat3 m = p.leftCols<3>();
  Eigen::JacobiSVD<Mat3> msvd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 fix = Mat3::Identity();
  fix(2, 2) = (msvd.matrixU() * msvd.matrixV().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Mat3 r = msvd.matrixU() * fix * msvd.matrixV().transpose();
  const double scale = msvd.singularValues().mean();
  if (!(scale > 0.0)) throw Error(ErrorCode::DegenerateConfiguration, "DLT produced a zero rotation block");
  return {rotmat_to_quat(r), p.col(3) / scale};
}

inline double reprojection_cost(const Pose& pose, std::span<const Vec2> kps2d, std::span<const Vec3> kps3d,
                                const CameraIntrinsics& k) {
  const Mat3 r = pose.rotation();
  double cost = 0.0;
  for (std::size_t i = 0; i < kps2d.size(); ++i) {
    const Vec3 pc = r * kps3d[i] + pose.t;
    if (!(pc.z() > kMinDepth)) return std::numeric_limits<double>::infinity();
    cost += (project(k, pc) - kps2d[i]).squaredNorm();
  }
  return cost;
}

struct RefineResult {
  Pose pose;
  int iterations = 0;
  int accepted_steps = 0;
  std::vector<double> accepted_costs;  // cost after pose0 and after each accepted step
};

// Levenberg-Marquardt on summed squared reprojection error. The rotation is
// updated by a left-multiplied axis-angle increment.
inline RefineResult refine_pose_detailed(const Pose& pose0, std::span<const Vec2> kps2d, std::span<const Vec3> kps3d,
                                         const CameraIntrinsics& k, int max_iters = 100) {
  if (kps2d.size() != kps3d.size()) throw Error(ErrorCode::Precondition, "2D and 3D keypoint counts differ");
  RefineResult res;
  res.pose = {quat_normalize(pose0.q), pose0.t};
  {
    const Mat3 r = res.pose.rotation();
    for (const auto& x : kps3d)
      if (!((r * x + res.pose.t).z() > kMinDepth)) throw Error(ErrorCode::BehindCamera, "initial pose puts a keypoint behind the camera");
  }
  double cost = reprojection_cost(res.pose, kps2d, kps3d, k);
  if (!std::isfinite(cost)) throw Error(ErrorCode::NumericalFailure, "initial reprojection cost is not finite");
  res.accepted_costs.push_back(cost);

  double lambda = 1e-3;
  const auto n = static_cast<Eigen::Index>(kps2d.size());
  for (; res.iterations < max_iters && cost > 0.0; ++res.iterations) {
    const Mat3 r = res.pose.rotation();
    Eigen::MatrixXd jac(2 * n, 6);
    Eigen::VectorXd resid(2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vec3 rx = r * kps3d[static_cast<std::size_t>(i)];
      const Vec3 pc = rx + res.pose.t;
      const double iz = 1.0 / pc.z();
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0.0, -k.fx * pc.x() * iz * iz, 0.0, k.fy * iz, -k.fy * pc.y() * iz * iz;
      Mat3 skew;
      skew << 0, -rx.z(), rx.y(), rx.z(), 0, -rx.x(), -rx.y(), rx.x(), 0;
      jac.block<2, 3>(2 * i, 0) = -dproj * skew;
      jac.block<2, 3>(2 * i, 3) = dproj;
      resid.segment<2>(2 * i) = project(k, pc) - kps2d[static_cast<std::size_t>(i)];
    }
    const Eigen::Matrix<double, 6, 6> h = jac.transpose() * jac;
    const Eigen::Matrix<double, 6, 1> g = jac.transpose() * resid;
    Eigen::Matrix<double, 6, 6> damped = h;
    damped.diagonal() += lambda * h.diagonal();
    const Eigen::Matrix<double, 6, 1> step = damped.ldlt().solve(-g);
    if (!step.allFinite()) throw Error(ErrorCode::NumericalFailure, "LM step is not finite");
    if (step.norm() < 1e-10) break;
    const Pose trial{(quat_exp(step.head<3>()) * res.pose.q).canonical(), res.pose.t + step.tail<3>()};
    const double trial_cost = reprojection_cost(trial, kps2d, kps3d, k);
    if (std::isnan(trial_cost)) throw Error(ErrorCode::NumericalFailure, "reprojection cost became NaN");
    if (trial_cost < cost) {
      res.pose = {quat_normalize(trial.q), trial.t};
      cost = trial_cost;
      res.accepted_costs.push_back(cost);
      ++res.accepted_steps;
      lambda /= 10.0;
    } else {
      lambda *= 10.0;
      if (lambda > 1e16) break;
    }
  }
  res.pose.q = res.pose.q.canonical();
  return res;
}

inline Pose refine_pose(const Pose& pose0, std::span<const Vec2> kps2d, std::span<const Vec3> kps3d,
                        const CameraIntrinsics& k, int max_iters = 100) {
  return refine_pose_detailed(pose0, kps2d, kps3d, k, max_iters).pose;
}

// Two-stage estimator: vote for 2D keypoints, DLT, then refine.
inline Pose estimate_pose_baseline(const CorrespondenceSet& set, const VotingConfig& cfg, std::uint64_t seed,
                                   int refine_iters = 100) {
  const auto estimates = vote_keypoints(set, cfg, seed);
  std::vector<Vec2> kps2d;
  kps2d.reserve(estimates.size());
  for (const auto& e : estimates) kps2d.push_back(e.position);
  const auto& kps3d = set.keypoints3d.points;
  const Pose init = pnp_solve(kps2d, kps3d, set.intrinsics);
  return refine_pose(init, kps2d, kps3d, set.intrinsics, refine_iters);
}

}  // namespace sspe
