#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "sspe/error.hpp"
#include "sspe/geometry.hpp"
#include "sspe/models.hpp"
#include "sspe/rng.hpp"

namespace sspe {

// Imperfections of a learned vector field.
struct NoiseConfig {
  double angle_sigma = 0.0;   // radians, Gaussian rotation of each direction
  double outlier_rate = 0.0;  // probability of a uniformly random direction
  double pixel_jitter = 0.0;  // pixels, Gaussian displacement of the sample location

  void validate() const {
    if (!(angle_sigma >= 0.0)) throw Error(ErrorCode::Config, "angle_sigma must be >= 0");
    if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) throw Error(ErrorCode::Config, "outlier_rate must be in [0,1]");
    if (!(pixel_jitter >= 0.0)) throw Error(ErrorCode::Config, "pixel_jitter must be >= 0");
  }
};

// Fraction of the object's pixel support hidden by one random rectangle.
struct OcclusionConfig {
  double min_fraction = 0.0;
  double max_fraction = 0.0;

  void validate() const {
    if (!(0.0 <= min_fraction && min_fraction <= max_fraction && max_fraction <= 1.0)) {
      throw Error(ErrorCode::Config, "occlusion fractions must satisfy 0 <= min <= max <= 1");
    }
  }

  static OcclusionConfig light() { return {0.1, 0.3}; }
  static OcclusionConfig heavy() { return {0.3, 0.9}; }
};

struct CorrespondenceSet {
  std::vector<std::vector<DirectionSample>> samples;  // one group of m samples per keypoint
  std::vector<Vec2> keypoints2d;                      // ground-truth projections
  Pose pose_gt;
  CameraIntrinsics intrinsics;
  Keypoints3D keypoints3d;
  double occlusion_fraction = 0.0;  // realized fraction of removed object pixels

  std::size_t n() const { return samples.size(); }
  std::size_t m() const { return samples.empty() ? 0 : samples.front().size(); }
};

struct Pixel {
  int u = 0;
  int v = 0;
  bool operator==(const Pixel&) const = default;
};

// Andrew's monotone chain; counter-clockwise, no repeated endpoint.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  auto turn = [](const Vec2& o, const Vec2& a, const Vec2& b) { return cross2(a - o, b - o); };
  for (const auto& p : pts) {
    while (k >= 2 && turn(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && turn(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

inline bool inside_convex(const std::vector<Vec2>& hull, const Vec2& p) {
  if (hull.size() < 3) return false;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2& a = hull[i];
    const Vec2& b = hull[(i + 1) % hull.size()];
    if (cross2(b - a, p - a) < -1e-9) return false;
  }
  return true;
}

// Integer pixel centers inside the hull, in raster order.
inline std::vector<Pixel> rasterize_hull(const std::vector<Vec2>& hull) {
  std::vector<Pixel> out;
  if (hull.size() < 3) return out;
  double x0 = hull[0].x(), x1 = x0, y0 = hull[0].y(), y1 = y0;
  for (const auto& p : hull) {
    x0 = std::min(x0, p.x());
    x1 = std::max(x1, p.x());
    y0 = std::min(y0, p.y());
    y1 = std::max(y1, p.y());
  }
  for (int v = static_cast<int>(std::ceil(y0)); v <= static_cast<int>(std::floor(y1)); ++v)
    for (int u = static_cast<int>(std::ceil(x0)); u <= static_cast<int>(std::floor(x1)); ++u)
      if (inside_convex(hull, Vec2(u, v))) out.push_back({u, v});
  return out;
}

struct OcclusionMask {
  std::vector<bool> removed;  // parallel to the region pixel list
  std::size_t removed_count = 0;
};

// Removes one axis-aligned rectangle covering a target share of the region.
// The rectangle is the smallest one, for a random center and aspect ratio,
// that hides at least the target count; a draw that overshoots the allowed
// range is retried.
inline OcclusionMask occlude_region(const std::vector<Pixel>& region, const OcclusionConfig& occ, Rng& rng) {
  const std::size_t total = region.size();
  OcclusionMask mask{std::vector<bool>(total, false), 0};
  const double f = occ.min_fraction + (occ.max_fraction - occ.min_fraction) * uniform(rng, 0.0, 1.0);
  if (total == 0 || occ.max_fraction <= 0.0) return mask;

  const auto lo = static_cast<std::size_t>(std::ceil(occ.min_fraction * total - 1e-9));
  const auto hi = std::min(total, static_cast<std::size_t>(std::floor(occ.max_fraction * total + 1e-9)));
  std::size_t target = static_cast<std::size_t>(std::llround(f * total));
  target = std::clamp(target, lo, std::max(lo, hi));
  if (target == 0) return mask;
  if (target >= total) {
    mask.removed.assign(total, true);
    mask.removed_count = total;
    return mask;
  }

  int u0 = region[0].u, u1 = u0, v0 = region[0].v, v1 = v0;
  for (const auto& p : region) {
    u0 = std::min(u0, p.u);
    u1 = std::max(u1, p.u);
    v0 = std::min(v0, p.v);
    v1 = std::max(v1, p.v);
  }

  std::vector<double> reach(total);
  std::optional<OcclusionMask> best;
  constexpr int kAttempts = 32;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    const double cu = uniform(rng, u0, u1 + 1.0) - 0.5;
    const double cv = uniform(rng, v0, v1 + 1.0) - 0.5;
    const double aspect = std::sqrt(std::exp(uniform(rng, std::log(0.5), std::log(2.0))));
    // Scale at which a rectangle with this center and aspect first covers each pixel.
    for (std::size_t i = 0; i < total; ++i) {
      reach[i] = std::max(std::abs(region[i].u - cu) / aspect, std::abs(region[i].v - cv) * aspect);
    }
    std::vector<double> sorted = reach;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(target - 1), sorted.end());
    const double scale = sorted[target - 1];
    OcclusionMask cand{std::vector<bool>(total, false), 0};
    for (std::size_t i = 0; i < total; ++i) {
      if (reach[i] <= scale) {
        cand.removed[i] = true;
        ++cand.removed_count;
      }
    }
    if (cand.removed_count <= hi) return cand;
    if (!best || cand.removed_count < best->removed_count) best = std::move(cand);
  }
  return *best;
}

// Simulates the correspondence estimator for one scene: the object region is
// the convex hull of the projected model, part of it is masked out, and m
// surviving pixels per keypoint vote toward that keypoint's projection.
inline CorrespondenceSet render_correspondences(const ObjectModel& model, const Keypoints3D& kps, const Pose& pose,
                                                const CameraIntrinsics& k, std::size_t m, const NoiseConfig& noise,
                                                const OcclusionConfig& occ, std::uint64_t seed) {
  noise.validate();
  occ.validate();
  k.validate();
  if (m == 0 || m % 2 != 0) throw Error(ErrorCode::Config, "m must be a positive even number");
  if (kps.size() == 0) throw Error(ErrorCode::Config, "no keypoints");

  Rng rng(seed);
  const Mat3 r = pose.rotation();

  CorrespondenceSet set;
  set.pose_gt = {pose.q.canonical(), pose.t};
  set.intrinsics = k;
  set.keypoints3d = kps;
  for (const auto& p : kps.points) set.keypoints2d.push_back(project(k, r * p + pose.t));

  std::vector<Vec2> projected;
  projected.reserve(model.points.size());
  for (const auto& p : model.points) projected.push_back(project(k, r * p + pose.t));
  const std::vector<Pixel> region = rasterize_hull(convex_hull(std::move(projected)));

  const OcclusionMask mask = occlude_region(region, occ, rng);
  set.occlusion_fraction =
      region.empty() ? 1.0 : static_cast<double>(mask.removed_count) / static_cast<double>(region.size());
  std::vector<Pixel> visible;
  visible.reserve(region.size() - mask.removed_count);
  for (std::size_t i = 0; i < region.size(); ++i)
    if (!mask.removed[i]) visible.push_back(region[i]);

  auto exhausted = [&] {
    return Error(ErrorCode::OcclusionExhausted, std::to_string(visible.size()) +
                                                    " visible pixels cannot supply " + std::to_string(m) +
                                                    " samples");
  };
  if (visible.size() < m) throw exhausted();

  std::vector<std::size_t> order(visible.size());
  set.samples.resize(kps.size());
  for (std::size_t i = 0; i < kps.size(); ++i) {
    const Vec2& target = set.keypoints2d[i];
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    auto& group = set.samples[i];
    group.reserve(m);
    std::size_t next = 0;
    while (group.size() < m) {
      if (next == order.size()) throw exhausted();
      // Partial Fisher-Yates: sampling without replacement.
      const std::size_t pick = next + std::uniform_int_distribution<std::size_t>(0, order.size() - 1 - next)(rng);
      std::swap(order[next], order[pick]);
      const Pixel px = visible[order[next++]];
      const Vec2 loc(px.u + gaussian(rng, noise.pixel_jitter), px.v + gaussian(rng, noise.pixel_jitter));
      const Vec2 to_kp = target - loc;
      const double len = to_kp.norm();
      const double theta = gaussian(rng, noise.angle_sigma);
      const bool outlier = uniform(rng, 0.0, 1.0) < noise.outlier_rate;
      if (len < 1e-9) continue;  // pixel sits on the keypoint; no direction
      Vec2 d = to_kp / len;
      if (theta != 0.0) {
        const double c = std::cos(theta), s = std::sin(theta);
        d = Vec2(c * d.x() - s * d.y(), s * d.x() + c * d.y());
      }
      if (outlier) {
        const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        d = Vec2(std::cos(phi), std::sin(phi));
      }
      group.push_back({loc.x(), loc.y(), d.x(), d.y()});
    }
  }
  return set;
}

}  // namespace sspe
