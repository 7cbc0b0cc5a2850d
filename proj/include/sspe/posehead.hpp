#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sspe/error.hpp"
#include "sspe/geometry.hpp"
#include "sspe/mlp.hpp"
#include "sspe/rng.hpp"
#include "sspe/simulator.hpp"

// End-to-end pose head: a shared network embeds single direction samples or
// consecutive pairs of them, per-keypoint features are pooled into group
// features, and a second network regresses a quaternion and a translation.
// Training combines a 3D pose loss with an optional triplet regularizer that
// pulls same-keypoint features together in cosine similarity.
namespace sspe {

enum class FeatureMode { Single, Pairwise };
enum class Aggregator { Max, Mean };
enum class Mining { Uniform, HardestNegative };

struct Variant {
  FeatureMode feature_mode = FeatureMode::Pairwise;
  Aggregator aggregator = Aggregator::Mean;
  bool triplet_enabled = true;

  static Variant sspe_r() { return {FeatureMode::Single, Aggregator::Max, false}; }
  static Variant sspe_rp() { return {FeatureMode::Single, Aggregator::Mean, false}; }
  static Variant sspe_lc() { return {FeatureMode::Pairwise, Aggregator::Mean, false}; }
  static Variant sspe_ours() { return {FeatureMode::Pairwise, Aggregator::Mean, true}; }

  static Variant parse(const std::string& name) {
    if (name == "sspe-r") return sspe_r();
    if (name == "sspe-rp") return sspe_rp();
    if (name == "sspe-lc") return sspe_lc();
    if (name == "sspe-ours") return sspe_ours();
    throw Error(ErrorCode::Config, "unknown variant `" + name + "`");
  }

  // Named configuration, or a descriptive name for custom combinations.
  std::string name() const {
    if (*this == sspe_r()) return "sspe-r";
    if (*this == sspe_rp()) return "sspe-rp";
    if (*this == sspe_lc()) return "sspe-lc";
    if (*this == sspe_ours()) return "sspe-ours";
    return std::string(feature_mode == FeatureMode::Pairwise ? "pairwise" : "single") + "-" +
           (aggregator == Aggregator::Max ? "max" : "mean") + (triplet_enabled ? "-triplet" : "");
  }

  std::size_t input_width() const { return feature_mode == FeatureMode::Pairwise ? 8 : 4; }

  bool operator==(const Variant&) const = default;
};

struct Architecture {
  std::size_t n = 9;
  std::size_t m = 200;
  std::size_t feature_dim = 128;
  std::vector<std::size_t> phi_s_hidden{64, 128};
  std::vector<std::size_t> phi_g_hidden{512, 256};
  // Pixel coordinates enter the network as (x - cx) / fx * coordinate_scale.
  double coordinate_scale = 4.0;

  std::vector<std::size_t> phi_s_widths(const Variant& v) const {
    std::vector<std::size_t> w{v.input_width()};
    w.insert(w.end(), phi_s_hidden.begin(), phi_s_hidden.end());
    w.push_back(feature_dim);
    return w;
  }
  std::vector<std::size_t> phi_g_widths() const {
    std::vector<std::size_t> w{n * feature_dim};
    w.insert(w.end(), phi_g_hidden.begin(), phi_g_hidden.end());
    w.push_back(7);
    return w;
  }

  bool operator==(const Architecture&) const = default;
};

inline std::uint64_t next_param_stamp() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1);
}

struct PoseHeadParams {
  Architecture arch;
  Variant variant;
  Mlp phi_s;
  Mlp phi_g;
  // Identifies this parameter state; forward caches remember it so that a
  // backward pass against modified parameters is rejected.
  std::uint64_t stamp = next_param_stamp();

  void touch() { stamp = next_param_stamp(); }

  std::size_t parameter_count() const { return phi_s.parameter_count() + phi_g.parameter_count(); }
};

inline void validate_arch(const Architecture& arch, const Variant& variant) {
  if (arch.n < 1) throw Error(ErrorCode::Config, "n must be >= 1");
  if (arch.feature_dim < 1) throw Error(ErrorCode::Config, "feature width must be >= 1");
  if (arch.m < 1 || (variant.feature_mode == FeatureMode::Pairwise && arch.m % 2 != 0)) {
    throw Error(ErrorCode::Config, "pairwise features need an even, positive m");
  }
  for (auto w : arch.phi_s_hidden)
    if (w == 0) throw Error(ErrorCode::Config, "hidden widths must be positive");
  for (auto w : arch.phi_g_hidden)
    if (w == 0) throw Error(ErrorCode::Config, "hidden widths must be positive");
  if (!(arch.coordinate_scale > 0.0)) throw Error(ErrorCode::Config, "coordinate_scale must be positive");
}

inline void validate_params(const PoseHeadParams& p) {
  validate_arch(p.arch, p.variant);
  if (p.phi_s.widths() != p.arch.phi_s_widths(p.variant) || p.phi_g.widths() != p.arch.phi_g_widths()) {
    throw Error(ErrorCode::Config, "layer widths disagree with the architecture descriptor");
  }
}

inline PoseHeadParams init_params(const Architecture& arch, const Variant& variant, std::uint64_t seed) {
  validate_arch(arch, variant);
  Rng rng(derive_seed(seed, {0x5eed}));
  PoseHeadParams p;
  p.arch = arch;
  p.variant = variant;
  p.phi_s = Mlp::random(arch.phi_s_widths(variant), rng);
  p.phi_g = Mlp::random(arch.phi_g_widths(), rng);
  return p;
}

// Features of one scene, D x P, grouped by keypoint: group i occupies
// columns [i * per_group, (i + 1) * per_group).
struct FeatureBlock {
  Eigen::MatrixXd values;
  std::size_t n = 0;
  std::size_t per_group = 0;
  FeatureMode mode = FeatureMode::Pairwise;
  // Sample indices (within the group) feeding each column; second is -1 in single mode.
  std::vector<std::array<int, 2>> provenance;

  std::size_t size() const { return static_cast<std::size_t>(values.cols()); }
  std::size_t dim() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t group_of(std::size_t column) const { return column / per_group; }
  Eigen::Index column(std::size_t group, std::size_t h) const {
    return static_cast<Eigen::Index>(group * per_group + h);
  }
};

struct ForwardCache {
  std::uint64_t stamp = 0;
  std::size_t n = 0;
  std::size_t m = 0;
  MlpCache phi_s;
  MlpCache phi_g;
  Eigen::MatrixXi argmax;  // D x n, max aggregation only
  Eigen::Vector4d raw_quaternion = Eigen::Vector4d::Zero();
  Vec3 translation = Vec3::Zero();
};

struct ForwardResult {
  Pose pose;  // quaternion normalized, canonical sign
  FeatureBlock features;
  ForwardCache cache;
};

inline Eigen::MatrixXd build_inputs(const CorrespondenceSet& set, const Variant& variant, double coordinate_scale,
                                    std::vector<std::array<int, 2>>& provenance) {
  const std::size_t n = set.n(), m = set.m();
  const auto& k = set.intrinsics;
  auto encode = [&](const DirectionSample& s, Eigen::Ref<Eigen::VectorXd> out) {
    if (!std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.dx) || !std::isfinite(s.dy)) {
      throw Error(ErrorCode::NumericalFailure, "non-finite direction sample");
    }
    const Vec2 d = s.unit_direction();
    out << (s.x - k.cx) / k.fx * coordinate_scale, (s.y - k.cy) / k.fy * coordinate_scale, d.x(), d.y();
  };
  provenance.clear();
  if (variant.feature_mode == FeatureMode::Single) {
    Eigen::MatrixXd x(4, static_cast<Eigen::Index>(n * m));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        Eigen::VectorXd col(4);
        encode(set.samples[i][j], col);
        x.col(static_cast<Eigen::Index>(i * m + j)) = col;
        provenance.push_back({static_cast<int>(j), -1});
      }
    return x;
  }
  if (m % 2 != 0) throw Error(ErrorCode::Config, "pairwise features need an even m");
  const std::size_t half = m / 2;
  Eigen::MatrixXd x(8, static_cast<Eigen::Index>(n * half));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t h = 0; h < half; ++h) {
      Eigen::VectorXd col(8);
      encode(set.samples[i][2 * h], col.head(4));
      encode(set.samples[i][2 * h + 1], col.tail(4));
      x.col(static_cast<Eigen::Index>(i * half + h)) = col;
      provenance.push_back({static_cast<int>(2 * h), static_cast<int>(2 * h + 1)});
    }
  return x;
}

inline ForwardResult forward(const PoseHeadParams& params, const CorrespondenceSet& set) {
  const auto& arch = params.arch;
  if (set.n() != arch.n || set.m() != arch.m) {
    throw Error(ErrorCode::Config, "scene has n=" + std::to_string(set.n()) + ", m=" + std::to_string(set.m()) +
                                       " but the pose head expects n=" + std::to_string(arch.n) +
                                       ", m=" + std::to_string(arch.m));
  }
  for (const auto& g : set.samples)
    if (g.size() != arch.m) throw Error(ErrorCode::Config, "groups have unequal sample counts");

  ForwardResult r;
  r.cache.stamp = params.stamp;
  r.cache.n = arch.n;
  r.cache.m = arch.m;
  auto& f = r.features;
  f.n = arch.n;
  f.mode = params.variant.feature_mode;
  f.per_group = f.mode == FeatureMode::Pairwise ? arch.m / 2 : arch.m;
  const Eigen::MatrixXd x = build_inputs(set, params.variant, arch.coordinate_scale, f.provenance);
  f.values = mlp_forward(params.phi_s, x, &r.cache.phi_s);
  if (!f.values.allFinite()) throw Error(ErrorCode::NumericalFailure, "non-finite feature activation");

  const auto d = static_cast<Eigen::Index>(arch.feature_dim);
  const auto per = static_cast<Eigen::Index>(f.per_group);
  Eigen::VectorXd pooled(d * static_cast<Eigen::Index>(arch.n));
  if (params.variant.aggregator == Aggregator::Max) r.cache.argmax.resize(d, static_cast<Eigen::Index>(arch.n));
  for (std::size_t i = 0; i < arch.n; ++i) {
    const auto block = f.values.middleCols(static_cast<Eigen::Index>(i) * per, per);
    auto g = pooled.segment(static_cast<Eigen::Index>(i) * d, d);
    if (params.variant.aggregator == Aggregator::Mean) {
      g = block.rowwise().mean();
    } else {
      for (Eigen::Index row = 0; row < d; ++row) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < per; ++c)
          if (block(row, c) > block(row, best)) best = c;  // lowest index wins ties
        g[row] = block(row, best);
        r.cache.argmax(row, static_cast<Eigen::Index>(i)) = static_cast<int>(best);
      }
    }
  }

  const Eigen::MatrixXd y = mlp_forward(params.phi_g, pooled, &r.cache.phi_g);
  if (!y.allFinite()) throw Error(ErrorCode::NumericalFailure, "non-finite pose output");
  r.cache.raw_quaternion = y.col(0).head<4>();
  r.cache.translation = y.col(0).tail<3>();
  const Quaternion q = quat_normalize(Quaternion::from_coeffs(r.cache.raw_quaternion));
  r.pose = {q.canonical(), r.cache.translation};
  return r;
}

inline constexpr double kFeatureNormEps = 1e-12;

inline double cosine_similarity(const Eigen::Ref<const Eigen::VectorXd>& f, const Eigen::Ref<const Eigen::VectorXd>& g) {
  const double nf = f.norm(), ng = g.norm();
  if (!(nf > kFeatureNormEps) || !(ng > kFeatureNormEps)) {
    throw Error(ErrorCode::DegenerateFeature, "cosine similarity of a near-zero feature");
  }
  return std::clamp(f.dot(g) / (nf * ng), -1.0, 1.0);
}

// d cos(f, g) / d f
inline Eigen::VectorXd cosine_gradient(const Eigen::Ref<const Eigen::VectorXd>& f,
                                       const Eigen::Ref<const Eigen::VectorXd>& g) {
  const double nf = f.norm(), ng = g.norm();
  const double s = f.dot(g) / (nf * ng);
  return g / (nf * ng) - s * f / (nf * nf);
}

struct Triplet {
  Eigen::Index anchor = 0;
  Eigen::Index positive = 0;
  Eigen::Index negative = 0;
};

// One triplet per anchor (every feature is an anchor). The positive comes
// from the anchor's group (never the anchor itself unless the group has one
// feature), the negative from any other group.
inline std::vector<Triplet> mine_triplets(const FeatureBlock& fb, Mining mining, std::uint64_t seed) {
  if (fb.n < 2) throw Error(ErrorCode::Precondition, "triplet mining needs at least two groups");
  if (fb.per_group < 1) throw Error(ErrorCode::Precondition, "empty feature groups");
  Rng rng(seed);
  std::vector<Triplet> out;
  out.reserve(fb.size());
  const std::size_t per = fb.per_group;

  std::vector<double> norms;
  if (mining == Mining::HardestNegative) {
    norms.resize(fb.size());
    for (std::size_t c = 0; c < fb.size(); ++c) {
      norms[c] = fb.values.col(static_cast<Eigen::Index>(c)).norm();
      if (!(norms[c] > kFeatureNormEps)) throw Error(ErrorCode::DegenerateFeature, "near-zero feature");
    }
  }
  for (std::size_t i = 0; i < fb.n; ++i) {
    for (std::size_t h = 0; h < per; ++h) {
      Triplet t;
      t.anchor = fb.column(i, h);
      std::size_t s = h;
      if (per > 1) {
        s = std::uniform_int_distribution<std::size_t>(0, per - 2)(rng);
        if (s >= h) ++s;
      }
      t.positive = fb.column(i, s);
      if (mining == Mining::Uniform) {
        std::size_t j = std::uniform_int_distribution<std::size_t>(0, fb.n - 2)(rng);
        if (j >= i) ++j;
        const std::size_t dd = std::uniform_int_distribution<std::size_t>(0, per - 1)(rng);
        t.negative = fb.column(j, dd);
      } else {
        double best = -2.0;
        const auto a = fb.values.col(t.anchor);
        for (std::size_t c = 0; c < fb.size(); ++c) {
          if (fb.group_of(c) == i) continue;
          const auto cc = static_cast<Eigen::Index>(c);
          const double sim = a.dot(fb.values.col(cc)) / (norms[static_cast<std::size_t>(t.anchor)] * norms[c]);
          if (sim > best) {
            best = sim;
            t.negative = cc;
          }
        }
      }
      out.push_back(t);
    }
  }
  return out;
}

struct TripletResult {
  double loss = 0.0;
  std::vector<double> terms;  // per anchor, hinge value
  std::vector<Triplet> triplets;
};

inline TripletResult triplet_loss(const FeatureBlock& fb, const std::vector<Triplet>& triplets, double alpha) {
  TripletResult r;
  r.triplets = triplets;
  r.terms.reserve(triplets.size());
  for (const auto& t : triplets) {
    const double s_neg = cosine_similarity(fb.values.col(t.anchor), fb.values.col(t.negative));
    const double s_pos = cosine_similarity(fb.values.col(t.anchor), fb.values.col(t.positive));
    const double term = std::max(s_neg - s_pos + alpha, 0.0);
    r.terms.push_back(term);
    r.loss += term;
  }
  if (!triplets.empty()) r.loss /= static_cast<double>(triplets.size());
  return r;
}

inline TripletResult triplet_loss(const FeatureBlock& fb, double alpha, Mining mining, std::uint64_t seed) {
  return triplet_loss(fb, mine_triplets(fb, mining, seed), alpha);
}

// d L_t / d features. Inactive hinges (value exactly 0) contribute nothing.
inline Eigen::MatrixXd triplet_feature_gradient(const FeatureBlock& fb, const std::vector<Triplet>& triplets,
                                                double alpha) {
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(fb.values.rows(), fb.values.cols());
  if (triplets.empty()) return grad;
  const double scale = 1.0 / static_cast<double>(triplets.size());
  for (const auto& t : triplets) {
    const auto a = fb.values.col(t.anchor);
    const auto p = fb.values.col(t.positive);
    const auto ng = fb.values.col(t.negative);
    const double term = cosine_similarity(a, ng) - cosine_similarity(a, p) + alpha;
    if (!(term > 0.0)) continue;
    grad.col(t.anchor) += scale * (cosine_gradient(a, ng) - cosine_gradient(a, p));
    grad.col(t.negative) += scale * cosine_gradient(ng, a);
    grad.col(t.positive) -= scale * cosine_gradient(p, a);
  }
  return grad;
}

// Mean 3D distance between keypoints under the two poses.
inline double pose_loss(const Pose& pred, const Pose& gt, std::span<const Vec3> kps3d) {
  if (kps3d.empty()) throw Error(ErrorCode::Precondition, "pose loss needs keypoints");
  const Mat3 rp = quat_to_rotmat(quat_normalize(pred.q));
  const Mat3 rg = quat_to_rotmat(quat_normalize(gt.q));
  double sum = 0.0;
  for (const auto& p : kps3d) sum += ((rp * p + pred.t) - (rg * p + gt.t)).norm();
  return sum / static_cast<double>(kps3d.size());
}

struct TrainConfig {
  double alpha = 0.1;
  double lambda_p = 0.01;
  double lambda_t = 0.1;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::vector<double> milestones{0.5, 0.75, 0.9};
  std::uint64_t seed = 0;
  Mining mining = Mining::Uniform;

  void validate() const {
    if (!(alpha >= 0.0)) throw Error(ErrorCode::Config, "alpha must be >= 0");
    if (!(lambda_p >= 0.0) || !(lambda_t >= 0.0)) throw Error(ErrorCode::Config, "loss coefficients must be >= 0");
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::Config, "learning rate must be positive");
    if (batch_size < 1) throw Error(ErrorCode::Config, "batch size must be >= 1");
    double prev = 0.0;
    for (double m : milestones) {
      if (!(m > prev && m < 1.0)) throw Error(ErrorCode::Config, "milestones must increase strictly within (0,1)");
      prev = m;
    }
  }
};

struct LossBreakdown {
  double pose = 0.0;
  double triplet = 0.0;
  double total = 0.0;
};

// lambda_p * L_p + lambda_t * L_t; the triplet term is skipped (and reported
// as 0) when the variant disables it.
inline LossBreakdown total_loss(const Pose& pose_pred, const FeatureBlock& features, const Pose& pose_gt,
                                std::span<const Vec3> kps3d, const TrainConfig& cfg, const Variant& variant,
                                std::uint64_t seed) {
  LossBreakdown l;
  l.pose = pose_loss(pose_pred, pose_gt, kps3d);
  if (variant.triplet_enabled) l.triplet = triplet_loss(features, cfg.alpha, cfg.mining, seed).loss;
  l.total = cfg.lambda_p * l.pose + (variant.triplet_enabled ? cfg.lambda_t * l.triplet : 0.0);
  return l;
}

struct Gradients {
  Mlp phi_s;
  Mlp phi_g;
  LossBreakdown loss;

  static Gradients zeros_like(const PoseHeadParams& p) {
    return {Mlp::zeros(p.phi_s.widths()), Mlp::zeros(p.phi_g.widths()), {}};
  }

  void add_scaled(const Gradients& o, double s) {
    for (std::size_t l = 0; l < phi_s.layers.size(); ++l) {
      phi_s.layers[l].w += s * o.phi_s.layers[l].w;
      phi_s.layers[l].b += s * o.phi_s.layers[l].b;
    }
    for (std::size_t l = 0; l < phi_g.layers.size(); ++l) {
      phi_g.layers[l].w += s * o.phi_g.layers[l].w;
      phi_g.layers[l].b += s * o.phi_g.layers[l].b;
    }
  }
};

// Partial derivatives of the unit-quaternion rotation matrix, d R / d q_k.
inline std::array<Mat3, 4> rotmat_partials(const Eigen::Vector4d& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  std::array<Mat3, 4> d;
  d[0] << 0, -z, y, z, 0, -x, -y, x, 0;
  d[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  d[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  d[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  for (auto& m : d) m *= 2.0;
  return d;
}

// Reverse pass through pose loss, quaternion normalization, Phi_g,
// aggregation, triplet term and Phi_s. `cache` and `features` must come from
// forward(params, set) with the current parameters.
inline Gradients backward(const PoseHeadParams& params, const CorrespondenceSet& set, const FeatureBlock& features,
                          const ForwardCache& cache, const TrainConfig& cfg, std::uint64_t triplet_seed) {
  if (cache.stamp != params.stamp || cache.n != set.n() || cache.m != set.m() ||
      cache.phi_s.inputs.empty() || cache.phi_g.inputs.empty()) {
    throw Error(ErrorCode::Contract, "forward cache does not belong to these parameters or this scene");
  }
  const auto& arch = params.arch;
  const auto& kps = set.keypoints3d.points;
  Gradients grads = Gradients::zeros_like(params);

  // Pose loss.
  const Eigen::Vector4d raw = cache.raw_quaternion;
  const double raw_norm = raw.norm();
  const Eigen::Vector4d q = raw / raw_norm;
  const Mat3 r_hat = quat_to_rotmat(Quaternion::from_coeffs(q));
  const Mat3 r_gt = quat_to_rotmat(quat_normalize(set.pose_gt.q));
  const double inv_n = 1.0 / static_cast<double>(kps.size());
  Mat3 d_r = Mat3::Zero();
  Vec3 d_t = Vec3::Zero();
  double lp = 0.0;
  for (const auto& p : kps) {
    const Vec3 e = (r_hat * p + cache.translation) - (r_gt * p + set.pose_gt.t);
    const double len = e.norm();
    lp += len;
    if (len > 0.0) {
      const Vec3 w = cfg.lambda_p * inv_n * e / len;
      d_t += w;
      d_r += w * p.transpose();
    }
  }
  grads.loss.pose = lp * inv_n;
  const auto partials = rotmat_partials(q);
  Eigen::Vector4d d_q;
  for (int c = 0; c < 4; ++c) d_q[c] = d_r.cwiseProduct(partials[static_cast<std::size_t>(c)]).sum();
  const Eigen::Vector4d d_raw = (d_q - q * q.dot(d_q)) / raw_norm;

  Eigen::MatrixXd d_y(7, 1);
  d_y.col(0) << d_raw, d_t;
  const Eigen::MatrixXd d_pooled = mlp_backward(params.phi_g, cache.phi_g, d_y, grads.phi_g);

  // Aggregation.
  const auto d = static_cast<Eigen::Index>(arch.feature_dim);
  const auto per = static_cast<Eigen::Index>(features.per_group);
  Eigen::MatrixXd d_feat = Eigen::MatrixXd::Zero(features.values.rows(), features.values.cols());
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(arch.n); ++i) {
    const auto g = d_pooled.col(0).segment(i * d, d);
    if (params.variant.aggregator == Aggregator::Mean) {
      d_feat.middleCols(i * per, per).colwise() += g / static_cast<double>(per);
    } else {
      for (Eigen::Index row = 0; row < d; ++row) d_feat(row, i * per + cache.argmax(row, i)) += g[row];
    }
  }

  if (params.variant.triplet_enabled) {
    const auto triplets = mine_triplets(features, cfg.mining, triplet_seed);
    grads.loss.triplet = triplet_loss(features, triplets, cfg.alpha).loss;
    if (cfg.lambda_t != 0.0) d_feat += cfg.lambda_t * triplet_feature_gradient(features, triplets, cfg.alpha);
  }
  grads.loss.total = cfg.lambda_p * grads.loss.pose +
                     (params.variant.triplet_enabled ? cfg.lambda_t * grads.loss.triplet : 0.0);

  mlp_backward(params.phi_s, cache.phi_s, std::move(d_feat), grads.phi_s);
  return grads;
}

}  // namespace sspe
