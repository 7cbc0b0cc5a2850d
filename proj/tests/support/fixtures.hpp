#pragma once

#include <cstdint>

#include "sspe/dataset.hpp"
#include "sspe/models.hpp"
#include "sspe/posehead.hpp"
#include "sspe/simulator.hpp"

namespace sspe::test {

// Random scene in front of the default camera, rendered from the drill model.
inline CorrespondenceSet random_scene(std::size_t n, std::size_t m, std::uint64_t seed, NoiseConfig noise = {},
                                      OcclusionConfig occ = {}) {
  static const ObjectModel model = make_drill_model();
  const Keypoints3D kps = farthest_point_sampling(model, n);
  Rng rng(derive_seed(seed, {0x5ce7e}));
  PoseSampling ps;
  const Pose pose = sample_pose(ps, rng);
  return render_correspondences(model, kps, pose, CameraIntrinsics{}, m, noise, occ, derive_seed(seed, {1}));
}

inline Architecture small_arch(std::size_t n, std::size_t m, std::size_t d) {
  Architecture a;
  a.n = n;
  a.m = m;
  a.feature_dim = d;
  a.phi_s_hidden = {16, 16};
  a.phi_g_hidden = {32, 16};
  return a;
}

}  // namespace sspe::test
