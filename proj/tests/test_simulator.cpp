#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "sspe/dataset.hpp"
#include "support/fixtures.hpp"

using namespace sspe;

namespace {

const ObjectModel& drill() {
  static const ObjectModel m = make_drill_model();
  return m;
}

Pose front_pose(std::uint64_t seed) {
  Rng rng(seed);
  return sample_pose(PoseSampling{}, rng);
}

bool same(const CorrespondenceSet& a, const CorrespondenceSet& b) {
  return a.samples == b.samples && a.keypoints2d == b.keypoints2d && a.pose_gt.q == b.pose_gt.q &&
         a.pose_gt.t == b.pose_gt.t && a.occlusion_fraction == b.occlusion_fraction;
}

}  // namespace

TEST(Hull, SquareWithInteriorPoint) {
  const auto hull = convex_hull({{0, 0}, {2, 0}, {2, 2}, {0, 2}, {1, 1}});
  EXPECT_EQ(hull.size(), 4u);
  EXPECT_TRUE(inside_convex(hull, {1, 1}));
  EXPECT_TRUE(inside_convex(hull, {2, 2}));
  EXPECT_FALSE(inside_convex(hull, {2.1, 1}));
  EXPECT_EQ(rasterize_hull(hull).size(), 9u);
}

TEST(Occlusion, HitsRequestedRange) {
  const auto hull = convex_hull({{0, 0}, {60, 0}, {60, 40}, {0, 40}});
  const auto region = rasterize_hull(hull);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto mask = occlude_region(region, OcclusionConfig::heavy(), rng);
    const double f = static_cast<double>(mask.removed_count) / static_cast<double>(region.size());
    EXPECT_GE(f, 0.3 - 1e-12);
    EXPECT_LE(f, 0.9 + 1e-12);
  }
}

TEST(Occlusion, NoneRemovesNothing) {
  const auto region = rasterize_hull(convex_hull({{0, 0}, {10, 0}, {10, 10}, {0, 10}}));
  Rng rng(1);
  EXPECT_EQ(occlude_region(region, {0.0, 0.0}, rng).removed_count, 0u);
}

TEST(Render, NoiseFreeIntersectionsHitKeypoints) {
  const auto kps = farthest_point_sampling(drill(), 9);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto pose = front_pose(s);
    const auto set = render_correspondences(drill(), kps, pose, {}, 16, {}, {}, s);
    ASSERT_EQ(set.n(), 9u);
    for (std::size_t i = 0; i < set.n(); ++i) {
      ASSERT_EQ(set.samples[i].size(), 16u);
      const Vec2 expected = project(set.intrinsics, transform_point(pose, kps.points[i]));
      EXPECT_LT((set.keypoints2d[i] - expected).norm(), 1e-9);
      for (std::size_t a = 0; a < 16; ++a)
        for (std::size_t b = a + 1; b < 16; ++b) {
          const auto& sa = set.samples[i][a];
          const auto& sb = set.samples[i][b];
          if (std::abs(cross2(sa.unit_direction(), sb.unit_direction())) < 1e-6) continue;
          EXPECT_LT((line_intersection(sa, sb) - set.keypoints2d[i]).norm(), 1e-6);
        }
    }
  }
}

TEST(Render, DirectionsAreUnit) {
  const auto set = test::random_scene(9, 40, 4, {0.1, 0.3, 0.5});
  for (const auto& g : set.samples)
    for (const auto& s : g) EXPECT_NEAR(s.direction().norm(), 1.0, 1e-9);
}

TEST(Render, FullOcclusionIsExhausted) {
  const auto kps = farthest_point_sampling(drill(), 9);
  try {
    render_correspondences(drill(), kps, front_pose(1), {}, 16, {}, {1.0, 1.0}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OcclusionExhausted);
  }
}

TEST(Render, OddMIsConfigError) {
  const auto kps = farthest_point_sampling(drill(), 9);
  EXPECT_THROW(render_correspondences(drill(), kps, front_pose(1), {}, 7, {}, {}, 1), Error);
}

TEST(Render, BehindCameraIsError) {
  const auto kps = farthest_point_sampling(drill(), 9);
  try {
    render_correspondences(drill(), kps, {Quaternion::identity(), Vec3(0, 0, -1)}, {}, 16, {}, {}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BehindCamera);
  }
}

TEST(Render, SameSeedIsBitIdentical) {
  const auto kps = farthest_point_sampling(drill(), 9);
  const NoiseConfig noise{0.05, 0.1, 0.5};
  const auto a = render_correspondences(drill(), kps, front_pose(3), {}, 32, noise, OcclusionConfig::heavy(), 9);
  const auto b = render_correspondences(drill(), kps, front_pose(3), {}, 32, noise, OcclusionConfig::heavy(), 9);
  EXPECT_TRUE(same(a, b));
  const auto c = render_correspondences(drill(), kps, front_pose(3), {}, 32, noise, OcclusionConfig::heavy(), 10);
  EXPECT_FALSE(same(a, c));
}

TEST(Render, SamplesStayInVisibleRegionWithoutRepeats) {
  const auto kps = farthest_point_sampling(drill(), 9);
  const auto pose = front_pose(5);
  const auto set = render_correspondences(drill(), kps, pose, {}, 64, {}, OcclusionConfig::heavy(), 5);
  std::vector<Vec2> projected;
  for (const auto& p : drill().points) projected.push_back(project(set.intrinsics, transform_point(pose, p)));
  const auto hull = convex_hull(projected);
  for (const auto& g : set.samples) {
    std::set<std::pair<double, double>> seen;
    for (const auto& s : g) {
      EXPECT_TRUE(inside_convex(hull, s.point()));
      EXPECT_EQ(s.x, std::round(s.x));
      EXPECT_TRUE(seen.insert({s.x, s.y}).second) << "pixel sampled twice";
    }
  }
}

TEST(Render, OutlierRateMatchesEmpirically) {
  // Noise-free inliers point exactly at the keypoint; anything else is an outlier.
  const auto kps = farthest_point_sampling(drill(), 9);
  std::size_t total = 0, outliers = 0;
  for (std::uint64_t s = 0; total < 20000; ++s) {
    const auto set = render_correspondences(drill(), kps, front_pose(100 + s), {}, 100, {0.0, 0.25, 0.0}, {}, s);
    for (std::size_t i = 0; i < set.n(); ++i)
      for (const auto& smp : set.samples[i]) {
        const Vec2 to_kp = (set.keypoints2d[i] - smp.point()).normalized();
        ++total;
        if (to_kp.dot(smp.direction()) < 1.0 - 1e-9) ++outliers;
      }
  }
  EXPECT_NEAR(static_cast<double>(outliers) / static_cast<double>(total), 0.25, 0.02);
}

TEST(Dataset, RecordRoundTripIsBitIdentical) {
  SceneRecord rec{42, "drill", test::random_scene(9, 20, 42, {0.05, 0.1, 0.3}, OcclusionConfig::light())};
  const std::string line = format_scene_record(rec);
  const auto back = parse_scene_record(line);
  EXPECT_EQ(back.scene_id, 42);
  EXPECT_TRUE(same(back.set, rec.set));
  EXPECT_EQ(back.set.keypoints3d.points, rec.set.keypoints3d.points);
  EXPECT_EQ(format_scene_record(back), line);
}

TEST(Dataset, GenerationCountsOcclusionAndDeterminism) {
  const auto dir = std::filesystem::temp_directory_path() / "sspe_test_dataset";
  std::filesystem::create_directories(dir);
  save_point_cloud(drill(), dir / "drill.xyz");
  DatasetConfig c;
  c.model = (dir / "drill.xyz").string();
  c.scenes = 10;
  c.m = 20;
  c.seed = 7;
  c.occlusion = OcclusionConfig::heavy();
  c.noise = {0.05, 0.1, 0.0};
  EXPECT_EQ(generate_dataset(c, dir / "a.jsonl"), 10u);
  c.threads = 3;
  EXPECT_EQ(generate_dataset(c, dir / "b.jsonl"), 10u);
  const auto a = io::read_text(dir / "a.jsonl");
  EXPECT_EQ(a, io::read_text(dir / "b.jsonl"));
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 10);
  for (const auto& rec : load_dataset(dir / "a.jsonl")) {
    EXPECT_GE(rec.set.occlusion_fraction, 0.3);
    EXPECT_LE(rec.set.occlusion_fraction, 0.9);
  }
  std::filesystem::remove_all(dir);
}

TEST(Dataset, UnwritablePathIsIoError) {
  DatasetConfig c;
  c.model = "";
  try {
    write_dataset({}, "/nonexistent/dir/out.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(Dataset, ConfigJsonRoundTrip) {
  DatasetConfig c;
  c.model = "x.xyz";
  c.scenes = 5;
  c.noise = {0.1, 0.2, 0.3};
  c.occlusion = {0.2, 0.4};
  c.poses.max_rotation_angle = 0.5;
  DatasetConfig d;
  merge_json(d, to_json(c));
  EXPECT_EQ(to_json(d), to_json(c));
}
