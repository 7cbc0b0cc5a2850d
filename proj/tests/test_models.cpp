#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>

#include "sspe/models.hpp"
#include "sspe/rng.hpp"

using namespace sspe;

namespace {

ObjectModel cloud(std::vector<Vec3> pts, std::string name = "t") { return {std::move(name), false, std::move(pts)}; }

// Greedy max-min reference written independently of the library: explicit
// full scans, lowest index on ties.
std::vector<std::size_t> greedy_oracle(const std::vector<Vec3>& pts, std::size_t n) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  std::size_t first = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if ((pts[i] - c).norm() > (pts[first] - c).norm()) first = i;
  std::vector<std::size_t> chosen{first};
  while (chosen.size() < n) {
    std::size_t best = pts.size();
    double best_d = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (std::find(chosen.begin(), chosen.end(), i) != chosen.end()) continue;
      double d = std::numeric_limits<double>::infinity();
      for (auto j : chosen) d = std::min(d, (pts[i] - pts[j]).norm());
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    chosen.push_back(best);
  }
  return chosen;
}

}  // namespace

TEST(PointCloud, ParsesTetrahedron) {
  std::istringstream in("name tet\nsymmetric 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n");
  const auto m = parse_point_cloud(in);
  EXPECT_EQ(m.name, "tet");
  EXPECT_FALSE(m.symmetric);
  EXPECT_EQ(m.points.size(), 4u);
}

TEST(PointCloud, CommentsAndBlankLines) {
  std::istringstream in("# header\nname tet\n\nsymmetric 1\n0 0 0 # origin\n1 0 0\n0 1 0\n0 0 1\n");
  const auto m = parse_point_cloud(in);
  EXPECT_TRUE(m.symmetric);
  EXPECT_EQ(m.points.size(), 4u);
}

TEST(PointCloud, EmptyFileIsInsufficient) {
  std::istringstream in("");
  try {
    parse_point_cloud(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientGeometry);
  }
}

TEST(PointCloud, BadTokenNamesLine) {
  std::istringstream in("name tet\nsymmetric 0\n0 0 0\na b c\n");
  try {
    parse_point_cloud(in, "m.xyz");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Parse);
    EXPECT_NE(std::string(e.what()).find("m.xyz:4"), std::string::npos) << e.what();
  }
}

TEST(PointCloud, CoplanarIsInsufficient) {
  std::istringstream in("name sq\nsymmetric 0\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n");
  try {
    parse_point_cloud(in);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientGeometry);
  }
}

TEST(PointCloud, FileRoundTripIsExact) {
  const auto model = make_drill_model();
  const auto path = std::filesystem::temp_directory_path() / "sspe_test_drill.xyz";
  save_point_cloud(model, path);
  const auto back = load_point_cloud(path);
  EXPECT_EQ(back.name, model.name);
  EXPECT_EQ(back.symmetric, model.symmetric);
  ASSERT_EQ(back.points.size(), model.points.size());
  for (std::size_t i = 0; i < model.points.size(); ++i) EXPECT_EQ(back.points[i], model.points[i]);
  std::filesystem::remove(path);
}

TEST(PointCloud, MissingFileIsIoError) {
  try {
    load_point_cloud("/nonexistent/model.xyz");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(Fps, ThreeCollinearPoints) {
  const auto kps = farthest_point_sampling(cloud({{0, 0, 0}, {1, 0, 0}, {10, 0, 0}}), 2);
  ASSERT_EQ(kps.size(), 2u);
  EXPECT_EQ(kps.points[0], Vec3(10, 0, 0));
  EXPECT_EQ(kps.points[1], Vec3(0, 0, 0));
}

TEST(Fps, AllPointsIsPermutation) {
  Rng rng(2);
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.emplace_back(gaussian(rng, 1), gaussian(rng, 1), gaussian(rng, 1));
  auto kps = farthest_point_sampling(cloud(pts), pts.size());
  std::sort(kps.indices.begin(), kps.indices.end());
  std::vector<std::size_t> all(pts.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  EXPECT_EQ(kps.indices, all);
}

TEST(Fps, NineDistinctModelPoints) {
  const auto model = make_drill_model();
  const auto kps = farthest_point_sampling(model, 9);
  ASSERT_EQ(kps.size(), 9u);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(kps.points[i], model.points[kps.indices[i]]);
    for (std::size_t j = 0; j < i; ++j) EXPECT_NE(kps.indices[i], kps.indices[j]);
  }
}

TEST(Fps, TooManyIsSizeError) {
  try {
    farthest_point_sampling(cloud({{0, 0, 0}, {1, 0, 0}}), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Size);
  }
}

TEST(Fps, TiesGoToLowestIndex) {
  // Square corners around the centroid: all equally far.
  const auto kps = farthest_point_sampling(cloud({{1, 1, 0}, {-1, 1, 0}, {-1, -1, 0}, {1, -1, 0}}), 3);
  EXPECT_EQ(kps.indices[0], 0u);
  EXPECT_EQ(kps.indices[1], 2u);
  EXPECT_EQ(kps.indices[2], 1u);
}

TEST(Fps, FirstPointRule) {
  const auto kps = farthest_point_sampling(cloud({{0, 0, 0}, {1, 0, 0}, {10, 0, 0}}), 2, StartRule::FirstPoint);
  EXPECT_EQ(kps.indices[0], 0u);
  EXPECT_EQ(kps.indices[1], 2u);
}

TEST(Fps, MatchesGreedyOracleOnSmallClouds) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t size = 2 + trial % 11;
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < size; ++i) pts.emplace_back(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    for (std::size_t n = 1; n <= size; ++n) EXPECT_EQ(farthest_point_sampling(cloud(pts), n).indices, greedy_oracle(pts, n));
  }
}

TEST(Fps, PairSpansAtLeastHalfTheDiameter) {
  Rng rng(78);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec3> pts;
    for (int i = 0; i < 12; ++i) pts.emplace_back(gaussian(rng, 1), gaussian(rng, 1), gaussian(rng, 1));
    const auto kps = farthest_point_sampling(cloud(pts), 2);
    EXPECT_GE((kps.points[0] - kps.points[1]).norm(), model_diameter(pts) / 2.0);
  }
}

TEST(Diameter, Examples) {
  EXPECT_DOUBLE_EQ(model_diameter(std::vector<Vec3>{{0, 0, 0}, {2, 0, 0}}), 2.0);
  std::vector<Vec3> cube;
  for (int i = 0; i < 8; ++i) cube.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  EXPECT_NEAR(model_diameter(cube), std::sqrt(3.0), 1e-15);
  EXPECT_THROW(model_diameter(std::vector<Vec3>{{0, 0, 0}}), Error);
}

TEST(Diameter, MatchesBruteForce) {
  Rng rng(4);
  std::vector<Vec3> pts;
  for (int i = 0; i < 50; ++i) pts.emplace_back(gaussian(rng, 1), gaussian(rng, 1), gaussian(rng, 1));
  double best = 0.0;
  for (const auto& a : pts)
    for (const auto& b : pts) best = std::max(best, (a - b).norm());
  EXPECT_EQ(model_diameter(pts), best);
}

TEST(ProceduralModels, AreValid) {
  for (const auto& m : {make_drill_model(), make_plate_model(), make_cube_model()}) {
    EXPECT_NO_THROW(validate_model_geometry(m.points)) << m.name;
    EXPECT_GT(model_diameter(m), 0.0);
  }
  EXPECT_FALSE(make_drill_model().symmetric);
  EXPECT_TRUE(make_plate_model().symmetric);
}
