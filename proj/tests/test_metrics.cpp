#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "sspe/experiment.hpp"
#include "sspe/metrics.hpp"
#include "support/fixtures.hpp"

using namespace sspe;

namespace {

Pose random_pose(Rng& rng) {
  return {random_rotation(rng), Vec3(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1), uniform(rng, 0.5, 1.0))};
}

}  // namespace

TEST(Add, Examples) {
  const auto model = make_drill_model();
  const Pose p{quat_from_axis_angle(Vec3(1, 0, 0), 0.3), Vec3(0, 0, 1)};
  EXPECT_EQ(add_error(p, p, model), 0.0);
  EXPECT_NEAR(add_error({p.q, p.t + Vec3(0.01, 0, 0)}, p, model), 0.01, 1e-15);
}

TEST(Add, SymmetricInPoses) {
  Rng rng(1);
  const auto model = make_cube_model();
  for (int i = 0; i < 20; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    EXPECT_NEAR(add_error(a, b, model), add_error(b, a, model), 1e-14);
  }
}

TEST(Adds, PlateHalfTurnAboutAxisIsZero) {
  const auto plate = make_plate_model();
  const Pose gt{Quaternion::identity(), Vec3(0, 0, 1)};
  const Pose turned{quat_from_axis_angle(Vec3::UnitZ(), M_PI), gt.t};
  EXPECT_GT(add_error(turned, gt, plate), 0.01);
  EXPECT_LT(adds_error(turned, gt, plate), 1e-12);
  EXPECT_LT(pose_error(turned, gt, plate), 1e-12);
}

TEST(Adds, NeverExceedsAdd) {
  Rng rng(2);
  const auto model = make_drill_model();
  for (int i = 0; i < 50; ++i) {
    const Pose a = random_pose(rng), b = random_pose(rng);
    EXPECT_LE(adds_error(a, b, model), add_error(a, b, model));
  }
}

TEST(Accuracy, Examples) {
  const std::vector<double> errs{0.005, 0.02};
  EXPECT_DOUBLE_EQ(add01d_accuracy(errs, 0.1), 50.0);
  const std::vector<double> zeros(7, 0.0);
  EXPECT_DOUBLE_EQ(add01d_accuracy(zeros, 0.1), 100.0);
  EXPECT_DOUBLE_EQ(add01d_accuracy(std::vector<double>{}, 0.1, 3), 0.0);
  try {
    add01d_accuracy(std::vector<double>{}, 0.1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UndefinedMetric);
  }
}

TEST(Accuracy, ThresholdIsStrict) {
  const double d = 0.25;
  const double t = 0.1 * d;
  EXPECT_DOUBLE_EQ(add01d_accuracy(std::vector<double>{t}, d), 0.0);
  EXPECT_DOUBLE_EQ(add01d_accuracy(std::vector<double>{std::nextafter(t, 0.0)}, d), 100.0);
}

TEST(Accuracy, FailuresCountAsIncorrect) {
  EXPECT_DOUBLE_EQ(add01d_accuracy(std::vector<double>{0.0, 0.0}, 1.0, 2), 50.0);
}

TEST(Accuracy, MonotoneInErrors) {
  Rng rng(3);
  std::vector<double> e(40);
  for (auto& x : e) x = uniform(rng, 0.0, 0.02);
  double prev = add01d_accuracy(e, 0.1);
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] += 0.01;
    const double now = add01d_accuracy(e, 0.1);
    EXPECT_LE(now, prev);
    prev = now;
  }
}

TEST(Cluster, OneHotGroups) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(3, 12);
  std::vector<int> labels;
  for (Eigen::Index c = 0; c < 12; ++c) {
    v(c / 4, c) = 2.0;
    labels.push_back(static_cast<int>(c / 4));
  }
  const auto s = cluster_score(v, labels);
  EXPECT_DOUBLE_EQ(s.intra_sim, 1.0);
  EXPECT_DOUBLE_EQ(s.inter_sim, 0.0);
  EXPECT_DOUBLE_EQ(s.silhouette, 1.0);
}

TEST(Cluster, IdenticalFeatures) {
  const Eigen::MatrixXd v = Eigen::MatrixXd::Ones(4, 6);
  const std::vector<int> labels{0, 0, 1, 1, 2, 2};
  const auto s = cluster_score(v, labels);
  EXPECT_DOUBLE_EQ(s.intra_sim, 1.0);
  EXPECT_DOUBLE_EQ(s.inter_sim, 1.0);
  EXPECT_DOUBLE_EQ(s.silhouette, 0.0);
}

TEST(Cluster, RandomFeaturesNearZero) {
  Rng rng(4);
  Eigen::MatrixXd v(16, 1000);
  for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = gaussian(rng, 1.0);
  std::vector<int> labels(1000);
  for (int c = 0; c < 1000; ++c) labels[static_cast<std::size_t>(c)] = c % 10;
  EXPECT_LT(std::abs(cluster_score(v, labels).silhouette), 0.1);
}

TEST(Cluster, SilhouetteMatchesDirectFormula) {
  Rng rng(5);
  Eigen::MatrixXd v(3, 9);
  for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = gaussian(rng, 1.0);
  const std::vector<int> labels{0, 0, 0, 1, 1, 1, 2, 2, 2};
  auto dist = [&](int a, int b) { return 1.0 - v.col(a).dot(v.col(b)) / (v.col(a).norm() * v.col(b).norm()); };
  double total = 0.0;
  for (int a = 0; a < 9; ++a) {
    double own = 0.0;
    for (int b = 0; b < 9; ++b)
      if (b != a && labels[b] == labels[a]) own += dist(a, b);
    own /= 2.0;
    double other = std::numeric_limits<double>::infinity();
    for (int g = 0; g < 3; ++g) {
      if (g == labels[a]) continue;
      double s = 0.0;
      for (int b = 0; b < 9; ++b)
        if (labels[b] == g) s += dist(a, b);
      other = std::min(other, s / 3.0);
    }
    total += (other - own) / std::max(own, other);
  }
  EXPECT_NEAR(cluster_score(v, labels).silhouette, total / 9.0, 1e-12);
}

TEST(Cluster, ZeroFeatureIsDegenerate) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Ones(2, 4);
  v.col(1).setZero();
  const std::vector<int> labels{0, 0, 1, 1};
  EXPECT_THROW(cluster_score(v, labels), Error);
}

TEST(Export, RowsHeaderAndPrecision) {
  const auto path = std::filesystem::temp_directory_path() / "sspe_features.csv";
  Rng rng(6);
  Eigen::MatrixXd v(3, 900);
  for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = gaussian(rng, 1.0);
  std::vector<int> labels(900);
  for (int c = 0; c < 900; ++c) labels[static_cast<std::size_t>(c)] = c / 100;
  EXPECT_EQ(export_features(v, labels, path), 900u);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "label,f0,f1,f2");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    EXPECT_EQ(std::stoi(cell), labels[rows]);
    for (Eigen::Index d = 0; d < 3; ++d) {
      std::getline(ss, cell, ',');
      EXPECT_EQ(std::strtod(cell.c_str(), nullptr), v(d, static_cast<Eigen::Index>(rows)));
    }
    ++rows;
  }
  EXPECT_EQ(rows, 900u);
  EXPECT_EQ(export_features(Eigen::MatrixXd(3, 0), std::vector<int>{}, path), 0u);
  EXPECT_EQ(io::read_text(path), "label,f0,f1,f2\n");
  std::filesystem::remove(path);
}

TEST(Report, AccuracyRecomputesFromScenes) {
  const auto model = make_drill_model();
  std::vector<SceneRecord> recs;
  for (int i = 0; i < 6; ++i) recs.push_back({i, "drill", test::random_scene(9, 20, 300 + i, {0.1, 0.4, 0.5}, OcclusionConfig::heavy())});
  const auto rep = evaluate_baseline(recs, model, {}, 1);
  const auto j = io::Json::parse(format_report(rep));
  std::size_t correct = 0;
  for (const auto& s : j["scenes"])
    if (s["correct"].get<bool>()) ++correct;
  EXPECT_DOUBLE_EQ(j["accuracy"].get<double>(), 100.0 * correct / 6.0);
  EXPECT_EQ(j["metric"], "ADD");
}
