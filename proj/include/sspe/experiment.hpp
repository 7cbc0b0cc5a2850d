#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "sspe/baseline.hpp"
#include "sspe/dataset.hpp"
#include "sspe/metrics.hpp"
#include "sspe/training.hpp"

namespace sspe {

inline EvalReport make_report(const std::string& estimator, const std::string& dataset, const ObjectModel& model) {
  EvalReport r;
  r.estimator = estimator;
  r.dataset = dataset;
  r.object = model.name;
  r.metric = model.symmetric ? "ADD-S" : "ADD";
  r.diameter = model_diameter(model);
  return r;
}

inline EvalReport evaluate_checkpoint(const Checkpoint& ck, const std::vector<SceneRecord>& records,
                                      const ObjectModel& model, const std::string& dataset = "") {
  EvalReport r = make_report(ck.params.variant.name(), dataset, model);
  for (const auto& rec : records) {
    SceneResult s{rec.scene_id, std::nullopt, ""};
    try {
      s.error = pose_error(predict(ck, rec.set), rec.set.pose_gt, model);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Config) throw;
      s.failure = e.what();
    }
    r.scenes.push_back(std::move(s));
  }
  r.finalize();
  return r;
}

// Each scene's voting stream is derived from (seed, scene id).
inline EvalReport evaluate_baseline(const std::vector<SceneRecord>& records, const ObjectModel& model,
                                    const VotingConfig& cfg, std::uint64_t seed, const std::string& dataset = "") {
  EvalReport r = make_report("baseline", dataset, model);
  for (const auto& rec : records) {
    SceneResult s{rec.scene_id, std::nullopt, ""};
    try {
      s.error = pose_error(estimate_pose_baseline(rec.set, cfg, derive_seed(seed, {static_cast<std::uint64_t>(rec.scene_id)})),
                           rec.set.pose_gt, model);
    } catch (const Error& e) {
      s.failure = e.what();
    }
    r.scenes.push_back(std::move(s));
  }
  r.finalize();
  return r;
}

// Cluster statistics of a checkpoint's features, averaged over scenes.
inline ClusterScore mean_cluster_score(const Checkpoint& ck, const std::vector<SceneRecord>& records,
                                       std::size_t max_scenes = 0) {
  ClusterScore mean;
  std::size_t used = 0;
  for (const auto& rec : records) {
    if (max_scenes && used == max_scenes) break;
    const auto fwd = forward(ck.params, rec.set);
    const auto s = cluster_score(fwd.features);
    mean.intra_sim += s.intra_sim;
    mean.inter_sim += s.inter_sim;
    mean.silhouette += s.silhouette;
    ++used;
  }
  if (used == 0) throw Error(ErrorCode::UndefinedMetric, "no scenes to score");
  mean.intra_sim /= static_cast<double>(used);
  mean.inter_sim /= static_cast<double>(used);
  mean.silhouette /= static_cast<double>(used);
  return mean;
}

struct AblationEntry {
  std::string variant;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double mean_error = 0.0;
  std::size_t failures = 0;
  ClusterScore cluster;
  double final_pose_loss = 0.0;
};

struct AblationConfig {
  std::vector<Variant> variants{Variant::sspe_r(), Variant::sspe_rp(), Variant::sspe_lc(), Variant::sspe_ours()};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  TrainConfig train;
  Architecture arch;
  std::size_t cluster_scenes = 100;  // 0 = all test scenes
};

struct AblationResult {
  std::vector<AblationEntry> entries;

  std::vector<AblationEntry> for_variant(const std::string& name) const {
    std::vector<AblationEntry> out;
    for (const auto& e : entries)
      if (e.variant == name) out.push_back(e);
    return out;
  }
  double mean_accuracy(const std::string& name) const {
    const auto rows = for_variant(name);
    double s = 0.0;
    for (const auto& r : rows) s += r.accuracy;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
  }
  double mean_silhouette(const std::string& name) const {
    const auto rows = for_variant(name);
    double s = 0.0;
    for (const auto& r : rows) s += r.cluster.silhouette;
    return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
  }
};

inline AblationResult run_ablation(const std::vector<SceneRecord>& train_set, const std::vector<SceneRecord>& test_set,
                                   const ObjectModel& model, const AblationConfig& cfg, std::ostream* log = nullptr) {
  AblationResult out;
  for (const auto& variant : cfg.variants) {
    for (std::uint64_t seed : cfg.seeds) {
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      const auto trained = train_on_records(train_set, tc, variant, cfg.arch);
      const auto report = evaluate_checkpoint(trained.checkpoint, test_set, model);
      AblationEntry e;
      e.variant = variant.name();
      e.seed = seed;
      e.accuracy = report.accuracy;
      e.failures = report.failures;
      const auto errs = report.errors();
      for (double v : errs) e.mean_error += v;
      if (!errs.empty()) e.mean_error /= static_cast<double>(errs.size());
      e.cluster = mean_cluster_score(trained.checkpoint, test_set, cfg.cluster_scenes);
      e.final_pose_loss = trained.history.empty() ? 0.0 : trained.history.back().pose;
      if (log) {
        *log << e.variant << " seed " << seed << ": ADD0.1d " << e.accuracy << "%  mean error " << e.mean_error
             << "  silhouette " << e.cluster.silhouette << "  final L_p " << e.final_pose_loss << std::endl;
      }
      out.entries.push_back(e);
    }
  }
  return out;
}

inline std::string format_ablation(const AblationResult& r) {
  std::string rows = "[";
  for (std::size_t i = 0; i < r.entries.size(); ++i) {
    const auto& e = r.entries[i];
    rows += (i ? "," : "") + io::ObjectWriter()
                                 .str("variant", e.variant)
                                 .raw("seed", std::to_string(e.seed))
                                 .num("accuracy", e.accuracy)
                                 .num("mean_error", e.mean_error)
                                 .integer("failures", static_cast<long long>(e.failures))
                                 .num("intra_sim", e.cluster.intra_sim)
                                 .num("inter_sim", e.cluster.inter_sim)
                                 .num("silhouette", e.cluster.silhouette)
                                 .num("final_pose_loss", e.final_pose_loss)
                                 .done();
  }
  rows += "]";
  std::vector<std::string> names;
  for (const auto& e : r.entries)
    if (std::find(names.begin(), names.end(), e.variant) == names.end()) names.push_back(e.variant);
  io::ObjectWriter means;
  for (const auto& n : names) {
    means.raw(n, io::ObjectWriter().num("accuracy", r.mean_accuracy(n)).num("silhouette", r.mean_silhouette(n)).done());
  }
  return io::ObjectWriter().raw("runs", rows).raw("means", means.done()).done() + "\n";
}

}  // namespace sspe
