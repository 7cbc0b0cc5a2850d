#pragma once

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "sspe/baseline.hpp"
#include "sspe/dataset.hpp"
#include "sspe/experiment.hpp"
#include "sspe/json_io.hpp"
#include "sspe/metrics.hpp"
#include "sspe/models.hpp"
#include "sspe/training.hpp"

#ifndef SSPE_VERSION
#define SSPE_VERSION "0.0.0"
#endif

// Batch entry points. Exit codes: 0 success, 1 usage error, 2 runtime failure.
// Every command that writes an artifact also writes <artifact>.manifest.json
// holding the resolved configuration needed to reproduce it.
namespace sspe::cli {

inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kFailure = 2;

inline OcclusionConfig parse_occlusion(const std::string& spec) {
  if (spec == "light") return OcclusionConfig::light();
  if (spec == "heavy") return OcclusionConfig::heavy();
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--occ", "expected light, heavy or MIN:MAX");
  OcclusionConfig occ;
  try {
    occ.min_fraction = std::stod(spec.substr(0, colon));
    occ.max_fraction = std::stod(spec.substr(colon + 1));
  } catch (const std::exception&) {
    throw CLI::ValidationError("--occ", "cannot parse `" + spec + "`");
  }
  return occ;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline void write_manifest(const std::filesystem::path& artifact, const std::string& command, std::uint64_t seed,
                           const io::Json& config, const io::Json& inputs) {
  io::Json m;
  m["command"] = command;
  m["tool_version"] = SSPE_VERSION;
  m["seed"] = seed;
  m["config"] = config;
  m["inputs"] = inputs;
  m["output"] = artifact.string();
  io::write_text(artifact.string() + ".manifest.json", m.dump(2) + "\n");
}

// A --config file is either a bare config object or a run manifest.
inline io::Json load_config(const std::string& path) {
  io::Json j = io::parse_json(io::read_text(path), path);
  if (j.is_object() && j.contains("command") && j.contains("config")) return j["config"];
  if (!j.is_object()) throw Error(ErrorCode::Config, path + ": config must be a JSON object");
  return j;
}

struct ArchFlags {
  std::size_t feature_dim = 128;
  std::vector<std::size_t> phi_s_hidden{64, 128};
  std::vector<std::size_t> phi_g_hidden{512, 256};
  double coordinate_scale = Architecture{}.coordinate_scale;

  CLI::App* app = nullptr;

  void add_to(CLI::App* a) {
    app = a;
    app->add_option("--feature-dim", feature_dim, "Width D of the pairwise/single features")->capture_default_str();
    app->add_option("--phi-s-hidden", phi_s_hidden, "Hidden widths of the shared feature network")->delimiter(',')->capture_default_str();
    app->add_option("--phi-g-hidden", phi_g_hidden, "Hidden widths of the pose regression network")->delimiter(',')->capture_default_str();
    app->add_option("--coordinate-scale", coordinate_scale, "Gain on normalized pixel coordinates")->capture_default_str();
  }
  // Fields of a config's "arch" object, unless set on the command line.
  void merge(const io::Json& j) {
    if (!j.contains("arch")) return;
    const auto& a = j["arch"];
    try {
      if (!app->count("--feature-dim")) feature_dim = a.value("feature_dim", feature_dim);
      if (!app->count("--phi-s-hidden")) phi_s_hidden = a.value("phi_s_hidden", phi_s_hidden);
      if (!app->count("--phi-g-hidden")) phi_g_hidden = a.value("phi_g_hidden", phi_g_hidden);
      if (!app->count("--coordinate-scale")) coordinate_scale = a.value("coordinate_scale", coordinate_scale);
    } catch (const io::Json::exception& e) {
      throw Error(ErrorCode::Config, std::string("arch config: ") + e.what());
    }
  }
  Architecture arch() const {
    Architecture a;
    a.feature_dim = feature_dim;
    a.phi_s_hidden = phi_s_hidden;
    a.phi_g_hidden = phi_g_hidden;
    a.coordinate_scale = coordinate_scale;
    return a;
  }
  io::Json json() const {
    return {{"feature_dim", feature_dim}, {"phi_s_hidden", phi_s_hidden}, {"phi_g_hidden", phi_g_hidden},
            {"coordinate_scale", coordinate_scale}};
  }
};

struct TrainFlags {
  TrainConfig cfg;
  std::string mining = "uniform";
  std::string config_path;
  CLI::App* app = nullptr;

  void add_to(CLI::App* a, bool seed_required) {
    app = a;
    auto* seed = a->add_option("--seed", cfg.seed, "Master seed");
    if (seed_required) seed->required();
    a->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    a->add_option("--batch", cfg.batch_size, "Batch size")->capture_default_str();
    a->add_option("--lr", cfg.learning_rate, "Base learning rate")->capture_default_str();
    a->add_option("--alpha", cfg.alpha, "Triplet margin")->capture_default_str();
    a->add_option("--lambda-p", cfg.lambda_p, "Pose loss weight")->capture_default_str();
    a->add_option("--lambda-t", cfg.lambda_t, "Triplet loss weight")->capture_default_str();
    a->add_option("--milestones", cfg.milestones, "LR drop points as fractions of all steps")->delimiter(',');
    a->add_option("--mining", mining, "Triplet mining: uniform | hardest-negative")->capture_default_str();
    a->add_option("--config", config_path, "JSON file with training fields (flags given explicitly win)");
  }

  // Config file first, then any flag the user actually passed.
  TrainConfig resolve() const {
    TrainConfig out = cfg;
    if (!config_path.empty()) {
      merge_json(out, load_config(config_path));
      auto given = [&](const char* flag) { return app->count(flag) > 0; };
      if (given("--seed")) out.seed = cfg.seed;
      if (given("--epochs")) out.epochs = cfg.epochs;
      if (given("--batch")) out.batch_size = cfg.batch_size;
      if (given("--lr")) out.learning_rate = cfg.learning_rate;
      if (given("--alpha")) out.alpha = cfg.alpha;
      if (given("--lambda-p")) out.lambda_p = cfg.lambda_p;
      if (given("--lambda-t")) out.lambda_t = cfg.lambda_t;
      if (given("--milestones")) out.milestones = cfg.milestones;
      if (given("--mining")) out.mining = parse_mining(mining);
    } else {
      out.mining = parse_mining(mining);
    }
    return out;
  }
};

inline io::Json train_config_to_json(const TrainConfig& c) { return io::Json::parse(train_config_json(c)); }

inline void print_ablation_table(std::ostream& out, const AblationResult& r, const std::vector<Variant>& variants,
                                 const std::vector<std::uint64_t>& seeds) {
  out << std::left << std::setw(12) << "variant";
  for (auto s : seeds) out << std::right << std::setw(10) << ("seed " + std::to_string(s));
  out << std::setw(10) << "mean" << std::setw(12) << "silhouette" << '\n';
  out << std::fixed << std::setprecision(2);
  for (const auto& v : variants) {
    const auto rows = r.for_variant(v.name());
    out << std::left << std::setw(12) << v.name() << std::right;
    for (const auto& e : rows) out << std::setw(10) << e.accuracy;
    out << std::setw(10) << r.mean_accuracy(v.name()) << std::setw(12) << std::setprecision(4)
        << r.mean_silhouette(v.name()) << std::setprecision(2) << '\n';
  }
  out << std::defaultfloat;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Pose-head toolkit: synthetic correspondences, training, evaluation and baselines", "sspe"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SSPE_VERSION);
  app.failure_message(CLI::FailureMessage::help);

  // gen-data
  DatasetConfig gen;
  std::string gen_occ = "0:0", gen_out, gen_config;
  std::vector<double> gen_tmin, gen_tmax;
  auto* gen_cmd = app.add_subcommand("gen-data", "Simulate a JSONL dataset of direction-vector scenes");
  gen_cmd->add_option("--model", gen.model, "XYZ model file");
  gen_cmd->add_option("--scenes", gen.scenes, "Number of scenes")->capture_default_str();
  gen_cmd->add_option("--occ", gen_occ, "Occlusion range MIN:MAX, or preset light | heavy")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Master seed")->required();
  gen_cmd->add_option("--out", gen_out, "Output JSONL path")->required();
  gen_cmd->add_option("--m", gen.m, "Direction samples per keypoint")->capture_default_str();
  gen_cmd->add_option("--n", gen.n_keypoints, "Number of FPS keypoints")->capture_default_str();
  gen_cmd->add_option("--angle-sigma", gen.noise.angle_sigma, "Direction noise (radians)")->capture_default_str();
  gen_cmd->add_option("--outlier-rate", gen.noise.outlier_rate, "Outlier probability")->capture_default_str();
  gen_cmd->add_option("--pixel-jitter", gen.noise.pixel_jitter, "Sample location noise (pixels)")->capture_default_str();
  gen_cmd->add_option("--max-rotation", gen.poses.max_rotation_angle, "Rotation range (radians); >= pi is uniform SO(3)");
  gen_cmd->add_option("--translation-min", gen_tmin, "x,y,z lower corner of the translation box")->delimiter(',')->expected(3);
  gen_cmd->add_option("--translation-max", gen_tmax, "x,y,z upper corner of the translation box")->delimiter(',')->expected(3);
  gen_cmd->add_option("--first-scene-id", gen.first_scene_id, "Id of the first scene")->capture_default_str();
  gen_cmd->add_option("--threads", gen.threads, "Worker threads (output is identical for any count)")->capture_default_str();
  gen_cmd->add_option("--config", gen_config, "JSON file with dataset fields (flags given explicitly win)");

  // keypoints
  std::string kp_model, kp_out, kp_start = "centroid";
  std::size_t kp_n = 9;
  auto* kp_cmd = app.add_subcommand("keypoints", "Select 3D keypoints by farthest point sampling");
  kp_cmd->add_option("--model", kp_model, "XYZ model file")->required();
  kp_cmd->add_option("--n", kp_n, "Number of keypoints")->capture_default_str();
  kp_cmd->add_option("--start", kp_start, "First point: centroid (farthest from centroid) | first")->capture_default_str();
  kp_cmd->add_option("--out", kp_out, "Output JSON path")->required();

  // train
  std::string tr_data, tr_variant = "sspe-ours", tr_out;
  bool tr_quiet = false;
  TrainFlags tr_flags;
  ArchFlags tr_arch;
  auto* tr_cmd = app.add_subcommand("train", "Train a pose head on a JSONL dataset");
  tr_cmd->add_option("--data", tr_data, "Training JSONL")->required();
  tr_cmd->add_option("--variant", tr_variant, "sspe-r | sspe-rp | sspe-lc | sspe-ours")->capture_default_str();
  tr_cmd->add_option("--out", tr_out, "Checkpoint path")->required();
  tr_cmd->add_flag("--quiet", tr_quiet, "Do not print per-epoch losses");
  tr_flags.add_to(tr_cmd, true);
  tr_arch.add_to(tr_cmd);

  // eval
  std::string ev_ckpt, ev_data, ev_model, ev_out;
  auto* ev_cmd = app.add_subcommand("eval", "Evaluate a checkpoint with ADD / ADD-S");
  ev_cmd->add_option("--checkpoint", ev_ckpt, "Checkpoint JSON")->required();
  ev_cmd->add_option("--data", ev_data, "Test JSONL")->required();
  ev_cmd->add_option("--model", ev_model, "XYZ model file")->required();
  ev_cmd->add_option("--out", ev_out, "Report JSON path")->required();

  // baseline
  std::string bl_data, bl_model, bl_out;
  std::uint64_t bl_seed = 0;
  VotingConfig bl_cfg;
  auto* bl_cmd = app.add_subcommand("baseline", "Voting + RANSAC + PnP baseline");
  bl_cmd->add_option("--data", bl_data, "Test JSONL")->required();
  bl_cmd->add_option("--model", bl_model, "XYZ model file")->required();
  bl_cmd->add_option("--out", bl_out, "Report JSON path")->required();
  bl_cmd->add_option("--seed", bl_seed, "Voting seed")->capture_default_str();
  bl_cmd->add_option("--hypotheses", bl_cfg.hypothesis_count, "Random pairs per keypoint")->capture_default_str();
  bl_cmd->add_option("--inlier-cos", bl_cfg.inlier_cos_threshold, "Inlier cosine threshold")->capture_default_str();
  bl_cmd->add_option("--min-inlier-fraction", bl_cfg.min_inlier_fraction, "Voting failure threshold")->capture_default_str();

  // ablate
  std::string ab_variants = "sspe-r,sspe-rp,sspe-lc,sspe-ours", ab_train, ab_test, ab_model, ab_out;
  std::size_t ab_seeds = 3, ab_cluster = 100;
  TrainFlags ab_flags;
  ArchFlags ab_arch;
  auto* ab_cmd = app.add_subcommand("ablate", "Train and evaluate several variants over several seeds");
  ab_cmd->add_option("--variants", ab_variants, "Comma-separated variant names")->capture_default_str();
  ab_cmd->add_option("--train", ab_train, "Training JSONL")->required();
  ab_cmd->add_option("--test", ab_test, "Test JSONL")->required();
  ab_cmd->add_option("--model", ab_model, "XYZ model file (default: procedural drill matching the dataset)");
  ab_cmd->add_option("--seeds", ab_seeds, "Number of seeds (0..N-1)")->capture_default_str();
  ab_cmd->add_option("--cluster-scenes", ab_cluster, "Test scenes used for the cluster score (0 = all)")->capture_default_str();
  ab_cmd->add_option("--out", ab_out, "Ablation JSON path");
  ab_flags.add_to(ab_cmd, false);
  ab_arch.add_to(ab_cmd);

  // export-features
  std::string ex_ckpt, ex_data, ex_out;
  std::size_t ex_scene = 0;
  auto* ex_cmd = app.add_subcommand("export-features", "Write one scene's features as CSV");
  ex_cmd->add_option("--checkpoint", ex_ckpt, "Checkpoint JSON")->required();
  ex_cmd->add_option("--data", ex_data, "JSONL dataset")->required();
  ex_cmd->add_option("--scene", ex_scene, "Line index of the scene in the dataset")->capture_default_str();
  ex_cmd->add_option("--out", ex_out, "CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen_cmd->parsed()) {
      if (!gen_config.empty()) {
        DatasetConfig from_file = gen;
        merge_json(from_file, load_config(gen_config));
        // Explicit flags override the file.
        if (gen_cmd->count("--model")) from_file.model = gen.model;
        if (gen_cmd->count("--scenes")) from_file.scenes = gen.scenes;
        if (gen_cmd->count("--m")) from_file.m = gen.m;
        if (gen_cmd->count("--n")) from_file.n_keypoints = gen.n_keypoints;
        if (gen_cmd->count("--angle-sigma")) from_file.noise.angle_sigma = gen.noise.angle_sigma;
        if (gen_cmd->count("--outlier-rate")) from_file.noise.outlier_rate = gen.noise.outlier_rate;
        if (gen_cmd->count("--pixel-jitter")) from_file.noise.pixel_jitter = gen.noise.pixel_jitter;
        if (gen_cmd->count("--max-rotation")) from_file.poses.max_rotation_angle = gen.poses.max_rotation_angle;
        if (gen_cmd->count("--first-scene-id")) from_file.first_scene_id = gen.first_scene_id;
        from_file.seed = gen.seed;
        from_file.threads = gen.threads;
        if (!gen_cmd->count("--occ")) gen_occ.clear();
        gen = from_file;
      }
      if (!gen_occ.empty()) gen.occlusion = parse_occlusion(gen_occ);
      if (!gen_tmin.empty()) gen.poses.translation_min = Vec3(gen_tmin[0], gen_tmin[1], gen_tmin[2]);
      if (!gen_tmax.empty()) gen.poses.translation_max = Vec3(gen_tmax[0], gen_tmax[1], gen_tmax[2]);
      if (gen.model.empty()) throw CLI::RequiredError("--model");
      const std::size_t count = generate_dataset(gen, gen_out);
      write_manifest(gen_out, "gen-data", gen.seed, to_json(gen), {{"model", gen.model}});
      out << "wrote " << count << " scenes to " << gen_out << '\n';
      return kOk;
    }

    if (kp_cmd->parsed()) {
      if (kp_start != "centroid" && kp_start != "first") throw CLI::ValidationError("--start", "centroid or first");
      const auto model = load_point_cloud(kp_model);
      const auto kps = farthest_point_sampling(model, kp_n,
                                               kp_start == "first" ? StartRule::FirstPoint : StartRule::FarthestFromCentroid);
      std::string pts = "[";
      for (std::size_t i = 0; i < kps.size(); ++i) {
        pts += (i ? "," : "") + io::real_array(std::vector<double>{kps.points[i].x(), kps.points[i].y(), kps.points[i].z()});
      }
      std::string idx_json = "[";
      for (std::size_t i = 0; i < kps.indices.size(); ++i) idx_json += (i ? "," : "") + std::to_string(kps.indices[i]);
      io::write_text(kp_out, io::ObjectWriter()
                                 .str("model", kps.model_name)
                                 .integer("n", static_cast<long long>(kps.size()))
                                 .num("diameter", model_diameter(model))
                                 .raw("indices", idx_json + "]")
                                 .raw("points", pts + "]")
                                 .done() +
                                 "\n");
      write_manifest(kp_out, "keypoints", 0, {{"n", kp_n}, {"start", kp_start}}, {{"model", kp_model}});
      out << "selected " << kps.size() << " keypoints from " << model.points.size() << " points\n";
      return kOk;
    }

    if (tr_cmd->parsed()) {
      const TrainConfig cfg = tr_flags.resolve();
      if (!tr_flags.config_path.empty()) {
        const auto j = load_config(tr_flags.config_path);
        tr_arch.merge(j);
        if (!tr_cmd->count("--variant") && j.contains("variant")) tr_variant = j["variant"].get<std::string>();
      }
      const Variant variant = Variant::parse(tr_variant);
      const auto result = train(tr_data, cfg, variant, tr_arch.arch(), tr_quiet ? nullptr : &out);
      save_checkpoint(result.checkpoint, tr_out);
      io::Json config = train_config_to_json(cfg);
      config["variant"] = variant.name();
      config["arch"] = tr_arch.json();
      write_manifest(tr_out, "train", cfg.seed, config, {{"data", tr_data}});
      out << "saved " << tr_out << " after " << result.checkpoint.steps << " steps\n";
      return kOk;
    }

    if (ev_cmd->parsed()) {
      const auto ck = load_checkpoint(ev_ckpt);
      const auto model = load_point_cloud(ev_model);
      const auto records = load_dataset(ev_data);
      const auto report = evaluate_checkpoint(ck, records, model, ev_data);
      io::write_text(ev_out, format_report(report));
      write_manifest(ev_out, "eval", ck.rng_seed, {}, {{"checkpoint", ev_ckpt}, {"data", ev_data}, {"model", ev_model}});
      out << report.metric << "0.1d accuracy " << report.accuracy << "% over " << report.scenes.size() << " scenes ("
          << report.failures << " failures)\n";
      return kOk;
    }

    if (bl_cmd->parsed()) {
      const auto model = load_point_cloud(bl_model);
      const auto records = load_dataset(bl_data);
      const auto report = evaluate_baseline(records, model, bl_cfg, bl_seed, bl_data);
      io::write_text(bl_out, format_report(report));
      write_manifest(bl_out, "baseline", bl_seed,
                     {{"hypothesis_count", bl_cfg.hypothesis_count},
                      {"inlier_cos_threshold", bl_cfg.inlier_cos_threshold},
                      {"min_inlier_fraction", bl_cfg.min_inlier_fraction}},
                     {{"data", bl_data}, {"model", bl_model}});
      out << "baseline " << report.metric << "0.1d accuracy " << report.accuracy << "% over " << report.scenes.size()
          << " scenes (" << report.failures << " failures)\n";
      return kOk;
    }

    if (ab_cmd->parsed()) {
      AblationConfig cfg;
      cfg.train = ab_flags.resolve();
      if (!ab_flags.config_path.empty()) ab_arch.merge(load_config(ab_flags.config_path));
      cfg.arch = ab_arch.arch();
      cfg.cluster_scenes = ab_cluster;
      cfg.variants.clear();
      for (const auto& v : split(ab_variants, ',')) cfg.variants.push_back(Variant::parse(v));
      if (cfg.variants.empty()) throw CLI::ValidationError("--variants", "no variants given");
      cfg.seeds.clear();
      for (std::size_t s = 0; s < ab_seeds; ++s) cfg.seeds.push_back(cfg.train.seed + s);
      const auto train_set = load_dataset(ab_train);
      const auto test_set = load_dataset(ab_test);
      const ObjectModel model = ab_model.empty() ? make_drill_model() : load_point_cloud(ab_model);
      const auto result = run_ablation(train_set, test_set, model, cfg, &err);
      print_ablation_table(out, result, cfg.variants, cfg.seeds);
      if (!ab_out.empty()) {
        io::write_text(ab_out, format_ablation(result));
        io::Json config = train_config_to_json(cfg.train);
        config["variants"] = ab_variants;
        config["seeds"] = ab_seeds;
        config["arch"] = ab_arch.json();
        config["cluster_scenes"] = ab_cluster;
        write_manifest(ab_out, "ablate", cfg.train.seed, config,
                       {{"train", ab_train}, {"test", ab_test}, {"model", ab_model}});
      }
      return kOk;
    }

    if (ex_cmd->parsed()) {
      const auto ck = load_checkpoint(ex_ckpt);
      const auto records = load_dataset(ex_data);
      if (ex_scene >= records.size()) {
        throw Error(ErrorCode::Size, "scene index " + std::to_string(ex_scene) + " out of range");
      }
      const auto fwd = forward(ck.params, records[ex_scene].set);
      const std::size_t rows = export_features(fwd.features, ex_out);
      write_manifest(ex_out, "export-features", ck.rng_seed, {{"scene", ex_scene}},
                     {{"checkpoint", ex_ckpt}, {"data", ex_data}});
      out << "wrote " << rows << " feature rows to " << ex_out << '\n';
      return kOk;
    }
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

}  // namespace sspe::cli
