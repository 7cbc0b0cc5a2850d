#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "sspe/dataset.hpp"
#include "sspe/error.hpp"
#include "sspe/json_io.hpp"
#include "sspe/optim.hpp"
#include "sspe/posehead.hpp"

namespace sspe {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  PoseHeadParams params;
  TrainConfig train_config;
  std::uint64_t rng_seed = 0;
  std::size_t steps = 0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double pose = 0.0;
  double triplet = 0.0;
  double total = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> history;
};

inline const char* to_string(Mining m) { return m == Mining::Uniform ? "uniform" : "hardest-negative"; }

inline Mining parse_mining(const std::string& s) {
  if (s == "uniform") return Mining::Uniform;
  if (s == "hardest-negative") return Mining::HardestNegative;
  throw Error(ErrorCode::Config, "unknown mining strategy `" + s + "`");
}

// ---- JSON -----------------------------------------------------------------

inline std::string train_config_json(const TrainConfig& c) {
  return io::ObjectWriter()
      .num("alpha", c.alpha)
      .num("lambda_p", c.lambda_p)
      .num("lambda_t", c.lambda_t)
      .num("learning_rate", c.learning_rate)
      .integer("batch_size", static_cast<long long>(c.batch_size))
      .integer("epochs", static_cast<long long>(c.epochs))
      .raw("milestones", io::real_array(c.milestones))
      .raw("seed", std::to_string(c.seed))
      .str("mining", to_string(c.mining))
      .done();
}

inline void merge_json(TrainConfig& c, const io::Json& j) {
  try {
    c.alpha = j.value("alpha", c.alpha);
    c.lambda_p = j.value("lambda_p", c.lambda_p);
    c.lambda_t = j.value("lambda_t", c.lambda_t);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    if (j.contains("milestones")) c.milestones = j["milestones"].get<std::vector<double>>();
    c.seed = j.value("seed", c.seed);
    if (j.contains("mining")) c.mining = parse_mining(j["mining"].get<std::string>());
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::Config, std::string("train config: ") + e.what());
  }
}

inline std::string variant_json(const Variant& v) {
  return io::ObjectWriter()
      .str("name", v.name())
      .str("feature_mode", v.feature_mode == FeatureMode::Pairwise ? "pairwise" : "single")
      .str("aggregator", v.aggregator == Aggregator::Max ? "max" : "mean")
      .boolean("triplet", v.triplet_enabled)
      .done();
}

inline Variant parse_variant_json(const io::Json& j) {
  Variant v;
  const auto mode = j.at("feature_mode").get<std::string>();
  const auto agg = j.at("aggregator").get<std::string>();
  if (mode != "pairwise" && mode != "single") throw Error(ErrorCode::Config, "bad feature_mode " + mode);
  if (agg != "max" && agg != "mean") throw Error(ErrorCode::Config, "bad aggregator " + agg);
  v.feature_mode = mode == "pairwise" ? FeatureMode::Pairwise : FeatureMode::Single;
  v.aggregator = agg == "max" ? Aggregator::Max : Aggregator::Mean;
  v.triplet_enabled = j.at("triplet").get<bool>();
  return v;
}

inline std::string size_array(const std::vector<std::size_t>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out + "]";
}

inline std::string arch_json(const Architecture& a, const Variant& v) {
  const std::string widths =
      io::ObjectWriter().raw("phi_s", size_array(a.phi_s_widths(v))).raw("phi_g", size_array(a.phi_g_widths())).done();
  return io::ObjectWriter()
      .raw("widths", widths)
      .integer("n", static_cast<long long>(a.n))
      .integer("m", static_cast<long long>(a.m))
      .integer("D", static_cast<long long>(a.feature_dim))
      .num("coordinate_scale", a.coordinate_scale)
      .done();
}

inline std::string mlp_json(const Mlp& net) {
  std::string out = "[";
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(layer.w.size()));
    for (Eigen::Index r = 0; r < layer.w.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c) w.push_back(layer.w(r, c));
    out += (l ? "," : "") + io::ObjectWriter()
                                .integer("in", layer.in())
                                .integer("out", layer.out())
                                .raw("w", io::real_array(w))
                                .raw("b", io::real_array(std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size())))
                                .done();
  }
  return out + "]";
}

inline Mlp parse_mlp_json(const io::Json& j) {
  Mlp net;
  for (const auto& lj : j) {
    const auto in = lj.at("in").get<Eigen::Index>();
    const auto out = lj.at("out").get<Eigen::Index>();
    const auto w = lj.at("w").get<std::vector<double>>();
    const auto b = lj.at("b").get<std::vector<double>>();
    if (in < 1 || out < 1 || static_cast<Eigen::Index>(w.size()) != in * out || static_cast<Eigen::Index>(b.size()) != out) {
      throw Error(ErrorCode::Parse, "checkpoint layer has inconsistent sizes");
    }
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.w(r, c) = w[static_cast<std::size_t>(r * in + c)];
    for (Eigen::Index r = 0; r < out; ++r) layer.b[r] = b[static_cast<std::size_t>(r)];
    net.layers.push_back(std::move(layer));
  }
  return net;
}

inline std::string format_checkpoint(const Checkpoint& ck) {
  const auto& p = ck.params;
  return io::ObjectWriter()
             .integer("version", ck.version)
             .raw("variant", variant_json(p.variant))
             .raw("arch", arch_json(p.arch, p.variant))
             .raw("phi_s", mlp_json(p.phi_s))
             .raw("phi_g", mlp_json(p.phi_g))
             .raw("train_config", train_config_json(ck.train_config))
             .raw("rng_seed", std::to_string(ck.rng_seed))
             .integer("steps", static_cast<long long>(ck.steps))
             .done() +
         "\n";
}

inline Checkpoint parse_checkpoint(const std::string& text, const std::string& where = "<checkpoint>") {
  const io::Json j = io::parse_json(text, where);
  Checkpoint ck;
  try {
    ck.version = j.at("version").get<int>();
    if (ck.version != kCheckpointVersion) {
      throw Error(ErrorCode::Config, where + ": unsupported checkpoint version " + std::to_string(ck.version));
    }
    auto& p = ck.params;
    p.variant = parse_variant_json(j.at("variant"));
    const auto& a = j.at("arch");
    p.arch.n = a.at("n").get<std::size_t>();
    p.arch.m = a.at("m").get<std::size_t>();
    p.arch.feature_dim = a.at("D").get<std::size_t>();
    p.arch.coordinate_scale = a.at("coordinate_scale").get<double>();
    const auto ws = a.at("widths").at("phi_s").get<std::vector<std::size_t>>();
    const auto wg = a.at("widths").at("phi_g").get<std::vector<std::size_t>>();
    if (ws.size() < 2 || wg.size() < 2) throw Error(ErrorCode::Parse, where + ": bad widths");
    p.arch.phi_s_hidden.assign(ws.begin() + 1, ws.end() - 1);
    p.arch.phi_g_hidden.assign(wg.begin() + 1, wg.end() - 1);
    p.phi_s = parse_mlp_json(j.at("phi_s"));
    p.phi_g = parse_mlp_json(j.at("phi_g"));
    merge_json(ck.train_config, j.at("train_config"));
    ck.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    ck.steps = j.value("steps", std::size_t{0});
  } catch (const io::Json::exception& e) {
    throw Error(ErrorCode::Parse, where + ": " + e.what());
  }
  validate_params(ck.params);
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  io::write_text(path, format_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_text(path), path.string());
}

// ---- training -------------------------------------------------------------

struct SceneGradient {
  Gradients grads;
  ForwardResult fwd;
};

inline SceneGradient scene_gradient(const PoseHeadParams& params, const CorrespondenceSet& set,
                                    const TrainConfig& cfg, std::uint64_t triplet_seed) {
  ForwardResult fwd = forward(params, set);
  Gradients g = backward(params, set, fwd.features, fwd.cache, cfg, triplet_seed);
  return {std::move(g), std::move(fwd)};
}

// Minibatch Adam over in-memory scenes. Each epoch visits a fresh
// permutation; the learning rate is divided by 10 at each milestone fraction
// of the total step count.
inline TrainResult train_on_records(const std::vector<SceneRecord>& records, const TrainConfig& cfg,
                                    const Variant& variant, Architecture arch, std::ostream* log = nullptr) {
  cfg.validate();
  if (records.empty()) throw Error(ErrorCode::Config, "training set is empty");
  if (cfg.batch_size > records.size()) {
    throw Error(ErrorCode::Config, "batch size " + std::to_string(cfg.batch_size) + " exceeds dataset size " +
                                       std::to_string(records.size()));
  }
  arch.n = records.front().set.n();
  arch.m = records.front().set.m();
  for (const auto& r : records)
    if (r.set.n() != arch.n || r.set.m() != arch.m) throw Error(ErrorCode::Config, "scenes disagree on n or m");

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck.train_config = cfg;
  ck.rng_seed = cfg.seed;
  ck.params = init_params(arch, variant, cfg.seed);
  AdamState adam = AdamState::for_params(ck.params);

  const std::size_t n_scenes = records.size();
  const std::size_t steps_per_epoch = (n_scenes + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  std::vector<std::size_t> order(n_scenes);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, {0xe90c, epoch}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochLog entry{epoch, 0.0, 0.0, 0.0, 0.0};
    for (std::size_t start = 0; start < n_scenes; start += cfg.batch_size, ++step) {
      const std::size_t end = std::min(n_scenes, start + cfg.batch_size);
      const double lr = learning_rate_at(step, total_steps, cfg.learning_rate, cfg.milestones);
      Gradients batch = Gradients::zeros_like(ck.params);
      for (std::size_t b = start; b < end; ++b) {
        const auto& rec = records[order[b]];
        const auto sg = scene_gradient(ck.params, rec.set, cfg,
                                       derive_seed(cfg.seed, {0x7219, step, static_cast<std::uint64_t>(rec.scene_id)}));
        if (!std::isfinite(sg.grads.loss.total)) {
          throw Error(ErrorCode::NumericalFailure, "non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                                       std::to_string(step) + ", scene " + std::to_string(rec.scene_id));
        }
        batch.add_scaled(sg.grads, 1.0 / static_cast<double>(end - start));
        entry.pose += sg.grads.loss.pose;
        entry.triplet += sg.grads.loss.triplet;
        entry.total += sg.grads.loss.total;
      }
      adam_step(ck.params, batch, adam, lr);
      entry.learning_rate = lr;
    }
    entry.pose /= static_cast<double>(n_scenes);
    entry.triplet /= static_cast<double>(n_scenes);
    entry.total /= static_cast<double>(n_scenes);
    result.history.push_back(entry);
    if (log) {
      *log << "epoch " << epoch + 1 << "/" << cfg.epochs << "  L_p " << entry.pose << "  L_t " << entry.triplet
           << "  total " << entry.total << "  lr " << entry.learning_rate << '\n';
    }
  }
  ck.steps = step;
  return result;
}

inline TrainResult train(const std::filesystem::path& dataset_path, const TrainConfig& cfg, const Variant& variant,
                         const Architecture& arch = {}, std::ostream* log = nullptr) {
  return train_on_records(load_dataset(dataset_path), cfg, variant, arch, log);
}

inline Pose predict(const Checkpoint& ck, const CorrespondenceSet& set) {
  if (set.n() != ck.params.arch.n || set.m() != ck.params.arch.m) {
    throw Error(ErrorCode::Config, "checkpoint expects n=" + std::to_string(ck.params.arch.n) +
                                       ", m=" + std::to_string(ck.params.arch.m) + " but scene has n=" +
                                       std::to_string(set.n()) + ", m=" + std::to_string(set.m()));
  }
  return forward(ck.params, set).pose;
}

}  // namespace sspe
