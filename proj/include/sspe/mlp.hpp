#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <vector>

#include "sspe/error.hpp"
#include "sspe/rng.hpp"

namespace sspe {

struct DenseLayer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;  // out

  Eigen::Index in() const { return w.cols(); }
  Eigen::Index out() const { return w.rows(); }
};

// Fully connected network with rectifiers between layers and a linear output.
// Samples are matrix columns.
struct Mlp {
  std::vector<DenseLayer> layers;

  // widths = {in, hidden..., out}
  static Mlp zeros(const std::vector<std::size_t>& widths) {
    if (widths.size() < 2) throw Error(ErrorCode::Config, "an MLP needs at least input and output widths");
    Mlp net;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      if (widths[l] == 0 || widths[l + 1] == 0) throw Error(ErrorCode::Config, "layer widths must be positive");
      const auto in = static_cast<Eigen::Index>(widths[l]);
      const auto out = static_cast<Eigen::Index>(widths[l + 1]);
      net.layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
    }
    return net;
  }

  // He-uniform for layers feeding a rectifier, LeCun-uniform for the linear
  // output layer; zero biases.
  static Mlp random(const std::vector<std::size_t>& widths, Rng& rng) {
    Mlp net = zeros(widths);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      auto& layer = net.layers[l];
      const double fan_in = static_cast<double>(layer.in());
      const double gain = l + 1 == net.layers.size() ? 3.0 : 6.0;
      const double bound = std::sqrt(gain / fan_in);
      std::uniform_real_distribution<double> u(-bound, bound);
      for (Eigen::Index c = 0; c < layer.w.cols(); ++c)
        for (Eigen::Index r = 0; r < layer.w.rows(); ++r) layer.w(r, c) = u(rng);
    }
    return net;
  }

  std::vector<std::size_t> widths() const {
    std::vector<std::size_t> out;
    if (layers.empty()) return out;
    out.push_back(static_cast<std::size_t>(layers.front().in()));
    for (const auto& l : layers) out.push_back(static_cast<std::size_t>(l.out()));
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.w.size() + l.b.size());
    return n;
  }

  bool same_shape(const Mlp& o) const {
    if (layers.size() != o.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      if (layers[l].w.rows() != o.layers[l].w.rows() || layers[l].w.cols() != o.layers[l].w.cols()) return false;
    }
    return true;
  }
};

struct MlpCache {
  std::vector<Eigen::MatrixXd> inputs;          // input of each layer (post-activation of the previous one)
  std::vector<Eigen::MatrixXd> preactivations;  // W a + b of each layer
};

inline Eigen::MatrixXd mlp_forward(const Mlp& net, const Eigen::MatrixXd& x, MlpCache* cache = nullptr) {
  if (net.layers.empty() || x.rows() != net.layers.front().in()) {
    throw Error(ErrorCode::Config, "MLP input width mismatch");
  }
  if (cache) {
    cache->inputs.clear();
    cache->preactivations.clear();
  }
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    Eigen::MatrixXd z = layer.w * a;
    z.colwise() += layer.b;
    if (cache) cache->inputs.push_back(std::move(a));
    if (l + 1 == net.layers.size()) {
      if (cache) cache->preactivations.push_back(z);
      return z;
    }
    a = z.cwiseMax(0.0);
    if (cache) cache->preactivations.push_back(std::move(z));
  }
  return a;
}

// Accumulates parameter gradients into `grads` (same shape as `net`) and
// returns the gradient with respect to the network input. The rectifier's
// derivative at exactly zero is taken as 0.
inline Eigen::MatrixXd mlp_backward(const Mlp& net, const MlpCache& cache, Eigen::MatrixXd d_out, Mlp& grads) {
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    if (l + 1 < net.layers.size()) {
      d_out = d_out.cwiseProduct((cache.preactivations[l].array() > 0.0).cast<double>().matrix());
    }
    grads.layers[l].w.noalias() += d_out * cache.inputs[l].transpose();
    grads.layers[l].b += d_out.rowwise().sum();
    d_out = net.layers[l].w.transpose() * d_out;
  }
  return d_out;
}

}  // namespace sspe
