#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "sspe/error.hpp"
#include "sspe/mlp.hpp"
#include "sspe/posehead.hpp"

namespace sspe {

struct AdamState {
  Mlp m_s, v_s, m_g, v_g;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_params(const PoseHeadParams& p) {
    const auto ws = p.phi_s.widths(), wg = p.phi_g.widths();
    return {Mlp::zeros(ws), Mlp::zeros(ws), Mlp::zeros(wg), Mlp::zeros(wg)};
  }
};

namespace detail {

template <typename Tensor>
void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, double b1, double b2, double eps,
                 double lr, double bc1, double bc2) {
  m = b1 * m + (1.0 - b1) * grad;
  v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
  param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

inline void adam_net(Mlp& net, const Mlp& grad, Mlp& m, Mlp& v, const AdamState& s, double lr, double bc1,
                     double bc2) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    adam_update(net.layers[l].w, grad.layers[l].w, m.layers[l].w, v.layers[l].w, s.beta1, s.beta2, s.epsilon, lr,
                bc1, bc2);
    adam_update(net.layers[l].b, grad.layers[l].b, m.layers[l].b, v.layers[l].b, s.beta1, s.beta2, s.epsilon, lr,
                bc1, bc2);
  }
}

}  // namespace detail

// Bias-corrected Adam. Zero gradients leave parameters unchanged while the
// moments are zero.
inline void adam_step(PoseHeadParams& params, const Gradients& grads, AdamState& state, double lr) {
  if (!params.phi_s.same_shape(grads.phi_s) || !params.phi_g.same_shape(grads.phi_g) ||
      !params.phi_s.same_shape(state.m_s) || !params.phi_g.same_shape(state.m_g)) {
    throw Error(ErrorCode::Contract, "parameter, gradient and optimizer shapes disagree");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  detail::adam_net(params.phi_s, grads.phi_s, state.m_s, state.v_s, state, lr, bc1, bc2);
  detail::adam_net(params.phi_g, grads.phi_g, state.m_g, state.v_g, state, lr, bc1, bc2);
  params.touch();
}

// First step index at which each milestone drop applies.
inline std::vector<std::size_t> milestone_steps(std::size_t total_steps, const std::vector<double>& milestones) {
  std::vector<std::size_t> out;
  for (double f : milestones) out.push_back(static_cast<std::size_t>(std::llround(f * static_cast<double>(total_steps))));
  return out;
}

// Base rate divided by 10 after each milestone fraction of the total steps.
inline double learning_rate_at(std::size_t step, std::size_t total_steps, double base,
                               const std::vector<double>& milestones) {
  double lr = base;
  for (std::size_t s : milestone_steps(total_steps, milestones))
    if (step >= s) lr *= 0.1;
  return lr;
}

}  // namespace sspe
