#include "ctxpose/adam.hpp"

#include <cmath>

#include "ctxpose/error.hpp"

namespace ctxpose {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size()) fail(ErrorCode::ShapeMismatch, "parameter and gradient sizes differ");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    fail(ErrorCode::ShapeMismatch, "optimizer state does not match parameters");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace ctxpose
