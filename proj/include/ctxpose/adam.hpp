#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ctxpose {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

// One bias-corrected Adam update of params in place. Moments are sized on
// first use.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace ctxpose
