#include "pseg/nn/adam.hpp"

#include <cmath>
#include <string>

#include "pseg/error.hpp"

namespace pseg::nn {

void AdamConfig::validate() const {
  if (!(lr >= 0.0)) throw ValidationError("adam: lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("adam: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ValidationError("adam: eps must be > 0");
}

AdamState make_adam_state(const AdamConfig& config, std::span<const std::size_t> block_sizes) {
  config.validate();
  AdamState s;
  s.config = config;
  for (std::size_t n : block_sizes) {
    s.m.emplace_back(n, 0.0);
    s.v.emplace_back(n, 0.0);
  }
  return s;
}

void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads) {
  if (params.size() != state.m.size() || grads.size() != state.m.size()) {
    throw ValidationError("adam_step: expected " + std::to_string(state.m.size()) + " parameter blocks");
  }
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != state.m[b].size() || grads[b].size() != state.m[b].size()) {
      throw ValidationError("adam_step: block " + std::to_string(b) + " size mismatch");
    }
  }
  const auto& cfg = state.config;
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& m = state.m[b];
    auto& v = state.v[b];
    const auto g = grads[b];
    auto theta = params[b];
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      theta[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace pseg::nn
