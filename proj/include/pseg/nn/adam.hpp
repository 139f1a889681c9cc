#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pseg::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// Moment buffers congruent to a fixed list of parameter blocks.
struct AdamState {
  AdamConfig config;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam_state(const AdamConfig& config, std::span<const std::size_t> block_sizes);

/// One bias-corrected Adam update over all parameter blocks; increments t once.
void adam_step(AdamState& state, std::span<const std::span<double>> params,
               std::span<const std::span<const double>> grads);

}  // namespace pseg::nn
