#pragma once
// Small helpers over model parameters shared by the model and training tests.

#include <vector>

#include "pseg/gradcheck_suite.hpp"
#include "pseg/models.hpp"

namespace modelcheck {

inline void randomize(pseg::models::SegmentationModel& m, std::uint64_t seed) { pseg::randomize_parameters(m, seed); }

inline std::vector<double> flatten(pseg::models::SegmentationModel& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.values.begin(), p.values.end());
  return out;
}

}  // namespace modelcheck
