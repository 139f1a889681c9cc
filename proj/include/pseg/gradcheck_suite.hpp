#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pseg/models.hpp"
#include "pseg/nn/grad_check.hpp"

namespace pseg {

struct GradCheckEntry {
  std::string name;
  nn::GradCheckResult result;
  std::size_t coords = 0;
};

/// Central-difference checks of every engine layer on small random inputs:
/// conv2d at dilations 1/2/4, strided conv2d, transposed conv2d, maxpool (tie-free
/// input), ReLU (inputs away from 0) and softmax cross entropy.
std::vector<GradCheckEntry> check_layer_gradients(std::uint64_t seed, double eps = 1e-5);

struct ModelCheckOptions {
  std::vector<double> steps{1e-3, 1e-4, 1e-5};  // tried largest first
  double kink_tol = 1e-13;
  int max_attempts = 8;
};

struct ModelCheckReport {
  std::vector<GradCheckEntry> layers;  // one per conv layer, then "input"
  std::size_t n_params = 0;
  std::size_t n_inputs = 0;
  int attempts = 0;                    // points drawn, including rejected ones
  std::vector<std::size_t> per_step;   // coordinates settled at each step
  std::size_t unresolved = 0;          // kinked even at the smallest step
  double max_rel_error() const;
};

/// Overwrites every weight with N(0, 2 / fan_in) and every bias with
/// N(0, 0.1) draws, score layers included.
void randomize_parameters(models::SegmentationModel& model, std::uint64_t seed);

/// Whole-model check on the objective <logits - logits0, r> for a random
/// input and a random r, over every parameter and input pixel.
///
/// Between kinks (ReLU at 0, pooling ties) the objective is linear in each
/// single coordinate, so central differences are exact up to roundoff and a
/// larger step gives less roundoff. Each coordinate uses the largest step
/// whose curvature |f(+) + f(-) - 2 f(0)| stays below kink_tol; a kink that
/// slips under the tolerance moves the quotient by at most kink_tol / (2 step).
/// Points with coordinates kinked at every step are redrawn.
ModelCheckReport check_model_gradients(const models::SegmentationModel& model, std::uint64_t seed,
                                       const ModelCheckOptions& opts = {});

}  // namespace pseg
