#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pseg/imaging.hpp"
#include "pseg/metrics.hpp"
#include "pseg/models.hpp"
#include "pseg/weak_label.hpp"

namespace pseg {

/// Intensity window mapping raw CT values to network inputs in [0, 1].
struct InputWindow {
  double lo = -160.0;
  double hi = 240.0;
};

struct TrainConfig {
  std::size_t iterations = 2000;
  double lr = 1e-4;
  std::uint64_t seed = 0;
  bool shuffle = true;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::filesystem::path checkpoint_path;  // empty: no checkpoint written
  std::uint64_t model_seed = 0;           // recorded in checkpoint metadata
  InputWindow window;

  void validate() const;
};

struct TrainReport {
  std::vector<double> loss;  // one entry per iteration
  double wall_seconds = 0.0;
  std::filesystem::path checkpoint;
};

/// Called after every iteration with (iteration index, loss).
using ProgressFn = std::function<void(std::size_t, double)>;

/// Batch-size-1 Adam training on softmax cross entropy. Each epoch visits
/// the dataset once in a seeded shuffled order.
TrainReport train(models::SegmentationModel& model, const std::vector<LabeledSlice>& dataset,
                  const TrainConfig& cfg, const ProgressFn& progress = {});

/// `iteration,loss` lines.
std::string format_loss_csv(const TrainReport& report);

struct EvaluationResult {
  std::vector<EvalRecord> records;
  EvalSummary summary;
  std::string csv;
};

using Predictor = std::function<BinaryMask2D(const ScalarImage2D&)>;

/// `<patient>_<slice>` identifier used in reports.
std::string slice_id(const LabeledSlice& s);

/// Per-slice metrics in input order; `threads` only affects wall time.
EvaluationResult evaluate(const Predictor& predict, const std::vector<LabeledSlice>& testset, unsigned threads = 1);
EvaluationResult evaluate(const models::SegmentationModel& model, const std::vector<LabeledSlice>& testset,
                          const InputWindow& window, unsigned threads = 1);

/// Square resampling: bilinear (clamped to edge) for images, nearest for masks.
ScalarImage2D resize_to(const ScalarImage2D& img, int size);
BinaryMask2D resize_to(const BinaryMask2D& mask, int size);
LabeledSlice resize_to(const LabeledSlice& s, int size);

}  // namespace pseg
