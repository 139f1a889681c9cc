#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pseg/imaging.hpp"

namespace pseg {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct PixelPoint {
  int x = 0;
  int y = 0;
  bool operator==(const PixelPoint&) const = default;
};

/// Per-slice evaluation. Empty optionals mark undefined metrics (zero
/// denominators or an empty point set on one side only).
struct EvalRecord {
  std::string slice_id;
  std::optional<double> tpr;
  std::optional<double> tnr;
  std::optional<double> dsc;
  std::optional<double> hd;
};

/// Dataset means; tpr/tnr/dsc in percent, hd in pixels.
struct EvalSummary {
  std::optional<double> mean_tpr;
  std::optional<double> mean_tnr;
  std::optional<double> mean_dsc;
  std::optional<double> mean_hd;
  std::size_t n = 0;
  std::size_t skipped = 0;
};

ConfusionCounts confusion(const BinaryMask2D& gt, const BinaryMask2D& pred);

/// TP / (TP + FN); undefined when there are no positives in the ground truth.
std::optional<double> tpr(const ConfusionCounts& c);
/// TN / (TN + FP); undefined when there are no negatives in the ground truth.
std::optional<double> tnr(const ConfusionCounts& c);

/// 2|G ∩ P| / (|G| + |P|); undefined when both masks are empty.
std::optional<double> dsc(const ConfusionCounts& c);
std::optional<double> dsc(const BinaryMask2D& gt, const BinaryMask2D& pred);

std::vector<PixelPoint> foreground_points(const BinaryMask2D& mask);

/// max over a in A of min over b in B of the Euclidean distance |a - b|.
double directed_hausdorff(const std::vector<PixelPoint>& a, const std::vector<PixelPoint>& b);

/// Symmetric Hausdorff distance over foreground pixels, in pixel units.
/// Both empty gives 0; exactly one empty is undefined.
std::optional<double> hausdorff(const BinaryMask2D& gt, const BinaryMask2D& pred);

EvalRecord evaluate_pair(const std::string& slice_id, const BinaryMask2D& gt, const BinaryMask2D& pred);

EvalSummary summarize(const std::vector<EvalRecord>& records);

/// `slice_id,tpr,tnr,dsc,hd_px` rows (percent / pixels), `NA` for undefined,
/// followed by a `MEAN` row.
std::string format_report_csv(const std::vector<EvalRecord>& records, const EvalSummary& summary);

}  // namespace pseg
