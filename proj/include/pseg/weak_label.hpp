#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pseg/imaging.hpp"

namespace pseg {

/// Weak-label threshold as a fraction of the volume maximum.
struct ThresholdConfig {
  double fraction = 0.2;
  void validate() const;
};

/// Co-registered CT/PET pair for one patient. Both volumes share the same grid.
struct PatientDataset {
  std::string patient_id;
  Volume3D ct;
  Volume3D pet;

  void validate() const;
};

/// One training/test sample: a CT slice and its binary mask.
struct LabeledSlice {
  std::string patient_id;
  int slice_index = 0;
  ScalarImage2D ct;
  BinaryMask2D mask;
};

/// T = fraction * max(pet). One threshold for the whole volume.
double compute_threshold(const Volume3D& pet, const ThresholdConfig& cfg);

/// Per-slice masks: label 1 iff voxel > T (strict).
std::vector<BinaryMask2D> binarize(const Volume3D& pet, double threshold);

/// Ascending indices of masks with at least `min_fg` foreground pixels.
std::vector<int> select_foreground_slices(const std::vector<BinaryMask2D>& masks, std::size_t min_fg = 1);

struct PatientSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Seeded shuffle of patient ids; the first `train_count` go to training.
PatientSplit patient_split(const std::vector<std::string>& ids, std::size_t train_count, std::uint64_t seed);

/// Threshold, binarize and select slices for one patient, pairing each
/// selected mask with its CT slice.
std::vector<LabeledSlice> label_patient(const PatientDataset& patient, const ThresholdConfig& cfg,
                                        std::size_t min_fg = 1);

}  // namespace pseg
