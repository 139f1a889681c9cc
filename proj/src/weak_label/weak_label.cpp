#include "pseg/weak_label.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "pseg/error.hpp"

namespace pseg {

void ThresholdConfig::validate() const {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("threshold fraction must lie in (0, 1)");
}

void PatientDataset::validate() const {
  if (ct.depth() != pet.depth()) {
    throw ValidationError("patient " + patient_id + ": CT and PET depths differ (" + std::to_string(ct.depth()) +
                          " vs " + std::to_string(pet.depth()) + ")");
  }
  if (ct.width() != pet.width() || ct.height() != pet.height()) {
    throw ValidationError("patient " + patient_id + ": CT and PET slice grids differ; resample PET first");
  }
}

double compute_threshold(const Volume3D& pet, const ThresholdConfig& cfg) {
  cfg.validate();
  if (pet.values().empty()) throw ValidationError("compute_threshold: empty volume");
  const double max_value = *std::max_element(pet.values().begin(), pet.values().end());
  if (max_value <= 0.0) throw ValidationError("compute_threshold: volume has no positive activity");
  return cfg.fraction * max_value;
}

std::vector<BinaryMask2D> binarize(const Volume3D& pet, double threshold) {
  if (!std::isfinite(threshold)) throw ValidationError("binarize: threshold must be finite");
  std::vector<BinaryMask2D> masks;
  masks.reserve(static_cast<std::size_t>(pet.depth()));
  const std::size_t n = pet.slice_size();
  for (int k = 0; k < pet.depth(); ++k) {
    std::vector<std::uint8_t> labels(n);
    const double* slice = pet.values().data() + n * k;
    for (std::size_t i = 0; i < n; ++i) labels[i] = slice[i] > threshold ? 1 : 0;
    masks.emplace_back(pet.width(), pet.height(), std::move(labels));
  }
  return masks;
}

std::vector<int> select_foreground_slices(const std::vector<BinaryMask2D>& masks, std::size_t min_fg) {
  if (min_fg < 1) throw ValidationError("select_foreground_slices: min_fg must be at least 1");
  std::vector<int> selected;
  for (std::size_t k = 0; k < masks.size(); ++k) {
    if (masks[k].foreground_count() >= min_fg) selected.push_back(static_cast<int>(k));
  }
  return selected;
}

PatientSplit patient_split(const std::vector<std::string>& ids, std::size_t train_count, std::uint64_t seed) {
  if (train_count == 0 || train_count >= ids.size()) {
    throw ValidationError("patient_split: train_count must lie in [1, " + std::to_string(ids.size()) + ")");
  }
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size()) {
    throw ValidationError("patient_split: duplicate patient ids");
  }
  std::vector<std::string> order = ids;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  PatientSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_count));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(train_count), order.end());
  return split;
}

std::vector<LabeledSlice> label_patient(const PatientDataset& patient, const ThresholdConfig& cfg,
                                        std::size_t min_fg) {
  patient.validate();
  const double threshold = compute_threshold(patient.pet, cfg);
  const auto masks = binarize(patient.pet, threshold);
  std::vector<LabeledSlice> out;
  for (int k : select_foreground_slices(masks, min_fg)) {
    out.push_back({patient.patient_id, k, extract_slice(patient.ct, k), masks[static_cast<std::size_t>(k)]});
  }
  return out;
}

}  // namespace pseg
