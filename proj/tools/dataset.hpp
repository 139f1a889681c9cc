#pragma once
// On-disk dataset layout used by the command-line tool:
//   <dir>/ct/<stem>.mhd (+ .raw)   CT slice, float32
//   <dir>/mask/<stem>.pgm          weak label, foreground 255
// where <stem> is <patient>_<slice> and augmented copies append _<index>.

#include <filesystem>
#include <string>
#include <vector>

#include "pseg/weak_label.hpp"

namespace pseg::cli {

struct ManifestEntry {
  std::string patient_id;
  std::filesystem::path ct;
  std::filesystem::path pet;
};

/// `patient_id,ct_path,pet_path` lines; relative paths resolve against the
/// manifest's directory. Blank lines and `#` comments are skipped.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path);

/// Slices sorted by stem. The last `_` field of the stem is the slice
/// index, the rest the patient id, so slice_id() reproduces the stem.
std::vector<LabeledSlice> read_slices(const std::filesystem::path& dir);
void write_slice(const LabeledSlice& slice, const std::filesystem::path& dir, const std::string& stem);

/// Removes <dir>/ct and <dir>/mask so reruns never mix with stale output.
void reset_slice_dir(const std::filesystem::path& dir);

}  // namespace pseg::cli
