#include "dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pseg/error.hpp"
#include "pseg/image_io.hpp"
#include "pseg/train.hpp"

namespace fs = std::filesystem;

namespace pseg::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(trim(f));
    if (fields.size() != 3 || fields[0].empty()) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": expected patient_id,ct_path,pet_path");
    }
    const auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : base / p; };
    for (const auto& e : out) {
      if (e.patient_id == fields[0]) throw ValidationError("manifest lists patient " + fields[0] + " twice");
    }
    out.push_back({fields[0], resolve(fields[1]), resolve(fields[2])});
  }
  if (out.empty()) throw ValidationError("manifest " + path.string() + " lists no patients");
  return out;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : entries) {
    out << e.patient_id << ',' << e.ct.generic_string() << ',' << e.pet.generic_string() << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<LabeledSlice> read_slices(const fs::path& dir) {
  const fs::path ct_dir = dir / "ct";
  if (!fs::is_directory(ct_dir)) throw IoError("no ct/ directory under " + dir.string());
  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(ct_dir)) {
    if (entry.path().extension() == ".mhd") stems.push_back(entry.path().stem().string());
  }
  if (stems.empty()) throw ValidationError("no .mhd slices in " + ct_dir.string());
  std::sort(stems.begin(), stems.end());

  std::vector<LabeledSlice> out;
  out.reserve(stems.size());
  for (const auto& stem : stems) {
    const auto cut = stem.rfind('_');
    int index = 0;
    try {
      if (cut == std::string::npos || cut == 0) throw std::invalid_argument(stem);
      std::size_t used = 0;
      index = std::stoi(stem.substr(cut + 1), &used);
      if (used != stem.size() - cut - 1) throw std::invalid_argument(stem);
    } catch (const std::exception&) {
      throw ValidationError("slice name " + stem + " is not <patient>_<index>");
    }
    ScalarImage2D ct = read_image(ct_dir / (stem + ".mhd"));
    BinaryMask2D mask = read_pgm_mask(dir / "mask" / (stem + ".pgm"));
    if (mask.width() != ct.width() || mask.height() != ct.height()) {
      throw ValidationError("mask and CT sizes differ for slice " + stem);
    }
    out.push_back({stem.substr(0, cut), index, std::move(ct), std::move(mask)});
  }
  return out;
}

void write_slice(const LabeledSlice& slice, const fs::path& dir, const std::string& stem) {
  fs::create_directories(dir / "ct");
  fs::create_directories(dir / "mask");
  write_image(slice.ct, dir / "ct" / (stem + ".mhd"));
  write_pgm(slice.mask, dir / "mask" / (stem + ".pgm"));
}

void reset_slice_dir(const fs::path& dir) {
  fs::remove_all(dir / "ct");
  fs::remove_all(dir / "mask");
}

}  // namespace pseg::cli
