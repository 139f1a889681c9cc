#pragma once

#include <cstdint>
#include <vector>

#include "pseg/imaging.hpp"
#include "pseg/weak_label.hpp"

namespace pseg {

/// Synthetic co-registered CT/PET patients with one elliptical "bladder"
/// per slice.
struct PhantomSpec {
  int n_patients = 29;
  int slices_per_patient = 5;
  int image_size = 64;
  double semi_axis_min = 7.0;    // pixels
  double semi_axis_max = 15.0;   // pixels
  double center_jitter = 10.0;   // max offset of the ellipse center from the image center, pixels
  double pet_fg_intensity = 10.0;
  double pet_bg_intensity = 0.0;
  double ct_background = 40.0;
  double ct_texture_amplitude = 25.0;
  double ct_contrast = 80.0;
  double ct_noise_sigma = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Ellipse {
  double cx = 0;
  double cy = 0;
  double a = 1;      // semi-axis along the rotated x direction
  double b = 1;      // semi-axis along the rotated y direction
  double theta = 0;  // radians
};

struct PhantomPatient {
  PatientDataset data;
  std::vector<Ellipse> ellipses;  // one per slice
};

/// Pixel (x, y) is inside when its rotated, axis-normalized offset has norm <= 1.
BinaryMask2D rasterize_ellipse(int width, int height, const Ellipse& e);

std::vector<PhantomPatient> make_phantoms(const PhantomSpec& spec);

}  // namespace pseg
