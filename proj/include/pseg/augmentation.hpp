#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pseg/imaging.hpp"
#include "pseg/weak_label.hpp"

namespace pseg {

enum class Interpolation { bilinear, nearest };

enum class NoiseKind { gaussian, uniform, salt_pepper, none };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);

/// User-facing augmentation parameters. Field bounds follow the augmentation
/// parameter table (defaults in the initializers); validate() enforces them.
struct AugmentationPlan {
  double max_rotation_deg = 45.0;       // [0, 180]
  int n_rotations = 4;                  // [1, 10]
  double max_scale = 0.1;               // [0.05, 0.15]
  int n_scales_x = 2;                   // [0, 5]
  int n_scales_y = 2;                   // [0, 5]
  int n_noisy = 4;                      // [1, 10]
  double gaussian_max_sigma = 5.0;      // [1, 10]
  double uniform_max_amp = 5.0;         // [1, 10]
  double saltpepper_max_density = 0.2;  // [0.05, 0.5]
  NoiseKind noise_kind = NoiseKind::none;
  std::uint64_t seed = 0;

  void validate() const;
};

struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  double magnitude = 0.0;
  std::uint64_t draw_seed = 0;
  bool operator==(const NoiseSpec&) const = default;
};

/// One enumerated augmentation: scale about the center, then rotate, then
/// optionally add noise to the CT channel.
struct TransformDescriptor {
  double rotation_deg = 0.0;
  double scale_x = 1.0;
  double scale_y = 1.0;
  std::optional<NoiseSpec> noise;
  bool operator==(const TransformDescriptor&) const = default;
};

/// Rotation about the image center ((w-1)/2, (h-1)/2). A positive angle maps
/// pixel offset (dx, dy) to (dx cos - dy sin, dx sin + dy cos) in image
/// coordinates (x right, y down). Out-of-image samples are 0.
ScalarImage2D rotate(const ScalarImage2D& img, double angle_deg, Interpolation interp = Interpolation::bilinear);
BinaryMask2D rotate(const BinaryMask2D& mask, double angle_deg, Interpolation interp = Interpolation::nearest);

/// Center-anchored anisotropic resampling on a fixed canvas.
ScalarImage2D scale(const ScalarImage2D& img, double fx, double fy, Interpolation interp = Interpolation::bilinear);
BinaryMask2D scale(const BinaryMask2D& mask, double fx, double fy, Interpolation interp = Interpolation::nearest);

/// Combined scale-then-rotate in a single resampling pass.
ScalarImage2D transform(const ScalarImage2D& img, double angle_deg, double fx, double fy, Interpolation interp);
BinaryMask2D transform(const BinaryMask2D& mask, double angle_deg, double fx, double fy, Interpolation interp);

/// Number of pixels salt-and-pepper noise of density d alters on n pixels.
std::size_t salt_pepper_count(double density, std::size_t n);

ScalarImage2D add_noise(const ScalarImage2D& img, NoiseKind kind, double magnitude, std::uint64_t seed);

/// Deterministic descriptor list: identity, rotations, x-scalings,
/// y-scalings, rotation x scaling pairs; doubled with noisy copies when a
/// noise kind is selected.
std::vector<TransformDescriptor> enumerate_plan(const AugmentationPlan& plan);

/// (1 + R + Sx + Sy + R(Sx + Sy)) * (noise ? 2 : 1)
std::size_t plan_length(const AugmentationPlan& plan);

struct AugmentedSlice {
  LabeledSlice slice;
  std::size_t descriptor_index = 0;
  TransformDescriptor descriptor;
};

AugmentedSlice apply_descriptor(const LabeledSlice& slice, const TransformDescriptor& d, std::size_t index);

/// One output per descriptor, in enumeration order. `threads` only affects
/// wall time.
std::vector<AugmentedSlice> augment_pair(const LabeledSlice& slice, const AugmentationPlan& plan,
                                         unsigned threads = 1);

}  // namespace pseg
