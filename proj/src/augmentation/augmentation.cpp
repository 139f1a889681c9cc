#include "pseg/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "pseg/error.hpp"
#include "pseg/parallel.hpp"

namespace pseg {
namespace {

void check_range(double value, double lo, double hi, const char* name) {
  if (!(value >= lo && value <= hi)) {
    throw ValidationError(std::string("augmentation plan: ") + name + " must lie in [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "], got " + std::to_string(value));
  }
}

/// Inverse map from output pixel to source coordinate for scale-then-rotate.
struct InverseMap {
  double cx, cy, cos_t, sin_t, inv_fx, inv_fy;

  InverseMap(int w, int h, double angle_deg, double fx, double fy)
      : cx((w - 1) / 2.0),
        cy((h - 1) / 2.0),
        cos_t(std::cos(angle_deg * std::numbers::pi / 180.0)),
        sin_t(std::sin(angle_deg * std::numbers::pi / 180.0)),
        inv_fx(1.0 / fx),
        inv_fy(1.0 / fy) {}

  void operator()(int x, int y, double& sx, double& sy) const {
    const double dx = x - cx;
    const double dy = y - cy;
    // R(-theta) undoes the rotation, then the scale is undone per axis.
    const double rx = cos_t * dx + sin_t * dy;
    const double ry = -sin_t * dx + cos_t * dy;
    sx = cx + rx * inv_fx;
    sy = cy + ry * inv_fy;
  }
};

template <typename T>
T fetch(const std::vector<T>& data, int w, int h, long x, long y) {
  if (x < 0 || y < 0 || x >= w || y >= h) return T{0};
  return data[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)];
}

template <typename T>
std::vector<T> resample(const std::vector<T>& src, int w, int h, const InverseMap& map, Interpolation interp) {
  std::vector<T> out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double sx = 0;
      double sy = 0;
      map(x, y, sx, sy);
      T value{};
      if (interp == Interpolation::nearest) {
        value = fetch(src, w, h, std::lround(std::floor(sx + 0.5)), std::lround(std::floor(sy + 0.5)));
      } else {
        const double fx0 = std::floor(sx);
        const double fy0 = std::floor(sy);
        const long x0 = static_cast<long>(fx0);
        const long y0 = static_cast<long>(fy0);
        const double ax = sx - fx0;
        const double ay = sy - fy0;
        const double top = (1.0 - ax) * fetch(src, w, h, x0, y0) + ax * fetch(src, w, h, x0 + 1, y0);
        const double bottom = (1.0 - ax) * fetch(src, w, h, x0, y0 + 1) + ax * fetch(src, w, h, x0 + 1, y0 + 1);
        value = static_cast<T>((1.0 - ay) * top + ay * bottom);
      }
      out[static_cast<std::size_t>(y) * w + x] = value;
    }
  }
  return out;
}

void check_transform_args(double angle_deg, double fx, double fy) {
  if (!std::isfinite(angle_deg)) throw ValidationError("rotation angle must be finite");
  if (!(fx > 0.0) || !(fy > 0.0) || !std::isfinite(fx) || !std::isfinite(fy)) {
    throw ValidationError("scale factors must be positive");
  }
}

}  // namespace

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::gaussian:
      return "gaussian";
    case NoiseKind::uniform:
      return "uniform";
    case NoiseKind::salt_pepper:
      return "salt_pepper";
    case NoiseKind::none:
      return "none";
  }
  return "none";
}

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "gaussian") return NoiseKind::gaussian;
  if (name == "uniform") return NoiseKind::uniform;
  if (name == "salt_pepper") return NoiseKind::salt_pepper;
  if (name == "none") return NoiseKind::none;
  throw ValidationError("unknown noise kind: " + name);
}

void AugmentationPlan::validate() const {
  check_range(max_rotation_deg, 0.0, 180.0, "max_rotation_deg");
  check_range(n_rotations, 1, 10, "n_rotations");
  check_range(max_scale, 0.05, 0.15, "max_scale");
  check_range(n_scales_x, 0, 5, "n_scales_x");
  check_range(n_scales_y, 0, 5, "n_scales_y");
  check_range(gaussian_max_sigma, 1.0, 10.0, "gaussian_max_sigma");
  check_range(uniform_max_amp, 1.0, 10.0, "uniform_max_amp");
  check_range(saltpepper_max_density, 0.05, 0.5, "saltpepper_max_density");
  if (noise_kind != NoiseKind::none) check_range(n_noisy, 1, 10, "n_noisy");
}

ScalarImage2D transform(const ScalarImage2D& img, double angle_deg, double fx, double fy, Interpolation interp) {
  check_transform_args(angle_deg, fx, fy);
  if (angle_deg == 0.0 && fx == 1.0 && fy == 1.0) return img;
  const InverseMap map(img.width(), img.height(), angle_deg, fx, fy);
  return ScalarImage2D(img.width(), img.height(), resample(img.values(), img.width(), img.height(), map, interp),
                       img.spacing());
}

BinaryMask2D transform(const BinaryMask2D& mask, double angle_deg, double fx, double fy, Interpolation interp) {
  if (interp != Interpolation::nearest) {
    throw ValidationError("masks require nearest-neighbour interpolation to stay binary");
  }
  check_transform_args(angle_deg, fx, fy);
  if (angle_deg == 0.0 && fx == 1.0 && fy == 1.0) return mask;
  const InverseMap map(mask.width(), mask.height(), angle_deg, fx, fy);
  return BinaryMask2D(mask.width(), mask.height(),
                      resample(mask.labels(), mask.width(), mask.height(), map, Interpolation::nearest));
}

ScalarImage2D rotate(const ScalarImage2D& img, double angle_deg, Interpolation interp) {
  return transform(img, angle_deg, 1.0, 1.0, interp);
}

BinaryMask2D rotate(const BinaryMask2D& mask, double angle_deg, Interpolation interp) {
  return transform(mask, angle_deg, 1.0, 1.0, interp);
}

ScalarImage2D scale(const ScalarImage2D& img, double fx, double fy, Interpolation interp) {
  return transform(img, 0.0, fx, fy, interp);
}

BinaryMask2D scale(const BinaryMask2D& mask, double fx, double fy, Interpolation interp) {
  return transform(mask, 0.0, fx, fy, interp);
}

std::size_t salt_pepper_count(double density, std::size_t n) {
  return static_cast<std::size_t>(std::llround(density * static_cast<double>(n)));
}

ScalarImage2D add_noise(const ScalarImage2D& img, NoiseKind kind, double magnitude, std::uint64_t seed) {
  if (!(magnitude >= 0.0) || !std::isfinite(magnitude)) throw ValidationError("noise magnitude must be >= 0");
  std::vector<double> values = img.values();
  std::mt19937_64 rng(seed);
  switch (kind) {
    case NoiseKind::none:
      return img;
    case NoiseKind::gaussian: {
      if (magnitude == 0.0) return img;
      std::normal_distribution<double> dist(0.0, magnitude);
      for (double& v : values) v += dist(rng);
      break;
    }
    case NoiseKind::uniform: {
      if (magnitude == 0.0) return img;
      std::uniform_real_distribution<double> dist(-magnitude, magnitude);
      for (double& v : values) v += dist(rng);
      break;
    }
    case NoiseKind::salt_pepper: {
      if (magnitude > 1.0) throw ValidationError("salt-and-pepper density must be <= 1");
      const auto [lo, hi] = std::minmax_element(img.values().begin(), img.values().end());
      const double pepper = *lo;
      const double salt = *hi;
      std::vector<std::size_t> order(values.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      std::bernoulli_distribution coin(0.5);
      const std::size_t count = salt_pepper_count(magnitude, values.size());
      for (std::size_t i = 0; i < count; ++i) values[order[i]] = coin(rng) ? salt : pepper;
      break;
    }
    default:
      throw ValidationError("unknown noise kind");
  }
  return ScalarImage2D(img.width(), img.height(), std::move(values), img.spacing());
}

std::size_t plan_length(const AugmentationPlan& plan) {
  const std::size_t r = static_cast<std::size_t>(plan.n_rotations);
  const std::size_t s = static_cast<std::size_t>(plan.n_scales_x + plan.n_scales_y);
  return (1 + r + s + r * s) * (plan.noise_kind == NoiseKind::none ? 1 : 2);
}

std::vector<TransformDescriptor> enumerate_plan(const AugmentationPlan& plan) {
  plan.validate();
  std::vector<double> angles;
  for (int i = 1; i <= plan.n_rotations; ++i) angles.push_back(plan.max_rotation_deg * (static_cast<double>(i) / plan.n_rotations));

  std::vector<std::pair<double, double>> scalings;
  for (int j = 1; j <= plan.n_scales_x; ++j) scalings.emplace_back(1.0 + plan.max_scale * (static_cast<double>(j) / plan.n_scales_x), 1.0);
  for (int j = 1; j <= plan.n_scales_y; ++j) scalings.emplace_back(1.0, 1.0 + plan.max_scale * (static_cast<double>(j) / plan.n_scales_y));

  std::vector<TransformDescriptor> list;
  list.push_back({});
  for (double a : angles) list.push_back({a, 1.0, 1.0, std::nullopt});
  for (auto [sx, sy] : scalings) list.push_back({0.0, sx, sy, std::nullopt});
  for (double a : angles) {
    for (auto [sx, sy] : scalings) list.push_back({a, sx, sy, std::nullopt});
  }

  if (plan.noise_kind != NoiseKind::none) {
    double max_magnitude = 0.0;
    switch (plan.noise_kind) {
      case NoiseKind::gaussian:
        max_magnitude = plan.gaussian_max_sigma;
        break;
      case NoiseKind::uniform:
        max_magnitude = plan.uniform_max_amp;
        break;
      case NoiseKind::salt_pepper:
        max_magnitude = plan.saltpepper_max_density;
        break;
      case NoiseKind::none:
        break;
    }
    // Noisy copies cycle through n_noisy evenly spaced magnitude levels.
    const std::size_t clean = list.size();
    for (std::size_t i = 0; i < clean; ++i) {
      TransformDescriptor noisy = list[i];
      const double level = static_cast<double>(i % static_cast<std::size_t>(plan.n_noisy) + 1) / plan.n_noisy;
      noisy.noise = NoiseSpec{plan.noise_kind, max_magnitude * level, mix_seed(plan.seed, i)};
      list.push_back(noisy);
    }
  }
  return list;
}

AugmentedSlice apply_descriptor(const LabeledSlice& slice, const TransformDescriptor& d, std::size_t index) {
  ScalarImage2D ct = transform(slice.ct, d.rotation_deg, d.scale_x, d.scale_y, Interpolation::bilinear);
  BinaryMask2D mask = transform(slice.mask, d.rotation_deg, d.scale_x, d.scale_y, Interpolation::nearest);
  if (d.noise) ct = add_noise(ct, d.noise->kind, d.noise->magnitude, d.noise->draw_seed);
  return {LabeledSlice{slice.patient_id, slice.slice_index, std::move(ct), std::move(mask)}, index, d};
}

std::vector<AugmentedSlice> augment_pair(const LabeledSlice& slice, const AugmentationPlan& plan, unsigned threads) {
  if (slice.ct.width() != slice.mask.width() || slice.ct.height() != slice.mask.height()) {
    throw ValidationError("augment_pair: CT and mask dimensions differ");
  }
  const auto descriptors = enumerate_plan(plan);
  std::vector<std::optional<AugmentedSlice>> slots(descriptors.size());
  parallel_for(descriptors.size(), threads,
               [&](std::size_t i) { slots[i] = apply_descriptor(slice, descriptors[i], i); });
  std::vector<AugmentedSlice> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace pseg
