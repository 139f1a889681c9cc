#include "pseg/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "pseg/error.hpp"
#include "pseg/parallel.hpp"

namespace pseg {

void PhantomSpec::validate() const {
  if (n_patients < 1 || slices_per_patient < 1) throw ValidationError("phantom: counts must be positive");
  if (image_size < 8) throw ValidationError("phantom: image_size must be >= 8");
  if (!(semi_axis_min >= 1.0) || !(semi_axis_max >= semi_axis_min)) {
    throw ValidationError("phantom: need 1 <= semi_axis_min <= semi_axis_max");
  }
  if (!(center_jitter >= 0.0)) throw ValidationError("phantom: center_jitter must be >= 0");
  if (!(pet_fg_intensity > pet_bg_intensity)) throw ValidationError("phantom: PET foreground must exceed background");
  if (!(ct_noise_sigma >= 0.0)) throw ValidationError("phantom: ct_noise_sigma must be >= 0");
}

BinaryMask2D rasterize_ellipse(int width, int height, const Ellipse& e) {
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(width) * height);
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dx = x - e.cx;
      const double dy = y - e.cy;
      const double u = (c * dx + s * dy) / e.a;
      const double v = (-s * dx + c * dy) / e.b;
      labels[static_cast<std::size_t>(y) * width + x] = u * u + v * v <= 1.0 ? 1 : 0;
    }
  }
  return BinaryMask2D(width, height, std::move(labels));
}

std::vector<PhantomPatient> make_phantoms(const PhantomSpec& spec) {
  spec.validate();
  const int n = spec.image_size;
  const double mid = (n - 1) / 2.0;
  std::vector<PhantomPatient> patients;
  for (int p = 0; p < spec.n_patients; ++p) {
    std::mt19937_64 rng(mix_seed(spec.seed, static_cast<std::uint64_t>(p)));
    std::uniform_real_distribution<double> axis(spec.semi_axis_min, spec.semi_axis_max);
    std::uniform_real_distribution<double> offset(-spec.center_jitter, spec.center_jitter);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> freq(0.08, 0.25);
    std::normal_distribution<double> noise(0.0, spec.ct_noise_sigma > 0 ? spec.ct_noise_sigma : 1.0);

    const std::size_t plane = static_cast<std::size_t>(n) * n;
    std::vector<double> ct(plane * spec.slices_per_patient);
    std::vector<double> pet(plane * spec.slices_per_patient);
    PhantomPatient patient{
        PatientDataset{"p" + std::to_string(p), Volume3D(0, 0, 0, {}), Volume3D(0, 0, 0, {})}, {}};

    for (int k = 0; k < spec.slices_per_patient; ++k) {
      Ellipse e;
      e.cx = mid + offset(rng);
      e.cy = mid + offset(rng);
      e.a = axis(rng);
      e.b = axis(rng);
      e.theta = angle(rng);
      const double fx = freq(rng), fy = freq(rng), px = phase(rng), py = phase(rng);
      const BinaryMask2D inside = rasterize_ellipse(n, n, e);
      patient.ellipses.push_back(e);

      double* ct_slice = ct.data() + plane * k;
      double* pet_slice = pet.data() + plane * k;
      for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * n + x;
          const bool fg = inside.labels()[i] != 0;
          const double texture = spec.ct_texture_amplitude * std::sin(fx * x + px) * std::cos(fy * y + py);
          const double eps = spec.ct_noise_sigma > 0 ? noise(rng) : 0.0;
          ct_slice[i] = spec.ct_background + texture + (fg ? spec.ct_contrast : 0.0) + eps;
          pet_slice[i] = fg ? spec.pet_fg_intensity : spec.pet_bg_intensity;
        }
      }
    }
    patient.data.ct = Volume3D(n, n, spec.slices_per_patient, std::move(ct), {1.0, 1.0, 3.0});
    patient.data.pet = Volume3D(n, n, spec.slices_per_patient, std::move(pet), {1.0, 1.0, 3.0});
    patients.push_back(std::move(patient));
  }
  return patients;
}

}  // namespace pseg
