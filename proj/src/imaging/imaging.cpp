#include "pseg/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pseg/error.hpp"

namespace pseg {
namespace {

void check_finite(const std::vector<double>& values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite value");
  }
}

std::uint8_t to_u8(double unit) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(unit, 0.0, 1.0) * 255.0));
}

}  // namespace

ScalarImage2D::ScalarImage2D(int width, int height, std::vector<double> values, Spacing2D spacing)
    : width_(width), height_(height), values_(std::move(values)), spacing_(spacing) {
  if (width < 1 || height < 1) throw ValidationError("image: dimensions must be positive");
  if (values_.size() != static_cast<std::size_t>(width) * height) {
    throw ValidationError("image: value count does not match dimensions");
  }
  if (!(spacing.x > 0) || !(spacing.y > 0)) throw ValidationError("image: spacing must be positive");
  check_finite(values_, "image");
}

ScalarImage2D::ScalarImage2D(int width, int height, Spacing2D spacing)
    : ScalarImage2D(width, height,
                    std::vector<double>(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0)),
                    spacing) {}

Volume3D::Volume3D(int width, int height, int depth, std::vector<double> values, Spacing3D spacing)
    : width_(width), height_(height), depth_(depth), values_(std::move(values)), spacing_(spacing) {
  if (width < 0 || height < 0 || depth < 0) throw ValidationError("volume: negative dimension");
  if (values_.size() != static_cast<std::size_t>(width) * height * depth) {
    throw ValidationError("volume: value count does not match dimensions");
  }
  if (!(spacing.x > 0) || !(spacing.y > 0) || !(spacing.z > 0)) {
    throw ValidationError("volume: spacing must be positive");
  }
  check_finite(values_, "volume");
}

BinaryMask2D::BinaryMask2D(int width, int height, std::vector<std::uint8_t> labels)
    : width_(width), height_(height), labels_(std::move(labels)) {
  if (width < 1 || height < 1) throw ValidationError("mask: dimensions must be positive");
  if (labels_.size() != static_cast<std::size_t>(width) * height) {
    throw ValidationError("mask: label count does not match dimensions");
  }
  for (auto l : labels_) {
    if (l > 1) throw ValidationError("mask: labels must be 0 or 1");
  }
}

BinaryMask2D::BinaryMask2D(int width, int height)
    : BinaryMask2D(width, height,
                   std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0))) {}

std::size_t BinaryMask2D::foreground_count() const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), std::uint8_t{1}));
}

RgbImage2D::RgbImage2D(int width, int height, std::vector<std::uint8_t> red, std::vector<std::uint8_t> green,
                       std::vector<std::uint8_t> blue)
    : width_(width), height_(height), red_(std::move(red)), green_(std::move(green)), blue_(std::move(blue)) {
  const auto n = static_cast<std::size_t>(width) * height;
  if (width < 1 || height < 1) throw ValidationError("rgb image: dimensions must be positive");
  if (red_.size() != n || green_.size() != n || blue_.size() != n) {
    throw ValidationError("rgb image: channel size does not match dimensions");
  }
}

Rgb RgbImage2D::at(int x, int y) const {
  const auto i = static_cast<std::size_t>(y) * width_ + x;
  return {red_[i], green_[i], blue_[i]};
}

ScalarImage2D extract_slice(const Volume3D& vol, int k) {
  if (k < 0 || k >= vol.depth()) {
    throw std::out_of_range("slice index " + std::to_string(k) + " out of range [0, " +
                            std::to_string(vol.depth()) + ")");
  }
  const auto n = vol.slice_size();
  auto first = vol.values().begin() + static_cast<std::ptrdiff_t>(n * k);
  return ScalarImage2D(vol.width(), vol.height(), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)),
                       {vol.spacing().x, vol.spacing().y});
}

ScalarImage2D normalize_window(const ScalarImage2D& img, double lo, double hi) {
  if (!(lo < hi)) throw ValidationError("normalize_window: lo must be less than hi");
  std::vector<double> out(img.values().size());
  const double range = hi - lo;
  std::transform(img.values().begin(), img.values().end(), out.begin(),
                 [&](double v) { return std::clamp((v - lo) / range, 0.0, 1.0); });
  return ScalarImage2D(img.width(), img.height(), std::move(out), img.spacing());
}

BinaryMask2D contour(const BinaryMask2D& mask) {
  const int w = mask.width();
  const int h = mask.height();
  auto background = [&](int x, int y) { return x < 0 || y < 0 || x >= w || y >= h || mask.at(x, y) == 0; };
  std::vector<std::uint8_t> out(mask.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask.at(x, y) == 0) continue;
      if (background(x - 1, y) || background(x + 1, y) || background(x, y - 1) || background(x, y + 1)) {
        out[static_cast<std::size_t>(y) * w + x] = 1;
      }
    }
  }
  return BinaryMask2D(w, h, std::move(out));
}

RgbImage2D render_overlay(const ScalarImage2D& ct, const BinaryMask2D& gt, const std::optional<BinaryMask2D>& pred) {
  const int w = ct.width();
  const int h = ct.height();
  if (gt.width() != w || gt.height() != h || (pred && (pred->width() != w || pred->height() != h))) {
    throw ValidationError("render_overlay: dimension mismatch");
  }
  const auto [lo_it, hi_it] = std::minmax_element(ct.values().begin(), ct.values().end());
  const double lo = *lo_it;
  const double hi = *hi_it;

  const std::size_t n = ct.size();
  std::vector<std::uint8_t> red(n), green(n), blue(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t base = hi > lo ? to_u8((ct.values()[i] - lo) / (hi - lo)) : 0;
    red[i] = green[i] = blue[i] = base;
  }
  if (pred) {
    for (std::size_t i = 0; i < n; ++i) {
      if (pred->labels()[i] == 0) continue;
      red[i] = static_cast<std::uint8_t>((red[i] + 255 + 1) / 2);
      green[i] = static_cast<std::uint8_t>(green[i] / 2);
      blue[i] = static_cast<std::uint8_t>(blue[i] / 2);
    }
  }
  const BinaryMask2D edge = contour(gt);
  for (std::size_t i = 0; i < n; ++i) {
    if (edge.labels()[i] == 0) continue;
    red[i] = 0;
    green[i] = 255;
    blue[i] = 0;
  }
  return RgbImage2D(w, h, std::move(red), std::move(green), std::move(blue));
}

}  // namespace pseg
