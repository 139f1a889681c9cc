#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace pseg {

struct Spacing2D {
  double x = 1.0;
  double y = 1.0;
  bool operator==(const Spacing2D&) const = default;
};

struct Spacing3D {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;
  bool operator==(const Spacing3D&) const = default;
};

/// 2-D scalar slice, row-major, with physical pixel spacing in mm.
class ScalarImage2D {
 public:
  ScalarImage2D(int width, int height, std::vector<double> values, Spacing2D spacing = {});
  /// Zero-filled image.
  ScalarImage2D(int width, int height, Spacing2D spacing = {});

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  const Spacing2D& spacing() const { return spacing_; }
  const std::vector<double>& values() const { return values_; }

  double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }

  bool operator==(const ScalarImage2D&) const = default;

 private:
  int width_;
  int height_;
  std::vector<double> values_;
  Spacing2D spacing_;
};

/// Slice-major 3-D stack: x fastest, then y, then z.
class Volume3D {
 public:
  Volume3D(int width, int height, int depth, std::vector<double> values, Spacing3D spacing = {});

  int width() const { return width_; }
  int height() const { return height_; }
  int depth() const { return depth_; }
  std::size_t slice_size() const { return static_cast<std::size_t>(width_) * height_; }
  const Spacing3D& spacing() const { return spacing_; }
  const std::vector<double>& values() const { return values_; }

  bool operator==(const Volume3D&) const = default;

 private:
  int width_;
  int height_;
  int depth_;
  std::vector<double> values_;
  Spacing3D spacing_;
};

/// Per-pixel labels in {0, 1}.
class BinaryMask2D {
 public:
  BinaryMask2D(int width, int height, std::vector<std::uint8_t> labels);
  /// All-background mask.
  BinaryMask2D(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return labels_.size(); }
  const std::vector<std::uint8_t>& labels() const { return labels_; }

  std::uint8_t at(int x, int y) const { return labels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::size_t foreground_count() const;

  bool operator==(const BinaryMask2D&) const = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> labels_;
};

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const Rgb&) const = default;
};

class RgbImage2D {
 public:
  RgbImage2D(int width, int height, std::vector<std::uint8_t> red, std::vector<std::uint8_t> green,
             std::vector<std::uint8_t> blue);

  int width() const { return width_; }
  int height() const { return height_; }
  const std::vector<std::uint8_t>& red() const { return red_; }
  const std::vector<std::uint8_t>& green() const { return green_; }
  const std::vector<std::uint8_t>& blue() const { return blue_; }

  Rgb at(int x, int y) const;

  bool operator==(const RgbImage2D&) const = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> red_;
  std::vector<std::uint8_t> green_;
  std::vector<std::uint8_t> blue_;
};

/// Copy of slice k (0 <= k < depth).
ScalarImage2D extract_slice(const Volume3D& vol, int k);

/// clamp((v - lo) / (hi - lo), 0, 1) per pixel. Requires lo < hi.
ScalarImage2D normalize_window(const ScalarImage2D& img, double lo, double hi);

/// Foreground pixels 4-adjacent to at least one background pixel. The area
/// outside the image counts as background.
BinaryMask2D contour(const BinaryMask2D& mask);

/// Grayscale base (min/max window to u8), prediction foreground blended 50%
/// red, ground-truth contour drawn in pure green on top.
RgbImage2D render_overlay(const ScalarImage2D& ct, const BinaryMask2D& gt,
                          const std::optional<BinaryMask2D>& pred);

}  // namespace pseg
