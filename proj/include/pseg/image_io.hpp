#pragma once

#include <filesystem>

#include "pseg/imaging.hpp"

namespace pseg {

/// Element types accepted in MHD-style headers.
enum class ElementType { uint8, int16, uint16, float32 };

/// Reads an MHD-style header (`Key = Value` lines) and its raw little-endian
/// payload. NDims 2 yields a depth-1 volume.
Volume3D read_volume(const std::filesystem::path& header_path);

/// Writes `<path>` plus a sibling `.raw` payload stored as float32.
void write_volume(const Volume3D& vol, const std::filesystem::path& header_path);

/// 2-D convenience wrappers (NDims = 2).
ScalarImage2D read_image(const std::filesystem::path& header_path);
void write_image(const ScalarImage2D& img, const std::filesystem::path& header_path);

/// Binary PGM (P5, maxval 255). Mask foreground is stored as 255.
void write_pgm(const BinaryMask2D& mask, const std::filesystem::path& path);
/// 8-bit grayscale from an already [0, 1]-scaled image.
void write_pgm(const ScalarImage2D& unit_image, const std::filesystem::path& path);
/// Any nonzero gray value is foreground.
BinaryMask2D read_pgm_mask(const std::filesystem::path& path);

/// Binary PPM (P6).
void write_ppm(const RgbImage2D& img, const std::filesystem::path& path);
RgbImage2D read_ppm(const std::filesystem::path& path);

}  // namespace pseg
