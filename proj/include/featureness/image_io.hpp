#pragma once

#include <string>

#include "featureness/image.hpp"

namespace featureness {

/// 8-bit grayscale PNG. Intensities map linearly 0-255 <-> 0.0-1.0.
void write_png_gray(const std::string& path, const Image& img);
Image read_png_gray(const std::string& path);  // color inputs are luma-converted

/// 8-bit RGB PNG.
void write_png_rgb(const std::string& path, const RgbImage& img);
RgbImage read_png_rgb(const std::string& path);

/// Binary PGM (P5, maxval 255).
void write_pgm(const std::string& path, const Image& img);
Image read_pgm(const std::string& path);

/// Dispatches on file extension (.png / .pgm), converting to grayscale.
Image load_image_gray(const std::string& path);

}  // namespace featureness
