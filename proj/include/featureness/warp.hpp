#pragma once

#include <utility>

#include "featureness/homography.hpp"
#include "featureness/image.hpp"

namespace featureness {

/// Bilinear sample at sub-pixel (x, y). Caller guarantees the coordinate lies
/// in [0, w-1] x [0, h-1].
float bilinear_sample(const Image& img, double x, double y);

/// Inverse-mapped bilinear warp: h maps input coordinates onto output
/// coordinates. Output pixels whose source falls outside the input raster are
/// set to 0 and flagged invalid in the mask.
std::pair<Image, ValidityMask> warp_image(const Image& img, const Homography& h,
                                          int out_width, int out_height);

}  // namespace featureness
