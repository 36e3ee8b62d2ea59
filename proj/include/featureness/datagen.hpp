#pragma once

#include "featureness/homography.hpp"
#include "featureness/image.hpp"
#include "featureness/rng.hpp"
#include "featureness/warp.hpp"

namespace featureness {

/// Intensity perturbations applied to the warped half of a training pair.
struct PhotometricConfig {
  double noise_sigma = 0.02;
  double brightness = 0.1;  // additive jitter range, +/- per image
  double contrast = 0.2;    // multiplicative jitter range, 1 +/- per image

  static PhotometricConfig none() { return {0.0, 0.0, 0.0}; }
};

/// Self-supervised training pair: img_b is img_a warped by h_ab plus
/// photometric noise; valid_b flags the pixels of img_b that came from inside
/// img_a.
struct TrainingPair {
  Image img_a;
  Image img_b;
  Homography h_ab;
  ValidityMask valid_b;
};

/// Procedural training texture: multi-octave value noise blended with random
/// filled polygons and a linear gradient, contrast-stretched to full range.
Image gen_texture_image(Rng& rng, int height, int width);

TrainingPair gen_pair(Rng& rng, const Image& img, const HomographyBounds& bounds,
                      const PhotometricConfig& photometric);

}  // namespace featureness
