#pragma once

#include <string>
#include <vector>

#include "featureness/uncertainty_head.hpp"

namespace featureness {

/// Probability comparison used by the featureness rule. Auto resolves to
/// strict (>) when p_t = 0 — keeping only the most uncertain pixels where
/// P > 0 removable — and inclusive (>=) otherwise.
enum class ProbMode { automatic, inclusive, strict };

struct Thresholds {
  double p_t = 0.0;
  double sigma_t = 0.15;
  ProbMode prob_mode = ProbMode::automatic;

  bool strict() const {
    if (prob_mode == ProbMode::automatic) return p_t == 0.0;
    return prob_mode == ProbMode::strict;
  }
};

/// Dense probability map P, uncertainty map U (both in [0, 1]) and the binary
/// selection mask F: F = 1 iff P passes the probability tolerance and
/// U <= sigma_t.
struct FeaturenessMaps {
  Image P;
  Image U;
  PixelMask F;
};

/// Applies the featureness rule to precomputed maps.
PixelMask featureness_mask(const Image& p, const Image& u, const Thresholds& thresholds);

/// One deterministic forward pass of the detector plus the uncertainty head.
FeaturenessMaps compute_featureness(const Model& detector, const UncertaintyHead& head,
                                    const Image& image, const Thresholds& thresholds);

struct Keypoint {
  double x = 0, y = 0;
  double score = 0;
};

enum class BorderPolicy { clamp, error };

/// Retains exactly the keypoints whose rounded pixel location has F = 1,
/// preserving order. Throws on out-of-bounds keypoints (a detector bug
/// upstream); BorderPolicy controls rounding at the outer half-pixel rim.
std::vector<Keypoint> filter_keypoints(const std::vector<Keypoint>& kps, const PixelMask& f,
                                       BorderPolicy border = BorderPolicy::clamp);

/// Index-returning variant, for callers that carry per-keypoint side data.
std::vector<int> filter_keypoint_indices(const std::vector<Keypoint>& kps, const PixelMask& f,
                                         BorderPolicy border = BorderPolicy::clamp);

/// Alternative application mode: zeroes masked-out pixels before extraction.
Image apply_mask_to_image(const Image& img, const PixelMask& f);

/// Percentage of pixels with F = 1.
double mask_area(const PixelMask& f);

/// Writes P.png, U.png (8-bit linear), F.png (0/255) and P.csv, U.csv
/// (6-decimal reals) into the directory.
void export_heatmaps(const FeaturenessMaps& maps, const std::string& dir);

/// CSV heatmap helpers (one row per image row, 6 decimals).
void write_map_csv(const std::string& path, const Image& map);
Image read_map_csv(const std::string& path);

}  // namespace featureness
