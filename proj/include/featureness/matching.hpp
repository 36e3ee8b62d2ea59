#pragma once

#include <optional>

#include "featureness/keypoints.hpp"

namespace featureness {

struct Match {
  int a = 0;
  int b = 0;
  double distance = 0.0;
};

struct MatchConfig {
  bool mutual = true;
  std::optional<double> ratio;  // Lowe ratio: best / second-best must be < ratio
};

/// Nearest neighbor per A-descriptor with optional mutual-consistency and
/// ratio filters. Ties break deterministically to the lower index.
std::vector<Match> match_binary(const std::vector<BinaryDescriptor>& a,
                                const std::vector<BinaryDescriptor>& b,
                                const MatchConfig& config);

/// Same contract over real-valued descriptors (Euclidean distance).
std::vector<Match> match_float(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                               const MatchConfig& config);

/// Tagged union so mixed descriptor kinds are rejected at the API boundary.
struct DescriptorSet {
  enum class Kind { none, binary, real } kind = Kind::none;
  std::vector<BinaryDescriptor> binary;
  Eigen::MatrixXd real;

  static DescriptorSet from_binary(std::vector<BinaryDescriptor> d);
  static DescriptorSet from_real(Eigen::MatrixXd d);
  size_t size() const;
};

std::vector<Match> match(const DescriptorSet& a, const DescriptorSet& b,
                         const MatchConfig& config);

}  // namespace featureness
