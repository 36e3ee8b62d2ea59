#include "featureness/matching.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace featureness {

namespace {

// Generic brute-force matcher over a distance callback.
template <typename DistFn>
std::vector<Match> match_impl(size_t na, size_t nb, const MatchConfig& config, DistFn dist) {
  if (na == 0 || nb == 0) return {};

  std::vector<int> best_b(na, -1);
  std::vector<double> d1(na, std::numeric_limits<double>::infinity());
  std::vector<double> d2(na, std::numeric_limits<double>::infinity());
  for (size_t i = 0; i < na; ++i) {
    for (size_t j = 0; j < nb; ++j) {
      const double d = dist(i, j);
      if (d < d1[i]) {
        d2[i] = d1[i];
        d1[i] = d;
        best_b[i] = static_cast<int>(j);
      } else if (d < d2[i]) {
        d2[i] = d;
      }
    }
  }

  std::vector<int> best_a;
  if (config.mutual) {
    best_a.assign(nb, -1);
    std::vector<double> rd(nb, std::numeric_limits<double>::infinity());
    for (size_t j = 0; j < nb; ++j) {
      for (size_t i = 0; i < na; ++i) {
        const double d = dist(i, j);
        if (d < rd[j]) {
          rd[j] = d;
          best_a[j] = static_cast<int>(i);
        }
      }
    }
  }

  std::vector<Match> matches;
  for (size_t i = 0; i < na; ++i) {
    if (best_b[i] < 0) continue;
    if (config.ratio && !(d1[i] < *config.ratio * d2[i])) continue;
    if (config.mutual && best_a[best_b[i]] != static_cast<int>(i)) continue;
    matches.push_back({static_cast<int>(i), best_b[i], d1[i]});
  }
  return matches;
}

}  // namespace

std::vector<Match> match_binary(const std::vector<BinaryDescriptor>& a,
                                const std::vector<BinaryDescriptor>& b,
                                const MatchConfig& config) {
  return match_impl(a.size(), b.size(), config, [&](size_t i, size_t j) {
    return static_cast<double>(hamming_distance(a[i], b[j]));
  });
}

std::vector<Match> match_float(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                               const MatchConfig& config) {
  if (a.rows() > 0 && b.rows() > 0 && a.cols() != b.cols()) {
    throw std::invalid_argument("match_float: descriptor dimension mismatch");
  }
  return match_impl(static_cast<size_t>(a.rows()), static_cast<size_t>(b.rows()), config,
                    [&](size_t i, size_t j) {
                      return (a.row(static_cast<Eigen::Index>(i)) -
                              b.row(static_cast<Eigen::Index>(j)))
                          .norm();
                    });
}

DescriptorSet DescriptorSet::from_binary(std::vector<BinaryDescriptor> d) {
  DescriptorSet set;
  set.kind = Kind::binary;
  set.binary = std::move(d);
  return set;
}

DescriptorSet DescriptorSet::from_real(Eigen::MatrixXd d) {
  DescriptorSet set;
  set.kind = Kind::real;
  set.real = std::move(d);
  return set;
}

size_t DescriptorSet::size() const {
  return kind == Kind::binary ? binary.size()
                              : (kind == Kind::real ? static_cast<size_t>(real.rows()) : 0);
}

std::vector<Match> match(const DescriptorSet& a, const DescriptorSet& b,
                         const MatchConfig& config) {
  if (a.kind != b.kind) {
    throw std::invalid_argument("match: mixed descriptor kinds");
  }
  switch (a.kind) {
    case DescriptorSet::Kind::binary:
      return match_binary(a.binary, b.binary, config);
    case DescriptorSet::Kind::real:
      return match_float(a.real, b.real, config);
    default:
      throw std::invalid_argument("match: empty descriptor sets");
  }
}

}  // namespace featureness
