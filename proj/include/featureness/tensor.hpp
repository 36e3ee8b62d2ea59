#pragma once

#include <vector>

namespace featureness {

/// Dense (channels, height, width) activation block. Computation runs in
/// double precision so finite-difference gradient checks resolve cleanly;
/// learned parameters are stored separately as float32.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_, double fill = 0.0)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

  int size() const { return c * h * w; }
  int plane() const { return h * w; }

  double& at(int ci, int y, int x) {
    return v[(static_cast<size_t>(ci) * h + y) * w + x];
  }
  double at(int ci, int y, int x) const {
    return v[(static_cast<size_t>(ci) * h + y) * w + x];
  }

  double* channel(int ci) { return v.data() + static_cast<size_t>(ci) * h * w; }
  const double* channel(int ci) const { return v.data() + static_cast<size_t>(ci) * h * w; }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.c, t.h, t.w); }

  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

}  // namespace featureness
