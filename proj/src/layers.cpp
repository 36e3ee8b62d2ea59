#include "featureness/layers.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace featureness {

namespace {

using MatrixXdRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Rows of the patch matrix for output rows [y0, y1): one column per output
// pixel, one row per (in_channel, ky, kx) tap. Zero padding outside the image.
void im2col_rows(const Tensor& x, int kernel, int y0, int y1, MatrixXdRM& col) {
  const int pad = kernel / 2;
  const int w = x.w, h = x.h;
  const int cols = (y1 - y0) * w;
  col.resize(static_cast<Eigen::Index>(x.c) * kernel * kernel, cols);
  for (int ci = 0; ci < x.c; ++ci) {
    const double* plane = x.channel(ci);
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const int row = (ci * kernel + ky) * kernel + kx;
        double* dst = col.data() + static_cast<size_t>(row) * cols;
        for (int y = y0; y < y1; ++y) {
          const int sy = y + ky - pad;
          double* out = dst + static_cast<size_t>(y - y0) * w;
          if (sy < 0 || sy >= h) {
            std::fill(out, out + w, 0.0);
            continue;
          }
          const double* src = plane + static_cast<size_t>(sy) * w;
          for (int xx = 0; xx < w; ++xx) {
            const int sx = xx + kx - pad;
            out[xx] = (sx < 0 || sx >= w) ? 0.0 : src[sx];
          }
        }
      }
    }
  }
}

int block_rows(int in_channels, int kernel, int w, int h) {
  // Bound the im2col scratch to roughly 16 MB of doubles.
  const long target = 2'000'000;
  const long per_row = static_cast<long>(in_channels) * kernel * kernel * w;
  const long rows = std::max(1L, target / std::max(per_row, 1L));
  return static_cast<int>(std::min<long>(rows, h));
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::string name, int kernel, int in_channels, int out_channels)
    : name_(std::move(name)), kernel_(kernel), in_channels_(in_channels),
      out_channels_(out_channels),
      weight_(static_cast<size_t>(out_channels) * in_channels * kernel * kernel, 0.0f),
      bias_(out_channels, 0.0f) {
  if (kernel % 2 == 0) throw std::invalid_argument("Conv2d: kernel must be odd");
}

void Conv2d::init_he_uniform(Rng& rng) {
  const double fan_in = static_cast<double>(in_channels_) * kernel_ * kernel_;
  const double limit = std::sqrt(6.0 / fan_in);
  for (auto& w : weight_) w = static_cast<float>(rng.uniform(-limit, limit));
  for (auto& b : bias_) b = 0.0f;
}

Tensor Conv2d::forward(const Tensor& x, LayerCache* cache, Rng*) const {
  if (x.c != in_channels_) {
    throw std::invalid_argument("Conv2d " + name_ + ": expected " +
                                std::to_string(in_channels_) + " input channels, got " +
                                std::to_string(x.c));
  }
  if (cache) cache->saved = x;

  const int ikk = in_channels_ * kernel_ * kernel_;
  Eigen::MatrixXd wmat(out_channels_, ikk);
  for (int o = 0; o < out_channels_; ++o) {
    for (int j = 0; j < ikk; ++j) wmat(o, j) = weight_[static_cast<size_t>(o) * ikk + j];
  }

  Tensor y(out_channels_, x.h, x.w);
  MatrixXdRM col;
  const int block = block_rows(in_channels_, kernel_, x.w, x.h);
  for (int y0 = 0; y0 < x.h; y0 += block) {
    const int y1 = std::min(x.h, y0 + block);
    im2col_rows(x, kernel_, y0, y1, col);
    const int cols = (y1 - y0) * x.w;
    MatrixXdRM out = wmat * col;
    for (int o = 0; o < out_channels_; ++o) {
      double* dst = y.channel(o) + static_cast<size_t>(y0) * x.w;
      const double* src = out.data() + static_cast<size_t>(o) * cols;
      const double b = bias_[o];
      for (int i = 0; i < cols; ++i) dst[i] = src[i] + b;
    }
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy, const LayerCache& cache,
                        std::span<std::vector<double>> grads) const {
  const Tensor& x = cache.saved;
  const int ikk = in_channels_ * kernel_ * kernel_;
  const int pad = kernel_ / 2;

  Eigen::MatrixXd wmat(out_channels_, ikk);
  for (int o = 0; o < out_channels_; ++o) {
    for (int j = 0; j < ikk; ++j) wmat(o, j) = weight_[static_cast<size_t>(o) * ikk + j];
  }

  std::vector<double>& gw = grads[0];
  std::vector<double>& gb = grads[1];

  Tensor dx(in_channels_, x.h, x.w);
  MatrixXdRM col;
  Eigen::MatrixXd gw_acc = Eigen::MatrixXd::Zero(out_channels_, ikk);
  const int block = block_rows(in_channels_, kernel_, x.w, x.h);
  for (int y0 = 0; y0 < x.h; y0 += block) {
    const int y1 = std::min(x.h, y0 + block);
    const int cols = (y1 - y0) * x.w;
    im2col_rows(x, kernel_, y0, y1, col);

    MatrixXdRM dymat(out_channels_, cols);
    for (int o = 0; o < out_channels_; ++o) {
      const double* src = dy.channel(o) + static_cast<size_t>(y0) * x.w;
      std::copy(src, src + cols, dymat.data() + static_cast<size_t>(o) * cols);
    }

    gw_acc.noalias() += dymat * col.transpose();
    for (int o = 0; o < out_channels_; ++o) {
      gb[o] += dymat.row(o).sum();
    }

    // dX: scatter-add of W^T * dY back through the patch taps (col2im).
    MatrixXdRM dcol = wmat.transpose() * dymat;
    for (int ci = 0; ci < in_channels_; ++ci) {
      double* plane = dx.channel(ci);
      for (int ky = 0; ky < kernel_; ++ky) {
        for (int kx = 0; kx < kernel_; ++kx) {
          const int row = (ci * kernel_ + ky) * kernel_ + kx;
          const double* src = dcol.data() + static_cast<size_t>(row) * cols;
          for (int y = y0; y < y1; ++y) {
            const int sy = y + ky - pad;
            if (sy < 0 || sy >= x.h) continue;
            const double* s = src + static_cast<size_t>(y - y0) * x.w;
            double* d = plane + static_cast<size_t>(sy) * x.w;
            for (int xx = 0; xx < x.w; ++xx) {
              const int sx = xx + kx - pad;
              if (sx >= 0 && sx < x.w) d[sx] += s[xx];
            }
          }
        }
      }
    }
  }

  for (int o = 0; o < out_channels_; ++o) {
    for (int j = 0; j < ikk; ++j) gw[static_cast<size_t>(o) * ikk + j] += gw_acc(o, j);
  }
  return dx;
}

std::vector<ParamView> Conv2d::params() {
  return {{name_ + ".weight", {out_channels_, in_channels_, kernel_, kernel_}, &weight_},
          {name_ + ".bias", {out_channels_}, &bias_}};
}

std::vector<ConstParamView> Conv2d::params() const {
  return {{name_ + ".weight", {out_channels_, in_channels_, kernel_, kernel_}, &weight_},
          {name_ + ".bias", {out_channels_}, &bias_}};
}

// ---------------------------------------------------------------------------
// Pointwise layers

Tensor ReLU::forward(const Tensor& x, LayerCache* cache, Rng*) const {
  if (cache) cache->saved = x;
  Tensor y = x;
  for (auto& v : y.v) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor ReLU::backward(const Tensor& dy, const LayerCache& cache,
                      std::span<std::vector<double>>) const {
  Tensor dx = dy;
  for (size_t i = 0; i < dx.v.size(); ++i) {
    if (cache.saved.v[i] <= 0.0) dx.v[i] = 0.0;
  }
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x, LayerCache* cache, Rng*) const {
  Tensor y = x;
  for (auto& v : y.v) v = 1.0 / (1.0 + std::exp(-v));
  if (cache) cache->saved = y;
  return y;
}

Tensor Sigmoid::backward(const Tensor& dy, const LayerCache& cache,
                         std::span<std::vector<double>>) const {
  Tensor dx = dy;
  for (size_t i = 0; i < dx.v.size(); ++i) {
    const double s = cache.saved.v[i];
    dx.v[i] *= s * (1.0 - s);
  }
  return dx;
}

Dropout::Dropout(double rate) : rate_(rate) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("Dropout: rate must be in [0, 1)");
}

Tensor Dropout::forward(const Tensor& x, LayerCache* cache, Rng* rng) const {
  if (rng == nullptr || rate_ == 0.0) {
    if (cache) cache->aux.clear();  // identity pass
    return x;
  }
  Tensor y = x;
  const double scale = 1.0 / (1.0 - rate_);
  if (cache) cache->aux.resize(y.v.size());
  for (size_t i = 0; i < y.v.size(); ++i) {
    const double m = rng->uniform() < rate_ ? 0.0 : scale;
    y.v[i] *= m;
    if (cache) cache->aux[i] = m;
  }
  return y;
}

Tensor Dropout::backward(const Tensor& dy, const LayerCache& cache,
                         std::span<std::vector<double>>) const {
  if (cache.aux.empty()) return dy;
  Tensor dx = dy;
  for (size_t i = 0; i < dx.v.size(); ++i) dx.v[i] *= cache.aux[i];
  return dx;
}

Tensor PixelL2Norm::forward(const Tensor& x, LayerCache* cache, Rng*) const {
  Tensor y = x;
  const int plane = x.plane();
  std::vector<double>* norms = nullptr;
  if (cache) {
    cache->saved = x;
    cache->aux.resize(plane);
    norms = &cache->aux;
  }
  for (int p = 0; p < plane; ++p) {
    double sq = 0.0;
    for (int ci = 0; ci < x.c; ++ci) {
      const double v = x.v[static_cast<size_t>(ci) * plane + p];
      sq += v * v;
    }
    const double n = std::max(std::sqrt(sq), 1e-12);
    if (norms) (*norms)[p] = n;
    for (int ci = 0; ci < x.c; ++ci) y.v[static_cast<size_t>(ci) * plane + p] /= n;
  }
  return y;
}

Tensor PixelL2Norm::backward(const Tensor& dy, const LayerCache& cache,
                             std::span<std::vector<double>>) const {
  const Tensor& x = cache.saved;
  const int plane = x.plane();
  Tensor dx = Tensor::zeros_like(dy);
  for (int p = 0; p < plane; ++p) {
    const double n = cache.aux[p];
    double dot = 0.0;  // x . dy at this pixel
    for (int ci = 0; ci < x.c; ++ci) {
      dot += x.v[static_cast<size_t>(ci) * plane + p] * dy.v[static_cast<size_t>(ci) * plane + p];
    }
    const double n3 = n * n * n;
    for (int ci = 0; ci < x.c; ++ci) {
      const size_t idx = static_cast<size_t>(ci) * plane + p;
      dx.v[idx] = dy.v[idx] / n - x.v[idx] * dot / n3;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Sequential

Sequential::Sequential(const Sequential& o) {
  layers_.reserve(o.layers_.size());
  for (const auto& l : o.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& o) {
  if (this != &o) {
    layers_.clear();
    layers_.reserve(o.layers_.size());
    for (const auto& l : o.layers_) layers_.push_back(l->clone());
  }
  return *this;
}

void Sequential::insert(size_t index, std::unique_ptr<Layer> layer) {
  layers_.insert(layers_.begin() + index, std::move(layer));
}

Tensor Sequential::forward(const Tensor& x, std::vector<LayerCache>* caches, Rng* rng) const {
  if (caches) caches->resize(layers_.size());
  Tensor cur = x;
  for (size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i]->forward(cur, caches ? &(*caches)[i] : nullptr, rng);
    for (const double v : cur.v) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("non-finite activation after layer " + std::to_string(i) +
                                 " (" + layers_[i]->kind() + ")");
      }
    }
  }
  return cur;
}

Tensor Sequential::backward(const Tensor& dy, const std::vector<LayerCache>& caches,
                            std::span<std::vector<double>> grads) const {
  // Pre-compute per-layer grad offsets (params() order).
  std::vector<size_t> offsets(layers_.size() + 1, 0);
  for (size_t i = 0; i < layers_.size(); ++i) {
    offsets[i + 1] = offsets[i] + layers_[i]->params().size();
  }
  Tensor cur = dy;
  for (size_t i = layers_.size(); i-- > 0;) {
    const size_t n = offsets[i + 1] - offsets[i];
    cur = layers_[i]->backward(cur, caches[i], grads.subspan(offsets[i], n));
  }
  return cur;
}

std::vector<ParamView> Sequential::params() {
  std::vector<ParamView> out;
  for (auto& l : layers_) {
    for (auto& p : l->params()) out.push_back(p);
  }
  return out;
}

std::vector<ConstParamView> Sequential::params() const {
  std::vector<ConstParamView> out;
  for (const auto& l : layers_) {
    const Layer& layer = *l;
    for (auto& p : layer.params()) out.push_back(p);
  }
  return out;
}

}  // namespace featureness
