#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "featureness/rng.hpp"
#include "featureness/tensor.hpp"

namespace featureness {

/// Non-owning view of one named parameter block (float32 storage).
struct ParamView {
  std::string name;
  std::vector<int> shape;
  std::vector<float>* values;
};
struct ConstParamView {
  std::string name;
  std::vector<int> shape;
  const std::vector<float>* values;
};

/// Per-call activation cache filled during a training forward pass and
/// consumed by backward. Keeping it outside the layer makes eval-mode forward
/// const and safe to run from many threads.
struct LayerCache {
  Tensor saved;              // input or output, layer-dependent
  std::vector<double> aux;   // dropout mask / per-pixel norms
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string kind() const = 0;
  /// cache may be null (inference). rng may be null (no stochasticity).
  virtual Tensor forward(const Tensor& x, LayerCache* cache, Rng* rng) const = 0;
  /// grads spans this layer's params() in order; gradients are accumulated.
  virtual Tensor backward(const Tensor& dy, const LayerCache& cache,
                          std::span<std::vector<double>> grads) const = 0;
  virtual std::vector<ParamView> params() { return {}; }
  virtual std::vector<ConstParamView> params() const { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

/// k x k convolution, stride 1, same (zero) padding. Runs as im2col + GEMM in
/// row blocks to bound scratch memory on large frames.
class Conv2d : public Layer {
 public:
  Conv2d(std::string name, int kernel, int in_channels, int out_channels);

  std::string kind() const override { return "conv"; }
  Tensor forward(const Tensor& x, LayerCache* cache, Rng* rng) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache,
                  std::span<std::vector<double>> grads) const override;
  std::vector<ParamView> params() override;
  std::vector<ConstParamView> params() const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

  void init_he_uniform(Rng& rng);

  int kernel() const { return kernel_; }
  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  int kernel_, in_channels_, out_channels_;
  std::vector<float> weight_;  // (out, in, k, k) row-major
  std::vector<float> bias_;    // (out)
};

class ReLU : public Layer {
 public:
  std::string kind() const override { return "relu"; }
  Tensor forward(const Tensor& x, LayerCache* cache, Rng* rng) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache,
                  std::span<std::vector<double>> grads) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }
};

class Sigmoid : public Layer {
 public:
  std::string kind() const override { return "sigmoid"; }
  Tensor forward(const Tensor& x, LayerCache* cache, Rng* rng) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache,
                  std::span<std::vector<double>> grads) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sigmoid>(*this); }
};

/// Inverted dropout: zeroes with probability `rate` and rescales survivors by
/// 1/(1-rate), so eval-mode expectations need no correction. Identity when no
/// random stream is supplied.
class Dropout : public Layer {
 public:
  explicit Dropout(double rate);
  std::string kind() const override { return "dropout"; }
  Tensor forward(const Tensor& x, LayerCache* cache, Rng* rng) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache,
                  std::span<std::vector<double>> grads) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }
  double rate() const { return rate_; }

 private:
  double rate_;
};

/// Per-pixel L2 normalization across channels (unit-norm descriptors).
class PixelL2Norm : public Layer {
 public:
  std::string kind() const override { return "l2norm"; }
  Tensor forward(const Tensor& x, LayerCache* cache, Rng* rng) const override;
  Tensor backward(const Tensor& dy, const LayerCache& cache,
                  std::span<std::vector<double>> grads) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<PixelL2Norm>(*this); }
};

/// Ordered layer stack with value semantics.
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& o);
  Sequential& operator=(const Sequential& o);
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  void insert(size_t index, std::unique_ptr<Layer> layer);

  Tensor forward(const Tensor& x, std::vector<LayerCache>* caches, Rng* rng) const;
  /// grads spans the params of all layers, in layer order.
  Tensor backward(const Tensor& dy, const std::vector<LayerCache>& caches,
                  std::span<std::vector<double>> grads) const;

  std::vector<ParamView> params();
  std::vector<ConstParamView> params() const;
  size_t size() const { return layers_.size(); }
  Layer& layer(size_t i) { return *layers_[i]; }
  const Layer& layer(size_t i) const { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace featureness
