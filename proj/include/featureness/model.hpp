#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include "featureness/image.hpp"
#include "featureness/layers.hpp"

namespace featureness {

/// Declarative architecture: a shared fully-convolutional backbone feeding a
/// keypoint-probability head and a descriptor head. Dense outputs keep the
/// input's spatial size (stride 1, same padding throughout).
struct ModelConfig {
  int in_channels = 1;
  int backbone_kernel = 3;
  std::vector<int> backbone_channels = {16, 32, 64};
  int kp_hidden = 16;
  int desc_dim = 32;
  double dropout_rate = 0.0;  // > 0 inserts dropout after each backbone activation
  uint64_t init_seed = 1;

  int backbone_out() const { return backbone_channels.empty() ? in_channels : backbone_channels.back(); }
};

struct HeadOut {
  Tensor feat;  // (backbone_out, h, w)
  Tensor prob;  // (1, h, w), sigmoid output
  Tensor desc;  // (desc_dim, h, w), unit norm per pixel
};

struct ModelCache {
  std::vector<LayerCache> backbone, kp, desc;
  Tensor feat;
};

/// Gradient buffers aligned with Model::params() order.
struct Grads {
  std::vector<std::vector<double>> g;

  void init(const std::vector<ParamView>& params);
  void zero();
  void add(const Grads& other);
};

class Model {
 public:
  Model() = default;
  Model(const Model& o);
  Model& operator=(const Model& o);
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  /// Builds and He-initializes the architecture described by the config.
  static Model build(const ModelConfig& config);

  HeadOut forward(const Tensor& input, Rng* dropout_rng = nullptr,
                  ModelCache* cache = nullptr) const;

  /// Backpropagates head gradients (either may be empty) and accumulates
  /// parameter gradients. Single-writer: not for concurrent use on one Grads.
  void backward(const ModelCache& cache, const Tensor& dprob, const Tensor& ddesc,
                Grads& grads) const;

  std::vector<ParamView> params();
  std::vector<ConstParamView> params() const;
  size_t param_count() const;

  /// Converts an image to the network input tensor.
  static Tensor to_input(const Image& img);

  uint64_t forward_passes() const { return forward_passes_.load(); }
  void reset_forward_passes() const { forward_passes_.store(0); }

  ModelConfig config;
  std::string stage = "stage1";
  bool dropout_active = false;

  Sequential backbone;
  Sequential kp_head;
  Sequential desc_head;

 private:
  mutable std::atomic<uint64_t> forward_passes_{0};
};

}  // namespace featureness
