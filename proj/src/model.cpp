#include "featureness/model.hpp"

#include <stdexcept>

namespace featureness {

void Grads::init(const std::vector<ParamView>& params) {
  g.resize(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    g[i].assign(params[i].values->size(), 0.0);
  }
}

void Grads::zero() {
  for (auto& gi : g) std::fill(gi.begin(), gi.end(), 0.0);
}

void Grads::add(const Grads& other) {
  if (other.g.size() != g.size()) throw std::invalid_argument("Grads::add: layout mismatch");
  for (size_t i = 0; i < g.size(); ++i) {
    for (size_t j = 0; j < g[i].size(); ++j) g[i][j] += other.g[i][j];
  }
}

Model::Model(const Model& o)
    : config(o.config), stage(o.stage), dropout_active(o.dropout_active),
      backbone(o.backbone), kp_head(o.kp_head), desc_head(o.desc_head),
      forward_passes_(o.forward_passes_.load()) {}

Model& Model::operator=(const Model& o) {
  if (this != &o) {
    config = o.config;
    stage = o.stage;
    dropout_active = o.dropout_active;
    backbone = o.backbone;
    kp_head = o.kp_head;
    desc_head = o.desc_head;
    forward_passes_.store(o.forward_passes_.load());
  }
  return *this;
}

Model Model::build(const ModelConfig& config) {
  Model m;
  m.config = config;

  int in = config.in_channels;
  int conv_idx = 0;
  for (const int out : config.backbone_channels) {
    m.backbone.add(std::make_unique<Conv2d>("backbone.conv" + std::to_string(conv_idx),
                                            config.backbone_kernel, in, out));
    m.backbone.add(std::make_unique<ReLU>());
    if (config.dropout_rate > 0.0) {
      m.backbone.add(std::make_unique<Dropout>(config.dropout_rate));
    }
    in = out;
    ++conv_idx;
  }

  const int feat = config.backbone_out();
  m.kp_head.add(std::make_unique<Conv2d>("kp.conv0", 1, feat, config.kp_hidden));
  m.kp_head.add(std::make_unique<ReLU>());
  m.kp_head.add(std::make_unique<Conv2d>("kp.conv1", 1, config.kp_hidden, 1));
  m.kp_head.add(std::make_unique<Sigmoid>());

  m.desc_head.add(std::make_unique<Conv2d>("desc.conv0", 1, feat, config.desc_dim));
  m.desc_head.add(std::make_unique<PixelL2Norm>());

  Rng init_rng(config.init_seed);
  for (Sequential* seq : {&m.backbone, &m.kp_head, &m.desc_head}) {
    for (size_t i = 0; i < seq->size(); ++i) {
      if (auto* conv = dynamic_cast<Conv2d*>(&seq->layer(i))) {
        Rng layer_rng = init_rng.derive(conv->name());
        conv->init_he_uniform(layer_rng);
      }
    }
  }
  return m;
}

Tensor Model::to_input(const Image& img) {
  // Centering keeps He-initialized ReLU stacks away from the all-negative
  // regime that raw [0,1] intensities can push small channel counts into.
  Tensor t(1, img.height, img.width);
  for (size_t i = 0; i < img.size(); ++i) t.v[i] = img.data[i] - 0.5;
  return t;
}

HeadOut Model::forward(const Tensor& input, Rng* dropout_rng, ModelCache* cache) const {
  if (input.h < 16 || input.w < 16) {
    throw std::invalid_argument("Model::forward: minimum input size is 16x16");
  }
  forward_passes_.fetch_add(1, std::memory_order_relaxed);
  Rng* rng = dropout_active ? dropout_rng : nullptr;

  HeadOut out;
  out.feat = backbone.forward(input, cache ? &cache->backbone : nullptr, rng);
  out.prob = kp_head.forward(out.feat, cache ? &cache->kp : nullptr, rng);
  out.desc = desc_head.forward(out.feat, cache ? &cache->desc : nullptr, rng);
  if (cache) cache->feat = out.feat;
  return out;
}

void Model::backward(const ModelCache& cache, const Tensor& dprob, const Tensor& ddesc,
                     Grads& grads) const {
  const size_t n_backbone = backbone.params().size();
  const size_t n_kp = kp_head.params().size();
  const size_t n_desc = desc_head.params().size();
  if (grads.g.size() != n_backbone + n_kp + n_desc) {
    throw std::invalid_argument("Model::backward: grads layout mismatch");
  }
  std::span<std::vector<double>> all(grads.g);

  Tensor dfeat = Tensor::zeros_like(cache.feat);
  if (dprob.size() > 0) {
    const Tensor d = kp_head.backward(dprob, cache.kp, all.subspan(n_backbone, n_kp));
    for (size_t i = 0; i < dfeat.v.size(); ++i) dfeat.v[i] += d.v[i];
  }
  if (ddesc.size() > 0) {
    const Tensor d = desc_head.backward(ddesc, cache.desc, all.subspan(n_backbone + n_kp, n_desc));
    for (size_t i = 0; i < dfeat.v.size(); ++i) dfeat.v[i] += d.v[i];
  }
  backbone.backward(dfeat, cache.backbone, all.subspan(0, n_backbone));
}

std::vector<ParamView> Model::params() {
  std::vector<ParamView> out;
  for (Sequential* seq : {&backbone, &kp_head, &desc_head}) {
    for (auto& p : seq->params()) out.push_back(p);
  }
  return out;
}

std::vector<ConstParamView> Model::params() const {
  std::vector<ConstParamView> out;
  for (const Sequential* seq : {&backbone, &kp_head, &desc_head}) {
    for (auto& p : seq->params()) out.push_back(p);
  }
  return out;
}

size_t Model::param_count() const {
  size_t n = 0;
  for (const auto& p : params()) n += p.values->size();
  return n;
}

}  // namespace featureness
