#include "featureness/uncertainty_head.hpp"

#include <cmath>
#include <thread>

#include "featureness/checkpoint.hpp"

namespace featureness {

namespace {

Tensor concat_feat_prob(const Tensor& feat, const Tensor& prob) {
  if (feat.h != prob.h || feat.w != prob.w || prob.c != 1) {
    throw std::invalid_argument("uncertainty head: feat/prob shape mismatch");
  }
  Tensor in(feat.c + 1, feat.h, feat.w);
  std::copy(feat.v.begin(), feat.v.end(), in.v.begin());
  std::copy(prob.v.begin(), prob.v.end(), in.v.begin() + feat.v.size());
  return in;
}

}  // namespace

UncertaintyHead UncertaintyHead::build(const Config& config) {
  UncertaintyHead head;
  head.config = config;
  const int in = config.feat_channels + 1;
  head.net_.add(std::make_unique<Conv2d>("uhead.conv0", 3, in, config.hidden));
  head.net_.add(std::make_unique<ReLU>());
  head.net_.add(std::make_unique<Conv2d>("uhead.conv1", 3, config.hidden, config.hidden));
  head.net_.add(std::make_unique<ReLU>());
  head.net_.add(std::make_unique<Conv2d>("uhead.conv2", 1, config.hidden, 1));
  head.net_.add(std::make_unique<Sigmoid>());

  Rng init_rng(config.init_seed);
  for (size_t i = 0; i < head.net_.size(); ++i) {
    if (auto* conv = dynamic_cast<Conv2d*>(&head.net_.layer(i))) {
      Rng layer_rng = init_rng.derive(conv->name());
      conv->init_he_uniform(layer_rng);
    }
  }
  return head;
}

Tensor UncertaintyHead::infer(const Tensor& feat, const Tensor& prob) const {
  return net_.forward(concat_feat_prob(feat, prob), nullptr, nullptr);
}

Tensor UncertaintyHead::forward_cached(const Tensor& feat, const Tensor& prob,
                                       std::vector<LayerCache>& caches) const {
  return net_.forward(concat_feat_prob(feat, prob), &caches, nullptr);
}

void UncertaintyHead::backward(const Tensor& du, const std::vector<LayerCache>& caches,
                               Grads& grads) const {
  net_.backward(du, caches, std::span<std::vector<double>>(grads.g));
}

Image variance_to_target(const VarianceMap& var) {
  Image target(var.height, var.width);
  for (size_t i = 0; i < var.var.size(); ++i) {
    if (var.var[i] < 0.0) throw std::invalid_argument("variance_to_target: negative variance");
    target.data[i] = static_cast<float>(std::min(1.0, var.var[i] / 0.25));
  }
  return target;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("pearson: size mismatch");
  }
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  const double denom = std::sqrt(va * vb);
  return denom > 0.0 ? cov / denom : 0.0;
}

double bce_mean(const Tensor& pred, const Image& target) {
  if (pred.h != target.height || pred.w != target.width) {
    throw std::invalid_argument("bce_mean: shape mismatch");
  }
  double sum = 0.0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    const double u = std::clamp(pred.v[i], 1e-7, 1.0 - 1e-7);
    const double t = target.data[i];
    sum += -(t * std::log(u) + (1.0 - t) * std::log(1.0 - u));
  }
  return sum / static_cast<double>(pred.v.size());
}

Stage3Result train_stage3(const Model& detector, const Model& bayes_model,
                          const CorpusConfig& corpus_cfg, const Stage3Config& config, Rng& rng) {
  if (bayes_model.config.dropout_rate <= 0.0) {
    throw std::invalid_argument("train_stage3: second argument must be the stage-2 Bayes model");
  }
  Model sampler = bayes_model;
  sampler.dropout_active = true;

  Corpus corpus = build_corpus(corpus_cfg, rng.derive("corpus"));
  const int n_images = static_cast<int>(corpus.images.size());

  // Precompute MC targets once per image with fixed seeds: the 16x sampling
  // cost is paid a single time and training becomes deterministic. Detector
  // outputs are recomputed per step instead of cached (the full feature maps
  // would not fit in memory).
  std::vector<Image> targets(n_images);
  const unsigned hw_threads = std::max(1u, std::thread::hardware_concurrency());
  const int n_threads =
      config.threads > 0 ? config.threads : static_cast<int>(std::min<unsigned>(hw_threads, 8));
  Rng target_rng(config.mc_seed);
  for (int i = 0; i < n_images; ++i) {  // mc_variance parallelizes over passes internally
    const uint64_t seed = target_rng.derive(static_cast<uint64_t>(i)).seed();
    auto [mean, var] = mc_variance(sampler, corpus.images[i], config.mc_passes, seed);
    Image target = variance_to_target(var);
    if (config.binarize_targets) {
      for (auto& t : target.data) t = t >= 0.5f ? 1.0f : 0.0f;
    }
    targets[i] = std::move(target);
  }

  Stage3Result result;
  UncertaintyHead::Config head_cfg;
  head_cfg.feat_channels = detector.config.backbone_out();
  head_cfg.init_seed = rng.derive("uhead_init").next_u64();
  result.head = UncertaintyHead::build(head_cfg);
  result.metrics.columns = {"epoch", "bce", "holdout_pearson"};

  // Held-out images with independently re-sampled MC targets. These are few,
  // so caching their detector outputs is fine.
  struct HoldoutSample {
    Tensor feat, prob;
    Image target;
  };
  std::vector<HoldoutSample> holdout;
  {
    Rng hold_rng = rng.derive("stage3_holdout");
    Rng hold_mc = target_rng.derive("holdout_resample");
    for (int i = 0; i < config.holdout_images; ++i) {
      Rng one = hold_rng.derive(static_cast<uint64_t>(i));
      Image img = gen_texture_image(one, corpus_cfg.image_size, corpus_cfg.image_size);
      const DenseOutputs out = detector_infer(detector, img);
      const uint64_t seed = hold_mc.derive(static_cast<uint64_t>(i)).seed();
      auto [mean, var] = mc_variance(sampler, img, config.mc_passes, seed);
      holdout.push_back({out.feat, out.prob, variance_to_target(var)});
    }
  }

  auto holdout_pearson = [&]() {
    std::vector<double> pred, target;
    for (const HoldoutSample& s : holdout) {
      const Tensor u = result.head.infer(s.feat, s.prob);
      for (size_t i = 0; i < u.v.size(); ++i) {
        pred.push_back(u.v[i]);
        target.push_back(s.target.data[i]);
      }
    }
    return pearson(pred, target);
  };

  Adam adam({config.lr});
  Rng train_rng = rng.derive("train3");
  double initial_epoch_loss = -1.0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<int> order(n_images);
    for (int i = 0; i < n_images; ++i) order[i] = i;
    for (int i = n_images - 1; i > 0; --i) {
      std::swap(order[i], order[train_rng.uniform_index(i + 1)]);
    }

    double epoch_bce = 0.0;
    for (int step = 0; step * n_threads < n_images; ++step) {
      const int batch = std::min(n_threads, n_images - step * n_threads);
      std::vector<Grads> local(batch);
      std::vector<double> losses(batch, 0.0);

      auto worker = [&](int tid) {
        for (int k = tid; k < batch; k += n_threads) {
          const int idx = order[step * n_threads + k];
          const DenseOutputs out = detector_infer(detector, corpus.images[idx]);
          const Image& tgt = targets[idx];

          std::vector<LayerCache> caches;
          const Tensor u = result.head.forward_cached(out.feat, out.prob, caches);
          const double n_px = static_cast<double>(u.v.size());
          Tensor du(1, u.h, u.w);
          double loss = 0.0;
          for (size_t i = 0; i < u.v.size(); ++i) {
            const double uc = std::clamp(u.v[i], 1e-7, 1.0 - 1e-7);
            const double t = tgt.data[i];
            loss += -(t * std::log(uc) + (1.0 - t) * std::log(1.0 - uc));
            du.v[i] = (uc - t) / (uc * (1.0 - uc)) / n_px;
          }
          losses[k] = loss / n_px;

          local[k].init(result.head.params());
          result.head.backward(du, caches, local[k]);
        }
      };
      if (n_threads == 1) {
        worker(0);
      } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
        for (auto& t : pool) t.join();
      }

      Grads total;
      total.init(result.head.params());
      for (int k = 0; k < batch; ++k) {  // index order: deterministic reduction
        total.add(local[k]);
        epoch_bce += losses[k];
      }
      for (auto& gi : total.g) {
        for (auto& g : gi) g /= batch;
      }
      adam.step(result.head.params(), total);
    }
    epoch_bce /= n_images;
    if (epoch == 0) initial_epoch_loss = std::max(epoch_bce, 1e-9);
    if (epoch_bce > 10.0 * initial_epoch_loss) {
      throw std::runtime_error("train_stage3: divergence (epoch BCE " +
                               std::to_string(epoch_bce) + " > 10x initial)");
    }
    const double hp = holdout_pearson();
    result.metrics.rows.push_back({double(epoch), epoch_bce, hp});
    result.holdout_pearson = hp;
  }
  return result;
}

void save_uhead(const UncertaintyHead& head, const std::string& path,
                const std::string& detector_checkpoint_path) {
  ParamFile file;
  file.stage = "stage3";
  file.config = nlohmann::json{
      {"kind", "uncertainty_head"},
      {"feat_channels", head.config.feat_channels},
      {"hidden", head.config.hidden},
      {"init_seed", head.config.init_seed},
      {"detector_hash", file_content_hash(detector_checkpoint_path)}};
  for (const auto& p : head.params()) {
    file.blocks.push_back({p.name, p.shape, *p.values});
  }
  write_param_file(path, file);
}

UncertaintyHead load_uhead(const std::string& path, const std::string& detector_checkpoint_path) {
  const ParamFile file = read_param_file(path);
  if (file.config.value("kind", "") != "uncertainty_head") {
    throw checkpoint_corrupt_error("not an uncertainty-head checkpoint: " + path);
  }
  const std::string expected = file.config.value("detector_hash", "");
  const std::string actual = file_content_hash(detector_checkpoint_path);
  if (expected != actual) {
    throw std::runtime_error("uncertainty head was distilled from a different detector: hash " +
                             expected + " vs " + actual + " (" + detector_checkpoint_path + ")");
  }

  UncertaintyHead::Config config;
  config.feat_channels = file.config.at("feat_channels").get<int>();
  config.hidden = file.config.at("hidden").get<int>();
  config.init_seed = file.config.at("init_seed").get<uint64_t>();
  UncertaintyHead head = UncertaintyHead::build(config);

  auto params = head.params();
  if (params.size() != file.blocks.size()) {
    throw checkpoint_shape_error("uncertainty-head parameter count mismatch in " + path);
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (file.blocks[i].name != params[i].name || file.blocks[i].shape != params[i].shape) {
      throw checkpoint_shape_error("uncertainty-head block mismatch: " + file.blocks[i].name);
    }
    *params[i].values = file.blocks[i].data;
  }
  return head;
}

}  // namespace featureness
