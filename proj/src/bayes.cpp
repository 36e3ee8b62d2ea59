#include "featureness/bayes.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "featureness/image_io.hpp"

namespace featureness {

Model bayesify(const Model& model, const BayesConfig& config) {
  if (config.dropout_rate <= 0.0 || config.dropout_rate >= 1.0) {
    throw std::invalid_argument("bayesify: dropout_rate must be in (0, 1)");
  }
  if (model.config.dropout_rate > 0.0) {
    throw std::invalid_argument("bayesify: model is already Bayesian");
  }
  for (size_t i = 0; i < model.backbone.size(); ++i) {
    if (model.backbone.layer(i).kind() == "dropout") {
      throw std::invalid_argument("bayesify: model is already Bayesian");
    }
  }

  // Rebuild with dropout in the architecture, then copy parameters by name.
  ModelConfig mc = model.config;
  mc.dropout_rate = config.dropout_rate;
  Model out = Model::build(mc);
  out.stage = model.stage;
  out.dropout_active = true;

  auto src = model.params();
  auto dst = out.params();
  if (src.size() != dst.size()) throw std::logic_error("bayesify: parameter layout changed");
  for (size_t i = 0; i < src.size(); ++i) {
    if (src[i].name != dst[i].name || src[i].shape != dst[i].shape) {
      throw std::logic_error("bayesify: parameter mismatch at " + src[i].name);
    }
    *dst[i].values = *src[i].values;
  }
  return out;
}

double kl_proxy(const Model& model, double beta) {
  if (beta < 0.0) throw std::invalid_argument("kl_proxy: beta must be >= 0");
  if (beta == 0.0) return 0.0;
  double sum_sq = 0.0;
  for (const auto& p : model.params()) {
    if (p.name.ends_with(".weight")) {
      for (const float w : *p.values) sum_sq += double(w) * double(w);
    }
  }
  return beta * sum_sq;
}

void kl_proxy_grad(const Model& model, double beta, Grads& grads) {
  if (beta == 0.0) return;
  const auto params = model.params();
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i].name.ends_with(".weight")) continue;
    const std::vector<float>& w = *params[i].values;
    for (size_t j = 0; j < w.size(); ++j) grads.g[i][j] += 2.0 * beta * double(w[j]);
  }
}

Stage2Result train_stage2(const Model& bayes_model, const BayesConfig& bayes,
                          const CorpusConfig& corpus_cfg, const TrainConfig& train_cfg,
                          Rng& rng) {
  if (bayes_model.config.dropout_rate <= 0.0) {
    throw std::invalid_argument("train_stage2: model must be bayesified first");
  }
  Corpus corpus = build_corpus(corpus_cfg, rng.derive("corpus"));

  Stage2Result result;
  result.model = bayes_model;
  result.model.dropout_active = true;
  result.metrics.columns = {"epoch", "total_loss", "silk_loss", "kl", "roundtrip_success"};

  Adam adam({train_cfg.lr});
  Rng train_rng = rng.derive("train2");

  const int n_images = static_cast<int>(corpus.images.size());
  const int steps = std::max(1, n_images / train_cfg.batch_pairs);
  const unsigned hw_threads = std::max(1u, std::thread::hardware_concurrency());
  const int n_threads = train_cfg.threads > 0
                            ? train_cfg.threads
                            : static_cast<int>(std::min<unsigned>(hw_threads, train_cfg.batch_pairs));

  double initial_epoch_loss = -1.0;
  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    std::vector<int> order(n_images);
    for (int i = 0; i < n_images; ++i) order[i] = i;
    for (int i = n_images - 1; i > 0; --i) {
      std::swap(order[i], order[train_rng.uniform_index(i + 1)]);
    }

    double epoch_silk = 0.0;
    int epoch_pairs = 0;
    for (int step = 0; step < steps; ++step) {
      const int batch = std::min(train_cfg.batch_pairs, n_images - step * train_cfg.batch_pairs);
      std::vector<Grads> local(batch);
      std::vector<SilkLossTerms> terms(batch);
      std::vector<uint8_t> ok(batch, 0);

      auto worker = [&](int tid) {
        for (int k = tid; k < batch; k += n_threads) {
          const uint64_t salt = (uint64_t(epoch) << 40) | (uint64_t(step) << 16) | uint64_t(k);
          Rng pair_rng = train_rng.derive(salt);
          const Image& src = corpus.images[order[step * train_cfg.batch_pairs + k]];
          Image cropped = src;
          if (src.width > train_cfg.crop && src.height > train_cfg.crop) {
            const int ox = static_cast<int>(pair_rng.uniform_index(src.width - train_cfg.crop));
            const int oy = static_cast<int>(pair_rng.uniform_index(src.height - train_cfg.crop));
            cropped = Image(train_cfg.crop, train_cfg.crop);
            for (int y = 0; y < train_cfg.crop; ++y) {
              for (int x = 0; x < train_cfg.crop; ++x) cropped.at(y, x) = src.at(oy + y, ox + x);
            }
          }
          const TrainingPair pair =
              gen_pair(pair_rng, cropped, corpus_cfg.bounds, corpus_cfg.photometric);
          const CorrespondenceSet corr =
              sample_correspondences(pair_rng, pair, train_cfg.correspondences);
          if (static_cast<int>(corr.pairs.size()) < 64) continue;

          local[k].init(const_cast<Model&>(result.model).params());
          Rng dropout_rng = pair_rng.derive("dropout");
          terms[k] = silk_pair_loss(result.model, pair, corr, train_cfg.tau,
                                    train_cfg.lambda_kp, nullptr, &local[k], &dropout_rng);
          ok[k] = 1;
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
      total.init(result.model.params());
      int used = 0;
      for (int k = 0; k < batch; ++k) {
        if (!ok[k]) continue;
        total.add(local[k]);
        epoch_silk += terms[k].total;
        ++used;
      }
      if (used == 0) continue;
      for (auto& gi : total.g) {
        for (auto& g : gi) g /= used;
      }
      kl_proxy_grad(result.model, bayes.kl_beta, total);
      adam.step(result.model.params(), total);
      epoch_pairs += used;
    }

    const double kl = kl_proxy(result.model, bayes.kl_beta);
    const double epoch_silk_mean = epoch_pairs > 0 ? epoch_silk / epoch_pairs : 0.0;
    const double epoch_loss = epoch_silk_mean + kl;
    if (epoch == 0) initial_epoch_loss = std::max(epoch_loss, 1e-9);
    if (epoch_loss > 10.0 * initial_epoch_loss) {
      throw std::runtime_error("train_stage2: divergence (epoch loss " +
                               std::to_string(epoch_loss) + " > 10x initial)");
    }

    // Held-out detection quality is evaluated with dropout off (the
    // deterministic posterior mean), matching how the detector is consumed.
    Model eval_model = result.model;
    eval_model.dropout_active = false;
    const RoundTripEval rt = eval_roundtrip(eval_model, corpus.holdout, 200, 4);
    result.metrics.rows.push_back({double(epoch), epoch_loss, epoch_silk_mean, kl,
                                   rt.success_rate});
  }
  result.model.stage = "stage2";
  return result;
}

std::pair<Image, VarianceMap> mc_variance(const Model& model, const Image& image, int passes,
                                          uint64_t seed) {
  if (passes < 2) throw std::invalid_argument("mc_variance: needs at least 2 passes");

  const int h = image.height, w = image.width;
  const size_t plane = static_cast<size_t>(h) * w;
  const Tensor input = Model::to_input(image);

  // Per-pass buffers, reduced in index order afterwards, so the result is
  // deterministic regardless of execution interleaving.
  std::vector<std::vector<double>> pass_probs(passes);
  const unsigned hw_threads = std::max(1u, std::thread::hardware_concurrency());
  const int n_threads = static_cast<int>(std::min<unsigned>(hw_threads, passes));

  auto worker = [&](int tid) {
    for (int t = tid; t < passes; t += n_threads) {
      Rng pass_rng(seed ^ static_cast<uint64_t>(t));
      const HeadOut out = model.forward(input, &pass_rng, nullptr);
      pass_probs[t].assign(out.prob.v.begin(), out.prob.v.end());
    }
  };
  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& t : pool) t.join();
  }

  Image mean(h, w);
  VarianceMap var(h, w);
  for (size_t i = 0; i < plane; ++i) {
    double sum = 0.0, lo = pass_probs[0][i], hi = pass_probs[0][i];
    for (int t = 0; t < passes; ++t) {
      const double v = pass_probs[t][i];
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    const double m = sum / passes;
    mean.data[i] = static_cast<float>(m);
    if (lo == hi) continue;  // identical passes: variance is zero by definition
    double ss = 0.0;  // two-pass population variance avoids cancellation
    for (int t = 0; t < passes; ++t) {
      const double d = pass_probs[t][i] - m;
      ss += d * d;
    }
    var.var[i] = ss / passes;
  }
  return {std::move(mean), std::move(var)};
}

void save_variance_map(const std::string& path, const VarianceMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write variance map: " + path);
  out.write("FVAR", 4);
  const uint32_t h = map.height, w = map.width;
  out.write(reinterpret_cast<const char*>(&h), 4);
  out.write(reinterpret_cast<const char*>(&w), 4);
  std::vector<float> data(map.var.size());
  for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(map.var[i]);
  out.write(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
  if (!out) throw std::runtime_error("variance map write failed: " + path);
}

VarianceMap load_variance_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read variance map: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "FVAR", 4) != 0) {
    throw std::runtime_error("not a variance map file: " + path);
  }
  uint32_t h = 0, w = 0;
  in.read(reinterpret_cast<char*>(&h), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  VarianceMap map(static_cast<int>(h), static_cast<int>(w));
  std::vector<float> data(map.var.size());
  in.read(reinterpret_cast<char*>(data.data()), data.size() * sizeof(float));
  if (!in) throw std::runtime_error("truncated variance map: " + path);
  for (size_t i = 0; i < data.size(); ++i) map.var[i] = data[i];
  return map;
}

void save_variance_png(const std::string& path, const VarianceMap& map) {
  Image img(map.height, map.width);
  for (size_t i = 0; i < map.var.size(); ++i) {
    img.data[i] = static_cast<float>(std::min(1.0, map.var[i] * 4.0));
  }
  write_png_gray(path, img);
}

}  // namespace featureness
