#include "featureness/detector.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <thread>

namespace featureness {

namespace {

// Stable log-sum-exp over a row/column view.
double logsumexp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  double s = 0.0;
  for (int i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

double clamp_prob(double p) { return std::clamp(p, 1e-7, 1.0 - 1e-7); }

struct LossCore {
  SilkLossTerms terms;
  Eigen::MatrixXd dS;  // dL/dS, only filled when want_grads
};

// Shared between the value-only and gradient paths so both agree exactly.
LossCore silk_loss_core(const Eigen::MatrixXd& desc_a, const Eigen::MatrixXd& desc_b,
                        const std::vector<double>& probs_a, const std::vector<uint8_t>& labels,
                        double tau, double lambda_kp, bool want_grads) {
  const int n = static_cast<int>(desc_a.rows());
  const Eigen::MatrixXd s = (desc_a * desc_b.transpose()) / tau;

  LossCore core;
  double desc_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    desc_sum += s(i, i) - logsumexp(s.row(i));          // log row-softmax at (i, i)
    desc_sum += s(i, i) - logsumexp(s.col(i));          // log col-softmax at (i, i)
  }
  core.terms.desc_term = -desc_sum / n;

  double kp_sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double p = clamp_prob(probs_a[i]);
    const double y = labels[i];
    kp_sum += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  core.terms.kp_term = kp_sum / n;
  core.terms.total = core.terms.desc_term + lambda_kp * core.terms.kp_term;

  if (want_grads) {
    Eigen::MatrixXd rows = s, cols = s;
    for (int i = 0; i < n; ++i) {
      const double lr_ = logsumexp(s.row(i));
      for (int j = 0; j < n; ++j) rows(i, j) = std::exp(s(i, j) - lr_);
    }
    for (int j = 0; j < n; ++j) {
      const double lc = logsumexp(s.col(j));
      for (int i = 0; i < n; ++i) cols(i, j) = std::exp(s(i, j) - lc);
    }
    core.dS = (rows + cols) / n;
    for (int i = 0; i < n; ++i) core.dS(i, i) -= 2.0 / n;
  }
  return core;
}

}  // namespace

DenseOutputs detector_infer(const Model& model, const Image& image) {
  return model.forward(Model::to_input(image), nullptr, nullptr);
}

CorrespondenceSet sample_correspondences(Rng& rng, const TrainingPair& pair, int count) {
  const int h = pair.img_a.height, w = pair.img_a.width;
  CorrespondenceSet corr;
  corr.h_ab = pair.h_ab;

  std::vector<uint8_t> used(static_cast<size_t>(h) * w, 0);
  const int max_attempts = count * 20;
  for (int attempt = 0; attempt < max_attempts && static_cast<int>(corr.pairs.size()) < count;
       ++attempt) {
    const int x = static_cast<int>(rng.uniform_index(w));
    const int y = static_cast<int>(rng.uniform_index(h));
    if (used[static_cast<size_t>(y) * w + x]) continue;
    used[static_cast<size_t>(y) * w + x] = 1;
    const Eigen::Vector2d q = apply_homography(pair.h_ab, {double(x), double(y)});
    const long bx = std::lround(q.x()), by = std::lround(q.y());
    if (bx < 0 || bx >= pair.img_b.width || by < 0 || by >= pair.img_b.height) continue;
    if (!pair.valid_b.at(static_cast<int>(by), static_cast<int>(bx))) continue;
    corr.pairs.push_back({double(x), double(y), q.x(), q.y()});
  }
  return corr;
}

Eigen::MatrixXd gather_descriptors(const Tensor& desc, const std::vector<double>& xs,
                                   const std::vector<double>& ys) {
  const int n = static_cast<int>(xs.size());
  Eigen::MatrixXd out(n, desc.c);
  for (int i = 0; i < n; ++i) {
    const int x = static_cast<int>(std::lround(xs[i]));
    const int y = static_cast<int>(std::lround(ys[i]));
    if (x < 0 || x >= desc.w || y < 0 || y >= desc.h) {
      throw std::out_of_range("gather_descriptors: point outside the map");
    }
    for (int ci = 0; ci < desc.c; ++ci) out(i, ci) = desc.at(ci, y, x);
  }
  return out;
}

Eigen::MatrixXd double_softmax_match(const Eigen::MatrixXd& desc_a, const Eigen::MatrixXd& desc_b,
                                     double tau) {
  if (tau <= 0.0) throw std::invalid_argument("double_softmax_match: tau must be positive");
  const Eigen::MatrixXd s = (desc_a * desc_b.transpose()) / tau;
  Eigen::MatrixXd match(s.rows(), s.cols());
  std::vector<double> col_lse(s.cols());
  for (int j = 0; j < s.cols(); ++j) col_lse[j] = logsumexp(s.col(j));
  for (int i = 0; i < s.rows(); ++i) {
    const double row_lse = logsumexp(s.row(i));
    for (int j = 0; j < s.cols(); ++j) {
      match(i, j) = std::exp(s(i, j) - row_lse) * std::exp(s(i, j) - col_lse[j]);
    }
  }
  return match;
}

std::vector<uint8_t> round_trip_labels(const Eigen::MatrixXd& desc_a,
                                       const Eigen::MatrixXd& desc_b,
                                       const CorrespondenceSet& corr) {
  const int n = static_cast<int>(desc_a.rows());
  if (n == 0 || corr.pairs.empty()) {
    throw std::invalid_argument("round_trip_labels: empty correspondence set");
  }
  if (static_cast<int>(corr.pairs.size()) != n || desc_b.rows() != n) {
    throw std::invalid_argument("round_trip_labels: descriptor/correspondence size mismatch");
  }
  // Unit-norm descriptors: nearest neighbor by maximum dot product.
  const Eigen::MatrixXd sim = desc_a * desc_b.transpose();

  std::vector<uint8_t> labels(n, 0);
  for (int i = 0; i < n; ++i) {
    int best_j = 0;
    bool tie = false;
    for (int j = 1; j < n; ++j) {
      if (sim(i, j) > sim(i, best_j)) {
        best_j = j;
        tie = false;
      } else if (sim(i, j) == sim(i, best_j)) {
        tie = true;
      }
    }
    if (tie) continue;

    // (a) the matched descriptor was sampled within 1 pixel of the true
    // correspondent of i.
    const double dx = std::lround(corr.pairs[best_j].bx) - corr.pairs[i].bx;
    const double dy = std::lround(corr.pairs[best_j].by) - corr.pairs[i].by;
    if (dx * dx + dy * dy > 1.0 + 1e-9) continue;

    // (b) mutual consistency: best_j's nearest neighbor in A is i.
    int back = 0;
    bool back_tie = false;
    for (int k = 1; k < n; ++k) {
      if (sim(k, best_j) > sim(back, best_j)) {
        back = k;
        back_tie = false;
      } else if (sim(k, best_j) == sim(back, best_j)) {
        back_tie = true;
      }
    }
    if (back_tie || back != i) continue;
    labels[i] = 1;
  }
  return labels;
}

SilkLossTerms silk_loss(const DenseOutputs& out_a, const DenseOutputs& out_b,
                        const CorrespondenceSet& corr, double tau, double lambda_kp) {
  const int n = static_cast<int>(corr.pairs.size());
  if (n < 64) throw std::invalid_argument("silk_loss: needs >= 64 sampled correspondences");

  std::vector<double> axs(n), ays(n), bxs(n), bys(n);
  for (int i = 0; i < n; ++i) {
    axs[i] = corr.pairs[i].ax;
    ays[i] = corr.pairs[i].ay;
    bxs[i] = corr.pairs[i].bx;
    bys[i] = corr.pairs[i].by;
  }
  const Eigen::MatrixXd a = gather_descriptors(out_a.desc, axs, ays);
  const Eigen::MatrixXd b = gather_descriptors(out_b.desc, bxs, bys);
  const std::vector<uint8_t> labels = round_trip_labels(a, b, corr);

  std::vector<double> probs(n);
  for (int i = 0; i < n; ++i) {
    probs[i] = out_a.prob.at(0, static_cast<int>(std::lround(ays[i])),
                             static_cast<int>(std::lround(axs[i])));
  }
  const LossCore core = silk_loss_core(a, b, probs, labels, tau, lambda_kp, false);
  if (!std::isfinite(core.terms.total)) throw std::runtime_error("silk_loss: non-finite loss");
  return core.terms;
}

SilkLossTerms silk_pair_loss(const Model& model, const TrainingPair& pair,
                             const CorrespondenceSet& corr, double tau, double lambda_kp,
                             const std::vector<uint8_t>* fixed_labels, Grads* grads,
                             Rng* dropout_rng) {
  const int n = static_cast<int>(corr.pairs.size());
  if (n < 64) throw std::invalid_argument("silk_pair_loss: needs >= 64 sampled correspondences");

  const Tensor in_a = Model::to_input(pair.img_a);
  const Tensor in_b = Model::to_input(pair.img_b);
  ModelCache cache_a, cache_b;
  const HeadOut out_a = model.forward(in_a, dropout_rng, grads ? &cache_a : nullptr);
  const HeadOut out_b = model.forward(in_b, dropout_rng, grads ? &cache_b : nullptr);

  std::vector<int> ax(n), ay(n), bx(n), by(n);
  std::vector<double> axs(n), ays(n), bxs(n), bys(n);
  for (int i = 0; i < n; ++i) {
    axs[i] = corr.pairs[i].ax;
    ays[i] = corr.pairs[i].ay;
    bxs[i] = corr.pairs[i].bx;
    bys[i] = corr.pairs[i].by;
    ax[i] = static_cast<int>(std::lround(axs[i]));
    ay[i] = static_cast<int>(std::lround(ays[i]));
    bx[i] = static_cast<int>(std::lround(bxs[i]));
    by[i] = static_cast<int>(std::lround(bys[i]));
  }
  const Eigen::MatrixXd a = gather_descriptors(out_a.desc, axs, ays);
  const Eigen::MatrixXd b = gather_descriptors(out_b.desc, bxs, bys);
  const std::vector<uint8_t> labels =
      fixed_labels ? *fixed_labels : round_trip_labels(a, b, corr);

  std::vector<double> probs(n);
  for (int i = 0; i < n; ++i) probs[i] = out_a.prob.at(0, ay[i], ax[i]);

  const LossCore core = silk_loss_core(a, b, probs, labels, tau, lambda_kp, grads != nullptr);
  if (!grads) return core.terms;

  const Eigen::MatrixXd da = (core.dS * b) / tau;
  const Eigen::MatrixXd db = (core.dS.transpose() * a) / tau;

  Tensor ddesc_a = Tensor::zeros_like(out_a.desc);
  Tensor ddesc_b = Tensor::zeros_like(out_b.desc);
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < ddesc_a.c; ++ci) {
      ddesc_a.at(ci, ay[i], ax[i]) += da(i, ci);
      ddesc_b.at(ci, by[i], bx[i]) += db(i, ci);
    }
  }

  Tensor dprob_a(1, out_a.prob.h, out_a.prob.w);
  for (int i = 0; i < n; ++i) {
    const double p = clamp_prob(probs[i]);
    const double y = labels[i];
    dprob_a.at(0, ay[i], ax[i]) += lambda_kp * (p - y) / (p * (1.0 - p)) / n;
  }

  model.backward(cache_a, dprob_a, ddesc_a, *grads);
  model.backward(cache_b, Tensor{}, ddesc_b, *grads);
  return core.terms;
}

LossFn make_silk_loss_fn(TrainingPair pair, CorrespondenceSet corr, double tau,
                         double lambda_kp) {
  // Labels are frozen at the first evaluation so the loss stays a smooth
  // function of the parameters across finite-difference perturbations.
  auto labels = std::make_shared<std::vector<uint8_t>>();
  return [pair = std::move(pair), corr = std::move(corr), tau, lambda_kp,
          labels](const Model& model, Grads* grads) -> double {
    if (labels->empty()) {
      const HeadOut out_a = model.forward(Model::to_input(pair.img_a));
      const HeadOut out_b = model.forward(Model::to_input(pair.img_b));
      const int n = static_cast<int>(corr.pairs.size());
      std::vector<double> axs(n), ays(n), bxs(n), bys(n);
      for (int i = 0; i < n; ++i) {
        axs[i] = corr.pairs[i].ax;
        ays[i] = corr.pairs[i].ay;
        bxs[i] = corr.pairs[i].bx;
        bys[i] = corr.pairs[i].by;
      }
      *labels = round_trip_labels(gather_descriptors(out_a.desc, axs, ays),
                                  gather_descriptors(out_b.desc, bxs, bys), corr);
    }
    return silk_pair_loss(model, pair, corr, tau, lambda_kp, labels.get(), grads).total;
  };
}

std::vector<std::pair<int, int>> nms_topk(const Tensor& prob, int top_n, int radius) {
  struct Candidate {
    double p;
    int y, x;
  };
  std::vector<Candidate> cands;
  cands.reserve(static_cast<size_t>(prob.h) * prob.w);
  for (int y = 0; y < prob.h; ++y) {
    for (int x = 0; x < prob.w; ++x) cands.push_back({prob.at(0, y, x), y, x});
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.p != b.p) return a.p > b.p;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });

  std::vector<std::pair<int, int>> accepted;  // (x, y)
  for (const auto& c : cands) {
    if (static_cast<int>(accepted.size()) >= top_n) break;
    bool blocked = false;
    for (const auto& [px, py] : accepted) {
      if (std::abs(px - c.x) <= radius && std::abs(py - c.y) <= radius) {
        blocked = true;
        break;
      }
    }
    if (!blocked) accepted.emplace_back(c.x, c.y);
  }
  return accepted;
}

Corpus build_corpus(const CorpusConfig& config, Rng rng) {
  Corpus corpus;
  Rng img_rng = rng.derive("corpus_images");
  for (int i = 0; i < config.images; ++i) {
    Rng one = img_rng.derive(static_cast<uint64_t>(i));
    corpus.images.push_back(gen_texture_image(one, config.image_size, config.image_size));
  }
  Rng hold_rng = rng.derive("holdout");
  for (int i = 0; i < config.holdout_pairs; ++i) {
    Rng one = hold_rng.derive(static_cast<uint64_t>(i));
    const Image img = gen_texture_image(one, config.image_size, config.image_size);
    corpus.holdout.push_back(gen_pair(one, img, config.bounds, config.photometric));
  }
  return corpus;
}

RoundTripEval eval_roundtrip(const Model& model, const std::vector<TrainingPair>& pairs,
                             int top_n, int nms_radius, Rng* random_desc_rng) {
  RoundTripEval eval;
  double success_sum = 0.0;
  for (const TrainingPair& pair : pairs) {
    const DenseOutputs out_a = detector_infer(model, pair.img_a);
    const DenseOutputs out_b = detector_infer(model, pair.img_b);

    const auto peaks = nms_topk(out_a.prob, top_n * 3, nms_radius);
    CorrespondenceSet corr;
    corr.h_ab = pair.h_ab;
    for (const auto& [x, y] : peaks) {
      if (static_cast<int>(corr.pairs.size()) >= top_n) break;
      const Eigen::Vector2d q = apply_homography(pair.h_ab, {double(x), double(y)});
      const long bx = std::lround(q.x()), by = std::lround(q.y());
      if (bx < 0 || bx >= pair.img_b.width || by < 0 || by >= pair.img_b.height) continue;
      if (!pair.valid_b.at(static_cast<int>(by), static_cast<int>(bx))) continue;
      corr.pairs.push_back({double(x), double(y), q.x(), q.y()});
    }
    const int n = static_cast<int>(corr.pairs.size());
    if (n < 10) continue;

    std::vector<double> axs(n), ays(n), bxs(n), bys(n);
    for (int i = 0; i < n; ++i) {
      axs[i] = corr.pairs[i].ax;
      ays[i] = corr.pairs[i].ay;
      bxs[i] = corr.pairs[i].bx;
      bys[i] = corr.pairs[i].by;
    }
    Eigen::MatrixXd a, b;
    if (random_desc_rng) {
      const int d = out_a.desc.c;
      a.resize(n, d);
      b.resize(n, d);
      for (Eigen::MatrixXd* m : {&a, &b}) {
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < d; ++j) (*m)(i, j) = random_desc_rng->normal();
          m->row(i).normalize();
        }
      }
    } else {
      a = gather_descriptors(out_a.desc, axs, ays);
      b = gather_descriptors(out_b.desc, bxs, bys);
    }
    const std::vector<uint8_t> labels = round_trip_labels(a, b, corr);
    for (const uint8_t l : labels) success_sum += l;
    eval.evaluated += n;
  }
  if (eval.evaluated > 0) eval.success_rate = success_sum / eval.evaluated;
  return eval;
}

Stage1Result train_stage1(const CorpusConfig& corpus_cfg, const TrainConfig& train_cfg, Rng& rng,
                          const ModelConfig& arch) {
  Corpus corpus = build_corpus(corpus_cfg, rng.derive("corpus"));

  ModelConfig mc = arch;
  mc.init_seed = rng.derive("model_init").next_u64();
  Stage1Result result;
  result.model = Model::build(mc);
  result.model.stage = "stage1";
  result.metrics.columns = {"epoch", "silk_loss", "desc_loss", "kp_loss", "roundtrip_success"};

  Adam adam({train_cfg.lr});
  Rng train_rng = rng.derive("train");

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

    SilkLossTerms epoch_sum;
    int epoch_pairs = 0;
    for (int step = 0; step < steps; ++step) {
      const int batch = std::min(train_cfg.batch_pairs, n_images - step * train_cfg.batch_pairs);
      std::vector<Grads> local(batch);
      std::vector<SilkLossTerms> terms(batch);
      std::vector<uint8_t> ok(batch, 0);

      auto worker = [&](int tid) {
        for (int k = tid; k < batch; k += n_threads) {
          const uint64_t salt =
              (uint64_t(epoch) << 40) | (uint64_t(step) << 16) | uint64_t(k);
          Rng pair_rng = train_rng.derive(salt);
          const Image& src = corpus.images[order[step * train_cfg.batch_pairs + k]];

          Image cropped = src;
          if (src.width > train_cfg.crop && src.height > train_cfg.crop) {
            const int ox = static_cast<int>(pair_rng.uniform_index(src.width - train_cfg.crop));
            const int oy = static_cast<int>(pair_rng.uniform_index(src.height - train_cfg.crop));
            cropped = Image(train_cfg.crop, train_cfg.crop);
            for (int y = 0; y < train_cfg.crop; ++y) {
              for (int x = 0; x < train_cfg.crop; ++x) {
                cropped.at(y, x) = src.at(oy + y, ox + x);
              }
            }
          }
          const TrainingPair pair =
              gen_pair(pair_rng, cropped, corpus_cfg.bounds, corpus_cfg.photometric);
          const CorrespondenceSet corr =
              sample_correspondences(pair_rng, pair, train_cfg.correspondences);
          if (static_cast<int>(corr.pairs.size()) < 64) continue;  // poor covisibility

          local[k].init(const_cast<Model&>(result.model).params());
          Rng* dropout = nullptr;
          Rng dropout_rng = pair_rng.derive("dropout");
          if (result.model.dropout_active) dropout = &dropout_rng;
          terms[k] = silk_pair_loss(result.model, pair, corr, train_cfg.tau,
                                    train_cfg.lambda_kp, nullptr, &local[k], dropout);
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
      for (int k = 0; k < batch; ++k) {  // fixed reduction order for determinism
        if (!ok[k]) continue;
        total.add(local[k]);
        epoch_sum.total += terms[k].total;
        epoch_sum.desc_term += terms[k].desc_term;
        epoch_sum.kp_term += terms[k].kp_term;
        ++used;
      }
      if (used == 0) continue;
      for (auto& gi : total.g) {
        for (auto& g : gi) {
          g /= used;
          if (!std::isfinite(g)) throw std::runtime_error("train_stage1: non-finite gradient");
        }
      }
      adam.step(result.model.params(), total);
      epoch_pairs += used;
    }

    const double epoch_loss = epoch_pairs > 0 ? epoch_sum.total / epoch_pairs : 0.0;
    if (epoch == 0) initial_epoch_loss = std::max(epoch_loss, 1e-9);
    if (epoch_loss > 10.0 * initial_epoch_loss) {
      throw std::runtime_error("train_stage1: divergence (epoch loss " +
                               std::to_string(epoch_loss) + " > 10x initial)");
    }

    const RoundTripEval rt = eval_roundtrip(result.model, corpus.holdout, 200, 4);
    result.metrics.rows.push_back({double(epoch), epoch_loss,
                                   epoch_pairs ? epoch_sum.desc_term / epoch_pairs : 0.0,
                                   epoch_pairs ? epoch_sum.kp_term / epoch_pairs : 0.0,
                                   rt.success_rate});
  }
  return result;
}

}  // namespace featureness
