#pragma once

#include <Eigen/Dense>
#include <optional>

#include "featureness/datagen.hpp"
#include "featureness/metrics.hpp"
#include "featureness/model.hpp"
#include "featureness/optim.hpp"

namespace featureness {

/// Dense per-pixel products of the detector: interest probability P, unit-norm
/// descriptors, and the backbone feature map.
using DenseOutputs = HeadOut;

/// Deterministic dense inference (dropout off).
DenseOutputs detector_infer(const Model& model, const Image& image);

/// One ground-truth pixel correspondence between a pair's two images.
/// B-side coordinates are sub-pixel (exact homography images of the A pixels).
struct Correspondence {
  double ax, ay;
  double bx, by;
};

struct CorrespondenceSet {
  std::vector<Correspondence> pairs;
  Homography h_ab;
};

/// Uniformly samples distinct A-side pixels whose mapped location lands inside
/// image B. Returns fewer than `count` pairs when covisibility is small.
CorrespondenceSet sample_correspondences(Rng& rng, const TrainingPair& pair, int count);

/// Rows are descriptors read at the rounded pixel locations.
Eigen::MatrixXd gather_descriptors(const Tensor& desc, const std::vector<double>& xs,
                                   const std::vector<double>& ys);

/// Symmetric match likelihood: elementwise product of the row-wise and
/// column-wise softmaxes of the similarity matrix S = A B^T / tau.
Eigen::MatrixXd double_softmax_match(const Eigen::MatrixXd& desc_a, const Eigen::MatrixXd& desc_b,
                                     double tau);

/// Label 1 iff pixel i's nearest neighbor j in B lies within 1 pixel of i's
/// true correspondent AND j's nearest neighbor in A is i. Ties break to 0.
std::vector<uint8_t> round_trip_labels(const Eigen::MatrixXd& desc_a,
                                       const Eigen::MatrixXd& desc_b,
                                       const CorrespondenceSet& corr);

struct SilkLossTerms {
  double total = 0.0;
  double desc_term = 0.0;
  double kp_term = 0.0;
};

/// Loss over sampled correspondences: mean negative log double-softmax match
/// probability of the true pairs, plus lambda_kp times the BCE between the
/// probability map and round-trip labels.
SilkLossTerms silk_loss(const DenseOutputs& out_a, const DenseOutputs& out_b,
                        const CorrespondenceSet& corr, double tau, double lambda_kp);

/// Loss + gradients over one training pair. Labels are recomputed from the
/// current descriptors unless fixed_labels pins them (required when the loss
/// must be a smooth function of the parameters, e.g. finite-difference
/// checks). dropout_rng enables stochastic passes (stage 2).
SilkLossTerms silk_pair_loss(const Model& model, const TrainingPair& pair,
                             const CorrespondenceSet& corr, double tau, double lambda_kp,
                             const std::vector<uint8_t>* fixed_labels, Grads* grads,
                             Rng* dropout_rng = nullptr);

/// Stage-1 loss as a LossFn over a fixed pair with frozen labels.
LossFn make_silk_loss_fn(TrainingPair pair, CorrespondenceSet corr, double tau,
                         double lambda_kp);

/// Greedy top-k selection on a probability map with Chebyshev-radius
/// suppression; any two returned pixels are more than `radius` apart.
std::vector<std::pair<int, int>> nms_topk(const Tensor& prob, int top_n, int radius);

struct CorpusConfig {
  int images = 256;
  int image_size = 128;  // generated size; training crops are taken from these
  int holdout_pairs = 16;
  HomographyBounds bounds;
  PhotometricConfig photometric;
};

struct TrainConfig {
  int epochs = 30;
  int batch_pairs = 4;
  int crop = 96;
  int correspondences = 512;
  double lr = 1e-3;
  double tau = 0.1;
  double lambda_kp = 1.0;
  int threads = 0;  // 0 = hardware concurrency, capped at batch_pairs
};

struct RoundTripEval {
  double success_rate = 0.0;  // fraction of evaluated keypoints with label 1
  int evaluated = 0;
};

/// Round-trip success of the top-N detected keypoints on held-out pairs.
/// When random_desc_rng is given, descriptors are replaced by random unit
/// vectors; the expected success collapses to ~1/N (the chance baseline).
RoundTripEval eval_roundtrip(const Model& model, const std::vector<TrainingPair>& pairs,
                             int top_n, int nms_radius, Rng* random_desc_rng = nullptr);

struct Stage1Result {
  Model model;
  MetricsLog metrics;  // epoch, silk_loss, desc_loss, kp_loss, roundtrip_success
};

/// Stage 1: detector training on procedurally generated warped pairs.
Stage1Result train_stage1(const CorpusConfig& corpus, const TrainConfig& train, Rng& rng,
                          const ModelConfig& arch = {});

/// Shared by all training stages: generated corpus plus held-out pairs.
struct Corpus {
  std::vector<Image> images;
  std::vector<TrainingPair> holdout;
};
Corpus build_corpus(const CorpusConfig& config, Rng rng);

}  // namespace featureness
