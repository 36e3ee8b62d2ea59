#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "featureness/detector.hpp"

using namespace featureness;

namespace {

ModelConfig tiny_arch() {
  ModelConfig mc;
  mc.backbone_channels = {4, 8};
  mc.kp_hidden = 4;
  mc.desc_dim = 8;
  mc.init_seed = 19;
  return mc;
}

// Independent brute-force oracle for round-trip labels.
std::vector<uint8_t> brute_force_labels(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                        const CorrespondenceSet& corr) {
  const int n = static_cast<int>(a.rows());
  std::vector<uint8_t> labels(n, 0);
  for (int i = 0; i < n; ++i) {
    // All-pairs scan for i's nearest neighbor in B (by Euclidean distance,
    // equivalent to max dot product for unit vectors but computed differently).
    int best_j = -1;
    double best_d = std::numeric_limits<double>::infinity();
    bool tie = false;
    for (int j = 0; j < n; ++j) {
      const double d = (a.row(i) - b.row(j)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best_j = j;
        tie = false;
      } else if (d == best_d) {
        tie = true;
      }
    }
    if (tie || best_j < 0) continue;
    const double dx = std::lround(corr.pairs[best_j].bx) - corr.pairs[i].bx;
    const double dy = std::lround(corr.pairs[best_j].by) - corr.pairs[i].by;
    if (dx * dx + dy * dy > 1.0 + 1e-9) continue;
    int back = -1;
    double back_d = std::numeric_limits<double>::infinity();
    bool back_tie = false;
    for (int k = 0; k < n; ++k) {
      const double d = (a.row(k) - b.row(best_j)).squaredNorm();
      if (d < back_d) {
        back_d = d;
        back = k;
        back_tie = false;
      } else if (d == back_d) {
        back_tie = true;
      }
    }
    if (!back_tie && back == i) labels[i] = 1;
  }
  return labels;
}

CorrespondenceSet grid_correspondences(int n, int width) {
  CorrespondenceSet corr;
  corr.h_ab = Homography::identity();
  for (int i = 0; i < n; ++i) {
    const double x = i % width, y = i / width;
    corr.pairs.push_back({x, y, x, y});
  }
  return corr;
}

}  // namespace

TEST_CASE("detector_infer: deterministic, shape contract, near-constant on uniform input") {
  const Model model = Model::build(tiny_arch());
  const Image uniform(48, 48, 0.37f);
  const DenseOutputs a = detector_infer(model, uniform);
  const DenseOutputs b = detector_infer(model, uniform);
  CHECK(a.prob.v == b.prob.v);
  CHECK(a.desc.v == b.desc.v);
  CHECK(a.prob.h == 48);
  CHECK(a.prob.w == 48);
  CHECK(a.desc.c == 8);
  CHECK(a.feat.c == 8);

  // Same-padding convolution on a constant image is constant away from the
  // borders; the receptive field of the stack is 2 conv3x3 = 2 px + margin.
  double mean = 0.0;
  int count = 0;
  for (int y = 4; y < 44; ++y) {
    for (int x = 4; x < 44; ++x) {
      mean += a.prob.at(0, y, x);
      ++count;
    }
  }
  mean /= count;
  double var = 0.0;
  for (int y = 4; y < 44; ++y) {
    for (int x = 4; x < 44; ++x) {
      var += (a.prob.at(0, y, x) - mean) * (a.prob.at(0, y, x) - mean);
    }
  }
  CHECK(std::sqrt(var / count) < 0.05);
}

TEST_CASE("double_softmax_match: identity similarity at tau 1") {
  Eigen::MatrixXd a(2, 2), b(2, 2);
  a << 1, 0, 0, 1;
  b << 1, 0, 0, 1;
  const Eigen::MatrixXd p = double_softmax_match(a, b, 1.0);
  const double expected = (std::exp(1.0) / (std::exp(1.0) + 1.0));
  CHECK(p(0, 0) == doctest::Approx(expected * expected).epsilon(1e-9));
  CHECK(p(0, 0) == doctest::Approx(0.5344).epsilon(1e-3));
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      CHECK(p(i, j) > 0.0);
      CHECK(p(i, j) < 1.0);
    }
  }
}

TEST_CASE("double_softmax_match: single identical descriptor pair gives 1") {
  Eigen::MatrixXd a(1, 4), b(1, 4);
  a << 0.5, 0.5, 0.5, 0.5;
  b << 0.5, 0.5, 0.5, 0.5;
  const Eigen::MatrixXd p = double_softmax_match(a, b, 0.1);
  CHECK(p(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("double_softmax_match: invariant to a global similarity shift") {
  // Appending a constant coordinate to B and the shift to A adds the same
  // constant to every entry of S; both softmax factors are shift-invariant.
  Rng rng(31);
  const int n = 6, d = 4;
  Eigen::MatrixXd a(n, d + 1), b(n, d + 1), a_shifted;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      a(i, j) = rng.uniform(-1, 1);
      b(i, j) = rng.uniform(-1, 1);
    }
    a(i, d) = 0.0;
    b(i, d) = 1.0;
  }
  a_shifted = a;
  for (int i = 0; i < n; ++i) a_shifted(i, d) = 0.37;  // adds 0.37 to every S entry

  const Eigen::MatrixXd p0 = double_softmax_match(a, b, 0.1);
  const Eigen::MatrixXd p1 = double_softmax_match(a_shifted, b, 0.1);
  CHECK((p0 - p1).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("round_trip_labels: perfect orthogonal descriptors give all ones") {
  const int n = 8;
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd b = a;
  const CorrespondenceSet corr = grid_correspondences(n, 4);
  const auto labels = round_trip_labels(a, b, corr);
  for (const uint8_t l : labels) CHECK(l == 1);
}

TEST_CASE("round_trip_labels: identical descriptors tie to zero") {
  const int n = 6;
  Eigen::MatrixXd a(n, 3), b(n, 3);
  for (int i = 0; i < n; ++i) {
    a.row(i) << 1, 0, 0;
    b.row(i) << 1, 0, 0;
  }
  const auto labels = round_trip_labels(a, b, grid_correspondences(n, 3));
  for (const uint8_t l : labels) CHECK(l == 0);
}

TEST_CASE("round_trip_labels: corrupting one descriptor flips exactly that label") {
  const int n = 10;
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd b = a;
  // Replace descriptor 4 with a distinct non-matching unit vector.
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = 0.1 * (i + 1);
  v(4) = 0.01;  // not the max, so the round trip cannot return to 4
  v.normalize();
  b.row(4) = v.transpose();

  const CorrespondenceSet corr = grid_correspondences(n, 5);
  const auto labels = round_trip_labels(a, b, corr);
  for (int i = 0; i < n; ++i) CHECK(labels[i] == (i == 4 ? 0 : 1));

  CHECK(labels == brute_force_labels(a, b, corr));
}

TEST_CASE("round_trip_labels: agrees with the brute-force oracle on random sets") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 40 + static_cast<int>(rng.uniform_index(460));
    const int d = 16;
    Eigen::MatrixXd a(n, d), b(n, d);
    CorrespondenceSet corr;
    corr.h_ab = Homography::identity();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) {
        a(i, j) = rng.normal();
        b(i, j) = rng.normal();
      }
      a.row(i).normalize();
      // Half the rows match their counterpart closely.
      if (rng.bernoulli(0.5)) {
        b.row(i) = a.row(i);
        for (int j = 0; j < d; ++j) b(i, j) += 0.05 * rng.normal();
      }
      b.row(i).normalize();
      const double x = rng.uniform(0, 50), y = rng.uniform(0, 50);
      corr.pairs.push_back({std::round(x), std::round(y), x, y});
    }
    CHECK(round_trip_labels(a, b, corr) == brute_force_labels(a, b, corr));
  }
}

TEST_CASE("round_trip_labels: empty set is an error") {
  Eigen::MatrixXd empty(0, 8);
  CorrespondenceSet corr;
  CHECK_THROWS_AS((void)round_trip_labels(empty, empty, corr), std::invalid_argument);
}

TEST_CASE("silk_loss: hand-constructed dense outputs") {
  // 8x8 image, 64 orthogonal one-hot descriptors, identity correspondence.
  const int h = 8, w = 8, n = h * w;
  DenseOutputs out_a, out_b;
  out_a.prob = Tensor(1, h, w, 0.5);
  out_a.desc = Tensor(n, h, w, 0.0);
  for (int p = 0; p < n; ++p) out_a.desc.v[static_cast<size_t>(p) * n + p] = 1.0;
  out_b = out_a;

  CorrespondenceSet corr = grid_correspondences(n, w);
  const double tau = 0.1;

  SUBCASE("prob 0.5 gives a BCE term of ln 2 regardless of labels") {
    const SilkLossTerms terms = silk_loss(out_a, out_b, corr, tau, 1.0);
    CHECK(terms.kp_term == doctest::Approx(std::log(2.0)).epsilon(1e-9));
  }

  SUBCASE("lambda 0 reduces the loss to the descriptor term") {
    const SilkLossTerms terms = silk_loss(out_a, out_b, corr, tau, 0.0);
    CHECK(terms.total == doctest::Approx(terms.desc_term).epsilon(1e-12));
    // Orthogonal one-hot descriptors: each row/col softmax puts e^{1/tau}
    // against (n-1) of e^0.
    const double top = std::exp(1.0 / tau) / (std::exp(1.0 / tau) + (n - 1));
    CHECK(terms.desc_term == doctest::Approx(-2.0 * std::log(top)).epsilon(1e-9));
  }

  SUBCASE("loss decreases as prob approaches the (all-ones) labels") {
    const SilkLossTerms at_half = silk_loss(out_a, out_b, corr, tau, 1.0);
    DenseOutputs confident = out_a;
    confident.prob = Tensor(1, h, w, 0.99);
    const SilkLossTerms at_high = silk_loss(confident, out_b, corr, tau, 1.0);
    CHECK(at_high.kp_term < at_half.kp_term);
    CHECK(at_high.total < at_half.total);
  }

  SUBCASE("fewer than 64 correspondences is an error") {
    corr.pairs.resize(32);
    CHECK_THROWS_AS((void)silk_loss(out_a, out_b, corr, tau, 1.0), std::invalid_argument);
  }
}

TEST_CASE("sample_correspondences: all mapped points valid and distinct") {
  Rng rng(13);
  const Image img = gen_texture_image(rng, 64, 64);
  const TrainingPair pair = gen_pair(rng, img, HomographyBounds{}, PhotometricConfig{});
  const CorrespondenceSet corr = sample_correspondences(rng, pair, 256);
  CHECK(corr.pairs.size() >= 64);
  for (const auto& c : corr.pairs) {
    const Eigen::Vector2d q = apply_homography(pair.h_ab, {c.ax, c.ay});
    CHECK(q.x() == doctest::Approx(c.bx).epsilon(1e-12));
    CHECK(q.y() == doctest::Approx(c.by).epsilon(1e-12));
    const long bx = std::lround(c.bx), by = std::lround(c.by);
    CHECK(bx >= 0);
    CHECK(bx < 64);
    CHECK(by >= 0);
    CHECK(by < 64);
    CHECK(pair.valid_b.at(static_cast<int>(by), static_cast<int>(bx)) == 1);
  }
}

TEST_CASE("nms_topk: spacing and argmax contracts") {
  Tensor prob(1, 20, 20, 0.0);
  prob.at(0, 5, 5) = 0.9;
  prob.at(0, 5, 6) = 0.8;  // suppressed by (5,5) at radius 2
  prob.at(0, 15, 15) = 0.7;

  const auto top1 = nms_topk(prob, 1, 2);
  REQUIRE(top1.size() == 1);
  CHECK(top1[0] == std::pair{5, 5});

  const auto peaks = nms_topk(prob, 3, 2);
  REQUIRE(peaks.size() == 3);
  CHECK(peaks[0] == std::pair{5, 5});
  CHECK(peaks[1] == std::pair{15, 15});
  for (size_t i = 0; i < peaks.size(); ++i) {
    for (size_t j = i + 1; j < peaks.size(); ++j) {
      const int cheb = std::max(std::abs(peaks[i].first - peaks[j].first),
                                std::abs(peaks[i].second - peaks[j].second));
      CHECK(cheb > 2);
    }
  }
}

TEST_CASE("train_stage1: one-epoch smoke run with finite losses and determinism") {
  CorpusConfig corpus;
  corpus.images = 8;
  corpus.image_size = 48;
  corpus.holdout_pairs = 2;
  TrainConfig train;
  train.epochs = 1;
  train.batch_pairs = 2;
  train.crop = 40;
  train.correspondences = 128;
  train.threads = 2;

  auto run = [&]() {
    Rng rng(1234);
    return train_stage1(corpus, train, rng, tiny_arch());
  };
  const Stage1Result a = run();
  REQUIRE(a.metrics.rows.size() == 1);
  CHECK(std::isfinite(a.metrics.rows[0][1]));
  CHECK(a.model.stage == "stage1");

  const Stage1Result b = run();
  CHECK(a.metrics.rows[0][1] == b.metrics.rows[0][1]);  // bit-identical loss
  auto pa = a.model.params();
  auto pb = b.model.params();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(*pa[i].values == *pb[i].values);
}
