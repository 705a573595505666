#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "doctest.h"
#include "fixtures.h"
#include "pcpr/cmixup.h"

namespace pcpr::cmixup {
namespace {

Matrix Gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = StandardNormal(rng);
  return m;
}

// Dense reference: all-pairs cosine, top-k by (similarity desc, index asc),
// W + W^T, symmetric normalization, direct solve.
PropagationResult DensePropagation(const Matrix& x, const IndexList& labeled,
                                   const LabelVector& labels, int classes,
                                   const PropagationConfig& cfg) {
  const Eigen::Index n = x.rows();
  Matrix u = x;
  for (Eigen::Index i = 0; i < n; ++i) u.row(i) /= u.row(i).norm();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Eigen::Index> order;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) order.push_back(j);
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return u.row(i).dot(u.row(a)) > u.row(i).dot(u.row(b));
    });
    for (int t = 0; t < cfg.k; ++t) {
      const Eigen::Index j = order[t];
      const double v = std::pow(std::max(u.row(i).dot(u.row(j)), 0.0), cfg.gamma);
      w(i, j) += v;
      w(j, i) += v;
    }
  }
  const Eigen::VectorXd d = w.rowwise().sum();
  Eigen::MatrixXd s(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) s(i, j) = w(i, j) / std::sqrt(d[i] * d[j]);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, classes);
  for (std::size_t i = 0; i < labeled.size(); ++i) y(labeled[i], labels[i]) = 1.0;
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n) - cfg.alpha * s;
  const Eigen::MatrixXd z = a.ldlt().solve(y).cwiseMax(0.0);
  PropagationResult out;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::RowVectorXd p = z.row(i) / z.row(i).sum();
    Eigen::Index best;
    p.maxCoeff(&best);
    double h = 0.0;
    for (Eigen::Index c = 0; c < classes; ++c)
      if (p[c] > 0) h -= p[c] * std::log(p[c]);
    out.labels.push_back(static_cast<int>(best));
    out.weights.push_back(1.0 - h / std::log(classes));
  }
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    out.labels[labeled[i]] = labels[i];
    out.weights[labeled[i]] = 1.0;
  }
  return out;
}

TEST_CASE("mixup: lambda=1 copies the anchor, equal points stay put") {
  Rng rng(1);
  const Matrix z = Gaussian(rng, 6, 4);
  const LabelVector y{0, 1, 0, 1, 0, 2};
  MixupSpec spec;
  spec.fixed_lambda = 1.0;
  const MixupResult r = LatentMixup(z, y, spec, rng);
  CHECK(r.skipped == 1);  // class 2 has one member
  REQUIRE(r.anchors.size() == 5);
  for (std::size_t m = 0; m < r.anchors.size(); ++m) {
    CHECK(r.mixed.row(m) == z.row(r.anchors[m]));
    CHECK(y[r.partners[m]] == y[r.anchors[m]]);
    CHECK(r.partners[m] != r.anchors[m]);
    CHECK(r.labels[m] == y[r.anchors[m]]);
  }
  Matrix same = Matrix::Ones(3, 2);
  const MixupResult s = LatentMixup(same, {1, 1, 1}, MixupSpec{}, rng);
  CHECK(s.mixed == Matrix::Ones(3, 2));
}

TEST_CASE("mixup: mixed points lie on the segment for random batches") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix z = Gaussian(rng, 20, 8);
    LabelVector y(20);
    for (int& v : y) v = static_cast<int>(UniformIndex(rng, 4)) - (UniformIndex(rng, 5) == 0);
    MixupSpec spec;
    spec.pairs_per_anchor = 2;
    const MixupResult r = LatentMixup(z, y, spec, rng);
    for (std::size_t m = 0; m < r.anchors.size(); ++m) {
      CHECK(r.lambdas[m] >= 0.0);
      CHECK(r.lambdas[m] <= 1.0);
      CHECK(y[r.anchors[m]] != kNoLabel);
      const auto zi = z.row(r.anchors[m]);
      const auto zj = z.row(r.partners[m]);
      const double lhs = (r.mixed.row(m) - zi).norm() + (r.mixed.row(m) - zj).norm();
      CHECK(std::abs(lhs - (zi - zj).norm()) < 1e-9);
    }
  }
}

TEST_CASE("cg: matches a dense solve on a random SPD system") {
  Rng rng(3);
  const Matrix m = Gaussian(rng, 30, 30);
  const Eigen::MatrixXd spd = m.transpose() * m + 30.0 * Eigen::MatrixXd::Identity(30, 30);
  const SparseMatrix a = spd.sparseView();
  const Vector b = Gaussian(rng, 30, 1).col(0);
  Vector x;
  double residual = 1.0;
  const int it = ConjugateGradient(a, b, x, 1e-10, 200, &residual);
  CHECK(it > 0);
  CHECK(residual < 1e-10);
  CHECK((x - spd.ldlt().solve(b)).norm() < 1e-8);
  CHECK_THROWS_AS(ConjugateGradient(a, b, x, 1e-14, 2), NumericError);
}

TEST_CASE("propagation: agrees with a dense reference solve") {
  Rng rng(4);
  const Matrix x = Gaussian(rng, 80, 5);
  IndexList labeled{0, 1, 2, 3, 4, 5};
  LabelVector labels{0, 1, 2, 0, 1, 2};
  PropagationConfig cfg;
  cfg.k = 7;
  cfg.alpha = 0.9;
  cfg.tolerance = 1e-12;
  cfg.rescale_weights = false;
  const PropagationResult got = PropagateLabels(x, labeled, labels, 3, cfg);
  const PropagationResult want = DensePropagation(x, labeled, labels, 3, cfg);
  CHECK(got.labels == want.labels);
  for (std::size_t i = 0; i < got.weights.size(); ++i) {
    CHECK(got.weights[i] == doctest::Approx(want.weights[i]).epsilon(1e-8));
  }
}

TEST_CASE("propagation: rescaling divides unlabeled weights by their maximum") {
  Rng rng(8);
  const Matrix x = Gaussian(rng, 60, 4);
  PropagationConfig cfg;
  cfg.k = 6;
  cfg.rescale_weights = false;
  const PropagationResult raw = PropagateLabels(x, {0, 1, 2}, {0, 1, 2}, 3, cfg);
  cfg.rescale_weights = true;
  const PropagationResult scaled = PropagateLabels(x, {0, 1, 2}, {0, 1, 2}, 3, cfg);
  CHECK(raw.labels == scaled.labels);
  const double top = *std::max_element(raw.weights.begin() + 3, raw.weights.end());
  CHECK(*std::max_element(scaled.weights.begin() + 3, scaled.weights.end()) == 1.0);
  for (std::size_t i = 3; i < raw.weights.size(); ++i) {
    CHECK(scaled.weights[i] == doctest::Approx(raw.weights[i] / top).epsilon(1e-12));
  }
  CHECK(scaled.weights[0] == 1.0);
}

TEST_CASE("propagation: two separated clusters with one seed label each") {
  Rng rng(5);
  const double sigma = 0.1;
  // 8-D so cosine similarity does not collapse a cluster to a 1-D chain.
  const double theta = 2 * std::asin(10 * sigma / 2);
  Matrix x(500, 8);
  LabelVector truth(500);
  for (int i = 0; i < 500; ++i) {
    truth[i] = i % 2;
    for (int d = 0; d < 8; ++d) x(i, d) = sigma * StandardNormal(rng);
    x(i, 0) += truth[i] == 0 ? 1.0 : std::cos(theta);
    x(i, 1) += truth[i] == 0 ? 0.0 : std::sin(theta);
  }
  PropagationConfig cfg;
  cfg.k = 10;
  const PropagationResult r = PropagateLabels(x, {0, 1}, {0, 1}, 2, cfg);
  int correct = 0;
  for (int i = 2; i < 500; ++i) correct += r.labels[i] == truth[i];
  CHECK(correct >= 0.95 * 498);
  for (double w : r.weights) {
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
  }
  CHECK(r.weights[0] == 1.0);
  CHECK(r.residual < 1e-6);
}

TEST_CASE("propagation: alpha=0 leaves unlabeled rows uniform with weight 0") {
  Rng rng(6);
  const Matrix x = Gaussian(rng, 40, 3);
  PropagationConfig cfg;
  cfg.k = 5;
  cfg.alpha = 0.0;
  const PropagationResult r = PropagateLabels(x, {3, 7}, {1, 0}, 2, cfg);
  for (int i = 0; i < 40; ++i) {
    if (i == 3 || i == 7) {
      CHECK(r.weights[i] == 1.0);
    } else {
      CHECK(r.weights[i] == 0.0);
    }
  }
  CHECK(r.labels[3] == 1);
  CHECK(r.labels[7] == 0);
}

TEST_CASE("propagation: errors") {
  Rng rng(7);
  const Matrix x = Gaussian(rng, 10, 3);
  PropagationConfig cfg;
  cfg.k = 10;
  CHECK_THROWS_AS(PropagateLabels(x, {0, 1}, {0, 1}, 2, cfg), ConfigError);
  cfg.k = 3;
  CHECK_THROWS_AS(PropagateLabels(x, {0, 1}, {0, 0}, 2, cfg), Error);
}

TEST_CASE("components: parse and print") {
  CHECK(ComponentFlags::Parse("decoder+projection").ToString() == "decoder+projection");
  CHECK(ComponentFlags::Parse("projection+classifier").ToString() == "classifier+projection");
  CHECK(ComponentFlags::Parse("all") == ComponentFlags{});
  CHECK_THROWS_AS(ComponentFlags::Parse("decoder+head"), ConfigError);
  CmixupConfig cfg;
  cfg.components = ComponentFlags::Parse("none");
  CHECK_THROWS_AS(InitModel(4, 2, cfg, 1), ConfigError);
}

CmixupConfig FastConfig() {
  CmixupConfig c;
  c.encoder_hidden = {32};
  c.latent_dim = 16;
  c.projection_dim = 8;
  c.warmup_epochs = 2;
  c.epochs = 4;
  c.batch_size = 128;
  c.propagation.k = 10;
  return c;
}

TEST_CASE("encoder training: deterministic, labeled rows keep their labels") {
  const auto data = testing::MakeEncodedSplit(800, 0.2, 21);
  const CmixupConfig cfg = FastConfig();
  const int d = static_cast<int>(data.labeled.cols());
  auto run = [&] {
    return EncoderTrain(InitModel(d, 4, cfg, 3), data.labeled, data.labeled_y,
                        data.unlabeled, 4, cfg, 3);
  };
  const EncoderTrainResult a = run();
  const EncoderTrainResult b = run();
  CHECK(a.model.encoder == b.model.encoder);
  CHECK(a.propagation.labels == b.propagation.labels);
  CHECK(a.propagation.weights == b.propagation.weights);
  CHECK(a.propagation_rounds == 2);
  const auto n_l = data.labeled_y.size();
  REQUIRE(a.propagation.labels.size() == n_l + data.unlabeled_y.size());
  for (std::size_t i = 0; i < n_l; ++i) {
    CHECK(a.propagation.labels[i] == data.labeled_y[i]);
    CHECK(a.propagation.weights[i] == 1.0);
  }
  int correct = 0;
  for (std::size_t i = 0; i < data.unlabeled_y.size(); ++i) {
    correct += a.propagation.labels[n_l + i] == data.unlabeled_y[i];
  }
  CHECK(correct > 0.4 * static_cast<double>(data.unlabeled_y.size()));
  const nn::Prediction p = Classify(a.model, data.test);
  CHECK(p.labels.size() == data.test_y.size());
}

TEST_CASE("encoder training: decoder-only autoencoder path") {
  const auto data = testing::MakeEncodedSplit(600, 0.2, 22);
  CmixupConfig cfg = FastConfig();
  cfg.components = ComponentFlags::Parse("decoder");
  cfg.w_supcon = 0.0;
  cfg.epochs = 6;
  const int d = static_cast<int>(data.labeled.cols());
  const CmixupModel init = InitModel(d, 4, cfg, 5);
  CHECK(init.projection.empty());
  CHECK(init.classifier.empty());
  const EncoderTrainResult r =
      EncoderTrain(init, data.labeled, data.labeled_y, data.unlabeled, 4, cfg, 5);
  CHECK(r.curve.epoch_loss.back() < r.curve.epoch_loss.front());
  CHECK_THROWS_AS(Classify(r.model, data.test), ConfigError);
}

TEST_CASE("classify: zero logits give confidence 1/C") {
  CmixupModel m;
  m.components = ComponentFlags{};
  m.encoder = nn::Mlp({nn::DenseLayer{Matrix::Identity(2, 2), RowVector::Zero(2),
                                      nn::Activation::kIdentity}});
  m.classifier = nn::Mlp({nn::DenseLayer{Matrix::Zero(2, 5), RowVector::Zero(5),
                                         nn::Activation::kSoftmax}});
  const nn::Prediction p = Classify(m, Matrix::Ones(3, 2));
  for (double c : p.confidences) CHECK(c == doctest::Approx(0.2));
  for (int l : p.labels) CHECK(l == 0);
}

}  // namespace
}  // namespace pcpr::cmixup
