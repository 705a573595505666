#include <set>

#include "doctest.h"
#include "fixtures.h"
#include "pcpr/vime.h"

namespace pcpr::vime {
namespace {

Matrix DistinctMatrix(Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = 100.0 * i + j;
  return m;
}

VimeConfig FastConfig() {
  VimeConfig c;
  c.latent_dim = 16;
  c.pretext_epochs = 3;
  c.semisup_epochs = 5;
  c.batch_size = 64;
  c.predictor_hidden = {32};
  return c;
}

TEST_CASE("corrupt: p=0 is the identity with an empty mask") {
  Rng rng(3);
  const Matrix x = DistinctMatrix(6, 4);
  const Corrupted c = Corrupt(x, 0.0, rng);
  CHECK(c.values == x);
  CHECK(c.mask.sum() == 0.0);
}

TEST_CASE("corrupt: p=1 replaces every entry from another row, same column") {
  Rng rng(5);
  const Matrix x = DistinctMatrix(7, 5);
  const Corrupted c = Corrupt(x, 1.0, rng);
  CHECK(c.mask.sum() == 35.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double v = c.values(i, j);
      const auto row = static_cast<Eigen::Index>(v / 100.0);
      CHECK(row != i);
      CHECK(x(row, j) == v);
    }
  }
}

TEST_CASE("corrupt: masked entries keep original where mask is 0 and rate tracks p") {
  Rng rng(8);
  const Matrix x = DistinctMatrix(200, 50);
  const Corrupted c = Corrupt(x, 0.3, rng);
  const double rate = c.mask.mean();
  CHECK(rate == doctest::Approx(0.3).epsilon(0.05));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (c.mask.data()[i] == 0.0) CHECK(c.values.data()[i] == x.data()[i]);
  }
}

TEST_CASE("corrupt: errors") {
  Rng rng(1);
  CHECK_THROWS_AS(Corrupt(Matrix::Ones(1, 3), 0.5, rng), Error);
  CHECK_THROWS_AS(Corrupt(Matrix::Ones(4, 3), 1.5, rng), ConfigError);
  CHECK_NOTHROW(Corrupt(Matrix::Ones(1, 3), 0.0, rng));
}

TEST_CASE("pretext: loss decreases") {
  const auto data = testing::MakeEncodedSplit(1200, 0.1, 11);
  VimeConfig config = FastConfig();
  config.pretext_epochs = 6;
  VimeModel model = InitModel(static_cast<int>(data.unlabeled.cols()), 4, config, 2);
  const TrainResult result = PretextTrain(model, data.unlabeled, config, 2);
  REQUIRE(result.curve.epoch_loss.size() == 6);
  CHECK(result.curve.epoch_loss.back() < result.curve.epoch_loss.front());
  CHECK_FALSE(result.model.encoder == model.encoder);
}

TEST_CASE("semisup: beta=0 and no unlabeled rows both reproduce the supervised baseline") {
  const auto data = testing::MakeEncodedSplit(1000, 0.2, 12);
  VimeConfig config = FastConfig();
  config.pretext_enabled = false;
  const int d = static_cast<int>(data.labeled.cols());
  const nn::Mlp baseline = SupervisedBaseline(data.labeled, data.labeled_y, 4, config, 9);

  VimeConfig zero_beta = config;
  zero_beta.beta = 0.0;
  const TrainResult a = SemisupTrain(InitModel(d, 4, zero_beta, 9), data.labeled,
                                     data.labeled_y, data.unlabeled, zero_beta, 9);
  CHECK(a.model.predictor == baseline);

  const TrainResult b = SemisupTrain(InitModel(d, 4, config, 9), data.labeled,
                                     data.labeled_y, Matrix(0, d), config, 9);
  CHECK(b.model.predictor == baseline);
}

TEST_CASE("semisup: identical views (p_m=0) give a zero consistency term") {
  const auto data = testing::MakeEncodedSplit(1000, 0.2, 13);
  VimeConfig config = FastConfig();
  config.pretext_enabled = false;
  config.mask_prob = 0.0;
  config.num_views = 2;
  const int d = static_cast<int>(data.labeled.cols());
  const nn::Mlp baseline = SupervisedBaseline(data.labeled, data.labeled_y, 4, config, 4);
  const TrainResult r = SemisupTrain(InitModel(d, 4, config, 4), data.labeled,
                                     data.labeled_y, data.unlabeled, config, 4);
  CHECK(r.model.predictor == baseline);
}

TEST_CASE("semisup: frozen encoder is untouched, fine-tuning moves it") {
  const auto data = testing::MakeEncodedSplit(800, 0.2, 14);
  VimeConfig config = FastConfig();
  const int d = static_cast<int>(data.labeled.cols());
  const VimeModel init = PretextTrain(InitModel(d, 4, config, 1), data.unlabeled, config, 1).model;
  const TrainResult frozen =
      SemisupTrain(init, data.labeled, data.labeled_y, data.unlabeled, config, 1);
  CHECK(frozen.model.encoder == init.encoder);
  config.finetune_encoder = true;
  const TrainResult tuned =
      SemisupTrain(init, data.labeled, data.labeled_y, data.unlabeled, config, 1);
  CHECK_FALSE(tuned.model.encoder == init.encoder);
}

TEST_CASE("semisup: deterministic and better than chance") {
  const auto data = testing::MakeEncodedSplit(1500, 0.2, 15);
  VimeConfig config = FastConfig();
  config.semisup_epochs = 20;
  config.optimizer.learning_rate = 3e-3;
  const int d = static_cast<int>(data.labeled.cols());
  auto run = [&] {
    VimeModel m = PretextTrain(InitModel(d, 4, config, 6), data.unlabeled, config, 6).model;
    return SemisupTrain(m, data.labeled, data.labeled_y, data.unlabeled, config, 6).model;
  };
  const VimeModel a = run();
  const VimeModel b = run();
  CHECK(a.predictor == b.predictor);
  const double acc = nn::Accuracy(Predict(a, data.test).labels, data.test_y);
  CHECK(acc > 0.4);
}

}  // namespace
}  // namespace pcpr::vime
