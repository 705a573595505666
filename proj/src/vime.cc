/*
 * Copyright 2026 The pcpr Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "pcpr/vime.h"

#include <cmath>

namespace pcpr::vime {
namespace {

void CheckFiniteLoss(double value, const char* stage, int epoch) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string(stage) + ": non-finite loss at epoch " +
                       std::to_string(epoch));
  }
}

// Minibatches where a trailing batch of one row is folded into its
// predecessor, since corruption needs at least two rows.
std::vector<IndexList> CorruptibleBatches(std::int64_t n, int batch_size, Rng& rng) {
  std::vector<IndexList> batches = nn::Minibatches(n, batch_size, rng);
  if (batches.size() > 1 && batches.back().size() < 2) {
    IndexList tail = std::move(batches.back());
    batches.pop_back();
    batches.back().insert(batches.back().end(), tail.begin(), tail.end());
  }
  return batches;
}

// Cycles through a shuffled unlabeled pool, reshuffling on wrap-around.
class UnlabeledSampler {
 public:
  UnlabeledSampler(std::int64_t n, std::uint64_t seed) : n_(n), rng_(seed) {}

  IndexList Next(int count) {
    IndexList out;
    const std::int64_t take = std::min<std::int64_t>(count, n_);
    while (static_cast<std::int64_t>(out.size()) < take) {
      if (pos_ >= static_cast<std::int64_t>(order_.size())) {
        order_ = Permutation(n_, rng_);
        pos_ = 0;
      }
      out.push_back(order_[pos_++]);
    }
    return out;
  }

  Rng& rng() { return rng_; }

 private:
  std::int64_t n_;
  Rng rng_;
  IndexList order_;
  std::int64_t pos_ = 0;
};

nn::Mlp MakePredictor(int input_dim, int num_classes, const VimeConfig& config,
                      std::uint64_t seed) {
  std::vector<int> dims{input_dim};
  dims.insert(dims.end(), config.predictor_hidden.begin(), config.predictor_hidden.end());
  dims.push_back(num_classes);
  // Same stream as nn::FitClassifier so that the degenerate configuration
  // reproduces the supervised baseline.
  return nn::Mlp::Create(dims, nn::Activation::kRelu, nn::Activation::kSoftmax,
                         DeriveSeed(seed, "classifier-init"));
}

}  // namespace

Corrupted Corrupt(const Matrix& x, double mask_prob, Rng& rng, const Matrix* source) {
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) {
    throw ConfigError("mask probability must lie in [0, 1]");
  }
  const Matrix& pool = source ? *source : x;
  if (source && source->cols() != x.cols()) throw ShapeError("Corrupt: source width mismatch");
  if (mask_prob > 0.0 && pool.rows() < 2) {
    throw Error("Corrupt: need at least two rows to resample from");
  }
  Corrupted out{x, Matrix::Zero(x.rows(), x.cols())};
  if (mask_prob == 0.0) return out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      if (Uniform01(rng) >= mask_prob) continue;
      out.mask(i, j) = 1.0;
      Eigen::Index r;
      if (source) {
        r = UniformIndex(rng, pool.rows());
      } else {
        // Uniform over the other rows of the batch.
        r = UniformIndex(rng, pool.rows() - 1);
        if (r >= i) ++r;
      }
      out.values(i, j) = pool(r, j);
    }
  }
  return out;
}

VimeModel InitModel(int input_dim, int num_classes, const VimeConfig& config,
                    std::uint64_t seed) {
  VimeModel model;
  if (config.pretext_enabled) {
    const std::vector<int> enc{input_dim, config.latent_dim};
    const std::vector<int> dec{config.latent_dim, input_dim};
    model.encoder = nn::Mlp::Create(enc, nn::Activation::kRelu, nn::Activation::kRelu,
                                    DeriveSeed(seed, "vime-encoder"));
    model.feature_decoder = nn::Mlp::Create(dec, nn::Activation::kIdentity,
                                            nn::Activation::kIdentity,
                                            DeriveSeed(seed, "vime-feature-decoder"));
    model.mask_decoder = nn::Mlp::Create(dec, nn::Activation::kIdentity,
                                         nn::Activation::kIdentity,
                                         DeriveSeed(seed, "vime-mask-decoder"));
  }
  model.predictor =
      MakePredictor(model.representation_dim(input_dim), num_classes, config, seed);
  return model;
}

VimeModel WithEncoder(nn::Mlp encoder, int num_classes, const VimeConfig& config,
                      std::uint64_t seed) {
  VimeModel model;
  model.encoder = std::move(encoder);
  model.predictor = MakePredictor(model.encoder.output_dim(), num_classes, config, seed);
  return model;
}

TrainResult PretextTrain(VimeModel model, const Matrix& unlabeled, const VimeConfig& config,
                         std::uint64_t seed) {
  if (!model.has_encoder()) throw ConfigError("PretextTrain: model has no encoder");
  if (unlabeled.rows() == 0) throw Error("PretextTrain: no unlabeled rows");
  TrainResult result;
  const bool use_mask = config.alpha_mask != 0.0;
  nn::Optimizer enc_opt(config.optimizer), feat_opt(config.optimizer),
      mask_opt(config.optimizer);
  Rng batch_rng(DeriveSeed(seed, "pretext-batches"));
  Rng corrupt_rng(DeriveSeed(seed, "pretext-corruption"));
  for (int epoch = 0; epoch < config.pretext_epochs; ++epoch) {
    double total = 0.0;
    for (const IndexList& batch : CorruptibleBatches(unlabeled.rows(), config.batch_size,
                                                     batch_rng)) {
      const Matrix x = GatherRows(unlabeled, batch);
      const Corrupted corrupted =
          Corrupt(x, config.mask_prob, corrupt_rng,
                  config.resample_full_dataset ? &unlabeled : nullptr);
      const nn::ForwardPass enc_pass = model.encoder.Forward(corrupted.values);
      const Matrix& z = enc_pass.output();
      const nn::ForwardPass feat_pass = model.feature_decoder.Forward(z);
      const nn::LossValue recon = nn::MseLoss(feat_pass.output(), x);
      nn::Gradients feat_grads = model.feature_decoder.Backward(z, feat_pass, recon.grad, true);
      Matrix grad_z = feat_grads.input;
      double loss = recon.value;
      nn::Gradients mask_grads;
      if (use_mask) {
        const nn::ForwardPass mask_pass = model.mask_decoder.Forward(z);
        nn::LossValue bce = nn::MaskBceLoss(mask_pass.output(), corrupted.mask);
        bce.grad *= config.alpha_mask;
        mask_grads = model.mask_decoder.Backward(z, mask_pass, bce.grad, true);
        grad_z += mask_grads.input;
        loss += config.alpha_mask * bce.value;
      }
      CheckFiniteLoss(loss, "pretext", epoch);
      const nn::Gradients enc_grads =
          model.encoder.Backward(corrupted.values, enc_pass, grad_z);
      feat_opt.Step(model.feature_decoder, feat_grads);
      if (use_mask) mask_opt.Step(model.mask_decoder, mask_grads);
      enc_opt.Step(model.encoder, enc_grads);
      total += loss * static_cast<double>(batch.size());
    }
    result.curve.epoch_loss.push_back(total / static_cast<double>(unlabeled.rows()));
  }
  result.model = std::move(model);
  return result;
}

TrainResult SemisupTrain(VimeModel model, const Matrix& labeled, const LabelVector& labels,
                         const Matrix& unlabeled, const VimeConfig& config,
                         std::uint64_t seed) {
  if (static_cast<Eigen::Index>(labels.size()) != labeled.rows()) {
    throw ShapeError("SemisupTrain: one label per labeled row required");
  }
  if (labeled.rows() == 0) throw Error("SemisupTrain: no labeled rows");
  const bool consistency =
      config.beta != 0.0 && unlabeled.rows() >= 2 && config.num_views >= 2;
  const bool finetune = model.has_encoder() && config.finetune_encoder;
  TrainResult result;
  nn::Optimizer pred_opt(config.optimizer), enc_opt(config.optimizer);
  Rng batch_rng(DeriveSeed(seed, "classifier-batches"));
  UnlabeledSampler sampler(unlabeled.rows(), DeriveSeed(seed, "vime-consistency"));

  // Frozen encoder: representations never change, compute them once.
  const bool frozen = model.has_encoder() && !finetune;
  const Matrix labeled_repr = frozen ? Represent(model, labeled) : Matrix();

  for (int epoch = 0; epoch < config.semisup_epochs; ++epoch) {
    double total = 0.0;
    for (const IndexList& batch : nn::Minibatches(labeled.rows(), config.batch_size,
                                                  batch_rng)) {
      const LabelVector yb = GatherLabels(labels, batch);
      const Matrix xb = GatherRows(labeled, batch);
      nn::ForwardPass enc_pass;
      Matrix hb;
      if (frozen) {
        hb = GatherRows(labeled_repr, batch);
      } else if (model.has_encoder()) {
        enc_pass = model.encoder.Forward(xb);
        hb = enc_pass.output();
      } else {
        hb = xb;
      }
      const nn::ForwardPass pass = model.predictor.Forward(hb);
      const nn::LossValue ce = nn::CrossEntropyLoss(pass.output(), yb);
      nn::Gradients pred_grads = model.predictor.Backward(hb, pass, ce.grad, finetune);
      double loss = ce.value;
      nn::Gradients enc_grads;
      if (finetune) enc_grads = model.encoder.Backward(xb, enc_pass, pred_grads.input);

      if (consistency) {
        const Matrix xu = GatherRows(unlabeled, sampler.Next(config.batch_size));
        std::vector<Matrix> views, reprs, outputs;
        std::vector<nn::ForwardPass> enc_passes, passes;
        for (int k = 0; k < config.num_views; ++k) {
          views.push_back(Corrupt(xu, config.mask_prob, sampler.rng(),
                                  config.resample_full_dataset ? &unlabeled : nullptr)
                              .values);
          if (model.has_encoder()) {
            enc_passes.push_back(model.encoder.Forward(views.back()));
            reprs.push_back(enc_passes.back().output());
          } else {
            reprs.push_back(views.back());
          }
          passes.push_back(model.predictor.Forward(reprs.back()));
          outputs.push_back(passes.back().output());
        }
        nn::ConsistencyValue cons = nn::ConsistencyLoss(outputs);
        loss += config.beta * cons.value;
        for (int k = 0; k < config.num_views; ++k) {
          cons.grads[k] *= config.beta;
          const nn::Gradients g =
              model.predictor.Backward(reprs[k], passes[k], cons.grads[k], finetune);
          pred_grads.AddScaled(g, 1.0);
          if (finetune) {
            enc_grads.AddScaled(model.encoder.Backward(views[k], enc_passes[k], g.input), 1.0);
          }
        }
      }
      CheckFiniteLoss(loss, "semi-supervised", epoch);
      pred_opt.Step(model.predictor, pred_grads);
      if (finetune) enc_opt.Step(model.encoder, enc_grads);
      total += loss * static_cast<double>(batch.size());
    }
    result.curve.epoch_loss.push_back(total / static_cast<double>(labeled.rows()));
  }
  result.model = std::move(model);
  return result;
}

nn::Mlp SupervisedBaseline(const Matrix& labeled, const LabelVector& labels, int num_classes,
                           const VimeConfig& config, std::uint64_t seed) {
  nn::ClassifierConfig cfg;
  cfg.hidden = config.predictor_hidden;
  cfg.epochs = config.semisup_epochs;
  cfg.batch_size = config.batch_size;
  cfg.optimizer = config.optimizer;
  return nn::FitClassifier(labeled, labels, num_classes, cfg, seed);
}

Matrix Represent(const VimeModel& model, const Matrix& x) {
  if (!model.has_encoder()) return x;
  return nn::PredictInChunks(model.encoder, x);
}

Matrix PredictProbs(const VimeModel& model, const Matrix& x) {
  return nn::PredictInChunks(model.predictor, Represent(model, x));
}

nn::Prediction Predict(const VimeModel& model, const Matrix& x) {
  return nn::ArgmaxConfidence(PredictProbs(model, x));
}

}  // namespace pcpr::vime
