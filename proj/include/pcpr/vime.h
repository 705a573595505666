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

#ifndef PCPR_VIME_H_
#define PCPR_VIME_H_

// VIME-style two-step training on an encoded feature matrix: a denoising
// pretext task (mask generator, pretext generator, encoder, feature and mask
// decoders) followed by a predictor trained with cross-entropy on labeled rows
// plus a consistency penalty across corrupted copies of unlabeled rows.

#include <cstdint>
#include <vector>

#include "pcpr/common.h"
#include "pcpr/nn.h"

namespace pcpr::vime {

struct Corrupted {
  Matrix values;
  Matrix mask;  // 1 where the entry was replaced
};

// Bernoulli(mask_prob) mask per entry; masked entries take the same column's
// value from a uniformly chosen other row of `x` (or of `source` when given).
Corrupted Corrupt(const Matrix& x, double mask_prob, Rng& rng,
                  const Matrix* source = nullptr);

struct VimeConfig {
  int latent_dim = 32;
  double mask_prob = 0.3;
  double alpha_mask = 1.0;  // weight of the mask-decoder BCE
  double beta = 1.0;        // weight of the consistency term
  int num_views = 3;        // K corrupted copies per unlabeled row
  int pretext_epochs = 10;
  int semisup_epochs = 40;
  int batch_size = 128;
  std::vector<int> predictor_hidden = {256, 128};
  // When false the encoder is dropped and the predictor reads the encoded
  // input directly.
  bool pretext_enabled = true;
  bool finetune_encoder = false;
  // Draw replacement values from the whole training matrix instead of the
  // current batch.
  bool resample_full_dataset = false;
  nn::OptimizerConfig optimizer;
};

struct VimeModel {
  nn::Mlp encoder;  // empty when the pretext step is disabled
  nn::Mlp feature_decoder;
  nn::Mlp mask_decoder;
  nn::Mlp predictor;

  bool has_encoder() const { return !encoder.empty(); }
  int representation_dim(int input_dim) const {
    return has_encoder() ? encoder.output_dim() : input_dim;
  }
};

VimeModel InitModel(int input_dim, int num_classes, const VimeConfig& config,
                    std::uint64_t seed);

// Predictor initialized from `seed` on top of an existing (e.g. contrastive)
// encoder.
VimeModel WithEncoder(nn::Mlp encoder, int num_classes, const VimeConfig& config,
                      std::uint64_t seed);

struct TrainResult {
  VimeModel model;
  nn::TrainCurve curve;
};

// Minimizes reconstruction MSE + alpha_mask * mask BCE on corrupted inputs.
TrainResult PretextTrain(VimeModel model, const Matrix& unlabeled, const VimeConfig& config,
                         std::uint64_t seed);

// Minimizes CE on labeled rows + beta * consistency over num_views corrupted
// copies of an unlabeled batch drawn alongside every labeled batch.
TrainResult SemisupTrain(VimeModel model, const Matrix& labeled, const LabelVector& labels,
                         const Matrix& unlabeled, const VimeConfig& config,
                         std::uint64_t seed);

// Plain supervised MLP with the predictor's architecture and random streams.
nn::Mlp SupervisedBaseline(const Matrix& labeled, const LabelVector& labels, int num_classes,
                           const VimeConfig& config, std::uint64_t seed);

// Encoder output, or the input itself without an encoder.
Matrix Represent(const VimeModel& model, const Matrix& x);

Matrix PredictProbs(const VimeModel& model, const Matrix& x);
nn::Prediction Predict(const VimeModel& model, const Matrix& x);

}  // namespace pcpr::vime

#endif  // PCPR_VIME_H_
