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

#ifndef PCPR_CMIXUP_H_
#define PCPR_CMIXUP_H_

// Contrastive-mixup pipeline: an encoder with projection, decoder and
// classifier heads trained with reconstruction, same-label latent mixup plus
// supervised contrastive loss, and classifier cross-entropy. Pseudo-labels for
// unlabeled rows come from graph label propagation over encoder latents.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcpr/common.h"
#include "pcpr/nn.h"

namespace pcpr::cmixup {

struct ComponentFlags {
  bool classifier = true;
  bool decoder = true;
  bool projection = true;

  bool any() const { return classifier || decoder || projection; }
  // "classifier+decoder+projection" style, in that fixed order.
  std::string ToString() const;
  static ComponentFlags Parse(const std::string& text);
  bool operator==(const ComponentFlags&) const = default;
};

struct MixupSpec {
  double beta_alpha = 0.2;
  int pairs_per_anchor = 1;
  // Overrides the Beta draw when set.
  std::optional<double> fixed_lambda;
};

struct MixupResult {
  Matrix mixed;
  LabelVector labels;
  IndexList anchors;   // row of z_i
  IndexList partners;  // row of z_j
  std::vector<double> lambdas;
  std::int64_t skipped = 0;  // anchors without a same-label partner
};

// mixed = lambda * z_i + (1 - lambda) * z_j for each anchor i with a label and
// a same-label partner j != i. Rows labeled kNoLabel are ignored.
MixupResult LatentMixup(const Matrix& z, const LabelVector& labels, const MixupSpec& spec,
                        Rng& rng);

struct PropagationConfig {
  int k = 50;
  double alpha = 0.99;
  // Edge weight is max(cosine, 0)^gamma.
  double gamma = 3.0;
  double tolerance = 1e-6;
  int max_iterations = 1000;
  // Propagate over projection-head outputs instead of encoder outputs.
  bool use_projection = false;
  // Divide unlabeled weights by their maximum so thresholds act on a [0, 1]
  // scale whatever the diffusion sharpness.
  bool rescale_weights = true;
};

struct PropagationResult {
  LabelVector labels;
  // 1 - entropy / ln C (optionally rescaled), labeled rows 1.
  std::vector<double> weights;
  int iterations = 0;           // worst CG iteration count over classes
  double residual = 0.0;        // worst relative residual
};

// Label propagation over a symmetric cosine kNN graph. `labeled` holds row
// positions in `latents` with classes `labels`; every class in 0..C-1 must be
// present. The caller caps k below the number of rows.
PropagationResult PropagateLabels(const Matrix& latents, const IndexList& labeled,
                                  const LabelVector& labels, int num_classes,
                                  const PropagationConfig& config);

// Solves A x = b for symmetric positive definite A. Returns iterations used;
// throws NumericError with the residual if tolerance is not reached.
int ConjugateGradient(const SparseMatrix& a, const Vector& b, Vector& x, double tolerance,
                      int max_iterations, double* residual = nullptr);

struct CmixupConfig {
  ComponentFlags components;
  std::vector<int> encoder_hidden = {64};
  int latent_dim = 32;
  int projection_dim = 16;
  double w_recon = 1.0;
  double w_supcon = 1.0;
  double w_clf = 0.5;
  double temperature = 0.5;
  int warmup_epochs = 10;
  int epochs = 20;
  int batch_size = 256;
  MixupSpec mixup;
  PropagationConfig propagation;
  nn::OptimizerConfig optimizer;
};

struct CmixupModel {
  nn::Mlp encoder;
  nn::Mlp projection;
  nn::Mlp decoder;
  nn::Mlp classifier;
  ComponentFlags components;
};

CmixupModel InitModel(int input_dim, int num_classes, const CmixupConfig& config,
                      std::uint64_t seed);

struct EncoderTrainResult {
  CmixupModel model;
  // Over the rows [labeled; unlabeled] in that order.
  PropagationResult propagation;
  nn::TrainCurve curve;
  int propagation_rounds = 0;
};

// Step one. Before warmup only labeled rows take part in mixup and supcon;
// afterwards propagation runs at the start of every epoch and pseudo-labeled
// rows join. A final propagation on the trained encoder is always returned.
EncoderTrainResult EncoderTrain(CmixupModel model, const Matrix& labeled,
                                const LabelVector& labels, const Matrix& unlabeled,
                                int num_classes, const CmixupConfig& config,
                                std::uint64_t seed);

Matrix Embed(const CmixupModel& model, const Matrix& x);
// Classifier head; throws ConfigError when the head is disabled.
nn::Prediction Classify(const CmixupModel& model, const Matrix& x);

}  // namespace pcpr::cmixup

#endif  // PCPR_CMIXUP_H_
