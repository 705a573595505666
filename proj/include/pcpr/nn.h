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

#ifndef PCPR_NN_H_
#define PCPR_NN_H_

// Small dense networks with exact reverse-mode gradients. Everything is
// single-threaded and deterministic: identical seeds and inputs give
// bit-identical parameters.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pcpr/common.h"
#include "pcpr/random.h"

namespace pcpr::nn {

enum class Activation { kIdentity, kRelu, kSigmoid, kSoftmax };

struct DenseLayer {
  Matrix weight;  // in x out
  RowVector bias;
  Activation activation = Activation::kIdentity;

  int in_dim() const { return static_cast<int>(weight.rows()); }
  int out_dim() const { return static_cast<int>(weight.cols()); }
};

struct LayerGradient {
  Matrix weight;
  RowVector bias;
};

struct Gradients {
  std::vector<LayerGradient> layers;
  // Gradient with respect to the network input; empty unless requested.
  Matrix input;

  // this += scale * other (layer parts only).
  void AddScaled(const Gradients& other, double scale);
};

// Post-activation output of every layer for one batch.
struct ForwardPass {
  std::vector<Matrix> outputs;
  const Matrix& output() const { return outputs.back(); }
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  // dims = {input, hidden..., output}. Hidden layers use `hidden`, the last
  // layer `output`. Glorot-uniform weights, zero biases.
  static Mlp Create(std::span<const int> dims, Activation hidden, Activation output,
                    std::uint64_t seed);

  bool empty() const { return layers_.empty(); }
  int input_dim() const { return layers_.front().in_dim(); }
  int output_dim() const { return layers_.back().out_dim(); }
  std::size_t num_layers() const { return layers_.size(); }
  std::int64_t parameter_count() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& mutable_layers() { return layers_; }

  ForwardPass Forward(const Matrix& x) const;
  ForwardPass Forward(const SparseMatrix& x) const;
  Matrix Predict(const Matrix& x) const { return Forward(x).output(); }

  // Gradients of a scalar loss given dLoss/dOutput (post-activation).
  // Throws NumericError naming the layer if any gradient is not finite.
  Gradients Backward(const Matrix& x, const ForwardPass& pass,
                     const Matrix& grad_output, bool input_grad = false) const;
  Gradients Backward(const SparseMatrix& x, const ForwardPass& pass,
                     const Matrix& grad_output) const;

  Gradients ZeroGradients() const;

  bool operator==(const Mlp& other) const;

 private:
  void CheckInput(Eigen::Index cols) const;

  std::vector<DenseLayer> layers_;
};

Matrix Softmax(const Matrix& logits);

// ---------------------------------------------------------------------------
// Losses. Each returns the scalar value and its gradient with respect to the
// loss input.

struct LossValue {
  double value = 0.0;
  Matrix grad;
};

// Mean -log p[label] with p clamped at 1e-12.
LossValue CrossEntropyLoss(const Matrix& probs, const LabelVector& labels);
// Mean squared error over all entries.
LossValue MseLoss(const Matrix& prediction, const Matrix& target);
// Mean binary cross-entropy of sigmoid(logits) against 0/1 targets.
LossValue MaskBceLoss(const Matrix& logits, const Matrix& mask);

struct ConsistencyValue {
  double value = 0.0;
  std::vector<Matrix> grads;
};

// Mean over samples of the sum over classes of the variance of the K
// predictions (K >= 2).
ConsistencyValue ConsistencyLoss(std::span<const Matrix> predictions);

struct SupConValue {
  double value = 0.0;
  Matrix grad;
  std::int64_t anchors = 0;
};

// Supervised contrastive loss over L2-normalized rows. For every anchor with
// at least one same-label positive:
//   -1/|P| sum_p log(exp(s_ip / t) / sum_{a != i} exp(s_ia / t)),
// averaged over anchors. Rows labeled kNoLabel are never anchors or positives
// but still appear in denominators.
SupConValue SupConLoss(const Matrix& z, const LabelVector& labels, double temperature);

Matrix L2Normalize(const Matrix& x);
Matrix L2NormalizeBackward(const Matrix& x, const Matrix& normalized,
                           const Matrix& grad_normalized);

// ---------------------------------------------------------------------------

enum class OptimizerKind { kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  void Step(Mlp& model, const Gradients& grads);
  std::int64_t steps() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::int64_t steps_ = 0;
  std::vector<LayerGradient> first_moment_;
  std::vector<LayerGradient> second_moment_;
};

// ---------------------------------------------------------------------------
// Finite-difference gradient checking.

// Evaluates a scalar loss of `model`; fills `grads` with analytic gradients
// when non-null.
using LossFn = std::function<double(const Mlp& model, Gradients* grads)>;

enum class LossKind { kCrossEntropy, kMse, kMaskBce, kConsistency, kSupCon };

const char* LossKindName(LossKind kind);

struct GradCheckBatch {
  Matrix inputs;
  LabelVector labels;         // cross-entropy, supcon
  Matrix targets;             // mse, mask-bce
  std::vector<Matrix> views;  // consistency: K corrupted copies of inputs
  double temperature = 0.5;   // supcon
};

// Loss of the model output on the batch. Cross-entropy and consistency expect
// a softmax output layer; supcon L2-normalizes the output first.
LossFn MakeLossFn(LossKind kind, const GradCheckBatch& batch);

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::int64_t parameters_checked = 0;
  int worst_layer = -1;
};

// Central differences on every parameter. Relative error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
GradCheckReport GradCheck(const Mlp& model, const LossFn& loss, double epsilon);

struct GradCheckCase {
  std::string name;
  LossKind kind = LossKind::kMse;
  double epsilon = 0.0;
  double tolerance = 0.0;
  GradCheckReport report;
  bool passed() const { return report.max_rel_err < tolerance; }
};

// Every loss on a random small relu MLP (tolerance 1e-4) plus MSE on a linear
// model, where central differences are exact up to rounding (1e-8).
std::vector<GradCheckCase> GradCheckSuite(std::uint64_t seed);

// ---------------------------------------------------------------------------
// Versioned binary checkpoints.

std::string SerializeMlp(const Mlp& model);
Mlp DeserializeMlp(const std::string& bytes);
void SaveMlp(const Mlp& model, const std::string& path);
Mlp LoadMlp(const std::string& path);
// Loads and checks that layer shapes match `expected`.
Mlp LoadMlpCompatible(const std::string& path, const Mlp& expected);

// ---------------------------------------------------------------------------
// Training utilities.

// Shuffled partition of 0..n-1 into batches of at most batch_size.
std::vector<IndexList> Minibatches(std::int64_t n, int batch_size, Rng& rng);

struct Prediction {
  LabelVector labels;
  std::vector<double> confidences;
};

// Argmax per row with ties broken to the lowest index; confidence is the max.
Prediction ArgmaxConfidence(const Matrix& probs);

double Accuracy(const LabelVector& predicted, const LabelVector& truth);

// Forward pass in chunks to bound memory; returns the output layer.
Matrix PredictInChunks(const Mlp& model, const Matrix& x, std::int64_t chunk = 4096);
Matrix PredictInChunks(const Mlp& model, const SparseMatrix& x,
                       std::int64_t chunk = 4096);

struct ClassifierConfig {
  std::vector<int> hidden = {256, 128};
  int epochs = 30;
  int batch_size = 128;
  OptimizerConfig optimizer;
};

struct TrainCurve {
  std::vector<double> epoch_loss;
};

// Plain supervised softmax MLP trained with minibatch cross-entropy.
Mlp FitClassifier(const Matrix& x, const LabelVector& labels, int num_classes,
                  const ClassifierConfig& config, std::uint64_t seed,
                  TrainCurve* curve = nullptr);
Mlp FitClassifier(const SparseMatrix& x, const LabelVector& labels, int num_classes,
                  const ClassifierConfig& config, std::uint64_t seed,
                  TrainCurve* curve = nullptr);

}  // namespace pcpr::nn

#endif  // PCPR_NN_H_
