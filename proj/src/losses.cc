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

#include <algorithm>
#include <cmath>

#include "pcpr/nn.h"

namespace pcpr::nn {
namespace {

constexpr double kProbFloor = 1e-12;

void CheckSameShape(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                     "x" + std::to_string(b.cols()) + ")");
  }
}

}  // namespace

LossValue CrossEntropyLoss(const Matrix& probs, const LabelVector& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) {
    throw ShapeError("CrossEntropyLoss: one label per row required");
  }
  LossValue out{0.0, Matrix::Zero(probs.rows(), probs.cols())};
  if (probs.rows() == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(probs.rows());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    const int y = labels[r];
    if (y < 0 || y >= probs.cols()) {
      throw Error("CrossEntropyLoss: label " + std::to_string(y) + " outside [0, " +
                  std::to_string(probs.cols()) + ")");
    }
    const double p = probs(r, y);
    if (p > kProbFloor) {
      out.value -= std::log(p);
      out.grad(r, y) = -inv_b / p;
    } else {
      out.value -= std::log(kProbFloor);
    }
  }
  out.value *= inv_b;
  return out;
}

LossValue MseLoss(const Matrix& prediction, const Matrix& target) {
  CheckSameShape(prediction, target, "MseLoss");
  LossValue out{0.0, Matrix::Zero(prediction.rows(), prediction.cols())};
  if (prediction.size() == 0) return out;
  const Matrix diff = prediction - target;
  const double inv_n = 1.0 / static_cast<double>(prediction.size());
  out.value = diff.squaredNorm() * inv_n;
  out.grad = 2.0 * inv_n * diff;
  return out;
}

LossValue MaskBceLoss(const Matrix& logits, const Matrix& mask) {
  CheckSameShape(logits, mask, "MaskBceLoss");
  LossValue out{0.0, Matrix::Zero(logits.rows(), logits.cols())};
  if (logits.size() == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      const double z = logits(r, c);
      const double m = mask(r, c);
      // Stable log(1 + exp(z)) - m z.
      total += std::max(z, 0.0) - z * m + std::log1p(std::exp(-std::abs(z)));
      const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                                : std::exp(z) / (1.0 + std::exp(z));
      out.grad(r, c) = (sig - m) * inv_n;
    }
  }
  out.value = total * inv_n;
  return out;
}

ConsistencyValue ConsistencyLoss(std::span<const Matrix> predictions) {
  const std::size_t k = predictions.size();
  if (k < 2) throw Error("ConsistencyLoss: need at least two prediction sets");
  for (const Matrix& p : predictions) CheckSameShape(p, predictions[0], "ConsistencyLoss");
  ConsistencyValue out;
  const Eigen::Index b = predictions[0].rows();
  if (b == 0) {
    for (const Matrix& p : predictions) out.grads.push_back(Matrix::Zero(p.rows(), p.cols()));
    return out;
  }
  Matrix mean = Matrix::Zero(b, predictions[0].cols());
  for (const Matrix& p : predictions) mean += p;
  mean /= static_cast<double>(k);
  const double inv_k = 1.0 / static_cast<double>(k);
  const double inv_b = 1.0 / static_cast<double>(b);
  double total = 0.0;
  for (const Matrix& p : predictions) {
    const Matrix dev = p - mean;
    total += dev.squaredNorm();
    out.grads.push_back(2.0 * inv_k * inv_b * dev);
  }
  out.value = total * inv_k * inv_b;
  return out;
}

SupConValue SupConLoss(const Matrix& z, const LabelVector& labels, double temperature) {
  if (!(temperature > 0.0)) throw Error("SupConLoss: temperature must be positive");
  if (static_cast<Eigen::Index>(labels.size()) != z.rows()) {
    throw ShapeError("SupConLoss: one label per row required");
  }
  const Eigen::Index b = z.rows();
  SupConValue out{0.0, Matrix::Zero(b, z.cols()), 0};
  if (b < 2) return out;
  const Matrix sim = (z * z.transpose()) / temperature;
  // g(i, a) = dLoss/dsim(i, a) before the 1/anchors scaling.
  Matrix g = Matrix::Zero(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    if (labels[i] == kNoLabel) continue;
    std::int64_t positives = 0;
    for (Eigen::Index a = 0; a < b; ++a) {
      if (a != i && labels[a] == labels[i]) ++positives;
    }
    if (positives == 0) continue;
    double max_s = -INFINITY;
    for (Eigen::Index a = 0; a < b; ++a) {
      if (a != i) max_s = std::max(max_s, sim(i, a));
    }
    double denom = 0.0;
    for (Eigen::Index a = 0; a < b; ++a) {
      if (a != i) denom += std::exp(sim(i, a) - max_s);
    }
    const double log_denom = max_s + std::log(denom);
    const double inv_p = 1.0 / static_cast<double>(positives);
    double term = 0.0;
    for (Eigen::Index a = 0; a < b; ++a) {
      if (a == i) continue;
      const bool positive = labels[a] == labels[i];
      if (positive) term -= inv_p * (sim(i, a) - log_denom);
      g(i, a) = std::exp(sim(i, a) - log_denom) - (positive ? inv_p : 0.0);
    }
    out.value += term;
    ++out.anchors;
  }
  if (out.anchors == 0) return out;
  const double inv_a = 1.0 / static_cast<double>(out.anchors);
  out.value *= inv_a;
  g *= inv_a;
  out.grad = ((g + g.transpose()) * z) / temperature;
  return out;
}

Matrix L2Normalize(const Matrix& x) {
  Matrix out = x;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double norm = out.row(r).norm();
    if (norm > 0.0) out.row(r) /= norm;
  }
  return out;
}

Matrix L2NormalizeBackward(const Matrix& x, const Matrix& normalized,
                           const Matrix& grad_normalized) {
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double norm = x.row(r).norm();
    if (norm == 0.0) continue;
    const double dot = grad_normalized.row(r).dot(normalized.row(r));
    out.row(r) = (grad_normalized.row(r) - dot * normalized.row(r)) / norm;
  }
  return out;
}

// ---------------------------------------------------------------------------

const char* LossKindName(LossKind kind) {
  switch (kind) {
    case LossKind::kCrossEntropy:
      return "cross_entropy";
    case LossKind::kMse:
      return "mse";
    case LossKind::kMaskBce:
      return "mask_bce";
    case LossKind::kConsistency:
      return "consistency";
    case LossKind::kSupCon:
      return "supcon";
  }
  return "?";
}

LossFn MakeLossFn(LossKind kind, const GradCheckBatch& batch) {
  switch (kind) {
    case LossKind::kCrossEntropy:
      return [batch](const Mlp& model, Gradients* grads) {
        const ForwardPass pass = model.Forward(batch.inputs);
        const LossValue loss = CrossEntropyLoss(pass.output(), batch.labels);
        if (grads) *grads = model.Backward(batch.inputs, pass, loss.grad);
        return loss.value;
      };
    case LossKind::kMse:
      return [batch](const Mlp& model, Gradients* grads) {
        const ForwardPass pass = model.Forward(batch.inputs);
        const LossValue loss = MseLoss(pass.output(), batch.targets);
        if (grads) *grads = model.Backward(batch.inputs, pass, loss.grad);
        return loss.value;
      };
    case LossKind::kMaskBce:
      return [batch](const Mlp& model, Gradients* grads) {
        const ForwardPass pass = model.Forward(batch.inputs);
        const LossValue loss = MaskBceLoss(pass.output(), batch.targets);
        if (grads) *grads = model.Backward(batch.inputs, pass, loss.grad);
        return loss.value;
      };
    case LossKind::kConsistency:
      return [batch](const Mlp& model, Gradients* grads) {
        std::vector<ForwardPass> passes;
        std::vector<Matrix> outputs;
        for (const Matrix& view : batch.views) {
          passes.push_back(model.Forward(view));
          outputs.push_back(passes.back().output());
        }
        const ConsistencyValue loss = ConsistencyLoss(outputs);
        if (grads) {
          *grads = model.ZeroGradients();
          for (std::size_t k = 0; k < passes.size(); ++k) {
            grads->AddScaled(model.Backward(batch.views[k], passes[k], loss.grads[k]), 1.0);
          }
        }
        return loss.value;
      };
    case LossKind::kSupCon:
      return [batch](const Mlp& model, Gradients* grads) {
        const ForwardPass pass = model.Forward(batch.inputs);
        const Matrix normalized = L2Normalize(pass.output());
        const SupConValue loss = SupConLoss(normalized, batch.labels, batch.temperature);
        if (grads) {
          *grads = model.Backward(
              batch.inputs, pass, L2NormalizeBackward(pass.output(), normalized, loss.grad));
        }
        return loss.value;
      };
  }
  throw Error("unreachable");
}

GradCheckReport GradCheck(const Mlp& model, const LossFn& loss, double epsilon) {
  if (!(epsilon > 0.0)) throw Error("GradCheck: epsilon must be positive");
  Gradients analytic;
  loss(model, &analytic);
  GradCheckReport report;
  Mlp probe = model;
  auto check = [&](double& param, double grad, int layer) {
    const double saved = param;
    param = saved + epsilon;
    const double up = loss(probe, nullptr);
    param = saved - epsilon;
    const double down = loss(probe, nullptr);
    param = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double abs_err = std::abs(grad - numeric);
    const double rel_err = abs_err / std::max({std::abs(grad), std::abs(numeric), 1e-6});
    report.max_abs_err = std::max(report.max_abs_err, abs_err);
    if (rel_err > report.max_rel_err) {
      report.max_rel_err = rel_err;
      report.worst_layer = layer;
    }
    ++report.parameters_checked;
  };
  auto& layers = probe.mutable_layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (Eigen::Index i = 0; i < layers[l].weight.size(); ++i) {
      check(layers[l].weight.data()[i], analytic.layers[l].weight.data()[i],
            static_cast<int>(l));
    }
    for (Eigen::Index i = 0; i < layers[l].bias.size(); ++i) {
      check(layers[l].bias.data()[i], analytic.layers[l].bias.data()[i],
            static_cast<int>(l));
    }
  }
  return report;
}

namespace {

Matrix RandomGaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * StandardNormal(rng);
  return m;
}

// Random biases keep probe points away from the all-zero output rows that
// zero-initialized biases can produce behind dead relus.
Mlp WithRandomBiases(Mlp model, Rng& rng) {
  for (DenseLayer& layer : model.mutable_layers()) {
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = 0.5 * StandardNormal(rng);
  }
  return model;
}

}  // namespace

std::vector<GradCheckCase> GradCheckSuite(std::uint64_t seed) {
  Rng rng(DeriveSeed(seed, "gradcheck"));
  std::vector<GradCheckCase> out;
  {
    GradCheckBatch batch;
    batch.inputs = RandomGaussian(rng, 6, 4, 1.0);
    batch.targets = RandomGaussian(rng, 6, 3, 1.0);
    const std::vector<int> dims{4, 3};
    const Mlp model = WithRandomBiases(
        Mlp::Create(dims, Activation::kIdentity, Activation::kIdentity,
                    DeriveSeed(seed, "gradcheck-linear")),
        rng);
    GradCheckCase c{"mse_linear", LossKind::kMse, 1e-4, 1e-8, {}};
    c.report = GradCheck(model, MakeLossFn(LossKind::kMse, batch), c.epsilon);
    out.push_back(c);
  }
  const int b = 7, d = 5, classes = 3;
  GradCheckBatch batch;
  batch.inputs = RandomGaussian(rng, b, d, 1.0);
  for (int i = 0; i < b; ++i) batch.labels.push_back(i % classes);
  for (int k = 0; k < 3; ++k) {
    batch.views.push_back(batch.inputs + RandomGaussian(rng, b, d, 0.3));
  }
  const std::vector<int> dims{d, 6, classes};
  for (LossKind kind : {LossKind::kCrossEntropy, LossKind::kMse, LossKind::kMaskBce,
                        LossKind::kConsistency, LossKind::kSupCon}) {
    batch.targets = RandomGaussian(rng, b, classes, 1.0);
    if (kind == LossKind::kMaskBce) {
      batch.targets = (batch.targets.array() > 0.0).cast<double>().matrix();
    }
    const bool probs = kind == LossKind::kCrossEntropy || kind == LossKind::kConsistency;
    const Mlp model = WithRandomBiases(
        Mlp::Create(dims, Activation::kRelu, probs ? Activation::kSoftmax : Activation::kIdentity,
                    DeriveSeed(seed, LossKindName(kind))),
        rng);
    GradCheckCase c{LossKindName(kind), kind, 1e-6, 1e-4, {}};
    c.report = GradCheck(model, MakeLossFn(kind, batch), c.epsilon);
    out.push_back(c);
  }
  return out;
}

}  // namespace pcpr::nn
