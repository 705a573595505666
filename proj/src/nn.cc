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

#include "pcpr/nn.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace pcpr::nn {
namespace {

void ApplyActivation(Activation act, Matrix& z) {
  switch (act) {
    case Activation::kIdentity:
      return;
    case Activation::kRelu:
      z = z.cwiseMax(0.0);
      return;
    case Activation::kSigmoid:
      z = (1.0 + (-z.array()).exp()).inverse().matrix();
      return;
    case Activation::kSoftmax:
      z = Softmax(z);
      return;
  }
}

// dLoss/dPreactivation from dLoss/dOutput, using the stored output.
Matrix ActivationBackward(Activation act, const Matrix& out, const Matrix& grad_out) {
  switch (act) {
    case Activation::kIdentity:
      return grad_out;
    case Activation::kRelu:
      return (out.array() > 0.0).select(grad_out, 0.0);
    case Activation::kSigmoid:
      return (grad_out.array() * out.array() * (1.0 - out.array())).matrix();
    case Activation::kSoftmax: {
      const Eigen::VectorXd dots = (grad_out.array() * out.array()).rowwise().sum();
      return (out.array() * (grad_out.colwise() - dots).array()).matrix();
    }
  }
  return grad_out;
}

void CheckFinite(const LayerGradient& g, std::size_t layer) {
  if (!g.weight.allFinite() || !g.bias.allFinite()) {
    throw NumericError("non-finite gradient in layer " + std::to_string(layer));
  }
}

template <typename Input>
ForwardPass ForwardImpl(const std::vector<DenseLayer>& layers, const Input& x) {
  ForwardPass pass;
  pass.outputs.reserve(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const DenseLayer& layer = layers[i];
    Matrix z;
    if (i == 0) {
      z = x * layer.weight;
    } else {
      z = pass.outputs.back() * layer.weight;
    }
    z.rowwise() += layer.bias;
    ApplyActivation(layer.activation, z);
    pass.outputs.push_back(std::move(z));
  }
  return pass;
}

template <typename Input>
Gradients BackwardImpl(const std::vector<DenseLayer>& layers, const Input& x,
                       const ForwardPass& pass, const Matrix& grad_output,
                       bool input_grad) {
  if (pass.outputs.size() != layers.size()) {
    throw ShapeError("Backward: forward pass does not match the model");
  }
  if (grad_output.rows() != pass.output().rows() ||
      grad_output.cols() != pass.output().cols()) {
    throw ShapeError("Backward: output gradient shape mismatch");
  }
  Gradients grads;
  grads.layers.resize(layers.size());
  Matrix upstream = grad_output;
  for (std::size_t k = layers.size(); k-- > 0;) {
    const DenseLayer& layer = layers[k];
    const Matrix dz = ActivationBackward(layer.activation, pass.outputs[k], upstream);
    LayerGradient& g = grads.layers[k];
    if (k == 0) {
      g.weight = x.transpose() * dz;
    } else {
      g.weight = pass.outputs[k - 1].transpose() * dz;
    }
    g.bias = dz.colwise().sum();
    CheckFinite(g, k);
    if (k > 0 || input_grad) upstream = dz * layer.weight.transpose();
  }
  if (input_grad) grads.input = std::move(upstream);
  return grads;
}

}  // namespace

Matrix Softmax(const Matrix& logits) {
  Matrix out = logits;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return out;
}

void Gradients::AddScaled(const Gradients& other, double scale) {
  if (other.layers.size() != layers.size()) {
    throw ShapeError("Gradients::AddScaled: layer count mismatch");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += scale * other.layers[i].weight;
    layers[i].bias += scale * other.layers[i].bias;
  }
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].bias.size() != layers_[i].weight.cols()) {
      throw ShapeError("layer " + std::to_string(i) + ": bias/weight mismatch");
    }
    if (i > 0 && layers_[i].in_dim() != layers_[i - 1].out_dim()) {
      throw ShapeError("layer " + std::to_string(i) + ": input dim " +
                       std::to_string(layers_[i].in_dim()) + " != previous output " +
                       std::to_string(layers_[i - 1].out_dim()));
    }
  }
}

Mlp Mlp::Create(std::span<const int> dims, Activation hidden, Activation output,
                std::uint64_t seed) {
  if (dims.size() < 2) throw ShapeError("Mlp::Create needs at least two dims");
  Rng rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] <= 0 || dims[i + 1] <= 0) throw ShapeError("non-positive layer width");
    DenseLayer layer;
    const double limit = std::sqrt(6.0 / (dims[i] + dims[i + 1]));
    layer.weight.resize(dims[i], dims[i + 1]);
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        layer.weight(r, c) = (2.0 * Uniform01(rng) - 1.0) * limit;
      }
    }
    layer.bias = RowVector::Zero(dims[i + 1]);
    layer.activation = i + 2 == dims.size() ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

std::int64_t Mlp::parameter_count() const {
  std::int64_t n = 0;
  for (const DenseLayer& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

void Mlp::CheckInput(Eigen::Index cols) const {
  if (layers_.empty()) throw ShapeError("empty model");
  if (cols != layers_.front().in_dim()) {
    throw ShapeError("input width " + std::to_string(cols) + " != model input dim " +
                     std::to_string(layers_.front().in_dim()));
  }
}

ForwardPass Mlp::Forward(const Matrix& x) const {
  CheckInput(x.cols());
  return ForwardImpl(layers_, x);
}

ForwardPass Mlp::Forward(const SparseMatrix& x) const {
  CheckInput(x.cols());
  return ForwardImpl(layers_, x);
}

Gradients Mlp::Backward(const Matrix& x, const ForwardPass& pass,
                        const Matrix& grad_output, bool input_grad) const {
  CheckInput(x.cols());
  return BackwardImpl(layers_, x, pass, grad_output, input_grad);
}

Gradients Mlp::Backward(const SparseMatrix& x, const ForwardPass& pass,
                        const Matrix& grad_output) const {
  CheckInput(x.cols());
  return BackwardImpl(layers_, x, pass, grad_output, false);
}

Gradients Mlp::ZeroGradients() const {
  Gradients g;
  for (const DenseLayer& l : layers_) {
    g.layers.push_back({Matrix::Zero(l.weight.rows(), l.weight.cols()),
                        RowVector::Zero(l.bias.size())});
  }
  return g;
}

bool Mlp::operator==(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const DenseLayer& a = layers_[i];
    const DenseLayer& b = other.layers_[i];
    if (a.activation != b.activation || a.weight.rows() != b.weight.rows() ||
        a.weight.cols() != b.weight.cols() || a.weight != b.weight || a.bias != b.bias) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------

void Optimizer::Step(Mlp& model, const Gradients& grads) {
  auto& layers = model.mutable_layers();
  if (grads.layers.size() != layers.size()) {
    throw ShapeError("Optimizer::Step: gradient/model layer count mismatch");
  }
  ++steps_;
  if (config_.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].weight -= config_.learning_rate * grads.layers[i].weight;
      layers[i].bias -= config_.learning_rate * grads.layers[i].bias;
    }
    return;
  }
  if (first_moment_.empty()) {
    first_moment_ = model.ZeroGradients().layers;
    second_moment_ = first_moment_;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double step = config_.learning_rate / correction1;
  const double sqrt_c2 = std::sqrt(correction2);
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    if (m.rows() != g.rows() || m.cols() != g.cols()) {
      throw ShapeError("Optimizer::Step: moment shape mismatch");
    }
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
    param.array() -= step * m.array() / (v.array().sqrt() / sqrt_c2 + config_.epsilon);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, grads.layers[i].weight, first_moment_[i].weight,
           second_moment_[i].weight);
    update(layers[i].bias, grads.layers[i].bias, first_moment_[i].bias,
           second_moment_[i].bias);
  }
}

// ---------------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[8] = {'P', 'C', 'P', 'R', 'N', 'N', '\0', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void Put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T Take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string SerializeMlp(const Mlp& model) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  Put(out, kCheckpointVersion);
  Put<std::uint32_t>(out, static_cast<std::uint32_t>(model.num_layers()));
  for (const DenseLayer& l : model.layers()) {
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_dim()));
    Put<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_dim()));
    Put<std::uint8_t>(out, static_cast<std::uint8_t>(l.activation));
    out.append(reinterpret_cast<const char*>(l.weight.data()),
               l.weight.size() * sizeof(double));
    out.append(reinterpret_cast<const char*>(l.bias.data()), l.bias.size() * sizeof(double));
  }
  return out;
}

Mlp DeserializeMlp(const std::string& bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw Error("not a model checkpoint");
  }
  std::size_t pos = sizeof(kCheckpointMagic);
  const auto version = Take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw Error("unsupported checkpoint version " + std::to_string(version));
  }
  const auto n = Take<std::uint32_t>(bytes, pos);
  std::vector<DenseLayer> layers(n);
  for (DenseLayer& l : layers) {
    const auto in = Take<std::uint32_t>(bytes, pos);
    const auto out = Take<std::uint32_t>(bytes, pos);
    const auto act = Take<std::uint8_t>(bytes, pos);
    if (act > static_cast<std::uint8_t>(Activation::kSoftmax)) {
      throw Error("checkpoint: bad activation");
    }
    l.activation = static_cast<Activation>(act);
    l.weight.resize(in, out);
    l.bias.resize(out);
    const std::size_t wbytes = l.weight.size() * sizeof(double);
    const std::size_t bbytes = l.bias.size() * sizeof(double);
    if (pos + wbytes + bbytes > bytes.size()) throw Error("checkpoint truncated");
    std::memcpy(l.weight.data(), bytes.data() + pos, wbytes);
    pos += wbytes;
    std::memcpy(l.bias.data(), bytes.data() + pos, bbytes);
    pos += bbytes;
  }
  if (pos != bytes.size()) throw Error("checkpoint has trailing bytes");
  return Mlp(std::move(layers));
}

void SaveMlp(const Mlp& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  const std::string bytes = SerializeMlp(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write checkpoint '" + path + "'");
}

Mlp LoadMlp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read checkpoint '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return DeserializeMlp(buffer.str());
}

Mlp LoadMlpCompatible(const std::string& path, const Mlp& expected) {
  Mlp model = LoadMlp(path);
  bool ok = model.num_layers() == expected.num_layers();
  for (std::size_t i = 0; ok && i < model.num_layers(); ++i) {
    const DenseLayer& a = model.layers()[i];
    const DenseLayer& b = expected.layers()[i];
    ok = a.in_dim() == b.in_dim() && a.out_dim() == b.out_dim() &&
         a.activation == b.activation;
  }
  if (!ok) throw ShapeError("checkpoint '" + path + "' has incompatible layer shapes");
  return model;
}

// ---------------------------------------------------------------------------

std::vector<IndexList> Minibatches(std::int64_t n, int batch_size, Rng& rng) {
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  const IndexList perm = Permutation(n, rng);
  std::vector<IndexList> batches;
  for (std::int64_t start = 0; start < n; start += batch_size) {
    const std::int64_t end = std::min<std::int64_t>(n, start + batch_size);
    batches.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return batches;
}

Prediction ArgmaxConfidence(const Matrix& probs) {
  Prediction out;
  out.labels.resize(probs.rows());
  out.confidences.resize(probs.rows());
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    int best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c) {
      if (probs(r, c) > probs(r, best)) best = static_cast<int>(c);
    }
    out.labels[r] = best;
    out.confidences[r] = probs(r, best);
  }
  return out;
}

double Accuracy(const LabelVector& predicted, const LabelVector& truth) {
  if (predicted.size() != truth.size()) throw ShapeError("Accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

namespace {

template <typename Input>
Matrix PredictChunked(const Mlp& model, const Input& x, std::int64_t chunk) {
  Matrix out(x.rows(), model.output_dim());
  for (Eigen::Index start = 0; start < x.rows(); start += chunk) {
    const Eigen::Index len = std::min<Eigen::Index>(chunk, x.rows() - start);
    const Input part = x.middleRows(start, len);
    out.middleRows(start, len) = model.Forward(part).output();
  }
  return out;
}

template <typename Input>
Mlp FitClassifierImpl(const Input& x, const LabelVector& labels, int num_classes,
                      const ClassifierConfig& config, std::uint64_t seed,
                      TrainCurve* curve) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
    throw ShapeError("FitClassifier: one label per row required");
  }
  std::vector<int> dims{static_cast<int>(x.cols())};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(num_classes);
  Mlp model = Mlp::Create(dims, Activation::kRelu, Activation::kSoftmax,
                          DeriveSeed(seed, "classifier-init"));
  Optimizer opt(config.optimizer);
  Rng rng(DeriveSeed(seed, "classifier-batches"));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    for (const IndexList& batch : Minibatches(x.rows(), config.batch_size, rng)) {
      const Input xb = GatherRows(x, batch);
      const LabelVector yb = GatherLabels(labels, batch);
      const ForwardPass pass = model.Forward(xb);
      const LossValue loss = CrossEntropyLoss(pass.output(), yb);
      if (!std::isfinite(loss.value)) {
        throw NumericError("FitClassifier: non-finite loss at epoch " + std::to_string(epoch));
      }
      opt.Step(model, model.Backward(xb, pass, loss.grad));
      total += loss.value * static_cast<double>(batch.size());
    }
    if (curve) curve->epoch_loss.push_back(total / static_cast<double>(x.rows()));
  }
  return model;
}

}  // namespace

Matrix PredictInChunks(const Mlp& model, const Matrix& x, std::int64_t chunk) {
  return PredictChunked(model, x, chunk);
}

Matrix PredictInChunks(const Mlp& model, const SparseMatrix& x, std::int64_t chunk) {
  return PredictChunked(model, x, chunk);
}

Mlp FitClassifier(const Matrix& x, const LabelVector& labels, int num_classes,
                  const ClassifierConfig& config, std::uint64_t seed, TrainCurve* curve) {
  return FitClassifierImpl(x, labels, num_classes, config, seed, curve);
}

Mlp FitClassifier(const SparseMatrix& x, const LabelVector& labels, int num_classes,
                  const ClassifierConfig& config, std::uint64_t seed, TrainCurve* curve) {
  return FitClassifierImpl(x, labels, num_classes, config, seed, curve);
}

}  // namespace pcpr::nn
