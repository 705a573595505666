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

#include "pcpr/cmixup.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <sstream>

namespace pcpr::cmixup {
namespace {

constexpr Eigen::Index kSimilarityBlock = 256;

struct Neighbor {
  double sim;
  RowIndex index;
};

bool Better(const Neighbor& a, const Neighbor& b) {
  return a.sim > b.sim || (a.sim == b.sim && a.index < b.index);
}

// Max-heap under Better keeps the worst retained neighbor on top.
struct BetterOrder {
  bool operator()(const Neighbor& a, const Neighbor& b) const { return Better(a, b); }
};

SparseMatrix KnnAffinity(const Matrix& latents, int k, double gamma) {
  const Matrix unit = nn::L2Normalize(latents);
  const Eigen::Index n = unit.rows();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(2 * n * k));
  for (Eigen::Index start = 0; start < n; start += kSimilarityBlock) {
    const Eigen::Index rows = std::min(kSimilarityBlock, n - start);
    const Matrix sims = unit.middleRows(start, rows) * unit.transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      const RowIndex i = start + r;
      std::priority_queue<Neighbor, std::vector<Neighbor>, BetterOrder> heap;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const Neighbor cand{sims(r, j), j};
        if (static_cast<int>(heap.size()) < k) {
          heap.push(cand);
        } else if (Better(cand, heap.top())) {
          heap.pop();
          heap.push(cand);
        }
      }
      while (!heap.empty()) {
        const Neighbor nb = heap.top();
        heap.pop();
        const double w = std::pow(std::max(nb.sim, 0.0), gamma);
        if (w <= 0.0) continue;
        triplets.emplace_back(i, nb.index, w);
        triplets.emplace_back(nb.index, i, w);
      }
    }
  }
  SparseMatrix w(n, n);
  w.setFromTriplets(triplets.begin(), triplets.end());
  return w;
}

Matrix VStack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  if (a.rows() > 0) out.topRows(a.rows()) = a;
  if (b.rows() > 0) out.bottomRows(b.rows()) = b;
  return out;
}

void CheckFinite(double value, int epoch) {
  if (!std::isfinite(value)) {
    throw NumericError("encoder training: non-finite loss at epoch " + std::to_string(epoch));
  }
}

}  // namespace

std::string ComponentFlags::ToString() const {
  std::vector<std::string> parts;
  if (classifier) parts.push_back("classifier");
  if (decoder) parts.push_back("decoder");
  if (projection) parts.push_back("projection");
  if (parts.empty()) return "none";
  std::string out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
  return out;
}

ComponentFlags ComponentFlags::Parse(const std::string& text) {
  ComponentFlags flags{false, false, false};
  if (text == "none") return flags;
  if (text == "all") return ComponentFlags{};
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, '+')) {
    if (part == "classifier") {
      flags.classifier = true;
    } else if (part == "decoder") {
      flags.decoder = true;
    } else if (part == "projection") {
      flags.projection = true;
    } else {
      throw ConfigError("unknown component '" + part + "'");
    }
  }
  return flags;
}

MixupResult LatentMixup(const Matrix& z, const LabelVector& labels, const MixupSpec& spec,
                        Rng& rng) {
  if (static_cast<Eigen::Index>(labels.size()) != z.rows()) {
    throw ShapeError("LatentMixup: one label per row required");
  }
  if (!(spec.beta_alpha > 0.0)) throw ConfigError("mixup beta_alpha must be positive");
  if (spec.fixed_lambda && !(*spec.fixed_lambda >= 0.0 && *spec.fixed_lambda <= 1.0)) {
    throw ConfigError("mixup lambda must lie in [0, 1]");
  }
  std::map<int, IndexList> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kNoLabel) groups[labels[i]].push_back(static_cast<RowIndex>(i));
  }
  MixupResult out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == kNoLabel) continue;
    const IndexList& group = groups[labels[i]];
    if (group.size() < 2) {
      ++out.skipped;
      continue;
    }
    const auto self = std::lower_bound(group.begin(), group.end(),
                                       static_cast<RowIndex>(i)) - group.begin();
    for (int p = 0; p < spec.pairs_per_anchor; ++p) {
      auto pick = UniformIndex(rng, static_cast<std::int64_t>(group.size()) - 1);
      if (pick >= self) ++pick;
      const double lambda = spec.fixed_lambda ? *spec.fixed_lambda
                                              : Beta(rng, spec.beta_alpha, spec.beta_alpha);
      out.anchors.push_back(static_cast<RowIndex>(i));
      out.partners.push_back(group[pick]);
      out.lambdas.push_back(lambda);
      out.labels.push_back(labels[i]);
    }
  }
  out.mixed.resize(static_cast<Eigen::Index>(out.anchors.size()), z.cols());
  for (std::size_t r = 0; r < out.anchors.size(); ++r) {
    const double l = out.lambdas[r];
    out.mixed.row(r) = l * z.row(out.anchors[r]) + (1.0 - l) * z.row(out.partners[r]);
  }
  return out;
}

int ConjugateGradient(const SparseMatrix& a, const Vector& b, Vector& x, double tolerance,
                      int max_iterations, double* residual) {
  const double b_norm = b.norm();
  x = Vector::Zero(b.size());
  if (b_norm == 0.0) {
    if (residual) *residual = 0.0;
    return 0;
  }
  Vector r = b;
  Vector p = r;
  double rr = r.squaredNorm();
  int it = 0;
  double rel = std::sqrt(rr) / b_norm;
  while (rel >= tolerance && it < max_iterations) {
    const Vector ap = a * p;
    const double step = rr / p.dot(ap);
    x += step * p;
    r -= step * ap;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    rel = std::sqrt(rr) / b_norm;
    ++it;
  }
  if (residual) *residual = rel;
  if (!(rel < tolerance)) {
    std::ostringstream msg;
    msg << "conjugate gradient did not converge in " << max_iterations
        << " iterations (relative residual " << rel << ")";
    throw NumericError(msg.str());
  }
  return it;
}

PropagationResult PropagateLabels(const Matrix& latents, const IndexList& labeled,
                                  const LabelVector& labels, int num_classes,
                                  const PropagationConfig& config) {
  const Eigen::Index n = latents.rows();
  if (labeled.size() != labels.size()) {
    throw ShapeError("PropagateLabels: one label per labeled row required");
  }
  if (config.k < 1 || config.k >= n) {
    throw ConfigError("PropagateLabels: k=" + std::to_string(config.k) +
                      " must be in [1, " + std::to_string(n) + ")");
  }
  if (!(config.alpha >= 0.0 && config.alpha < 1.0)) {
    throw ConfigError("PropagateLabels: alpha must lie in [0, 1)");
  }
  std::vector<bool> present(num_classes, false);
  std::vector<bool> is_labeled(n, false);
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || labeled[i] < 0 || labeled[i] >= n) {
      throw Error("PropagateLabels: labeled row or class out of range");
    }
    present[labels[i]] = true;
    is_labeled[labeled[i]] = true;
  }
  for (int c = 0; c < num_classes; ++c) {
    if (!present[c]) {
      throw Error("PropagateLabels: class " + std::to_string(c) + " has no labeled row");
    }
  }

  const SparseMatrix w = KnnAffinity(latents, config.k, config.gamma);
  Vector inv_sqrt_degree(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = w.row(i).sum();
    inv_sqrt_degree[i] = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(w.nonZeros() + n));
  for (Eigen::Index i = 0; i < n; ++i) {
    triplets.emplace_back(i, i, 1.0);
    for (SparseMatrix::InnerIterator it(w, i); it; ++it) {
      const double s = inv_sqrt_degree[i] * it.value() * inv_sqrt_degree[it.col()];
      triplets.emplace_back(i, it.col(), -config.alpha * s);
    }
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(triplets.begin(), triplets.end());

  PropagationResult result;
  Matrix z(n, num_classes);
  for (int c = 0; c < num_classes; ++c) {
    Vector y = Vector::Zero(n);
    for (std::size_t i = 0; i < labeled.size(); ++i) {
      if (labels[i] == c) y[labeled[i]] = 1.0;
    }
    Vector x;
    double residual = 0.0;
    const int it = ConjugateGradient(a, y, x, config.tolerance, config.max_iterations,
                                     &residual);
    result.iterations = std::max(result.iterations, it);
    result.residual = std::max(result.residual, residual);
    z.col(c) = x;
  }

  const double log_c = std::log(static_cast<double>(num_classes));
  result.labels.assign(n, 0);
  result.weights.assign(n, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    RowVector p = z.row(i).cwiseMax(0.0);
    const double total = p.sum();
    if (total > 0.0) {
      p /= total;
    } else {
      p.setConstant(1.0 / num_classes);
    }
    int best = 0;
    double entropy = 0.0;
    for (int c = 0; c < num_classes; ++c) {
      if (p[c] > p[best]) best = c;
      if (p[c] > 0.0) entropy -= p[c] * std::log(p[c]);
    }
    result.labels[i] = best;
    result.weights[i] =
        num_classes > 1 ? std::clamp(1.0 - entropy / log_c, 0.0, 1.0) : 1.0;
  }
  if (config.rescale_weights) {
    double top = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!is_labeled[i]) top = std::max(top, result.weights[i]);
    }
    if (top > 0.0) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!is_labeled[i]) result.weights[i] = std::min(1.0, result.weights[i] / top);
      }
    }
  }
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    result.labels[labeled[i]] = labels[i];
    result.weights[labeled[i]] = 1.0;
  }
  return result;
}

CmixupModel InitModel(int input_dim, int num_classes, const CmixupConfig& config,
                      std::uint64_t seed) {
  if (!config.components.any()) throw ConfigError("cmixup: no component enabled");
  CmixupModel model;
  model.components = config.components;
  std::vector<int> enc{input_dim};
  enc.insert(enc.end(), config.encoder_hidden.begin(), config.encoder_hidden.end());
  enc.push_back(config.latent_dim);
  model.encoder = nn::Mlp::Create(enc, nn::Activation::kRelu, nn::Activation::kIdentity,
                                  DeriveSeed(seed, "cmixup-encoder"));
  if (config.components.decoder) {
    std::vector<int> dec(enc.rbegin(), enc.rend());
    model.decoder = nn::Mlp::Create(dec, nn::Activation::kRelu, nn::Activation::kIdentity,
                                    DeriveSeed(seed, "cmixup-decoder"));
  }
  if (config.components.projection) {
    const std::vector<int> proj{config.latent_dim, config.latent_dim, config.projection_dim};
    model.projection = nn::Mlp::Create(proj, nn::Activation::kRelu,
                                       nn::Activation::kIdentity,
                                       DeriveSeed(seed, "cmixup-projection"));
  }
  if (config.components.classifier) {
    const std::vector<int> clf{config.latent_dim, num_classes};
    model.classifier = nn::Mlp::Create(clf, nn::Activation::kRelu, nn::Activation::kSoftmax,
                                       DeriveSeed(seed, "cmixup-classifier"));
  }
  return model;
}

Matrix Embed(const CmixupModel& model, const Matrix& x) {
  return nn::PredictInChunks(model.encoder, x);
}

nn::Prediction Classify(const CmixupModel& model, const Matrix& x) {
  if (!model.components.classifier || model.classifier.empty()) {
    throw ConfigError("Classify: classifier head is disabled");
  }
  return nn::ArgmaxConfidence(nn::PredictInChunks(model.classifier, Embed(model, x)));
}

namespace {

Matrix PropagationLatents(const CmixupModel& model, const Matrix& x, bool use_projection) {
  const Matrix z = Embed(model, x);
  if (!use_projection) return z;
  return nn::L2Normalize(nn::PredictInChunks(model.projection, z));
}

}  // namespace

EncoderTrainResult EncoderTrain(CmixupModel model, const Matrix& labeled,
                                const LabelVector& labels, const Matrix& unlabeled,
                                int num_classes, const CmixupConfig& config,
                                std::uint64_t seed) {
  if (static_cast<Eigen::Index>(labels.size()) != labeled.rows()) {
    throw ShapeError("EncoderTrain: one label per labeled row required");
  }
  if (config.propagation.use_projection && !model.components.projection) {
    throw ConfigError("propagation on projection outputs needs the projection head");
  }
  const Matrix all = VStack(labeled, unlabeled);
  const Eigen::Index n = all.rows();
  const Eigen::Index n_labeled = labeled.rows();
  IndexList labeled_pos(static_cast<std::size_t>(n_labeled));
  for (Eigen::Index i = 0; i < n_labeled; ++i) labeled_pos[i] = i;
  LabelVector current(static_cast<std::size_t>(n), kNoLabel);
  std::copy(labels.begin(), labels.end(), current.begin());

  PropagationConfig prop = config.propagation;
  prop.k = std::max<int>(1, std::min<std::int64_t>(prop.k, n / 2));

  const bool use_decoder = model.components.decoder && config.w_recon != 0.0;
  const bool use_clf = model.components.classifier && config.w_clf != 0.0;
  const bool use_supcon = model.components.projection && config.w_supcon != 0.0;

  nn::Optimizer enc_opt(config.optimizer), dec_opt(config.optimizer),
      proj_opt(config.optimizer), clf_opt(config.optimizer);
  Rng batch_rng(DeriveSeed(seed, "cmixup-batches"));
  Rng mix_rng(DeriveSeed(seed, "cmixup-mixup"));
  EncoderTrainResult result;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch >= config.warmup_epochs) {
      const PropagationResult pr = PropagateLabels(
          PropagationLatents(model, all, prop.use_projection), labeled_pos, labels,
          num_classes, prop);
      for (Eigen::Index i = n_labeled; i < n; ++i) current[i] = pr.labels[i];
      ++result.propagation_rounds;
    }
    double total = 0.0;
    for (const IndexList& batch : nn::Minibatches(n, config.batch_size, batch_rng)) {
      const Matrix xb = GatherRows(all, batch);
      const nn::ForwardPass enc_pass = model.encoder.Forward(xb);
      const Matrix& z = enc_pass.output();
      Matrix grad_z = Matrix::Zero(z.rows(), z.cols());
      double loss = 0.0;

      nn::Gradients dec_grads;
      if (use_decoder) {
        const nn::ForwardPass pass = model.decoder.Forward(z);
        nn::LossValue mse = nn::MseLoss(pass.output(), xb);
        mse.grad *= config.w_recon;
        loss += config.w_recon * mse.value;
        dec_grads = model.decoder.Backward(z, pass, mse.grad, true);
        grad_z += dec_grads.input;
      }

      nn::Gradients clf_grads;
      bool clf_active = false;
      if (use_clf) {
        IndexList rows;
        LabelVector y;
        for (std::size_t r = 0; r < batch.size(); ++r) {
          if (batch[r] < n_labeled) {
            rows.push_back(static_cast<RowIndex>(r));
            y.push_back(labels[batch[r]]);
          }
        }
        if (!rows.empty()) {
          const Matrix zl = GatherRows(z, rows);
          const nn::ForwardPass pass = model.classifier.Forward(zl);
          nn::LossValue ce = nn::CrossEntropyLoss(pass.output(), y);
          ce.grad *= config.w_clf;
          loss += config.w_clf * ce.value;
          clf_grads = model.classifier.Backward(zl, pass, ce.grad, true);
          for (std::size_t r = 0; r < rows.size(); ++r) {
            grad_z.row(rows[r]) += clf_grads.input.row(static_cast<Eigen::Index>(r));
          }
          clf_active = true;
        }
      }

      nn::Gradients proj_grads;
      bool proj_active = false;
      if (use_supcon) {
        IndexList rows;
        LabelVector y;
        for (std::size_t r = 0; r < batch.size(); ++r) {
          if (current[batch[r]] != kNoLabel) {
            rows.push_back(static_cast<RowIndex>(r));
            y.push_back(current[batch[r]]);
          }
        }
        if (rows.size() >= 2) {
          const Matrix zs = GatherRows(z, rows);
          const MixupResult mix = LatentMixup(zs, y, config.mixup, mix_rng);
          const Matrix cat = VStack(zs, mix.mixed);
          LabelVector cat_labels = y;
          cat_labels.insert(cat_labels.end(), mix.labels.begin(), mix.labels.end());
          const nn::ForwardPass pass = model.projection.Forward(cat);
          const Matrix h = nn::L2Normalize(pass.output());
          nn::SupConValue sc = nn::SupConLoss(h, cat_labels, config.temperature);
          if (sc.anchors > 0) {
            sc.grad *= config.w_supcon;
            loss += config.w_supcon * sc.value;
            const Matrix grad_out = nn::L2NormalizeBackward(pass.output(), h, sc.grad);
            proj_grads = model.projection.Backward(cat, pass, grad_out, true);
            const Eigen::Index ns = zs.rows();
            for (Eigen::Index r = 0; r < ns; ++r) {
              grad_z.row(rows[r]) += proj_grads.input.row(r);
            }
            for (std::size_t m = 0; m < mix.anchors.size(); ++m) {
              const auto g = proj_grads.input.row(ns + static_cast<Eigen::Index>(m));
              const double l = mix.lambdas[m];
              grad_z.row(rows[mix.anchors[m]]) += l * g;
              grad_z.row(rows[mix.partners[m]]) += (1.0 - l) * g;
            }
            proj_active = true;
          }
        }
      }

      CheckFinite(loss, epoch);
      const nn::Gradients enc_grads = model.encoder.Backward(xb, enc_pass, grad_z);
      if (use_decoder) dec_opt.Step(model.decoder, dec_grads);
      if (clf_active) clf_opt.Step(model.classifier, clf_grads);
      if (proj_active) proj_opt.Step(model.projection, proj_grads);
      if (use_decoder || clf_active || proj_active) enc_opt.Step(model.encoder, enc_grads);
      total += loss * static_cast<double>(batch.size());
    }
    result.curve.epoch_loss.push_back(total / static_cast<double>(n));
  }
  result.propagation = PropagateLabels(PropagationLatents(model, all, prop.use_projection),
                                       labeled_pos, labels, num_classes, prop);
  result.model = std::move(model);
  return result;
}

}  // namespace pcpr::cmixup
