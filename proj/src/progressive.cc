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

#include "pcpr/progressive.h"

#include <chrono>
#include <cmath>
#include <map>
#include <set>

namespace pcpr::progressive {
namespace {

using nlohmann::json;

template <typename Enum, std::size_t N>
Enum ParseEnum(const std::string& name, const char* what,
               const std::pair<const char*, Enum> (&table)[N]) {
  for (const auto& [key, value] : table) {
    if (name == key) return value;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + name + "'");
}

constexpr std::pair<const char*, Pipeline> kPipelines[] = {
    {"supervised", Pipeline::kSupervised},
    {"vime", Pipeline::kVime},
    {"cmixup", Pipeline::kCmixup},
};

constexpr std::pair<const char*, RefinementMode> kModes[] = {
    {"none", RefinementMode::kNone},
    {"classifier_threshold", RefinementMode::kClassifierThreshold},
    {"propagation_threshold", RefinementMode::kPropagationThreshold},
    {"two_step_agreement", RefinementMode::kTwoStepAgreement},
};

// Reads known keys of one JSON object and rejects anything else.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <typename T>
  void Get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  const json* Child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void Finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json OptimizerToJson(const nn::OptimizerConfig& o) {
  return {{"kind", o.kind == nn::OptimizerKind::kAdam ? "adam" : "sgd"},
          {"learning_rate", o.learning_rate},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"epsilon", o.epsilon}};
}

void OptimizerFromJson(const json& j, const std::string& path, nn::OptimizerConfig& o) {
  ObjectReader r(j, path);
  std::string kind = o.kind == nn::OptimizerKind::kAdam ? "adam" : "sgd";
  r.Get("kind", kind);
  if (kind == "adam") {
    o.kind = nn::OptimizerKind::kAdam;
  } else if (kind == "sgd") {
    o.kind = nn::OptimizerKind::kSgd;
  } else {
    throw ConfigError(path + ".kind: unknown optimizer '" + kind + "'");
  }
  r.Get("learning_rate", o.learning_rate);
  r.Get("beta1", o.beta1);
  r.Get("beta2", o.beta2);
  r.Get("epsilon", o.epsilon);
  r.Finish();
}

json VimeToJson(const vime::VimeConfig& v) {
  return {{"latent_dim", v.latent_dim},
          {"mask_prob", v.mask_prob},
          {"alpha_mask", v.alpha_mask},
          {"beta", v.beta},
          {"num_views", v.num_views},
          {"pretext_epochs", v.pretext_epochs},
          {"semisup_epochs", v.semisup_epochs},
          {"batch_size", v.batch_size},
          {"predictor_hidden", v.predictor_hidden},
          {"pretext_enabled", v.pretext_enabled},
          {"finetune_encoder", v.finetune_encoder},
          {"resample_full_dataset", v.resample_full_dataset},
          {"optimizer", OptimizerToJson(v.optimizer)}};
}

void VimeFromJson(const json& j, const std::string& path, vime::VimeConfig& v) {
  ObjectReader r(j, path);
  r.Get("latent_dim", v.latent_dim);
  r.Get("mask_prob", v.mask_prob);
  r.Get("alpha_mask", v.alpha_mask);
  r.Get("beta", v.beta);
  r.Get("num_views", v.num_views);
  r.Get("pretext_epochs", v.pretext_epochs);
  r.Get("semisup_epochs", v.semisup_epochs);
  r.Get("batch_size", v.batch_size);
  r.Get("predictor_hidden", v.predictor_hidden);
  r.Get("pretext_enabled", v.pretext_enabled);
  r.Get("finetune_encoder", v.finetune_encoder);
  r.Get("resample_full_dataset", v.resample_full_dataset);
  if (const json* o = r.Child("optimizer")) OptimizerFromJson(*o, path + ".optimizer", v.optimizer);
  r.Finish();
}

json CmixupToJson(const cmixup::CmixupConfig& c) {
  json mixup = {{"beta_alpha", c.mixup.beta_alpha},
                {"pairs_per_anchor", c.mixup.pairs_per_anchor}};
  if (c.mixup.fixed_lambda) mixup["fixed_lambda"] = *c.mixup.fixed_lambda;
  return {{"components", c.components.ToString()},
          {"encoder_hidden", c.encoder_hidden},
          {"latent_dim", c.latent_dim},
          {"projection_dim", c.projection_dim},
          {"w_recon", c.w_recon},
          {"w_supcon", c.w_supcon},
          {"w_clf", c.w_clf},
          {"temperature", c.temperature},
          {"warmup_epochs", c.warmup_epochs},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"mixup", mixup},
          {"propagation",
           {{"k", c.propagation.k},
            {"alpha", c.propagation.alpha},
            {"gamma", c.propagation.gamma},
            {"tolerance", c.propagation.tolerance},
            {"max_iterations", c.propagation.max_iterations},
            {"use_projection", c.propagation.use_projection},
            {"rescale_weights", c.propagation.rescale_weights}}},
          {"optimizer", OptimizerToJson(c.optimizer)}};
}

void CmixupFromJson(const json& j, const std::string& path, cmixup::CmixupConfig& c) {
  ObjectReader r(j, path);
  std::string components = c.components.ToString();
  r.Get("components", components);
  c.components = cmixup::ComponentFlags::Parse(components);
  r.Get("encoder_hidden", c.encoder_hidden);
  r.Get("latent_dim", c.latent_dim);
  r.Get("projection_dim", c.projection_dim);
  r.Get("w_recon", c.w_recon);
  r.Get("w_supcon", c.w_supcon);
  r.Get("w_clf", c.w_clf);
  r.Get("temperature", c.temperature);
  r.Get("warmup_epochs", c.warmup_epochs);
  r.Get("epochs", c.epochs);
  r.Get("batch_size", c.batch_size);
  if (const json* m = r.Child("mixup")) {
    ObjectReader mr(*m, path + ".mixup");
    mr.Get("beta_alpha", c.mixup.beta_alpha);
    mr.Get("pairs_per_anchor", c.mixup.pairs_per_anchor);
    if (const json* l = mr.Child("fixed_lambda")) c.mixup.fixed_lambda = l->get<double>();
    mr.Finish();
  }
  if (const json* p = r.Child("propagation")) {
    ObjectReader pr(*p, path + ".propagation");
    pr.Get("k", c.propagation.k);
    pr.Get("alpha", c.propagation.alpha);
    pr.Get("gamma", c.propagation.gamma);
    pr.Get("tolerance", c.propagation.tolerance);
    pr.Get("max_iterations", c.propagation.max_iterations);
    pr.Get("use_projection", c.propagation.use_projection);
    pr.Get("rescale_weights", c.propagation.rescale_weights);
    pr.Finish();
  }
  if (const json* o = r.Child("optimizer")) OptimizerFromJson(*o, path + ".optimizer", c.optimizer);
  r.Finish();
}

bool HasPropagation(const RunConfig& c) { return c.pipeline == Pipeline::kCmixup; }

bool HasClassifier(const RunConfig& c) {
  return c.pipeline != Pipeline::kCmixup || c.cmixup.components.classifier;
}

void Fnv(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
}

void FnvCounts(std::uint64_t& h, const CprTable& t) {
  Fnv(h, static_cast<std::uint64_t>(t.num_classes()));
  for (std::size_t b = 0; b < t.num_blocks(); ++b) {
    Fnv(h, static_cast<std::uint64_t>(t.columns()[b]));
    for (std::int64_t v = 0; v < t.cardinality(b); ++v) {
      for (std::int64_t c : t.counts(b, static_cast<int>(v))) Fnv(h, static_cast<std::uint64_t>(c));
    }
  }
}

std::int64_t Observations(const EncodingTable& table) {
  if (const auto* cpr = std::get_if<CprTable>(&table)) return cpr->observations();
  if (const auto* te = std::get_if<TargetEncodingTable>(&table)) {
    return te->counts().observations();
  }
  return 0;
}

// Everything a single pass of a pipeline hands back to the run loop.
struct PassOutput {
  Matrix test_probs;
  std::optional<nn::Prediction> classifier;  // on unlabeled rows
  std::optional<LabelVector> propagation_labels;
  std::optional<std::vector<double>> propagation_weights;
  nn::TrainCurve pretext, encoder, predictor;
};

// Models carried across runs for warm starts.
struct ModelState {
  std::optional<vime::VimeModel> vime;
  std::optional<cmixup::CmixupModel> cmixup;
};

template <typename T>
void Adopt(const std::optional<T>& previous, T& fresh) {
  if (previous) fresh = *previous;
}

PassOutput TrainPass(const TabularDataset& ds, const DataSplit& split,
                     const EncodingTable& table, const RunConfig& config,
                     std::uint64_t seed, ModelState& state) {
  const int classes = ds.num_classes();
  const LabelVector y = GatherLabels(ds.labels(), split.labeled);
  PassOutput out;
  if (config.pipeline == Pipeline::kSupervised) {
    // Sparse path keeps one-hot at high cardinality tractable.
    if (KindOf(table) == EncodingKind::kOneHot) {
      const SparseMatrix xl = EncodeSparse(ds, split.labeled, table).values;
      const nn::Mlp model =
          nn::FitClassifier(xl, y, classes, config.supervised, seed, &out.predictor);
      out.test_probs = nn::PredictInChunks(model, EncodeSparse(ds, split.test, table).values);
      if (!split.unlabeled.empty()) {
        out.classifier = nn::ArgmaxConfidence(
            nn::PredictInChunks(model, EncodeSparse(ds, split.unlabeled, table).values));
      }
      return out;
    }
    const Matrix xl = Encode(ds, split.labeled, table).values;
    const nn::Mlp model =
        nn::FitClassifier(xl, y, classes, config.supervised, seed, &out.predictor);
    out.test_probs = nn::PredictInChunks(model, Encode(ds, split.test, table).values);
    if (!split.unlabeled.empty()) {
      out.classifier = nn::ArgmaxConfidence(
          nn::PredictInChunks(model, Encode(ds, split.unlabeled, table).values));
    }
    return out;
  }

  const Matrix xl = Encode(ds, split.labeled, table).values;
  const Matrix xu = Encode(ds, split.unlabeled, table).values;
  const Matrix xt = Encode(ds, split.test, table).values;
  const int d = static_cast<int>(xl.cols());

  if (config.pipeline == Pipeline::kVime) {
    vime::VimeModel model = vime::InitModel(d, classes, config.vime, seed);
    if (config.warm_start) Adopt(state.vime, model);
    if (model.has_encoder() && xu.rows() >= 2) {
      vime::TrainResult pre = vime::PretextTrain(std::move(model), xu, config.vime, seed);
      model = std::move(pre.model);
      out.pretext = std::move(pre.curve);
    }
    vime::TrainResult semi = vime::SemisupTrain(std::move(model), xl, y, xu, config.vime, seed);
    out.predictor = std::move(semi.curve);
    out.test_probs = vime::PredictProbs(semi.model, xt);
    if (xu.rows() > 0) out.classifier = vime::Predict(semi.model, xu);
    state.vime = std::move(semi.model);
    return out;
  }

  cmixup::CmixupModel model = cmixup::InitModel(d, classes, config.cmixup, seed);
  if (config.warm_start) Adopt(state.cmixup, model);
  cmixup::EncoderTrainResult enc =
      cmixup::EncoderTrain(std::move(model), xl, y, xu, classes, config.cmixup, seed);
  out.encoder = std::move(enc.curve);
  const std::size_t n_l = split.labeled.size();
  out.propagation_labels =
      LabelVector(enc.propagation.labels.begin() + static_cast<std::ptrdiff_t>(n_l),
                  enc.propagation.labels.end());
  out.propagation_weights =
      std::vector<double>(enc.propagation.weights.begin() + static_cast<std::ptrdiff_t>(n_l),
                          enc.propagation.weights.end());
  if (enc.model.components.classifier && xu.rows() > 0) {
    out.classifier = cmixup::Classify(enc.model, xu);
  }
  vime::VimeModel predictor =
      vime::WithEncoder(enc.model.encoder, classes, config.vime, seed);
  vime::TrainResult semi = vime::SemisupTrain(std::move(predictor), xl, y, xu, config.vime, seed);
  out.predictor = std::move(semi.curve);
  out.test_probs = vime::PredictProbs(semi.model, xt);
  state.cmixup = std::move(enc.model);
  return out;
}

PseudoLabelSet BuildPseudoLabels(const TabularDataset& ds, const DataSplit& split,
                                 const RunConfig& config, const PassOutput& pass) {
  PseudoLabelSet pls;
  pls.rows = split.unlabeled;
  const std::size_t n = pls.rows.size();
  if (config.oracle_pseudo_labels) {
    const LabelVector truth = GatherLabels(ds.labels(), pls.rows);
    pls.labels = truth;
    pls.classifier_labels = truth;
    pls.classifier_conf = std::vector<double>(n, 1.0);
    pls.propagation_labels = truth;
    pls.propagation_weight = std::vector<double>(n, 1.0);
    pls.kept.assign(n, 1);
    return pls;
  }
  if (pass.classifier) {
    pls.classifier_labels = pass.classifier->labels;
    pls.classifier_conf = pass.classifier->confidences;
  }
  pls.propagation_labels = pass.propagation_labels;
  pls.propagation_weight = pass.propagation_weights;
  const bool prefer_classifier =
      config.refinement == RefinementMode::kClassifierThreshold || !pls.propagation_labels;
  if (prefer_classifier && pls.classifier_labels) {
    pls.labels = *pls.classifier_labels;
  } else if (pls.propagation_labels) {
    pls.labels = *pls.propagation_labels;
  } else {
    pls.labels.assign(n, kNoLabel);
  }
  pls.kept.assign(n, 1);
  return pls;
}

double SecondsSince(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

const char* PipelineName(Pipeline p) {
  for (const auto& [name, value] : kPipelines) {
    if (value == p) return name;
  }
  return "?";
}

Pipeline ParsePipeline(const std::string& name) {
  return ParseEnum(name, "pipeline", kPipelines);
}

const char* RefinementModeName(RefinementMode m) {
  for (const auto& [name, value] : kModes) {
    if (value == m) return name;
  }
  return "?";
}

RefinementMode ParseRefinementMode(const std::string& name) {
  return ParseEnum(name, "refinement mode", kModes);
}

RunConfig DefaultRunConfig(Pipeline pipeline) {
  RunConfig c;
  c.pipeline = pipeline;
  c.name = PipelineName(pipeline);
  switch (pipeline) {
    case Pipeline::kSupervised:
      c.n_runs = 1;
      c.update_enabled = false;
      break;
    case Pipeline::kVime:
      c.n_runs = 5;
      c.refinement = RefinementMode::kClassifierThreshold;
      break;
    case Pipeline::kCmixup:
      c.n_runs = 4;
      c.refinement = RefinementMode::kTwoStepAgreement;
      break;
  }
  return c;
}

std::vector<std::string> ValidateRunConfig(const RunConfig& c) {
  std::vector<std::string> errors;
  auto fail = [&](const std::string& msg) {
    errors.push_back((c.name.empty() ? std::string(PipelineName(c.pipeline)) : c.name) +
                     ": " + msg);
  };
  if (c.n_runs < 1) fail("n_runs must be at least 1");
  if (!(c.classifier_threshold >= 0.0 && c.classifier_threshold <= 1.0)) {
    fail("classifier_threshold must lie in [0, 1]");
  }
  if (!(c.propagation_threshold >= 0.0 && c.propagation_threshold <= 1.0)) {
    fail("propagation_threshold must lie in [0, 1]");
  }
  if (c.refinement != RefinementMode::kNone) {
    if (c.refinement == RefinementMode::kTwoStepAgreement &&
        !(HasClassifier(c) && HasPropagation(c))) {
      fail("two_step_agreement needs both a classifier and label propagation");
    }
    if (c.refinement == RefinementMode::kPropagationThreshold && !HasPropagation(c)) {
      fail("propagation_threshold needs label propagation (cmixup pipeline)");
    }
    if (c.refinement == RefinementMode::kClassifierThreshold && !HasClassifier(c)) {
      fail("classifier_threshold needs the classifier component");
    }
  }
  if (c.update_enabled &&
      (c.encoding == EncodingKind::kOneHot || c.encoding == EncodingKind::kLabel)) {
    fail(std::string("update needs a label-dependent encoding, not ") +
         EncodingKindName(c.encoding));
  }
  if (c.encoding_params.cpr_alpha < 0.0) fail("cpr_alpha must be non-negative");
  if (c.encoding_params.te_smoothing < 0.0) fail("te_smoothing must be non-negative");
  auto check_opt = [&](const nn::OptimizerConfig& o, const char* where) {
    if (!(o.learning_rate >= 0.0)) fail(std::string(where) + ": learning_rate must be >= 0");
  };
  if (c.pipeline == Pipeline::kSupervised) {
    if (c.warm_start) fail("warm_start is not supported for the supervised pipeline");
    if (c.supervised.epochs < 0 || c.supervised.batch_size < 1) {
      fail("supervised: epochs >= 0 and batch_size >= 1 required");
    }
    check_opt(c.supervised.optimizer, "supervised");
  }
  if (c.pipeline != Pipeline::kSupervised) {
    const vime::VimeConfig& v = c.vime;
    if (!(v.mask_prob >= 0.0 && v.mask_prob <= 1.0)) fail("vime: mask_prob must lie in [0, 1]");
    if (v.num_views < 1) fail("vime: num_views must be at least 1");
    if (v.batch_size < 1 || v.latent_dim < 1) fail("vime: batch_size and latent_dim must be >= 1");
    if (v.pretext_epochs < 0 || v.semisup_epochs < 0) fail("vime: epochs must be >= 0");
    if (v.beta < 0.0 || v.alpha_mask < 0.0) fail("vime: loss weights must be >= 0");
    check_opt(v.optimizer, "vime");
  }
  if (c.pipeline == Pipeline::kCmixup) {
    const cmixup::CmixupConfig& m = c.cmixup;
    if (!m.components.any()) fail("cmixup: at least one component must be enabled");
    if (m.components.decoder && m.w_recon <= 0.0) fail("cmixup: decoder enabled with w_recon <= 0");
    if (m.components.projection && m.w_supcon <= 0.0) {
      fail("cmixup: projection enabled with w_supcon <= 0");
    }
    if (m.components.classifier && m.w_clf <= 0.0) fail("cmixup: classifier enabled with w_clf <= 0");
    if (m.propagation.k < 1) fail("cmixup: propagation k must be >= 1");
    if (!(m.propagation.alpha >= 0.0 && m.propagation.alpha < 1.0)) {
      fail("cmixup: propagation alpha must lie in [0, 1)");
    }
    if (m.propagation.use_projection && !m.components.projection) {
      fail("cmixup: propagation on projection outputs needs the projection component");
    }
    if (!(m.mixup.beta_alpha > 0.0)) fail("cmixup: mixup beta_alpha must be > 0");
    if (m.temperature <= 0.0) fail("cmixup: temperature must be > 0");
    if (m.batch_size < 1 || m.latent_dim < 1) fail("cmixup: batch_size and latent_dim must be >= 1");
    check_opt(m.optimizer, "cmixup");
  }
  return errors;
}

std::int64_t PseudoLabelSet::num_kept() const {
  std::int64_t n = 0;
  for (char k : kept) n += k != 0;
  return n;
}

IndexList PseudoLabelSet::kept_rows() const {
  IndexList out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (kept[i]) out.push_back(rows[i]);
  }
  return out;
}

LabelVector PseudoLabelSet::kept_labels() const {
  LabelVector out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (kept[i]) out.push_back(labels[i]);
  }
  return out;
}

PseudoLabelSet RefinePseudoLabels(const PseudoLabelSet& pls, RefinementMode mode,
                                  double tau_c, double tau_p) {
  const std::size_t n = pls.rows.size();
  if (pls.labels.size() != n) throw ShapeError("pseudo-label set: one label per row required");
  auto need = [&](bool present, const char* field) {
    if (!present) {
      throw Error(std::string(RefinementModeName(mode)) + " refinement needs " + field);
    }
  };
  PseudoLabelSet out = pls;
  out.kept.assign(n, 1);
  switch (mode) {
    case RefinementMode::kNone:
      break;
    case RefinementMode::kClassifierThreshold:
      need(pls.classifier_conf && pls.classifier_conf->size() == n, "classifier confidences");
      for (std::size_t i = 0; i < n; ++i) out.kept[i] = (*pls.classifier_conf)[i] >= tau_c;
      break;
    case RefinementMode::kPropagationThreshold:
      need(pls.propagation_weight && pls.propagation_weight->size() == n,
           "propagation weights");
      for (std::size_t i = 0; i < n; ++i) out.kept[i] = (*pls.propagation_weight)[i] >= tau_p;
      break;
    case RefinementMode::kTwoStepAgreement:
      need(pls.propagation_weight && pls.propagation_weight->size() == n,
           "propagation weights");
      need(pls.classifier_labels && pls.classifier_labels->size() == n, "classifier labels");
      need(pls.propagation_labels && pls.propagation_labels->size() == n,
           "propagation labels");
      for (std::size_t i = 0; i < n; ++i) {
        out.kept[i] = (*pls.classifier_labels)[i] == (*pls.propagation_labels)[i] &&
                      (*pls.propagation_weight)[i] >= tau_p;
      }
      break;
  }
  return out;
}

CprTable UpdateRepresentation(const CprTable& base, const TabularDataset& ds,
                              const PseudoLabelSet& kept) {
  return UpdateCounts(base, ds, kept.kept_rows(), kept.kept_labels());
}

EncodingTable UpdateRepresentation(const EncodingTable& base, const TabularDataset& ds,
                                   const PseudoLabelSet& kept, const EncodingParams& params) {
  if (const auto* cpr = std::get_if<CprTable>(&base)) {
    return UpdateRepresentation(*cpr, ds, kept);
  }
  if (const auto* te = std::get_if<TargetEncodingTable>(&base)) {
    return TargetEncodingTable(UpdateRepresentation(te->counts(), ds, kept), params.te_smoothing,
                               params.te_scalar);
  }
  return base;
}

double Precision(const PseudoLabelSet& pls, const TabularDataset& ds, bool kept_only) {
  std::int64_t total = 0, correct = 0;
  for (std::size_t i = 0; i < pls.rows.size(); ++i) {
    if (kept_only && !pls.kept[i]) continue;
    ++total;
    correct += pls.labels[i] == ds.label(pls.rows[i]);
  }
  return total > 0 ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

std::uint64_t TableFingerprint(const EncodingTable& table) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  Fnv(h, static_cast<std::uint64_t>(KindOf(table)));
  if (const auto* cpr = std::get_if<CprTable>(&table)) {
    FnvCounts(h, *cpr);
  } else if (const auto* te = std::get_if<TargetEncodingTable>(&table)) {
    FnvCounts(h, te->counts());
  } else if (const auto* oh = std::get_if<OneHotEncoding>(&table)) {
    for (auto k : oh->cardinalities) Fnv(h, static_cast<std::uint64_t>(k));
  } else if (const auto* le = std::get_if<LabelEncoding>(&table)) {
    for (int c : le->columns) Fnv(h, static_cast<std::uint64_t>(c));
  }
  return h;
}

json RunConfigToJson(const RunConfig& c) {
  return {{"name", c.name},
          {"pipeline", PipelineName(c.pipeline)},
          {"n_runs", c.n_runs},
          {"update_enabled", c.update_enabled},
          {"accumulate", c.accumulate},
          {"warm_start", c.warm_start},
          {"refinement", RefinementModeName(c.refinement)},
          {"classifier_threshold", c.classifier_threshold},
          {"propagation_threshold", c.propagation_threshold},
          {"oracle_pseudo_labels", c.oracle_pseudo_labels},
          {"encoding", EncodingKindName(c.encoding)},
          {"encoding_params",
           {{"cpr_alpha", c.encoding_params.cpr_alpha},
            {"te_smoothing", c.encoding_params.te_smoothing},
            {"te_scalar", c.encoding_params.te_scalar}}},
          {"supervised",
           {{"hidden", c.supervised.hidden},
            {"epochs", c.supervised.epochs},
            {"batch_size", c.supervised.batch_size},
            {"optimizer", OptimizerToJson(c.supervised.optimizer)}}},
          {"vime", VimeToJson(c.vime)},
          {"cmixup", CmixupToJson(c.cmixup)},
          {"seed", c.seed}};
}

RunConfig RunConfigFromJson(const json& j) {
  if (!j.is_object()) throw ConfigError("method: expected an object");
  std::string pipeline = "vime";
  if (j.contains("pipeline")) {
    if (!j.at("pipeline").is_string()) throw ConfigError("method.pipeline: expected a string");
    pipeline = j.at("pipeline").get<std::string>();
  }
  RunConfig c = DefaultRunConfig(ParsePipeline(pipeline));
  const std::string path = "method";
  ObjectReader r(j, path);
  r.Get("pipeline", pipeline);
  r.Get("name", c.name);
  r.Get("n_runs", c.n_runs);
  r.Get("update_enabled", c.update_enabled);
  r.Get("accumulate", c.accumulate);
  r.Get("warm_start", c.warm_start);
  std::string mode = RefinementModeName(c.refinement);
  r.Get("refinement", mode);
  c.refinement = ParseRefinementMode(mode);
  r.Get("classifier_threshold", c.classifier_threshold);
  r.Get("propagation_threshold", c.propagation_threshold);
  r.Get("oracle_pseudo_labels", c.oracle_pseudo_labels);
  std::string encoding = EncodingKindName(c.encoding);
  r.Get("encoding", encoding);
  c.encoding = ParseEncodingKind(encoding);
  if (const json* e = r.Child("encoding_params")) {
    ObjectReader er(*e, path + ".encoding_params");
    er.Get("cpr_alpha", c.encoding_params.cpr_alpha);
    er.Get("te_smoothing", c.encoding_params.te_smoothing);
    er.Get("te_scalar", c.encoding_params.te_scalar);
    er.Finish();
  }
  if (const json* s = r.Child("supervised")) {
    ObjectReader sr(*s, path + ".supervised");
    sr.Get("hidden", c.supervised.hidden);
    sr.Get("epochs", c.supervised.epochs);
    sr.Get("batch_size", c.supervised.batch_size);
    if (const json* o = sr.Child("optimizer")) {
      OptimizerFromJson(*o, path + ".supervised.optimizer", c.supervised.optimizer);
    }
    sr.Finish();
  }
  if (const json* v = r.Child("vime")) VimeFromJson(*v, path + ".vime", c.vime);
  if (const json* m = r.Child("cmixup")) CmixupFromJson(*m, path + ".cmixup", c.cmixup);
  r.Get("seed", c.seed);
  r.Finish();
  return c;
}

json ReportToJson(const ExperimentReport& report) {
  json runs = json::array();
  for (const RunMetrics& m : report.runs) {
    runs.push_back({{"run", m.run},
                    {"test_accuracy", m.test_accuracy},
                    {"pseudo_labels", m.pseudo_labels},
                    {"kept", m.kept},
                    {"kept_fraction", m.kept_fraction},
                    {"pseudo_label_precision", m.pseudo_label_precision},
                    {"kept_precision", m.kept_precision},
                    {"table_observations", m.table_observations},
                    {"table_fingerprint", m.table_fingerprint},
                    {"pretext_loss", m.pretext_loss},
                    {"encoder_loss", m.encoder_loss},
                    {"predictor_loss", m.predictor_loss},
                    {"seconds", m.seconds}});
  }
  return {{"format", "pcpr.report"},
          {"method", report.method},
          {"seed", report.seed},
          {"config", report.config},
          {"runs", runs},
          {"final_test_accuracy", report.final_test_accuracy},
          {"test_predictions", report.test_predictions},
          {"wall_clock_seconds", report.wall_clock_seconds},
          {"version", report.version}};
}

ExperimentReport ReportFromJson(const json& j) {
  try {
    if (j.value("format", "") != "pcpr.report") throw ConfigError("not a pcpr report");
    ExperimentReport r;
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = j.at("config");
    for (const json& m : j.at("runs")) {
      RunMetrics x;
      x.run = m.at("run").get<int>();
      x.test_accuracy = m.at("test_accuracy").get<double>();
      x.pseudo_labels = m.at("pseudo_labels").get<std::int64_t>();
      x.kept = m.at("kept").get<std::int64_t>();
      x.kept_fraction = m.at("kept_fraction").get<double>();
      x.pseudo_label_precision = m.at("pseudo_label_precision").get<double>();
      x.kept_precision = m.at("kept_precision").get<double>();
      x.table_observations = m.at("table_observations").get<std::int64_t>();
      x.table_fingerprint = m.at("table_fingerprint").get<std::uint64_t>();
      x.pretext_loss = m.at("pretext_loss").get<std::vector<double>>();
      x.encoder_loss = m.at("encoder_loss").get<std::vector<double>>();
      x.predictor_loss = m.at("predictor_loss").get<std::vector<double>>();
      x.seconds = m.at("seconds").get<double>();
      r.runs.push_back(std::move(x));
    }
    r.final_test_accuracy = j.at("final_test_accuracy").get<double>();
    r.test_predictions = j.at("test_predictions").get<LabelVector>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    r.version = j.at("version").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
}

ExperimentReport RunProgressive(const TabularDataset& raw, const DataSplit& split,
                                const RunConfig& config) {
  const auto problems = ValidateRunConfig(config);
  if (!problems.empty()) throw ConfigError(problems.front());
  if (!raw.has_labels()) throw Error("RunProgressive: dataset has no labels");
  if (split.labeled.empty() || split.test.empty()) {
    throw Error("RunProgressive: need labeled and test rows");
  }
  const auto start = std::chrono::steady_clock::now();
  const TabularDataset ds = ApplyScaler(raw, FitScaler(raw, split.train()));
  const LabelVector y = GatherLabels(ds.labels(), split.labeled);
  const LabelVector test_y = GatherLabels(ds.labels(), split.test);

  const EncodingTable labeled_table =
      FitEncoding(config.encoding, ds, split.labeled, y, config.encoding_params);
  EncodingTable table = labeled_table;

  ExperimentReport report;
  report.method = config.name.empty() ? PipelineName(config.pipeline) : config.name;
  report.seed = config.seed;
  report.config = RunConfigToJson(config);
  report.version = kVersion;
  ModelState state;

  for (int run = 0; run < config.n_runs; ++run) {
    const auto run_start = std::chrono::steady_clock::now();
    const std::uint64_t seed = DeriveSeed(config.seed, static_cast<std::uint64_t>(run));
    PassOutput pass;
    try {
      pass = TrainPass(ds, split, table, config, seed, state);
    } catch (const NumericError& e) {
      throw NumericError("run " + std::to_string(run) + ": " + e.what());
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw Error("run " + std::to_string(run) + ": " + e.what());
    }
    const nn::Prediction test_pred = nn::ArgmaxConfidence(pass.test_probs);
    RunMetrics m;
    m.run = run;
    m.test_accuracy = nn::Accuracy(test_pred.labels, test_y);
    m.table_observations = Observations(table);
    m.table_fingerprint = TableFingerprint(table);
    m.pretext_loss = pass.pretext.epoch_loss;
    m.encoder_loss = pass.encoder.epoch_loss;
    m.predictor_loss = pass.predictor.epoch_loss;
    report.test_predictions = test_pred.labels;

    if (config.update_enabled && !split.unlabeled.empty()) {
      const PseudoLabelSet refined =
          RefinePseudoLabels(BuildPseudoLabels(ds, split, config, pass),
                             config.oracle_pseudo_labels ? RefinementMode::kNone
                                                         : config.refinement,
                             config.classifier_threshold, config.propagation_threshold);
      m.pseudo_labels = static_cast<std::int64_t>(refined.rows.size());
      m.kept = refined.num_kept();
      m.kept_fraction = static_cast<double>(m.kept) / static_cast<double>(m.pseudo_labels);
      m.pseudo_label_precision = Precision(refined, ds, false);
      m.kept_precision = Precision(refined, ds, true);
      if (run + 1 < config.n_runs) {
        table = UpdateRepresentation(config.accumulate ? table : labeled_table, ds, refined,
                                     config.encoding_params);
      }
    }
    m.seconds = SecondsSince(run_start);
    report.runs.push_back(std::move(m));
  }
  report.final_test_accuracy = report.runs.back().test_accuracy;
  report.wall_clock_seconds = SecondsSince(start);
  return report;
}

ExperimentReport RunBaseline(const TabularDataset& ds, const DataSplit& split,
                             const RunConfig& config) {
  RunConfig single = config;
  single.n_runs = 1;
  single.update_enabled = false;
  single.refinement = RefinementMode::kNone;
  return RunProgressive(ds, split, single);
}

MethodSummary Summarize(const std::string& method, const std::vector<double>& values) {
  if (values.empty()) throw Error("Summarize: no values for " + method);
  MethodSummary s;
  s.method = method;
  s.values = values;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(values.size()));
  return s;
}

std::vector<MethodSummary> CompareRuns(const std::vector<ExperimentReport>& reports) {
  if (reports.empty()) throw Error("CompareRuns: no reports");
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> values;
  for (const ExperimentReport& r : reports) {
    if (!values.count(r.method)) order.push_back(r.method);
    values[r.method].push_back(r.final_test_accuracy);
  }
  std::vector<MethodSummary> out;
  for (const std::string& m : order) out.push_back(Summarize(m, values[m]));
  return out;
}

}  // namespace pcpr::progressive
