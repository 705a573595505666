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

#ifndef PCPR_PROGRESSIVE_H_
#define PCPR_PROGRESSIVE_H_

// Multi-run training where the categorical representation is regenerated
// between runs from the labeled rows plus refined pseudo-labels.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcpr/cmixup.h"
#include "pcpr/data.h"
#include "pcpr/encoding.h"
#include "pcpr/nn.h"
#include "pcpr/vime.h"

namespace pcpr::progressive {

enum class Pipeline { kSupervised, kVime, kCmixup };
const char* PipelineName(Pipeline p);
Pipeline ParsePipeline(const std::string& name);

enum class RefinementMode {
  kNone,
  kClassifierThreshold,
  kPropagationThreshold,
  kTwoStepAgreement,
};
const char* RefinementModeName(RefinementMode m);
RefinementMode ParseRefinementMode(const std::string& name);

inline constexpr std::uint64_t kDefaultSeeds[] = {123, 127, 131, 137};

struct RunConfig {
  std::string name;
  Pipeline pipeline = Pipeline::kVime;
  int n_runs = 5;
  bool update_enabled = true;
  // Add each run's kept pseudo-labels on top of the previous table instead of
  // rebuilding from the labeled rows.
  bool accumulate = false;
  // Start each run from the previous run's weights (same shapes only).
  bool warm_start = false;
  RefinementMode refinement = RefinementMode::kClassifierThreshold;
  double classifier_threshold = 0.8;
  double propagation_threshold = 0.9;
  // Evaluation only: hidden ground truth replaces model pseudo-labels.
  bool oracle_pseudo_labels = false;
  EncodingKind encoding = EncodingKind::kCpr;
  EncodingParams encoding_params;
  nn::ClassifierConfig supervised;
  vime::VimeConfig vime;
  cmixup::CmixupConfig cmixup;
  std::uint64_t seed = 0;
};

// Defaults per pipeline: 5 runs with classifier thresholding for vime, 4 runs
// with two-step agreement for cmixup, 1 run for supervised.
RunConfig DefaultRunConfig(Pipeline pipeline);

// Empty when valid; otherwise one message per violated invariant.
std::vector<std::string> ValidateRunConfig(const RunConfig& config);

struct PseudoLabelSet {
  IndexList rows;  // dataset row ids, all unlabeled
  LabelVector labels;
  std::optional<LabelVector> classifier_labels;
  std::optional<std::vector<double>> classifier_conf;
  std::optional<LabelVector> propagation_labels;
  std::optional<std::vector<double>> propagation_weight;
  std::vector<char> kept;

  std::int64_t num_kept() const;
  IndexList kept_rows() const;
  LabelVector kept_labels() const;
};

// Pure. none keeps everything; classifier_threshold keeps conf >= tau_c;
// propagation_threshold keeps weight >= tau_p; two_step keeps rows where the
// classifier and propagation labels agree and weight >= tau_p.
PseudoLabelSet RefinePseudoLabels(const PseudoLabelSet& pls, RefinementMode mode,
                                  double tau_c, double tau_p);

// base (fit on the labeled rows) plus the kept pseudo-labels.
CprTable UpdateRepresentation(const CprTable& base, const TabularDataset& ds,
                              const PseudoLabelSet& kept);
EncodingTable UpdateRepresentation(const EncodingTable& base, const TabularDataset& ds,
                                   const PseudoLabelSet& kept, const EncodingParams& params);

// Fraction of labels equal to truth; optionally only over kept rows.
double Precision(const PseudoLabelSet& pls, const TabularDataset& ds, bool kept_only);

struct RunMetrics {
  int run = 0;
  double test_accuracy = 0.0;
  std::int64_t pseudo_labels = 0;
  std::int64_t kept = 0;
  double kept_fraction = 0.0;
  double pseudo_label_precision = 0.0;  // before refinement
  double kept_precision = 0.0;          // after refinement
  std::int64_t table_observations = 0;
  std::uint64_t table_fingerprint = 0;
  std::vector<double> pretext_loss;
  std::vector<double> encoder_loss;
  std::vector<double> predictor_loss;
  double seconds = 0.0;
};

struct ExperimentReport {
  std::string method;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::vector<RunMetrics> runs;
  double final_test_accuracy = 0.0;
  LabelVector test_predictions;
  double wall_clock_seconds = 0.0;
  std::string version;
};

nlohmann::json ReportToJson(const ExperimentReport& report);
ExperimentReport ReportFromJson(const nlohmann::json& j);

nlohmann::json RunConfigToJson(const RunConfig& config);
// Missing keys keep the pipeline's defaults; unknown keys are errors.
RunConfig RunConfigFromJson(const nlohmann::json& j);

// Stable hash of an encoding table's parameters.
std::uint64_t TableFingerprint(const EncodingTable& table);

ExperimentReport RunProgressive(const TabularDataset& ds, const DataSplit& split,
                                const RunConfig& config);

// One pass of the pipeline on a fixed table, no update loop.
ExperimentReport RunBaseline(const TabularDataset& ds, const DataSplit& split,
                             const RunConfig& config);

struct MethodSummary {
  std::string method;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::vector<double> values;
};

// Grouped by method in first-appearance order.
std::vector<MethodSummary> CompareRuns(const std::vector<ExperimentReport>& reports);
MethodSummary Summarize(const std::string& method, const std::vector<double>& values);

}  // namespace pcpr::progressive

#endif  // PCPR_PROGRESSIVE_H_
