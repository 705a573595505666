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

#ifndef PCPR_EXPERIMENT_H_
#define PCPR_EXPERIMENT_H_

// Experiment runner: JSON configs, dataset preparation, the (method, seed)
// matrix, results tables and labeled-ratio sweeps.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcpr/data.h"
#include "pcpr/progressive.h"

namespace pcpr::experiment {

enum class Protocol {
  kSemiSupervised,  // labeled subset of train, the rest unlabeled
  kFullSupervision, // every train row labeled
};

struct DatasetSource {
  std::optional<SyntheticSpec> synthetic;
  std::optional<std::string> csv_path;
  CsvOptions csv;
};

struct AblationSpec {
  progressive::RunConfig base;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetSource dataset;
  SplitSpec split;  // split.seed is replaced by each experiment seed
  Protocol protocol = Protocol::kSemiSupervised;
  std::vector<progressive::RunConfig> methods;
  std::optional<AblationSpec> ablation;
  std::vector<std::uint64_t> seeds;
  std::vector<double> ratios;  // sweep-ratio only
  std::string output_dir;
  int jobs = 1;
};

// Relative paths (csv) resolve against `base_dir` when non-empty.
ExperimentConfig ParseExperimentConfig(const nlohmann::json& j,
                                       const std::string& base_dir = "");
ExperimentConfig LoadExperimentConfig(const std::string& path);
nlohmann::json ExperimentConfigToJson(const ExperimentConfig& config);

// Structured diagnostics; empty when the config can run.
std::vector<std::string> Validate(const ExperimentConfig& config);

// Methods plus the expanded ablation grid.
std::vector<progressive::RunConfig> ExpandMethods(const ExperimentConfig& config);

// 6 component sets x {without update, with update, with refinement}.
std::vector<progressive::RunConfig> ExpandAblation(const progressive::RunConfig& base);
inline constexpr const char* kAblationSeparator = " | ";

TabularDataset LoadDataset(const DatasetSource& source);
DataSplit SplitFor(const TabularDataset& ds, const ExperimentConfig& config,
                   std::uint64_t seed);

struct Cell {
  std::vector<double> values;  // per seed, in seed order
  double mean = 0.0;
  double std = 0.0;
  std::string text;  // "mean ± std" in percent
};

struct ResultsTable {
  std::vector<std::string> rows;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> cells;  // [row][column]

  std::string ToMarkdown() const;
  std::string ToCsv() const;
};

Cell MakeCell(const std::vector<double>& values);

// Rows are methods; ablation names "components | variant" pivot into a grid.
ResultsTable BuildTable(const std::vector<progressive::ExperimentReport>& reports);

struct Failure {
  std::string method;
  std::uint64_t seed = 0;
  std::string message;
};

struct ExperimentResult {
  ResultsTable table;
  std::vector<progressive::ExperimentReport> reports;  // method-major, seed order
  std::vector<Failure> failures;
  std::vector<std::string> warnings;
};

// Runs every (method, seed) pair on `jobs` worker threads. Failures are
// collected, not thrown.
ExperimentResult RunExperiment(const ExperimentConfig& config);

// Writes reports/<method>_seed<seed>.json, results.md, results.csv and the
// echoed config under `dir`.
void WriteExperiment(const ExperimentConfig& config, const ExperimentResult& result,
                     const std::string& dir);
std::vector<progressive::ExperimentReport> LoadReports(const std::string& dir);

struct SweepRow {
  std::string method;
  double ratio = 0.0;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  int n_seeds = 0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> warnings;
  std::vector<Failure> failures;

  std::string ToCsv() const;  // method,ratio,mean_acc,std_acc,n_seeds
  std::string ToMarkdown() const;
};

SweepResult EmitRatioSweep(const ExperimentConfig& config, const std::vector<double>& ratios);

}  // namespace pcpr::experiment

#endif  // PCPR_EXPERIMENT_H_
