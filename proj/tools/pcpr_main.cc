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

// Command-line front end: run, sweep-ratio, validate, synth, gradcheck.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pcpr/data.h"
#include "pcpr/experiment.h"
#include "pcpr/nn.h"

namespace {

namespace fs = std::filesystem;
using pcpr::experiment::ExperimentConfig;

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;
constexpr const char* kOutDirEnv = "PCPR_OUT_DIR";

template <typename T>
std::vector<T> ParseList(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    std::stringstream parse(item);
    T value;
    if (!(parse >> value) || !parse.eof()) {
      throw pcpr::ConfigError(std::string("bad ") + what + " '" + item + "'");
    }
    out.push_back(value);
  }
  return out;
}

std::string ResolveOutDir(const std::string& flag, const ExperimentConfig& config) {
  if (!flag.empty()) return flag;
  if (!config.output_dir.empty()) return config.output_dir;
  if (const char* env = std::getenv(kOutDirEnv); env && *env) {
    return (fs::path(env) / config.name).string();
  }
  return (fs::path("pcpr_out") / config.name).string();
}

ExperimentConfig LoadWithOverrides(const std::string& path, const std::string& seeds, int jobs) {
  ExperimentConfig config = pcpr::experiment::LoadExperimentConfig(path);
  if (!seeds.empty()) config.seeds = ParseList<std::uint64_t>(seeds, "seed");
  if (jobs > 0) config.jobs = jobs;
  return config;
}

int ReportProblems(const std::vector<std::string>& problems) {
  for (const std::string& p : problems) std::cerr << "error: " << p << "\n";
  return problems.empty() ? kOk : kConfigError;
}

int Run(const std::string& config_path, const std::string& out, const std::string& seeds,
        int jobs) {
  const ExperimentConfig config = LoadWithOverrides(config_path, seeds, jobs);
  if (int rc = ReportProblems(pcpr::experiment::Validate(config)); rc != kOk) return rc;
  const std::string dir = ResolveOutDir(out, config);
  const auto result = pcpr::experiment::RunExperiment(config);
  pcpr::experiment::WriteExperiment(config, result, dir);
  std::cout << result.table.ToMarkdown();
  for (const std::string& w : result.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& f : result.failures) {
    std::cerr << "failed: " << f.method << " seed " << f.seed << ": " << f.message << "\n";
  }
  std::cerr << "wrote " << dir << "\n";
  return result.failures.empty() ? kOk : kRuntimeError;
}

int SweepRatio(const std::string& config_path, const std::string& out, const std::string& seeds,
               int jobs, const std::string& ratios_text) {
  ExperimentConfig config = LoadWithOverrides(config_path, seeds, jobs);
  std::vector<double> ratios = ratios_text.empty() ? config.ratios
                                                   : ParseList<double>(ratios_text, "ratio");
  if (ratios.empty()) ratios = {0.1, 0.3, 0.5, 0.7, 0.9};
  config.ratios = ratios;
  if (int rc = ReportProblems(pcpr::experiment::Validate(config)); rc != kOk) return rc;
  const std::string dir = ResolveOutDir(out, config);
  const auto sweep = pcpr::experiment::EmitRatioSweep(config, ratios);
  fs::create_directories(dir);
  std::ofstream(fs::path(dir) / "sweep.csv") << sweep.ToCsv();
  std::ofstream(fs::path(dir) / "sweep.md") << sweep.ToMarkdown();
  std::cout << sweep.ToMarkdown();
  std::cerr << "wrote " << dir << "\n";
  return sweep.failures.empty() ? kOk : kRuntimeError;
}

int Validate(const std::string& config_path) {
  const ExperimentConfig config = pcpr::experiment::LoadExperimentConfig(config_path);
  const auto problems = pcpr::experiment::Validate(config);
  if (problems.empty()) {
    std::cout << "ok: " << pcpr::experiment::ExpandMethods(config).size() << " methods x "
              << config.seeds.size() << " seeds\n";
  }
  return ReportProblems(problems);
}

int Synth(const std::string& preset, std::uint64_t seed, std::int64_t rows, int cardinality,
          const std::string& out) {
  pcpr::SyntheticSpec spec = pcpr::SyntheticPreset(preset, seed);
  if (rows > 0) spec.n_rows = rows;
  if (cardinality > 0) spec.cardinality = cardinality;
  const pcpr::TabularDataset ds = pcpr::SynthesizeDataset(spec);
  pcpr::WriteCsv(ds, out);
  std::cerr << "wrote " << ds.num_rows() << " rows to " << out << "\n";
  return kOk;
}

int GradCheck(std::uint64_t seed) {
  bool ok = true;
  std::printf("%-14s %10s %14s %14s %8s\n", "loss", "params", "max_rel_err", "tolerance", "status");
  for (const auto& c : pcpr::nn::GradCheckSuite(seed)) {
    std::printf("%-14s %10lld %14.3e %14.0e %8s\n", c.name.c_str(),
                static_cast<long long>(c.report.parameters_checked), c.report.max_rel_err,
                c.tolerance, c.passed() ? "ok" : "FAIL");
    ok = ok && c.passed();
  }
  return ok ? kOk : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pcpr: conditional-probability representations and progressive training"};
  app.set_version_flag("--version", std::string(pcpr::kVersion));
  app.require_subcommand(1);

  std::string config, out, seeds, ratios, preset = "small", synth_out;
  int jobs = 0, cardinality = 0;
  std::uint64_t seed = 0;
  std::int64_t rows = 0;

  CLI::App* run = app.add_subcommand("run", "Run every (method, seed) pair of a config");
  run->add_option("--config", config, "Experiment config (JSON)")->required();
  run->add_option("--out", out, std::string("Output directory (default: config, then $") +
                                    kOutDirEnv + ")");
  run->add_option("--seeds", seeds, "Comma-separated seeds overriding the config");
  run->add_option("--jobs", jobs, "Worker threads");

  CLI::App* sweep = app.add_subcommand("sweep-ratio", "Sweep the labeled ratio");
  sweep->add_option("--config", config, "Experiment config (JSON)")->required();
  sweep->add_option("--out", out, "Output directory");
  sweep->add_option("--seeds", seeds, "Comma-separated seeds overriding the config");
  sweep->add_option("--jobs", jobs, "Worker threads");
  sweep->add_option("--ratios", ratios, "Comma-separated ratios in (0, 1)");

  CLI::App* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("--config", config, "Experiment config (JSON)")->required();

  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic dataset as CSV");
  synth->add_option("--preset", preset, "small | medium | highcard");
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--rows", rows, "Override the row count");
  synth->add_option("--cardinality", cardinality, "Override the per-column cardinality");
  synth->add_option("--out", synth_out, "Output CSV path")->required();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
  gradcheck->add_option("--seed", seed, "Seed for the random models");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return Run(config, out, seeds, jobs);
    if (*sweep) return SweepRatio(config, out, seeds, jobs, ratios);
    if (*validate) return Validate(config);
    if (*synth) return Synth(preset, seed, rows, cardinality, synth_out);
    if (*gradcheck) return GradCheck(seed);
  } catch (const pcpr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}
