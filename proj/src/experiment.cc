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

#include "pcpr/experiment.h"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace pcpr::experiment {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using progressive::ExperimentReport;
using progressive::RunConfig;

template <typename T>
void Read(const json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + "." + key + ": " + e.what());
  }
}

void RejectUnknown(const json& j, const std::set<std::string>& known, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError(path + ": unknown key '" + key + "'");
  }
}

SyntheticSpec ParseSynthetic(const json& j) {
  const std::string path = "dataset.synthetic";
  RejectUnknown(j, {"preset", "seed", "n_rows", "n_cat_cols", "cardinality", "n_num_cols",
                    "n_classes", "signal_strength", "numeric_separation", "zipf_exponent"},
                path);
  std::uint64_t seed = 0;
  Read(j, "seed", seed, path);
  SyntheticSpec spec;
  if (j.contains("preset")) {
    spec = SyntheticPreset(j.at("preset").get<std::string>(), seed);
  }
  spec.seed = seed;
  Read(j, "n_rows", spec.n_rows, path);
  Read(j, "n_cat_cols", spec.n_cat_cols, path);
  Read(j, "cardinality", spec.cardinality, path);
  Read(j, "n_num_cols", spec.n_num_cols, path);
  Read(j, "n_classes", spec.n_classes, path);
  Read(j, "signal_strength", spec.signal_strength, path);
  Read(j, "numeric_separation", spec.numeric_separation, path);
  Read(j, "zipf_exponent", spec.zipf_exponent, path);
  return spec;
}

json SyntheticToJson(const SyntheticSpec& s) {
  return {{"seed", s.seed},
          {"n_rows", s.n_rows},
          {"n_cat_cols", s.n_cat_cols},
          {"cardinality", s.cardinality},
          {"n_num_cols", s.n_num_cols},
          {"n_classes", s.n_classes},
          {"signal_strength", s.signal_strength},
          {"numeric_separation", s.numeric_separation},
          {"zipf_exponent", s.zipf_exponent}};
}

std::string Percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
  return buf;
}

std::string Slug(const std::string& s) {
  std::string out;
  for (char c : s) {
    out += std::isalnum(static_cast<unsigned char>(c)) || c == '-' ? c : '_';
  }
  return out;
}

std::string MethodName(const RunConfig& c) {
  return c.name.empty() ? progressive::PipelineName(c.pipeline) : c.name;
}

void WriteFile(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

std::string CsvQuote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string FormatDouble(double v) {
  // Shortest representation that round-trips.
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

ExperimentConfig ParseExperimentConfig(const json& j, const std::string& base_dir) {
  RejectUnknown(j, {"name", "dataset", "split", "protocol", "methods", "ablation", "seeds",
                    "ratios", "output_dir", "jobs"},
                "config");
  ExperimentConfig c;
  Read(j, "name", c.name, "config");
  if (!j.contains("dataset")) throw ConfigError("config: missing 'dataset'");
  const json& d = j.at("dataset");
  RejectUnknown(d, {"synthetic", "csv"}, "dataset");
  if (d.contains("synthetic")) c.dataset.synthetic = ParseSynthetic(d.at("synthetic"));
  if (d.contains("csv")) {
    const json& csv = d.at("csv");
    RejectUnknown(csv, {"path", "label_column", "kind_overrides", "class_names",
                        "ignore_columns"},
                  "dataset.csv");
    std::string path;
    Read(csv, "path", path, "dataset.csv");
    if (!base_dir.empty() && !path.empty() && fs::path(path).is_relative()) {
      path = (fs::path(base_dir) / path).string();
    }
    c.dataset.csv_path = path;
    Read(csv, "label_column", c.dataset.csv.label_column, "dataset.csv");
    Read(csv, "class_names", c.dataset.csv.class_names, "dataset.csv");
    Read(csv, "ignore_columns", c.dataset.csv.ignore_columns, "dataset.csv");
    if (csv.contains("kind_overrides")) {
      for (const auto& [col, kind] : csv.at("kind_overrides").items()) {
        c.dataset.csv.kind_overrides[col] = ParseColumnKind(kind.get<std::string>());
      }
    }
  }
  if (j.contains("split")) {
    const json& s = j.at("split");
    RejectUnknown(s, {"train_fraction", "labeled_fraction"}, "split");
    Read(s, "train_fraction", c.split.train_fraction, "split");
    Read(s, "labeled_fraction", c.split.labeled_fraction_of_train, "split");
  }
  std::string protocol = "semi_supervised";
  Read(j, "protocol", protocol, "config");
  if (protocol == "semi_supervised") {
    c.protocol = Protocol::kSemiSupervised;
  } else if (protocol == "full_supervision") {
    c.protocol = Protocol::kFullSupervision;
  } else {
    throw ConfigError("config.protocol: unknown protocol '" + protocol + "'");
  }
  if (j.contains("methods")) {
    if (!j.at("methods").is_array()) throw ConfigError("config.methods: expected an array");
    for (const json& m : j.at("methods")) c.methods.push_back(progressive::RunConfigFromJson(m));
  }
  if (j.contains("ablation")) {
    c.ablation = AblationSpec{progressive::RunConfigFromJson(j.at("ablation"))};
  }
  if (j.contains("seeds")) {
    Read(j, "seeds", c.seeds, "config");
  } else {
    c.seeds.assign(std::begin(progressive::kDefaultSeeds), std::end(progressive::kDefaultSeeds));
  }
  Read(j, "ratios", c.ratios, "config");
  Read(j, "output_dir", c.output_dir, "config");
  Read(j, "jobs", c.jobs, "config");
  return c;
}

ExperimentConfig LoadExperimentConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return ParseExperimentConfig(j, fs::path(path).parent_path().string());
}

json ExperimentConfigToJson(const ExperimentConfig& c) {
  json dataset = json::object();
  if (c.dataset.synthetic) dataset["synthetic"] = SyntheticToJson(*c.dataset.synthetic);
  if (c.dataset.csv_path) {
    json kinds = json::object();
    for (const auto& [col, kind] : c.dataset.csv.kind_overrides) kinds[col] = ColumnKindName(kind);
    dataset["csv"] = {{"path", *c.dataset.csv_path},
                      {"label_column", c.dataset.csv.label_column},
                      {"kind_overrides", kinds},
                      {"class_names", c.dataset.csv.class_names},
                      {"ignore_columns", c.dataset.csv.ignore_columns}};
  }
  json methods = json::array();
  for (const RunConfig& m : c.methods) methods.push_back(progressive::RunConfigToJson(m));
  json out = {{"name", c.name},
              {"dataset", dataset},
              {"split",
               {{"train_fraction", c.split.train_fraction},
                {"labeled_fraction", c.split.labeled_fraction_of_train}}},
              {"protocol", c.protocol == Protocol::kSemiSupervised ? "semi_supervised"
                                                                    : "full_supervision"},
              {"methods", methods},
              {"seeds", c.seeds},
              {"ratios", c.ratios},
              {"output_dir", c.output_dir},
              {"jobs", c.jobs}};
  if (c.ablation) out["ablation"] = progressive::RunConfigToJson(c.ablation->base);
  return out;
}

std::vector<RunConfig> ExpandAblation(const RunConfig& base) {
  static const char* kSets[] = {"classifier",            "decoder",
                                "classifier+decoder",    "classifier+projection",
                                "decoder+projection",    "classifier+decoder+projection"};
  std::vector<RunConfig> out;
  for (const char* set : kSets) {
    RunConfig c = base;
    c.pipeline = progressive::Pipeline::kCmixup;
    c.cmixup.components = cmixup::ComponentFlags::Parse(set);
    const std::string row = std::string(set == std::string("classifier+decoder+projection")
                                            ? "all"
                                            : set);
    RunConfig without = c;
    without.n_runs = 1;
    without.update_enabled = false;
    without.refinement = progressive::RefinementMode::kNone;
    without.name = row + kAblationSeparator + "without update";
    RunConfig update = c;
    update.update_enabled = true;
    update.refinement = progressive::RefinementMode::kNone;
    update.name = row + kAblationSeparator + "with update";
    RunConfig refine = c;
    refine.update_enabled = true;
    refine.refinement = c.cmixup.components.classifier
                            ? progressive::RefinementMode::kTwoStepAgreement
                            : progressive::RefinementMode::kPropagationThreshold;
    refine.name = row + kAblationSeparator + "with refinement";
    out.push_back(without);
    out.push_back(update);
    out.push_back(refine);
  }
  return out;
}

std::vector<RunConfig> ExpandMethods(const ExperimentConfig& config) {
  std::vector<RunConfig> out = config.methods;
  if (config.ablation) {
    const auto grid = ExpandAblation(config.ablation->base);
    out.insert(out.end(), grid.begin(), grid.end());
  }
  return out;
}

std::vector<std::string> Validate(const ExperimentConfig& config) {
  std::vector<std::string> errors;
  const bool has_synth = config.dataset.synthetic.has_value();
  const bool has_csv = config.dataset.csv_path.has_value();
  if (has_synth == has_csv) errors.push_back("dataset: exactly one of synthetic or csv required");
  if (has_csv) {
    if (!fs::exists(*config.dataset.csv_path)) {
      errors.push_back("dataset.csv: file not found: " + *config.dataset.csv_path);
    }
    if (config.dataset.csv.label_column.empty()) {
      errors.push_back("dataset.csv: label_column required");
    }
  }
  if (has_synth) {
    const SyntheticSpec& s = *config.dataset.synthetic;
    if (s.n_rows < 10 || s.n_classes < 2 || s.cardinality < 1 || s.n_cat_cols < 0 ||
        s.n_num_cols < 0 || s.n_cat_cols + s.n_num_cols < 1) {
      errors.push_back("dataset.synthetic: need >= 10 rows, >= 2 classes and >= 1 column");
    }
  }
  auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!in_unit(config.split.train_fraction)) {
    errors.push_back("split.train_fraction must lie in (0, 1)");
  }
  if (!in_unit(config.split.labeled_fraction_of_train)) {
    errors.push_back("split.labeled_fraction must lie in (0, 1)");
  }
  for (double r : config.ratios) {
    if (!in_unit(r)) errors.push_back("ratios: " + FormatDouble(r) + " is outside (0, 1)");
  }
  if (config.seeds.empty()) errors.push_back("seeds: at least one seed required");
  if (config.jobs < 1) errors.push_back("jobs must be at least 1");
  const std::vector<RunConfig> methods = ExpandMethods(config);
  if (methods.empty()) errors.push_back("methods: at least one method required");
  std::set<std::string> names;
  for (const RunConfig& m : methods) {
    if (!names.insert(MethodName(m)).second) {
      errors.push_back("methods: duplicate name '" + MethodName(m) + "'");
    }
    for (const std::string& e : progressive::ValidateRunConfig(m)) errors.push_back(e);
    if (config.protocol == Protocol::kFullSupervision && m.update_enabled && m.n_runs > 1) {
      errors.push_back(MethodName(m) + ": update needs unlabeled rows (full_supervision protocol)");
    }
    if (config.protocol == Protocol::kFullSupervision &&
        m.pipeline != progressive::Pipeline::kSupervised) {
      errors.push_back(MethodName(m) + ": full_supervision protocol supports the supervised "
                                       "pipeline only");
    }
  }
  return errors;
}

TabularDataset LoadDataset(const DatasetSource& source) {
  if (source.synthetic) return SynthesizeDataset(*source.synthetic);
  if (source.csv_path) return LoadCsv(*source.csv_path, source.csv);
  throw ConfigError("dataset: no source given");
}

DataSplit SplitFor(const TabularDataset& ds, const ExperimentConfig& config,
                   std::uint64_t seed) {
  SplitSpec spec = config.split;
  spec.seed = seed;
  DataSplit split = MakeSplit(ds, spec);
  if (config.protocol == Protocol::kFullSupervision) {
    split.labeled = split.train();
    split.unlabeled.clear();
  }
  return split;
}

Cell MakeCell(const std::vector<double>& values) {
  const progressive::MethodSummary s = progressive::Summarize("", values);
  Cell cell;
  cell.values = values;
  cell.mean = s.mean;
  cell.std = s.std;
  cell.text = Percent(s.mean) + " ± " + Percent(s.std);
  return cell;
}

ResultsTable BuildTable(const std::vector<ExperimentReport>& reports) {
  ResultsTable table;
  std::map<std::pair<std::string, std::string>, std::vector<double>> values;
  const std::string sep = kAblationSeparator;
  for (const ExperimentReport& r : reports) {
    std::string row = r.method, col = "accuracy";
    if (const auto pos = r.method.find(sep); pos != std::string::npos) {
      row = r.method.substr(0, pos);
      col = r.method.substr(pos + sep.size());
    }
    if (std::find(table.rows.begin(), table.rows.end(), row) == table.rows.end()) {
      table.rows.push_back(row);
    }
    if (std::find(table.columns.begin(), table.columns.end(), col) == table.columns.end()) {
      table.columns.push_back(col);
    }
    values[{row, col}].push_back(r.final_test_accuracy);
  }
  for (const std::string& row : table.rows) {
    std::vector<Cell> line;
    for (const std::string& col : table.columns) {
      const auto it = values.find({row, col});
      line.push_back(it == values.end() ? Cell{{}, 0.0, 0.0, "-"} : MakeCell(it->second));
    }
    table.cells.push_back(std::move(line));
  }
  return table;
}

std::string ResultsTable::ToMarkdown() const {
  std::ostringstream out;
  out << "| method |";
  for (const std::string& c : columns) out << " " << c << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < columns.size(); ++i) out << "---|";
  out << "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << "| " << rows[r] << " |";
    for (const Cell& cell : cells[r]) out << " " << cell.text << " |";
    out << "\n";
  }
  return out.str();
}

std::string ResultsTable::ToCsv() const {
  std::ostringstream out;
  out << "method,column,mean_acc,std_acc,n_seeds,values\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const Cell& cell = cells[r][c];
      if (cell.values.empty()) continue;
      std::string joined;
      for (std::size_t i = 0; i < cell.values.size(); ++i) {
        joined += (i ? ";" : "") + FormatDouble(cell.values[i]);
      }
      out << CsvQuote(rows[r]) << "," << CsvQuote(columns[c]) << "," << FormatDouble(cell.mean)
          << "," << FormatDouble(cell.std) << "," << cell.values.size() << "," << joined
          << "\n";
    }
  }
  return out.str();
}

ExperimentResult RunExperiment(const ExperimentConfig& config) {
  const auto problems = Validate(config);
  if (!problems.empty()) throw ConfigError(problems.front());
  const TabularDataset ds = LoadDataset(config.dataset);
  const std::vector<RunConfig> methods = ExpandMethods(config);
  const std::size_t n_seeds = config.seeds.size();
  const std::size_t n_tasks = methods.size() * n_seeds;

  std::vector<std::optional<ExperimentReport>> slots(n_tasks);
  std::vector<std::optional<std::string>> errors(n_tasks);
  std::vector<char> unstratified(n_seeds, 0);
  for (std::size_t s = 0; s < n_seeds; ++s) {
    unstratified[s] = !SplitFor(ds, config, config.seeds[s]).stratified;
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < n_tasks; t = next++) {
      const RunConfig& method = methods[t / n_seeds];
      const std::uint64_t seed = config.seeds[t % n_seeds];
      try {
        RunConfig c = method;
        c.seed = seed;
        slots[t] = progressive::RunProgressive(ds, SplitFor(ds, config, seed), c);
      } catch (const std::exception& e) {
        errors[t] = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(config.jobs, static_cast<int>(n_tasks)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  ExperimentResult result;
  for (std::size_t t = 0; t < n_tasks; ++t) {
    if (slots[t]) {
      result.reports.push_back(std::move(*slots[t]));
    } else {
      result.failures.push_back(
          {MethodName(methods[t / n_seeds]), config.seeds[t % n_seeds], errors[t].value_or("")});
    }
  }
  for (std::size_t s = 0; s < n_seeds; ++s) {
    if (unstratified[s]) {
      result.warnings.push_back("seed " + std::to_string(config.seeds[s]) +
                                ": stratified labeled sampling infeasible, used plain random");
    }
  }
  result.table = BuildTable(result.reports);
  return result;
}

void WriteExperiment(const ExperimentConfig& config, const ExperimentResult& result,
                     const std::string& dir) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root / "reports", ec);
  if (ec) throw Error("cannot create " + (root / "reports").string() + ": " + ec.message());
  json index = json::array();
  for (const ExperimentReport& r : result.reports) {
    const std::string file = Slug(r.method) + "_seed" + std::to_string(r.seed) + ".json";
    WriteFile(root / "reports" / file, progressive::ReportToJson(r).dump(2) + "\n");
    index.push_back(file);
  }
  json failures = json::array();
  for (const Failure& f : result.failures) {
    failures.push_back({{"method", f.method}, {"seed", f.seed}, {"message", f.message}});
  }
  WriteFile(root / "reports" / "index.json",
            json{{"reports", index}, {"failures", failures}}.dump(2) + "\n");
  WriteFile(root / "config.json", ExperimentConfigToJson(config).dump(2) + "\n");
  std::string md = "# " + config.name + "\n\n" + result.table.ToMarkdown();
  for (const std::string& w : result.warnings) md += "\n> warning: " + w + "\n";
  for (const Failure& f : result.failures) {
    md += "\n> failed: " + f.method + " seed " + std::to_string(f.seed) + ": " + f.message + "\n";
  }
  WriteFile(root / "results.md", md);
  WriteFile(root / "results.csv", result.table.ToCsv());
}

std::vector<ExperimentReport> LoadReports(const std::string& dir) {
  const fs::path reports = fs::path(dir) / "reports";
  std::ifstream in(reports / "index.json");
  if (!in) throw ConfigError("no report index in " + reports.string());
  std::vector<ExperimentReport> out;
  try {
    const json index = json::parse(in);
    for (const json& file : index.at("reports")) {
      std::ifstream r(reports / file.get<std::string>());
      if (!r) throw ConfigError("missing report " + file.get<std::string>());
      out.push_back(progressive::ReportFromJson(json::parse(r)));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed report index: ") + e.what());
  }
  return out;
}

std::string SweepResult::ToCsv() const {
  std::ostringstream out;
  out << "method,ratio,mean_acc,std_acc,n_seeds\n";
  for (const SweepRow& r : rows) {
    out << CsvQuote(r.method) << "," << FormatDouble(r.ratio) << "," << FormatDouble(r.mean_acc)
        << "," << FormatDouble(r.std_acc) << "," << r.n_seeds << "\n";
  }
  return out.str();
}

std::string SweepResult::ToMarkdown() const {
  std::ostringstream out;
  out << "| method | ratio | accuracy | seeds |\n|---|---|---|---|\n";
  for (const SweepRow& r : rows) {
    out << "| " << r.method << " | " << FormatDouble(r.ratio) << " | " << Percent(r.mean_acc)
        << " ± " << Percent(r.std_acc) << " | " << r.n_seeds << " |\n";
  }
  for (const std::string& w : warnings) out << "\n> warning: " << w << "\n";
  for (const Failure& f : failures) {
    out << "\n> failed: " << f.method << " seed " << f.seed << ": " << f.message << "\n";
  }
  return out.str();
}

SweepResult EmitRatioSweep(const ExperimentConfig& config, const std::vector<double>& ratios) {
  if (ratios.empty()) throw ConfigError("sweep: no ratios");
  for (double r : ratios) {
    if (!(r > 0.0 && r < 1.0)) throw ConfigError("sweep: ratio " + FormatDouble(r) + " outside (0, 1)");
  }
  SweepResult out;
  for (double ratio : ratios) {
    ExperimentConfig c = config;
    c.split.labeled_fraction_of_train = ratio;
    const ExperimentResult result = RunExperiment(c);
    for (const auto& s : progressive::CompareRuns(result.reports)) {
      out.rows.push_back({s.method, ratio, s.mean, s.std, static_cast<int>(s.values.size())});
    }
    for (const std::string& w : result.warnings) {
      out.warnings.push_back("ratio " + FormatDouble(ratio) + ", " + w);
    }
    out.failures.insert(out.failures.end(), result.failures.begin(), result.failures.end());
  }
  return out;
}

}  // namespace pcpr::experiment
