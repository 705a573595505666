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

// Python bindings. Thin wrappers over the C++ API; datasets cross the
// boundary as integer category codes plus labels.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "json.hpp"
#include "pcpr/cmixup.h"
#include "pcpr/data.h"
#include "pcpr/encoding.h"
#include "pcpr/experiment.h"
#include "pcpr/nn.h"
#include "pcpr/progressive.h"

namespace py = pybind11;

namespace pcpr {
namespace {

using IntMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Categorical-only dataset over codes in [0, cardinality[m]).
TabularDataset CodesToDataset(const IntMatrix& codes, const LabelVector& labels,
                              int num_classes, const std::vector<std::int64_t>& cardinalities) {
  if (static_cast<Eigen::Index>(cardinalities.size()) != codes.cols()) {
    throw ShapeError("one cardinality per column required");
  }
  std::vector<ColumnSchema> schema;
  for (std::size_t m = 0; m < cardinalities.size(); ++m) {
    ColumnSchema col{"c" + std::to_string(m), ColumnKind::kCategorical, {}};
    for (std::int64_t v = 0; v < cardinalities[m]; ++v) col.domain.push_back(std::to_string(v));
    schema.push_back(std::move(col));
  }
  return TabularDataset(std::move(schema), codes.cast<double>(), labels, num_classes);
}

IndexList AllRows(Eigen::Index n) {
  IndexList rows(n);
  for (Eigen::Index i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

std::vector<std::int64_t> InferCardinalities(const IntMatrix& codes) {
  std::vector<std::int64_t> out(codes.cols(), 1);
  for (Eigen::Index m = 0; m < codes.cols(); ++m) {
    if (codes.rows() > 0) out[m] = codes.col(m).maxCoeff() + 1;
  }
  return out;
}

class PyCprTable {
 public:
  PyCprTable(CprTable table, std::vector<std::int64_t> cards)
      : table_(std::move(table)), cards_(std::move(cards)) {}

  static PyCprTable Fit(const IntMatrix& codes, const LabelVector& labels, int num_classes,
                        double alpha, std::vector<std::int64_t> cards) {
    if (cards.empty()) cards = InferCardinalities(codes);
    const TabularDataset ds = CodesToDataset(codes, labels, num_classes, cards);
    return PyCprTable(FitCpr(ds, AllRows(codes.rows()), labels, alpha), cards);
  }

  PyCprTable Update(const IntMatrix& codes, const LabelVector& labels) const {
    const TabularDataset ds = CodesToDataset(codes, labels, table_.num_classes(), cards_);
    return PyCprTable(UpdateCounts(table_, ds, AllRows(codes.rows()), labels), cards_);
  }

  Matrix Transform(const IntMatrix& codes) const {
    const TabularDataset ds = CodesToDataset(codes, {}, table_.num_classes(), cards_);
    return Encode(ds, AllRows(codes.rows()), EncodingTable(table_)).values;
  }

  std::vector<std::int64_t> Counts(std::size_t block, int value) const {
    const auto c = table_.counts(block, value);
    return {c.begin(), c.end()};
  }

  std::vector<double> Probabilities(std::size_t block, int value) const {
    std::vector<double> p(table_.num_classes());
    table_.Probabilities(block, value, p);
    return p;
  }

  const CprTable& table() const { return table_; }

 private:
  CprTable table_;
  std::vector<std::int64_t> cards_;
};

py::tuple Synthesize(const std::string& preset, std::uint64_t seed, std::int64_t n_rows,
                     int cardinality) {
  SyntheticSpec spec = SyntheticPreset(preset, seed);
  if (n_rows > 0) spec.n_rows = n_rows;
  if (cardinality > 0) spec.cardinality = cardinality;
  const TabularDataset ds = SynthesizeDataset(spec);
  std::vector<std::string> kinds;
  for (const ColumnSchema& c : ds.schema()) kinds.push_back(ColumnKindName(c.kind));
  return py::make_tuple(Matrix(ds.cells()), ds.labels(), kinds, ds.num_classes());
}

py::dict RunExperimentJson(const std::string& config_json, const std::string& out_dir) {
  const auto config = experiment::ParseExperimentConfig(nlohmann::json::parse(config_json));
  const auto problems = experiment::Validate(config);
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw ConfigError(msg);
  }
  experiment::ExperimentResult result;
  {
    py::gil_scoped_release release;
    result = experiment::RunExperiment(config);
    if (!out_dir.empty()) experiment::WriteExperiment(config, result, out_dir);
  }
  py::list reports;
  for (const auto& r : result.reports) {
    reports.append(py::module_::import("json").attr("loads")(
        progressive::ReportToJson(r).dump()));
  }
  py::list failures;
  for (const auto& f : result.failures) {
    failures.append(py::make_tuple(f.method, f.seed, f.message));
  }
  py::dict out;
  out["markdown"] = result.table.ToMarkdown();
  out["csv"] = result.table.ToCsv();
  out["reports"] = reports;
  out["failures"] = failures;
  out["warnings"] = result.warnings;
  return out;
}

std::vector<std::string> ValidateJson(const std::string& config_json) {
  return experiment::Validate(
      experiment::ParseExperimentConfig(nlohmann::json::parse(config_json)));
}

}  // namespace
}  // namespace pcpr

PYBIND11_MODULE(_pcpr, m) {
  using namespace pcpr;
  m.doc() = "Conditional-probability representations and progressive semi-supervised training";
  m.attr("__version__") = kVersion;

  // Base first: translators are tried most-recent first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<PyCprTable>(m, "CprTable")
      .def_static("fit", &PyCprTable::Fit, py::arg("codes"), py::arg("labels"),
                  py::arg("num_classes"), py::arg("alpha") = 1.0,
                  py::arg("cardinalities") = std::vector<std::int64_t>{},
                  "Count (value, class) co-occurrences of integer-coded columns.")
      .def("update", &PyCprTable::Update, py::arg("codes"), py::arg("labels"),
           "New table with the given rows added; self is unchanged.")
      .def("transform", &PyCprTable::Transform, py::arg("codes"),
           "Concatenated per-column class-probability vectors.")
      .def("counts", &PyCprTable::Counts, py::arg("column"), py::arg("value"))
      .def("probabilities", &PyCprTable::Probabilities, py::arg("column"), py::arg("value"))
      .def_property_readonly("num_classes", [](const PyCprTable& t) { return t.table().num_classes(); })
      .def_property_readonly("observations", [](const PyCprTable& t) { return t.table().observations(); })
      .def("__eq__", [](const PyCprTable& a, const PyCprTable& b) { return a.table() == b.table(); });

  m.def(
      "propagate_labels",
      [](const Matrix& latents, const IndexList& labeled, const LabelVector& labels,
         int num_classes, int k, double alpha, double gamma, bool rescale_weights) {
        cmixup::PropagationConfig cfg;
        cfg.k = k;
        cfg.alpha = alpha;
        cfg.gamma = gamma;
        cfg.rescale_weights = rescale_weights;
        const auto r = cmixup::PropagateLabels(latents, labeled, labels, num_classes, cfg);
        return py::make_tuple(r.labels, r.weights);
      },
      py::arg("latents"), py::arg("labeled"), py::arg("labels"), py::arg("num_classes"),
      py::arg("k") = 50, py::arg("alpha") = 0.99, py::arg("gamma") = 3.0,
      py::arg("rescale_weights") = true,
      "kNN-graph label diffusion; returns (labels, weights) for every row.");

  m.def("synthesize", &Synthesize, py::arg("preset") = "small", py::arg("seed") = 0,
        py::arg("n_rows") = 0, py::arg("cardinality") = 0,
        "Returns (cells, labels, column_kinds, num_classes).");

  m.def("run_experiment", &RunExperimentJson, py::arg("config_json"), py::arg("out_dir") = "",
        "Runs a JSON experiment config; returns tables and per-pair reports.");
  m.def("validate_config", &ValidateJson, py::arg("config_json"));

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& c : nn::GradCheckSuite(seed)) {
          py::dict d;
          d["name"] = c.name;
          d["max_rel_err"] = c.report.max_rel_err;
          d["tolerance"] = c.tolerance;
          d["passed"] = c.passed();
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 0);
}
