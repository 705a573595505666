#include <algorithm>

#include "doctest.h"
#include "fixtures.h"
#include "oracles.h"
#include "pcpr/progressive.h"

namespace pcpr::progressive {
namespace {

// Simulated pseudo-labeler: correct with probability `accuracy`; confidence
// and propagation weight are drawn higher for correct rows.
PseudoLabelSet SimulatedLabeler(Rng& rng, int n, int classes, double accuracy,
                                LabelVector* truth) {
  PseudoLabelSet pls;
  truth->clear();
  LabelVector prop_labels;
  std::vector<double> conf, weight;
  for (int i = 0; i < n; ++i) {
    const int t = static_cast<int>(UniformIndex(rng, classes));
    truth->push_back(t);
    const bool right = Uniform01(rng) < accuracy;
    int label = t;
    if (!right) label = (t + 1 + static_cast<int>(UniformIndex(rng, classes - 1))) % classes;
    pls.rows.push_back(i);
    pls.labels.push_back(label);
    const double u = Uniform01(rng);
    conf.push_back(right ? 0.6 + 0.4 * u : 0.3 + 0.65 * u * u);
    weight.push_back(right ? std::sqrt(Uniform01(rng)) : Uniform01(rng) * Uniform01(rng));
    prop_labels.push_back(Uniform01(rng) < 0.8 ? label : (label + 1) % classes);
  }
  pls.classifier_labels = pls.labels;
  pls.classifier_conf = conf;
  pls.propagation_labels = prop_labels;
  pls.propagation_weight = weight;
  pls.kept.assign(n, 1);
  return pls;
}

double KeptPrecision(const PseudoLabelSet& pls, const LabelVector& truth, bool kept_only) {
  int total = 0, right = 0;
  for (std::size_t i = 0; i < pls.rows.size(); ++i) {
    if (kept_only && !pls.kept[i]) continue;
    ++total;
    right += pls.labels[i] == truth[i];
  }
  return total ? static_cast<double>(right) / total : 0.0;
}

bool Subset(const PseudoLabelSet& a, const PseudoLabelSet& b) {
  for (std::size_t i = 0; i < a.kept.size(); ++i) {
    if (a.kept[i] && !b.kept[i]) return false;
  }
  return true;
}

TEST_CASE("refine: two-step examples and identity for none") {
  PseudoLabelSet pls;
  pls.rows = {10, 11, 12};
  pls.labels = {2, 2, 0};
  pls.classifier_labels = LabelVector{2, 2, 0};
  pls.classifier_conf = std::vector<double>{0.5, 0.9, 0.99};
  pls.propagation_labels = LabelVector{2, 1, 0};
  pls.propagation_weight = std::vector<double>{0.95, 0.99, 0.5};
  pls.kept = {0, 0, 0};
  const PseudoLabelSet two = RefinePseudoLabels(pls, RefinementMode::kTwoStepAgreement, 0.8, 0.9);
  CHECK(two.kept == std::vector<char>{1, 0, 0});
  const PseudoLabelSet none = RefinePseudoLabels(pls, RefinementMode::kNone, 0.8, 0.9);
  CHECK(none.kept == std::vector<char>{1, 1, 1});
  CHECK(none.rows == pls.rows);
  CHECK(none.labels == pls.labels);
  const PseudoLabelSet clf = RefinePseudoLabels(pls, RefinementMode::kClassifierThreshold, 0.8, 0.9);
  CHECK(clf.kept == std::vector<char>{0, 1, 1});
  CHECK(pls.kept == std::vector<char>{0, 0, 0});  // input untouched
}

TEST_CASE("refine: missing fields are errors") {
  PseudoLabelSet pls;
  pls.rows = {1};
  pls.labels = {0};
  CHECK_THROWS_AS(RefinePseudoLabels(pls, RefinementMode::kClassifierThreshold, 0.5, 0.5), Error);
  CHECK_THROWS_AS(RefinePseudoLabels(pls, RefinementMode::kPropagationThreshold, 0.5, 0.5), Error);
  pls.propagation_weight = std::vector<double>{1.0};
  CHECK_THROWS_AS(RefinePseudoLabels(pls, RefinementMode::kTwoStepAgreement, 0.5, 0.5), Error);
  CHECK_NOTHROW(RefinePseudoLabels(pls, RefinementMode::kNone, 0.5, 0.5));
}

TEST_CASE("refine: monotone in thresholds and nested across modes") {
  Rng rng(17);
  LabelVector truth;
  for (int trial = 0; trial < 30; ++trial) {
    const PseudoLabelSet pls = SimulatedLabeler(rng, 300, 4, 0.7, &truth);
    const double lo = Uniform01(rng), hi = lo + (1.0 - lo) * Uniform01(rng);
    for (RefinementMode mode : {RefinementMode::kClassifierThreshold,
                                RefinementMode::kPropagationThreshold,
                                RefinementMode::kTwoStepAgreement}) {
      const PseudoLabelSet a = RefinePseudoLabels(pls, mode, lo, lo);
      const PseudoLabelSet b = RefinePseudoLabels(pls, mode, hi, hi);
      CHECK(Subset(b, a));
    }
    const PseudoLabelSet two = RefinePseudoLabels(pls, RefinementMode::kTwoStepAgreement, lo, lo);
    const PseudoLabelSet prop =
        RefinePseudoLabels(pls, RefinementMode::kPropagationThreshold, lo, lo);
    CHECK(Subset(two, prop));
  }
}

TEST_CASE("refine: kept precision beats unrefined for a 70% labeler over 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    LabelVector truth;
    const PseudoLabelSet pls = SimulatedLabeler(rng, 2000, 4, 0.7, &truth);
    const double raw = KeptPrecision(pls, truth, false);
    const PseudoLabelSet kept =
        RefinePseudoLabels(pls, RefinementMode::kClassifierThreshold, 0.9, 0.9);
    CHECK(kept.num_kept() > 0);
    CHECK(KeptPrecision(kept, truth, true) > raw);
  }
}

TabularDataset FiveRows() {
  std::vector<ColumnSchema> schema{{"c", ColumnKind::kCategorical, {"x", "y"}}};
  Eigen::MatrixXd cells(5, 1);
  cells << 0, 0, 1, 1, 0;
  return TabularDataset(schema, cells, {0, 0, 1, 1, 1}, 2, {"a", "b"});
}

TEST_CASE("update representation: count arithmetic on a hand example") {
  const TabularDataset ds = FiveRows();
  const CprTable base = FitCpr(ds, {0, 2}, {0, 1}, 1.0);
  PseudoLabelSet kept;
  kept.rows = {1, 3, 4};
  kept.labels = {1, 1, 1};  // row 1 truly class 0
  kept.kept = {1, 0, 1};
  const CprTable table = UpdateRepresentation(base, ds, kept);
  // Value 0: labeled row 0 (class 0) plus pseudo rows 1 and 4 (class 1).
  CHECK(table.counts(0, 0)[0] == 1);
  CHECK(table.counts(0, 0)[1] == 2);
  std::vector<double> p(2);
  table.Probabilities(0, 0, p);
  CHECK(p[0] == doctest::Approx(2.0 / 5.0));
  CHECK(p[1] == doctest::Approx(3.0 / 5.0));
  // Value 1 untouched: row 3 was dropped.
  CHECK(table.counts(0, 1)[1] == 1);
  CHECK(table.total(0, 1) == 1);

  kept.kept = {0, 0, 0};
  CHECK(UpdateRepresentation(base, ds, kept) == base);
}

TEST_CASE("update representation: all rows with truth equals the full fit") {
  const auto data = testing::MakeEncodedSplit(600, 0.1, 31);
  const CprTable base = FitCpr(data.ds, data.split.labeled, data.labeled_y);
  PseudoLabelSet all;
  all.rows = data.split.unlabeled;
  all.labels = data.unlabeled_y;
  all.kept.assign(all.rows.size(), 1);
  const IndexList train = data.split.train();
  CHECK(UpdateRepresentation(base, data.ds, all) ==
        FitCpr(data.ds, train, GatherLabels(data.ds.labels(), train)));
}

TEST_CASE("update representation: re-encoding only changes touched categories") {
  const auto data = testing::MakeEncodedSplit(600, 0.1, 32);
  const TabularDataset& ds = data.ds;
  const EncodingTable before = FitEncoding(EncodingKind::kCpr, ds, data.split.labeled,
                                           data.labeled_y, {});
  PseudoLabelSet kept;
  kept.rows = IndexList(data.split.unlabeled.begin(), data.split.unlabeled.begin() + 20);
  kept.labels = LabelVector(data.unlabeled_y.begin(), data.unlabeled_y.begin() + 20);
  kept.kept.assign(20, 1);
  const EncodingTable after = UpdateRepresentation(before, ds, kept, {});
  const IndexList all = data.split.train();
  const EncodedMatrix a = Encode(ds, all, before);
  const EncodedMatrix b = Encode(ds, all, after);
  const auto& cpr = std::get<CprTable>(before);
  const auto& cpr2 = std::get<CprTable>(after);
  int changed = 0;
  for (const FeatureBlock& block : a.blocks) {
    for (std::size_t r = 0; r < all.size(); ++r) {
      const auto ra = a.values.row(r).segment(block.offset, block.width);
      const auto rb = b.values.row(r).segment(block.offset, block.width);
      if (!block.categorical) {
        CHECK(ra == rb);
        continue;
      }
      const auto bi = static_cast<std::size_t>(
          std::find(cpr.columns().begin(), cpr.columns().end(), block.source_column) -
          cpr.columns().begin());
      const int v = ds.category(all[r], block.source_column);
      const bool touched = !std::equal(cpr.counts(bi, v).begin(), cpr.counts(bi, v).end(),
                                       cpr2.counts(bi, v).begin());
      if (!touched) {
        CHECK(ra == rb);
      } else {
        changed += ra != rb;
      }
    }
  }
  CHECK(changed > 0);
}

RunConfig FastVime() {
  RunConfig c = DefaultRunConfig(Pipeline::kVime);
  c.n_runs = 3;
  c.seed = 7;
  c.vime.latent_dim = 16;
  c.vime.pretext_epochs = 2;
  c.vime.semisup_epochs = 4;
  c.vime.batch_size = 64;
  c.vime.predictor_hidden = {32};
  return c;
}

RunConfig FastCmixup() {
  RunConfig c = DefaultRunConfig(Pipeline::kCmixup);
  c.n_runs = 2;
  c.seed = 9;
  c.vime = FastVime().vime;
  c.cmixup.encoder_hidden = {32};
  c.cmixup.latent_dim = 16;
  c.cmixup.warmup_epochs = 1;
  c.cmixup.epochs = 3;
  c.cmixup.propagation.k = 10;
  return c;
}

TEST_CASE("run: single run without update matches the baseline exactly") {
  const auto data = testing::MakeEncodedSplit(800, 0.15, 41);
  RunConfig c = FastVime();
  c.n_runs = 1;
  c.update_enabled = false;
  const ExperimentReport p = RunProgressive(data.ds, data.split, c);
  const ExperimentReport b = RunBaseline(data.ds, data.split, c);
  CHECK(p.final_test_accuracy == b.final_test_accuracy);
  CHECK(p.test_predictions == b.test_predictions);
}

TEST_CASE("run: without update the table never changes") {
  const auto data = testing::MakeEncodedSplit(800, 0.15, 42);
  RunConfig c = FastVime();
  c.update_enabled = false;
  const ExperimentReport r = RunProgressive(data.ds, data.split, c);
  REQUIRE(r.runs.size() == 3);
  for (const RunMetrics& m : r.runs) {
    CHECK(m.table_fingerprint == r.runs[0].table_fingerprint);
    CHECK(m.table_observations == r.runs[0].table_observations);
  }
}

TEST_CASE("run: progressive vime is deterministic and grows the table") {
  const auto data = testing::MakeEncodedSplit(800, 0.15, 43);
  RunConfig c = FastVime();
  c.classifier_threshold = 0.3;
  const ExperimentReport a = RunProgressive(data.ds, data.split, c);
  const ExperimentReport b = RunProgressive(data.ds, data.split, c);
  for (std::size_t i = 0; i < a.runs.size(); ++i) {
    CHECK(a.runs[i].test_accuracy == b.runs[i].test_accuracy);
  }
  CHECK(a.test_predictions == b.test_predictions);
  CHECK(a.runs[1].table_observations > a.runs[0].table_observations);
  CHECK(a.runs[0].kept_fraction > 0.0);
  CHECK(a.runs[0].kept_fraction <= 1.0);
}

TEST_CASE("run: oracle pseudo-labels rebuild the full-train table") {
  const auto data = testing::MakeEncodedSplit(800, 0.15, 44);
  RunConfig c = FastVime();
  c.n_runs = 2;
  c.oracle_pseudo_labels = true;
  const ExperimentReport r = RunProgressive(data.ds, data.split, c);
  CHECK(r.runs[0].kept_fraction == 1.0);
  CHECK(r.runs[0].pseudo_label_precision == 1.0);
  const IndexList train = data.split.train();
  const EncodingTable full =
      FitEncoding(EncodingKind::kCpr, data.ds, train, GatherLabels(data.ds.labels(), train), {});
  CHECK(r.runs[1].table_fingerprint == TableFingerprint(full));
}

TEST_CASE("run: progressive cmixup with two-step agreement") {
  const auto data = testing::MakeEncodedSplit(700, 0.2, 45);
  RunConfig c = FastCmixup();
  c.propagation_threshold = 0.2;
  const ExperimentReport r = RunProgressive(data.ds, data.split, c);
  REQUIRE(r.runs.size() == 2);
  CHECK(r.runs[0].kept <= r.runs[0].pseudo_labels);
  CHECK(r.runs[0].encoder_loss.size() == 3);
  const ExperimentReport again = RunProgressive(data.ds, data.split, c);
  CHECK(again.test_predictions == r.test_predictions);
}

TEST_CASE("run: target encoding supports the update loop") {
  const auto data = testing::MakeEncodedSplit(800, 0.15, 46);
  RunConfig c = FastVime();
  c.n_runs = 2;
  c.encoding = EncodingKind::kTargetEncoding;
  c.classifier_threshold = 0.3;
  const ExperimentReport r = RunProgressive(data.ds, data.split, c);
  CHECK(r.runs[1].table_observations > r.runs[0].table_observations);
}

TEST_CASE("report: JSON round trip") {
  const auto data = testing::MakeEncodedSplit(500, 0.2, 47);
  RunConfig c = FastVime();
  c.n_runs = 2;
  const ExperimentReport r = RunProgressive(data.ds, data.split, c);
  const nlohmann::json j = ReportToJson(r);
  const ExperimentReport back = ReportFromJson(nlohmann::json::parse(j.dump()));
  CHECK(ReportToJson(back) == j);
  CHECK(back.runs[1].test_accuracy == r.runs[1].test_accuracy);
  CHECK(RunConfigFromJson(back.config).n_runs == 2);
}

TEST_CASE("config: JSON round trip, defaults and unknown keys") {
  RunConfig c = FastCmixup();
  c.cmixup.components = cmixup::ComponentFlags::Parse("decoder+projection");
  c.refinement = RefinementMode::kPropagationThreshold;
  const RunConfig back = RunConfigFromJson(RunConfigToJson(c));
  CHECK(RunConfigToJson(back) == RunConfigToJson(c));
  const RunConfig d = RunConfigFromJson(nlohmann::json{{"pipeline", "cmixup"}});
  CHECK(d.n_runs == 4);
  CHECK(d.refinement == RefinementMode::kTwoStepAgreement);
  CHECK(DefaultRunConfig(Pipeline::kVime).n_runs == 5);
  CHECK(DefaultRunConfig(Pipeline::kVime).classifier_threshold == 0.8);
  CHECK_THROWS_AS(RunConfigFromJson(nlohmann::json{{"pipeline", "vime"}, {"n_run", 3}}),
                  ConfigError);
  CHECK_THROWS_AS(RunConfigFromJson(nlohmann::json{{"vime", {{"beta", "x"}}}}), ConfigError);
}

TEST_CASE("validate: refinement availability rules") {
  RunConfig v = DefaultRunConfig(Pipeline::kVime);
  CHECK(ValidateRunConfig(v).empty());
  v.refinement = RefinementMode::kTwoStepAgreement;
  CHECK_FALSE(ValidateRunConfig(v).empty());
  v.refinement = RefinementMode::kPropagationThreshold;
  CHECK_FALSE(ValidateRunConfig(v).empty());

  RunConfig m = DefaultRunConfig(Pipeline::kCmixup);
  CHECK(ValidateRunConfig(m).empty());
  m.cmixup.components = cmixup::ComponentFlags::Parse("decoder+projection");
  CHECK_FALSE(ValidateRunConfig(m).empty());  // two-step without classifier
  m.refinement = RefinementMode::kPropagationThreshold;
  CHECK(ValidateRunConfig(m).empty());
  m.cmixup.w_recon = 0.0;
  CHECK_FALSE(ValidateRunConfig(m).empty());

  RunConfig o = DefaultRunConfig(Pipeline::kVime);
  o.encoding = EncodingKind::kOneHot;
  CHECK_FALSE(ValidateRunConfig(o).empty());
  o.update_enabled = false;
  CHECK(ValidateRunConfig(o).empty());
  o.n_runs = 0;
  CHECK_FALSE(ValidateRunConfig(o).empty());
}

TEST_CASE("compare runs: mean and std") {
  ExperimentReport a, b;
  a.method = b.method = "m";
  a.final_test_accuracy = b.final_test_accuracy = 0.7;
  auto s = CompareRuns({a, b});
  REQUIRE(s.size() == 1);
  CHECK(s[0].std == 0.0);
  b.final_test_accuracy = 0.8;
  s = CompareRuns({a, b});
  CHECK(s[0].mean == doctest::Approx(0.75));
  CHECK(s[0].std == doctest::Approx(0.05));
  CHECK_THROWS_AS(CompareRuns({}), Error);
}

}  // namespace
}  // namespace pcpr::progressive
