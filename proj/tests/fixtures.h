// Small encoded train/test matrices shared by the pipeline tests.
#ifndef PCPR_TESTS_FIXTURES_H_
#define PCPR_TESTS_FIXTURES_H_

#include <string>

#include "pcpr/data.h"
#include "pcpr/encoding.h"

namespace pcpr::testing {

struct EncodedSplit {
  TabularDataset ds;
  DataSplit split;
  Matrix labeled, unlabeled, test;
  LabelVector labeled_y, unlabeled_y, test_y;
};

inline EncodedSplit MakeEncodedSplit(std::int64_t rows, double labeled_fraction,
                                     std::uint64_t seed, int cardinality = 20) {
  SyntheticSpec spec = SyntheticPreset("small", seed);
  spec.n_rows = rows;
  spec.cardinality = cardinality;
  EncodedSplit out{SynthesizeDataset(spec), {}, {}, {}, {}, {}, {}, {}};
  out.split = MakeSplit(out.ds, SplitSpec{0.8, labeled_fraction, seed});
  out.ds = ApplyScaler(out.ds, FitScaler(out.ds, out.split.train()));
  out.labeled_y = GatherLabels(out.ds.labels(), out.split.labeled);
  out.unlabeled_y = GatherLabels(out.ds.labels(), out.split.unlabeled);
  out.test_y = GatherLabels(out.ds.labels(), out.split.test);
  const EncodingTable table =
      FitEncoding(EncodingKind::kCpr, out.ds, out.split.labeled, out.labeled_y, {});
  out.labeled = Encode(out.ds, out.split.labeled, table).values;
  out.unlabeled = Encode(out.ds, out.split.unlabeled, table).values;
  out.test = Encode(out.ds, out.split.test, table).values;
  return out;
}

}  // namespace pcpr::testing

#endif  // PCPR_TESTS_FIXTURES_H_
