#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "pd4ml/codec.hpp"
#include "pd4ml/errors.hpp"
#include "pd4ml/metrics.hpp"
#include "pd4ml/synth.hpp"

using namespace pd4ml;
using namespace pd4ml::synth;

namespace {

constexpr SynthKind kAllKinds[] = {SynthKind::toptag, SynthKind::decay, SynthKind::grid20, SynthKind::grid24,
                                   SynthKind::shower};

double pearson(const std::vector<double>& a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n, mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST(Synth, SameSeedIsByteIdentical) {
  for (SynthKind k : kAllKinds) {
    const SynthData a = synth_generate(k, {12, 10, 11}, 42);
    const SynthData b = synth_generate(k, {12, 10, 11}, 42);
    const SynthData c = synth_generate(k, {12, 10, 11}, 43);
    for (Split s : kAllSplits) EXPECT_EQ(encode(split_tensors(a.of(s))), encode(split_tensors(b.of(s))));
    EXPECT_NE(a.train.x, c.train.x) << synth_kind_name(k);
  }
}

TEST(Synth, ShapesMatchRegisteredLayout) {
  for (SynthKind k : kAllKinds) {
    const SynthData d = synth_generate(k, {10, 10, 10}, 1);
    const auto& desc = registry_lookup(synth_dataset(k));
    const Shape tail(d.train.x.shape().begin() + 1, d.train.x.shape().end());
    EXPECT_EQ(tail, desc.sample_shape) << synth_kind_name(k);
    EXPECT_EQ(d.train.mother.has_value(), k == SynthKind::decay);
    EXPECT_NO_THROW(validate_split(d.train, desc.task, synth_kind_name(k)));
    for (double v : d.train.x.data()) ASSERT_EQ(v, static_cast<double>(static_cast<float>(v)));
  }
}

TEST(Synth, ClassesAreBalanced) {
  for (SynthKind k : {SynthKind::toptag, SynthKind::decay, SynthKind::grid20, SynthKind::grid24}) {
    const SynthData d = synth_generate(k, {101, 20, 33}, 7);
    for (Split s : kAllSplits) {
      double ones = 0;
      for (double v : d.of(s).y.data()) ones += v;
      EXPECT_EQ(ones, static_cast<double>(d.of(s).y.size() / 2));
    }
  }
}

TEST(Synth, TooSmallSplitIsContractError) {
  EXPECT_THROW(synth_generate(SynthKind::grid20, {9, 10, 10}, 1), ContractError);
  EXPECT_THROW(parse_synth_kind("grid30-like"), LookupError);
  EXPECT_EQ(parse_synth_kind("shower-like"), SynthKind::shower);
}

// Depth-2 rule: locate the brightest 3x3 window, then threshold its sum.
TEST(SynthOracle, GridBlobIsLearnable) {
  for (SynthKind k : {SynthKind::grid20, SynthKind::grid24}) {
    const SplitData d = synth_generate(k, {1000, 10, 10}, 11).train;
    const std::size_t rows = d.x.shape()[1], cols = d.x.shape()[2];
    std::vector<double> score(d.y.size());
    for (std::size_t s = 0; s < d.y.size(); ++s) {
      double best = -1e300;
      for (std::size_t r = 0; r + kBlobSide <= rows; ++r)
        for (std::size_t c = 0; c + kBlobSide <= cols; ++c) {
          double sum = 0;
          for (std::size_t i = 0; i < kBlobSide; ++i)
            for (std::size_t j = 0; j < kBlobSide; ++j) sum += d.x.at(s, r + i, c + j);
          best = std::max(best, sum);
        }
      score[s] = best;
    }
    EXPECT_GT(auc(score, d.y.data()), 0.9) << synth_kind_name(k);
  }
}

TEST(SynthOracle, GridSinglePixelsCarryLittleSignal) {
  const SplitData d = synth_generate(SynthKind::grid20, {2000, 10, 10}, 12).train;
  std::vector<double> score(d.y.size());
  for (std::size_t s = 0; s < d.y.size(); ++s) score[s] = d.x.at(s, 10, 10);
  EXPECT_NEAR(auc(score, d.y.data()), 0.5, 0.05);
}

TEST(SynthOracle, TopTagJetMassSeparatesProngs) {
  const SplitData d = synth_generate(SynthKind::toptag, {1000, 10, 10}, 13).train;
  std::vector<double> mass(d.y.size());
  for (std::size_t s = 0; s < d.y.size(); ++s) {
    double e = 0, px = 0, py = 0, pz = 0;
    for (std::size_t i = 0; i < 200; ++i) {
      e += d.x.at(s, i, 0), px += d.x.at(s, i, 1), py += d.x.at(s, i, 2), pz += d.x.at(s, i, 3);
    }
    mass[s] = std::sqrt(std::max(0.0, e * e - px * px - py * py - pz * pz));
  }
  EXPECT_GT(auc(mass, d.y.data()), 0.9);
}

TEST(SynthOracle, DecayMotifDeterminesLabel) {
  const SplitData d = synth_generate(SynthKind::decay, {500, 10, 10}, 14).train;
  for (std::size_t s = 0; s < d.y.size(); ++s) {
    int signal_under_parent = 0, decoy_under_parent = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      const double m = d.mother->at(s, i);
      if (m < 0) continue;
      const bool parent = d.x.at(s, static_cast<std::size_t>(m), 0) == kMotifParent;
      if (parent && d.x.at(s, i, 0) == kMotifSignal) ++signal_under_parent;
      if (parent && d.x.at(s, i, 0) == kMotifDecoy) ++decoy_under_parent;
    }
    EXPECT_EQ(signal_under_parent + decoy_under_parent, 1);
    EXPECT_EQ(signal_under_parent, static_cast<int>(d.y[s])) << s;
  }
}

TEST(SynthOracle, DecayTreeIsWellFormed) {
  const SplitData d = synth_generate(SynthKind::decay, {50, 10, 10}, 15).train;
  for (std::size_t s = 0; s < d.y.size(); ++s) {
    EXPECT_EQ(d.x.at(s, 0, 0), 1.0);
    EXPECT_EQ(d.mother->at(s, 0), -1.0);
    for (std::size_t i = 1; i < 100; ++i) {
      const bool real = d.x.at(s, i, 0) != 0.0;
      EXPECT_EQ(d.mother->at(s, i) >= 0, real);
      if (real) {
        const auto m = static_cast<std::size_t>(d.mother->at(s, i));
        EXPECT_NE(d.x.at(s, m, 0), 0.0);
        EXPECT_NE(m, i);
      }
    }
  }
}

// Pulse peak of the brightest station tracks the target depth.
TEST(SynthOracle, ShowerPulseWidthTracksDepth) {
  const SplitData d = synth_generate(SynthKind::shower, {500, 10, 10}, 16).train;
  std::vector<double> peak(d.y.size());
  for (std::size_t s = 0; s < d.y.size(); ++s) {
    double best_total = -1;
    std::size_t best_station = 0;
    for (std::size_t st = 0; st < 81; ++st) {
      double total = 0;
      for (std::size_t t = 0; t < kShowerBins; ++t) total += d.x.at(s, st, t);
      if (total > best_total) best_total = total, best_station = st;
    }
    double mean_t = 0;
    for (std::size_t t = 0; t < kShowerBins; ++t) mean_t += static_cast<double>(t) * d.x.at(s, best_station, t);
    peak[s] = mean_t / best_total;
  }
  EXPECT_GT(pearson(peak, d.y.data()), 0.9);
  for (double v : d.y.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}
