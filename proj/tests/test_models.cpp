#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "pd4ml/errors.hpp"
#include "pd4ml/graph.hpp"
#include "pd4ml/models.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace pd4ml;
using pd4ml::testing::grad_check;
using pd4ml::testing::kMaxRelError;
using pd4ml::testing::perturb_buffers;
using pd4ml::testing::random_graph;
using pd4ml::testing::random_tensor;
using pd4ml::testing::randomize_biases;

namespace {

std::size_t graphnet_closed_form(std::size_t f, std::size_t w) { return f * w + 8 * w * w + 31 * w + 1; }

}  // namespace

TEST(ModelCounts, FcnClosedForm) {
  Rng rng(0);
  Model fcn(fcn_spec(400, Task::classification), rng);
  EXPECT_EQ(fcn.parameter_count(), 826'625u);
  EXPECT_EQ(fcn_parameter_count(400), 826'625u);
  EXPECT_EQ(fcn.buffer_count(), 0u);
  for (std::size_t d : {1u, 7u, 576u})
    for (std::size_t w : {1u, 5u, 64u}) {
      Model m(fcn_spec(d, Task::regression, w), rng);
      EXPECT_EQ(m.parameter_count(), fcn_parameter_count(d, w));
    }
}

TEST(ModelCounts, GraphNetClosedForm) {
  Rng rng(0);
  for (auto [n, f] : {std::pair<std::size_t, std::size_t>{200, 4}, {100, 514}, {400, 1}, {81, 81}}) {
    for (std::size_t w : {8u, 32u, 256u}) {
      Model m(graphnet_spec(n, f, Task::classification, w), rng);
      EXPECT_EQ(m.parameter_count(), graphnet_closed_form(f, w)) << n << "x" << f << " w" << w;
      EXPECT_EQ(m.buffer_count(), 12 * w);
    }
  }
}

TEST(ModelSpecs, LayerStack) {
  const ModelSpec f = fcn_spec(10, Task::classification);
  ASSERT_EQ(f.layers.size(), 13u);
  EXPECT_EQ(f.layers.back().activation, Activation::sigmoid);
  EXPECT_EQ(fcn_spec(10, Task::regression).layers.back().activation, Activation::linear);
  const ModelSpec g = graphnet_spec(5, 2, Task::classification);
  ASSERT_EQ(g.layers.size(), 11u);
  EXPECT_EQ(g.layers[6].kind, LayerKind::pool);
  EXPECT_DOUBLE_EQ(g.layers[9].dropout, 0.1);
  EXPECT_THROW(fcn_spec(0, Task::regression), ContractError);
  EXPECT_EQ(parse_model("graphnet"), ModelKind::graphnet);
  EXPECT_THROW(parse_model("cnn"), LookupError);
}

TEST(ModelForward, ShapeChecks) {
  Rng rng(1);
  Model g(graphnet_spec(4, 2, Task::classification, 8), rng);
  EXPECT_THROW(g.predict(Tensor({3, 5, 2})), DimensionError);
  Model f(fcn_spec(8, Task::classification, 8), rng);
  EXPECT_EQ(f.predict(Tensor({3, 4, 2})).shape(), (Shape{3, 1}));
  EXPECT_THROW(f.predict(Tensor({3, 9})), DimensionError);
}

TEST(ModelForward, SigmoidHeadInUnitInterval) {
  Rng rng(2);
  std::mt19937_64 g(2);
  Model f(fcn_spec(6, Task::classification, 16), rng);
  const Tensor out = f.predict(random_tensor({50, 6}, g, -5, 5));
  for (double v : out.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(ModelForward, InferenceIsPerSample) {
  Rng rng(3);
  std::mt19937_64 g(3);
  Model m(graphnet_spec(6, 3, Task::regression, 8), rng);
  perturb_buffers(m, g);
  const NormalizedAdjacency a = normalize(grid_adjacency(2, 3));
  const std::vector<const NormalizedAdjacency*> adj = {&a};
  const Tensor x = random_tensor({7, 6, 3}, g);
  const Tensor all = m.predict(x, adj);
  for (std::size_t b = 0; b < 7; ++b) EXPECT_NEAR(m.predict(x.slice_rows(b, b + 1), adj)[0], all[b], 1e-12);
}

TEST(ModelForward, GraphNetPermutationInvariant) {
  std::mt19937_64 g(4);
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(static_cast<std::uint64_t>(trial));
    const std::size_t n = 3 + trial % 8, f = 1 + trial % 3, batch = 2;
    Model m(graphnet_spec(n, f, Task::classification, 8), rng);
    perturb_buffers(m, g);
    std::vector<Adjacency> graphs;
    for (std::size_t b = 0; b < batch; ++b) graphs.push_back(random_graph(n, 0.4, g));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g);
    std::vector<std::size_t> inv(n);
    for (std::size_t i = 0; i < n; ++i) inv[perm[i]] = i;

    const Tensor x = random_tensor({batch, n, f}, g);
    Tensor xp(x.shape());
    std::vector<NormalizedAdjacency> na, np;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < f; ++k) xp.at(b, i, k) = x.at(b, perm[i], k);
      Adjacency pg(n);
      for (auto [i, j] : graphs[b].edges()) pg.connect(inv[i], inv[j]);
      na.push_back(normalize(graphs[b]));
      np.push_back(normalize(pg));
    }
    std::vector<const NormalizedAdjacency*> pa, pp;
    for (std::size_t b = 0; b < batch; ++b) pa.push_back(&na[b]), pp.push_back(&np[b]);
    const Tensor y = m.predict(x, pa), yp = m.predict(xp, pp);
    for (std::size_t b = 0; b < batch; ++b) EXPECT_LE(std::abs(y[b] - yp[b]), 1e-10) << trial;
  }
}

TEST(ModelGradients, FullModelsWidthEight) {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 g(900 + seed);
    {
      Rng rng(seed);
      Model m(fcn_spec(6, Task::classification, 8), rng);
      randomize_biases(m, g);
      const Tensor w = random_tensor({4, 1}, g);
      auto params = m.parameters();
      auto r = grad_check(
          [&](Tape&, auto& v) {
            Rng drop(seed);
            return ad::sum_all(ad::mul_constant(m.forward(v[0], {}, Mode::train, drop), w));
          },
          {random_tensor({4, 2, 3}, g)}, params);
      ASSERT_LT(r.max_rel_error, kMaxRelError) << "fcn seed " << seed << " " << r.worst;
    }
    {
      Rng rng(seed);
      Model m(graphnet_spec(5, 2, Task::regression, 8), rng);
      randomize_biases(m, g);
      NormalizedAdjacency a0 = normalize(random_graph(5, 0.5, g)), a1 = normalize(random_graph(5, 0.5, g)),
                          a2 = normalize(random_graph(5, 0.5, g));
      std::vector<const NormalizedAdjacency*> adj = {&a0, &a1, &a2};
      const Tensor w = random_tensor({3, 1}, g);
      auto params = m.parameters();
      auto r = grad_check(
          [&](Tape&, auto& v) {
            Rng drop(seed);
            auto y = m.forward(v[0], adj, Mode::train, drop);
            return ad::sum_all(ad::mul(ad::mul_constant(y, w), y));
          },
          {random_tensor({3, 5, 2}, g)}, params);
      ASSERT_LT(r.max_rel_error, kMaxRelError) << "graphnet seed " << seed << " " << r.worst;
    }
  }
}

TEST(ModelState, RoundTripAndMismatch) {
  Rng rng(5);
  std::mt19937_64 g(5);
  Model a(graphnet_spec(4, 2, Task::classification, 8), rng);
  Model b(graphnet_spec(4, 2, Task::classification, 8), rng);
  perturb_buffers(a, g);
  const Tensor x = random_tensor({3, 4, 2}, g);
  const NormalizedAdjacency adj = normalize(grid_adjacency(2, 2));
  const std::vector<const NormalizedAdjacency*> ptr = {&adj};
  EXPECT_NE(a.predict(x, ptr), b.predict(x, ptr));
  b.load_state(a.state());
  EXPECT_EQ(a.predict(x, ptr), b.predict(x, ptr));
  EXPECT_TRUE(a.state().count("l03.weight"));

  Model c(graphnet_spec(4, 2, Task::classification, 16), rng);
  EXPECT_THROW(c.load_state(a.state()), FormatError);
  TensorMap partial = a.state();
  partial.erase(partial.begin());
  EXPECT_THROW(b.load_state(partial), FormatError);
}

TEST(ModelInit, SameSeedSameWeights) {
  Rng r1(9), r2(9);
  Model a(fcn_spec(5, Task::classification, 8), r1), b(fcn_spec(5, Task::classification, 8), r2);
  EXPECT_EQ(a.state(), b.state());
}
