#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "pd4ml/autodiff.hpp"
#include "pd4ml/errors.hpp"
#include "pd4ml/ops.hpp"
#include "support/gradcheck.hpp"

using namespace pd4ml;
using pd4ml::testing::grad_check;
using pd4ml::testing::kMaxRelError;
using pd4ml::testing::random_tensor;
using pd4ml::testing::random_tensor_off_zero;

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  std::mt19937_64 rng(1);
  Tensor m = random_tensor({2, 2}, rng);
  EXPECT_EQ(ops::matmul(Tensor::identity(2), m), m);
}

TEST(Matmul, SmallProduct) {
  Tensor out = ops::matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{1}, {1}}));
  EXPECT_EQ(out, Tensor::matrix({{3}, {7}}));
}

TEST(Matmul, MatchesTripleLoop) {
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    Tensor a = random_tensor({5, 4}, rng), b = random_tensor({4, 3}, rng);
    Tensor c = ops::matmul(a, b);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double ref = 0.0;
        for (std::size_t k = 0; k < 4; ++k) ref += a.at(i, k) * b.at(k, j);
        EXPECT_NEAR(c.at(i, j), ref, 1e-12);
      }
    Tensor tn = ops::matmul_tn(ops::transpose(a), b);
    Tensor nt = ops::matmul_nt(a, ops::transpose(b));
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_NEAR(tn[i], c[i], 1e-12);
      EXPECT_NEAR(nt[i], c[i], 1e-12);
    }
  }
}

TEST(Matmul, InnerExtentMismatchThrows) {
  EXPECT_THROW(ops::matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
  EXPECT_THROW(ops::matmul(Tensor({6}), Tensor({6, 1})), DimensionError);
}

TEST(Matmul, RightIdentityIsExact) {
  std::mt19937_64 rng(7);
  Tensor a = random_tensor({4, 6}, rng), b = random_tensor({6, 3}, rng);
  EXPECT_EQ(ops::matmul(ops::matmul(a, Tensor::identity(6)), b), ops::matmul(a, b));
}

TEST(Elementwise, AddZeroAndLogE) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({3, 2}, rng);
  EXPECT_EQ(ops::ew(ops::Ew::add, x, 0.0), x);
  EXPECT_EQ(ops::ew(ops::Ew::add, x, Tensor::scalar(0.0)), x);
  EXPECT_DOUBLE_EQ(ops::ew(ops::Ew::log, Tensor::scalar(std::numbers::e)).item(), 1.0);
}

TEST(Elementwise, ShapeMismatchAndDomainErrors) {
  EXPECT_THROW(ops::ew(ops::Ew::mul, Tensor({2, 2}), Tensor({4})), DimensionError);
  EXPECT_THROW(ops::ew(ops::Ew::log, Tensor::vector({1.0, 0.0})), DomainError);
  EXPECT_THROW(ops::ew(ops::Ew::log, Tensor::vector({-2.0})), DomainError);
  EXPECT_EQ(ops::ew(ops::Ew::max0, Tensor::vector({-1.0, 2.0})), Tensor::vector({0.0, 2.0}));
}

TEST(Reduce, Examples) {
  EXPECT_EQ(ops::reduce(ops::Reduce::mean, Tensor::matrix({{1, 3}, {5, 7}}), 0), Tensor::vector({3, 5}));
  EXPECT_EQ(ops::reduce_all(ops::Reduce::sum, Tensor({4, 3})).item(), 0.0);
  EXPECT_EQ(ops::reduce(ops::Reduce::max, Tensor::vector({2, 9, 4}), 0).item(), 9.0);
  EXPECT_THROW(ops::reduce(ops::Reduce::sum, Tensor({2, 2}), 2), DimensionError);
}

TEST(Reduce, MeanOfConstantIsConstant) {
  Tensor c({3, 5, 2}, 0.37);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    const Tensor m = ops::reduce(ops::Reduce::mean, c, axis);
    for (double v : m.data()) EXPECT_EQ(v, 0.37);
  }
  EXPECT_EQ(ops::reduce_all(ops::Reduce::mean, c).item(), 0.37);
}

TEST(Backward, SumGivesOnes) {
  Tape t;
  Var x = t.input(Tensor::vector({0.5, -1.0, 2.0}));
  t.backward(ad::sum_all(x));
  EXPECT_EQ(t.grad(x), Tensor::vector({1, 1, 1}));
}

TEST(Backward, SumOfSquares) {
  Tape t;
  Var x = t.input(Tensor::vector({1, 2}));
  t.backward(ad::sum_all(ad::mul(x, x)));
  EXPECT_EQ(t.grad(x), Tensor::vector({2, 4}));
}

TEST(Backward, NonScalarLossThrows) {
  Tape t;
  Var x = t.input(Tensor::vector({1, 2}));
  EXPECT_THROW(t.backward(ad::scale(x, 2.0)), ContractError);
}

TEST(Backward, ParameterGradientAccumulatesAcrossUses) {
  Parameter p("p", Tensor::vector({3.0}));
  Tape t;
  Var a = t.parameter(p);
  Var b = t.parameter(p);
  t.backward(ad::sum_all(ad::mul(a, b)));
  EXPECT_DOUBLE_EQ(p.grad[0], 6.0);
  p.zero_grad();
  t.clear();
  EXPECT_EQ(t.size(), 0u);
}

TEST(Backward, NonTrainableParameterGetsNoGradient) {
  Parameter p("frozen", Tensor::vector({1.0, 2.0}), false);
  Tape t;
  Var v = t.parameter(p);
  t.backward(ad::sum_all(ad::mul(v, v)));
  EXPECT_EQ(p.grad, Tensor({2}));
}

// Every primitive against central differences, 100 seeds each.
TEST(GradientCheck, EveryPrimitive) {
  using pd4ml::testing::LossFn;
  struct Case {
    const char* name;
    LossFn f;
    std::vector<Shape> shapes;
    bool off_zero = false;
    bool positive = false;
  };
  const Tensor weights = [] {
    std::mt19937_64 r(99);
    return random_tensor({3, 4}, r);
  }();
  std::vector<Case> cases = {
      {"matmul", [](Tape&, auto& v) { return ad::sum_all(ad::mul(ad::matmul(v[0], v[1]), ad::matmul(v[0], v[1]))); },
       {{3, 4}, {4, 2}}},
      {"add", [](Tape&, auto& v) { return ad::sum_all(ad::mul(ad::add(v[0], v[1]), v[0])); }, {{3, 4}, {3, 4}}},
      {"add_scalar_tensor", [](Tape&, auto& v) { return ad::sum_all(ad::mul(ad::add(v[0], v[1]), v[0])); },
       {{3, 4}, {}}},
      {"sub", [](Tape&, auto& v) { return ad::sum_all(ad::mul(ad::sub(v[0], v[1]), v[1])); }, {{2, 5}, {2, 5}}},
      {"mul", [](Tape&, auto& v) { return ad::sum_all(ad::mul(ad::mul(v[0], v[1]), v[0])); }, {{6}, {6}}},
      {"scale", [](Tape&, auto& v) { return ad::sum_all(ad::mul(ad::scale(v[0], -1.7), v[0])); }, {{4, 2}}},
      {"add_scalar", [](Tape&, auto& v) { return ad::sum_all(ad::mul(ad::add_scalar(v[0], 0.3), v[0])); }, {{5}}},
      {"log", [](Tape&, auto& v) { return ad::sum_all(ad::mul(ad::log(v[0]), v[0])); }, {{3, 3}}, false, true},
      {"exp", [](Tape&, auto& v) { return ad::sum_all(ad::mul(ad::exp(v[0]), v[0])); }, {{3, 3}}},
      {"max0", [](Tape&, auto& v) { return ad::sum_all(ad::mul(ad::relu(v[0]), v[0])); }, {{4, 4}}, true},
      {"sigmoid", [](Tape&, auto& v) { return ad::sum_all(ad::mul(ad::sigmoid(v[0]), v[0])); }, {{7}}},
      {"reduce_sum", [](Tape&, auto& v) { auto r = ad::sum(v[0], 1); return ad::sum_all(ad::mul(r, r)); },
       {{2, 3, 4}}},
      {"reduce_mean", [](Tape&, auto& v) { auto r = ad::mean(v[0], 0); return ad::sum_all(ad::mul(r, r)); },
       {{3, 4}}},
      {"reduce_max", [](Tape&, auto& v) { auto r = ad::max(v[0], 2); return ad::sum_all(ad::mul(r, r)); },
       {{2, 2, 5}}, true},
      {"mean_all", [](Tape&, auto& v) { auto r = ad::mean_all(ad::mul(v[0], v[0])); return ad::mul(r, r); }, {{3, 2}}},
      {"reshape", [](Tape&, auto& v) { return ad::sum_all(ad::matmul(ad::reshape(v[0], {2, 6}), v[1])); },
       {{3, 4}, {6, 1}}},
      {"add_row_vector",
       [](Tape&, auto& v) { auto r = ad::add_row_vector(v[0], v[1]); return ad::sum_all(ad::mul(r, r)); },
       {{2, 3, 4}, {4}}},
      {"mul_constant",
       [&weights](Tape&, auto& v) { auto r = ad::mul_constant(v[0], weights); return ad::sum_all(ad::mul(r, r)); },
       {{3, 4}}},
  };
  for (const auto& c : cases) {
    double worst = 0.0;
    for (int seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed);
      std::vector<Tensor> inputs;
      for (const auto& s : c.shapes) {
        if (c.positive) inputs.push_back(random_tensor(s, rng, 0.2, 2.0));
        else if (c.off_zero) inputs.push_back(random_tensor_off_zero(s, rng));
        else inputs.push_back(random_tensor(s, rng));
      }
      auto r = grad_check(c.f, inputs);
      worst = std::max(worst, r.max_rel_error);
      ASSERT_LT(r.max_rel_error, kMaxRelError) << c.name << " seed " << seed << ": " << r.worst;
    }
    RecordProperty(c.name, std::to_string(worst));
  }
}

TEST(GradientCheck, CompositeGraph) {
  for (int seed = 0; seed < 100; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    auto f = [](Tape&, const std::vector<Var>& v) {
      Var h = ad::sigmoid(ad::add_row_vector(ad::matmul(v[0], v[1]), v[2]));
      Var z = ad::exp(ad::scale(ad::matmul(h, v[3]), 0.5));
      return ad::mean_all(ad::log(ad::add_scalar(z, 1.0)));
    };
    auto r = grad_check(f, {random_tensor({4, 3}, rng), random_tensor({3, 5}, rng), random_tensor({5}, rng),
                            random_tensor({5, 2}, rng)});
    ASSERT_LT(r.max_rel_error, kMaxRelError) << "seed " << seed << ": " << r.worst;
  }
}

TEST(TapeContract, MixingTapesThrows) {
  Tape a, b;
  Var x = a.input(Tensor::vector({1}));
  Var y = b.input(Tensor::vector({1}));
  EXPECT_THROW(ad::add(x, y), ContractError);
}

TEST(TapeContract, NonRecordingTapeKeepsValuesOnly) {
  Tape t(false);
  Var x = t.input(Tensor::vector({1, 2}));
  Var y = ad::sum_all(ad::mul(x, x));
  EXPECT_DOUBLE_EQ(y.value().item(), 5.0);
  EXPECT_FALSE(t.requires_grad(y));
}

// The oracle itself must reject a gradient that is off by one percent.
TEST(GradientCheck, FlagsWrongGradient) {
  std::mt19937_64 rng(3);
  auto skewed_square = [](const Var& a) {
    const std::size_t ia = a.id();
    Tensor v = a.value();
    for (double& x : v.data()) x *= x;
    return a.tape().record(std::move(v), {a}, [ia](Tape& t, std::size_t self) {
      Tensor g = t.upstream(self);
      const Tensor& x = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= 2.02 * x[i];
      t.accumulate(ia, g);
    });
  };
  const auto r = grad_check([&](Tape&, auto& v) { return ad::sum_all(skewed_square(v[0])); },
                            {random_tensor_off_zero({4, 3}, rng)});
  EXPECT_GT(r.max_rel_error, kMaxRelError);
}
