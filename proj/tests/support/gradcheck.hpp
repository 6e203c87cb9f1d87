#pragma once

// Central finite-difference oracle for gradient tests. Independent of the
// tape: it only evaluates the forward function on perturbed copies.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "pd4ml/autodiff.hpp"

namespace pd4ml::testing {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kMaxRelError = 1e-4;

// |a - n| / max(|a|, |n|, floor). The floor keeps near-zero components from
// turning rounding noise into a relative error.
inline double relative_error(double analytic, double numeric, double floor = 1e-4) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "input k [i]" or parameter name
  std::size_t kink_retries = 0;
};

// f builds a scalar loss from tape inputs. It must be deterministic
// (reseed any RNG inside).
using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

inline double eval_loss(const LossFn& f, const std::vector<Tensor>& inputs) {
  Tape tape(false);
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.constant(t));
  return f(tape, vars).value().item();
}

// Checks d loss / d inputs and d loss / d params (params mutated in place
// during probing, restored afterwards).
inline GradCheckResult grad_check(const LossFn& f, std::vector<Tensor> inputs,
                                  const std::vector<Parameter*>& params = {}) {
  for (auto* p : params) p->zero_grad();
  Tape tape;
  std::vector<Var> vars;
  for (const auto& t : inputs) vars.push_back(tape.input(t));
  Var loss = f(tape, vars);
  tape.backward(loss);
  std::vector<Tensor> analytic;
  for (const auto& v : vars) analytic.push_back(tape.grad(v));

  GradCheckResult r;
  // A failing coordinate is retried with other steps: smaller ones for a
  // central difference straddling a ReLU/PReLU kink, a larger one where
  // rounding noise swamps a near-zero derivative. A wrong gradient disagrees
  // at every step.
  auto probe = [&](double& slot, double a, const std::string& where) {
    const double orig = slot;
    double best = std::numeric_limits<double>::infinity(), numeric = 0.0;
    for (double h : {kFdStep, kFdStep * 10, kFdStep / 10, kFdStep / 100}) {
      slot = orig + h;
      const double up = eval_loss(f, inputs);
      slot = orig - h;
      const double down = eval_loss(f, inputs);
      slot = orig;
      const double n = (up - down) / (2 * h);
      const double e = relative_error(a, n);
      if (e < best) best = e, numeric = n;
      if (best < kMaxRelError) break;
      ++r.kink_retries;
    }
    if (best > r.max_rel_error) {
      r.max_rel_error = best;
      r.worst = where + " analytic=" + std::to_string(a) + " numeric=" + std::to_string(numeric);
    }
  };
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].size(); ++i)
      probe(inputs[k][i], analytic[k][i], "input " + std::to_string(k) + "[" + std::to_string(i) + "]");
  for (auto* p : params) {
    if (!p->trainable) continue;
    const Tensor g = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) probe(p->value[i], g[i], p->name + "[" + std::to_string(i) + "]");
  }
  return r;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = d(rng);
  return t;
}

// Values bounded away from zero, for kinked functions (relu, prelu, max).
inline Tensor random_tensor_off_zero(Shape shape, std::mt19937_64& rng, double min_abs = 0.05) {
  std::uniform_real_distribution<double> d(min_abs, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = sign(rng) ? d(rng) : -d(rng);
  return t;
}

}  // namespace pd4ml::testing
