#include "pd4ml/layers.hpp"

#include <cmath>
#include <memory>
#include <vector>

#include "pd4ml/errors.hpp"

namespace pd4ml {

Parameter& LayerParams::at(const std::string& key) {
  auto it = extra.find(key);
  if (it == extra.end()) throw ContractError("layer has no parameter '" + key + "'");
  return it->second;
}

const Parameter& LayerParams::at(const std::string& key) const {
  auto it = extra.find(key);
  if (it == extra.end()) throw ContractError("layer has no parameter '" + key + "'");
  return it->second;
}

LayerParams make_affine_params(const std::string& prefix, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  if (fan_in == 0 || fan_out == 0) throw ContractError("affine layer with zero fan-in or fan-out");
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Tensor w({fan_in, fan_out});
  for (auto& v : w.data()) v = dist(rng);
  LayerParams p;
  p.weight = Parameter(prefix + ".weight", std::move(w));
  p.bias = Parameter(prefix + ".bias", Tensor({fan_out}));
  return p;
}

void add_prelu_params(LayerParams& p, const std::string& prefix, std::size_t channels) {
  p.extra["alpha"] = Parameter(prefix + ".alpha", Tensor({channels}, kPReLUInitialSlope));
}

void add_batch_norm_params(LayerParams& p, const std::string& prefix, std::size_t channels) {
  p.extra["bn_gamma"] = Parameter(prefix + ".bn_gamma", Tensor({channels}, 1.0));
  p.extra["bn_beta"] = Parameter(prefix + ".bn_beta", Tensor({channels}, 0.0));
  p.extra["bn_mean"] = Parameter(prefix + ".bn_mean", Tensor({channels}, 0.0), false);
  p.extra["bn_var"] = Parameter(prefix + ".bn_var", Tensor({channels}, 1.0), false);
}

namespace {

void require_fan_in(const Shape& x, const LayerParams& p, const char* layer) {
  if (p.weight.value.rank() != 2 || x.empty() || x.back() != p.weight.value.shape()[0]) {
    throw DimensionError(std::string(layer) + ": input " + shape_string(x) + " does not match weight " +
                         shape_string(p.weight.value.shape()));
  }
}

}  // namespace

Var dense(const Var& x, LayerParams& p) {
  if (x.value().rank() != 2) throw DimensionError("dense: expected [B x D], got " + shape_string(x.shape()));
  require_fan_in(x.shape(), p, "dense");
  Tape& t = x.tape();
  return ad::add_row_vector(ad::matmul(x, t.parameter(p.weight)), t.parameter(p.bias));
}

Var shared_node_dense(const Var& x, LayerParams& p) {
  if (x.value().rank() != 3) {
    throw DimensionError("shared_node_dense: expected [B x N x F], got " + shape_string(x.shape()));
  }
  require_fan_in(x.shape(), p, "shared_node_dense");
  const std::size_t b = x.shape()[0], n = x.shape()[1], f = x.shape()[2];
  Var flat = ad::reshape(x, {b * n, f});
  Var y = dense(flat, p);
  return ad::reshape(y, {b, n, p.weight.value.shape()[1]});
}

Var propagate(const Var& x, std::span<const NormalizedAdjacency* const> adjacency) {
  if (x.value().rank() != 3) throw DimensionError("propagate: expected [B x N x F], got " + shape_string(x.shape()));
  const std::size_t b = x.shape()[0], n = x.shape()[1], f = x.shape()[2];
  if (adjacency.size() != 1 && adjacency.size() != b) {
    throw DimensionError("propagate: " + std::to_string(adjacency.size()) + " adjacencies for batch of " +
                         std::to_string(b));
  }
  for (const auto* a : adjacency) {
    if (a == nullptr || a->size() != n) {
      throw DimensionError("propagate: adjacency size " + std::to_string(a ? a->size() : 0) +
                           " does not match node axis " + std::to_string(n));
    }
  }
  std::vector<const NormalizedAdjacency*> adj(adjacency.begin(), adjacency.end());
  Tensor out(x.shape());
  const double* in = x.value().data().data();
  for (std::size_t s = 0; s < b; ++s) {
    const NormalizedAdjacency& a = *adj[adj.size() == 1 ? 0 : s];
    a.multiply(in + s * n * f, out.data().data() + s * n * f, f);
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, adj = std::move(adj), b, n, f](Tape& t, std::size_t self) {
    const double* g = t.upstream(self).data().data();
    double* gx = t.grad_buffer(ix).data().data();
    for (std::size_t s = 0; s < b; ++s) {
      const NormalizedAdjacency& a = *adj[adj.size() == 1 ? 0 : s];
      a.multiply_transposed_add(g + s * n * f, gx + s * n * f, f);
    }
  });
}

Var graph_conv(const Var& x, std::span<const NormalizedAdjacency* const> adjacency, LayerParams& p) {
  return shared_node_dense(propagate(x, adjacency), p);
}

Var batch_norm(const Var& x, LayerParams& p, Mode mode) {
  if (x.value().rank() < 2) throw DimensionError("batch_norm: expected a batched input");
  Parameter& gamma = p.at("bn_gamma");
  Parameter& beta = p.at("bn_beta");
  Parameter& running_mean = p.at("bn_mean");
  Parameter& running_var = p.at("bn_var");
  const std::size_t c = x.shape().back();
  if (gamma.value.size() != c) {
    throw DimensionError("batch_norm: " + std::to_string(c) + " channels, parameters for " +
                         std::to_string(gamma.value.size()));
  }
  const std::size_t batch = x.shape()[0];
  const std::size_t rows = x.value().size() / c;
  const auto xv = x.value().data();

  std::vector<double> mean(c, 0.0), inv_std(c, 0.0);
  if (mode == Mode::train) {
    if (batch < 2) throw ContractError("batch_norm: train mode needs a batch of at least 2");
    std::vector<double> var(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < c; ++k) mean[k] += xv[r * c + k];
    for (auto& m : mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < c; ++k) {
        const double d = xv[r * c + k] - mean[k];
        var[k] += d * d;
      }
    auto rm = running_mean.value.data();
    auto rv = running_var.value.data();
    const double unbiased = static_cast<double>(rows) / static_cast<double>(rows - 1);
    for (std::size_t k = 0; k < c; ++k) {
      var[k] /= static_cast<double>(rows);
      inv_std[k] = 1.0 / std::sqrt(var[k] + kBatchNormEpsilon);
      rm[k] = kBatchNormMomentum * rm[k] + (1.0 - kBatchNormMomentum) * mean[k];
      rv[k] = kBatchNormMomentum * rv[k] + (1.0 - kBatchNormMomentum) * var[k] * unbiased;
    }
  } else {
    auto rm = running_mean.value.data();
    auto rv = running_var.value.data();
    for (std::size_t k = 0; k < c; ++k) {
      mean[k] = rm[k];
      inv_std[k] = 1.0 / std::sqrt(rv[k] + kBatchNormEpsilon);
    }
  }

  auto xhat = std::make_shared<Tensor>(x.shape());
  Tensor out(x.shape());
  {
    auto xh = xhat->data();
    auto o = out.data();
    auto gv = gamma.value.data();
    auto bv = beta.value.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < c; ++k) {
        const std::size_t i = r * c + k;
        xh[i] = (xv[i] - mean[k]) * inv_std[k];
        o[i] = gv[k] * xh[i] + bv[k];
      }
  }

  Tape& t = x.tape();
  Var g = t.parameter(gamma);
  Var bt = t.parameter(beta);
  const std::size_t ix = x.id(), ig = g.id(), ib = bt.id();
  const bool train = mode == Mode::train;
  return t.record(std::move(out), {x, g, bt},
                  [ix, ig, ib, c, rows, train, xhat, inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
                    const auto dy = tp.upstream(self).data();
                    const auto xh = xhat->data();
                    const auto gv = tp.value(ig).data();
                    std::vector<double> sum_dy(c, 0.0), sum_dy_xh(c, 0.0);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t k = 0; k < c; ++k) {
                        sum_dy[k] += dy[r * c + k];
                        sum_dy_xh[k] += dy[r * c + k] * xh[r * c + k];
                      }
                    if (tp.requires_grad(ig)) {
                      auto dg = tp.grad_buffer(ig).data();
                      for (std::size_t k = 0; k < c; ++k) dg[k] += sum_dy_xh[k];
                    }
                    if (tp.requires_grad(ib)) {
                      auto db = tp.grad_buffer(ib).data();
                      for (std::size_t k = 0; k < c; ++k) db[k] += sum_dy[k];
                    }
                    if (!tp.requires_grad(ix)) return;
                    auto dx = tp.grad_buffer(ix).data();
                    const double m = static_cast<double>(rows);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t k = 0; k < c; ++k) {
                        const std::size_t i = r * c + k;
                        const double dxh = dy[i] * gv[k];
                        if (train) {
                          dx[i] += inv_std[k] / m *
                                   (m * dxh - gv[k] * sum_dy[k] - xh[i] * gv[k] * sum_dy_xh[k]);
                        } else {
                          dx[i] += dxh * inv_std[k];
                        }
                      }
                  });
}

Var dropout(const Var& x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout: rate must lie in [0, 1)");
  if (mode == Mode::infer || rate == 0.0) return x;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(x.shape());
  for (auto& m : mask.data()) m = u(rng) < rate ? 0.0 : keep_scale;
  return ad::mul_constant(x, mask);
}

Var prelu(const Var& x, Parameter& alpha) {
  const std::size_t c = alpha.value.size();
  if (alpha.value.rank() != 1 || x.value().rank() == 0 || x.shape().back() != c) {
    throw DimensionError("prelu: slopes " + shape_string(alpha.value.shape()) + " for input " +
                         shape_string(x.shape()));
  }
  Tape& t = x.tape();
  Var a = t.parameter(alpha);
  Tensor out(x.shape());
  const auto xv = x.value().data();
  const auto av = a.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] > 0.0 ? xv[i] : av[i % c] * xv[i];
  const std::size_t ix = x.id(), ia = a.id();
  return t.record(std::move(out), {x, a}, [ix, ia, c](Tape& tp, std::size_t self) {
    const auto g = tp.upstream(self).data();
    const auto xv2 = tp.value(ix).data();
    const auto av2 = tp.value(ia).data();
    if (tp.requires_grad(ix)) {
      auto dx = tp.grad_buffer(ix).data();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += xv2[i] > 0.0 ? g[i] : av2[i % c] * g[i];
    }
    if (tp.requires_grad(ia)) {
      auto da = tp.grad_buffer(ia).data();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!(xv2[i] > 0.0)) da[i % c] += g[i] * xv2[i];
    }
  });
}

Var relu(const Var& x) { return ad::relu(x); }

Var sigmoid(const Var& x) { return ad::sigmoid(x); }

Var global_average_pool(const Var& x) {
  if (x.value().rank() != 3) {
    throw DimensionError("global_average_pool: expected [B x N x F], got " + shape_string(x.shape()));
  }
  if (x.shape()[1] == 0) throw ContractError("global_average_pool: no nodes to pool");
  return ad::mean(x, 1);
}

}  // namespace pd4ml
