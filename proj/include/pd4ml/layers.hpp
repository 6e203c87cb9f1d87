#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <span>
#include <string>

#include "pd4ml/autodiff.hpp"
#include "pd4ml/graph.hpp"
#include "pd4ml/random.hpp"

namespace pd4ml {

enum class Mode { train, infer };

// Batch-norm constants, held fixed for reproducibility.
inline constexpr double kBatchNormMomentum = 0.99;
inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kPReLUInitialSlope = 0.25;

// Parameters of one layer. `extra` holds the optional pieces:
//   "alpha"                         PReLU slopes, one per output channel
//   "bn_gamma", "bn_beta"           batch-norm scale and shift
//   "bn_mean", "bn_var"             batch-norm running statistics (non-trainable)
struct LayerParams {
  Parameter weight;
  Parameter bias;
  std::map<std::string, Parameter> extra;

  Parameter& at(const std::string& key);
  const Parameter& at(const std::string& key) const;
  bool has(const std::string& key) const { return extra.count(key) != 0; }
};

// Glorot-uniform weight [fan_in x fan_out], zero bias.
LayerParams make_affine_params(const std::string& prefix, std::size_t fan_in, std::size_t fan_out, Rng& rng);
void add_prelu_params(LayerParams& p, const std::string& prefix, std::size_t channels);
void add_batch_norm_params(LayerParams& p, const std::string& prefix, std::size_t channels);

// x[B x D_in] * W + b
Var dense(const Var& x, LayerParams& p);
// Same affine map applied to every node row of x[B x N x F_in].
Var shared_node_dense(const Var& x, LayerParams& p);
// out[b] = adj[b] * x[b] for x[B x N x F]. A single adjacency is shared by
// the whole batch; otherwise one per batch element.
Var propagate(const Var& x, std::span<const NormalizedAdjacency* const> adjacency);
// adj * x * W + b per batch element.
Var graph_conv(const Var& x, std::span<const NormalizedAdjacency* const> adjacency, LayerParams& p);

// Normalizes every trailing-axis channel over all leading axes. Train mode
// uses batch statistics and updates the running ones; infer mode uses the
// running statistics only.
Var batch_norm(const Var& x, LayerParams& p, Mode mode);

// Inverted dropout: survivors are scaled by 1 / (1 - rate).
Var dropout(const Var& x, double rate, Mode mode, Rng& rng);

Var prelu(const Var& x, Parameter& alpha);
Var relu(const Var& x);
Var sigmoid(const Var& x);

// Mean over the node axis of x[B x N x F]; padded slots are not masked.
Var global_average_pool(const Var& x);

}  // namespace pd4ml
