#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pd4ml/autodiff.hpp"
#include "pd4ml/codec.hpp"
#include "pd4ml/datasets.hpp"
#include "pd4ml/graph.hpp"
#include "pd4ml/layers.hpp"

namespace pd4ml {

enum class ModelKind { fcn, graphnet };
enum class LayerKind { dense, node_dense, graph_conv, pool };
enum class Activation { linear, relu, prelu, sigmoid };

const char* model_name(ModelKind k);
ModelKind parse_model(const std::string& s);

inline constexpr std::size_t kHiddenWidth = 256;
inline constexpr std::size_t kFcnHiddenLayers = 12;

struct LayerSpec {
  LayerKind kind;
  std::size_t width = 0;  // output features; unused for pool
  Activation activation = Activation::linear;
  bool batch_norm = false;
  double dropout = 0.0;
};

struct ModelSpec {
  ModelKind kind;
  Task task;
  std::size_t nodes = 0;     // input nodes (1 for flat inputs)
  std::size_t features = 0;  // features per node
  std::vector<LayerSpec> layers;
};

// 12 x (dense, ReLU) then a one-unit head. Inputs are flattened row-major.
ModelSpec fcn_spec(std::size_t input_dim, Task task, std::size_t width = kHiddenWidth);
// 3 node-wise dense, 3 graph conv (batch norm + dropout 0.2), pooling,
// 3 dense (batch norm + dropout 0.2, 0.2, 0.1), head; PReLU throughout.
// `width` below the default is a test-only configuration.
ModelSpec graphnet_spec(std::size_t nodes, std::size_t features, Task task, std::size_t width = kHiddenWidth);

class Model {
 public:
  // Parameters are drawn from rng in layer order.
  Model(ModelSpec spec, Rng& rng);

  const ModelSpec& spec() const { return spec_; }

  // x is [B x N x F] (flat models also take [B x D]). adjacency holds one
  // shared matrix or one per sample; unused by the FCN. Output [B x 1].
  Var forward(const Var& x, std::span<const NormalizedAdjacency* const> adjacency, Mode mode, Rng& rng);
  // Inference-mode forward on a non-recording tape.
  Tensor predict(const Tensor& x, std::span<const NormalizedAdjacency* const> adjacency = {});

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<Parameter*> trainable();
  // Scalar counts of trainable values and of non-trainable buffers.
  std::size_t parameter_count() const;
  std::size_t buffer_count() const;

  // One f64 entry per parameter, named "<layer>.<role>", e.g. "l03.weight".
  TensorMap state() const;
  void load_state(const TensorMap& state);

 private:
  ModelSpec spec_;
  std::vector<LayerParams> params_;  // one per layer; empty for pool
};

// Closed form for the FCN: (D*W + W) + 11*(W*W + W) + (W + 1).
std::size_t fcn_parameter_count(std::size_t input_dim, std::size_t width = kHiddenWidth);

}  // namespace pd4ml
