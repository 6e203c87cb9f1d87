#include "pd4ml/models.hpp"

#include <cstdio>

#include "pd4ml/errors.hpp"

namespace pd4ml {

const char* model_name(ModelKind k) { return k == ModelKind::fcn ? "fcn" : "graphnet"; }

ModelKind parse_model(const std::string& s) {
  if (s == "fcn") return ModelKind::fcn;
  if (s == "graphnet") return ModelKind::graphnet;
  throw LookupError("unknown model '" + s + "' (expected fcn or graphnet)");
}

namespace {

LayerSpec head(Task task) {
  return {LayerKind::dense, 1, task == Task::classification ? Activation::sigmoid : Activation::linear, false, 0.0};
}

}  // namespace

ModelSpec fcn_spec(std::size_t input_dim, Task task, std::size_t width) {
  if (input_dim == 0) throw ContractError("FCN input dimension must be positive");
  if (width == 0) throw ContractError("hidden width must be positive");
  ModelSpec s{ModelKind::fcn, task, 1, input_dim, {}};
  for (std::size_t i = 0; i < kFcnHiddenLayers; ++i) s.layers.push_back({LayerKind::dense, width, Activation::relu});
  s.layers.push_back(head(task));
  return s;
}

ModelSpec graphnet_spec(std::size_t nodes, std::size_t features, Task task, std::size_t width) {
  if (nodes == 0 || features == 0) throw ContractError("GraphNet needs at least one node and one feature");
  if (width == 0) throw ContractError("hidden width must be positive");
  ModelSpec s{ModelKind::graphnet, task, nodes, features, {}};
  for (int i = 0; i < 3; ++i) s.layers.push_back({LayerKind::node_dense, width, Activation::prelu});
  for (int i = 0; i < 3; ++i) s.layers.push_back({LayerKind::graph_conv, width, Activation::prelu, true, 0.2});
  s.layers.push_back({LayerKind::pool});
  for (double rate : {0.2, 0.2, 0.1}) s.layers.push_back({LayerKind::dense, width, Activation::prelu, true, rate});
  s.layers.push_back(head(task));
  return s;
}

std::size_t fcn_parameter_count(std::size_t input_dim, std::size_t width) {
  return (input_dim * width + width) + (kFcnHiddenLayers - 1) * (width * width + width) + (width + 1);
}

Model::Model(ModelSpec spec, Rng& rng) : spec_(std::move(spec)) {
  std::size_t fan_in = spec_.kind == ModelKind::fcn ? spec_.nodes * spec_.features : spec_.features;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "l%02zu", i);
    if (l.kind == LayerKind::pool) {
      params_.emplace_back();
      continue;
    }
    LayerParams p = make_affine_params(prefix, fan_in, l.width, rng);
    if (l.activation == Activation::prelu) add_prelu_params(p, prefix, l.width);
    if (l.batch_norm) add_batch_norm_params(p, prefix, l.width);
    params_.push_back(std::move(p));
    fan_in = l.width;
  }
}

Var Model::forward(const Var& x, std::span<const NormalizedAdjacency* const> adjacency, Mode mode, Rng& rng) {
  const Shape& in = x.shape();
  Var h = x;
  if (spec_.kind == ModelKind::fcn) {
    if (in.empty() || in[0] == 0) throw DimensionError("FCN input needs a batch axis, got " + shape_string(in));
    const std::size_t d = x.value().size() / in[0];
    if (d != spec_.nodes * spec_.features) {
      throw DimensionError("FCN expects " + std::to_string(spec_.nodes * spec_.features) +
                           " inputs per sample, got " + shape_string(in));
    }
    if (in.size() != 2) h = ad::reshape(x, {in[0], d});
  } else if (in.size() != 3 || in[1] != spec_.nodes || in[2] != spec_.features) {
    throw DimensionError("GraphNet expects [B x " + std::to_string(spec_.nodes) + " x " +
                         std::to_string(spec_.features) + "], got " + shape_string(in));
  }

  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    LayerParams& p = params_[i];
    switch (l.kind) {
      case LayerKind::dense: h = dense(h, p); break;
      case LayerKind::node_dense: h = shared_node_dense(h, p); break;
      case LayerKind::graph_conv: h = graph_conv(h, adjacency, p); break;
      case LayerKind::pool: h = global_average_pool(h); continue;
    }
    switch (l.activation) {
      case Activation::linear: break;
      case Activation::relu: h = relu(h); break;
      case Activation::prelu: h = prelu(h, p.at("alpha")); break;
      case Activation::sigmoid: h = sigmoid(h); break;
    }
    if (l.batch_norm) h = batch_norm(h, p, mode);
    if (l.dropout > 0.0) h = dropout(h, l.dropout, mode, rng);
  }
  return h;
}

Tensor Model::predict(const Tensor& x, std::span<const NormalizedAdjacency* const> adjacency) {
  Tape tape(false);
  Rng unused(0);
  return forward(tape.constant(x), adjacency, Mode::infer, unused).value();
}

namespace {

template <class Param, class Layers>
std::vector<Param*> collect(Layers& layers) {
  std::vector<Param*> out;
  for (auto& p : layers) {
    if (p.weight.value.rank() == 0) continue;
    out.push_back(&p.weight);
    out.push_back(&p.bias);
    for (auto& [key, e] : p.extra) out.push_back(&e);
  }
  return out;
}

}  // namespace

std::vector<Parameter*> Model::parameters() { return collect<Parameter>(params_); }
std::vector<const Parameter*> Model::parameters() const { return collect<const Parameter>(params_); }

std::vector<Parameter*> Model::trainable() {
  std::vector<Parameter*> out;
  for (Parameter* p : parameters())
    if (p->trainable) out.push_back(p);
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters())
    if (p->trainable) n += p->value.size();
  return n;
}

std::size_t Model::buffer_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters())
    if (!p->trainable) n += p->value.size();
  return n;
}

TensorMap Model::state() const {
  TensorMap m;
  for (const Parameter* p : parameters()) m[p->name] = {DType::f64, p->value};
  return m;
}

void Model::load_state(const TensorMap& state) {
  const auto params = parameters();
  if (state.size() != params.size()) {
    throw FormatError("checkpoint holds " + std::to_string(state.size()) + " tensors, model has " +
                      std::to_string(params.size()));
  }
  for (Parameter* p : params) {
    const Tensor& v = require_tensor(state, p->name);
    if (v.shape() != p->value.shape()) {
      throw FormatError("checkpoint tensor '" + p->name + "' has shape " + shape_string(v.shape()) +
                        ", model expects " + shape_string(p->value.shape()));
    }
    p->value = v;
  }
}

}  // namespace pd4ml
