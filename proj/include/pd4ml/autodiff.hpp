#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "pd4ml/ops.hpp"
#include "pd4ml/tensor.hpp"

namespace pd4ml {

// A named model tensor. Non-trainable parameters (batch-norm running
// statistics) are checkpointed but never receive gradients.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool is_trainable = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), trainable(is_trainable) {}

  void zero_grad() { grad = Tensor(value.shape()); }
};

class Tape;

// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Ordered record of primitive operations. Replaying it backward from a
// scalar loss yields gradients for every leaf that requires them.
// A tape belongs to one thread.
class Tape {
 public:
  // Propagates the gradient held by node `self` into its inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  // A non-recording tape only stores forward values (inference).
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }

  Var constant(Tensor value);
  // Leaf whose gradient is retained and readable through grad().
  Var input(Tensor value);
  // Leaf bound to a parameter; backward() accumulates into p.grad.
  Var parameter(Parameter& p);

  // Appends an op result. `fn` is kept only when some input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

  // Reverse sweep from a scalar loss. Throws ContractError otherwise.
  void backward(const Var& loss);

  // Gradient of the last backward() with respect to v (zeros if unreached).
  Tensor grad(const Var& v) const;

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var& v) const { return requires_grad(v.id()); }
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }

  // Zero-initialized gradient buffer of node `id`, for in-place accumulation.
  Tensor& grad_buffer(std::size_t id);
  void accumulate(std::size_t id, const Tensor& g);

  void clear();
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  bool recording_;
};

// Differentiable primitives. Operands must come from the same tape.
namespace ad {

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var log(const Var& a);
Var exp(const Var& a);
Var relu(const Var& a);
Var sigmoid(const Var& a);

Var reduce(ops::Reduce op, const Var& a, std::size_t axis);
Var sum(const Var& a, std::size_t axis);
Var mean(const Var& a, std::size_t axis);
Var max(const Var& a, std::size_t axis);
Var sum_all(const Var& a);
Var mean_all(const Var& a);

Var reshape(const Var& a, Shape shape);

// x viewed as rows of its trailing extent; adds b[C] to every row.
Var add_row_vector(const Var& x, const Var& b);
// Elementwise x * m for a constant mask m.
Var mul_constant(const Var& x, const Tensor& m);

}  // namespace ad
}  // namespace pd4ml
