#include "pd4ml/autodiff.hpp"

#include <cmath>

#include "pd4ml/errors.hpp"

namespace pd4ml {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = recording_;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = recording_ && p.trainable;
  n.param = n.requires_grad ? &p : nullptr;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (recording_) {
    for (const Var& v : inputs) {
      if (v.tape_ != this) throw ContractError("operands recorded on different tapes");
      n.requires_grad = n.requires_grad || nodes_[v.id_].requires_grad;
    }
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (g.shape() != n.value.shape()) {
    throw DimensionError("gradient shape " + shape_string(g.shape()) + " does not match value shape " +
                         shape_string(n.value.shape()));
  }
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
    return;
  }
  auto dst = n.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(const Var& loss) {
  if (loss.tape_ != this) throw ContractError("backward: loss was not produced on this tape");
  if (loss.value().size() != 1 || loss.value().rank() > 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_string(loss.shape()));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor();
  }
  if (!nodes_[loss.id_].requires_grad) return;
  grad_buffer(loss.id_)[0] = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.zero_grad();
      auto dst = p.grad.data();
      auto src = n.grad.data();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
  }
}

Tensor Tape::grad(const Var& v) const {
  const Node& n = nodes_.at(v.id_);
  return n.has_grad ? n.grad : Tensor(n.value.shape());
}

void Tape::clear() { nodes_.clear(); }

namespace ad {

namespace {

void same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(ops::matmul(a.value(), b.value()), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    if (t.requires_grad(ia)) t.accumulate(ia, ops::matmul_nt(g, t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, ops::matmul_tn(t.value(ia), g));
  });
}

// Gradient for a right operand that may have been scalar-broadcast.
static void accumulate_rhs(Tape& t, std::size_t ib, const Tensor& g, double sign) {
  if (!t.requires_grad(ib)) return;
  if (t.value(ib).shape() == g.shape()) {
    t.accumulate(ib, sign == 1.0 ? g : ops::ew(ops::Ew::scale, g, sign));
    return;
  }
  double total = 0.0;
  for (double v : g.data()) total += v;
  t.grad_buffer(ib)[0] += sign * total;
}

Var add(const Var& a, const Var& b) {
  same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(ops::ew(ops::Ew::add, a.value(), b.value()), {a, b},
                         [ia, ib](Tape& t, std::size_t self) {
                           t.accumulate(ia, t.upstream(self));
                           accumulate_rhs(t, ib, t.upstream(self), 1.0);
                         });
}

Var sub(const Var& a, const Var& b) {
  same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(ops::ew(ops::Ew::sub, a.value(), b.value()), {a, b},
                         [ia, ib](Tape& t, std::size_t self) {
                           t.accumulate(ia, t.upstream(self));
                           accumulate_rhs(t, ib, t.upstream(self), -1.0);
                         });
}

Var mul(const Var& a, const Var& b) {
  same_tape(a, b);
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(ops::ew(ops::Ew::mul, a.value(), b.value()), {a, b},
                         [ia, ib](Tape& t, std::size_t self) {
                           const Tensor& g = t.upstream(self);
                           if (t.requires_grad(ia)) t.accumulate(ia, ops::ew(ops::Ew::mul, g, t.value(ib)));
                           if (t.requires_grad(ib)) t.accumulate(ib, ops::ew(ops::Ew::mul, g, t.value(ia)));
                         });
}

Var scale(const Var& a, double s) {
  const std::size_t ia = a.id();
  return a.tape().record(ops::ew(ops::Ew::scale, a.value(), s), {a}, [ia, s](Tape& t, std::size_t self) {
    t.accumulate(ia, ops::ew(ops::Ew::scale, t.upstream(self), s));
  });
}

Var add_scalar(const Var& a, double s) {
  const std::size_t ia = a.id();
  return a.tape().record(ops::ew(ops::Ew::add, a.value(), s), {a},
                         [ia](Tape& t, std::size_t self) { t.accumulate(ia, t.upstream(self)); });
}

Var log(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape().record(ops::ew(ops::Ew::log, a.value()), {a}, [ia](Tape& t, std::size_t self) {
    Tensor g = t.upstream(self);
    auto x = t.value(ia).data();
    auto d = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] /= x[i];
    t.accumulate(ia, g);
  });
}

Var exp(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape().record(ops::ew(ops::Ew::exp, a.value()), {a}, [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, ops::ew(ops::Ew::mul, t.upstream(self), t.value(self)));
  });
}

Var relu(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape().record(ops::ew(ops::Ew::max0, a.value()), {a}, [ia](Tape& t, std::size_t self) {
    Tensor g = t.upstream(self);
    auto x = t.value(ia).data();
    auto d = g.data();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (!(x[i] > 0.0)) d[i] = 0.0;
    t.accumulate(ia, g);
  });
}

Var sigmoid(const Var& a) {
  Tensor out(a.shape());
  auto x = a.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    // Branch keeps exp() from overflowing for large |x|.
    if (x[i] >= 0.0) {
      o[i] = 1.0 / (1.0 + std::exp(-x[i]));
    } else {
      const double e = std::exp(x[i]);
      o[i] = e / (1.0 + e);
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    Tensor g = t.upstream(self);
    auto y = t.value(self).data();
    auto d = g.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (1.0 - y[i]);
    t.accumulate(ia, g);
  });
}

Var reduce(ops::Reduce op, const Var& a, std::size_t axis) {
  Tensor out = ops::reduce(op, a.value(), axis);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, op, axis](Tape& t, std::size_t self) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    const Tensor& g = t.upstream(self);
    const Shape& s = x.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t n = s[axis];
    Tensor& gx = t.grad_buffer(ia);
    const double w = op == ops::Reduce::mean ? 1.0 / static_cast<double>(n) : 1.0;
    for (std::size_t p = 0; p < outer; ++p) {
      for (std::size_t q = 0; q < inner; ++q) {
        const double gv = g[p * inner + q];
        if (op == ops::Reduce::max) {
          // Gradient flows to the first maximal element only.
          for (std::size_t k = 0; k < n; ++k) {
            const std::size_t idx = (p * n + k) * inner + q;
            if (x[idx] == y[p * inner + q]) {
              gx[idx] += gv;
              break;
            }
          }
        } else {
          for (std::size_t k = 0; k < n; ++k) gx[(p * n + k) * inner + q] += gv * w;
        }
      }
    }
  });
}

Var sum(const Var& a, std::size_t axis) { return reduce(ops::Reduce::sum, a, axis); }
Var mean(const Var& a, std::size_t axis) { return reduce(ops::Reduce::mean, a, axis); }
Var max(const Var& a, std::size_t axis) { return reduce(ops::Reduce::max, a, axis); }

Var sum_all(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape().record(ops::reduce_all(ops::Reduce::sum, a.value()), {a}, [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, Tensor(t.value(ia).shape(), t.upstream(self)[0]));
  });
}

Var mean_all(const Var& a) {
  const std::size_t ia = a.id();
  return a.tape().record(ops::reduce_all(ops::Reduce::mean, a.value()), {a}, [ia](Tape& t, std::size_t self) {
    const Tensor& x = t.value(ia);
    t.accumulate(ia, Tensor(x.shape(), t.upstream(self)[0] / static_cast<double>(x.size())));
  });
}

Var reshape(const Var& a, Shape shape) {
  const std::size_t ia = a.id();
  return a.tape().record(a.value().reshaped(std::move(shape)), {a}, [ia](Tape& t, std::size_t self) {
    t.accumulate(ia, t.upstream(self).reshaped(t.value(ia).shape()));
  });
}

Var add_row_vector(const Var& x, const Var& b) {
  same_tape(x, b);
  if (x.value().rank() == 0 || b.value().rank() != 1 || x.shape().back() != b.shape()[0]) {
    throw DimensionError("add_row_vector: " + shape_string(x.shape()) + " + " + shape_string(b.shape()));
  }
  const std::size_t c = b.shape()[0];
  Tensor out = x.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i % c];
  const std::size_t ix = x.id(), ib = b.id();
  return x.tape().record(std::move(out), {x, b}, [ix, ib, c](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    t.accumulate(ix, g);
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad_buffer(ib);
      auto gv = g.data();
      for (std::size_t i = 0; i < gv.size(); ++i) gb[i % c] += gv[i];
    }
  });
}

Var mul_constant(const Var& x, const Tensor& m) {
  if (x.shape() != m.shape()) {
    throw DimensionError("mul_constant: shape mismatch " + shape_string(x.shape()) + " vs " +
                         shape_string(m.shape()));
  }
  const std::size_t ix = x.id();
  return x.tape().record(ops::ew(ops::Ew::mul, x.value(), m), {x}, [ix, m](Tape& t, std::size_t self) {
    t.accumulate(ix, ops::ew(ops::Ew::mul, t.upstream(self), m));
  });
}

}  // namespace ad
}  // namespace pd4ml
