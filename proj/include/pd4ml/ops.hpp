#pragma once

#include <cstddef>

#include "pd4ml/tensor.hpp"

// Tape-free tensor kernels. The autodiff layer records these.
namespace pd4ml::ops {

enum class Ew { add, sub, mul, scale, log, exp, max0 };
enum class Reduce { sum, mean, max };

// a[r x k] * b[k x c]
Tensor matmul(const Tensor& a, const Tensor& b);
// a^T * b and a * b^T without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Binary elementwise op; b may be a one-element tensor (scalar broadcast).
Tensor ew(Ew op, const Tensor& a, const Tensor& b);
// Binary elementwise op against a scalar (add, sub, mul, scale).
Tensor ew(Ew op, const Tensor& a, double b);
// Unary elementwise op (log, exp, max0).
Tensor ew(Ew op, const Tensor& a);

// Reduce one axis away.
Tensor reduce(Reduce op, const Tensor& a, std::size_t axis);
// Reduce every element to a rank-0 tensor.
Tensor reduce_all(Reduce op, const Tensor& a);

}  // namespace pd4ml::ops
