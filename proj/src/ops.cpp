#include "pd4ml/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "pd4ml/errors.hpp"

namespace pd4ml::ops {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using Map = Eigen::Map<RowMajor>;

ConstMap as_matrix(const Tensor& t) {
  return ConstMap(t.data().data(), static_cast<Eigen::Index>(t.shape()[0]),
                  static_cast<Eigen::Index>(t.shape()[1]));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_string(t.shape()));
  }
}

const char* name(Ew op) {
  switch (op) {
    case Ew::add: return "add";
    case Ew::sub: return "sub";
    case Ew::mul: return "mul";
    case Ew::scale: return "scale";
    case Ew::log: return "log";
    case Ew::exp: return "exp";
    case Ew::max0: return "max0";
  }
  return "?";
}

double apply_binary(Ew op, double x, double y) {
  switch (op) {
    case Ew::add: return x + y;
    case Ew::sub: return x - y;
    case Ew::mul:
    case Ew::scale: return x * y;
    default: throw ContractError(std::string("ew: ") + name(op) + " is not a binary op");
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: inner extents differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  Tensor out({a.shape()[0], b.shape()[1]});
  Map(out.data().data(), static_cast<Eigen::Index>(out.shape()[0]),
      static_cast<Eigen::Index>(out.shape()[1])).noalias() = as_matrix(a) * as_matrix(b);
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  if (a.shape()[0] != b.shape()[0]) {
    throw DimensionError("matmul_tn: leading extents differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor out({a.shape()[1], b.shape()[1]});
  Map(out.data().data(), static_cast<Eigen::Index>(out.shape()[0]),
      static_cast<Eigen::Index>(out.shape()[1])).noalias() = as_matrix(a).transpose() * as_matrix(b);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.shape()[1] != b.shape()[1]) {
    throw DimensionError("matmul_nt: trailing extents differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Tensor out({a.shape()[0], b.shape()[0]});
  Map(out.data().data(), static_cast<Eigen::Index>(out.shape()[0]),
      static_cast<Eigen::Index>(out.shape()[1])).noalias() = as_matrix(a) * as_matrix(b).transpose();
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.shape()[0], c = a.shape()[1];
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor ew(Ew op, const Tensor& a, const Tensor& b) {
  if (b.size() == 1 && a.shape() != b.shape()) return ew(op, a, b[0]);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string("ew ") + name(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
  Tensor out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto o = out.data();
  switch (op) {
    case Ew::add: for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i]; break;
    case Ew::sub: for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i]; break;
    case Ew::mul:
    case Ew::scale: for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i]; break;
    default: throw ContractError(std::string("ew: ") + name(op) + " is not a binary op");
  }
  return out;
}

Tensor ew(Ew op, const Tensor& a, double b) {
  Tensor out(a.shape());
  auto x = a.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = apply_binary(op, x[i], b);
  return out;
}

Tensor ew(Ew op, const Tensor& a) {
  Tensor out(a.shape());
  auto x = a.data();
  auto o = out.data();
  switch (op) {
    case Ew::log:
      for (std::size_t i = 0; i < o.size(); ++i) {
        if (!(x[i] > 0.0)) throw DomainError("log of non-positive value " + std::to_string(x[i]));
        o[i] = std::log(x[i]);
      }
      break;
    case Ew::exp:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::exp(x[i]);
      require_finite(out, "exp");
      break;
    case Ew::max0:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] > 0.0 ? x[i] : 0.0;
      break;
    default: throw ContractError(std::string("ew: ") + name(op) + " needs a second operand");
  }
  return out;
}

Tensor reduce(Reduce op, const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(a.shape()));
  }
  const Shape& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  if (n == 0 && op != Reduce::sum) throw ContractError("reduce: mean/max over an empty axis");

  Shape rs = s;
  rs.erase(rs.begin() + static_cast<std::ptrdiff_t>(axis));
  const double init = op == Reduce::max ? -std::numeric_limits<double>::infinity() : 0.0;
  Tensor out(rs, init);
  auto x = a.data();
  auto o = out.data();
  for (std::size_t p = 0; p < outer; ++p) {
    for (std::size_t k = 0; k < n; ++k) {
      const double* row = x.data() + (p * n + k) * inner;
      double* dst = o.data() + p * inner;
      if (op == Reduce::max) {
        for (std::size_t q = 0; q < inner; ++q) dst[q] = std::max(dst[q], row[q]);
      } else if (op == Reduce::mean) {
        // running mean; exact for constant input
        const double count = static_cast<double>(k + 1);
        for (std::size_t q = 0; q < inner; ++q) dst[q] += (row[q] - dst[q]) / count;
      } else {
        for (std::size_t q = 0; q < inner; ++q) dst[q] += row[q];
      }
    }
  }
  return out;
}

Tensor reduce_all(Reduce op, const Tensor& a) {
  auto x = a.data();
  if (x.empty() && op != Reduce::sum) throw ContractError("reduce_all: mean/max of an empty tensor");
  double acc = op == Reduce::max ? -std::numeric_limits<double>::infinity() : 0.0;
  std::size_t count = 0;
  for (double v : x) {
    ++count;
    if (op == Reduce::max) acc = std::max(acc, v);
    else if (op == Reduce::mean) acc += (v - acc) / static_cast<double>(count);
    else acc += v;
  }
  return Tensor::scalar(acc);
}

}  // namespace pd4ml::ops
