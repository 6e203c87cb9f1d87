#include "pd4ml/graph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>
#include <string>

#include "pd4ml/errors.hpp"
#include "pd4ml/logging.hpp"

namespace pd4ml {

Adjacency::Adjacency(std::size_t n) : n_(n), words_((n + 63) / 64), bits_(n * words_, 0) {}

bool Adjacency::connected(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= n_) throw DimensionError("adjacency index out of range");
  return (bits_[i * words_ + j / 64] >> (j % 64)) & 1U;
}

void Adjacency::connect(std::size_t i, std::size_t j) {
  if (i >= n_ || j >= n_) throw DimensionError("adjacency index out of range");
  if (i == j) throw ContractError("adjacency: self-loop on node " + std::to_string(i));
  bits_[i * words_ + j / 64] |= std::uint64_t{1} << (j % 64);
  bits_[j * words_ + i / 64] |= std::uint64_t{1} << (i % 64);
}

std::size_t Adjacency::degree(std::size_t i) const {
  if (i >= n_) throw DimensionError("adjacency index out of range");
  std::size_t d = 0;
  for (std::size_t w = 0; w < words_; ++w) d += static_cast<std::size_t>(std::popcount(bits_[i * words_ + w]));
  return d;
}

std::size_t Adjacency::edge_count() const {
  std::size_t total = 0;
  for (auto w : bits_) total += static_cast<std::size_t>(std::popcount(w));
  return total / 2;
}

std::vector<std::pair<std::size_t, std::size_t>> Adjacency::edges() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j)
      if (connected(i, j)) out.emplace_back(i, j);
  return out;
}

std::map<std::size_t, std::size_t> Adjacency::degree_histogram() const {
  std::map<std::size_t, std::size_t> h;
  for (std::size_t i = 0; i < n_; ++i) ++h[degree(i)];
  return h;
}

Tensor Adjacency::to_dense() const {
  Tensor t({n_, n_});
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) t.at(i, j) = connected(i, j) ? 1.0 : 0.0;
  return t;
}

double NormalizedAdjacency::weight(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= n_) throw DimensionError("normalized adjacency index out of range");
  const auto begin = cols_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]);
  const auto end = cols_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]);
  const auto it = std::lower_bound(begin, end, j);
  if (it == end || *it != j) return 0.0;
  return vals_[static_cast<std::size_t>(it - cols_.begin())];
}

Tensor NormalizedAdjacency::to_dense() const {
  Tensor t({n_, n_});
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) t.at(i, cols_[e]) = vals_[e];
  return t;
}

void NormalizedAdjacency::multiply(const double* in, double* out, std::size_t features) const {
  for (std::size_t i = 0; i < n_; ++i) {
    double* dst = out + i * features;
    std::fill_n(dst, features, 0.0);
    for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
      const double w = vals_[e];
      const double* src = in + cols_[e] * features;
      for (std::size_t f = 0; f < features; ++f) dst[f] += w * src[f];
    }
  }
}

void NormalizedAdjacency::multiply_transposed_add(const double* in, double* out, std::size_t features) const {
  for (std::size_t i = 0; i < n_; ++i) {
    const double* src = in + i * features;
    for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
      const double w = vals_[e];
      double* dst = out + cols_[e] * features;
      for (std::size_t f = 0; f < features; ++f) dst[f] += w * src[f];
    }
  }
}

Adjacency knn_adjacency(const Tensor& coords, const std::vector<bool>& valid, std::size_t k) {
  if (coords.rank() != 2) throw DimensionError("knn_adjacency: coords must be [N x d]");
  if (k == 0) throw ContractError("knn_adjacency: k must be at least 1");
  const std::size_t n = coords.shape()[0];
  const std::size_t d = coords.shape()[1];
  if (!valid.empty() && valid.size() != n) throw DimensionError("knn_adjacency: mask length differs from N");
  auto is_valid = [&](std::size_t i) { return valid.empty() || valid[i]; };

  std::vector<std::size_t> nodes;
  for (std::size_t i = 0; i < n; ++i)
    if (is_valid(i)) nodes.push_back(i);

  Adjacency adj(n);
  if (nodes.size() < 2) return adj;
  if (k >= nodes.size()) {
    warn("knn_adjacency: k = " + std::to_string(k) + " with only " + std::to_string(nodes.size()) +
         " valid nodes; clamping to " + std::to_string(nodes.size() - 1));
    k = nodes.size() - 1;
  }

  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(nodes.size());
  for (std::size_t i : nodes) {
    cand.clear();
    for (std::size_t j : nodes) {
      if (j == i) continue;
      double dist2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = coords.at(i, c) - coords.at(j, c);
        dist2 += diff * diff;
      }
      cand.emplace_back(dist2, j);
    }
    // pair ordering breaks distance ties by lower index
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end());
    for (std::size_t m = 0; m < k; ++m) adj.connect(i, cand[m].second);
  }
  return adj;
}

Adjacency grid_adjacency(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw ContractError("grid_adjacency: rows and cols must be at least 1");
  Adjacency adj(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const auto rr = static_cast<std::ptrdiff_t>(r) + dr;
          const auto cc = static_cast<std::ptrdiff_t>(c) + dc;
          if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(rows) ||
              cc >= static_cast<std::ptrdiff_t>(cols))
            continue;
          adj.connect(r * cols + c, static_cast<std::size_t>(rr) * cols + static_cast<std::size_t>(cc));
        }
      }
    }
  }
  return adj;
}

Adjacency decay_tree_adjacency(std::span<const std::int64_t> mother_index) {
  const std::size_t n = mother_index.size();
  Adjacency adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int64_t m = mother_index[i];
    if (m == -1) continue;
    if (m < -1 || m >= static_cast<std::int64_t>(n)) {
      throw MalformedRecordError("decay tree: particle " + std::to_string(i) + " has mother index " +
                                 std::to_string(m) + " outside [-1, " + std::to_string(n) + ")");
    }
    if (static_cast<std::size_t>(m) == i) {
      throw MalformedRecordError("decay tree: particle " + std::to_string(i) + " is its own mother");
    }
    adj.connect(i, static_cast<std::size_t>(m));
  }
  return adj;
}

NormalizedAdjacency normalize(const Adjacency& adj) {
  const std::size_t n = adj.size();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(adj.degree(i) + 1));

  NormalizedAdjacency out;
  out.n_ = n;
  out.offsets_.assign(1, 0);
  out.offsets_.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || adj.connected(i, j)) {
        out.cols_.push_back(j);
        out.vals_.push_back(inv_sqrt[i] * inv_sqrt[j]);
      }
    }
    out.offsets_.push_back(out.cols_.size());
  }
  return out;
}

void write_edge_list(const Adjacency& adj, std::ostream& os) {
  for (const auto& [i, j] : adj.edges()) os << i << ' ' << j << '\n';
}

}  // namespace pd4ml
