#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "pd4ml/tensor.hpp"

namespace pd4ml {

// Undirected, unweighted graph on n nodes stored as a dense bit matrix.
// Always symmetric with a zero diagonal; self-loops enter only through
// normalize().
class Adjacency {
 public:
  explicit Adjacency(std::size_t n = 0);

  std::size_t size() const noexcept { return n_; }
  bool connected(std::size_t i, std::size_t j) const;
  // Adds the undirected edge {i, j}. i == j is rejected.
  void connect(std::size_t i, std::size_t j);

  std::size_t degree(std::size_t i) const;
  std::size_t edge_count() const;
  // Undirected edges as (i, j) with i < j, lexicographically ordered.
  std::vector<std::pair<std::size_t, std::size_t>> edges() const;
  // degree -> number of nodes with that degree
  std::map<std::size_t, std::size_t> degree_histogram() const;
  Tensor to_dense() const;

  friend bool operator==(const Adjacency&, const Adjacency&) = default;

 private:
  std::size_t n_;
  std::size_t words_;
  std::vector<std::uint64_t> bits_;
};

// D^-1/2 (A + I) D^-1/2 in compressed-row form. D counts the self-loop,
// so isolated nodes keep weight 1 on the diagonal.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency() = default;

  std::size_t size() const noexcept { return n_; }
  std::span<const std::size_t> row_offsets() const noexcept { return offsets_; }
  std::span<const std::size_t> columns() const noexcept { return cols_; }
  std::span<const double> weights() const noexcept { return vals_; }
  double weight(std::size_t i, std::size_t j) const;
  Tensor to_dense() const;

  // out[i, :] (+)= sum_j w_ij * in[j, :] for row-major [n x features] blocks.
  void multiply(const double* in, double* out, std::size_t features) const;
  // Same with the transposed matrix; accumulates into out.
  void multiply_transposed_add(const double* in, double* out, std::size_t features) const;

  friend NormalizedAdjacency normalize(const Adjacency& adj);

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> offsets_{0};
  std::vector<std::size_t> cols_;
  std::vector<double> vals_;
};

// k nearest neighbours by Euclidean distance between rows of coords [N x d].
// Padded nodes (valid[i] == false) are isolated and never chosen as
// neighbours. Ties go to the lower index. Directed picks are OR-symmetrized.
// k >= number of valid nodes is clamped to valid - 1 with a warning.
// An empty `valid` treats every node as valid.
Adjacency knn_adjacency(const Tensor& coords, const std::vector<bool>& valid, std::size_t k);

// Eight-neighbour (Chebyshev distance 1) lattice; node (r, c) has index r * cols + c.
Adjacency grid_adjacency(std::size_t rows, std::size_t cols);

// Mother-daughter edges of a decay tree. -1 marks a root or padding slot.
// Throws MalformedRecordError for indices outside [-1, N) or self-mothers.
Adjacency decay_tree_adjacency(std::span<const std::int64_t> mother_index);

NormalizedAdjacency normalize(const Adjacency& adj);

// One "i j" line per undirected edge with i < j.
void write_edge_list(const Adjacency& adj, std::ostream& os);

}  // namespace pd4ml
