#pragma once

// Graph pieces backing the topology-adaptive family: symmetric 0/1 adjacency
// with enforced self-loops, symmetric normalization A_hat = D^-1/2 A D^-1/2,
// and the graph convolution Y = relu(A_hat X W).

#include <cmath>
#include <cstddef>
#include <vector>

#include "tcdetect/errors.hpp"
#include "tcdetect/tensor.hpp"

namespace tcdetect {

template <typename S>
struct AdjacencySpec {
  Tensor<S> adjacency;   // [n, n], 0/1, symmetric, unit diagonal
  Tensor<S> degrees;     // [n], row sums of adjacency
  Tensor<S> normalized;  // [n, n], D^-1/2 A D^-1/2

  std::size_t nodes() const { return degrees.extent(0); }
};

// Validates A (square, symmetric, 0/1), inserts missing self-loops, and
// computes the normalized form.
template <typename S>
AdjacencySpec<S> normalize_adjacency(const Tensor<S>& a) {
  if (a.rank() != 2 || a.extent(0) != a.extent(1)) {
    throw ShapeError("adjacency must be square, got " + shape_to_string(a.shape()));
  }
  const std::size_t n = a.extent(0);
  AdjacencySpec<S> spec;
  spec.adjacency = a;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const S v = a.at(i, j);
      if (v != S(0) && v != S(1)) {
        throw ParameterError("adjacency entries must be 0 or 1");
      }
      if (a.at(i, j) != a.at(j, i)) {
        throw ParameterError("adjacency must be symmetric");
      }
    }
    spec.adjacency.at(i, i) = S(1);  // self-loops enforced
  }
  spec.degrees = Tensor<S>({n});
  for (std::size_t i = 0; i < n; ++i) {
    S deg = S(0);
    for (std::size_t j = 0; j < n; ++j) deg += spec.adjacency.at(i, j);
    if (deg <= S(0)) throw ParameterError("degenerate graph: node with zero degree");
    spec.degrees[i] = deg;
  }
  spec.normalized = Tensor<S>({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (spec.adjacency.at(i, j) != S(0)) {
        spec.normalized.at(i, j) =
            static_cast<S>(1.0 / std::sqrt(double(spec.degrees[i]) * double(spec.degrees[j])));
      }
    }
  }
  return spec;
}

// Chain graph over temporal positions: each node linked to its neighbors
// within radius 1, plus the enforced self-loop.
template <typename S>
AdjacencySpec<S> path_adjacency(std::size_t nodes) {
  Tensor<S> a({nodes, nodes});
  for (std::size_t i = 0; i < nodes; ++i) {
    a.at(i, i) = S(1);
    if (i + 1 < nodes) {
      a.at(i, i + 1) = S(1);
      a.at(i + 1, i) = S(1);
    }
  }
  return normalize_adjacency(a);
}

namespace ops {

// Y = relu(A_hat X W); X [nodes, F], W [F, G].
template <typename S>
Tensor<S> graph_conv_forward(const Tensor<S>& x, const AdjacencySpec<S>& adj, const Tensor<S>& w) {
  if (x.rank() != 2 || w.rank() != 2) throw ShapeError("graph_conv expects X [nodes,F], W [F,G]");
  const std::size_t n = x.extent(0), f = x.extent(1), g = w.extent(1);
  if (adj.nodes() != n) {
    throw ShapeError("graph_conv: " + std::to_string(n) + " feature rows vs " +
                     std::to_string(adj.nodes()) + " graph nodes");
  }
  if (w.extent(0) != f) throw ShapeError("graph_conv: feature width mismatch");
  // mixed = A_hat X
  Tensor<S> mixed({n, f});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const S a = adj.normalized.at(i, j);
      if (a == S(0)) continue;
      const S* xrow = x.data() + j * f;
      S* mrow = mixed.data() + i * f;
      for (std::size_t k = 0; k < f; ++k) mrow[k] += a * xrow[k];
    }
  }
  Tensor<S> y({n, g});
  for (std::size_t i = 0; i < n; ++i) {
    const S* mrow = mixed.data() + i * f;
    S* yrow = y.data() + i * g;
    for (std::size_t k = 0; k < f; ++k) {
      const S mv = mrow[k];
      const S* wrow = w.data() + k * g;
      for (std::size_t j = 0; j < g; ++j) yrow[j] += mv * wrow[j];
    }
  }
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = y[i] > S(0) ? y[i] : S(0);
  return y;
}

}  // namespace ops
}  // namespace tcdetect
