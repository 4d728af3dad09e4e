#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "opgeom/datamodel.hpp"

namespace opgeom {

/// Mutual k-nearest-neighbor graph: i ~ j iff j is among the k nearest
/// neighbors of i and i is among the k nearest of j. Neighbor ranking uses
/// exact squared distances with ties broken by ascending point index.
class MutualKnnGraph {
 public:
  MutualKnnGraph(Index num_points, Index k, std::vector<std::vector<Index>> neighbors);

  Index size() const noexcept { return n_; }
  Index k() const noexcept { return k_; }
  bool adjacent(Index i, Index j) const { return adjacency_[static_cast<std::size_t>(i * n_ + j)] != 0; }
  std::span<const Index> neighbors(Index i) const { return neighbors_[static_cast<std::size_t>(i)]; }
  Index degree(Index i) const { return static_cast<Index>(neighbors_[static_cast<std::size_t>(i)].size()); }
  /// Number of undirected edges.
  Index edge_count() const noexcept { return edges_; }

 private:
  Index n_;
  Index k_;
  std::vector<std::vector<Index>> neighbors_;  // sorted ascending
  std::vector<std::uint8_t> adjacency_;
  Index edges_ = 0;
};

/// Directed k-NN lists (ascending distance, then index) for every point.
std::vector<std::vector<Index>> knn_lists(const FeatureCloud& cloud, Index k);

MutualKnnGraph build_mutual_knn(const FeatureCloud& cloud, Index k);

/// Number of (i, j) entries where the two adjacency matrices differ.
Index adjacency_hamming(const MutualKnnGraph& lhs, const MutualKnnGraph& rhs);

/// Node average of the fraction of mutual neighbors carrying a different
/// label; nodes with no mutual neighbor contribute zero.
double graph_leakage(const MutualKnnGraph& graph, const LabelVector& labels);

/// Fraction of mutual edges whose endpoints disagree in label (0 for an
/// empty edge set).
double graph_label_disagreement(const MutualKnnGraph& graph, const LabelVector& labels);

struct GraphRadius {
  Vector per_node;       ///< RMS edge length over each node's mutual neighbors
  double aggregate = 0;  ///< node mean of per_node, zero-degree nodes included as 0
};

GraphRadius graph_local_radius(const MutualKnnGraph& graph, const FeatureCloud& cloud);

/// Three collinear points 0, +1, -1 with k = 1: the middle point's first and
/// second neighbor distances tie. `plus` and `minus` shift the middle point
/// by +/- perturbation, sending its single neighbor to opposite sides.
struct DiscontinuityWitness {
  FeatureCloud base;
  FeatureCloud plus;
  FeatureCloud minus;
  Index k = 1;
  Index adjacency_diff = 0;  ///< Hamming distance between A(plus) and A(minus)
};

DiscontinuityWitness discontinuity_witness(double perturbation);

}  // namespace opgeom
