#include "opgeom/hardgraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "opgeom/error.hpp"
#include "opgeom/parallel.hpp"

namespace opgeom {

MutualKnnGraph::MutualKnnGraph(Index num_points, Index k, std::vector<std::vector<Index>> neighbors)
    : n_(num_points), k_(k), neighbors_(std::move(neighbors)) {
  if (static_cast<Index>(neighbors_.size()) != n_) throw InvalidArgument("neighbor list count must equal n");
  adjacency_.assign(static_cast<std::size_t>(n_ * n_), 0);
  for (Index i = 0; i < n_; ++i) {
    auto& list = neighbors_[static_cast<std::size_t>(i)];
    std::sort(list.begin(), list.end());
    for (Index j : list) {
      if (j == i || j < 0 || j >= n_) throw InvalidArgument("invalid neighbor index");
      adjacency_[static_cast<std::size_t>(i * n_ + j)] = 1;
    }
  }
  for (Index i = 0; i < n_; ++i) {
    for (Index j = i + 1; j < n_; ++j) {
      if (adjacent(i, j) != adjacent(j, i)) throw InvalidArgument("mutual neighbor lists must be symmetric");
      if (adjacent(i, j)) ++edges_;
    }
  }
}

std::vector<std::vector<Index>> knn_lists(const FeatureCloud& cloud, Index k) {
  const Index n = cloud.size();
  if (k < 1 || k >= n) {
    throw InvalidArgument("k must satisfy 1 <= k < n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
  }
  const Matrix& z = cloud.points();
  std::vector<std::vector<Index>> lists(static_cast<std::size_t>(n));
  parallel_for(0, static_cast<std::size_t>(n), [&](std::size_t row) {
    const auto i = static_cast<Index>(row);
    std::vector<std::pair<double, Index>> candidates;
    candidates.reserve(static_cast<std::size_t>(n - 1));
    for (Index j = 0; j < n; ++j) {
      if (j != i) candidates.emplace_back((z.row(i) - z.row(j)).squaredNorm(), j);
    }
    // Pairs compare by distance first, then by index: the fixed tie rule.
    std::partial_sort(candidates.begin(), candidates.begin() + k, candidates.end());
    auto& out = lists[row];
    out.reserve(static_cast<std::size_t>(k));
    for (Index r = 0; r < k; ++r) out.push_back(candidates[static_cast<std::size_t>(r)].second);
  });
  return lists;
}

MutualKnnGraph build_mutual_knn(const FeatureCloud& cloud, Index k) {
  const Index n = cloud.size();
  const auto directed = knn_lists(cloud, k);
  std::vector<std::uint8_t> chosen(static_cast<std::size_t>(n * n), 0);
  for (Index i = 0; i < n; ++i) {
    for (Index j : directed[static_cast<std::size_t>(i)]) chosen[static_cast<std::size_t>(i * n + j)] = 1;
  }
  std::vector<std::vector<Index>> mutual(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j : directed[static_cast<std::size_t>(i)]) {
      if (chosen[static_cast<std::size_t>(j * n + i)]) mutual[static_cast<std::size_t>(i)].push_back(j);
    }
  }
  return MutualKnnGraph(n, k, std::move(mutual));
}

Index adjacency_hamming(const MutualKnnGraph& lhs, const MutualKnnGraph& rhs) {
  if (lhs.size() != rhs.size()) throw InvalidArgument("graphs have different sizes");
  Index diff = 0;
  for (Index i = 0; i < lhs.size(); ++i) {
    for (Index j = 0; j < lhs.size(); ++j) diff += lhs.adjacent(i, j) != rhs.adjacent(i, j) ? 1 : 0;
  }
  return diff;
}

double graph_leakage(const MutualKnnGraph& graph, const LabelVector& labels) {
  labels.require_size(graph.size());
  double total = 0.0;
  for (Index i = 0; i < graph.size(); ++i) {
    const auto nbrs = graph.neighbors(i);
    if (nbrs.empty()) continue;
    const int yi = labels[static_cast<std::size_t>(i)];
    const auto differing = std::count_if(nbrs.begin(), nbrs.end(),
                                         [&](Index j) { return labels[static_cast<std::size_t>(j)] != yi; });
    total += static_cast<double>(differing) / static_cast<double>(nbrs.size());
  }
  return total / static_cast<double>(graph.size());
}

double graph_label_disagreement(const MutualKnnGraph& graph, const LabelVector& labels) {
  labels.require_size(graph.size());
  if (graph.edge_count() == 0) return 0.0;
  Index crossing = 0;
  for (Index i = 0; i < graph.size(); ++i) {
    for (Index j : graph.neighbors(i)) {
      if (j > i && labels[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(j)]) ++crossing;
    }
  }
  return static_cast<double>(crossing) / static_cast<double>(graph.edge_count());
}

GraphRadius graph_local_radius(const MutualKnnGraph& graph, const FeatureCloud& cloud) {
  if (cloud.size() != graph.size()) throw InvalidArgument("graph and cloud sizes differ");
  GraphRadius out;
  out.per_node = Vector::Zero(graph.size());
  for (Index i = 0; i < graph.size(); ++i) {
    const auto nbrs = graph.neighbors(i);
    if (nbrs.empty()) continue;
    double sum = 0.0;
    for (Index j : nbrs) sum += (cloud.point(i) - cloud.point(j)).squaredNorm();
    out.per_node(i) = std::sqrt(sum / static_cast<double>(nbrs.size()));
  }
  out.aggregate = out.per_node.mean();
  return out;
}

DiscontinuityWitness discontinuity_witness(double perturbation) {
  if (!(perturbation > 0.0) || !std::isfinite(perturbation)) {
    throw InvalidArgument("witness perturbation must be positive");
  }
  Matrix base(3, 1);
  base << 0.0, 1.0, -1.0;
  Matrix plus = base;
  plus(0, 0) = perturbation;
  Matrix minus = base;
  minus(0, 0) = -perturbation;

  DiscontinuityWitness w{FeatureCloud(base), FeatureCloud(plus), FeatureCloud(minus), 1, 0};
  w.adjacency_diff = adjacency_hamming(build_mutual_knn(w.plus, w.k), build_mutual_knn(w.minus, w.k));
  return w;
}

}  // namespace opgeom
