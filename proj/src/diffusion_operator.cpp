#include "opgeom/diffusion_operator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "opgeom/error.hpp"
#include "opgeom/parallel.hpp"
#include "opgeom/random.hpp"

namespace opgeom {

DiffusionOperator::DiffusionOperator(Matrix kernel, Vector degrees, Matrix transition, double bandwidth)
    : kernel_(std::move(kernel)),
      degrees_(std::move(degrees)),
      transition_(std::move(transition)),
      bandwidth_(bandwidth) {
  const Index n = transition_.rows();
  if (transition_.cols() != n || kernel_.rows() != n || kernel_.cols() != n || degrees_.size() != n) {
    throw InvalidArgument("diffusion operator shape mismatch");
  }
  if (!(bandwidth_ > 0.0)) throw InvalidArgument("bandwidth must be positive");
}

bool SelfLoopFreeOperator::all_valid() const {
  return std::all_of(valid_rows.begin(), valid_rows.end(), [](bool v) { return v; });
}

std::vector<Index> SelfLoopFreeOperator::invalid_rows() const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < valid_rows.size(); ++i) {
    if (!valid_rows[i]) out.push_back(static_cast<Index>(i));
  }
  return out;
}

Matrix pairwise_squared_distances(const Matrix& points) {
  const Index n = points.rows();
  const Matrix centered = points.rowwise() - points.colwise().mean();
  const Matrix gram = centered * centered.transpose();
  const Vector norms = gram.diagonal();
  Matrix sq(n, n);
  parallel_for(0, static_cast<std::size_t>(n), [&](std::size_t row) {
    const auto i = static_cast<Index>(row);
    sq(i, i) = 0.0;
    for (Index j = i + 1; j < n; ++j) {
      sq(i, j) = std::max(0.0, norms(i) + norms(j) - 2.0 * gram(i, j));
    }
  });
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < i; ++j) sq(i, j) = sq(j, i);
  }
  return sq;
}

double median_bandwidth(const FeatureCloud& cloud, std::size_t subsample_cap, std::uint64_t seed) {
  const Index n = cloud.size();
  if (n < 2) throw InvalidArgument("median bandwidth needs at least two points");
  if (subsample_cap < 2) throw InvalidArgument("bandwidth subsample cap must be at least 2");

  Matrix points;
  if (static_cast<std::size_t>(n) > subsample_cap) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng = make_stream(seed, {0x6d6564u});
    // Partial Fisher-Yates: the first `subsample_cap` slots are a uniform subset.
    for (std::size_t i = 0; i < subsample_cap; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    order.resize(subsample_cap);
    std::sort(order.begin(), order.end());
    points.resize(static_cast<Index>(subsample_cap), cloud.dim());
    for (std::size_t r = 0; r < subsample_cap; ++r) points.row(static_cast<Index>(r)) = cloud.point(order[r]);
  } else {
    points = cloud.points();
  }

  const Matrix sq = pairwise_squared_distances(points);
  const Index m = points.rows();
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (Index i = 0; i < m; ++i) {
    for (Index j = i + 1; j < m; ++j) values.push_back(sq(i, j));
  }
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double median = values[mid];
  if (values.size() % 2 == 0) {
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (lower + median);
  }
  if (!(median > 0.0)) throw NumericalError("degenerate bandwidth: median squared distance is zero");
  return 0.25 * median;
}

DiffusionOperator build_operator(const FeatureCloud& cloud, double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("bandwidth must be positive and finite");
  const Index n = cloud.size();
  Matrix kernel = pairwise_squared_distances(cloud.points());
  const double scale = -1.0 / (4.0 * epsilon);
  kernel = (kernel * scale).array().exp().matrix();

  const Vector degrees = kernel.rowwise().sum();
  Matrix transition(n, n);
  parallel_for(0, static_cast<std::size_t>(n), [&](std::size_t row) {
    const auto i = static_cast<Index>(row);
    transition.row(i) = kernel.row(i) / degrees(i);
  });
  return DiffusionOperator(std::move(kernel), degrees, std::move(transition), epsilon);
}

Matrix generator(const Matrix& transition, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument("bandwidth must be positive");
  Matrix l = transition;
  l.diagonal().array() -= 1.0;
  return l / epsilon;
}

Matrix generator(const DiffusionOperator& op) { return generator(op.transition(), op.bandwidth()); }

Matrix symmetric_conjugate(const DiffusionOperator& op) {
  const Vector inv_sqrt = op.degrees().array().rsqrt().matrix();
  const Index n = op.size();
  Matrix h(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) h(i, j) = op.kernel()(i, j) * (inv_sqrt(i) * inv_sqrt(j));
  }
  return h;
}

SelfLoopFreeOperator remove_self_loops(const DiffusionOperator& op, double mass_floor) {
  if (!(mass_floor > 0.0 && mass_floor < 1.0)) throw InvalidArgument("mass floor must lie in (0, 1)");
  const Index n = op.size();
  const Matrix& p = op.transition();
  SelfLoopFreeOperator out;
  out.transition = Matrix::Zero(n, n);
  out.off_diagonal_mass = Vector::Zero(n);
  out.valid_rows.assign(static_cast<std::size_t>(n), false);
  out.mass_floor = mass_floor;
  for (Index i = 0; i < n; ++i) {
    double mass = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (j != i) mass += p(i, j);
    }
    out.off_diagonal_mass(i) = mass;
    if (mass < mass_floor) continue;
    out.valid_rows[static_cast<std::size_t>(i)] = true;
    for (Index j = 0; j < n; ++j) {
      if (j != i) out.transition(i, j) = p(i, j) / mass;
    }
  }
  return out;
}

}  // namespace opgeom
