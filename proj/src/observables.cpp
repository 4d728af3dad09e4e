#include "opgeom/observables.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>

#include "opgeom/error.hpp"

namespace opgeom {

namespace {

void require_vector(const DiffusionOperator& op, const Vector& v, const char* name) {
  if (v.size() != op.size()) {
    throw InvalidArgument(std::string("vector '") + name + "' has length " + std::to_string(v.size()) +
                          ", operator has " + std::to_string(op.size()) + " points");
  }
}

void require_labels(const LabelVector& labels, Index n) {
  labels.require_size(n);
}

}  // namespace

double SeparationMatrix::mean_off_diagonal() const {
  const Index k = values.rows();
  if (k < 2) return 0.0;
  return (values.sum() - values.trace()) / static_cast<double>(k * (k - 1));
}

Vector carre_du_champ(const DiffusionOperator& op, const Vector& f, const Vector& h) {
  require_vector(op, f, "f");
  require_vector(op, h, "h");
  const Matrix& p = op.transition();
  const Index n = op.size();
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    const auto df = f.array() - f(i);
    const auto dh = h.array() - h(i);
    out(i) = (p.row(i).transpose().array() * df * dh).sum();
  }
  return out / (2.0 * op.bandwidth());
}

double label_boundary_energy(const DiffusionOperator& op, const LabelVector& labels) {
  const Index n = op.size();
  require_labels(labels, n);
  double total = 0.0;
  for (int a = 0; a < labels.num_classes(); ++a) {
    Vector g(n);
    for (Index i = 0; i < n; ++i) g(i) = labels[static_cast<std::size_t>(i)] == a ? 1.0 : 0.0;
    if (g.sum() == 0.0) continue;
    total += carre_du_champ(op, g, g).sum();
  }
  return total / static_cast<double>(n);
}

double cross_class_mass(const DiffusionOperator& op, const LabelVector& labels) {
  const Index n = op.size();
  require_labels(labels, n);
  const Matrix& p = op.transition();
  double mass = 0.0;
  for (Index i = 0; i < n; ++i) {
    const int yi = labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j) {
      if (labels[static_cast<std::size_t>(j)] != yi) mass += p(i, j);
    }
  }
  return mass;
}

double raw_leakage(const DiffusionOperator& op, const LabelVector& labels) {
  return cross_class_mass(op, labels) / static_cast<double>(op.size());
}

namespace {

Matrix class_average(const Matrix& rows, const LabelVector& labels) {
  const Index n = rows.rows();
  const int k = labels.num_classes();
  const auto counts = labels.class_counts();
  Matrix t = Matrix::Zero(k, k);
  for (Index i = 0; i < n; ++i) {
    const int a = labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j) t(a, labels[static_cast<std::size_t>(j)]) += rows(i, j);
  }
  for (int a = 0; a < k; ++a) t.row(a) /= static_cast<double>(counts[static_cast<std::size_t>(a)]);
  return t;
}

}  // namespace

Matrix raw_coarse_transition(const DiffusionOperator& op, const LabelVector& labels) {
  require_labels(labels, op.size());
  labels.require_all_classes_present();
  return class_average(op.transition(), labels);
}

CoarseChain make_coarse_chain(Matrix transition) {
  const Index k = transition.rows();
  if (k < 1 || transition.cols() != k) throw InvalidArgument("coarse chain must be a nonempty square matrix");
  if (!transition.allFinite()) throw InvalidArgument("coarse chain has non-finite entries");
  for (Index a = 0; a < k; ++a) {
    if (std::abs(transition.row(a).sum() - 1.0) > 1e-10) {
      throw InvalidArgument("coarse chain row " + std::to_string(a) + " does not sum to 1");
    }
    if (transition.row(a).minCoeff() < -1e-12) {
      throw InvalidArgument("coarse chain row " + std::to_string(a) + " has a negative entry");
    }
  }

  Eigen::EigenSolver<Matrix> solver(transition.transpose(), true);
  if (solver.info() != Eigen::Success) throw NumericalError("stationary distribution eigensolve failed");
  const auto& values = solver.eigenvalues();
  Index best = 0;
  for (Index i = 1; i < k; ++i) {
    if (values(i).real() > values(best).real()) best = i;
  }
  Vector pi = solver.eigenvectors().col(best).real();
  const double total = pi.sum();
  if (total == 0.0) throw NumericalError("stationary eigenvector sums to zero");
  pi /= total;
  for (Index a = 0; a < k; ++a) {
    if (pi(a) < -1e-12) {
      throw NumericalError("stationary distribution is not unique: dominant eigenvector changes sign");
    }
    pi(a) = std::max(pi(a), 0.0);
  }
  pi /= pi.sum();
  return CoarseChain{std::move(transition), std::move(pi)};
}

CoarseChain coarse_chain(const SelfLoopFreeOperator& slf, const LabelVector& labels) {
  require_labels(labels, slf.transition.rows());
  if (!slf.all_valid()) {
    std::string rows;
    for (Index i : slf.invalid_rows()) rows += (rows.empty() ? "" : ",") + std::to_string(i);
    throw NumericalError("self-loop-free operator has degenerate rows: " + rows);
  }
  labels.require_all_classes_present();
  return make_coarse_chain(class_average(slf.transition, labels));
}

double stationary_leakage(const CoarseChain& chain) {
  return (chain.stationary.array() * (1.0 - chain.transition.diagonal().array())).sum();
}

Eigen::VectorXcd sorted_eigenvalues(const Matrix& m) {
  Eigen::EigenSolver<Matrix> solver(m, false);
  if (solver.info() != Eigen::Success) throw NumericalError("eigensolve failed");
  std::vector<std::complex<double>> values(solver.eigenvalues().data(),
                                           solver.eigenvalues().data() + solver.eigenvalues().size());
  std::stable_sort(values.begin(), values.end(), [](const auto& x, const auto& y) {
    if (x.real() != y.real()) return x.real() > y.real();
    return std::abs(x.imag()) > std::abs(y.imag());
  });
  Eigen::VectorXcd out(static_cast<Index>(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i) out(static_cast<Index>(i)) = values[i];
  return out;
}

double coarse_gap(const CoarseChain& chain) {
  if (chain.transition.rows() < 2) throw InvalidArgument("coarse gap needs at least two classes");
  const auto values = sorted_eigenvalues(chain.transition);
  const double gap = 1.0 - values(1).real();
  if (!std::isfinite(gap)) throw NumericalError("coarse gap is not finite");
  return gap;
}

SeparationMatrix empirical_separation(const FeatureCloud& cloud, const LabelVector& labels, double epsilon,
                                      double ridge) {
  if (!(epsilon > 0.0)) throw InvalidArgument("bandwidth must be positive");
  if (!(ridge > 0.0)) throw InvalidArgument("ridge must be positive");
  const Index n = cloud.size();
  const Index d = cloud.dim();
  require_labels(labels, n);
  labels.require_all_classes_present();
  const int k = labels.num_classes();
  const auto counts = labels.class_counts();
  const Matrix& z = cloud.points();

  Matrix means = Matrix::Zero(k, d);
  for (Index i = 0; i < n; ++i) means.row(labels[static_cast<std::size_t>(i)]) += z.row(i);
  for (int a = 0; a < k; ++a) means.row(a) /= static_cast<double>(counts[static_cast<std::size_t>(a)]);

  Matrix scatter = Matrix::Zero(d, d);
  for (Index i = 0; i < n; ++i) {
    const Eigen::RowVectorXd r = z.row(i) - means.row(labels[static_cast<std::size_t>(i)]);
    scatter.noalias() += r.transpose() * r;
  }
  const Index dof = n - k;
  Matrix pooled = dof > 0 ? Matrix(scatter / static_cast<double>(dof)) : Matrix::Zero(d, d);
  pooled = 0.5 * (pooled + pooled.transpose());
  pooled.diagonal().array() += epsilon + ridge;

  // Pseudoinverse of a symmetric matrix: singular values are |eigenvalues|.
  Eigen::SelfAdjointEigenSolver<Matrix> eig(pooled);
  if (eig.info() != Eigen::Success) throw NumericalError("pooled covariance eigensolve failed");
  const Vector sv = eig.eigenvalues().cwiseAbs();
  const double cutoff = sv.maxCoeff() * static_cast<double>(d) * std::numeric_limits<double>::epsilon();
  Vector inv(d);
  for (Index r = 0; r < d; ++r) inv(r) = sv(r) > cutoff ? 1.0 / eig.eigenvalues()(r) : 0.0;

  SeparationMatrix out;
  out.values = Matrix::Zero(k, k);
  out.bandwidth = epsilon;
  out.ridge = ridge;
  for (int a = 0; a < k; ++a) {
    for (int b = a + 1; b < k; ++b) {
      const Vector y = eig.eigenvectors().transpose() * (means.row(a) - means.row(b)).transpose();
      const double c = 0.25 * (y.array().square() * inv.array()).sum();
      out.values(a, b) = std::max(c, 0.0);
      out.values(b, a) = out.values(a, b);
    }
  }
  return out;
}

Matrix empirical_affinity(const FeatureCloud& cloud, const LabelVector& labels, double epsilon) {
  if (!(epsilon > 0.0)) throw InvalidArgument("bandwidth must be positive");
  const Index n = cloud.size();
  require_labels(labels, n);
  const int k = labels.num_classes();
  const auto counts = labels.class_counts();
  for (int a = 0; a < k; ++a) {
    if (counts[static_cast<std::size_t>(a)] < 2) {
      throw InvalidArgument("class " + std::to_string(a) + " needs at least two points for within-class affinity");
    }
  }
  const Matrix sq = pairwise_squared_distances(cloud.points());
  const double scale = -1.0 / (4.0 * epsilon);
  Matrix sums = Matrix::Zero(k, k);
  for (Index i = 0; i < n; ++i) {
    const int a = labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      sums(a, labels[static_cast<std::size_t>(j)]) += std::exp(sq(i, j) * scale);
    }
  }
  Matrix alpha(k, k);
  for (int a = 0; a < k; ++a) {
    const auto na = static_cast<double>(counts[static_cast<std::size_t>(a)]);
    for (int b = 0; b < k; ++b) {
      const auto nb = static_cast<double>(counts[static_cast<std::size_t>(b)]);
      alpha(a, b) = sums(a, b) / (a == b ? na * (na - 1.0) : na * nb);
    }
  }
  return alpha;
}

SeparationMatrix operator_native_separation(const FeatureCloud& cloud, const LabelVector& labels, double epsilon) {
  const Matrix alpha = empirical_affinity(cloud, labels, epsilon);
  const Index k = alpha.rows();
  SeparationMatrix out;
  out.values = Matrix::Zero(k, k);
  out.bandwidth = epsilon;
  out.ridge = 0.0;
  for (Index a = 0; a < k; ++a) {
    for (Index b = a + 1; b < k; ++b) {
      const double num = alpha(a, b) + alpha(b, a);
      const double c = -std::log(0.5 * num / std::sqrt(alpha(a, a) * alpha(b, b)));
      if (!std::isfinite(c)) {
        throw NumericalError("operator-native separation underflowed for classes " + std::to_string(a) + "," +
                             std::to_string(b));
      }
      out.values(a, b) = c;
      out.values(b, a) = c;
    }
  }
  return out;
}

SoftRadius soft_radius(const DiffusionOperator& op, const FeatureCloud& cloud) {
  if (cloud.size() != op.size()) throw InvalidArgument("cloud and operator sizes differ");
  const Matrix sq = pairwise_squared_distances(cloud.points());
  SoftRadius out;
  out.squared = op.transition().cwiseProduct(sq).rowwise().sum();
  out.rms = std::sqrt(out.squared.mean());
  return out;
}

ObservableReport compute_observables(const FeatureCloud& cloud, const LabelVector& labels, double epsilon,
                                     const ObservableOptions& options) {
  require_labels(labels, cloud.size());
  labels.require_all_classes_present();
  if (labels.num_classes() < 2) throw InvalidArgument("observables need at least two classes");

  const DiffusionOperator op = build_operator(cloud, epsilon);
  const SelfLoopFreeOperator slf = remove_self_loops(op, options.mass_floor);
  const CoarseChain chain = coarse_chain(slf, labels);
  const SeparationMatrix sep = empirical_separation(cloud, labels, epsilon, options.ridge);

  ObservableReport report;
  report.bandwidth = epsilon;
  report.num_points = cloud.size();
  report.num_classes = labels.num_classes();
  report.mean_separation = sep.mean_off_diagonal();
  report.separation_matrix = sep.values;
  report.leakage_stationary = std::clamp(stationary_leakage(chain), 0.0, 1.0);
  report.leakage_raw = std::clamp(raw_leakage(op, labels), 0.0, 1.0);
  report.coarse_gap = coarse_gap(chain);
  report.label_boundary_energy = label_boundary_energy(op, labels);
  report.soft_radius_rms = soft_radius(op, cloud).rms;
  report.coarse_chain = chain.transition;
  report.stationary_distribution = chain.stationary;
  report.validate();
  return report;
}

}  // namespace opgeom
