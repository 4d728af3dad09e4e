#pragma once

#include "opgeom/datamodel.hpp"
#include "opgeom/diffusion_operator.hpp"

namespace opgeom {

inline constexpr double kDefaultRidge = 1e-8;

/// K x K row-stochastic class-transition matrix with its stationary law.
struct CoarseChain {
  Matrix transition;
  Vector stationary;
};

/// Pairwise class separations at one bandwidth. Symmetric with a zero diagonal.
struct SeparationMatrix {
  Matrix values;
  double bandwidth = 0.0;
  double ridge = 0.0;

  /// Mean over the K(K-1) off-diagonal entries (0 when K = 1).
  double mean_off_diagonal() const;
};

struct SoftRadius {
  Vector squared;  ///< rho^2(i) = sum_j P_ij |z_j - z_i|^2, self-loops included
  double rms = 0.0;
};

/// Discrete carre du champ
///   Gamma(f, h)(i) = (1 / 2eps) sum_j P_ij (f_j - f_i)(h_j - h_i).
Vector carre_du_champ(const DiffusionOperator& op, const Vector& f, const Vector& h);

/// Node-average one-hot label-boundary energy, sum_a mean_i Gamma(g_a)(i),
/// evaluated through the one-hot indicators g_a = 1{y = a}.
double label_boundary_energy(const DiffusionOperator& op, const LabelVector& labels);

/// sum_i sum_{j : y_j != y_i} P_ij.
double cross_class_mass(const DiffusionOperator& op, const LabelVector& labels);

/// Node-average cross-class transition mass, (1/n) * cross_class_mass.
double raw_leakage(const DiffusionOperator& op, const LabelVector& labels);

/// Class-averaged transitions of P itself (self-loops kept):
///   P_ab = (1/n_a) sum_{i in C_a} sum_{j in C_b} P_ij.
Matrix raw_coarse_transition(const DiffusionOperator& op, const LabelVector& labels);

/// Wraps a row-stochastic K x K matrix, computing its stationary law from the
/// dominant left eigenvector. Throws if rows do not sum to one within 1e-10.
CoarseChain make_coarse_chain(Matrix transition);

/// Class-averaged self-loop-free transitions. Requires every row valid and
/// every class nonempty.
CoarseChain coarse_chain(const SelfLoopFreeOperator& slf, const LabelVector& labels);

/// sum_a pi_a (1 - T_aa).
double stationary_leakage(const CoarseChain& chain);

/// Eigenvalues sorted by descending real part, ties by descending |imag|.
Eigen::VectorXcd sorted_eigenvalues(const Matrix& m);

/// 1 - Re(lambda_2) of the chain's transition matrix.
double coarse_gap(const CoarseChain& chain);

/// c_ab = (1/4) (mu_a - mu_b)^T (S_pool + (eps + ridge) I)^+ (mu_a - mu_b)
/// with the unbiased pooled within-class covariance S_pool.
SeparationMatrix empirical_separation(const FeatureCloud& cloud, const LabelVector& labels, double epsilon,
                                      double ridge = kDefaultRidge);

/// Empirical class affinities alpha_ab: mean kernel value over point pairs
/// drawn from classes (a, b), excluding i = j pairs within a class.
Matrix empirical_affinity(const FeatureCloud& cloud, const LabelVector& labels, double epsilon);

/// c~_ab = -log(alpha_ab / sqrt(alpha_aa alpha_bb)). Negative entries are
/// reported as-is. Each class needs at least two points.
SeparationMatrix operator_native_separation(const FeatureCloud& cloud, const LabelVector& labels, double epsilon);

SoftRadius soft_radius(const DiffusionOperator& op, const FeatureCloud& cloud);

struct ObservableOptions {
  double ridge = kDefaultRidge;
  double mass_floor = kDefaultMassFloor;
};

/// Builds the operator at `epsilon` and evaluates every reported observable.
ObservableReport compute_observables(const FeatureCloud& cloud, const LabelVector& labels, double epsilon,
                                     const ObservableOptions& options = {});

}  // namespace opgeom
