#pragma once

#include <optional>
#include <span>
#include <vector>

#include "opgeom/datamodel.hpp"

namespace opgeom {

/// Balanced Gaussian class-conditional model: z | y = a ~ N(mu_a, Sigma) with
/// a shared Sigma, or N(mu_a, Sigma_a) for the unequal-covariance extension.
///
/// Covariances are checked for symmetry (1e-12) and positive
/// semidefiniteness; eigenvalues down to -1e-10 are accepted and clipped to 0.
class GaussianModel {
 public:
  static GaussianModel shared(Matrix means, Matrix covariance);
  static GaussianModel per_class(Matrix means, std::vector<Matrix> covariances);

  Index num_classes() const noexcept { return means_.rows(); }
  Index dim() const noexcept { return means_.cols(); }
  const Matrix& means() const noexcept { return means_; }
  bool is_shared() const noexcept { return shared_; }

  /// The shared covariance. Throws InvalidArgument for a per-class model.
  const Matrix& covariance() const;
  const Matrix& covariance(Index a) const;

  /// Delta^{(a,b)} = mu_b - mu_a.
  Vector mean_difference(Index a, Index b) const;

 private:
  GaussianModel(Matrix means, std::vector<Matrix> covariances, bool shared);

  Matrix means_;
  std::vector<Matrix> covariances_;
  bool shared_ = true;
};

/// Checks symmetry and PSD, returning the covariance with tiny negative
/// eigenvalues clipped to zero.
Matrix sanitize_covariance(const Matrix& covariance);

/// c_ab = (1/4) (mu_a - mu_b)^T (eps I + Sigma)^{-1} (mu_a - mu_b).
Matrix population_separation(const GaussianModel& model, double epsilon);

struct PopulationAffinity {
  double alpha0 = 1.0;  ///< det(I + Sigma/eps)^{-1/2}
  Matrix alpha;         ///< alpha_ab = alpha0 exp(-c_ab)
};

PopulationAffinity population_affinity(const GaussianModel& model, double epsilon);

struct PopulationChain {
  Matrix transition;  ///< P_ab = exp(-c_ab) / sum_r exp(-c_ar)
  Vector stationary;  ///< pi_a = q_a / sum_s q_s
  double stationary_leakage = 0.0;
};

/// Row-normalizes w_ab = exp(-c_ab). `c` must be symmetric, nonnegative and
/// zero on the diagonal.
PopulationChain population_coarse_chain(const Matrix& c);

/// Row-normalizes an arbitrary symmetric positive affinity matrix; the
/// class-level kernel-overlap chain for balanced classes.
PopulationChain overlap_chain(const Matrix& alpha);

/// Sorted real spectrum of a reversible population chain, computed through
/// its symmetrization diag(sqrt pi) P diag(1/sqrt pi).
Vector population_spectrum(const PopulationChain& chain);

/// 1 - lambda_2 of the population chain.
double population_gap(const PopulationChain& chain);

struct HomogeneousPrediction {
  double leakage = 0.0;
  double lambda2 = 0.0;
  double gap = 0.0;
};

/// Closed forms when every off-diagonal separation equals c.
HomogeneousPrediction homogeneous_predictions(double c, int num_classes);

/// The explicit K x K chain with separations c off the diagonal.
Matrix homogeneous_chain(double c, int num_classes);

struct TiltedMoments {
  Vector mean;        ///< m = (I + Sigma/eps)^{-1} Delta
  Matrix covariance;  ///< V = 2 Sigma (I + Sigma/eps)^{-1}
};

/// Moments of the displacement X_b - X_a reweighted by the kernel.
TiltedMoments tilted_moments(const GaussianModel& model, double epsilon, Index a, Index b);

/// Mean-field coordinate Gamma-Gram of class a:
///   G_a = (1/eps) Sigma (I + Sigma/eps)^{-1} + (1/2eps) sum_b P_ab m_ab m_ab^T.
Matrix meanfield_gamma_gram(const GaussianModel& model, double epsilon, Index a);

/// Mean-field squared soft radius of class a:
///   2 tr(Sigma (I + Sigma/eps)^{-1}) + sum_b P_ab |(I + Sigma/eps)^{-1} Delta_ab|^2.
double meanfield_soft_radius(const GaussianModel& model, double epsilon, Index a);

/// E[k_eps(X_a, X_b)] for X_a ~ N(mu_a, Sigma_a), X_b ~ N(mu_b, Sigma_b):
///   det(B)^{-1/2} exp(-(1/4eps) Delta^T B^{-1} Delta),  B = I + (Sigma_a + Sigma_b)/(2eps).
double unequal_covariance_affinity(const Matrix& means, std::span<const Matrix> covariances, double epsilon, Index a,
                                   Index b);

struct PopulationPrediction {
  Matrix c_matrix;
  double alpha0 = 1.0;
  Matrix coarse_chain;
  Vector stationary;
  double stationary_leakage = 0.0;
  double coarse_gap = 0.0;
  std::optional<double> homogeneous_separation;
  std::optional<double> homogeneous_leakage;
  std::optional<double> homogeneous_lambda2;
  std::optional<double> homogeneous_gap;
};

/// Every closed-form coarse prediction for a shared-covariance model. The
/// homogeneous fields are filled when all off-diagonal c agree within
/// `homogeneity_tol`.
PopulationPrediction predict(const GaussianModel& model, double epsilon, double homogeneity_tol = 1e-9);

nlohmann::json to_json(const PopulationPrediction& prediction);

}  // namespace opgeom
