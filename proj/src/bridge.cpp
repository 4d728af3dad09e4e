#include "opgeom/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "opgeom/error.hpp"

namespace opgeom {

namespace {

constexpr double kSymmetryTol = 1e-12;
constexpr double kPsdTol = 1e-10;

void require_bandwidth(double epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("bandwidth must be positive and finite");
}

void require_class(const GaussianModel& model, Index a) {
  if (a < 0 || a >= model.num_classes()) throw InvalidArgument("class index " + std::to_string(a) + " out of range");
}

Eigen::LLT<Matrix> factor_spd(const Matrix& m, const char* what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError(std::string("Cholesky factorization failed for ") + what);
  return llt;
}

double log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

/// I + S / eps.
Matrix regularized_identity(const Matrix& s, double epsilon) {
  Matrix a = s / epsilon;
  a.diagonal().array() += 1.0;
  return a;
}

}  // namespace

Matrix sanitize_covariance(const Matrix& covariance) {
  if (covariance.rows() != covariance.cols() || covariance.rows() < 1) {
    throw InvalidArgument("covariance must be a nonempty square matrix");
  }
  if (!covariance.allFinite()) throw InvalidArgument("covariance has non-finite entries");
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > kSymmetryTol) {
    throw InvalidArgument("covariance is not symmetric");
  }
  Matrix sym = 0.5 * (covariance + covariance.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("covariance eigensolve failed");
  const double min_eig = eig.eigenvalues().minCoeff();
  if (min_eig < -kPsdTol) {
    throw InvalidArgument("covariance is not positive semidefinite (min eigenvalue " + std::to_string(min_eig) + ")");
  }
  if (min_eig < 0.0) {
    const Vector clipped = eig.eigenvalues().cwiseMax(0.0);
    sym = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
    sym = 0.5 * (sym + sym.transpose());
  }
  return sym;
}

GaussianModel::GaussianModel(Matrix means, std::vector<Matrix> covariances, bool shared)
    : means_(std::move(means)), covariances_(std::move(covariances)), shared_(shared) {
  if (means_.rows() < 1 || means_.cols() < 1) throw InvalidArgument("model needs at least one class mean");
  if (!means_.allFinite()) throw InvalidArgument("class means must be finite");
  for (auto& c : covariances_) {
    if (c.rows() != means_.cols()) {
      throw InvalidArgument("dimension mismatch: means have d=" + std::to_string(means_.cols()) +
                            ", covariance is " + std::to_string(c.rows()) + "x" + std::to_string(c.cols()));
    }
    c = sanitize_covariance(c);
  }
}

GaussianModel GaussianModel::shared(Matrix means, Matrix covariance) {
  std::vector<Matrix> covs;
  covs.push_back(std::move(covariance));
  return GaussianModel(std::move(means), std::move(covs), true);
}

GaussianModel GaussianModel::per_class(Matrix means, std::vector<Matrix> covariances) {
  if (static_cast<Index>(covariances.size()) != means.rows()) {
    throw InvalidArgument("per-class model needs one covariance per class mean");
  }
  return GaussianModel(std::move(means), std::move(covariances), false);
}

const Matrix& GaussianModel::covariance() const {
  if (!shared_) throw InvalidArgument("model has per-class covariances");
  return covariances_.front();
}

const Matrix& GaussianModel::covariance(Index a) const {
  require_class(*this, a);
  return shared_ ? covariances_.front() : covariances_[static_cast<std::size_t>(a)];
}

Vector GaussianModel::mean_difference(Index a, Index b) const {
  require_class(*this, a);
  require_class(*this, b);
  return (means_.row(b) - means_.row(a)).transpose();
}

Matrix population_separation(const GaussianModel& model, double epsilon) {
  require_bandwidth(epsilon);
  Matrix reg = model.covariance();
  reg.diagonal().array() += epsilon;
  const auto llt = factor_spd(reg, "eps I + Sigma");
  const Index k = model.num_classes();
  Matrix c = Matrix::Zero(k, k);
  for (Index a = 0; a < k; ++a) {
    for (Index b = a + 1; b < k; ++b) {
      const Vector y = llt.matrixL().solve(model.mean_difference(a, b));
      c(a, b) = 0.25 * y.squaredNorm();
      c(b, a) = c(a, b);
    }
  }
  return c;
}

PopulationAffinity population_affinity(const GaussianModel& model, double epsilon) {
  const Matrix c = population_separation(model, epsilon);
  const auto llt = factor_spd(regularized_identity(model.covariance(), epsilon), "I + Sigma/eps");
  PopulationAffinity out;
  out.alpha0 = std::exp(-0.5 * log_det(llt));
  out.alpha = out.alpha0 * (-c.array()).exp().matrix();
  return out;
}

PopulationChain overlap_chain(const Matrix& alpha) {
  const Index k = alpha.rows();
  if (k < 1 || alpha.cols() != k) throw InvalidArgument("affinity matrix must be square");
  if (!alpha.allFinite() || alpha.minCoeff() < 0.0) throw InvalidArgument("affinities must be finite and nonnegative");
  const Vector q = alpha.rowwise().sum();
  if (q.minCoeff() <= 0.0) throw NumericalError("affinity row with zero mass");
  PopulationChain out;
  out.transition = q.cwiseInverse().asDiagonal() * alpha;
  const double total = q.sum();
  out.stationary = q / total;
  out.stationary_leakage = (total - alpha.trace()) / total;
  return out;
}

PopulationChain population_coarse_chain(const Matrix& c) {
  const Index k = c.rows();
  if (k < 1 || c.cols() != k) throw InvalidArgument("separation matrix must be square");
  if (c.hasNaN()) throw InvalidArgument("separation matrix has NaN entries");
  for (Index a = 0; a < k; ++a) {
    if (c(a, a) != 0.0) throw InvalidArgument("separation matrix must have a zero diagonal");
    for (Index b = 0; b < k; ++b) {
      if (c(a, b) < 0.0) throw InvalidArgument("separation matrix has a negative entry");
      const double scale = std::max({1.0, std::abs(c(a, b)), std::abs(c(b, a))});
      if (std::abs(c(a, b) - c(b, a)) > kSymmetryTol * scale) {
        throw InvalidArgument("separation matrix is not symmetric");
      }
    }
  }
  Matrix w(k, k);
  for (Index a = 0; a < k; ++a) {
    for (Index b = 0; b < k; ++b) {
      const double cab = a <= b ? c(a, b) : c(b, a);
      w(a, b) = std::exp(-cab);
    }
  }
  return overlap_chain(w);
}

Vector population_spectrum(const PopulationChain& chain) {
  const Vector root = chain.stationary.cwiseSqrt();
  Matrix s = root.asDiagonal() * chain.transition * root.cwiseInverse().asDiagonal();
  s = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("population chain eigensolve failed");
  return eig.eigenvalues().reverse();
}

double population_gap(const PopulationChain& chain) {
  if (chain.transition.rows() < 2) throw InvalidArgument("gap needs at least two classes");
  return 1.0 - population_spectrum(chain)(1);
}

HomogeneousPrediction homogeneous_predictions(double c, int num_classes) {
  if (!(c >= 0.0)) throw InvalidArgument("homogeneous separation must be nonnegative");
  if (num_classes < 2) throw InvalidArgument("homogeneous predictions need K >= 2");
  const double k = num_classes;
  const double e = std::exp(-c);
  HomogeneousPrediction out;
  out.leakage = (k - 1.0) * e / (1.0 + (k - 1.0) * e);
  out.lambda2 = (1.0 - e) / (1.0 + (k - 1.0) * e);
  out.gap = k / (std::exp(c) + k - 1.0);
  return out;
}

Matrix homogeneous_chain(double c, int num_classes) {
  if (num_classes < 1) throw InvalidArgument("need at least one class");
  Matrix sep = Matrix::Constant(num_classes, num_classes, c);
  sep.diagonal().setZero();
  return population_coarse_chain(sep).transition;
}

TiltedMoments tilted_moments(const GaussianModel& model, double epsilon, Index a, Index b) {
  require_bandwidth(epsilon);
  const Matrix& sigma = model.covariance();
  const auto llt = factor_spd(regularized_identity(sigma, epsilon), "I + Sigma/eps");
  TiltedMoments out;
  out.mean = llt.solve(model.mean_difference(a, b));
  // A^{-1} Sigma = Sigma A^{-1} since A is a polynomial in Sigma.
  const Matrix x = llt.solve(sigma);
  out.covariance = x + x.transpose();
  return out;
}

Matrix meanfield_gamma_gram(const GaussianModel& model, double epsilon, Index a) {
  require_bandwidth(epsilon);
  require_class(model, a);
  const PopulationChain chain = population_coarse_chain(population_separation(model, epsilon));
  Matrix g = tilted_moments(model, epsilon, a, a).covariance / (2.0 * epsilon);
  for (Index b = 0; b < model.num_classes(); ++b) {
    const Vector m = tilted_moments(model, epsilon, a, b).mean;
    g.noalias() += (chain.transition(a, b) / (2.0 * epsilon)) * (m * m.transpose());
  }
  return 0.5 * (g + g.transpose());
}

double meanfield_soft_radius(const GaussianModel& model, double epsilon, Index a) {
  require_bandwidth(epsilon);
  require_class(model, a);
  const PopulationChain chain = population_coarse_chain(population_separation(model, epsilon));
  double value = tilted_moments(model, epsilon, a, a).covariance.trace();
  for (Index b = 0; b < model.num_classes(); ++b) {
    value += chain.transition(a, b) * tilted_moments(model, epsilon, a, b).mean.squaredNorm();
  }
  return value;
}

double unequal_covariance_affinity(const Matrix& means, std::span<const Matrix> covariances, double epsilon, Index a,
                                   Index b) {
  require_bandwidth(epsilon);
  if (static_cast<Index>(covariances.size()) != means.rows()) {
    throw InvalidArgument("need one covariance per class mean");
  }
  if (a < 0 || b < 0 || a >= means.rows() || b >= means.rows()) throw InvalidArgument("class index out of range");
  const Matrix sa = sanitize_covariance(covariances[static_cast<std::size_t>(a)]);
  const Matrix sb = sanitize_covariance(covariances[static_cast<std::size_t>(b)]);
  if (sa.rows() != means.cols() || sb.rows() != means.cols()) throw InvalidArgument("covariance dimension mismatch");
  const auto llt = factor_spd(regularized_identity(0.5 * (sa + sb), epsilon), "I + (Sigma_a + Sigma_b)/(2 eps)");
  const Vector delta = (means.row(a) - means.row(b)).transpose();
  const double quad = Vector(llt.matrixL().solve(delta)).squaredNorm();
  return std::exp(-0.5 * log_det(llt) - quad / (4.0 * epsilon));
}

PopulationPrediction predict(const GaussianModel& model, double epsilon, double homogeneity_tol) {
  if (model.num_classes() < 2) throw InvalidArgument("prediction needs at least two classes");
  PopulationPrediction out;
  out.c_matrix = population_separation(model, epsilon);
  out.alpha0 = population_affinity(model, epsilon).alpha0;
  const PopulationChain chain = population_coarse_chain(out.c_matrix);
  out.coarse_chain = chain.transition;
  out.stationary = chain.stationary;
  out.stationary_leakage = chain.stationary_leakage;
  out.coarse_gap = population_gap(chain);

  const Index k = model.num_classes();
  const double ref = out.c_matrix(0, 1);
  bool homogeneous = true;
  double sum = 0.0;
  for (Index a = 0; a < k; ++a) {
    for (Index b = 0; b < k; ++b) {
      if (a == b) continue;
      homogeneous = homogeneous && std::abs(out.c_matrix(a, b) - ref) <= homogeneity_tol;
      sum += out.c_matrix(a, b);
    }
  }
  if (homogeneous) {
    const double c = sum / static_cast<double>(k * (k - 1));
    const auto h = homogeneous_predictions(c, static_cast<int>(k));
    out.homogeneous_separation = c;
    out.homogeneous_leakage = h.leakage;
    out.homogeneous_lambda2 = h.lambda2;
    out.homogeneous_gap = h.gap;
  }
  return out;
}

nlohmann::json to_json(const PopulationPrediction& p) {
  nlohmann::json j;
  j["c_matrix"] = matrix_to_json(p.c_matrix);
  j["alpha0"] = p.alpha0;
  j["coarse_chain"] = matrix_to_json(p.coarse_chain);
  j["stationary_distribution"] = vector_to_json(p.stationary);
  j["stationary_leakage"] = p.stationary_leakage;
  j["coarse_gap"] = p.coarse_gap;
  j["homogeneous"] = p.homogeneous_gap.has_value();
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j["homogeneous_separation"] = opt(p.homogeneous_separation);
  j["homogeneous_leakage"] = opt(p.homogeneous_leakage);
  j["homogeneous_lambda2"] = opt(p.homogeneous_lambda2);
  j["homogeneous_gap"] = opt(p.homogeneous_gap);
  return j;
}

}  // namespace opgeom
