#pragma once

#include <cstdint>
#include <vector>

#include "opgeom/datamodel.hpp"

namespace opgeom {

/// Default floor on off-diagonal row mass below which a row of the
/// self-loop-free operator is flagged invalid.
inline constexpr double kDefaultMassFloor = 1e-12;
inline constexpr std::size_t kDefaultBandwidthSubsample = 2000;

/// Gaussian-kernel diffusion Markov operator of a feature cloud:
///   W_ij = exp(-|z_i - z_j|^2 / (4 eps)),  D_i = sum_j W_ij,  P = D^{-1} W.
///
/// Kernel entries are never thresholded, so every P_ij > 0 unless the
/// exponent underflows. Storage is dense n x n; the practical ceiling is
/// around n = 10,000 points.
class DiffusionOperator {
 public:
  DiffusionOperator(Matrix kernel, Vector degrees, Matrix transition, double bandwidth);

  const Matrix& kernel() const noexcept { return kernel_; }
  const Vector& degrees() const noexcept { return degrees_; }
  const Matrix& transition() const noexcept { return transition_; }
  double bandwidth() const noexcept { return bandwidth_; }
  Index size() const noexcept { return transition_.rows(); }

 private:
  Matrix kernel_;
  Vector degrees_;
  Matrix transition_;
  double bandwidth_;
};

/// Rows of P with their diagonal removed and renormalized:
///   Q_ij = P_ij 1{i != j} / s_i,  s_i = sum_{m != i} P_im,
/// for rows with s_i >= mass_floor. Rows below the floor are all zero and
/// flagged invalid.
struct SelfLoopFreeOperator {
  Matrix transition;
  Vector off_diagonal_mass;
  std::vector<bool> valid_rows;
  double mass_floor = kDefaultMassFloor;

  bool all_valid() const;
  std::vector<Index> invalid_rows() const;
};

/// Squared Euclidean distances via |z_i|^2 + |z_j|^2 - 2<z_i, z_j> on the
/// mean-centered cloud, clamped at zero. The result is exactly symmetric
/// with a zero diagonal.
Matrix pairwise_squared_distances(const Matrix& points);

/// eps_med = median_{i<j} |z_i - z_j|^2 / 4. Clouds larger than
/// `subsample_cap` use a seeded uniform subset of `subsample_cap` points.
double median_bandwidth(const FeatureCloud& cloud, std::size_t subsample_cap = kDefaultBandwidthSubsample,
                        std::uint64_t seed = 0);

DiffusionOperator build_operator(const FeatureCloud& cloud, double epsilon);

/// L = (P - I) / eps.
Matrix generator(const DiffusionOperator& op);
Matrix generator(const Matrix& transition, double epsilon);

/// H = D^{-1/2} W D^{-1/2}; similar to P, and exactly symmetric.
Matrix symmetric_conjugate(const DiffusionOperator& op);

SelfLoopFreeOperator remove_self_loops(const DiffusionOperator& op, double mass_floor = kDefaultMassFloor);

}  // namespace opgeom
