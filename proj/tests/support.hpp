#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "opgeom/datamodel.hpp"
#include "opgeom/random.hpp"

namespace testing {

using opgeom::Index;
using opgeom::Matrix;
using opgeom::Vector;

inline Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal;
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * normal(rng);
  return m;
}

inline opgeom::FeatureCloud random_cloud(Index n, Index d, std::uint64_t seed, double scale = 1.0) {
  auto rng = opgeom::make_stream(seed, {17});
  return opgeom::FeatureCloud(gaussian_matrix(n, d, rng, scale));
}

/// n labels cycling through 0..K-1 so every class is present.
inline opgeom::LabelVector cyclic_labels(Index n, int k) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = static_cast<int>(i % k);
  return opgeom::LabelVector(y, k);
}

inline opgeom::LabelVector shuffled_labels(Index n, int k, std::uint64_t seed) {
  std::vector<int> y(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = static_cast<int>(i % k);
  auto rng = opgeom::make_stream(seed, {23});
  std::shuffle(y.begin(), y.end(), rng);
  return opgeom::LabelVector(y, k);
}

/// Random symmetric positive semidefinite matrix A A^T / d + floor I.
inline Matrix random_spd(Index d, std::mt19937_64& rng, double floor = 0.1) {
  Matrix a = gaussian_matrix(d, d, rng);
  return a * a.transpose() / static_cast<double>(d) + floor * Matrix::Identity(d, d);
}

inline Matrix sqrt_psd(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

inline std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "opgeom_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace testing
