#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "opgeom/bridge.hpp"
#include "opgeom/diffusion_operator.hpp"
#include "opgeom/error.hpp"
#include "opgeom/observables.hpp"
#include "support.hpp"

using namespace opgeom;

namespace {

const double kE1 = std::exp(-1.0);

FeatureCloud two_points() {
  Matrix m(2, 1);
  m << 0.0, 2.0;
  return FeatureCloud(m);
}

Matrix chain2(double p) {
  Matrix t(2, 2);
  t << 1 - p, p, p, 1 - p;
  return t;
}

// Draws `per_class` points from N(mu_a, cov) for each row of `means`.
testing::Matrix sample_classes(const Matrix& means, const Matrix& cov, Index per_class, std::mt19937_64& rng) {
  const Index k = means.rows(), d = means.cols();
  Matrix root = testing::sqrt_psd(cov);
  Matrix z = testing::gaussian_matrix(k * per_class, d, rng) * root;
  for (Index a = 0; a < k; ++a)
    for (Index i = 0; i < per_class; ++i) z.row(a * per_class + i) += means.row(a);
  return z;
}

LabelVector block_labels(int k, Index per_class) {
  std::vector<int> y;
  for (int a = 0; a < k; ++a)
    for (Index i = 0; i < per_class; ++i) y.push_back(a);
  return LabelVector(y, k);
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double sample_std(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("gamma examples") {
  auto op = build_operator(testing::random_cloud(10, 2, 1), 0.5);
  Vector c = Vector::Constant(10, 3.0);
  CHECK(carre_du_champ(op, c, c).cwiseAbs().maxCoeff() == 0.0);

  Matrix same = Matrix::Zero(2, 1);
  auto uniform = build_operator(FeatureCloud(same), 1.0);
  Vector f(2);
  f << 0.0, 1.0;
  Vector g = carre_du_champ(uniform, f, f);
  CHECK(g(0) == doctest::Approx(0.25));
  CHECK(g(1) == doctest::Approx(0.25));

  CHECK_THROWS_AS(carre_du_champ(op, Vector::Zero(3), Vector::Zero(10)), InvalidArgument);
}

TEST_CASE("gamma is symmetric, bilinear, positive and polarizes") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto rng = make_stream(seed, {5});
    const Index n = 6 + static_cast<Index>(seed);
    auto op = build_operator(testing::random_cloud(n, 3, seed), 0.3 + 0.1 * static_cast<double>(seed));
    Vector f = testing::gaussian_matrix(n, 1, rng);
    Vector h = testing::gaussian_matrix(n, 1, rng);
    Vector k = testing::gaussian_matrix(n, 1, rng);
    const double a = 1.7, b = -0.4;
    CHECK((carre_du_champ(op, f, h) - carre_du_champ(op, h, f)).cwiseAbs().maxCoeff() <= 1e-15);
    Vector lin = carre_du_champ(op, a * f + b * h, k) - (a * carre_du_champ(op, f, k) + b * carre_du_champ(op, h, k));
    CHECK(lin.cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(carre_du_champ(op, f, f).minCoeff() >= -1e-15);
    Vector pol = 0.5 * (carre_du_champ(op, f + h, f + h) - carre_du_champ(op, f, f) - carre_du_champ(op, h, h));
    CHECK((pol - carre_du_champ(op, f, h)).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("label energy and raw leakage examples") {
  auto op = build_operator(two_points(), 1.0);
  LabelVector split({0, 1});
  const double expected = kE1 / (1 + kE1);
  CHECK(expected == doctest::Approx(0.268941).epsilon(1e-6));
  CHECK(label_boundary_energy(op, split) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(raw_leakage(op, split) == doctest::Approx(expected).epsilon(1e-14));

  LabelVector one({0, 0});
  CHECK(label_boundary_energy(op, one) == 0.0);
  CHECK(raw_leakage(op, one) == 0.0);
}

TEST_CASE("energy identity and leakage scaling on random snapshots") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Index n = 10 + static_cast<Index>(seed);
    const double eps = 0.2 + 0.15 * static_cast<double>(seed % 7);
    auto op = build_operator(testing::random_cloud(n, 3, seed + 7), eps);
    auto labels = testing::shuffled_labels(n, 2 + static_cast<int>(seed % 4), seed);
    const double energy = label_boundary_energy(op, labels);
    const double via_mass = cross_class_mass(op, labels) / (eps * static_cast<double>(n));
    CHECK(std::abs(energy - via_mass) <= 1e-12);
    CHECK(std::abs(raw_leakage(op, labels) - eps * energy) <= 1e-12);
    const double leak = raw_leakage(op, labels);
    CHECK(leak >= 0.0);
    CHECK(leak <= 1.0);
  }
}

TEST_CASE("raw coarse transition is row-stochastic") {
  auto op = build_operator(testing::random_cloud(30, 2, 3), 0.5);
  Matrix t = raw_coarse_transition(op, testing::cyclic_labels(30, 3));
  CHECK(t.rows() == 3);
  CHECK((t.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("coarse chain with singleton classes equals Q") {
  const double s3 = std::sqrt(3.0);
  Matrix tri(3, 2);
  tri << 0, 0, 2, 0, 1, s3;
  auto slf = remove_self_loops(build_operator(FeatureCloud(tri), 1.0));
  CoarseChain chain = coarse_chain(slf, LabelVector({0, 1, 2}));
  CHECK((chain.transition - slf.transition).cwiseAbs().maxCoeff() <= 1e-15);
  for (Index a = 0; a < 3; ++a) CHECK(chain.stationary(a) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("well separated tight clusters barely leak") {
  auto rng = make_stream(3, {1});
  Matrix z = testing::gaussian_matrix(40, 2, rng, 0.1);
  for (Index i = 20; i < 40; ++i) z(i, 0) += 10.0;
  // bandwidth from a single cluster's median
  const double eps = median_bandwidth(FeatureCloud(z.topRows(20)));
  auto slf = remove_self_loops(build_operator(FeatureCloud(z), eps));
  CoarseChain chain = coarse_chain(slf, block_labels(2, 20));
  CHECK(chain.transition(0, 0) >= 0.99);
  CHECK(chain.transition(1, 1) >= 0.99);
  CHECK((chain.transition.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-10);
}

TEST_CASE("coarse chain errors") {
  Matrix z(4, 1);
  z << 0.0, 0.1, 1000.0, 1000.1;
  Matrix far(3, 1);
  far << 0.0, 0.1, 1000.0;
  auto bad = remove_self_loops(build_operator(FeatureCloud(far), 0.01));
  try {
    coarse_chain(bad, LabelVector({0, 0, 1}));
    FAIL("expected degenerate-row error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("2") != std::string::npos);
  }
  auto ok = remove_self_loops(build_operator(FeatureCloud(z), 1.0));
  CHECK_THROWS_AS(coarse_chain(ok, LabelVector({0, 0, 2, 2}, 3)), InvalidArgument);
  CHECK_THROWS_AS(make_coarse_chain(Matrix::Constant(2, 2, 0.6)), InvalidArgument);
}

TEST_CASE("coarse chain stationarity on random snapshots") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Index n = 30 + static_cast<Index>(seed);
    auto cloud = testing::random_cloud(n, 3, seed + 40);
    auto slf = remove_self_loops(build_operator(cloud, median_bandwidth(cloud)));
    auto labels = testing::shuffled_labels(n, 2 + static_cast<int>(seed % 5), seed);
    CoarseChain chain = coarse_chain(slf, labels);
    Vector residual = chain.transition.transpose() * chain.stationary - chain.stationary;
    CHECK(residual.cwiseAbs().sum() <= 1e-8);
    CHECK(chain.stationary.minCoeff() >= 0.0);
    CHECK(chain.stationary.sum() == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("stationary leakage and gap on reference chains") {
  CoarseChain identity = make_coarse_chain(Matrix::Identity(3, 3));
  CHECK(stationary_leakage(identity) == 0.0);
  CHECK(coarse_gap(identity) == doctest::Approx(0.0).epsilon(1e-12));

  CoarseChain half = make_coarse_chain(chain2(0.25));
  CHECK(half.stationary(0) == doctest::Approx(0.5));
  CHECK(stationary_leakage(half) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(coarse_gap(half) == doctest::Approx(0.5).epsilon(1e-12));

  for (int k = 2; k <= 6; ++k) {
    CoarseChain mix = make_coarse_chain(Matrix::Constant(k, k, 1.0 / k));
    CHECK(stationary_leakage(mix) == doctest::Approx(1.0 - 1.0 / k).epsilon(1e-12));
    CHECK(coarse_gap(mix) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(coarse_gap(make_coarse_chain(Matrix::Identity(1, 1))), InvalidArgument);
}

TEST_CASE("eigenvalue ordering: real part, then imaginary magnitude") {
  // a 3-cycle has eigenvalues 1 and -1/2 +- i sqrt(3)/2
  Matrix cycle(3, 3);
  cycle << 0, 1, 0, 0, 0, 1, 1, 0, 0;
  auto ev = sorted_eigenvalues(cycle);
  CHECK(ev(0).real() == doctest::Approx(1.0));
  CHECK(ev(1).real() == doctest::Approx(-0.5));
  CHECK(std::abs(ev(1).imag()) == doctest::Approx(std::sqrt(3.0) / 2));
  CHECK(coarse_gap(make_coarse_chain(cycle)) == doctest::Approx(1.5));
}

TEST_CASE("periodic swap chain has uniform stationary distribution") {
  CoarseChain swap = make_coarse_chain(chain2(1.0));
  CHECK(swap.stationary(0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(stationary_leakage(swap) == doctest::Approx(1.0));
  CHECK(coarse_gap(swap) == doctest::Approx(2.0));
}

TEST_CASE("empirical separation examples") {
  Matrix same(4, 2);
  same << 0, 0, 1, 1, 0, 0, 1, 1;
  auto zero = empirical_separation(FeatureCloud(same), LabelVector({0, 0, 1, 1}), 1.0);
  CHECK(zero.values.cwiseAbs().maxCoeff() <= 1e-14);

  Matrix singles(2, 2);
  singles << 0, 0, 2, 0;
  auto single = empirical_separation(FeatureCloud(singles), LabelVector({0, 1}), 1.0);
  CHECK(single.values(0, 1) == doctest::Approx(1.0 / (1.0 + 1e-8)).epsilon(1e-14));
  CHECK(single.values(1, 0) == single.values(0, 1));
  CHECK(single.values(0, 0) == 0.0);
  CHECK(single.mean_off_diagonal() == doctest::Approx(single.values(0, 1)));
  CHECK(single.ridge == 1e-8);

  CHECK_THROWS_AS(empirical_separation(FeatureCloud(singles), LabelVector({0, 0}, 2), 1.0), InvalidArgument);
  CHECK_THROWS_AS(empirical_separation(FeatureCloud(singles), LabelVector({0, 1}), 0.0), InvalidArgument);
}

TEST_CASE("empirical separation matches the isotropic population value") {
  // K=3 classes in d=3, sigma^2 = 0.5, eps = 1. Replicate spread gives the SE.
  const double sigma2 = 0.5, eps = 1.0;
  Matrix means = Matrix::Zero(3, 3);
  means(1, 0) = 2.0;
  means(2, 1) = 1.5;
  const Matrix cov = sigma2 * Matrix::Identity(3, 3);
  const Matrix c = population_separation(GaussianModel::shared(means, cov), eps);
  const Index per = 400;
  std::vector<std::vector<double>> reps(3);
  for (std::uint64_t r = 0; r < 40; ++r) {
    auto rng = make_stream(77, {r});
    auto sep = empirical_separation(FeatureCloud(sample_classes(means, cov, per, rng)), block_labels(3, per), eps);
    reps[0].push_back(sep.values(0, 1));
    reps[1].push_back(sep.values(0, 2));
    reps[2].push_back(sep.values(1, 2));
  }
  const double expected[3] = {c(0, 1), c(0, 2), c(1, 2)};
  CHECK(expected[0] == doctest::Approx(4.0 / (4 * (eps + sigma2))).epsilon(1e-12));
  for (int p = 0; p < 3; ++p) {
    const double se = sample_std(reps[static_cast<std::size_t>(p)]) / std::sqrt(40.0);
    CHECK(std::abs(mean(reps[static_cast<std::size_t>(p)]) - expected[p]) <= 3 * se);
  }
}

TEST_CASE("operator-native separation") {
  Matrix dup(4, 2);
  dup << 1, 2, 1, 2, 1, 2, 1, 2;
  auto zero = operator_native_separation(FeatureCloud(dup), LabelVector({0, 0, 1, 1}), 0.5);
  CHECK(zero.values.cwiseAbs().maxCoeff() == 0.0);

  Matrix three(3, 1);
  three << 0, 1, 2;
  CHECK_THROWS_AS(operator_native_separation(FeatureCloud(three), LabelVector({0, 0, 1}), 1.0), InvalidArgument);

  // order invariance
  auto cloud = testing::random_cloud(30, 2, 9);
  auto labels = testing::shuffled_labels(30, 3, 4);
  std::vector<Index> perm(30);
  std::iota(perm.begin(), perm.end(), 0);
  auto rng = make_stream(2);
  std::shuffle(perm.begin(), perm.end(), rng);
  Matrix pz(30, 2);
  std::vector<int> py(30);
  for (Index i = 0; i < 30; ++i) {
    pz.row(i) = cloud.points().row(perm[static_cast<std::size_t>(i)]);
    py[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  }
  auto a = operator_native_separation(cloud, labels, 0.7);
  auto b = operator_native_separation(FeatureCloud(pz), LabelVector(py, 3), 0.7);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((a.values - a.values.transpose()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("operator-native separation matches c in the shared Gaussian model") {
  const double eps = 1.0;
  Matrix means(2, 2);
  means << 0, 0, 1.5, 0.5;
  Matrix cov(2, 2);
  cov << 0.6, 0.2, 0.2, 0.4;
  const double c = population_separation(GaussianModel::shared(means, cov), eps)(0, 1);
  const Index per = 2000;
  std::vector<double> reps;
  for (std::uint64_t r = 0; r < 6; ++r) {
    auto rng = make_stream(2024, {r});
    reps.push_back(
        operator_native_separation(FeatureCloud(sample_classes(means, cov, per, rng)), block_labels(2, per), eps)
            .values(0, 1));
  }
  const double spread = sample_std(reps);
  CHECK(std::abs(reps.front() - c) <= 3 * spread);
  CHECK(std::abs(mean(reps) - c) <= 3 * spread / std::sqrt(6.0));
}

TEST_CASE("soft radius") {
  auto same = build_operator(FeatureCloud(Matrix::Constant(5, 2, 1.0)), 1.0);
  auto r0 = soft_radius(same, FeatureCloud(Matrix::Constant(5, 2, 1.0)));
  CHECK(r0.rms == 0.0);
  CHECK(r0.squared.cwiseAbs().maxCoeff() == 0.0);

  auto op = build_operator(two_points(), 1.0);
  auto r = soft_radius(op, two_points());
  const double expected = 4 * kE1 / (1 + kE1);
  CHECK(expected == doctest::Approx(1.075765).epsilon(1e-6));
  CHECK(r.squared(0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(r.squared(1) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(r.rms == doctest::Approx(std::sqrt(expected)).epsilon(1e-14));

  // continuity under scaling at fixed bandwidth
  auto cloud = testing::random_cloud(20, 2, 6);
  double previous = -1.0;
  for (int s = 0; s <= 200; ++s) {
    const double scale = 1.0 + 1e-3 * s;
    FeatureCloud scaled(cloud.points() * scale);
    const double rms = soft_radius(build_operator(scaled, 1.0), scaled).rms;
    if (previous >= 0.0) CHECK(std::abs(rms - previous) <= 0.01);
    previous = rms;
  }
  CHECK_THROWS_AS(soft_radius(op, testing::random_cloud(3, 1, 0)), InvalidArgument);
}

TEST_CASE("compute_observables assembles a valid report") {
  auto cloud = testing::random_cloud(60, 4, 12);
  auto labels = testing::cyclic_labels(60, 3);
  auto report = compute_observables(cloud, labels, 0.9);
  CHECK(report.num_points == 60);
  CHECK(report.num_classes == 3);
  CHECK(report.bandwidth == 0.9);
  auto op = build_operator(cloud, 0.9);
  CHECK(report.leakage_raw == doctest::Approx(raw_leakage(op, labels)).epsilon(1e-15));
  CHECK(report.label_boundary_energy == doctest::Approx(label_boundary_energy(op, labels)).epsilon(1e-15));
  CoarseChain chain = coarse_chain(remove_self_loops(op), labels);
  CHECK(report.leakage_stationary == doctest::Approx(stationary_leakage(chain)).epsilon(1e-15));
  CHECK(report.coarse_gap == doctest::Approx(coarse_gap(chain)).epsilon(1e-15));
  CHECK_NOTHROW(report.validate());
  CHECK_THROWS_AS(compute_observables(cloud, LabelVector(std::vector<int>(60, 0)), 1.0), InvalidArgument);
}
