#include <doctest.h>

#include <sstream>

#include "opgeom/error.hpp"
#include "opgeom/parallel.hpp"
#include "opgeom/synth.hpp"
#include "support.hpp"

using namespace opgeom;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.num_classes = 3;
  c.dim = 4;
  c.samples_per_class = 60;
  c.separations = {1.0, 4.0};
  c.bandwidths = {0.5, 2.0};
  c.trials = 2;
  c.seed = 9;
  return c;
}

}  // namespace

TEST_CASE("simplex means") {
  for (int k = 2; k <= 6; ++k) {
    Matrix m = simplex_means(k, 8, 2.5);
    CHECK(m.rows() == k);
    CHECK(m.cols() == 8);
    CHECK(m.colwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
    for (int a = 0; a < k; ++a) {
      for (int j = k - 1; j < 8; ++j) CHECK(m(a, j) == 0.0);
      for (int b = a + 1; b < k; ++b) CHECK((m.row(a) - m.row(b)).norm() == doctest::Approx(2.5).epsilon(1e-12));
    }
  }
  CHECK(simplex_means(4, 16, 0.0).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(simplex_means(5, 3, 1.0), InvalidArgument);
}

TEST_CASE("synth model covariance has the spike on e1") {
  SynthConfig c = SynthConfig::paper_grid();
  auto model = synth_model(c, 2.0);
  Matrix expected = Matrix::Identity(16, 16);
  expected(0, 0) += 0.5;
  CHECK(model.covariance() == expected);
  CHECK(model.num_classes() == 4);
}

TEST_CASE("paper grid preset") {
  SynthConfig c = SynthConfig::paper_grid();
  CHECK(c.num_classes == 4);
  CHECK(c.dim == 16);
  CHECK(c.samples_per_class == 250);
  CHECK(c.separations == std::vector<double>{0.8, 1.4, 2.0, 2.8, 3.8});
  CHECK(c.bandwidths == std::vector<double>{0.5, 1.0, 2.0, 4.0});
  CHECK(c.sigma2 == 1.0);
  CHECK(c.spike == 0.5);
  CHECK(c.trials == 3);
  auto snap = sample_gaussian_snapshot(c, {0, 0, 0});
  CHECK(snap.cloud.size() == 1000);
  for (Index n : snap.labels.class_counts()) CHECK(n == 250);
}

TEST_CASE("sampling is deterministic per cell and distinct across cells") {
  SynthConfig c = small_config();
  auto a = sample_gaussian_snapshot(c, {1, 0, 1});
  auto b = sample_gaussian_snapshot(c, {1, 0, 1});
  CHECK(a.cloud == b.cloud);
  CHECK(a.labels == b.labels);
  auto other = sample_gaussian_snapshot(c, {1, 0, 0});
  CHECK_FALSE(other.cloud == a.cloud);
}

TEST_CASE("zero separation gives coincident empirical means") {
  SynthConfig c = small_config();
  c.separations = {0.0};
  c.samples_per_class = 400;
  auto snap = sample_gaussian_snapshot(c, {0, 0, 0});
  const double sigma = std::sqrt(c.sigma2 + c.spike);
  const Index per = c.samples_per_class;
  for (int a = 0; a < c.num_classes; ++a) {
    Vector mean = snap.cloud.points().middleRows(a * per, per).colwise().mean().transpose();
    CHECK(mean.cwiseAbs().maxCoeff() <= 4 * sigma / std::sqrt(static_cast<double>(per)));
  }
}

TEST_CASE("config validation and json") {
  SynthConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  SynthConfig bad = c;
  bad.num_classes = 6;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.trials = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.bandwidths = {1.0, -1.0};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = c;
  bad.samples_per_class = 0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  auto j = to_json(c);
  CHECK(j["separation_parameterization"] == "pairwise_mean_distance");
  SynthConfig back = synth_config_from_json(j);
  CHECK(back.separations == c.separations);
  CHECK(back.seed == c.seed);
  j["bogus"] = 1;
  CHECK_THROWS_AS(synth_config_from_json(j), InvalidArgument);
}

TEST_CASE("bridge validation rows") {
  SynthConfig c = small_config();
  auto rows = run_bridge_validation(c);
  REQUIRE(rows.size() == 2 * 2 * 2);
  // grid order: separation, then bandwidth, then trial
  CHECK(rows[0].separation == 1.0);
  CHECK(rows[0].bandwidth == 0.5);
  CHECK(rows[1].trial == 1);
  CHECK(rows[2].bandwidth == 2.0);
  CHECK(rows[4].separation == 4.0);
  for (const auto& r : rows) {
    for (double v : {r.empirical.mean_separation, r.empirical.leakage, r.empirical.gap, r.theory.mean_separation,
                     r.theory.leakage, r.theory.gap})
      CHECK(std::isfinite(v));
  }
  SynthConfig one = c;
  one.separations = {2.0};
  one.bandwidths = {1.0};
  one.trials = 1;
  CHECK(run_bridge_validation(one).size() == 1);
}

TEST_CASE("bridge agreement at the grid extremes") {
  SynthConfig c = SynthConfig::paper_grid();
  c.trials = 1;
  // near-overlapping: smallest separation, largest bandwidth
  auto overlap = run_bridge_cell(c, {0, 3, 0});
  CHECK(overlap.theory.leakage > 0.7);
  CHECK(std::abs(overlap.empirical.leakage - overlap.theory.leakage) <= 0.05);
  // well separated corner: lowest leakage on the grid, closed form checked by hand
  auto sep = run_bridge_cell(c, {4, 0, 0});
  // spiked closed form per pair, then the leakage sum over a != b
  Matrix m = simplex_means(4, 16, 3.8);
  double off = 0.0;
  for (Index a = 0; a < 4; ++a)
    for (Index b = 0; b < 4; ++b) {
      if (a == b) continue;
      const Vector delta = (m.row(b) - m.row(a)).transpose();
      const double along = delta(0) * delta(0);
      off += std::exp(-(along / (4 * (0.5 + 1.0 + 0.5)) + (delta.squaredNorm() - along) / (4 * (0.5 + 1.0))));
    }
  const double corner_leak = off / (4 + off);
  CHECK(sep.theory.leakage == doctest::Approx(corner_leak).epsilon(1e-9));
  CHECK(std::abs(sep.empirical.leakage - sep.theory.leakage) <= 0.05);
  for (std::size_t s = 0; s < c.separations.size(); ++s)
    for (std::size_t b = 0; b < c.bandwidths.size(); ++b)
      CHECK(predict(synth_model(c, c.separations[s]), c.bandwidths[b]).stationary_leakage >= sep.theory.leakage - 1e-15);
}

TEST_CASE("empirical leakage decreases with separation") {
  SynthConfig c = SynthConfig::paper_grid();
  c.samples_per_class = 120;
  c.bandwidths = {1.0, 4.0};
  auto rows = run_bridge_validation(c);
  const std::size_t per_sep = c.bandwidths.size() * static_cast<std::size_t>(c.trials);
  for (std::size_t b = 0; b < c.bandwidths.size(); ++b) {
    double prev = 2.0;
    for (std::size_t s = 0; s < c.separations.size(); ++s) {
      double avg = 0.0;
      for (int t = 0; t < c.trials; ++t) avg += rows[s * per_sep + b * c.trials + static_cast<std::size_t>(t)].empirical.leakage;
      avg /= c.trials;
      CHECK(avg <= prev);
      prev = avg;
    }
  }
}

TEST_CASE("relative error and summary") {
  CHECK(bridge_relative_error(1.1, 1.0) == doctest::Approx(0.1));
  CHECK(bridge_relative_error(0.02, 0.0) == doctest::Approx(1.0));
  std::vector<BridgeValidationRow> rows(3);
  rows[0].empirical = {1.0, 0.5, 0.5};
  rows[0].theory = {1.0, 0.5, 0.5};
  rows[1].empirical = {1.2, 0.6, 0.5};
  rows[1].theory = {1.0, 0.5, 0.5};
  rows[2].empirical = {2.0, 1.0, 0.5};
  rows[2].theory = {1.0, 0.5, 0.5};
  auto s = summarize_bridge(rows);
  CHECK(s.median_error_separation == doctest::Approx(0.2));
  CHECK(s.median_error_leakage == doctest::Approx(0.2));
  CHECK(s.median_error_gap == doctest::Approx(0.0));
}

TEST_CASE("bridge table is byte-identical across runs and thread counts") {
  SynthConfig c = small_config();
  auto render = [&](std::size_t threads) {
    set_thread_count(threads);
    std::ostringstream out;
    write_bridge_table_csv(run_bridge_validation(c), out, {{"seed", c.seed}});
    return out.str();
  };
  const std::string one = render(1);
  CHECK(one == render(1));
  CHECK(one == render(4));
  set_thread_count(0);
  CHECK(one.rfind("# seed=9\n", 0) == 0);
  CHECK(one.find("separation,bandwidth,trial,empirical_mean_separation") != std::string::npos);
}
