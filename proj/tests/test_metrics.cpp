#include <doctest.h>

#include "test_util.hpp"
#include "w2r/distributions.hpp"
#include "w2r/metrics.hpp"

#include <fstream>

using namespace w2r;

namespace {

SampleSet column(std::initializer_list<double> values) {
  Matrix m(static_cast<Index>(values.size()), 1);
  Index i = 0;
  for (double v : values) m(i++, 0) = v;
  return SampleSet(std::move(m));
}

GaussianSpec scalar(double mean, double var) { return {Vector::Constant(1, mean), Matrix::Constant(1, 1, var)}; }

}  // namespace

TEST_CASE("w2f_squared on the exact-moment fixture") {
  const SampleSet mu = column({-1.0, 1.0}), nu = column({0.0, 4.0});
  const W2fReport r = w2f_squared(fit_quadratic_closed_form(mu, nu).params(), mu, nu, {});
  CHECK(r.self_term_mu == doctest::Approx(0.5));
  CHECK(r.self_term_nu == doctest::Approx(4.0));
  CHECK(r.objective == doctest::Approx(2.0));
  CHECK(r.w2f_squared == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(r.w2f == doctest::Approx(std::sqrt(2.5)));
  CHECK_FALSE(r.clamped);
}

TEST_CASE("negative estimates are clamped and flagged") {
  // θ = (I, b) overestimates nothing, but a poor θ far from ½‖·‖² on equal samples can go negative.
  const SampleSet s = column({1.0});
  const W2fReport r = w2f_squared(Quadratic{Matrix::Constant(1, 1, 1.0), Vector::Constant(1, 0.0)}, s, s, {});
  CHECK(r.w2f_squared == doctest::Approx(0.0));
  CHECK(r.w2f == 0.0);
}

TEST_CASE("gaussian_w2_closed_form") {
  CHECK(gaussian_w2_closed_form(scalar(0, 1), scalar(2, 4)) == doctest::Approx(std::sqrt(2.5)));
  const GaussianSpec a{Vector::Zero(2), Matrix::Identity(2, 2)};
  const GaussianSpec b{Vector::Zero(2), Vector{{4.0, 9.0}}.asDiagonal()};
  CHECK(gaussian_w2_closed_form(a, b) == doctest::Approx(std::sqrt(2.5)));
  CHECK(gaussian_w2_closed_form(b, b) == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("closed-form quadratic w2f equals the Gaussian formula on empirical moments") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Index d = 1 + trial % 3;
    const SampleSet mu = sample_gaussian({test::random_vector(rng, d), test::random_spd(rng, d)}, 50, trial);
    const SampleSet nu = sample_gaussian({test::random_vector(rng, d), test::random_spd(rng, d)}, 60, trial + 100);
    const Moments mm = empirical_moments(mu), mn = empirical_moments(nu);
    const W2fReport r = w2f_squared(fit_quadratic_closed_form(mu, nu).params(), mu, nu, {});
    CHECK(r.w2f == doctest::Approx(gaussian_w2_closed_form({mm.mean, mm.covariance}, {mn.mean, mn.covariance})).epsilon(1e-8));
  }
}

TEST_CASE("transport_map") {
  const PotentialParams theta = Quadratic{Matrix::Constant(1, 1, 2.0), Vector::Constant(1, 2.0)};
  const TransportMap t = transport_map(theta, column({2.0, 6.0}), {});
  CHECK(t.image.points()(0, 0) == doctest::Approx(0.0));
  CHECK(t.image.points()(1, 0) == doctest::Approx(2.0));
  CHECK(t.nonconverged == 0);

  const SampleSet nu = sample_gaussian(scalar(2, 4), 10000, 3);
  const Moments m = empirical_moments(transport_map(theta, nu, {}).image);
  CHECK(std::abs(m.mean(0)) < 0.05);
  CHECK(std::abs(m.covariance(0, 0) - 1.0) < 0.1);
}

TEST_CASE("moment matching at the closed-form quadratic optimum") {
  Rng rng(12);
  const SampleSet mu = sample_gaussian({test::random_vector(rng, 2), test::random_spd(rng, 2)}, 300, 1);
  const SampleSet nu = sample_gaussian({test::random_vector(rng, 2), test::random_spd(rng, 2)}, 200, 2);
  const auto rows = moment_match_report(fit_quadratic_closed_form(mu, nu).params(), mu, nu, {});
  CHECK(rows.size() == 2 + 3);
  CHECK(max_residual(rows, "mean") <= 1e-8);
  CHECK(max_residual(rows, "cov") <= 1e-8);

  const auto ball_rows =
      moment_match_report(BallLinear{fit_ball_linear_closed_form(mu, nu, 100.0), 100.0}, mu, nu, {});
  CHECK(ball_rows.size() == 2);
  CHECK(max_residual(ball_rows, "mean") <= 1e-8);

  const auto path = test::temp_path("moments.csv");
  write_moment_csv(rows, path, {"seed=1"});
  std::ifstream in(path);
  std::string first, header;
  std::getline(in, first);
  std::getline(in, header);
  CHECK(first == "# seed=1");
  CHECK(header == "statistic,mu_value,push_value,residual");
}

TEST_CASE("symmetric distance with closed forms") {
  const SampleSet mu = column({-1.0, 1.0}), nu = column({0.0, 4.0});
  const SymmetricW2f s = w2f_symmetric(ClassSpec{}, mu, nu, TrainConfig{}, {});
  CHECK(s.forward == doctest::Approx(std::sqrt(2.5)));
  CHECK(s.backward == doctest::Approx(std::sqrt(2.5)));
  CHECK(s.total == doctest::Approx(2 * std::sqrt(2.5)));
}
