#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "chiralmag/stochastic.hpp"
#include "support.hpp"

#include <sstream>

using namespace chiralmag;

namespace {

SystemMatrices<double> measured_pair(double K = 0.0) {
  return build_system(testing::paper_params(0.5, 0.3, K, K), testing::paper_measurement());
}

TrajectoryOptions options_for(const SystemMatrices<double>& mats, double dt_scale, double t_rates,
                              std::uint64_t seed = 1) {
  TrajectoryOptions opts;
  opts.dt = dt_scale / rate_scale(mats);
  opts.t_final = t_rates / rate_scale(mats);
  opts.seed = seed;
  return opts;
}

}  // namespace

TEST_CASE("noise-free means") {
  const auto mats = build_system(testing::paper_params(0.5, 0.3, from_mhz(0.5), from_mhz(0.2)), {});
  const ConditionalCovariance sigma(Matrix4d(Matrix4d::Identity() / 2.0));

  SUBCASE("zero stays zero") {
    const auto rec = simulate_trajectory(mats, sigma, std::nullopt, options_for(mats, 1e-2, 5.0));
    for (const auto& m : rec.means) CHECK(m.isZero(0));
  }
  SUBCASE("decay follows the matrix exponential") {
    auto opts = options_for(mats, 1e-4, 2.0);
    opts.initial_mean = Vector4d(1.0, -0.5, 0.3, 2.0);
    opts.record_every = 1000;
    const auto rec = simulate_trajectory(mats, sigma, std::nullopt, opts);
    for (std::size_t k = 0; k < rec.times.size(); ++k) {
      const Matrix4d prop = (mats.drift * rec.times[k]).exp();
      const Vector4d exact = prop * opts.initial_mean;
      CHECK((rec.means[k] - exact).norm() < 1e-3 * opts.initial_mean.norm());
    }
  }
  SUBCASE("feedback adds damping") {
    auto opts = options_for(mats, 1e-3, 2.0);
    opts.initial_mean = Vector4d(1.0, 1.0, 1.0, 1.0);
    const double g = rate_scale(mats);
    const auto open = simulate_trajectory(mats, sigma, std::nullopt, opts);
    const auto closed = simulate_trajectory(mats, sigma, FeedbackGains::right_only(g, g), opts);
    CHECK(closed.means.back().norm() < 0.5 * open.means.back().norm());
  }
}

TEST_CASE("Wiener increments") {
  const auto mats = measured_pair();
  const ConditionalCovariance sigma(steady_conditional(mats).sigma);
  auto opts = options_for(mats, 1e-2, 2e4);
  const auto rec = simulate_trajectory(mats, sigma, std::nullopt, opts);
  const std::size_t n = rec.times.size() - 1;
  REQUIRE(n == 2000000);
  double mean[2] = {0.0, 0.0};
  double second[2] = {0.0, 0.0};
  double cross = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const auto& w = rec.wiener_increment[k];
    for (int l = 0; l < 2; ++l) {
      mean[l] += w[l] / std::sqrt(opts.dt);
      second[l] += w[l] * w[l] / opts.dt;
    }
    cross += w[0] * w[1] / opts.dt;
  }
  for (int l = 0; l < 2; ++l) {
    CHECK(std::abs(mean[l] / n) < 5.0 / std::sqrt(double(n)));
    CHECK(second[l] / n == doctest::Approx(1.0).epsilon(5.0 * std::sqrt(2.0 / n)));
  }
  CHECK(std::abs(cross / n) < 5.0 / std::sqrt(double(n)));
}

TEST_CASE("seeded reproducibility") {
  const auto mats = measured_pair(from_mhz(0.3));
  const ConditionalCovariance sigma(steady_conditional(mats).sigma);
  auto opts = options_for(mats, 1e-2, 50.0, 42);
  opts.record_every = 7;
  const auto a = simulate_trajectory(mats, sigma, std::nullopt, opts);
  const auto b = simulate_trajectory(mats, sigma, std::nullopt, opts);
  REQUIRE(a.means.size() == b.means.size());
  for (std::size_t k = 0; k < a.means.size(); ++k) CHECK(a.means[k] == b.means[k]);
  opts.seed = 43;
  const auto c = simulate_trajectory(mats, sigma, std::nullopt, opts);
  CHECK(c.means.back() != a.means.back());
  CHECK(a.seed == 42);

  opts.seed = 9;
  const auto serial = simulate_ensemble(mats, sigma, std::nullopt, opts, 6, 1);
  const auto parallel = simulate_ensemble(mats, sigma, std::nullopt, opts, 6, 3);
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].seed == trajectory_seed(9, i));
    CHECK(serial[i].means.back() == parallel[i].means.back());
  }
  CHECK(trajectory_seed(9, 0) != trajectory_seed(9, 1));
  CHECK(trajectory_seed(9, 0) != trajectory_seed(10, 0));
}

TEST_CASE("homodyne currents") {
  const auto mats = measured_pair(from_mhz(0.3));
  const ConditionalCovariance sigma(steady_conditional(mats).sigma);
  auto opts = options_for(mats, 1e-2, 20.0, 5);
  opts.initial_mean = Vector4d(0.3, 0.1, -0.2, 0.4);
  const auto rec = simulate_trajectory(mats, sigma, std::nullopt, opts);
  for (std::size_t k = 1; k < rec.times.size(); ++k) {
    for (int l = 0; l < 2; ++l) {
      const double signal = std::sqrt(2.0) * mats.meas_C[l].dot(rec.means[k - 1]) * opts.dt;
      const double diff = rec.current_increment[k][l] - rec.wiener_increment[k][l];
      CHECK(std::abs(diff - signal) <= 1e-12 * (std::abs(signal) + std::abs(rec.current_increment[k][l])));
    }
  }

  SUBCASE("record coarsening sums the increments") {
    auto coarse = opts;
    coarse.record_every = 10;
    const auto rc = simulate_trajectory(mats, sigma, std::nullopt, coarse);
    REQUIRE(rc.times.size() == (rec.times.size() - 1) / 10 + 1);
    for (std::size_t k = 1; k < rc.times.size(); ++k) {
      CHECK(rc.means[k] == rec.means[10 * k]);
      for (int l = 0; l < 2; ++l) {
        double sum = 0.0;
        for (std::size_t j = 10 * (k - 1) + 1; j <= 10 * k; ++j) sum += rec.current_increment[j][l];
        CHECK(rc.current_increment[k][l] == doctest::Approx(sum).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("time-dependent conditional covariance") {
  const auto mats = measured_pair();
  const double dt = 1e-2 / rate_scale(mats);
  const auto traj = integrate_riccati(mats, Matrix4d(Matrix4d::Identity()), dt, 10 * dt);
  const ConditionalCovariance sigma(traj);
  CHECK_FALSE(sigma.is_steady());
  CHECK(sigma.at(3) == traj.sigma[3]);
  CHECK(sigma.at(1000) == traj.sigma.back());
  TrajectoryOptions opts;
  opts.dt = dt;
  opts.t_final = 30 * dt;
  CHECK_NOTHROW(simulate_trajectory(mats, sigma, std::nullopt, opts));
}

TEST_CASE("ensemble statistics") {
  SUBCASE("zero means") {
    TrajectoryRecord r;
    r.times = {0.0, 1.0, 2.0};
    r.means.assign(3, Vector4d::Zero());
    CHECK(ensemble_stats({r, r}, 0.0, 2.0).isZero(0));
    EnsembleAccumulator acc(0.0, 2.0);
    acc.add(r);
    CHECK_THROWS_AS(acc.result(), std::invalid_argument);
  }
  SUBCASE("window selects samples") {
    TrajectoryRecord r;
    r.times = {0.0, 1.0, 2.0, 3.0};
    r.means = {Vector4d::Constant(9.0), Vector4d::Constant(1.0), Vector4d::Constant(3.0),
               Vector4d::Constant(9.0)};
    const Matrix4d stats = ensemble_stats({r, r}, 0.5, 2.5);
    CHECK(stats(0, 0) == doctest::Approx(5.0));
    CHECK(stats(1, 3) == doctest::Approx(5.0));
    EnsembleAccumulator a(0.5, 2.5);
    EnsembleAccumulator b(0.5, 2.5);
    a.add(r);
    b.add(r);
    a.merge(b);
    CHECK(a.trajectories() == 2);
    CHECK(a.samples() == 4);
    CHECK(a.result().isApprox(stats, 1e-15));
  }
}

TEST_CASE("stationary mean covariance matches the algebraic prediction") {
  const auto mats = measured_pair(from_mhz(0.3));
  const Matrix4d sc = steady_conditional(mats).sigma;
  const double g = rate_scale(mats);
  const FeedbackGains gains = FeedbackGains::right_only(g, g);
  const Matrix4d predicted = ensemble_covariance(mats, sc, gains).sigma_bar_e;

  auto opts = options_for(mats, 1e-2, 300.0, 77);
  opts.record_every = 50;
  const auto records = simulate_ensemble(mats, ConditionalCovariance(sc), gains, opts, 200);
  const Matrix4d sample = ensemble_stats(records, 30.0 / g, opts.t_final);
  CHECK((sample - predicted).norm() < 0.1 * predicted.norm());
}

TEST_CASE("divergence and argument checks") {
  const auto mats = build_system(testing::paper_params(0.5, 0.0, from_mhz(3.0), from_mhz(3.0)), {});
  const ConditionalCovariance sigma(Matrix4d(Matrix4d::Identity() / 2.0));
  auto opts = options_for(mats, 1e-2, 5e4);
  opts.initial_mean = Vector4d(1.0, 0.0, 0.0, 0.0);
  CHECK_THROWS_AS(simulate_trajectory(mats, sigma, std::nullopt, opts), DivergenceError);
  opts.dt = 0.0;
  CHECK_THROWS_AS(simulate_trajectory(mats, sigma, std::nullopt, opts), std::invalid_argument);
}

TEST_CASE("trajectory CSV") {
  TrajectoryRecord r;
  r.times = {0.0, 0.5};
  r.means = {Vector4d::Zero(), Vector4d(1.0, 2.0, 3.0, 0.1)};
  r.current_increment = {{0.0, 0.0}, {1.0, 2.0}};
  r.wiener_increment = {{0.0, 0.0}, {0.0, 0.0}};
  std::ostringstream both;
  write_trajectory_csv(both, r);
  CHECK(both.str().rfind("t,x1,p1,x2,p2,I_L,I_R\n", 0) == 0);
  CHECK(both.str().find("0.5,1,2,3,0.10000000000000001,2,4\n") != std::string::npos);
  std::ostringstream right_only;
  write_trajectory_csv(right_only, r, {false, true});
  CHECK(right_only.str().find("0.5,1,2,3,0.10000000000000001,,4\n") != std::string::npos);
}
