// Fixed-step and adaptive integrators: accuracy against closed-form
// solutions, order of convergence, dense-output sampling, failure semantics,
// and bitwise repeatability.

#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "dvoc/dvoc.hpp"

using Catch::Approx;

namespace {

bool bitwise_equal(const dvoc::Trajectory& a, const dvoc::Trajectory& b) {
  if (a.t != b.t || a.x.size() != b.x.size()) return false;
  for (std::size_t k = 0; k < a.x.size(); ++k) {
    if (a.x[k].size() != b.x[k].size()) return false;
    if (std::memcmp(a.x[k].data(), b.x[k].data(),
                    sizeof(double) * static_cast<std::size_t>(a.x[k].size())) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("adaptive integrator tracks exponential decay", "[integrate]") {
  const auto f = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return -x;
  };
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  const dvoc::Trajectory traj = dvoc::integrate(f, x0, 0.0, 2.0, 0.1, {});
  REQUIRE(traj.status == dvoc::IntegrationStatus::ok);
  REQUIRE_FALSE(traj.failed());
  REQUIRE(traj.t.size() == 21);
  REQUIRE(traj.x.size() == 21);
  REQUIRE(traj.dx.size() == 21);
  for (std::size_t k = 0; k < traj.t.size(); ++k) {
    REQUIRE(traj.t[k] == Approx(0.1 * static_cast<double>(k)).margin(1e-12));
    REQUIRE(traj.x[k](0) == Approx(std::exp(-traj.t[k])).margin(1e-6));
    REQUIRE(traj.dx[k](0) == Approx(-traj.x[k](0)).margin(1e-12));
  }
  REQUIRE(traj.n_steps > 0);
}

TEST_CASE("adaptive integrator preserves rotation geometry", "[integrate]") {
  const auto f = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return dvoc::J2() * x;
  };
  Eigen::VectorXd x0(2);
  x0 << 0.8, -0.6;
  dvoc::IntegratorOptions opts;
  opts.rtol = 1e-10;
  opts.atol = 1e-13;
  const dvoc::Trajectory traj = dvoc::integrate(f, x0, 0.0, 10.0, 0.5, opts);
  REQUIRE(traj.status == dvoc::IntegrationStatus::ok);
  for (std::size_t k = 0; k < traj.t.size(); ++k) {
    REQUIRE(traj.x[k].norm() == Approx(1.0).margin(1e-7));
    const Eigen::Vector2d exact = dvoc::rot(traj.t[k]) * x0;
    REQUIRE((traj.x[k] - exact).norm() < 1e-7);
  }
}

TEST_CASE("fixed-step integrator converges at fourth order", "[integrate]") {
  const auto f = [](double t, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return std::cos(4.0 * t) * x;
  };
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  const double exact = std::exp(std::sin(4.0) / 4.0);

  const auto endpoint_error = [&](double dt) -> double {
    dvoc::IntegratorOptions opts;
    opts.fixed_step = true;
    opts.fixed_dt = dt;
    const dvoc::Trajectory traj = dvoc::integrate(f, x0, 0.0, 1.0, 1.0, opts);
    return std::abs(traj.x.back()(0) - exact);
  };

  const double e1 = endpoint_error(0.01);
  const double e2 = endpoint_error(0.005);
  REQUIRE(e1 > 0.0);
  const double ratio = e1 / e2;
  REQUIRE(ratio > 14.0);
  REQUIRE(ratio < 18.0);
}

TEST_CASE("fixed-step bookkeeping", "[integrate]") {
  const auto f = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return -0.3 * x;
  };
  Eigen::VectorXd x0(1);
  x0 << 2.0;
  dvoc::IntegratorOptions opts;
  opts.fixed_step = true;
  opts.fixed_dt = 1e-3;
  const dvoc::Trajectory traj = dvoc::integrate(f, x0, 0.0, 1.0, 0.1, opts);
  REQUIRE(traj.t.size() == 11);
  REQUIRE(traj.n_steps == 1000);
  REQUIRE(traj.n_rejected == 0);
}

TEST_CASE("dense output samples land on the cadence grid", "[integrate]") {
  const auto f = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return dvoc::J2() * x;
  };
  Eigen::VectorXd x0(2);
  x0 << 1.0, 0.0;
  dvoc::IntegratorOptions opts;
  opts.rtol = 1e-8;
  opts.atol = 1e-11;
  const dvoc::Trajectory traj = dvoc::integrate(f, x0, 0.0, 1.5, 0.01, opts);
  REQUIRE(traj.t.size() == 151);
  for (std::size_t k = 0; k < traj.t.size(); ++k) {
    REQUIRE(traj.t[k] == Approx(0.01 * static_cast<double>(k)).margin(1e-12));
    const Eigen::Vector2d exact = dvoc::rot(traj.t[k]) * x0;
    REQUIRE((traj.x[k] - exact).norm() < 1e-6);
  }
  // The interpolated samples vastly outnumber the accepted steps.
  REQUIRE(traj.n_steps < 100);
}

TEST_CASE("norm blow-up is reported through the flag, not an exception",
          "[integrate]") {
  const auto f = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return 2.0 * x;
  };
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  for (bool throwing : {true, false}) {
    dvoc::IntegratorOptions opts;
    opts.throw_on_failure = throwing;
    dvoc::Trajectory traj;
    REQUIRE_NOTHROW(traj = dvoc::integrate(f, x0, 0.0, 5.0, 0.1, opts));
    REQUIRE(traj.status == dvoc::IntegrationStatus::diverged);
    REQUIRE(traj.failed());
    // The threshold 1e3 is crossed at t = ln(1e3)/2, about 3.45 s.
    REQUIRE(traj.stop_time > 3.2);
    REQUIRE(traj.stop_time < 3.7);
    REQUIRE(traj.t.back() <= traj.stop_time);
    REQUIRE(traj.t.size() < 52);
  }
}

TEST_CASE("adaptive stepping underflows on a poisoned right-hand side",
          "[integrate]") {
  const auto f = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(x.size(),
                                     std::numeric_limits<double>::quiet_NaN());
  };
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  REQUIRE_THROWS_AS(dvoc::integrate(f, x0, 0.0, 1.0, 0.1, {}),
                    dvoc::StepSizeUnderflow);

  dvoc::IntegratorOptions opts;
  opts.throw_on_failure = false;
  const dvoc::Trajectory traj = dvoc::integrate(f, x0, 0.0, 1.0, 0.1, opts);
  REQUIRE(traj.status == dvoc::IntegrationStatus::step_underflow);
  REQUIRE(traj.failed());
}

TEST_CASE("fixed stepping reports a poisoned right-hand side as non-finite",
          "[integrate]") {
  const auto f = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(x.size(),
                                     std::numeric_limits<double>::quiet_NaN());
  };
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  dvoc::IntegratorOptions opts;
  opts.fixed_step = true;
  opts.fixed_dt = 1e-3;
  REQUIRE_THROWS_AS(dvoc::integrate(f, x0, 0.0, 1.0, 0.1, opts),
                    dvoc::NonFiniteState);

  opts.throw_on_failure = false;
  const dvoc::Trajectory traj = dvoc::integrate(f, x0, 0.0, 1.0, 0.1, opts);
  REQUIRE(traj.status == dvoc::IntegrationStatus::non_finite);
  REQUIRE(traj.failed());
}

TEST_CASE("non-finite initial states are rejected outright", "[integrate]") {
  const auto f = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return -x;
  };
  Eigen::VectorXd bad(2);
  bad << 1.0, std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(dvoc::integrate(f, bad, 0.0, 1.0, 0.1, {}),
                    dvoc::NonFiniteState);
  dvoc::IntegratorOptions opts;
  opts.fixed_step = true;
  opts.throw_on_failure = false;  // the initial-state check always throws
  REQUIRE_THROWS_AS(dvoc::integrate(f, bad, 0.0, 1.0, 0.1, opts),
                    dvoc::NonFiniteState);
}

TEST_CASE("repeated runs are bitwise identical", "[integrate]") {
  const auto f = [](double t, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    Eigen::VectorXd dx = dvoc::J2() * x;
    dx(0) += 0.1 * std::sin(3.0 * t);
    return dx;
  };
  Eigen::VectorXd x0(2);
  x0 << 1.0, -0.2;

  dvoc::IntegratorOptions fixed;
  fixed.fixed_step = true;
  fixed.fixed_dt = 1e-4;
  const dvoc::Trajectory f1 = dvoc::integrate(f, x0, 0.0, 0.1, 0.01, fixed);
  const dvoc::Trajectory f2 = dvoc::integrate(f, x0, 0.0, 0.1, 0.01, fixed);
  REQUIRE(bitwise_equal(f1, f2));

  const dvoc::Trajectory a1 = dvoc::integrate(f, x0, 0.0, 0.1, 0.01, {});
  const dvoc::Trajectory a2 = dvoc::integrate(f, x0, 0.0, 0.1, 0.01, {});
  REQUIRE(bitwise_equal(a1, a2));
}

TEST_CASE("integrator input validation", "[integrate]") {
  const auto f = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return -x;
  };
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  REQUIRE_THROWS_AS(dvoc::integrate(f, x0, 0.0, 1.0, -0.1, {}), dvoc::ValidationError);
  REQUIRE_THROWS_AS(dvoc::integrate(f, x0, 1.0, 0.0, 0.1, {}), dvoc::ValidationError);
  dvoc::IntegratorOptions opts;
  opts.fixed_step = true;
  opts.fixed_dt = 0.0;
  REQUIRE_THROWS_AS(dvoc::integrate(f, x0, 0.0, 1.0, 0.1, opts), dvoc::ValidationError);
}
