#pragma once

// Generic ODE integration: a fixed-step classical RK4 and an adaptive
// embedded 5(4) Runge-Kutta pair (Dormand-Prince) with 4th-order dense
// output. Samples are produced on a uniform cadence; integration is always
// carried at the solver's own step and interpolated to the sample grid.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "dvoc/core.hpp"

namespace dvoc {

using RhsFn = std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>;

struct IntegratorOptions {
  bool fixed_step = false;
  double fixed_dt = 1e-5;  // seconds
  double rtol = 1e-7;
  double atol = 1e-9;
  double h_init = 1e-4;      // seconds
  double h_min = 1e-13;      // below this the adaptive solver declares underflow
  double max_norm = 1e3;     // infinity-norm divergence threshold
  bool throw_on_failure = true;  // throw instead of returning a partial result
};

enum class IntegrationStatus { ok, diverged, step_underflow, non_finite };

struct Trajectory {
  std::vector<double> t;              // sample times, seconds
  std::vector<Eigen::VectorXd> x;     // states at sample times
  std::vector<Eigen::VectorXd> dx;    // SI-time derivatives at sample times
  IntegrationStatus status = IntegrationStatus::ok;
  double stop_time = std::numeric_limits<double>::quiet_NaN();  // where trouble hit
  std::size_t n_steps = 0;
  std::size_t n_rejected = 0;

  bool failed() const { return status != IntegrationStatus::ok; }
};

namespace detail {

inline bool over_norm(const Eigen::VectorXd& x, double max_norm) {
  return !(x.lpNorm<Eigen::Infinity>() <= max_norm);  // true also for NaN
}

inline void handle_failure(Trajectory& out, IntegrationStatus st, double t,
                           const IntegratorOptions& opts) {
  out.status = st;
  out.stop_time = t;
  if (!opts.throw_on_failure) return;
  switch (st) {
    case IntegrationStatus::step_underflow:
      throw StepSizeUnderflow("adaptive step size underflow at t=" + std::to_string(t));
    case IntegrationStatus::non_finite:
      throw NonFiniteState("non-finite state at t=" + std::to_string(t));
    default:
      break;  // divergence is reported through the flag, not an exception
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fixed-step classical RK4. The cadence is rounded to the nearest positive
// multiple of the step so samples land exactly on integration steps; the run
// is bit-reproducible for identical inputs.
// ---------------------------------------------------------------------------
inline Trajectory integrate_rk4(const RhsFn& f, const Eigen::VectorXd& x0, double t0, double t1,
                                double cadence, const IntegratorOptions& opts) {
  if (!(opts.fixed_dt > 0.0)) throw ValidationError("fixed_dt must be positive");
  if (!(cadence > 0.0) || !(t1 > t0)) throw ValidationError("bad time window");
  const long steps_per_sample =
      std::max(1L, std::lround(cadence / opts.fixed_dt));
  const long n_samples = std::lround((t1 - t0) / cadence);

  Trajectory out;
  Eigen::VectorXd x = x0;
  double t = t0;
  out.t.push_back(t);
  out.x.push_back(x);
  out.dx.push_back(f(t, x));

  const double dt = opts.fixed_dt;
  for (long sample = 1; sample <= n_samples; ++sample) {
    for (long s = 0; s < steps_per_sample; ++s) {
      const Eigen::VectorXd k1 = f(t, x);
      const Eigen::VectorXd k2 = f(t + dt / 2.0, x + (dt / 2.0) * k1);
      const Eigen::VectorXd k3 = f(t + dt / 2.0, x + (dt / 2.0) * k2);
      const Eigen::VectorXd k4 = f(t + dt, x + dt * k3);
      x += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      t += dt;
      ++out.n_steps;
      if (!all_finite(x)) {
        detail::handle_failure(out, IntegrationStatus::non_finite, t, opts);
        return out;
      }
      if (detail::over_norm(x, opts.max_norm)) {
        detail::handle_failure(out, IntegrationStatus::diverged, t, opts);
        return out;
      }
    }
    out.t.push_back(t0 + static_cast<double>(sample) * cadence);
    out.x.push_back(x);
    out.dx.push_back(f(t, x));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adaptive Dormand-Prince 5(4) with dense output.
// ---------------------------------------------------------------------------
inline Trajectory integrate_dp54(const RhsFn& f, const Eigen::VectorXd& x0, double t0, double t1,
                                 double cadence, const IntegratorOptions& opts) {
  if (!(cadence > 0.0) || !(t1 > t0)) throw ValidationError("bad time window");

  // Butcher tableau.
  static const double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static const double a21 = 1.0 / 5;
  static const double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static const double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static const double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                      a54 = -212.0 / 729;
  static const double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                      a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static const double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                      b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // 4th-order weights for the error estimate.
  static const double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                      e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  // Dense-output weights.
  static const double d1 = -12715105075.0 / 11282082432.0;
  static const double d3 = 87487479700.0 / 32700410799.0;
  static const double d4 = -10690763975.0 / 1880347072.0;
  static const double d5 = 701980252875.0 / 199316789632.0;
  static const double d6 = -1453857185.0 / 822651844.0;
  static const double d7 = 69997945.0 / 29380423.0;

  Trajectory out;
  Eigen::VectorXd x = x0;
  double t = t0;
  Eigen::VectorXd k1 = f(t, x);
  out.t.push_back(t);
  out.x.push_back(x);
  out.dx.push_back(k1);

  const long n_samples = std::lround((t1 - t0) / cadence);
  long next_sample = 1;
  double h = std::min(opts.h_init, t1 - t0);

  const int dim = static_cast<int>(x.size());
  Eigen::VectorXd k2(dim), k3(dim), k4(dim), k5(dim), k6(dim), k7(dim), x_new(dim), err(dim);

  while (next_sample <= n_samples) {
    if (t + h > t1) h = t1 - t;
    bool accepted = false;
    while (!accepted) {
      if (h < opts.h_min) {
        detail::handle_failure(out, IntegrationStatus::step_underflow, t, opts);
        return out;
      }
      k2 = f(t + c2 * h, x + h * (a21 * k1));
      k3 = f(t + c3 * h, x + h * (a31 * k1 + a32 * k2));
      k4 = f(t + c4 * h, x + h * (a41 * k1 + a42 * k2 + a43 * k3));
      k5 = f(t + c5 * h, x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      k6 = f(t + h, x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      x_new = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      k7 = f(t + h, x_new);
      err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

      double err_norm_sq = 0.0;
      for (int i = 0; i < dim; ++i) {
        const double scale =
            opts.atol + opts.rtol * std::max(std::abs(x[i]), std::abs(x_new[i]));
        const double r = err[i] / scale;
        err_norm_sq += r * r;
      }
      const double err_norm = std::sqrt(err_norm_sq / static_cast<double>(dim));

      if (!std::isfinite(err_norm)) {
        h *= 0.25;
        ++out.n_rejected;
        continue;
      }
      if (err_norm <= 1.0) {
        accepted = true;
        const double t_new = t + h;
        // Dense output over [t, t_new]: emit every pending sample inside.
        const Eigen::VectorXd dx_step = x_new - x;
        const Eigen::VectorXd r1 = x;
        const Eigen::VectorXd r2 = dx_step;
        const Eigen::VectorXd r3 = h * k1 - dx_step;
        const Eigen::VectorXd r4 = dx_step - h * k7 - r3;
        const Eigen::VectorXd r5 =
            h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
        while (next_sample <= n_samples) {
          const double ts = t0 + static_cast<double>(next_sample) * cadence;
          if (ts > t_new + 1e-12 * std::max(1.0, std::abs(t_new))) break;
          const double theta = std::clamp((ts - t) / h, 0.0, 1.0);
          const Eigen::VectorXd xs =
              r1 + theta * (r2 + (1.0 - theta) * (r3 + theta * (r4 + (1.0 - theta) * r5)));
          out.t.push_back(ts);
          out.x.push_back(xs);
          out.dx.push_back(f(ts, xs));
          ++next_sample;
        }
        x = x_new;
        k1 = k7;  // first-same-as-last
        t = t_new;
        ++out.n_steps;
        if (!all_finite(x)) {
          detail::handle_failure(out, IntegrationStatus::non_finite, t, opts);
          return out;
        }
        if (detail::over_norm(x, opts.max_norm)) {
          detail::handle_failure(out, IntegrationStatus::diverged, t, opts);
          return out;
        }
        double fac = 0.9 * std::pow(err_norm > 1e-10 ? err_norm : 1e-10, -0.2);
        h *= std::clamp(fac, 0.2, 5.0);
      } else {
        ++out.n_rejected;
        double fac = 0.9 * std::pow(err_norm, -0.2);
        h *= std::clamp(fac, 0.2, 1.0);
      }
    }
  }
  return out;
}

// Dispatch on the configured mode.
inline Trajectory integrate(const RhsFn& f, const Eigen::VectorXd& x0, double t0, double t1,
                            double cadence, const IntegratorOptions& opts = {}) {
  if (!all_finite(x0)) throw NonFiniteState("initial state is not finite");
  return opts.fixed_step ? integrate_rk4(f, x0, t0, t1, cadence, opts)
                         : integrate_dp54(f, x0, t0, t1, cadence, opts);
}

}  // namespace dvoc
