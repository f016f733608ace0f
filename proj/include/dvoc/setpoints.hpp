#pragma once

// Power-flow-consistent set-point machinery: closed-form branch powers,
// nodal consistency verification, steady-state angle solvers, and the
// synchronous-frame geometry (target voltages, frame matrix, projector).
//
// Conventions: angles are stored relative to the first inverter bus (its
// entry is always 0). For a branch between buses j and k, the relative angle
// is theta_jk = theta_j - theta_k, and branch_powers(..., at = k) returns the
// power injected into the branch at terminal k.

#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "dvoc/core.hpp"
#include "dvoc/network.hpp"

namespace dvoc {

struct SetpointProfile {
  Eigen::VectorXd p_star;  // per inverter, p.u.
  Eigen::VectorXd q_star;  // per inverter, p.u.
  Eigen::VectorXd v_star;  // per inverter, p.u., > 0
  Eigen::VectorXd theta;   // per inverter, rad, relative to the first inverter
  bool has_angles = false;
  // Planar steady-state voltages at passive buses (2P), filled by the
  // mixed-network completion solve; empty for all-inverter cases.
  Eigen::VectorXd passive_v;

  int n() const { return static_cast<int>(v_star.size()); }
};

inline void check_profile(const NetworkCase& c, const SetpointProfile& pr) {
  const int n = c.n_inverters();
  if (pr.p_star.size() != n || pr.q_star.size() != n || pr.v_star.size() != n)
    throw DimensionMismatch("profile arrays do not match the inverter count");
  if (pr.has_angles && pr.theta.size() != n)
    throw DimensionMismatch("profile angle vector does not match the inverter count");
  for (int k = 0; k < n; ++k)
    if (!(pr.v_star(k) > 0.0))
      throw ValidationError("voltage set-point must be positive at inverter " + std::to_string(k));
}

// ---------------------------------------------------------------------------
// Branch powers. Both closed forms of the steady-state power injected into a
// branch at one terminal; they agree identically and are cross-checked in
// the test suite.
// ---------------------------------------------------------------------------
struct BranchPower {
  double p = 0.0;
  double q = 0.0;
};

// Direct resistive/reactive form. Inputs: terminal voltage magnitudes v_at
// (this terminal) and v_other, relative angle theta_other_at = theta_other -
// theta_at, branch resistance and reactance.
inline BranchPower branch_power_direct(double y, double r, double x, double v_at,
                                       double v_other, double theta_other_at) {
  const double c = std::cos(theta_other_at), s = std::sin(theta_other_at);
  BranchPower out;
  out.p = y * y * (v_at * v_at * r - v_at * v_other * (r * c + x * s));
  out.q = y * y * (v_at * v_at * x - v_at * v_other * (x * c - r * s));
  return out;
}

// Impedance-angle form of the same quantity.
inline BranchPower branch_power_trig(double y, double kappa, double v_at, double v_other,
                                     double theta_other_at) {
  BranchPower out;
  out.p = v_at * v_at * y *
          (std::cos(kappa) - (v_other / v_at) * std::cos(theta_other_at - kappa));
  out.q = v_at * v_at * y *
          (std::sin(kappa) - (v_other / v_at) * std::sin(kappa - theta_other_at));
  return out;
}

// Power injected into branch l at terminal `at_bus` for an all-inverter case
// with a fully angled profile.
inline BranchPower branch_powers(const NetworkCase& c, const SetpointProfile& pr, int l,
                                 int at_bus) {
  if (!c.all_inverter())
    throw AssumptionViolated("branch set-point powers are defined on all-inverter cases");
  if (!pr.has_angles) throw InconsistentProfile("profile has no solved angles");
  check_profile(c, pr);
  const Branch& b = c.branches.at(static_cast<std::size_t>(l));
  const int other = (at_bus == b.from) ? b.to : b.from;
  if (at_bus != b.from && at_bus != b.to)
    throw ValidationError("bus is not a terminal of the requested branch");
  const double y = edge_weight(b);
  return branch_power_direct(y, b.r, b.x, pr.v_star(at_bus), pr.v_star(other),
                             pr.theta(other) - pr.theta(at_bus));
}

// ---------------------------------------------------------------------------
// Nodal consistency: residual between set-point injections and the sum of
// branch powers entering the network at each inverter.
// ---------------------------------------------------------------------------
struct ConsistencyReport {
  Eigen::VectorXd p_residual;  // per inverter, absolute value
  Eigen::VectorXd q_residual;
  Eigen::VectorXd p_implied;   // nodal sums of branch powers
  Eigen::VectorXd q_implied;
  double tol = 0.0;
  bool pass = false;
};

inline ConsistencyReport verify_consistency(const NetworkCase& c, const SetpointProfile& pr,
                                            double tol = 5e-3) {
  if (!c.all_inverter())
    throw AssumptionViolated("consistency verification is defined on all-inverter cases");
  if (!pr.has_angles) throw InconsistentProfile("profile has no solved angles");
  check_profile(c, pr);
  const int n = c.n_buses();
  ConsistencyReport rep;
  rep.p_implied = Eigen::VectorXd::Zero(n);
  rep.q_implied = Eigen::VectorXd::Zero(n);
  for (int l = 0; l < c.n_branches(); ++l) {
    const Branch& b = c.branches[l];
    const BranchPower at_from = branch_powers(c, pr, l, b.from);
    const BranchPower at_to = branch_powers(c, pr, l, b.to);
    rep.p_implied(b.from) += at_from.p;
    rep.q_implied(b.from) += at_from.q;
    rep.p_implied(b.to) += at_to.p;
    rep.q_implied(b.to) += at_to.q;
  }
  rep.p_residual = (pr.p_star - rep.p_implied).cwiseAbs();
  rep.q_residual = (pr.q_star - rep.q_implied).cwiseAbs();
  rep.tol = tol;
  rep.pass = rep.p_residual.maxCoeff() < tol && rep.q_residual.maxCoeff() < tol;
  return rep;
}

// ---------------------------------------------------------------------------
// Angle solver for all-inverter cases: Newton iteration on the nodal
// active-power mismatch at buses 2..N with the first angle pinned to zero and
// all magnitudes fixed at v*. Reactive injections are implied outputs.
// ---------------------------------------------------------------------------
namespace detail {

inline Eigen::VectorXd nodal_active_power(const NetworkCase& c, const Eigen::VectorXd& v_star,
                                          const Eigen::VectorXd& theta) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(c.n_buses());
  for (int l = 0; l < c.n_branches(); ++l) {
    const Branch& b = c.branches[l];
    const double y = edge_weight(b);
    p(b.from) += branch_power_direct(y, b.r, b.x, v_star(b.from), v_star(b.to),
                                     theta(b.to) - theta(b.from))
                     .p;
    p(b.to) += branch_power_direct(y, b.r, b.x, v_star(b.to), v_star(b.from),
                                   theta(b.from) - theta(b.to))
                   .p;
  }
  return p;
}

}  // namespace detail

// Solves for angles achieving the requested active injections at buses 2..N.
// The first bus is the reference (its angle is zero and its injection is
// implied, absorbing network losses).
inline Eigen::VectorXd solve_angles(const NetworkCase& c, const Eigen::VectorXd& p_star,
                                    const Eigen::VectorXd& v_star, int max_iters = 50,
                                    double tol = 1e-12) {
  if (!c.all_inverter())
    throw AssumptionViolated("the reduced angle solver requires an all-inverter case");
  const int n = c.n_buses();
  if (p_star.size() != n || v_star.size() != n)
    throw DimensionMismatch("injection vectors do not match the bus count");
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(n);
  const int unknowns = n - 1;
  if (unknowns == 0) return theta;

  auto residual = [&](const Eigen::VectorXd& th) {
    const Eigen::VectorXd p = detail::nodal_active_power(c, v_star, th);
    return (p.tail(unknowns) - p_star.tail(unknowns)).eval();
  };

  Eigen::VectorXd res = residual(theta);
  for (int iter = 0; iter < max_iters; ++iter) {
    if (res.norm() < tol) return theta;
    Eigen::MatrixXd jac(unknowns, unknowns);
    const double h = 1e-7;
    for (int cidx = 0; cidx < unknowns; ++cidx) {
      Eigen::VectorXd tp = theta;
      tp(cidx + 1) += h;
      jac.col(cidx) = (residual(tp) - res) / h;
    }
    const Eigen::VectorXd step = jac.fullPivLu().solve(res);
    if (!step.allFinite() || step.norm() > 1e3)
      throw NoConvergence("angle solve diverged (injections exceed transfer capacity)");
    theta.tail(unknowns) -= step;
    res = residual(theta);
  }
  if (res.norm() < tol) return theta;
  throw NoConvergence("angle solve did not converge in " + std::to_string(max_iters) +
                      " iterations (residual " + std::to_string(res.norm()) + ")");
}

// ---------------------------------------------------------------------------
// Mixed-network completion: for cases with passive buses, solve the
// synchronous steady state with the first inverter as reference, the
// remaining inverters holding (p, |v|), and passive buses as zero-injection
// nodes whose shunt and load elements are folded into the bus admittance.
// ---------------------------------------------------------------------------
struct PhasorSolution {
  Eigen::VectorXd theta;      // per inverter, reference first
  Eigen::VectorXd p_implied;  // per inverter (reference entry absorbs losses)
  Eigen::VectorXd q_implied;  // per inverter
  Eigen::VectorXd passive_v;  // 2P planar voltages, case passive order
};

inline PhasorSolution solve_injections_mixed(const NetworkCase& c,
                                             const Eigen::VectorXd& p_star,
                                             const Eigen::VectorXd& v_star,
                                             int max_iters = 60, double tol = 1e-13) {
  using cx = std::complex<double>;
  const std::vector<int> inv = c.inverter_indices();
  const std::vector<int> pas = c.passive_indices();
  const int ni = static_cast<int>(inv.size());
  const int np = static_cast<int>(pas.size());
  if (p_star.size() != ni || v_star.size() != ni)
    throw DimensionMismatch("injection vectors do not match the inverter count");

  Eigen::MatrixXcd ybus = Eigen::MatrixXcd::Zero(c.n_buses(), c.n_buses());
  for (const Branch& b : c.branches) {
    const cx y = 1.0 / cx(b.r, b.x);
    ybus(b.from, b.from) += y;
    ybus(b.to, b.to) += y;
    ybus(b.from, b.to) -= y;
    ybus(b.to, b.from) -= y;
  }
  for (int k = 0; k < c.n_buses(); ++k) {
    const Bus& bus = c.buses[k];
    if (bus.kind != BusKind::passive) continue;
    ybus(k, k) += cx(0.0, bus.shunt_b);
    if (bus.has_load) ybus(k, k) += 1.0 / cx(bus.load_r, bus.load_x);
  }

  Eigen::MatrixXcd yred;          // inverter-terminal admittance, passive nodes eliminated
  Eigen::MatrixXcd ypp_inv_ypi;   // recovery map for passive voltages
  if (np > 0) {
    Eigen::MatrixXcd ypp(np, np), ypi(np, ni), yip(ni, np), yii(ni, ni);
    for (int a = 0; a < np; ++a)
      for (int b = 0; b < np; ++b) ypp(a, b) = ybus(pas[a], pas[b]);
    for (int a = 0; a < np; ++a)
      for (int b = 0; b < ni; ++b) ypi(a, b) = ybus(pas[a], inv[b]);
    for (int a = 0; a < ni; ++a)
      for (int b = 0; b < np; ++b) yip(a, b) = ybus(inv[a], pas[b]);
    for (int a = 0; a < ni; ++a)
      for (int b = 0; b < ni; ++b) yii(a, b) = ybus(inv[a], inv[b]);
    ypp_inv_ypi = ypp.fullPivLu().solve(ypi);
    yred = yii - yip * ypp_inv_ypi;
  } else {
    yred = ybus;
  }

  auto terminal_power = [&](const Eigen::VectorXd& th) {
    Eigen::VectorXcd vi(ni);
    for (int k = 0; k < ni; ++k) vi(k) = std::polar(v_star(k), th(k));
    return (vi.array() * (yred * vi).array().conjugate()).matrix().eval();
  };

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(ni);
  const int unknowns = ni - 1;
  auto residual = [&](const Eigen::VectorXd& th) {
    const Eigen::VectorXcd s = terminal_power(th);
    Eigen::VectorXd r(unknowns);
    for (int k = 0; k < unknowns; ++k) r(k) = s(k + 1).real() - p_star(k + 1);
    return r;
  };

  if (unknowns > 0) {
    Eigen::VectorXd res = residual(theta);
    int iter = 0;
    for (; iter < max_iters; ++iter) {
      if (res.norm() < tol) break;
      Eigen::MatrixXd jac(unknowns, unknowns);
      const double h = 1e-7;
      for (int cidx = 0; cidx < unknowns; ++cidx) {
        Eigen::VectorXd tp = theta;
        tp(cidx + 1) += h;
        jac.col(cidx) = (residual(tp) - res) / h;
      }
      const Eigen::VectorXd step = jac.fullPivLu().solve(res);
      if (!step.allFinite() || step.norm() > 1e3)
        throw NoConvergence("steady-state solve diverged");
      theta.tail(unknowns) -= step;
      res = residual(theta);
    }
    if (res.norm() >= tol && iter == max_iters)
      throw NoConvergence("steady-state solve did not converge");
  }

  PhasorSolution sol;
  sol.theta = theta;
  const Eigen::VectorXcd s = terminal_power(theta);
  sol.p_implied = s.real();
  sol.q_implied = s.imag();
  sol.passive_v = Eigen::VectorXd::Zero(2 * np);
  if (np > 0) {
    Eigen::VectorXcd vi(ni);
    for (int k = 0; k < ni; ++k) vi(k) = std::polar(v_star(k), theta(k));
    const Eigen::VectorXcd vp = -(ypp_inv_ypi * vi);
    for (int a = 0; a < np; ++a) {
      sol.passive_v(2 * a) = vp(a).real();
      sol.passive_v(2 * a + 1) = vp(a).imag();
    }
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Profile completion. NaN entries in the given p/q arrays are filled from the
// solved steady state (the first inverter's p is always implied when NaN,
// absorbing losses); non-NaN entries are kept as the controller's targets
// even when they are only approximately consistent.
// ---------------------------------------------------------------------------
inline SetpointProfile complete_profile(const NetworkCase& c, Eigen::VectorXd p_star,
                                        Eigen::VectorXd q_star, const Eigen::VectorXd& v_star) {
  const int ni = c.n_inverters();
  if (p_star.size() != ni || q_star.size() != ni || v_star.size() != ni)
    throw DimensionMismatch("profile arrays do not match the inverter count");

  SetpointProfile pr;
  pr.v_star = v_star;
  if (c.all_inverter()) {
    // The reduced solver needs definite targets at buses 2..N.
    for (int k = 1; k < ni; ++k)
      if (std::isnan(p_star(k)))
        throw ValidationError("active set-points at non-reference inverters are required");
    Eigen::VectorXd p_solve = p_star;
    if (std::isnan(p_solve(0))) p_solve(0) = 0.0;  // unused by the reduced solver
    pr.theta = solve_angles(c, p_solve, v_star);
    pr.has_angles = true;
    // Implied injections from the solved angles fill any NaN targets.
    SetpointProfile tmp = pr;
    tmp.p_star = Eigen::VectorXd::Zero(ni);
    tmp.q_star = Eigen::VectorXd::Zero(ni);
    const ConsistencyReport rep = verify_consistency(c, tmp, 1e9);
    for (int k = 0; k < ni; ++k) {
      if (std::isnan(p_star(k))) p_star(k) = rep.p_implied(k);
      if (std::isnan(q_star(k))) q_star(k) = rep.q_implied(k);
    }
  } else {
    for (int k = 1; k < ni; ++k)
      if (std::isnan(p_star(k)))
        throw ValidationError("active set-points at non-reference inverters are required");
    Eigen::VectorXd p_solve = p_star;
    if (std::isnan(p_solve(0))) p_solve(0) = 0.0;
    const PhasorSolution sol = solve_injections_mixed(c, p_solve, v_star);
    pr.theta = sol.theta;
    pr.has_angles = true;
    pr.passive_v = sol.passive_v;
    for (int k = 0; k < ni; ++k) {
      if (std::isnan(p_star(k))) p_star(k) = sol.p_implied(k);
      if (std::isnan(q_star(k))) q_star(k) = sol.q_implied(k);
    }
  }
  pr.p_star = p_star;
  pr.q_star = q_star;
  return pr;
}

// ---------------------------------------------------------------------------
// Synchronous-frame geometry.
// ---------------------------------------------------------------------------

// Target planar voltages: every inverter at its set-point magnitude and
// relative angle, the whole pattern rotated by `angle0`.
inline Eigen::VectorXd target_voltages(const SetpointProfile& pr, double angle0 = 0.0) {
  const int n = pr.n();
  if (!pr.has_angles) throw InconsistentProfile("profile has no solved angles");
  Eigen::VectorXd v(2 * n);
  for (int k = 0; k < n; ++k) {
    v(2 * k) = pr.v_star(k) * std::cos(pr.theta(k) + angle0);
    v(2 * k + 1) = pr.v_star(k) * std::sin(pr.theta(k) + angle0);
  }
  return v;
}

// 2N x 2 frame matrix whose two columns span the synchronous subspace: row
// block k is v*_k R(theta_k) (angles relative to the first inverter).
inline Eigen::MatrixXd synchronous_frame(const SetpointProfile& pr) {
  const int n = pr.n();
  if (!pr.has_angles) throw InconsistentProfile("profile has no solved angles");
  Eigen::MatrixXd s(2 * n, 2);
  for (int k = 0; k < n; ++k) s.block<2, 2>(2 * k, 0) = pr.v_star(k) * rot(pr.theta(k));
  return s;
}

// Orthogonal projector onto the complement of the synchronous subspace:
// P = I - S S^T / sum_k v*_k^2. Distance-to-synchrony seminorm is
// sqrt(v^T P v).
inline Eigen::MatrixXd synchronous_projector(const SetpointProfile& pr) {
  const Eigen::MatrixXd s = synchronous_frame(pr);
  const double scale = pr.v_star.squaredNorm();
  const int n2 = static_cast<int>(s.rows());
  return Eigen::MatrixXd::Identity(n2, n2) - s * s.transpose() / scale;
}

}  // namespace dvoc
