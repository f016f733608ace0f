#pragma once

// Linearized stability analysis: equilibrium refinement in the rotating
// frame (with a free frame-rate unknown and a phase gauge), eigenvalue
// spectra and damping ratios, origin instability, and the two parameter
// sweeps (single-line admittance, gain grid).

#include <atomic>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dvoc/certify.hpp"
#include "dvoc/core.hpp"
#include "dvoc/simulate.hpp"
#include "dvoc/system.hpp"

namespace dvoc {

// ---------------------------------------------------------------------------
// Equilibrium refinement. The closed loop is rotation-invariant, so a
// solution is only defined up to a common phase and may rotate at a small
// residual rate. Newton therefore solves the bordered system
//   f(x) - w J x = 0,  gauge(x) = 0
// in the unknowns (x, w), where J generates the common rotation and the
// gauge pins the y-component of the first active inverter voltage.
// ---------------------------------------------------------------------------
struct EquilibriumResult {
  Eigen::VectorXd x;          // full state, masked entries zero
  double omega_shift = 0.0;   // residual frame rate, per-unit
  double residual = 0.0;      // final infinity-norm of the defect
  int iterations = 0;
  std::vector<int> active;    // indices of active state entries
};

namespace detail {

inline std::vector<int> active_entries(const StateLayout& s, const ActiveMask& m) {
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(s.dim));
  for (int k = 0; k < s.n_inv; ++k)
    if (m.inverter[static_cast<std::size_t>(k)]) {
      idx.push_back(s.off_v + 2 * k);
      idx.push_back(s.off_v + 2 * k + 1);
    }
  for (int l = 0; l < s.n_br; ++l)
    if (m.branch[static_cast<std::size_t>(l)]) {
      idx.push_back(s.off_i + 2 * l);
      idx.push_back(s.off_i + 2 * l + 1);
    }
  for (int i = s.off_vp; i < s.dim; ++i) idx.push_back(i);
  return idx;
}

}  // namespace detail

inline EquilibriumResult find_equilibrium(const SystemModel& model, const ActiveMask& mask,
                                          std::optional<Eigen::VectorXd> seed = std::nullopt,
                                          int max_iters = 50, double tol = 1e-12) {
  const StateLayout& s = model.layout;
  const std::vector<int> act = detail::active_entries(s, mask);
  const int na = static_cast<int>(act.size());
  if (na == 0) throw DegenerateNetwork("no active states remain");

  // Gauge: y-component of the first active inverter voltage.
  int gauge_entry = -1;
  for (int k = 0; k < s.n_inv; ++k)
    if (mask.inverter[static_cast<std::size_t>(k)]) {
      gauge_entry = s.off_v + 2 * k + 1;
      break;
    }
  if (gauge_entry < 0) throw DegenerateNetwork("no active inverter remains");
  int gauge_col = -1;
  for (int i = 0; i < na; ++i)
    if (act[static_cast<std::size_t>(i)] == gauge_entry) gauge_col = i;

  Eigen::VectorXd x = seed ? *seed : steady_seed(model.net, model.profile, s);
  for (int k = 0; k < s.n_inv; ++k)
    if (!mask.inverter[static_cast<std::size_t>(k)]) x.segment<2>(s.off_v + 2 * k).setZero();
  for (int l = 0; l < s.n_br; ++l)
    if (!mask.branch[static_cast<std::size_t>(l)]) x.segment<2>(s.off_i + 2 * l).setZero();

  const Eigen::MatrixXd jgen = layout_J(s);
  double w = 0.0;

  EquilibriumResult out;
  for (int iter = 0; iter < max_iters; ++iter) {
    const Eigen::VectorXd f = model.rhs_pu(mask, x) - w * (jgen * x);
    Eigen::VectorXd g(na + 1);
    for (int i = 0; i < na; ++i) g(i) = f(act[static_cast<std::size_t>(i)]);
    g(na) = x(gauge_entry);
    const double res = g.lpNorm<Eigen::Infinity>();
    out.residual = res;
    out.iterations = iter;
    if (res < tol) {
      out.x = x;
      out.omega_shift = w;
      out.active = act;
      return out;
    }

    const Eigen::MatrixXd a = model.jac_pu(mask, x) - w * jgen;
    const Eigen::VectorXd jx = jgen * x;
    Eigen::MatrixXd big = Eigen::MatrixXd::Zero(na + 1, na + 1);
    for (int i = 0; i < na; ++i) {
      for (int j = 0; j < na; ++j)
        big(i, j) = a(act[static_cast<std::size_t>(i)], act[static_cast<std::size_t>(j)]);
      big(i, na) = -jx(act[static_cast<std::size_t>(i)]);
    }
    big(na, gauge_col) = 1.0;

    const Eigen::VectorXd step = big.fullPivLu().solve(-g);
    if (!all_finite(step) || step.lpNorm<Eigen::Infinity>() > 1e3)
      throw NoConvergence("equilibrium refinement diverged (step norm too large)");
    for (int i = 0; i < na; ++i) x(act[static_cast<std::size_t>(i)]) += step(i);
    w += step(na);
  }
  throw NoConvergence("equilibrium refinement did not reach tolerance; residual=" +
                      std::to_string(out.residual));
}

// ---------------------------------------------------------------------------
// Damping spectrum of a system matrix. The rotation symmetry contributes one
// structural zero eigenvalue; it is identified as the smallest-magnitude
// eigenvalue and must be negligible against the spectral radius, otherwise
// the spectrum is flagged irregular. The minimum damping ratio is taken over
// all other eigenvalues, zeta = -Re(lambda) / |lambda|.
// ---------------------------------------------------------------------------
struct DampingSpectrum {
  Eigen::VectorXcd eigenvalues;  // units of the input matrix
  double zeta_min = std::numeric_limits<double>::quiet_NaN();
  int zero_index = -1;
  bool zero_regular = false;
  int argmin_zeta = -1;
};

inline DampingSpectrum damping_spectrum(const Eigen::MatrixXd& a) {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(a, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) throw EigensolveFailure("eigenvalue iteration failed");
  DampingSpectrum out;
  out.eigenvalues = solver.eigenvalues();
  const int n = static_cast<int>(out.eigenvalues.size());
  if (n == 0) throw EigensolveFailure("empty spectrum");
  double min_abs = std::numeric_limits<double>::infinity();
  double max_abs = 0.0;
  for (int i = 0; i < n; ++i) {
    const double m = std::abs(out.eigenvalues(i));
    max_abs = std::max(max_abs, m);
    if (m < min_abs) {
      min_abs = m;
      out.zero_index = i;
    }
  }
  out.zero_regular = max_abs > 0.0 && min_abs < 1e-6 * max_abs;
  double zmin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    if (i == out.zero_index) continue;
    const double m = std::abs(out.eigenvalues(i));
    if (m == 0.0) continue;
    const double z = -out.eigenvalues(i).real() / m;
    if (z < zmin) {
      zmin = z;
      out.argmin_zeta = i;
    }
  }
  out.zeta_min = zmin;
  return out;
}

// ---------------------------------------------------------------------------
// Linearization about a refined equilibrium. Eigenvalues are reported in SI
// angular units (rad/s); the Jacobian is evaluated in the frame rotating at
// the equilibrium's residual rate so the solution is a true fixed point.
// ---------------------------------------------------------------------------
struct LinearizationResult {
  EquilibriumResult equilibrium;
  Eigen::MatrixXd jacobian_si;  // active subspace, rad/s
  DampingSpectrum spectrum;     // eigenvalues in rad/s
};

inline LinearizationResult linearize(const SystemModel& model, const ActiveMask& mask,
                                     std::optional<Eigen::VectorXd> seed = std::nullopt) {
  LinearizationResult out;
  out.equilibrium = find_equilibrium(model, mask, std::move(seed));
  const Eigen::MatrixXd a_pu =
      model.jac_pu(mask, out.equilibrium.x) - out.equilibrium.omega_shift * layout_J(model.layout);
  const std::vector<int>& act = out.equilibrium.active;
  const int na = static_cast<int>(act.size());
  Eigen::MatrixXd a_act(na, na);
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < na; ++j)
      a_act(i, j) = a_pu(act[static_cast<std::size_t>(i)], act[static_cast<std::size_t>(j)]);
  out.jacobian_si = model.gains.omega0 * a_act;
  out.spectrum = damping_spectrum(out.jacobian_si);
  return out;
}

inline LinearizationResult linearize(const SystemModel& model) {
  return linearize(model, model.all_active());
}

// ---------------------------------------------------------------------------
// Origin repulsion: the zero state is an equilibrium; startup relies on it
// being unstable. Reports the largest real part of the origin spectrum.
// ---------------------------------------------------------------------------
struct OriginReport {
  double max_real_si = 0.0;  // rad/s
  bool unstable = false;
};

inline OriginReport origin_instability(const SystemModel& model) {
  const ActiveMask mask = model.all_active();
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(model.layout.dim);
  const Eigen::MatrixXd a = model.gains.omega0 * model.jac_pu(mask, zero);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(a, false);
  if (solver.info() != Eigen::Success) throw EigensolveFailure("eigenvalue iteration failed");
  OriginReport rep;
  rep.max_real_si = solver.eigenvalues().real().maxCoeff();
  rep.unstable = rep.max_real_si > 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Single-line admittance sweep. The chosen branch's impedance magnitude is
// set to 1/y at its original impedance angle, set-point angles are re-solved
// for the same dispatch, and the minimum damping ratio is recorded. Adjacent
// converged points must connect continuously in angle space; a jump above
// 0.5 rad marks a gap in the traced branch of equilibria.
// ---------------------------------------------------------------------------
struct AdmittanceSweepPoint {
  double value = 0.0;  // p.u. admittance magnitude
  bool converged = false;
  double zeta_min = std::numeric_limits<double>::quiet_NaN();
  double omega_shift = 0.0;
  double angle_jump = 0.0;  // max angle change versus previous converged point
  bool continuous = true;
};

struct AdmittanceSweepResult {
  int branch = -1;
  std::vector<AdmittanceSweepPoint> points;
};

inline AdmittanceSweepResult sweep_admittance(const SystemModel& model, int branch,
                                              const std::vector<double>& values_pu) {
  if (branch < 0 || branch >= model.net.n_branches())
    throw ValidationError("sweep branch index out of range");
  AdmittanceSweepResult result;
  result.branch = branch;
  const Branch base = model.net.branches[static_cast<std::size_t>(branch)];
  const double ratio = base.x / base.r;  // preserve the branch's own angle

  Eigen::VectorXd prev_theta;
  for (double y : values_pu) {
    AdmittanceSweepPoint pt;
    pt.value = y;
    try {
      if (!(y > 0.0)) throw ValidationError("admittance values must be positive");
      NetworkCase net = model.net;
      Branch& b = net.branches[static_cast<std::size_t>(branch)];
      const double zmag = 1.0 / y;
      b.r = zmag / std::sqrt(1.0 + ratio * ratio);
      b.x = ratio * b.r;

      SetpointProfile pr = model.profile;
      pr.has_angles = false;
      pr = complete_profile(net, pr.p_star, pr.q_star, pr.v_star);

      SystemModel m2 = SystemModel::make(net, pr, model.gains);
      const LinearizationResult lin = linearize(m2);
      pt.converged = true;
      pt.zeta_min = lin.spectrum.zeta_min;
      pt.omega_shift = lin.equilibrium.omega_shift;

      Eigen::VectorXd theta(pr.n());
      for (int k = 0; k < pr.n(); ++k) theta(k) = pr.theta(k);
      if (prev_theta.size() == theta.size()) {
        pt.angle_jump = (theta - prev_theta).lpNorm<Eigen::Infinity>();
        pt.continuous = pt.angle_jump < 0.5;
      }
      prev_theta = theta;
    } catch (const Error&) {
      pt.converged = false;
      pt.continuous = false;
    }
    result.points.push_back(pt);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Gain grid sweep. Each (eta, alpha) point is graded:
//   a  certificate passes (analytically guaranteed region)
//   b  unstable: linearization has a growing mode, no equilibrium is found,
//      or the black-start simulation diverges
//   c  stable but the startup transient overshoots: peak inverter current
//      exceeds the threshold ratio times its steady value
//   d  locally stable otherwise
// ---------------------------------------------------------------------------
struct GainGridOptions {
  double sim_duration = 10.0;     // seconds of black start used for grading
  double cadence = 1e-3;          // seconds
  double overshoot_ratio = 1.2;   // peak / steady threshold
  double settle_window = 5e-3;    // seconds ignored at the start of the window
  unsigned long long seed = 42;
  int jobs = 0;                   // 0: hardware concurrency
};

struct GainGridResult {
  std::vector<double> etas;
  std::vector<double> alphas;
  // Row-major over (eta index, alpha index).
  std::vector<char> labels;
  std::vector<double> zeta_min;  // NaN where no equilibrium was found

  char label(std::size_t ie, std::size_t ia) const { return labels[ie * alphas.size() + ia]; }
};

// Logarithmically spaced grid helper.
inline std::vector<double> log_space(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi > lo) || n < 2) throw ValidationError("bad logarithmic grid");
  std::vector<double> v(static_cast<std::size_t>(n));
  const double step = (std::log(hi) - std::log(lo)) / static_cast<double>(n - 1);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = std::exp(std::log(lo) + step * i);
  return v;
}

inline GainGridResult sweep_gains(const SystemModel& model, std::vector<double> etas,
                                  std::vector<double> alphas, const GainGridOptions& opts = {}) {
  GainGridResult grid;
  grid.etas = std::move(etas);
  grid.alphas = std::move(alphas);
  const std::size_t total = grid.etas.size() * grid.alphas.size();
  grid.labels.assign(total, '?');
  grid.zeta_min.assign(total, std::numeric_limits<double>::quiet_NaN());

  const auto grade_point = [&](std::size_t flat) {
    const std::size_t ie = flat / grid.alphas.size();
    const std::size_t ia = flat % grid.alphas.size();
    GainSettings g = model.gains;
    g.eta = grid.etas[ie];
    g.alpha = grid.alphas[ia];

    try {
      const StabilityCertificate cert = condition2(model.net, model.profile, g);
      if (cert.pass) {
        grid.labels[flat] = 'a';
        // still record the damping for the map
      }
    } catch (const Error&) {
      // certificate not applicable to this network; fall through to grading
    }

    SystemModel m2 = model;
    m2.gains = g;
    m2.km = controller_matrices(m2.profile, g.kappa);

    double steady_peak = 0.0;
    try {
      const LinearizationResult lin = linearize(m2);
      grid.zeta_min[flat] = lin.spectrum.zeta_min;
      if (grid.labels[flat] == 'a') return;
      if (!(lin.spectrum.zeta_min > 0.0)) {
        grid.labels[flat] = 'b';
        return;
      }
      // Steady inverter current peak from the refined equilibrium.
      const Eigen::VectorXd& xeq = lin.equilibrium.x;
      Eigen::VectorXd bus_out = Eigen::VectorXd::Zero(2 * m2.net.n_buses());
      for (int l = 0; l < m2.layout.n_br; ++l) {
        const Eigen::Vector2d il = m2.layout.i_br(xeq, l);
        bus_out.segment<2>(2 * m2.net.branches[l].from) += il;
        bus_out.segment<2>(2 * m2.net.branches[l].to) -= il;
      }
      for (int k = 0; k < m2.layout.n_inv; ++k)
        steady_peak = std::max(
            steady_peak,
            bus_out.segment<2>(2 * m2.layout.inv_bus[static_cast<std::size_t>(k)]).norm());
    } catch (const Error&) {
      if (grid.labels[flat] != 'a') grid.labels[flat] = 'b';
      return;
    }

    try {
      Scenario sc;
      sc.init = Scenario::Init::black_start;
      sc.duration = opts.sim_duration;
      sc.cadence = opts.cadence;
      sc.seed = opts.seed;
      const ScenarioResult run = run_scenario(m2, sc);
      if (run.series.diverged) {
        grid.labels[flat] = 'b';
        return;
      }
      const double peak =
          max_inverter_current(m2.net, m2.layout, run.series, opts.settle_window);
      grid.labels[flat] = peak > opts.overshoot_ratio * steady_peak ? 'c' : 'd';
    } catch (const Error&) {
      grid.labels[flat] = 'b';
    }
  };

  int jobs = opts.jobs > 0 ? opts.jobs
                           : static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min({jobs, 16, static_cast<int>(total)}));
  if (jobs == 1) {
    for (std::size_t i = 0; i < total; ++i) grade_point(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(jobs));
    for (int j = 0; j < jobs; ++j)
      pool.emplace_back([&]() {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= total) return;
          grade_point(i);
        }
      });
    for (std::thread& th : pool) th.join();
  }
  return grid;
}

}  // namespace dvoc
