#pragma once

// Analytic stability certification: the graph-level synchronization
// condition in both its angle and power forms, the explicit gain bound, the
// Lyapunov functionals (voltage-space V, branch-error W, composite nu), the
// per-sample decrease audits, and randomized checks of the supporting
// algebraic inequalities.

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dvoc/control.hpp"
#include "dvoc/core.hpp"
#include "dvoc/network.hpp"
#include "dvoc/setpoints.hpp"
#include "dvoc/simulate.hpp"
#include "dvoc/system.hpp"

namespace dvoc {

namespace detail {

// Certificates require an all-inverter network with a uniform
// resistance-to-reactance ratio and a controller whose impedance angle
// matches the network's.
inline RhoInfo certificate_prereqs(const NetworkCase& c, const SetpointProfile& pr,
                                   const GainSettings& g) {
  if (!c.all_inverter())
    throw AssumptionViolated("certificates are defined for all-inverter cases");
  const RhoInfo rho = rho_info(c);
  if (!rho.uniform)
    throw AssumptionViolated("certificates require a uniform resistance-to-reactance ratio");
  if (std::abs(g.kappa - rho.kappa) > 1e-9)
    throw AssumptionViolated("controller impedance angle must match the network");
  if (!pr.has_angles) throw InconsistentProfile("profile has no solved angles");
  return rho;
}

inline double theta_bar_all_pairs(const SetpointProfile& pr) {
  double worst = 0.0;
  for (int j = 0; j < pr.n(); ++j)
    for (int k = j + 1; k < pr.n(); ++k)
      worst = std::max(worst, std::abs(pr.theta(j) - pr.theta(k)));
  return worst;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Certificate result. `c` is the decay constant the gain bound was evaluated
// at; when the caller does not fix it, the midpoint c_max/2 is used and the
// supremum of the bound (its value at c_max) is reported alongside.
// ---------------------------------------------------------------------------
struct StabilityCertificate {
  std::string variant;  // "angle" or "power"
  bool pass = false;
  bool graph_pass = false;  // network inequality holds
  bool eta_pass = false;    // eta below the explicit bound
  double c = 0.0;
  double c_max = 0.0;       // graph margin: largest admissible decay constant
  double eta_bound = 0.0;
  double eta_bound_sup = 0.0;
  double lhs_worst = 0.0;
  int lhs_argmax = -1;
  Eigen::VectorXd lhs_per_bus;
  double rhs_no_c = 0.0;  // right-hand side before subtracting c
  double lambda2 = 0.0;
  double k_minus_l_norm = 0.0;
  double y_norm = 0.0;
  double rho_hat = 0.0;
  double kappa = 0.0;
  double theta_bar = 0.0;
  double d_max = 0.0;
};

// Spectral norm of (stacked controller matrices - quasi-steady coupling).
inline double k_minus_l_norm(const NetworkCase& c, const SetpointProfile& pr,
                             const GainSettings& g) {
  const Eigen::MatrixXd k = controller_matrices(pr, g.kappa).stacked();
  return spectral_norm(k - reduced_coupling(c));
}

// Angle form of the synchronization condition plus the explicit gain bound.
inline StabilityCertificate condition2(const NetworkCase& c, const SetpointProfile& pr,
                                       const GainSettings& g,
                                       std::optional<double> c_fixed = std::nullopt) {
  const RhoInfo rho = detail::certificate_prereqs(c, pr, g);
  StabilityCertificate cert;
  cert.variant = "angle";
  cert.rho_hat = rho.rho_hat;
  cert.kappa = rho.kappa;
  cert.theta_bar = detail::theta_bar_all_pairs(pr);
  cert.lambda2 = algebraic_connectivity(weighted_laplacian(c));
  cert.d_max = max_weighted_degree(c);
  cert.y_norm = spectral_norm(admittance_operator(c));
  cert.k_minus_l_norm = k_minus_l_norm(c, pr, g);

  const int n = c.n_buses();
  cert.lhs_per_bus = Eigen::VectorXd::Zero(n);
  for (int l = 0; l < c.n_branches(); ++l) {
    const Branch& b = c.branches[l];
    const double y = edge_weight(b);
    auto add = [&](int k, int j) {
      const double ratio = pr.v_star(j) / pr.v_star(k);
      cert.lhs_per_bus(k) += y * std::abs(1.0 - ratio * std::cos(pr.theta(j) - pr.theta(k)));
    };
    add(b.from, b.to);
    add(b.to, b.from);
  }
  cert.lhs_worst = cert.lhs_per_bus.maxCoeff(&cert.lhs_argmax);

  double vmin = pr.v_star(0), vmax = pr.v_star(0);
  for (int k = 1; k < pr.n(); ++k) {
    vmin = std::min(vmin, pr.v_star(k));
    vmax = std::max(vmax, pr.v_star(k));
  }
  cert.rhs_no_c =
      0.5 * (1.0 + std::cos(cert.theta_bar)) * (vmin * vmin) / (vmax * vmax) * cert.lambda2;
  cert.c_max = cert.rhs_no_c - g.alpha - cert.lhs_worst;

  const auto eta_bound_at = [&](double cc) {
    return cc / (cert.rho_hat * cert.y_norm * (cc + 5.0 * cert.k_minus_l_norm));
  };
  if (c_fixed) {
    cert.c = *c_fixed;
    if (!(cert.c > 0.0)) throw ValidationError("decay constant c must be positive");
    cert.graph_pass = cert.c < cert.c_max;
  } else {
    cert.graph_pass = cert.c_max > 0.0;
    cert.c = cert.graph_pass ? 0.5 * cert.c_max : 0.0;
  }
  if (cert.graph_pass) {
    cert.eta_bound = eta_bound_at(cert.c);
    cert.eta_bound_sup = eta_bound_at(cert.c_max);
    cert.eta_pass = g.eta < cert.eta_bound;
  }
  cert.pass = cert.graph_pass && cert.eta_pass;
  return cert;
}

// Power form: the condition stated directly in terms of branch power flows,
// with a coarser (dispatch-only) gain bound.
inline StabilityCertificate prop2_powerform(const NetworkCase& c, const SetpointProfile& pr,
                                            const GainSettings& g,
                                            std::optional<double> c_fixed = std::nullopt) {
  const RhoInfo rho = detail::certificate_prereqs(c, pr, g);
  StabilityCertificate cert;
  cert.variant = "power";
  cert.rho_hat = rho.rho_hat;
  cert.kappa = rho.kappa;
  cert.theta_bar = detail::theta_bar_all_pairs(pr);
  cert.lambda2 = algebraic_connectivity(weighted_laplacian(c));
  cert.d_max = max_weighted_degree(c);
  cert.y_norm = spectral_norm(admittance_operator(c));
  cert.k_minus_l_norm = k_minus_l_norm(c, pr, g);

  const int n = c.n_buses();
  const double cos_k = std::cos(rho.kappa);
  const double sin_k = std::sin(rho.kappa);
  cert.lhs_per_bus = Eigen::VectorXd::Zero(n);
  for (int l = 0; l < c.n_branches(); ++l) {
    const Branch& b = c.branches[l];
    for (int end = 0; end < 2; ++end) {
      const int at = end == 0 ? b.from : b.to;
      const BranchPower bp = branch_powers(c, pr, l, at);
      const double vsq = pr.v_star(at) * pr.v_star(at);
      cert.lhs_per_bus(at) += (cos_k * std::abs(bp.p) + sin_k * std::abs(bp.q)) / vsq;
    }
  }
  cert.lhs_worst = cert.lhs_per_bus.maxCoeff(&cert.lhs_argmax);

  double vmin = pr.v_star(0), vmax = pr.v_star(0);
  double k_norm_max = 0.0;
  for (int k = 0; k < pr.n(); ++k) {
    vmin = std::min(vmin, pr.v_star(k));
    vmax = std::max(vmax, pr.v_star(k));
    k_norm_max = std::max(k_norm_max, std::hypot(pr.p_star(k), pr.q_star(k)) /
                                          (pr.v_star(k) * pr.v_star(k)));
  }
  cert.rhs_no_c = 0.5 * (vmin * vmin) / (vmax * vmax) * cert.lambda2;
  cert.c_max = cert.rhs_no_c - g.alpha - cert.lhs_worst;

  const auto eta_bound_at = [&](double cc) {
    return cc / (2.0 * cert.rho_hat * cert.d_max *
                 (cc + 5.0 * k_norm_max + 10.0 * cert.d_max));
  };
  if (c_fixed) {
    cert.c = *c_fixed;
    if (!(cert.c > 0.0)) throw ValidationError("decay constant c must be positive");
    cert.graph_pass = cert.c < cert.c_max;
  } else {
    cert.graph_pass = cert.c_max > 0.0;
    cert.c = cert.graph_pass ? 0.5 * cert.c_max : 0.0;
  }
  if (cert.graph_pass) {
    cert.eta_bound = eta_bound_at(cert.c);
    cert.eta_bound_sup = eta_bound_at(cert.c_max);
    cert.eta_pass = g.eta < cert.eta_bound;
  }
  cert.pass = cert.graph_pass && cert.eta_pass;
  return cert;
}

// ---------------------------------------------------------------------------
// Lyapunov machinery.
// ---------------------------------------------------------------------------
struct LyapunovConstants {
  double c = 0.0;
  double alpha1 = 0.0;  // weight of the magnitude term in V
  double beta1 = 0.0;   // 1 / |K - L|
  double beta2 = 0.0;   // rho_hat |Y|
  double gamma = 0.0;   // eta rho_hat |Y|
  double d = 0.0;       // interconnection weight beta1 / (beta1 + beta2)
  double k_minus_l_norm = 0.0;
  double y_norm = 0.0;
  double rho_hat = 0.0;
};

inline LyapunovConstants lyapunov_constants(const NetworkCase& c, const SetpointProfile& pr,
                                            const GainSettings& g, double c_decay) {
  const RhoInfo rho = detail::certificate_prereqs(c, pr, g);
  LyapunovConstants k;
  k.c = c_decay;
  k.rho_hat = rho.rho_hat;
  k.k_minus_l_norm = k_minus_l_norm(c, pr, g);
  k.y_norm = spectral_norm(admittance_operator(c));
  if (k.k_minus_l_norm < 1e-12)
    throw DegenerateNetwork("synchronization operator has negligible norm");
  k.alpha1 = c_decay / (5.0 * g.eta * k.k_minus_l_norm * k.k_minus_l_norm);
  k.beta1 = 1.0 / k.k_minus_l_norm;
  k.beta2 = k.rho_hat * k.y_norm;
  k.gamma = g.eta * k.rho_hat * k.y_norm;
  k.d = k.beta1 / (k.beta1 + k.beta2);
  return k;
}

// Voltage-space Lyapunov function: projection distance to the synchronous
// subspace plus a weighted magnitude-error term.
inline double lyap_V(const SetpointProfile& pr, const GainSettings& g, double alpha1,
                     const Eigen::VectorXd& v) {
  const Eigen::MatrixXd p = synchronous_projector(pr);
  double mag = 0.0;
  for (int k = 0; k < pr.n(); ++k) {
    const double e =
        (pr.v_star(k) * pr.v_star(k) - seg2(v, k).squaredNorm()) / pr.v_star(k);
    mag += e * e;
  }
  return 0.5 * v.dot(p * v) + 0.5 * g.eta * g.alpha * alpha1 * mag;
}

// Gradient of V (used by the chain-rule decrease audit).
inline Eigen::VectorXd lyap_V_grad(const SetpointProfile& pr, const GainSettings& g,
                                   double alpha1, const Eigen::VectorXd& v) {
  const Eigen::MatrixXd p = synchronous_projector(pr);
  return p * v - 2.0 * g.eta * g.alpha * alpha1 * phi_stacked(pr, v);
}

// Comparison function bounding the reduced-model speed:
// psi = eta (|K - L| |v|_S + alpha |Phi v|).
inline double lyap_psi(const NetworkCase& c, const SetpointProfile& pr, const GainSettings& g,
                       const Eigen::VectorXd& v) {
  const Eigen::MatrixXd p = synchronous_projector(pr);
  const double v_s = (p * v).norm();
  return g.eta * (k_minus_l_norm(c, pr, g) * v_s + g.alpha * phi_stacked(pr, v).norm());
}

// Branch-error Lyapunov function W and its exact decrease identity. The two
// quadratic terms split the error into a bus-injection component y_o and a
// cycle component y_n.
struct BranchErrorPieces {
  double w = 0.0;
  double y_o_norm = 0.0;  // |B y|
  double y_n_norm = 0.0;  // |B_n^T L_T y|
};

inline BranchErrorPieces branch_error_pieces(const NetworkCase& c, const Eigen::VectorXd& y) {
  if (y.size() != 2 * c.n_branches())
    throw DimensionMismatch("branch error vector does not match branch count");
  const RhoInfo rho = rho_info(c);
  if (!rho.uniform)
    throw AssumptionViolated("branch-error energy requires a uniform ratio network");
  const Eigen::MatrixXd b = incidence_planar(c);
  const Eigen::MatrixXd bn = nullspace_basis_planar(c);
  const Eigen::MatrixXd lt = inductance_matrix(c);
  BranchErrorPieces out;
  out.y_o_norm = (b * y).norm();
  out.y_n_norm = (bn.transpose() * (lt * y)).norm();
  out.w = 0.5 * rho.rho_hat * (out.y_o_norm * out.y_o_norm + out.y_n_norm * out.y_n_norm);
  return out;
}

inline double lyap_W(const NetworkCase& c, const Eigen::VectorXd& y) {
  return branch_error_pieces(c, y).w;
}

inline Eigen::VectorXd lyap_W_grad(const NetworkCase& c, const Eigen::VectorXd& y) {
  const RhoInfo rho = rho_info(c);
  const Eigen::MatrixXd b = incidence_planar(c);
  const Eigen::MatrixXd bn = nullspace_basis_planar(c);
  const Eigen::MatrixXd lt = inductance_matrix(c);
  return rho.rho_hat *
         (b.transpose() * (b * y) + lt * (bn * (bn.transpose() * (lt * y))));
}

// Composite function on the full state (all-inverter): weighted sum of the
// branch error energy and the voltage function.
struct LyapunovBreakdown {
  double v = 0.0;
  double w = 0.0;
  double nu = 0.0;
  double psi = 0.0;
  double y_o_norm = 0.0;
  double y_n_norm = 0.0;
};

inline LyapunovBreakdown lyap_nu(const NetworkCase& c, const SetpointProfile& pr,
                                 const GainSettings& g, const LyapunovConstants& k,
                                 const Eigen::VectorXd& x) {
  if (!c.all_inverter())
    throw AssumptionViolated("composite function is defined for all-inverter cases");
  const int n = c.n_buses(), m = c.n_branches();
  if (x.size() != 2 * (n + m)) throw DimensionMismatch("state does not match all-inverter layout");
  const Eigen::VectorXd v = x.head(2 * n);
  const Eigen::VectorXd i = x.segment(2 * n, 2 * m);
  const Eigen::VectorXd y = i - steady_state_currents(c, v).i_s;
  LyapunovBreakdown out;
  const BranchErrorPieces bp = branch_error_pieces(c, y);
  out.w = bp.w;
  out.y_o_norm = bp.y_o_norm;
  out.y_n_norm = bp.y_n_norm;
  out.v = lyap_V(pr, g, k.alpha1, v);
  out.psi = lyap_psi(c, pr, g, v);
  out.nu = k.d * out.w + (1.0 - k.d) * out.v;
  return out;
}

// ---------------------------------------------------------------------------
// Decrease audits: verify the monotonicity claims sample-by-sample along a
// trajectory, using the analytic chain rule in per-unit time.
// ---------------------------------------------------------------------------
struct DecreaseAudit {
  std::string claim;
  std::size_t n_samples = 0;
  std::size_t violations = 0;
  double min_slack = std::numeric_limits<double>::infinity();
  double worst_time = std::numeric_limits<double>::quiet_NaN();
  bool pass = false;
};

// Reduced model: dV/dtau <= -alpha1 psi^2 along v-trajectories.
inline DecreaseAudit decrease_audit_reduced(const NetworkCase& c, const SetpointProfile& pr,
                                            const GainSettings& g, const LyapunovConstants& k,
                                            const std::vector<double>& t,
                                            const std::vector<Eigen::VectorXd>& v_samples,
                                            double tol = 1e-8) {
  const ControllerMatrices km = controller_matrices(pr, g.kappa);
  const Eigen::MatrixXd lap_rot = reduced_coupling(c);
  DecreaseAudit audit;
  audit.claim = "reduced-model decrease";
  audit.n_samples = v_samples.size();
  for (std::size_t i = 0; i < v_samples.size(); ++i) {
    const Eigen::VectorXd& v = v_samples[i];
    const Eigen::VectorXd dv = rhs_reduced_pu(c, pr, g, km, v, lap_rot);
    const double dv_dtau = lyap_V_grad(pr, g, k.alpha1, v).dot(dv);
    const double psi = lyap_psi(c, pr, g, v);
    const double slack = -dv_dtau - k.alpha1 * psi * psi;
    const double scale = std::max({1.0, std::abs(dv_dtau), k.alpha1 * psi * psi});
    if (slack < audit.min_slack) {
      audit.min_slack = slack;
      audit.worst_time = t.empty() ? static_cast<double>(i) : t[i];
    }
    if (slack < -tol * scale) ++audit.violations;
  }
  audit.pass = audit.violations == 0;
  return audit;
}

// Boundary layer: dW/dtau = -|y_o|^2 - |y_n|^2 exactly (identity audit).
inline DecreaseAudit decrease_audit_boundary(const NetworkCase& c,
                                             const std::vector<double>& t,
                                             const std::vector<Eigen::VectorXd>& y_samples,
                                             double tol = 1e-8) {
  DecreaseAudit audit;
  audit.claim = "boundary-layer exact decrease";
  audit.n_samples = y_samples.size();
  for (std::size_t i = 0; i < y_samples.size(); ++i) {
    const Eigen::VectorXd& y = y_samples[i];
    const Eigen::VectorXd dy = rhs_boundary_pu(c, y);
    const double dw_dtau = lyap_W_grad(c, y).dot(dy);
    const BranchErrorPieces bp = branch_error_pieces(c, y);
    const double expect = -(bp.y_o_norm * bp.y_o_norm + bp.y_n_norm * bp.y_n_norm);
    const double scale = std::max(1.0, std::abs(expect));
    const double slack = tol * scale - std::abs(dw_dtau - expect);
    if (slack < audit.min_slack) {
      audit.min_slack = slack;
      audit.worst_time = t.empty() ? static_cast<double>(i) : t[i];
    }
    if (slack < 0.0) ++audit.violations;
  }
  audit.pass = audit.violations == 0;
  return audit;
}

// Full model: dnu/dtau < 0 away from the target set (gated by nu exceeding a
// floor so exact equilibria do not produce spurious violations).
inline DecreaseAudit decrease_audit_full(const NetworkCase& c, const SetpointProfile& pr,
                                         const GainSettings& g, const LyapunovConstants& k,
                                         const std::vector<double>& t,
                                         const std::vector<Eigen::VectorXd>& x_samples,
                                         double nu_floor = 1e-10) {
  const ControllerMatrices km = controller_matrices(pr, g.kappa);
  const StateLayout layout = StateLayout::of(c);
  const ActiveMask mask = ActiveMask::all_active(layout);
  const Eigen::MatrixXd bt = incidence_planar(c).transpose();
  const Eigen::MatrixXd zt_inv = impedance_matrix(c).inverse();
  const int n = c.n_buses(), m = c.n_branches();
  DecreaseAudit audit;
  audit.claim = "composite decrease off the target set";
  audit.n_samples = x_samples.size();
  for (std::size_t i = 0; i < x_samples.size(); ++i) {
    const Eigen::VectorXd& x = x_samples[i];
    const Eigen::VectorXd v = x.head(2 * n);
    const Eigen::VectorXd cur = x.segment(2 * n, 2 * m);
    const Eigen::VectorXd y = cur - zt_inv * (bt * v);
    const Eigen::VectorXd dx = rhs_full_pu(c, pr, g, km, layout, mask, x);
    const Eigen::VectorXd dv = dx.head(2 * n);
    const Eigen::VectorXd dcur = dx.segment(2 * n, 2 * m);
    const Eigen::VectorXd dy = dcur - zt_inv * (bt * dv);
    const double dnu = k.d * lyap_W_grad(c, y).dot(dy) +
                       (1.0 - k.d) * lyap_V_grad(pr, g, k.alpha1, v).dot(dv);
    const LyapunovBreakdown lb = lyap_nu(c, pr, g, k, x);
    if (lb.nu <= nu_floor) continue;  // on the target set: nothing to check
    const double slack = -dnu;
    if (slack < audit.min_slack) {
      audit.min_slack = slack;
      audit.worst_time = t.empty() ? static_cast<double>(i) : t[i];
    }
    if (!(dnu < 0.0)) ++audit.violations;
  }
  audit.pass = audit.violations == 0;
  return audit;
}

// ---------------------------------------------------------------------------
// Randomized spot checks of the supporting inequalities.
// ---------------------------------------------------------------------------
struct LemmaReport {
  double min_slack_projection = std::numeric_limits<double>::infinity();
  double min_slack_contraction = std::numeric_limits<double>::infinity();
  double min_slack_polynomial = std::numeric_limits<double>::infinity();
  double magnitude_matrix_min_eig = 0.0;
  std::size_t n_samples = 0;
  bool pass = false;
};

inline LemmaReport lemma_checks(const NetworkCase& c, const SetpointProfile& pr,
                                const GainSettings& g, double c_decay,
                                std::size_t n_samples = 200, unsigned long long seed = 42,
                                double tol = 1e-9) {
  detail::certificate_prereqs(c, pr, g);
  const int n = c.n_buses();
  const Eigen::MatrixXd p = synchronous_projector(pr);
  const Eigen::MatrixXd ka = controller_matrices(pr, g.kappa).stacked();
  const Eigen::MatrixXd lap_rot = reduced_coupling(c);
  const Eigen::MatrixXd sync_op =
      ka - lap_rot + g.alpha * Eigen::MatrixXd::Identity(2 * n, 2 * n);

  std::mt19937_64 rng = seeded_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> radius(0.1, 3.0);

  LemmaReport rep;
  rep.n_samples = n_samples;

  // Magnitude coupling matrix: sum(v*^2) I - s s^T with s the set-point
  // magnitude vector; positive semidefinite by construction.
  Eigen::VectorXd s(n);
  for (int k = 0; k < n; ++k) s(k) = pr.v_star(k);
  const Eigen::MatrixXd m1 =
      s.squaredNorm() * Eigen::MatrixXd::Identity(n, n) - s * s.transpose();
  rep.magnitude_matrix_min_eig =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m1).eigenvalues().minCoeff();

  for (std::size_t it = 0; it < n_samples; ++it) {
    Eigen::VectorXd v(2 * n);
    for (int i = 0; i < 2 * n; ++i) v(i) = normal(rng);
    v *= radius(rng) / std::sqrt(static_cast<double>(2 * n));

    // Projection inequality: v' P Phi(v) v <= v' P v.
    const double pv = v.dot(p * v);
    const double pphi = v.dot(p * phi_stacked(pr, v));
    rep.min_slack_projection = std::min(rep.min_slack_projection, pv - pphi);

    // Contraction inequality: v' P (K - L + alpha I) v <= -c |v|_S^2.
    const double quad = v.dot(p * (sync_op * v));
    rep.min_slack_contraction = std::min(rep.min_slack_contraction, -c_decay * pv - quad);

    // Polynomial nonnegativity on the nonnegative orthant, degrees 2..6.
    Eigen::VectorXd xk(n);
    for (int i = 0; i < n; ++i) xk(i) = std::abs(normal(rng));
    const double sum_vsq = s.squaredNorm();
    for (int m = 1; m <= 5; ++m) {
      double val = 0.0;
      for (int k = 0; k < n; ++k) {
        const double denom = std::pow(pr.v_star(k), m - 1);
        double cross = 0.0;
        for (int j = 0; j < n; ++j) cross += pr.v_star(k) * pr.v_star(j) * xk(j);
        val += (sum_vsq * std::pow(xk(k), m + 1) - std::pow(xk(k), m) * cross) / denom;
      }
      rep.min_slack_polynomial = std::min(rep.min_slack_polynomial, val);
    }
  }
  rep.pass = rep.min_slack_projection > -tol && rep.min_slack_contraction > -tol &&
             rep.min_slack_polynomial > -tol && rep.magnitude_matrix_min_eig > -tol;
  return rep;
}

}  // namespace dvoc
