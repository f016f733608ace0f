#pragma once

// Decentralized grid-forming control law: per-inverter gain matrices, the
// magnitude-regulation term, the power-error representation, and the
// network-level weighted phase error. The controller is a pure static
// feedback on the inverter's own voltage and output current.

#include <optional>
#include <vector>

#include "dvoc/core.hpp"
#include "dvoc/network.hpp"
#include "dvoc/setpoints.hpp"

namespace dvoc {

struct GainSettings {
  double eta = 0.0;    // synchronization gain, p.u.
  double alpha = 0.0;  // magnitude-regulation gain, p.u.
  double omega0 = 2.0 * M_PI * 50.0;  // nominal frequency, rad/s
  double kappa = 0.0;  // network impedance angle used by the controller, rad
};

inline void check_gains(const GainSettings& g) {
  if (!(g.eta > 0.0)) throw ValidationError("eta must be positive");
  if (!(g.alpha > 0.0)) throw ValidationError("alpha must be positive");
  if (!(g.kappa >= 0.0 && g.kappa <= M_PI / 2.0))
    throw ValidationError("kappa must lie in [0, pi/2]");
}

// ---------------------------------------------------------------------------
// Controller matrices. K_k encodes the inverter's power set-points rotated by
// the impedance angle; its spectral norm is s*_k / v*_k^2.
// ---------------------------------------------------------------------------
inline Eigen::Matrix2d controller_matrix(double p_star, double q_star, double v_star,
                                         double kappa) {
  Eigen::Matrix2d pq;
  pq << p_star, q_star, -q_star, p_star;
  return (1.0 / (v_star * v_star)) * rot(kappa) * pq;
}

struct ControllerMatrices {
  std::vector<Eigen::Matrix2d> blocks;  // per inverter

  Eigen::MatrixXd stacked() const {
    const int n = static_cast<int>(blocks.size());
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (int i = 0; i < n; ++i) k.block<2, 2>(2 * i, 2 * i) = blocks[i];
    return k;
  }
};

inline ControllerMatrices controller_matrices(const SetpointProfile& pr, double kappa) {
  ControllerMatrices out;
  out.blocks.reserve(pr.n());
  for (int k = 0; k < pr.n(); ++k)
    out.blocks.push_back(controller_matrix(pr.p_star(k), pr.q_star(k), pr.v_star(k), kappa));
  return out;
}

// ---------------------------------------------------------------------------
// Magnitude regulation: radial scaling of v by the normalized quadratic
// magnitude error. Zero exactly on the set-point circle and at the origin.
// ---------------------------------------------------------------------------
inline Eigen::Vector2d phi(const Eigen::Vector2d& v_k, double v_star_k) {
  const double scale = (v_star_k * v_star_k - v_k.squaredNorm()) / (v_star_k * v_star_k);
  return scale * v_k;
}

// Stacked magnitude-regulation term over all inverters.
inline Eigen::VectorXd phi_stacked(const SetpointProfile& pr, const Eigen::VectorXd& v) {
  const int n = pr.n();
  if (v.size() != 2 * n) throw DimensionMismatch("voltage vector does not match profile");
  Eigen::VectorXd out(2 * n);
  for (int k = 0; k < n; ++k) out.segment<2>(2 * k) = phi(seg2(v, k), pr.v_star(k));
  return out;
}

// ---------------------------------------------------------------------------
// Control update. The feedback bracket is computed in per-unit time; the
// returned quantity is the inverter voltage derivative in SI time, i.e. the
// nominal rotation plus the per-unit bracket scaled by the nominal frequency.
// ---------------------------------------------------------------------------

// Per-unit-time feedback bracket (no frame rotation): the synchronizing term
// plus magnitude regulation.
inline Eigen::Vector2d control_bracket(const Eigen::Vector2d& v_k, const Eigen::Vector2d& i_ok,
                                       const Eigen::Matrix2d& k_k, double v_star_k,
                                       const GainSettings& g) {
  return g.eta * (k_k * v_k - rot(g.kappa) * i_ok + g.alpha * phi(v_k, v_star_k));
}

// Stationary-frame voltage command (SI time): rotation at the nominal
// frequency plus the feedback bracket.
inline Eigen::Vector2d control_update(const Eigen::Vector2d& v_k, const Eigen::Vector2d& i_ok,
                                      const Eigen::Matrix2d& k_k, double v_star_k,
                                      const GainSettings& g) {
  return g.omega0 * (J2() * v_k + control_bracket(v_k, i_ok, k_k, v_star_k, g));
}

// ---------------------------------------------------------------------------
// Power errors and the rotated error form. e_p is the normalized active-power
// mismatch scaled by the squared voltage ratio; the rotated form maps the
// error pair back into the voltage plane and reproduces the synchronizing
// term exactly.
// ---------------------------------------------------------------------------
struct PowerErrors {
  double e_p = 0.0;
  double e_q = 0.0;
  // (1/|v|^2) [v Jv] R(kappa) (e_p, -e_q): equals K v - R(kappa) i_o.
  // Absent when the voltage magnitude is too small to normalize.
  std::optional<Eigen::Vector2d> rotated;
};

inline PowerErrors power_errors(const Eigen::Vector2d& v_k, const Eigen::Vector2d& i_ok,
                                double p_star, double q_star, double v_star, double kappa) {
  PowerErrors out;
  const double p = active_power(v_k, i_ok);
  const double q = reactive_power(v_k, i_ok);
  const double vsq = v_k.squaredNorm();
  const double vstar_sq = v_star * v_star;
  out.e_p = (vsq * p_star - vstar_sq * p) / vstar_sq;
  out.e_q = (vsq * q_star - vstar_sq * q) / vstar_sq;
  if (std::sqrt(vsq) >= 1e-9 * v_star) {
    Eigen::Matrix2d frame;
    frame.col(0) = v_k;
    frame.col(1) = J2() * v_k;
    out.rotated = (frame * rot(kappa) * Eigen::Vector2d(out.e_p, -out.e_q)) / vsq;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Weighted phase error: per bus, the admittance-weighted sum of neighbor
// voltages minus the set-point-rotated own voltage. Vanishes exactly on the
// synchronous set, and equals (stacked K - lifted Laplacian) v for uniform
// resistance-to-reactance networks whose set-points are exactly consistent
// with the line flows.
// ---------------------------------------------------------------------------
inline Eigen::VectorXd phase_error(const NetworkCase& c, const SetpointProfile& pr,
                                   const Eigen::VectorXd& v) {
  if (!c.all_inverter())
    throw AssumptionViolated("phase error is defined on all-inverter cases");
  if (!pr.has_angles) throw InconsistentProfile("profile has no solved angles");
  const int n = c.n_buses();
  if (v.size() != 2 * n) throw DimensionMismatch("voltage vector does not match bus count");
  Eigen::VectorXd e = Eigen::VectorXd::Zero(2 * n);
  for (int l = 0; l < c.n_branches(); ++l) {
    const Branch& b = c.branches[l];
    const double y = edge_weight(b);
    auto accumulate = [&](int k, int j) {
      const double ratio = pr.v_star(j) / pr.v_star(k);
      const double theta_jk = pr.theta(j) - pr.theta(k);
      e.segment<2>(2 * k) += y * (seg2(v, j) - ratio * rot(theta_jk) * seg2(v, k));
    };
    accumulate(b.from, b.to);
    accumulate(b.to, b.from);
  }
  return e;
}

}  // namespace dvoc
