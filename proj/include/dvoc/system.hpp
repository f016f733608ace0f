#pragma once

// Closed-loop network dynamics: state layout, right-hand sides (full model,
// all-inverter reduced model, branch boundary-layer model), the analytic
// Jacobian, and component-outage masks. Internally the dynamics are expressed
// in the rotating frame and per-unit time; public derivatives are in SI time
// (per-unit time scaled by the nominal frequency).

#include <vector>

#include "dvoc/control.hpp"
#include "dvoc/core.hpp"
#include "dvoc/network.hpp"
#include "dvoc/setpoints.hpp"

namespace dvoc {

// ---------------------------------------------------------------------------
// State layout. One 2-vector per inverter voltage, branch current, passive
// bus voltage, and series load current, concatenated in that order.
// ---------------------------------------------------------------------------
struct StateLayout {
  int n_inv = 0;
  int n_br = 0;
  int n_pas = 0;
  int n_load = 0;
  int off_v = 0;   // inverter voltages
  int off_i = 0;   // branch currents
  int off_vp = 0;  // passive bus voltages
  int off_il = 0;  // load currents
  int dim = 0;

  std::vector<int> inv_bus;            // state slot -> bus index
  std::vector<int> pas_bus;            // passive slot -> bus index
  std::vector<int> load_bus;           // load slot -> bus index
  std::vector<int> inv_slot_of_bus;    // bus index -> inverter slot or -1
  std::vector<int> pas_slot_of_bus;    // bus index -> passive slot or -1
  std::vector<int> load_slot_of_bus;   // bus index -> load slot or -1

  static StateLayout of(const NetworkCase& c) {
    StateLayout s;
    const int n = c.n_buses();
    s.inv_slot_of_bus.assign(n, -1);
    s.pas_slot_of_bus.assign(n, -1);
    s.load_slot_of_bus.assign(n, -1);
    for (int b = 0; b < n; ++b) {
      if (c.buses[b].kind == BusKind::inverter) {
        s.inv_slot_of_bus[b] = static_cast<int>(s.inv_bus.size());
        s.inv_bus.push_back(b);
      } else {
        s.pas_slot_of_bus[b] = static_cast<int>(s.pas_bus.size());
        s.pas_bus.push_back(b);
        if (c.buses[b].has_load) {
          s.load_slot_of_bus[b] = static_cast<int>(s.load_bus.size());
          s.load_bus.push_back(b);
        }
      }
    }
    s.n_inv = static_cast<int>(s.inv_bus.size());
    s.n_br = c.n_branches();
    s.n_pas = static_cast<int>(s.pas_bus.size());
    s.n_load = static_cast<int>(s.load_bus.size());
    s.off_v = 0;
    s.off_i = 2 * s.n_inv;
    s.off_vp = s.off_i + 2 * s.n_br;
    s.off_il = s.off_vp + 2 * s.n_pas;
    s.dim = s.off_il + 2 * s.n_load;
    return s;
  }

  Eigen::Vector2d v_inv(const Eigen::VectorXd& x, int slot) const {
    return x.segment<2>(off_v + 2 * slot);
  }
  Eigen::Vector2d i_br(const Eigen::VectorXd& x, int l) const {
    return x.segment<2>(off_i + 2 * l);
  }
  Eigen::Vector2d v_pas(const Eigen::VectorXd& x, int slot) const {
    return x.segment<2>(off_vp + 2 * slot);
  }
  Eigen::Vector2d i_load(const Eigen::VectorXd& x, int slot) const {
    return x.segment<2>(off_il + 2 * slot);
  }
  // Voltage of any bus (inverter or passive) from the state vector.
  Eigen::Vector2d v_bus(const Eigen::VectorXd& x, int bus) const {
    if (inv_slot_of_bus[bus] >= 0) return v_inv(x, inv_slot_of_bus[bus]);
    return v_pas(x, pas_slot_of_bus[bus]);
  }
  int v_bus_offset(int bus) const {
    if (inv_slot_of_bus[bus] >= 0) return off_v + 2 * inv_slot_of_bus[bus];
    return off_vp + 2 * pas_slot_of_bus[bus];
  }
};

// ---------------------------------------------------------------------------
// Outage mask. A lost inverter has its voltage pinned at zero and every
// incident branch open-circuited (current pinned at zero). Passive buses and
// loads are never masked.
// ---------------------------------------------------------------------------
struct ActiveMask {
  std::vector<char> inverter;  // per inverter slot
  std::vector<char> branch;    // per branch

  static ActiveMask all_active(const StateLayout& s) {
    ActiveMask m;
    m.inverter.assign(static_cast<std::size_t>(s.n_inv), 1);
    m.branch.assign(static_cast<std::size_t>(s.n_br), 1);
    return m;
  }
  bool fully_active() const {
    for (char c : inverter)
      if (!c) return false;
    for (char c : branch)
      if (!c) return false;
    return true;
  }
};

// Remove one inverter (by bus index): mask it and all incident branches, and
// zero the corresponding state entries.
inline void apply_inverter_loss(const NetworkCase& c, const StateLayout& s, ActiveMask& m,
                                Eigen::VectorXd& x, int bus) {
  const int slot = s.inv_slot_of_bus[bus];
  if (slot < 0) throw ValidationError("inverter loss targets a non-inverter bus");
  m.inverter[static_cast<std::size_t>(slot)] = 0;
  x.segment<2>(s.off_v + 2 * slot).setZero();
  for (int l = 0; l < c.n_branches(); ++l) {
    if (c.branches[l].from == bus || c.branches[l].to == bus) {
      m.branch[static_cast<std::size_t>(l)] = 0;
      x.segment<2>(s.off_i + 2 * l).setZero();
    }
  }
}

// ---------------------------------------------------------------------------
// Full-model right-hand side, per-unit time. Branch currents feed bus current
// balances through the incidence pattern; inverters apply the control
// bracket, passive buses integrate their shunt capacitance, series loads
// integrate their impedance.
// ---------------------------------------------------------------------------
inline Eigen::VectorXd rhs_full_pu(const NetworkCase& c, const SetpointProfile& pr,
                                   const GainSettings& g, const ControllerMatrices& km,
                                   const StateLayout& s, const ActiveMask& m,
                                   const Eigen::VectorXd& x) {
  if (x.size() != s.dim) throw DimensionMismatch("state size does not match layout");
  Eigen::VectorXd dx = Eigen::VectorXd::Zero(s.dim);

  // Net branch current leaving each bus (active branches only).
  Eigen::VectorXd bus_out = Eigen::VectorXd::Zero(2 * c.n_buses());
  for (int l = 0; l < s.n_br; ++l) {
    if (!m.branch[static_cast<std::size_t>(l)]) continue;
    const Eigen::Vector2d il = s.i_br(x, l);
    bus_out.segment<2>(2 * c.branches[l].from) += il;
    bus_out.segment<2>(2 * c.branches[l].to) -= il;
  }

  for (int k = 0; k < s.n_inv; ++k) {
    if (!m.inverter[static_cast<std::size_t>(k)]) continue;
    const int bus = s.inv_bus[static_cast<std::size_t>(k)];
    const Eigen::Vector2d vk = s.v_inv(x, k);
    const Eigen::Vector2d iok = bus_out.segment<2>(2 * bus);
    dx.segment<2>(s.off_v + 2 * k) =
        control_bracket(vk, iok, km.blocks[static_cast<std::size_t>(k)], pr.v_star(k), g);
  }

  for (int l = 0; l < s.n_br; ++l) {
    if (!m.branch[static_cast<std::size_t>(l)]) continue;
    const Branch& b = c.branches[l];
    const Eigen::Vector2d il = s.i_br(x, l);
    const Eigen::Vector2d dv = s.v_bus(x, b.from) - s.v_bus(x, b.to);
    dx.segment<2>(s.off_i + 2 * l) = (1.0 / b.x) * (-b.r * il + dv) - J2() * il;
  }

  for (int p = 0; p < s.n_pas; ++p) {
    const int bus = s.pas_bus[static_cast<std::size_t>(p)];
    const Eigen::Vector2d vp = s.v_pas(x, p);
    Eigen::Vector2d inj = -bus_out.segment<2>(2 * bus);
    const int lslot = s.load_slot_of_bus[bus];
    if (lslot >= 0) inj -= s.i_load(x, lslot);
    dx.segment<2>(s.off_vp + 2 * p) = (1.0 / c.buses[bus].shunt_b) * inj - J2() * vp;
  }

  for (int q = 0; q < s.n_load; ++q) {
    const int bus = s.load_bus[static_cast<std::size_t>(q)];
    const Eigen::Vector2d il = s.i_load(x, q);
    const Eigen::Vector2d vp = s.v_pas(x, s.pas_slot_of_bus[bus]);
    const Bus& b = c.buses[bus];
    dx.segment<2>(s.off_il + 2 * q) = (1.0 / b.load_x) * (-b.load_r * il + vp) - J2() * il;
  }
  return dx;
}

// SI-time full right-hand side (rotating frame).
inline Eigen::VectorXd rhs_full(const NetworkCase& c, const SetpointProfile& pr,
                                const GainSettings& g, const ControllerMatrices& km,
                                const StateLayout& s, const ActiveMask& m,
                                const Eigen::VectorXd& x) {
  return g.omega0 * rhs_full_pu(c, pr, g, km, s, m, x);
}

// Stationary-frame right-hand side, per-unit time. Used to verify that the
// rotating-frame solution is the stationary-frame solution rotated back.
inline Eigen::VectorXd rhs_full_static_pu(const NetworkCase& c, const SetpointProfile& pr,
                                          const GainSettings& g, const ControllerMatrices& km,
                                          const StateLayout& s, const ActiveMask& m,
                                          const Eigen::VectorXd& x) {
  Eigen::VectorXd dx = rhs_full_pu(c, pr, g, km, s, m, x);
  // Undo the frame terms: every planar sub-state gains +J x in the stationary
  // frame relative to the rotating frame (where the -J terms cancel the frame
  // rotation). Masked entries stay frozen.
  for (int k = 0; k < s.n_inv; ++k)
    if (m.inverter[static_cast<std::size_t>(k)])
      dx.segment<2>(s.off_v + 2 * k) += J2() * s.v_inv(x, k);
  for (int l = 0; l < s.n_br; ++l)
    if (m.branch[static_cast<std::size_t>(l)])
      dx.segment<2>(s.off_i + 2 * l) += J2() * s.i_br(x, l);
  for (int p = 0; p < s.n_pas; ++p) dx.segment<2>(s.off_vp + 2 * p) += J2() * s.v_pas(x, p);
  for (int q = 0; q < s.n_load; ++q) dx.segment<2>(s.off_il + 2 * q) += J2() * s.i_load(x, q);
  return dx;
}

// ---------------------------------------------------------------------------
// Reduced model (quasi-steady branches), per-unit time: valid for
// all-inverter networks with uniform resistance-to-reactance ratio.
// v' = eta ((K - L) v + alpha Phi(v)) where L is the controller-frame image
// of the quasi-steady branch coupling, R(kappa) B Z^-1 B^T. Every branch
// impedance is |z_l| R(kappa) under a uniform ratio, so the controller
// rotation cancels the impedance angle exactly and L reduces to the plain
// lifted Laplacian.
// ---------------------------------------------------------------------------
inline Eigen::MatrixXd reduced_coupling(const NetworkCase& c) {
  const RhoInfo rho = rho_info(c);
  if (!rho.uniform)
    throw AssumptionViolated("reduced model requires a uniform resistance-to-reactance ratio");
  return kron_I2(weighted_laplacian(c));
}

inline Eigen::VectorXd rhs_reduced_pu(const NetworkCase& c, const SetpointProfile& pr,
                                      const GainSettings& g, const ControllerMatrices& km,
                                      const Eigen::VectorXd& v, const Eigen::MatrixXd& lap_rot) {
  if (!c.all_inverter()) throw AssumptionViolated("reduced model requires all-inverter cases");
  const int n = c.n_buses();
  if (v.size() != 2 * n) throw DimensionMismatch("voltage vector does not match bus count");
  Eigen::VectorXd dv(2 * n);
  const Eigen::VectorXd lv = lap_rot * v;
  for (int k = 0; k < n; ++k) {
    const Eigen::Vector2d vk = seg2(v, k);
    dv.segment<2>(2 * k) =
        g.eta * (km.blocks[static_cast<std::size_t>(k)] * vk - lv.segment<2>(2 * k) +
                 g.alpha * phi(vk, pr.v_star(k)));
  }
  return dv;
}

inline Eigen::VectorXd rhs_reduced(const NetworkCase& c, const SetpointProfile& pr,
                                   const GainSettings& g, const Eigen::VectorXd& v) {
  const ControllerMatrices km = controller_matrices(pr, g.kappa);
  return g.omega0 * rhs_reduced_pu(c, pr, g, km, v, reduced_coupling(c));
}

// ---------------------------------------------------------------------------
// Boundary-layer model, per-unit time: branch-current error dynamics at
// frozen voltages, y' = -L_T^{-1} Z_T y. Block-diagonal and linear.
// ---------------------------------------------------------------------------
inline Eigen::VectorXd rhs_boundary_pu(const NetworkCase& c, const Eigen::VectorXd& y) {
  const int m = c.n_branches();
  if (y.size() != 2 * m) throw DimensionMismatch("current vector does not match branch count");
  Eigen::VectorXd dy(2 * m);
  for (int l = 0; l < m; ++l) {
    const Branch& b = c.branches[l];
    const Eigen::Vector2d yl = seg2(y, l);
    dy.segment<2>(2 * l) = -(b.r / b.x) * yl - J2() * yl;
  }
  return dy;
}

inline Eigen::VectorXd rhs_boundary(const NetworkCase& c, const GainSettings& g,
                                    const Eigen::VectorXd& y) {
  return g.omega0 * rhs_boundary_pu(c, y);
}

// ---------------------------------------------------------------------------
// Analytic Jacobian of the full right-hand side, per-unit time. The only
// nonlinearity is the magnitude-regulation term:
//   d/dv [Phi(v) v] = Phi(v) - (2 / v*^2) v v^T.
// ---------------------------------------------------------------------------
inline Eigen::MatrixXd jacobian_pu(const NetworkCase& c, const SetpointProfile& pr,
                                   const GainSettings& g, const ControllerMatrices& km,
                                   const StateLayout& s, const ActiveMask& m,
                                   const Eigen::VectorXd& x) {
  if (x.size() != s.dim) throw DimensionMismatch("state size does not match layout");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(s.dim, s.dim);
  const Eigen::Matrix2d rk = rot(g.kappa);

  for (int k = 0; k < s.n_inv; ++k) {
    if (!m.inverter[static_cast<std::size_t>(k)]) continue;
    const Eigen::Vector2d vk = s.v_inv(x, k);
    const double vstar_sq = pr.v_star(k) * pr.v_star(k);
    const Eigen::Matrix2d phi_jac =
        ((vstar_sq - vk.squaredNorm()) / vstar_sq) * Eigen::Matrix2d::Identity() -
        (2.0 / vstar_sq) * (vk * vk.transpose());
    a.block<2, 2>(s.off_v + 2 * k, s.off_v + 2 * k) =
        g.eta * (km.blocks[static_cast<std::size_t>(k)] + g.alpha * phi_jac);
    const int bus = s.inv_bus[static_cast<std::size_t>(k)];
    for (int l = 0; l < s.n_br; ++l) {
      if (!m.branch[static_cast<std::size_t>(l)]) continue;
      double sign = 0.0;
      if (c.branches[l].from == bus) sign = 1.0;
      else if (c.branches[l].to == bus) sign = -1.0;
      if (sign != 0.0) a.block<2, 2>(s.off_v + 2 * k, s.off_i + 2 * l) = -g.eta * sign * rk;
    }
  }

  for (int l = 0; l < s.n_br; ++l) {
    if (!m.branch[static_cast<std::size_t>(l)]) continue;
    const Branch& b = c.branches[l];
    a.block<2, 2>(s.off_i + 2 * l, s.off_i + 2 * l) =
        -(b.r / b.x) * Eigen::Matrix2d::Identity() - J2();
    a.block<2, 2>(s.off_i + 2 * l, s.v_bus_offset(b.from)) +=
        (1.0 / b.x) * Eigen::Matrix2d::Identity();
    a.block<2, 2>(s.off_i + 2 * l, s.v_bus_offset(b.to)) -=
        (1.0 / b.x) * Eigen::Matrix2d::Identity();
  }

  for (int p = 0; p < s.n_pas; ++p) {
    const int bus = s.pas_bus[static_cast<std::size_t>(p)];
    const double bp = c.buses[bus].shunt_b;
    a.block<2, 2>(s.off_vp + 2 * p, s.off_vp + 2 * p) = -J2();
    for (int l = 0; l < s.n_br; ++l) {
      if (!m.branch[static_cast<std::size_t>(l)]) continue;
      double sign = 0.0;
      if (c.branches[l].from == bus) sign = 1.0;
      else if (c.branches[l].to == bus) sign = -1.0;
      if (sign != 0.0)
        a.block<2, 2>(s.off_vp + 2 * p, s.off_i + 2 * l) =
            -(sign / bp) * Eigen::Matrix2d::Identity();
    }
    const int lslot = s.load_slot_of_bus[bus];
    if (lslot >= 0)
      a.block<2, 2>(s.off_vp + 2 * p, s.off_il + 2 * lslot) =
          -(1.0 / bp) * Eigen::Matrix2d::Identity();
  }

  for (int q = 0; q < s.n_load; ++q) {
    const int bus = s.load_bus[static_cast<std::size_t>(q)];
    const Bus& b = c.buses[bus];
    a.block<2, 2>(s.off_il + 2 * q, s.off_il + 2 * q) =
        -(b.load_r / b.load_x) * Eigen::Matrix2d::Identity() - J2();
    a.block<2, 2>(s.off_il + 2 * q, s.off_vp + 2 * s.pas_slot_of_bus[bus]) =
        (1.0 / b.load_x) * Eigen::Matrix2d::Identity();
  }
  return a;
}

// SI-time Jacobian.
inline Eigen::MatrixXd jacobian(const NetworkCase& c, const SetpointProfile& pr,
                                const GainSettings& g, const ControllerMatrices& km,
                                const StateLayout& s, const ActiveMask& m,
                                const Eigen::VectorXd& x) {
  return g.omega0 * jacobian_pu(c, pr, g, km, s, m, x);
}

// Block rotation generator acting on every planar sub-state of the layout.
inline Eigen::MatrixXd layout_J(const StateLayout& s) { return block_J(s.dim / 2); }

// ---------------------------------------------------------------------------
// Steady seed: assemble the full state vector from a completed profile.
// Inverter and passive voltages come from the phasor targets; branch and load
// currents follow from the branch impedances.
// ---------------------------------------------------------------------------
inline Eigen::VectorXd steady_seed(const NetworkCase& c, const SetpointProfile& pr,
                                   const StateLayout& s, double angle0 = 0.0) {
  if (!pr.has_angles) throw InconsistentProfile("profile has no solved angles");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(s.dim);
  Eigen::VectorXd v_all = Eigen::VectorXd::Zero(2 * c.n_buses());
  for (int k = 0; k < s.n_inv; ++k) {
    const Eigen::Vector2d vk =
        pr.v_star(k) * rot(pr.theta(k) + angle0) * Eigen::Vector2d(1.0, 0.0);
    x.segment<2>(s.off_v + 2 * k) = vk;
    v_all.segment<2>(2 * s.inv_bus[static_cast<std::size_t>(k)]) = vk;
  }
  for (int p = 0; p < s.n_pas; ++p) {
    if (2 * p + 1 >= pr.passive_v.size())
      throw InconsistentProfile("profile lacks passive bus voltages");
    const Eigen::Vector2d vp = rot(angle0) * pr.passive_v.segment<2>(2 * p);
    x.segment<2>(s.off_vp + 2 * p) = vp;
    v_all.segment<2>(2 * s.pas_bus[static_cast<std::size_t>(p)]) = vp;
  }
  const SteadyCurrents sc = steady_state_currents(c, v_all);
  x.segment(s.off_i, 2 * s.n_br) = sc.i_s;
  for (int q = 0; q < s.n_load; ++q) {
    const int bus = s.load_bus[static_cast<std::size_t>(q)];
    const Bus& b = c.buses[bus];
    Eigen::Matrix2d z;
    z << b.load_r, -b.load_x, b.load_x, b.load_r;
    x.segment<2>(s.off_il + 2 * q) =
        z.inverse() * x.segment<2>(s.off_vp + 2 * s.pas_slot_of_bus[bus]);
  }
  return x;
}

// Convenience bundle: everything needed to evaluate the dynamics of one case.
struct SystemModel {
  NetworkCase net;
  SetpointProfile profile;
  GainSettings gains;
  ControllerMatrices km;
  StateLayout layout;

  static SystemModel make(NetworkCase c, SetpointProfile pr, GainSettings g) {
    validate(c);
    check_profile(c, pr);
    check_gains(g);
    SystemModel m{std::move(c), std::move(pr), g, {}, {}};
    m.km = controller_matrices(m.profile, m.gains.kappa);
    m.layout = StateLayout::of(m.net);
    return m;
  }

  Eigen::VectorXd rhs_pu(const ActiveMask& m, const Eigen::VectorXd& x) const {
    return rhs_full_pu(net, profile, gains, km, layout, m, x);
  }
  Eigen::VectorXd rhs_si(const ActiveMask& m, const Eigen::VectorXd& x) const {
    return gains.omega0 * rhs_full_pu(net, profile, gains, km, layout, m, x);
  }
  Eigen::MatrixXd jac_pu(const ActiveMask& m, const Eigen::VectorXd& x) const {
    return jacobian_pu(net, profile, gains, km, layout, m, x);
  }
  ActiveMask all_active() const { return ActiveMask::all_active(layout); }
};

}  // namespace dvoc
