#pragma once

// Graph-structured electrical network: buses (inverter terminals or passive
// RC/RLC nodes), series RL branches, oriented incidence, weighted Laplacian,
// cycle-space basis, and the quasi-steady-state current map.
//
// All quantities are stored in per-unit on the case's own base. Branch
// reactance x is the inductive reactance at the nominal frequency, so the
// per-branch impedance block at synchronous steady state is r*I + x*J.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dvoc/core.hpp"

namespace dvoc {

enum class BusKind { inverter, passive };

struct Bus {
  std::string id;
  BusKind kind = BusKind::inverter;
  // Passive-bus elements (per-unit). shunt_b is the capacitive susceptance at
  // nominal frequency; a series RL load is present when has_load is true.
  double shunt_b = 0.0;
  bool has_load = false;
  double load_r = 0.0;
  double load_x = 0.0;
};

struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;  // p.u. series resistance
  double x = 0.0;  // p.u. series reactance at nominal frequency
};

struct NetworkCase {
  std::string name;
  double omega0 = 2.0 * M_PI * 50.0;  // rad/s
  double base_power = 1e9;            // W
  double base_voltage = 320e3;        // V
  std::vector<Bus> buses;
  std::vector<Branch> branches;

  int n_buses() const { return static_cast<int>(buses.size()); }
  int n_branches() const { return static_cast<int>(branches.size()); }
  double z_base() const { return base_voltage * base_voltage / base_power; }

  std::vector<int> inverter_indices() const {
    std::vector<int> out;
    for (int k = 0; k < n_buses(); ++k)
      if (buses[k].kind == BusKind::inverter) out.push_back(k);
    return out;
  }
  std::vector<int> passive_indices() const {
    std::vector<int> out;
    for (int k = 0; k < n_buses(); ++k)
      if (buses[k].kind == BusKind::passive) out.push_back(k);
    return out;
  }
  std::vector<int> load_bus_indices() const {
    std::vector<int> out;
    for (int k = 0; k < n_buses(); ++k)
      if (buses[k].has_load) out.push_back(k);
    return out;
  }
  int n_inverters() const { return static_cast<int>(inverter_indices().size()); }
  bool all_inverter() const { return n_inverters() == n_buses(); }
};

// ---------------------------------------------------------------------------
// Topology and weights.
// ---------------------------------------------------------------------------

// Admittance magnitude of one branch: 1/|r + jx|.
inline double edge_weight(const Branch& b) { return 1.0 / std::hypot(b.r, b.x); }

// Per-branch admittance magnitudes, in case order.
inline Eigen::VectorXd edge_weights(const NetworkCase& c) {
  Eigen::VectorXd w(c.n_branches());
  for (int l = 0; l < c.n_branches(); ++l) w(l) = edge_weight(c.branches[l]);
  return w;
}

// Oriented incidence matrix: column l carries +1 at the from-bus and -1 at
// the to-bus, so (B i)_k is the net current leaving bus k into the branches.
inline Eigen::MatrixXd incidence(const NetworkCase& c) {
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(c.n_buses(), c.n_branches());
  for (int l = 0; l < c.n_branches(); ++l) {
    b(c.branches[l].from, l) = 1.0;
    b(c.branches[l].to, l) = -1.0;
  }
  return b;
}

// B (x) I2 on stacked planar coordinates.
inline Eigen::MatrixXd incidence_planar(const NetworkCase& c) {
  return kron_I2(incidence(c));
}

// Weighted graph Laplacian L = B diag(w) B^T with admittance-magnitude
// weights. Symmetric positive semidefinite with zero row sums.
inline Eigen::MatrixXd weighted_laplacian(const NetworkCase& c) {
  const Eigen::MatrixXd b = incidence(c);
  return b * edge_weights(c).asDiagonal() * b.transpose();
}

inline Eigen::MatrixXd weighted_laplacian_planar(const NetworkCase& c) {
  return kron_I2(weighted_laplacian(c));
}

// Second-smallest eigenvalue of a symmetric Laplacian (algebraic
// connectivity). Zero for disconnected graphs.
inline double algebraic_connectivity(const Eigen::MatrixXd& laplacian) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(laplacian);
  if (es.info() != Eigen::Success) throw EigensolveFailure("Laplacian eigensolve failed");
  if (laplacian.rows() < 2) return 0.0;
  return es.eigenvalues()(1);
}

// Largest sum of incident admittance magnitudes over buses.
inline double max_weighted_degree(const NetworkCase& c) {
  Eigen::VectorXd deg = Eigen::VectorXd::Zero(c.n_buses());
  const Eigen::VectorXd w = edge_weights(c);
  for (int l = 0; l < c.n_branches(); ++l) {
    deg(c.branches[l].from) += w(l);
    deg(c.branches[l].to) += w(l);
  }
  return deg.size() ? deg.maxCoeff() : 0.0;
}

// ---------------------------------------------------------------------------
// Validation.
// ---------------------------------------------------------------------------
inline void validate(const NetworkCase& c) {
  if (c.n_buses() < 1) throw ValidationError("case has no buses");
  if (c.n_inverters() < 1) throw ValidationError("case has no inverter buses");
  if (!(c.omega0 >= 0.0)) throw ValidationError("omega0 must be >= 0");
  if (!(c.base_power > 0.0) || !(c.base_voltage > 0.0))
    throw ValidationError("base power and base voltage must be positive");

  std::vector<std::pair<int, int>> seen;
  for (int l = 0; l < c.n_branches(); ++l) {
    const Branch& b = c.branches[l];
    const std::string tag = "branch " + std::to_string(l) + " (" +
                            std::to_string(b.from) + "-" + std::to_string(b.to) + ")";
    if (b.from < 0 || b.from >= c.n_buses() || b.to < 0 || b.to >= c.n_buses())
      throw ValidationError(tag + ": bus index out of range");
    if (b.from == b.to) throw ValidationError(tag + ": self-loop");
    if (!(b.r > 0.0)) throw ValidationError(tag + ": resistance must be positive");
    if (!(b.x > 0.0)) throw ValidationError(tag + ": reactance must be positive");
    auto key = std::minmax(b.from, b.to);
    std::pair<int, int> p{key.first, key.second};
    if (std::find(seen.begin(), seen.end(), p) != seen.end())
      throw ValidationError(tag + ": parallel branch between the same bus pair");
    seen.push_back(p);
  }
  for (int k = 0; k < c.n_buses(); ++k) {
    const Bus& bus = c.buses[k];
    const std::string tag = "bus " + std::to_string(k) +
                            (bus.id.empty() ? "" : " (" + bus.id + ")");
    if (bus.kind == BusKind::passive) {
      if (!(bus.shunt_b > 0.0))
        throw ValidationError(tag + ": passive bus needs a positive shunt susceptance");
    } else {
      if (bus.shunt_b != 0.0 || bus.has_load)
        throw ValidationError(tag + ": inverter bus cannot carry shunt or load elements");
    }
    if (bus.has_load && (!(bus.load_r > 0.0) || !(bus.load_x > 0.0)))
      throw ValidationError(tag + ": load elements must be positive");
  }
  if (c.n_buses() > 1) {
    const double dmax = max_weighted_degree(c);
    const double l2 = algebraic_connectivity(weighted_laplacian(c));
    if (!(l2 > 1e-9 * dmax)) throw DisconnectedGraph("network graph is not connected");
  }
}

// ---------------------------------------------------------------------------
// Uniform resistance-to-reactance structure.
// ---------------------------------------------------------------------------
struct RhoInfo {
  bool uniform = false;    // all branches share x/r to relative 1e-6
  double rho_hat = 0.0;    // common x/r when uniform (dimensionless)
  double kappa = 0.0;      // atan(rho_hat) when uniform
  double max_spread = 0.0; // max relative deviation of x/r across branches
};

inline RhoInfo rho_info(const NetworkCase& c) {
  RhoInfo info;
  if (c.n_branches() == 0) return info;
  double lo = c.branches[0].x / c.branches[0].r, hi = lo;
  for (const Branch& b : c.branches) {
    const double ratio = b.x / b.r;
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  info.rho_hat = 0.5 * (lo + hi);
  info.max_spread = (hi - lo) / info.rho_hat;
  info.uniform = info.max_spread < 1e-6;
  info.kappa = std::atan(info.rho_hat);
  return info;
}

// Throws unless every branch shares the same x/r ratio.
inline double uniform_rho_hat(const NetworkCase& c) {
  const RhoInfo info = rho_info(c);
  if (!info.uniform)
    throw AssumptionViolated("branches do not share a common x/r ratio (spread " +
                             std::to_string(info.max_spread) + ")");
  return info.rho_hat;
}

// ---------------------------------------------------------------------------
// Branch impedance operators on stacked planar coordinates (2M x 2M).
// At synchronous steady state each branch contributes r*I + x*J.
// ---------------------------------------------------------------------------
inline Eigen::MatrixXd impedance_matrix(const NetworkCase& c) {
  const int m = c.n_branches();
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  for (int l = 0; l < m; ++l)
    z.block<2, 2>(2 * l, 2 * l) =
        c.branches[l].r * Eigen::Matrix2d::Identity() + c.branches[l].x * J2();
  return z;
}

// Branch inductive scaling diag(x) (x) I2 (per-unit time convention).
inline Eigen::MatrixXd inductance_matrix(const NetworkCase& c) {
  const int m = c.n_branches();
  Eigen::MatrixXd lt = Eigen::MatrixXd::Zero(2 * m, 2 * m);
  for (int l = 0; l < m; ++l)
    lt.block<2, 2>(2 * l, 2 * l) = c.branches[l].x * Eigen::Matrix2d::Identity();
  return lt;
}

// ---------------------------------------------------------------------------
// Quasi-steady-state current map: branch currents that balance the given bus
// voltages through the branch impedances, and the resulting bus output
// currents.
// ---------------------------------------------------------------------------
struct SteadyCurrents {
  Eigen::VectorXd i_s;   // 2M branch currents
  Eigen::VectorXd i_o_s; // 2n bus output currents = calB * i_s
};

inline SteadyCurrents steady_state_currents(const NetworkCase& c, const Eigen::VectorXd& v) {
  if (v.size() != 2 * c.n_buses())
    throw DimensionMismatch("voltage vector does not match bus count");
  const int m = c.n_branches();
  Eigen::VectorXd i_s(2 * m);
  for (int l = 0; l < m; ++l) {
    const Branch& b = c.branches[l];
    if (b.r == 0.0 && b.x == 0.0) throw SingularImpedance("branch with zero impedance");
    const Eigen::Matrix2d z = b.r * Eigen::Matrix2d::Identity() + b.x * J2();
    const Eigen::Vector2d dv = seg2(v, b.from) - seg2(v, b.to);
    i_s.segment<2>(2 * l) = z.inverse() * dv;
  }
  SteadyCurrents out;
  out.i_s = i_s;
  out.i_o_s = incidence_planar(c) * i_s;
  return out;
}

// Bus admittance operator calB Z^-1 calB^T (2n x 2n).
inline Eigen::MatrixXd admittance_operator(const NetworkCase& c) {
  const Eigen::MatrixXd calb = incidence_planar(c);
  const Eigen::MatrixXd z = impedance_matrix(c);
  return calb * z.inverse() * calb.transpose();
}

// ---------------------------------------------------------------------------
// Cycle-space basis: columns spanning the nullspace of the incidence matrix.
// Built from spanning-tree fundamental cycles and normalized to unit length,
// which makes the basis reproducible across platforms. Returns an M x 0
// matrix for trees.
// ---------------------------------------------------------------------------
inline Eigen::MatrixXd nullspace_basis(const Eigen::MatrixXd& b) {
  const int n = static_cast<int>(b.rows());
  const int m = static_cast<int>(b.cols());
  // Recover edge endpoints from the matrix so this works for any incidence.
  std::vector<std::pair<int, int>> edges(m, {-1, -1});
  for (int l = 0; l < m; ++l) {
    for (int k = 0; k < n; ++k) {
      if (b(k, l) > 0.5) edges[l].first = k;
      if (b(k, l) < -0.5) edges[l].second = k;
    }
    if (edges[l].first < 0 || edges[l].second < 0)
      throw ValidationError("matrix is not an oriented incidence matrix");
  }

  // Grow a spanning forest; record each bus's path-to-root edge.
  std::vector<int> parent_edge(n, -1), parent_bus(n, -1), depth(n, 0);
  std::vector<bool> in_tree(m, false), visited(n, false);
  std::vector<int> order;
  for (int root = 0; root < n; ++root) {
    if (visited[root]) continue;
    visited[root] = true;
    order.push_back(root);
    for (std::size_t head = order.size() - 1; head < order.size(); ++head) {
      const int u = order[head];
      for (int l = 0; l < m; ++l) {
        if (in_tree[l]) continue;
        const auto [a, bb] = edges[l];
        int w = -1;
        if (a == u && !visited[bb]) w = bb;
        if (bb == u && !visited[a]) w = a;
        if (w < 0) continue;
        in_tree[l] = true;
        visited[w] = true;
        parent_edge[w] = l;
        parent_bus[w] = u;
        depth[w] = depth[u] + 1;
        order.push_back(w);
      }
    }
  }

  std::vector<int> chords;
  for (int l = 0; l < m; ++l)
    if (!in_tree[l]) chords.push_back(l);

  Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(m, static_cast<int>(chords.size()));
  for (int c = 0; c < static_cast<int>(chords.size()); ++c) {
    const int chord = chords[c];
    Eigen::VectorXd cyc = Eigen::VectorXd::Zero(m);
    cyc(chord) = 1.0;
    // Walk both endpoints up to their common ancestor, cancelling the chord's
    // net bus flow with signed tree-edge contributions.
    int u = edges[chord].first, w = edges[chord].second;
    auto step_up = [&](int bus, double sign) {
      const int l = parent_edge[bus];
      // Walking from `bus` toward its parent adds flow along edge l; the
      // orientation sign depends on whether l points away from the parent.
      cyc(l) += (edges[l].first == bus) ? sign : -sign;
      return parent_bus[bus];
    };
    while (depth[u] > depth[w]) u = step_up(u, -1.0);
    while (depth[w] > depth[u]) w = step_up(w, +1.0);
    while (u != w) {
      u = step_up(u, -1.0);
      w = step_up(w, +1.0);
    }
    basis.col(c) = cyc / cyc.norm();
  }
  return basis;
}

inline Eigen::MatrixXd nullspace_basis_planar(const NetworkCase& c) {
  return kron_I2(nullspace_basis(incidence(c)));
}

}  // namespace dvoc
