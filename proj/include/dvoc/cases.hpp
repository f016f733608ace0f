#pragma once

// Built-in study cases: the three-inverter triangle benchmark, the nine-bus
// structure-preserving benchmark with three inverters and passive RLC loads,
// the staged-events scenario, and a randomized generator of certified cases
// for property-based testing.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dvoc/certify.hpp"
#include "dvoc/control.hpp"
#include "dvoc/network.hpp"
#include "dvoc/setpoints.hpp"
#include "dvoc/simulate.hpp"
#include "dvoc/system.hpp"

namespace dvoc {

struct CaseBundle {
  NetworkCase net;
  SetpointProfile profile;
  GainSettings gains;

  SystemModel model() const { return SystemModel::make(net, profile, gains); }
};

// ---------------------------------------------------------------------------
// Three-inverter triangle on a 1 GVA / 320 kV / 50 Hz base. One long (125 km)
// and two short (25 km) lines at 0.03 + j0.3 Ohm/km; impedance ratio 10.
// ---------------------------------------------------------------------------
inline NetworkCase threebus_network() {
  NetworkCase c;
  c.name = "threebus";
  c.omega0 = 2.0 * M_PI * 50.0;
  c.base_power = 1e9;
  c.base_voltage = 320e3;
  for (int k = 1; k <= 3; ++k) c.buses.push_back(Bus{std::to_string(k), BusKind::inverter});
  const double zb = c.z_base();  // 102.4 Ohm
  const double r_km = 0.03, x_km = 0.3;
  const double len[3] = {125.0, 25.0, 25.0};
  const int ends[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (int l = 0; l < 3; ++l)
    c.branches.push_back(
        Branch{ends[l][0], ends[l][1], len[l] * r_km / zb, len[l] * x_km / zb});
  return c;
}

inline CaseBundle threebus_case() {
  CaseBundle b;
  b.net = threebus_network();
  const Eigen::Vector3d p(-0.52, -0.19, 0.71);
  const Eigen::Vector3d q(0.06, 0.021, -0.06);
  const Eigen::Vector3d v(1.0, 1.0, 1.0);
  b.profile = complete_profile(b.net, p, q, v);
  b.gains.eta = 3e-3;
  b.gains.alpha = 5.0;
  b.gains.omega0 = b.net.omega0;
  b.gains.kappa = std::atan(10.0);
  return b;
}

// ---------------------------------------------------------------------------
// Nine-bus benchmark on a 100 MVA / 230 kV / 50 Hz base: three inverters
// behind step-up branches, six passive buses with shunt capacitors, series
// RL loads on three of them. Bus ids follow the conventional numbering;
// indices 0..2 are the inverters.
// ---------------------------------------------------------------------------
inline NetworkCase ieee9_network() {
  NetworkCase c;
  c.name = "ieee9";
  c.omega0 = 2.0 * M_PI * 50.0;
  c.base_power = 100e6;
  c.base_voltage = 230e3;
  for (int k = 1; k <= 3; ++k) c.buses.push_back(Bus{std::to_string(k), BusKind::inverter});
  struct Passive {
    const char* id;
    double shunt;
    bool has_load;
    double lr, lx;
  };
  const Passive pas[6] = {
      {"4", 0.167, false, 0.0, 0.0},
      {"5", 0.241, true, 0.6896551724137931, 0.27586206896551724},
      {"6", 0.2275, false, 0.0, 0.0},
      {"7", 0.179, true, 0.8908685968819599, 0.31180400890868595},
      {"8", 0.2835, false, 0.0, 0.0},
      {"9", 0.258, true, 1.0, 1.0 / 3.0},
  };
  for (const Passive& p : pas) {
    Bus b;
    b.id = p.id;
    b.kind = BusKind::passive;
    b.shunt_b = p.shunt;
    b.has_load = p.has_load;
    b.load_r = p.lr;
    b.load_x = p.lx;
    c.buses.push_back(b);
  }
  const double br[9][4] = {
      {0, 3, 0.000576, 0.0576}, {1, 7, 0.000586, 0.0586}, {2, 5, 0.000625, 0.0625},
      {3, 4, 0.010, 0.085},     {4, 5, 0.032, 0.161},     {5, 6, 0.0085, 0.072},
      {6, 7, 0.0119, 0.1008},   {7, 8, 0.039, 0.170},     {8, 3, 0.017, 0.092},
  };
  for (const double* x : br)
    c.branches.push_back(Branch{static_cast<int>(x[0]), static_cast<int>(x[1]), x[2], x[3]});
  return c;
}

inline CaseBundle ieee9_case() {
  CaseBundle b;
  b.net = ieee9_network();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Eigen::Vector3d p(nan, 0.85, 1.63);  // first inverter balances the network
  Eigen::Vector3d q(nan, nan, nan);
  Eigen::Vector3d v(1.0, 1.0, 1.0);
  b.profile = complete_profile(b.net, p, q, v);
  b.gains.eta = 1e-3;
  b.gains.alpha = 10.0;
  b.gains.omega0 = b.net.omega0;
  b.gains.kappa = std::atan(10.0);
  return b;
}

// Staged-events scenario: black start, +20% load admittance on bus "5" at
// 5 s, loss of inverter "1" at 10 s; 15 s at 1 ms cadence.
inline Scenario ieee9_events_scenario() {
  Scenario sc;
  sc.name = "ieee9-events";
  sc.init = Scenario::Init::black_start;
  sc.start_magnitude = 1e-4;
  sc.duration = 15.0;
  sc.cadence = 1e-3;
  sc.events.push_back(EventSpec{5.0, EventSpec::Kind::load_step, 4, 1.2});
  sc.events.push_back(EventSpec{10.0, EventSpec::Kind::inverter_loss, 0, 0.0});
  return sc;
}

// ---------------------------------------------------------------------------
// Randomized certified cases. Angles and magnitudes are drawn first and the
// implied injections adopted as set-points, so consistency is exact; gains
// are then drawn strictly inside the certificate region, with floors on
// eta*alpha (origin escape rate) and eta*c (synchronization rate) so a 10 s
// black start reaches steady state.
// ---------------------------------------------------------------------------
struct RandomCaseOptions {
  int n_min = 2, n_max = 5;
  double weight_min = 2.5, weight_max = 5.5;  // p.u. admittance magnitudes
  double rho_min = 0.3, rho_max = 1.0;
  double v_star_spread = 0.02;
  double angle_spread = 0.05;  // rad
  double extra_edge_prob = 0.45;
  double alpha_fraction = 0.35;   // of the available graph margin
  double eta_lo = 0.35, eta_hi = 0.75;  // fraction of the eta bound
  double min_eta_alpha = 8e-3;    // escape-rate floor, per-unit
  double min_eta_c = 8e-3;        // sync-rate floor, per-unit
  int max_draws = 200;
};

struct RandomCertifiedCase {
  CaseBundle bundle;
  StabilityCertificate certificate;
};

inline RandomCertifiedCase random_certified_case(std::mt19937_64& rng,
                                                 const RandomCaseOptions& opt = {}) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int draw = 0; draw < opt.max_draws; ++draw) {
    std::uniform_int_distribution<int> n_dist(opt.n_min, opt.n_max);
    const int n = n_dist(rng);

    NetworkCase net;
    net.name = "random";
    net.omega0 = 2.0 * M_PI * 50.0;
    net.base_power = 1e9;
    net.base_voltage = 320e3;
    for (int k = 1; k <= n; ++k) net.buses.push_back(Bus{std::to_string(k), BusKind::inverter});

    const double rho = opt.rho_min + (opt.rho_max - opt.rho_min) * unit(rng);
    auto add_branch = [&](int a, int b) {
      const double y = opt.weight_min + (opt.weight_max - opt.weight_min) * unit(rng);
      const double r = (1.0 / y) / std::sqrt(1.0 + rho * rho);
      net.branches.push_back(Branch{a, b, r, rho * r});
    };
    // Random spanning tree, then optional extra edges.
    for (int k = 1; k < n; ++k) {
      std::uniform_int_distribution<int> parent(0, k - 1);
      add_branch(parent(rng), k);
    }
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) {
        bool present = false;
        for (const Branch& br : net.branches)
          if ((br.from == a && br.to == b) || (br.from == b && br.to == a)) present = true;
        if (!present && unit(rng) < opt.extra_edge_prob) add_branch(a, b);
      }

    SetpointProfile pr;
    pr.p_star = Eigen::VectorXd::Zero(n);
    pr.q_star = Eigen::VectorXd::Zero(n);
    pr.v_star = Eigen::VectorXd::Ones(n);
    pr.theta = Eigen::VectorXd::Zero(n);
    pr.has_angles = true;
    for (int k = 0; k < n; ++k)
      pr.v_star(k) = 1.0 + opt.v_star_spread * (2.0 * unit(rng) - 1.0);
    for (int k = 1; k < n; ++k)
      pr.theta(k) = opt.angle_spread * (2.0 * unit(rng) - 1.0);
    // Adopt the implied injections: consistency is then exact.
    const ConsistencyReport rep = verify_consistency(net, pr, 1e9);
    pr.p_star = rep.p_implied;
    pr.q_star = rep.q_implied;

    GainSettings g;
    g.omega0 = net.omega0;
    g.kappa = std::atan(rho);
    g.alpha = 1.0;  // placeholder for the margin probe
    g.eta = 1e-6;
    StabilityCertificate probe;
    try {
      probe = condition2(net, pr, g);
    } catch (const Error&) {
      continue;
    }
    const double graph_margin = probe.rhs_no_c - probe.lhs_worst;
    if (!(graph_margin > 0.1)) continue;
    g.alpha = opt.alpha_fraction * graph_margin;

    StabilityCertificate cert = condition2(net, pr, g);
    if (!cert.graph_pass) continue;
    const double frac = opt.eta_lo + (opt.eta_hi - opt.eta_lo) * unit(rng);
    g.eta = frac * cert.eta_bound;
    if (g.eta * g.alpha < opt.min_eta_alpha) continue;
    if (g.eta * cert.c < opt.min_eta_c) continue;
    cert = condition2(net, pr, g);
    if (!cert.pass) continue;

    RandomCertifiedCase out;
    out.bundle.net = std::move(net);
    out.bundle.profile = std::move(pr);
    out.bundle.gains = g;
    out.certificate = cert;
    return out;
  }
  throw NoConvergence("random case generator exhausted its draw budget");
}

}  // namespace dvoc
