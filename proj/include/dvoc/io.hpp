#pragma once

// File formats: JSON serialization for cases, profiles, scenarios, and
// analysis results (nlohmann/json); CSV writers for time series and sweeps;
// the artifact manifest with a stable content hash.
//
// Canonical file units are per-unit; SI values are accepted through
// explicitly suffixed field names (_ohm, _henry, _farad) and converted on
// ingestion using the case base quantities.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dvoc/cases.hpp"
#include "dvoc/certify.hpp"
#include "dvoc/control.hpp"
#include "dvoc/linstab.hpp"
#include "dvoc/network.hpp"
#include "dvoc/setpoints.hpp"
#include "dvoc/simulate.hpp"

namespace dvoc {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Small helpers.
// ---------------------------------------------------------------------------
namespace ioutil {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << content;
}

inline void write_json_file(const std::string& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// FNV-1a 64-bit over a byte string.
inline std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline double require_number(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key)) throw ParseError(ctx + ": missing field '" + key + "'");
  if (!j[key].is_number()) throw ParseError(ctx + ": field '" + key + "' must be a number");
  return j[key].get<double>();
}

// Nullable number: null or absent maps to NaN.
inline double opt_number(const json& j, const std::string& key) {
  if (!j.contains(key) || j[key].is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j[key].get<double>();
}

}  // namespace ioutil

// ---------------------------------------------------------------------------
// NetworkCase: JSON in both directions.
// ---------------------------------------------------------------------------
inline json case_to_json(const NetworkCase& c) {
  json j;
  j["name"] = c.name;
  j["f0_hz"] = c.omega0 / (2.0 * M_PI);
  j["base_power_va"] = c.base_power;
  j["base_voltage_v"] = c.base_voltage;
  j["buses"] = json::array();
  for (const Bus& b : c.buses) {
    json bj;
    bj["id"] = b.id;
    bj["kind"] = b.kind == BusKind::inverter ? "inverter" : "passive";
    if (b.kind == BusKind::passive) {
      bj["shunt_b"] = b.shunt_b;
      if (b.has_load) {
        bj["load_r"] = b.load_r;
        bj["load_x"] = b.load_x;
      }
    }
    j["buses"].push_back(bj);
  }
  j["branches"] = json::array();
  for (const Branch& br : c.branches) {
    json brj;
    brj["from"] = c.buses[static_cast<std::size_t>(br.from)].id;
    brj["to"] = c.buses[static_cast<std::size_t>(br.to)].id;
    brj["r"] = br.r;
    brj["x"] = br.x;
    j["branches"].push_back(brj);
  }
  return j;
}

namespace ioutil {

inline int resolve_bus(const json& ref, const NetworkCase& c, const std::string& ctx) {
  if (ref.is_number_integer()) {
    const int idx = ref.get<int>();
    if (idx < 0 || idx >= c.n_buses()) throw ParseError(ctx + ": bus index out of range");
    return idx;
  }
  if (ref.is_string()) {
    const std::string id = ref.get<std::string>();
    for (int i = 0; i < c.n_buses(); ++i)
      if (c.buses[static_cast<std::size_t>(i)].id == id) return i;
    throw ParseError(ctx + ": unknown bus id '" + id + "'");
  }
  throw ParseError(ctx + ": bus reference must be an id string or an index");
}

}  // namespace ioutil

inline NetworkCase case_from_json(const json& j) {
  NetworkCase c;
  c.name = j.value("name", "unnamed");
  if (j.contains("f0_hz"))
    c.omega0 = 2.0 * M_PI * ioutil::require_number(j, "f0_hz", "case");
  else if (j.contains("omega0_rad_s"))
    c.omega0 = ioutil::require_number(j, "omega0_rad_s", "case");
  c.base_power = j.contains("base_power_va")
                     ? ioutil::require_number(j, "base_power_va", "case")
                     : c.base_power;
  c.base_voltage = j.contains("base_voltage_v")
                       ? ioutil::require_number(j, "base_voltage_v", "case")
                       : c.base_voltage;
  const double zb = c.z_base();

  if (!j.contains("buses") || !j["buses"].is_array())
    throw ParseError("case: missing 'buses' array");
  int bi = 0;
  for (const json& bj : j["buses"]) {
    const std::string ctx = "buses[" + std::to_string(bi) + "]";
    Bus b;
    b.id = bj.contains("id") ? bj["id"].get<std::string>() : std::to_string(bi + 1);
    const std::string kind = bj.value("kind", "inverter");
    if (kind == "inverter") {
      b.kind = BusKind::inverter;
    } else if (kind == "passive") {
      b.kind = BusKind::passive;
      if (bj.contains("shunt_b"))
        b.shunt_b = ioutil::require_number(bj, "shunt_b", ctx);
      else if (bj.contains("shunt_c_farad"))
        b.shunt_b = c.omega0 * ioutil::require_number(bj, "shunt_c_farad", ctx) * zb;
      else
        throw ParseError(ctx + ": passive bus needs 'shunt_b' (p.u.) or 'shunt_c_farad'");
      if (bj.contains("load_r") || bj.contains("load_r_ohm")) {
        b.has_load = true;
        b.load_r = bj.contains("load_r")
                       ? ioutil::require_number(bj, "load_r", ctx)
                       : ioutil::require_number(bj, "load_r_ohm", ctx) / zb;
        if (bj.contains("load_x"))
          b.load_x = ioutil::require_number(bj, "load_x", ctx);
        else if (bj.contains("load_l_henry"))
          b.load_x = c.omega0 * ioutil::require_number(bj, "load_l_henry", ctx) / zb;
        else
          throw ParseError(ctx + ": load needs 'load_x' (p.u.) or 'load_l_henry'");
      }
    } else {
      throw ParseError(ctx + ": unknown bus kind '" + kind + "'");
    }
    c.buses.push_back(b);
    ++bi;
  }

  if (!j.contains("branches") || !j["branches"].is_array())
    throw ParseError("case: missing 'branches' array");
  int li = 0;
  for (const json& brj : j["branches"]) {
    const std::string ctx = "branches[" + std::to_string(li) + "]";
    Branch br;
    if (!brj.contains("from") || !brj.contains("to"))
      throw ParseError(ctx + ": needs 'from' and 'to'");
    br.from = ioutil::resolve_bus(brj["from"], c, ctx);
    br.to = ioutil::resolve_bus(brj["to"], c, ctx);
    br.r = brj.contains("r") ? ioutil::require_number(brj, "r", ctx)
                             : ioutil::require_number(brj, "r_ohm", ctx) / zb;
    if (brj.contains("x"))
      br.x = ioutil::require_number(brj, "x", ctx);
    else if (brj.contains("x_ohm"))
      br.x = ioutil::require_number(brj, "x_ohm", ctx) / zb;
    else if (brj.contains("l_henry"))
      br.x = c.omega0 * ioutil::require_number(brj, "l_henry", ctx) / zb;
    else
      throw ParseError(ctx + ": needs 'x' (p.u.), 'x_ohm', or 'l_henry'");
    c.branches.push_back(br);
    ++li;
  }
  validate(c);
  return c;
}

inline std::string case_hash(const NetworkCase& c) {
  return ioutil::hex64(ioutil::fnv1a64(case_to_json(c).dump()));
}

// ---------------------------------------------------------------------------
// SetpointProfile: JSON with null for unknown entries.
// ---------------------------------------------------------------------------
inline json profile_to_json(const SetpointProfile& pr) {
  json j;
  auto arr = [](const Eigen::VectorXd& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i)
      a.push_back(std::isnan(v(i)) ? json(nullptr) : json(v(i)));
    return a;
  };
  j["p_star"] = arr(pr.p_star);
  j["q_star"] = arr(pr.q_star);
  j["v_star"] = arr(pr.v_star);
  if (pr.has_angles) j["theta"] = arr(pr.theta);
  if (pr.passive_v.size() > 0) j["passive_v"] = arr(pr.passive_v);
  return j;
}

inline SetpointProfile profile_from_json(const json& j) {
  auto vec = [&](const std::string& key, bool required) {
    Eigen::VectorXd v;
    if (!j.contains(key)) {
      if (required) throw ParseError("profile: missing '" + key + "'");
      return v;
    }
    const json& a = j[key];
    if (!a.is_array()) throw ParseError("profile: '" + key + "' must be an array");
    v.resize(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i)
      v(static_cast<Eigen::Index>(i)) =
          a[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : a[i].get<double>();
    return v;
  };
  SetpointProfile pr;
  pr.p_star = vec("p_star", true);
  pr.q_star = vec("q_star", true);
  pr.v_star = vec("v_star", true);
  const Eigen::VectorXd th = vec("theta", false);
  if (th.size() > 0) {
    pr.theta = th;
    pr.has_angles = true;
  }
  const Eigen::VectorXd pv = vec("passive_v", false);
  if (pv.size() > 0) pr.passive_v = pv;
  return pr;
}

// ---------------------------------------------------------------------------
// Scenario: JSON.
// ---------------------------------------------------------------------------
inline json scenario_to_json(const Scenario& sc, const NetworkCase& c) {
  json j;
  j["name"] = sc.name;
  j["init"] = sc.init == Scenario::Init::black_start ? "black-start" : "steady";
  j["start_magnitude"] = sc.start_magnitude;
  j["duration_s"] = sc.duration;
  j["cadence_s"] = sc.cadence;
  j["seed"] = sc.seed;
  j["events"] = json::array();
  for (const EventSpec& ev : sc.events) {
    json ej;
    ej["t_s"] = ev.t;
    ej["kind"] = ev.kind == EventSpec::Kind::load_step ? "load-step" : "inverter-loss";
    ej["bus"] = c.buses[static_cast<std::size_t>(ev.bus)].id;
    if (ev.kind == EventSpec::Kind::load_step) ej["scale"] = ev.scale;
    j["events"].push_back(ej);
  }
  return j;
}

inline Scenario scenario_from_json(const json& j, const NetworkCase& c) {
  Scenario sc;
  sc.name = j.value("name", "custom");
  const std::string init = j.value("init", "black-start");
  if (init == "black-start")
    sc.init = Scenario::Init::black_start;
  else if (init == "steady")
    sc.init = Scenario::Init::steady;
  else
    throw ParseError("scenario: unknown init '" + init + "'");
  sc.start_magnitude = j.value("start_magnitude", 1e-4);
  sc.duration = ioutil::require_number(j, "duration_s", "scenario");
  sc.cadence = ioutil::require_number(j, "cadence_s", "scenario");
  if (j.contains("seed")) sc.seed = j["seed"].get<unsigned long long>();
  if (j.contains("events")) {
    int ei = 0;
    for (const json& ej : j["events"]) {
      const std::string ctx = "events[" + std::to_string(ei) + "]";
      EventSpec ev;
      ev.t = ioutil::require_number(ej, "t_s", ctx);
      const std::string kind = ej.value("kind", "");
      if (kind == "load-step") {
        ev.kind = EventSpec::Kind::load_step;
        ev.scale = ioutil::require_number(ej, "scale", ctx);
      } else if (kind == "inverter-loss") {
        ev.kind = EventSpec::Kind::inverter_loss;
      } else {
        throw ParseError(ctx + ": unknown event kind '" + kind + "'");
      }
      if (!ej.contains("bus")) throw ParseError(ctx + ": missing 'bus'");
      ev.bus = ioutil::resolve_bus(ej["bus"], c, ctx);
      sc.events.push_back(ev);
      ++ei;
    }
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Result serializers.
// ---------------------------------------------------------------------------
inline json gains_to_json(const GainSettings& g) {
  return json{{"eta", g.eta}, {"alpha", g.alpha}, {"kappa", g.kappa},
              {"f0_hz", g.omega0 / (2.0 * M_PI)}};
}

inline json certificate_to_json(const StabilityCertificate& cert) {
  json j;
  j["variant"] = cert.variant;
  j["pass"] = cert.pass;
  j["graph_pass"] = cert.graph_pass;
  j["eta_pass"] = cert.eta_pass;
  j["c"] = cert.c;
  j["c_max"] = cert.c_max;
  j["eta_bound"] = cert.eta_bound;
  j["eta_bound_sup"] = cert.eta_bound_sup;
  j["lhs_worst"] = cert.lhs_worst;
  j["lhs_argmax"] = cert.lhs_argmax;
  j["rhs_no_c"] = cert.rhs_no_c;
  j["lambda2"] = cert.lambda2;
  j["k_minus_l_norm"] = cert.k_minus_l_norm;
  j["y_norm"] = cert.y_norm;
  j["rho_hat"] = cert.rho_hat;
  j["kappa"] = cert.kappa;
  j["theta_bar"] = cert.theta_bar;
  j["d_max"] = cert.d_max;
  j["lhs_per_bus"] = json::array();
  for (int i = 0; i < cert.lhs_per_bus.size(); ++i) j["lhs_per_bus"].push_back(cert.lhs_per_bus(i));
  return j;
}

inline json linearization_to_json(const LinearizationResult& lin) {
  json j;
  j["zeta_min"] = lin.spectrum.zeta_min;
  j["zero_index"] = lin.spectrum.zero_index;
  j["zero_regular"] = lin.spectrum.zero_regular;
  j["omega_shift_pu"] = lin.equilibrium.omega_shift;
  j["residual"] = lin.equilibrium.residual;
  j["iterations"] = lin.equilibrium.iterations;
  j["eigenvalues_rad_s"] = json::array();
  for (int i = 0; i < lin.spectrum.eigenvalues.size(); ++i)
    j["eigenvalues_rad_s"].push_back(
        {lin.spectrum.eigenvalues(i).real(), lin.spectrum.eigenvalues(i).imag()});
  return j;
}

inline json audit_to_json(const DecreaseAudit& a) {
  json j;
  j["claim"] = a.claim;
  j["n_samples"] = a.n_samples;
  j["violations"] = a.violations;
  j["min_slack"] = a.min_slack;
  j["worst_time"] = std::isnan(a.worst_time) ? json(nullptr) : json(a.worst_time);
  j["pass"] = a.pass;
  return j;
}

inline json consistency_to_json(const ConsistencyReport& r) {
  json j;
  auto arr = [](const Eigen::VectorXd& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
  };
  j["p_residual"] = arr(r.p_residual);
  j["q_residual"] = arr(r.q_residual);
  j["p_implied"] = arr(r.p_implied);
  j["q_implied"] = arr(r.q_implied);
  j["tol"] = r.tol;
  j["pass"] = r.pass;
  return j;
}

// ---------------------------------------------------------------------------
// CSV writers.
// ---------------------------------------------------------------------------
inline std::string timeseries_csv(const NetworkCase& final_net, const StateLayout& layout,
                                  const TimeSeries& ts, double omega0) {
  std::ostringstream out;
  out << "t,bus,vx,vy,vmag,freq_hz,p,q,iomag\n";
  for (std::size_t i = 0; i < ts.n_samples(); ++i) {
    const ActiveMask& mask = ts.masks[static_cast<std::size_t>(ts.epoch[i])];
    const std::vector<BusChannels> ch =
        derived_channels(final_net, layout, mask, omega0, ts.x[i], ts.dx[i]);
    for (int b = 0; b < final_net.n_buses(); ++b) {
      const BusChannels& c = ch[static_cast<std::size_t>(b)];
      out << ioutil::fmt(ts.t[i]) << ',' << final_net.buses[static_cast<std::size_t>(b)].id
          << ',' << ioutil::fmt(c.vx) << ',' << ioutil::fmt(c.vy) << ',' << ioutil::fmt(c.vmag)
          << ',' << (std::isnan(c.freq_hz) ? std::string() : ioutil::fmt(c.freq_hz)) << ','
          << ioutil::fmt(c.p) << ',' << ioutil::fmt(c.q) << ',' << ioutil::fmt(c.iomag) << '\n';
    }
  }
  return out.str();
}

inline std::string admittance_sweep_csv(const AdmittanceSweepResult& r, double z_base) {
  std::ostringstream out;
  out << "y_pu,y_siemens,zeta_min,converged,omega_shift_pu,angle_jump,continuous\n";
  for (const AdmittanceSweepPoint& p : r.points) {
    out << ioutil::fmt(p.value) << ',' << ioutil::fmt(p.value / z_base) << ','
        << (p.converged ? ioutil::fmt(p.zeta_min) : std::string()) << ','
        << (p.converged ? 1 : 0) << ',' << ioutil::fmt(p.omega_shift) << ','
        << ioutil::fmt(p.angle_jump) << ',' << (p.continuous ? 1 : 0) << '\n';
  }
  return out.str();
}

inline std::string gain_grid_csv(const GainGridResult& g) {
  std::ostringstream out;
  out << "eta,alpha,label,zeta_min\n";
  for (std::size_t ie = 0; ie < g.etas.size(); ++ie)
    for (std::size_t ia = 0; ia < g.alphas.size(); ++ia) {
      const std::size_t flat = ie * g.alphas.size() + ia;
      out << ioutil::fmt(g.etas[ie]) << ',' << ioutil::fmt(g.alphas[ia]) << ','
          << g.labels[flat] << ','
          << (std::isnan(g.zeta_min[flat]) ? std::string() : ioutil::fmt(g.zeta_min[flat]))
          << '\n';
    }
  return out.str();
}

// ---------------------------------------------------------------------------
// Manifest and error reporting.
// ---------------------------------------------------------------------------
inline json make_manifest(const std::string& command_line, const NetworkCase& c,
                          const GainSettings& g, unsigned long long seed,
                          const json& integrator, const std::vector<std::string>& outputs,
                          double wall_time_s) {
  json j;
  j["tool_version"] = kToolVersion;
  j["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." +
                       std::to_string(EIGEN_MAJOR_VERSION) + "." +
                       std::to_string(EIGEN_MINOR_VERSION);
  j["command"] = command_line;
  j["case_name"] = c.name;
  j["case_hash"] = case_hash(c);
  j["gains"] = gains_to_json(g);
  j["seed"] = seed;
  j["integrator"] = integrator;
  j["outputs"] = outputs;
  j["wall_time_s"] = wall_time_s;
  return j;
}

inline json error_to_json(const std::string& type, const std::string& message) {
  return json{{"error", {{"type", type}, {"message", message}}}};
}

}  // namespace dvoc
