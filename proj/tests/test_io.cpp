// File formats: JSON round trips for cases, profiles, and scenarios; SI-unit
// ingestion; CSV emitters; the run manifest; and the content hash.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "dvoc/dvoc.hpp"

namespace fs = std::filesystem;
using dvoc::json;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using Catch::Matchers::WithinULP;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

fs::path temp_dir() {
  const fs::path d = fs::temp_directory_path() / "dvoc-io-tests";
  fs::create_directories(d);
  return d;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char ch : text) {
    if (ch == '\n') {
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  return lines;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

void require_same_case(const dvoc::NetworkCase& a, const dvoc::NetworkCase& b) {
  REQUIRE(a.name == b.name);
  REQUIRE(a.omega0 == b.omega0);
  REQUIRE(a.base_power == b.base_power);
  REQUIRE(a.base_voltage == b.base_voltage);
  REQUIRE(a.n_buses() == b.n_buses());
  for (int k = 0; k < a.n_buses(); ++k) {
    const dvoc::Bus& ba = a.buses[static_cast<std::size_t>(k)];
    const dvoc::Bus& bb = b.buses[static_cast<std::size_t>(k)];
    REQUIRE(ba.id == bb.id);
    REQUIRE(ba.kind == bb.kind);
    REQUIRE(ba.shunt_b == bb.shunt_b);
    REQUIRE(ba.has_load == bb.has_load);
    if (ba.has_load) {
      REQUIRE(ba.load_r == bb.load_r);
      REQUIRE(ba.load_x == bb.load_x);
    }
  }
  REQUIRE(a.n_branches() == b.n_branches());
  for (int l = 0; l < a.n_branches(); ++l) {
    const dvoc::Branch& la = a.branches[static_cast<std::size_t>(l)];
    const dvoc::Branch& lb = b.branches[static_cast<std::size_t>(l)];
    REQUIRE(la.from == lb.from);
    REQUIRE(la.to == lb.to);
    REQUIRE(la.r == lb.r);
    REQUIRE(la.x == lb.x);
  }
}

}  // namespace

TEST_CASE("numeric formatting uses plain shortest-style decimals", "[io]") {
  REQUIRE(dvoc::ioutil::fmt(0.0) == "0");
  REQUIRE(dvoc::ioutil::fmt(15.0) == "15");
  REQUIRE(dvoc::ioutil::fmt(0.1) == "0.1");
  REQUIRE(dvoc::ioutil::fmt(-0.05) == "-0.05");
  REQUIRE(dvoc::ioutil::fmt(1e-6) == "1e-06");
}

TEST_CASE("content digest matches the published 64-bit FNV-1a vectors", "[io]") {
  REQUIRE(dvoc::ioutil::fnv1a64("") == 0xcbf29ce484222325ull);
  REQUIRE(dvoc::ioutil::fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  REQUIRE(dvoc::ioutil::fnv1a64("foobar") == 0x85944171f73967e8ull);
  REQUIRE(dvoc::ioutil::hex64(0) == "0000000000000000");
  REQUIRE(dvoc::ioutil::hex64(0xcbf29ce484222325ull) == "cbf29ce484222325");
}

TEST_CASE("network case serializes with canonical keys", "[io]") {
  const dvoc::NetworkCase tri = dvoc::threebus_network();
  const json j = dvoc::case_to_json(tri);

  REQUIRE(j["name"].get<std::string>() == "threebus");
  REQUIRE_THAT(j["f0_hz"].get<double>(), WithinULP(50.0, 4));
  REQUIRE(j["base_power_va"].get<double>() == 1e9);
  REQUIRE(j["base_voltage_v"].get<double>() == 320e3);

  REQUIRE(j["buses"].size() == 3);
  for (int k = 0; k < 3; ++k) {
    REQUIRE(j["buses"][k]["id"].get<std::string>() == std::to_string(k + 1));
    REQUIRE(j["buses"][k]["kind"].get<std::string>() == "inverter");
    REQUIRE_FALSE(j["buses"][k].contains("shunt_b"));
    REQUIRE_FALSE(j["buses"][k].contains("load_r"));
  }

  REQUIRE(j["branches"].size() == 3);
  REQUIRE(j["branches"][0]["from"].get<std::string>() == "1");
  REQUIRE(j["branches"][0]["to"].get<std::string>() == "2");
  REQUIRE(j["branches"][0]["r"].get<double>() == tri.branches[0].r);
  REQUIRE(j["branches"][0]["x"].get<double>() == tri.branches[0].x);

  const json j9 = dvoc::case_to_json(dvoc::ieee9_network());
  REQUIRE(j9["buses"].size() == 9);
  // Bus "4" (index 3): shunt but no load. Bus "5" (index 4): shunt and load.
  REQUIRE(j9["buses"][3]["kind"].get<std::string>() == "passive");
  REQUIRE(j9["buses"][3]["shunt_b"].get<double>() == 0.167);
  REQUIRE_FALSE(j9["buses"][3].contains("load_r"));
  REQUIRE(j9["buses"][4]["shunt_b"].get<double>() == 0.241);
  REQUIRE(j9["buses"][4]["load_r"].get<double>() == 0.6896551724137931);
  REQUIRE(j9["buses"][4]["load_x"].get<double>() == 0.27586206896551724);
}

TEST_CASE("case JSON round-trips through a file without loss", "[io]") {
  const fs::path dir = temp_dir();
  int idx = 0;
  for (const dvoc::NetworkCase& c : {dvoc::threebus_network(), dvoc::ieee9_network()}) {
    const fs::path path = dir / ("case-" + std::to_string(idx++) + ".json");
    dvoc::ioutil::write_json_file(path.string(), dvoc::case_to_json(c));
    const dvoc::NetworkCase back = dvoc::case_from_json(dvoc::ioutil::load_json_file(path.string()));
    require_same_case(c, back);
    REQUIRE(dvoc::case_hash(c) == dvoc::case_hash(back));
  }
}

TEST_CASE("content hash tracks the physical description", "[io]") {
  const dvoc::NetworkCase tri = dvoc::threebus_network();
  const std::string h = dvoc::case_hash(tri);
  REQUIRE(h.size() == 16);
  REQUIRE(h.find_first_not_of("0123456789abcdef") == std::string::npos);
  REQUIRE(dvoc::case_hash(tri) == h);  // stable across calls

  dvoc::NetworkCase bumped = tri;
  bumped.branches[0].r *= 1.0 + 1e-9;
  REQUIRE(dvoc::case_hash(bumped) != h);

  dvoc::NetworkCase renamed = tri;
  renamed.name = "threebus-b";
  REQUIRE(dvoc::case_hash(renamed) != h);
}

TEST_CASE("SI-suffixed fields convert on ingestion", "[io]") {
  const json j = {
      {"name", "si-units"},
      {"f0_hz", 50.0},
      {"base_power_va", 1.0e9},
      {"base_voltage_v", 320.0e3},
      {"buses",
       json::array({
           json{{"id", "gen"}, {"kind", "inverter"}},
           json{{"id", "town"},
                {"kind", "passive"},
                {"shunt_c_farad", 1e-6},
                {"load_r_ohm", 51.2},
                {"load_l_henry", 0.05}},
           json{{"id", "mill"}, {"kind", "inverter"}},
       })},
      {"branches",
       json::array({
           json{{"from", "gen"}, {"to", "town"}, {"r_ohm", 51.2}, {"x_ohm", 102.4}},
           json{{"from", "town"}, {"to", "mill"}, {"r", 0.05}, {"l_henry", 0.1}},
       })},
  };
  const dvoc::NetworkCase c = dvoc::case_from_json(j);
  const double zb = c.z_base();
  REQUIRE(zb == 102.4);  // (320 kV)^2 / 1 GVA

  // 51.2 Ohm on a 102.4 Ohm base is exactly half; 102.4 Ohm is exactly one.
  REQUIRE(c.branches[0].r == 0.5);
  REQUIRE(c.branches[0].x == 1.0);
  // Mixed per-unit and SI fields on the same branch.
  REQUIRE(c.branches[1].r == 0.05);
  REQUIRE_THAT(c.branches[1].x, WithinRel(c.omega0 * 0.1 / zb, 1e-14));

  const dvoc::Bus& town = c.buses[1];
  REQUIRE(town.kind == dvoc::BusKind::passive);
  REQUIRE_THAT(town.shunt_b, WithinRel(c.omega0 * 1e-6 * zb, 1e-14));
  REQUIRE(town.has_load);
  REQUIRE(town.load_r == 0.5);
  REQUIRE_THAT(town.load_x, WithinRel(c.omega0 * 0.05 / zb, 1e-14));

  // Angular frequency can be given directly instead of f0_hz.
  const json j2 = {
      {"omega0_rad_s", 320.0},
      {"buses", json::array({json{{"kind", "inverter"}}, json{{"kind", "inverter"}}})},
      {"branches", json::array({json{{"from", 0}, {"to", 1}, {"r", 0.01}, {"x", 0.1}}})},
  };
  const dvoc::NetworkCase c2 = dvoc::case_from_json(j2);
  REQUIRE(c2.omega0 == 320.0);
  REQUIRE(c2.name == "unnamed");
  // Buses without ids are numbered from one; integer branch endpoints are
  // zero-based indices.
  REQUIRE(c2.buses[0].id == "1");
  REQUIRE(c2.buses[1].id == "2");
  REQUIRE(c2.branches[0].from == 0);
  REQUIRE(c2.branches[0].to == 1);
}

TEST_CASE("malformed case documents are rejected", "[io]") {
  const json ok_buses = json::array(
      {json{{"kind", "inverter"}}, json{{"kind", "inverter"}}});
  const json ok_branches =
      json::array({json{{"from", 0}, {"to", 1}, {"r", 0.01}, {"x", 0.1}}});

  auto with = [&](json patch) {
    json j = {{"buses", ok_buses}, {"branches", ok_branches}};
    j.update(patch);
    return j;
  };

  REQUIRE_THROWS_AS(dvoc::case_from_json(json{{"branches", ok_branches}}), dvoc::ParseError);
  REQUIRE_THROWS_AS(dvoc::case_from_json(json{{"buses", ok_buses}}), dvoc::ParseError);
  REQUIRE_THROWS_AS(dvoc::case_from_json(with({{"f0_hz", "fifty"}})), dvoc::ParseError);

  // Unknown bus kind.
  REQUIRE_THROWS_AS(
      dvoc::case_from_json(with({{"buses", json::array({json{{"kind", "synchronous"}},
                                                        json{{"kind", "inverter"}}})}})),
      dvoc::ParseError);
  // Passive bus without a shunt element.
  REQUIRE_THROWS_AS(
      dvoc::case_from_json(with({{"buses", json::array({json{{"kind", "inverter"}},
                                                        json{{"kind", "passive"}}})}})),
      dvoc::ParseError);
  // Load resistance without any load reactance.
  REQUIRE_THROWS_AS(
      dvoc::case_from_json(with(
          {{"buses", json::array({json{{"kind", "inverter"}},
                                  json{{"kind", "passive"},
                                       {"shunt_b", 0.2},
                                       {"load_r", 1.0}}})}})),
      dvoc::ParseError);

  // Branch endpoint problems.
  REQUIRE_THROWS_AS(
      dvoc::case_from_json(with({{"branches", json::array({json{{"to", 1}, {"r", 0.01},
                                                                {"x", 0.1}}})}})),
      dvoc::ParseError);
  REQUIRE_THROWS_AS(
      dvoc::case_from_json(with({{"branches", json::array({json{{"from", 0}, {"to", 7},
                                                                {"r", 0.01}, {"x", 0.1}}})}})),
      dvoc::ParseError);
  REQUIRE_THROWS_AS(
      dvoc::case_from_json(with({{"branches", json::array({json{{"from", 0}, {"to", "zz"},
                                                                {"r", 0.01}, {"x", 0.1}}})}})),
      dvoc::ParseError);
  REQUIRE_THROWS_AS(
      dvoc::case_from_json(with({{"branches", json::array({json{{"from", 0}, {"to", true},
                                                                {"r", 0.01}, {"x", 0.1}}})}})),
      dvoc::ParseError);
  // Missing reactance in every accepted spelling.
  REQUIRE_THROWS_AS(
      dvoc::case_from_json(with({{"branches", json::array({json{{"from", 0}, {"to", 1},
                                                                {"r", 0.01}}})}})),
      dvoc::ParseError);

  // Structurally invalid but parseable documents fail physical validation.
  REQUIRE_THROWS_AS(
      dvoc::case_from_json(with({{"branches", json::array({json{{"from", 0}, {"to", 1},
                                                                {"r", -0.01}, {"x", 0.1}}})}})),
      dvoc::ValidationError);
  REQUIRE_THROWS_AS(
      dvoc::case_from_json(with({{"buses", json::array({json{{"kind", "inverter"}},
                                                        json{{"kind", "inverter"}},
                                                        json{{"kind", "inverter"}}})}})),
      dvoc::DisconnectedGraph);
}

TEST_CASE("set-point profile JSON uses null for unknown entries", "[io]") {
  const json j = {
      {"p_star", {nullptr, 0.85, 1.63}},
      {"q_star", {nullptr, nullptr, nullptr}},
      {"v_star", {1.0, 1.0, 1.0}},
  };
  const dvoc::SetpointProfile pr = dvoc::profile_from_json(j);
  REQUIRE(pr.p_star.size() == 3);
  REQUIRE(std::isnan(pr.p_star(0)));
  REQUIRE(pr.p_star(1) == 0.85);
  REQUIRE(pr.p_star(2) == 1.63);
  REQUIRE(pr.q_star.array().isNaN().all());
  REQUIRE(pr.v_star.isOnes());
  REQUIRE_FALSE(pr.has_angles);
  REQUIRE(pr.passive_v.size() == 0);

  // Emission reproduces the document exactly, nulls included.
  REQUIRE(dvoc::profile_to_json(pr) == j);

  // A completed profile carries solved angles (and passive voltages when the
  // network has passive buses) through the round trip bit-for-bit.
  for (const dvoc::CaseBundle& b : {dvoc::threebus_case(), dvoc::ieee9_case()}) {
    const dvoc::SetpointProfile back = dvoc::profile_from_json(dvoc::profile_to_json(b.profile));
    REQUIRE(back.has_angles == b.profile.has_angles);
    REQUIRE((back.p_star - b.profile.p_star).norm() == 0.0);
    REQUIRE((back.q_star - b.profile.q_star).norm() == 0.0);
    REQUIRE((back.v_star - b.profile.v_star).norm() == 0.0);
    REQUIRE((back.theta - b.profile.theta).norm() == 0.0);
    REQUIRE(back.passive_v.size() == b.profile.passive_v.size());
    if (back.passive_v.size() > 0)
      REQUIRE((back.passive_v - b.profile.passive_v).norm() == 0.0);
  }

  REQUIRE_THROWS_AS(dvoc::profile_from_json(json{{"q_star", {0.0}}, {"v_star", {1.0}}}),
                    dvoc::ParseError);
  REQUIRE_THROWS_AS(
      dvoc::profile_from_json(json{{"p_star", 3}, {"q_star", {0.0}}, {"v_star", {1.0}}}),
      dvoc::ParseError);
}

TEST_CASE("scenario JSON round-trips with buses by id", "[io]") {
  const dvoc::NetworkCase c = dvoc::ieee9_network();
  const dvoc::Scenario sc = dvoc::ieee9_events_scenario();
  const json j = dvoc::scenario_to_json(sc, c);

  REQUIRE(j["name"].get<std::string>() == "ieee9-events");
  REQUIRE(j["init"].get<std::string>() == "black-start");
  REQUIRE(j["start_magnitude"].get<double>() == 1e-4);
  REQUIRE(j["duration_s"].get<double>() == 15.0);
  REQUIRE(j["cadence_s"].get<double>() == 1e-3);
  REQUIRE(j["seed"].get<unsigned long long>() == 42);
  REQUIRE(j["events"].size() == 2);
  REQUIRE(j["events"][0]["t_s"].get<double>() == 5.0);
  REQUIRE(j["events"][0]["kind"].get<std::string>() == "load-step");
  REQUIRE(j["events"][0]["bus"].get<std::string>() == "5");
  REQUIRE(j["events"][0]["scale"].get<double>() == 1.2);
  REQUIRE(j["events"][1]["kind"].get<std::string>() == "inverter-loss");
  REQUIRE(j["events"][1]["bus"].get<std::string>() == "1");
  REQUIRE_FALSE(j["events"][1].contains("scale"));

  const dvoc::Scenario back = dvoc::scenario_from_json(j, c);
  REQUIRE(back.name == sc.name);
  REQUIRE(back.init == sc.init);
  REQUIRE(back.start_magnitude == sc.start_magnitude);
  REQUIRE(back.duration == sc.duration);
  REQUIRE(back.cadence == sc.cadence);
  REQUIRE(back.seed == sc.seed);
  REQUIRE(back.events.size() == 2);
  REQUIRE(back.events[0].kind == dvoc::EventSpec::Kind::load_step);
  REQUIRE(back.events[0].bus == 4);
  REQUIRE(back.events[0].t == 5.0);
  REQUIRE(back.events[0].scale == 1.2);
  REQUIRE(back.events[1].kind == dvoc::EventSpec::Kind::inverter_loss);
  REQUIRE(back.events[1].bus == 0);

  // Steady-state start survives the trip; defaults fill missing fields.
  dvoc::Scenario steady = sc;
  steady.init = dvoc::Scenario::Init::steady;
  REQUIRE(dvoc::scenario_from_json(dvoc::scenario_to_json(steady, c), c).init ==
          dvoc::Scenario::Init::steady);
  const dvoc::Scenario minimal = dvoc::scenario_from_json(
      json{{"duration_s", 1.0}, {"cadence_s", 0.1}}, c);
  REQUIRE(minimal.name == "custom");
  REQUIRE(minimal.init == dvoc::Scenario::Init::black_start);
  REQUIRE(minimal.events.empty());

  // Buses may also be referenced by index.
  const dvoc::Scenario by_index = dvoc::scenario_from_json(
      json{{"duration_s", 1.0},
           {"cadence_s", 0.1},
           {"events", json::array({json{{"t_s", 0.5}, {"kind", "inverter-loss"}, {"bus", 2}}})}},
      c);
  REQUIRE(by_index.events[0].bus == 2);

  auto bad = [&](json patch) {
    json doc = {{"duration_s", 1.0}, {"cadence_s", 0.1}};
    doc.update(patch);
    return doc;
  };
  REQUIRE_THROWS_AS(dvoc::scenario_from_json(bad({{"init", "warm"}}), c), dvoc::ParseError);
  REQUIRE_THROWS_AS(dvoc::scenario_from_json(json{{"cadence_s", 0.1}}, c), dvoc::ParseError);
  REQUIRE_THROWS_AS(
      dvoc::scenario_from_json(
          bad({{"events", json::array({json{{"t_s", 0.5}, {"kind", "trip"}, {"bus", 0}}})}}), c),
      dvoc::ParseError);
  REQUIRE_THROWS_AS(
      dvoc::scenario_from_json(
          bad({{"events", json::array({json{{"t_s", 0.5}, {"kind", "inverter-loss"}}})}}), c),
      dvoc::ParseError);
  REQUIRE_THROWS_AS(
      dvoc::scenario_from_json(
          bad({{"events",
                json::array({json{{"t_s", 0.5}, {"kind", "load-step"}, {"bus", "5"}}})}}),
          c),
      dvoc::ParseError);
}

TEST_CASE("time-series CSV lists one row per bus per sample", "[io]") {
  const dvoc::CaseBundle b = dvoc::threebus_case();
  const dvoc::SystemModel model = b.model();

  dvoc::Scenario sc;
  sc.name = "csv-probe";
  sc.init = dvoc::Scenario::Init::steady;
  sc.duration = 0.015;
  sc.cadence = 1e-3;
  sc.events.push_back(dvoc::EventSpec{0.005, dvoc::EventSpec::Kind::inverter_loss, 0, 0.0});

  dvoc::IntegratorOptions opts;
  opts.fixed_step = true;
  opts.fixed_dt = 1e-4;

  const dvoc::ScenarioResult res = dvoc::run_scenario(model, sc, opts);
  REQUIRE_FALSE(res.series.diverged);
  REQUIRE(res.series.n_samples() == 16);
  REQUIRE(res.series.masks.size() == 2);
  REQUIRE(res.series.epoch[5] == 0);   // sample at the event instant is pre-event
  REQUIRE(res.series.epoch[6] == 1);

  const std::string csv =
      dvoc::timeseries_csv(res.final_net, model.layout, res.series, model.gains.omega0);
  const std::vector<std::string> lines = split_lines(csv);
  REQUIRE(lines.size() == 1 + 16 * 3);
  REQUIRE(lines[0] == "t,bus,vx,vy,vmag,freq_hz,p,q,iomag");

  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t k = 0; k < 3; ++k) {
      const std::vector<std::string> f = split_fields(lines[1 + 3 * i + k]);
      REQUIRE(f.size() == 9);
      REQUIRE(f[1] == std::to_string(k + 1));  // bus ids cycle per sample
      REQUIRE_THAT(std::stod(f[0]), WithinAbs(static_cast<double>(i) * 1e-3, 1e-12));
      const bool lost = k == 0 && i >= 6;  // first inverter lost after 5 ms
      if (lost) {
        REQUIRE(f[2] == "0");   // voltage zeroed with the mask
        REQUIRE(f[3] == "0");
        REQUIRE(f[5].empty());  // no frequency without a voltage
        REQUIRE(f[8] == "0");   // disconnected: no branch current
      } else {
        REQUIRE_FALSE(f[5].empty());
        REQUIRE_THAT(std::stod(f[4]), WithinAbs(1.0, 0.1));  // near-nominal voltage
        REQUIRE_THAT(std::stod(f[5]), WithinAbs(50.0, 0.5));  // near-nominal frequency
      }
    }
  }

  // Same scenario, same options: bytes match.
  const dvoc::ScenarioResult res2 = dvoc::run_scenario(model, sc, opts);
  REQUIRE(dvoc::timeseries_csv(res2.final_net, model.layout, res2.series,
                               model.gains.omega0) == csv);
}

TEST_CASE("admittance sweep CSV converts to siemens and blanks failed points", "[io]") {
  dvoc::AdmittanceSweepResult r;
  r.branch = 0;
  dvoc::AdmittanceSweepPoint p1;
  p1.value = 0.3;
  p1.converged = true;
  p1.zeta_min = -0.05;
  p1.omega_shift = 1e-6;
  p1.angle_jump = 0.01;
  p1.continuous = true;
  dvoc::AdmittanceSweepPoint p2;
  p2.value = 0.5;
  p2.converged = false;
  p2.omega_shift = 0.0;
  p2.angle_jump = 0.0;
  p2.continuous = false;
  r.points = {p1, p2};

  REQUIRE(dvoc::admittance_sweep_csv(r, 2.0) ==
          "y_pu,y_siemens,zeta_min,converged,omega_shift_pu,angle_jump,continuous\n"
          "0.3,0.15,-0.05,1,1e-06,0.01,1\n"
          "0.5,0.25,,0,0,0,0\n");
}

TEST_CASE("gain grid CSV flattens the grid row-major with blank failures", "[io]") {
  dvoc::GainGridResult g;
  g.etas = {1e-3, 2e-3};
  g.alphas = {5.0};
  g.labels = {'a', 'b'};
  g.zeta_min = {0.5, kNan};
  REQUIRE(dvoc::gain_grid_csv(g) ==
          "eta,alpha,label,zeta_min\n"
          "0.001,5,a,0.5\n"
          "0.002,5,b,\n");
}

TEST_CASE("manifest captures the reproduction context", "[io]") {
  const dvoc::CaseBundle b = dvoc::threebus_case();
  const json integrator = {{"method", "dp54"}, {"rtol", 1e-7}};
  const std::vector<std::string> outputs = {"timeseries.csv", "manifest.json"};
  const json m = dvoc::make_manifest("dvoc simulate --case threebus", b.net, b.gains, 7,
                                     integrator, outputs, 1.5);

  REQUIRE(m["tool_version"].get<std::string>() == "0.1.0");
  const std::string expected_eigen = std::to_string(EIGEN_WORLD_VERSION) + "." +
                                     std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                     std::to_string(EIGEN_MINOR_VERSION);
  REQUIRE(m["eigen_version"].get<std::string>() == expected_eigen);
  REQUIRE(m["command"].get<std::string>() == "dvoc simulate --case threebus");
  REQUIRE(m["case_name"].get<std::string>() == "threebus");
  REQUIRE(m["case_hash"].get<std::string>() == dvoc::case_hash(b.net));
  REQUIRE(m["gains"]["eta"].get<double>() == b.gains.eta);
  REQUIRE(m["gains"]["alpha"].get<double>() == b.gains.alpha);
  REQUIRE(m["gains"]["kappa"].get<double>() == b.gains.kappa);
  REQUIRE_THAT(m["gains"]["f0_hz"].get<double>(), WithinULP(50.0, 4));
  REQUIRE(m["seed"].get<unsigned long long>() == 7);
  REQUIRE(m["integrator"] == integrator);
  REQUIRE(m["outputs"].size() == 2);
  REQUIRE(m["outputs"][0].get<std::string>() == "timeseries.csv");
  REQUIRE(m["wall_time_s"].get<double>() == 1.5);
}

TEST_CASE("result serializers mirror the computed structures", "[io]") {
  REQUIRE(dvoc::error_to_json("ParseError", "boom") ==
          json{{"error", {{"type", "ParseError"}, {"message", "boom"}}}});

  dvoc::DecreaseAudit a;
  a.claim = "demo";
  a.n_samples = 5;
  a.violations = 0;
  a.min_slack = 0.25;
  a.pass = true;
  json ja = dvoc::audit_to_json(a);
  REQUIRE(ja["claim"].get<std::string>() == "demo");
  REQUIRE(ja["n_samples"].get<std::size_t>() == 5);
  REQUIRE(ja["violations"].get<std::size_t>() == 0);
  REQUIRE(ja["min_slack"].get<double>() == 0.25);
  REQUIRE(ja["worst_time"].is_null());  // no violation recorded
  REQUIRE(ja["pass"].get<bool>());
  a.worst_time = 1.25;
  REQUIRE(dvoc::audit_to_json(a)["worst_time"].get<double>() == 1.25);

  const dvoc::CaseBundle b = dvoc::threebus_case();
  const dvoc::ConsistencyReport rep = dvoc::verify_consistency(b.net, b.profile);
  const json jc = dvoc::consistency_to_json(rep);
  REQUIRE(jc["pass"].get<bool>() == rep.pass);
  REQUIRE(jc["tol"].get<double>() == rep.tol);
  for (int k = 0; k < 3; ++k) {
    REQUIRE(jc["p_residual"][k].get<double>() == rep.p_residual(k));
    REQUIRE(jc["q_residual"][k].get<double>() == rep.q_residual(k));
    REQUIRE(jc["p_implied"][k].get<double>() == rep.p_implied(k));
    REQUIRE(jc["q_implied"][k].get<double>() == rep.q_implied(k));
  }

  const dvoc::LinearizationResult lin = dvoc::linearize(b.model());
  const json jl = dvoc::linearization_to_json(lin);
  REQUIRE(jl["zeta_min"].get<double>() == lin.spectrum.zeta_min);
  REQUIRE(jl["zero_index"].get<int>() == lin.spectrum.zero_index);
  REQUIRE(jl["zero_regular"].get<bool>() == lin.spectrum.zero_regular);
  REQUIRE(jl["omega_shift_pu"].get<double>() == lin.equilibrium.omega_shift);
  REQUIRE(jl["residual"].get<double>() == lin.equilibrium.residual);
  REQUIRE(jl["eigenvalues_rad_s"].size() == 12);
  for (int i = 0; i < 12; ++i) {
    REQUIRE(jl["eigenvalues_rad_s"][i][0].get<double>() ==
            lin.spectrum.eigenvalues(i).real());
    REQUIRE(jl["eigenvalues_rad_s"][i][1].get<double>() ==
            lin.spectrum.eigenvalues(i).imag());
  }

  dvoc::GainSettings g = b.gains;
  g.eta = 5e-5;
  const dvoc::StabilityCertificate cert = dvoc::condition2(b.net, b.profile, g);
  const json jcert = dvoc::certificate_to_json(cert);
  REQUIRE(jcert["variant"].get<std::string>() == "angle");
  REQUIRE(jcert["pass"].get<bool>() == cert.pass);
  REQUIRE(jcert["graph_pass"].get<bool>() == cert.graph_pass);
  REQUIRE(jcert["eta_pass"].get<bool>() == cert.eta_pass);
  REQUIRE(jcert["c"].get<double>() == cert.c);
  REQUIRE(jcert["c_max"].get<double>() == cert.c_max);
  REQUIRE(jcert["eta_bound"].get<double>() == cert.eta_bound);
  REQUIRE(jcert["eta_bound_sup"].get<double>() == cert.eta_bound_sup);
  REQUIRE(jcert["lhs_worst"].get<double>() == cert.lhs_worst);
  REQUIRE(jcert["lhs_argmax"].get<int>() == cert.lhs_argmax);
  REQUIRE(jcert["rhs_no_c"].get<double>() == cert.rhs_no_c);
  REQUIRE(jcert["lambda2"].get<double>() == cert.lambda2);
  REQUIRE(jcert["k_minus_l_norm"].get<double>() == cert.k_minus_l_norm);
  REQUIRE(jcert["y_norm"].get<double>() == cert.y_norm);
  REQUIRE(jcert["rho_hat"].get<double>() == cert.rho_hat);
  REQUIRE(jcert["kappa"].get<double>() == cert.kappa);
  REQUIRE(jcert["theta_bar"].get<double>() == cert.theta_bar);
  REQUIRE(jcert["d_max"].get<double>() == cert.d_max);
  REQUIRE(jcert["lhs_per_bus"].size() == 3);
  for (int k = 0; k < 3; ++k)
    REQUIRE(jcert["lhs_per_bus"][k].get<double>() == cert.lhs_per_bus(k));
}

TEST_CASE("json files round-trip via disk and bad files are rejected", "[io]") {
  const fs::path dir = temp_dir();
  const dvoc::CaseBundle b = dvoc::threebus_case();
  const json m = dvoc::make_manifest("cmd", b.net, b.gains, 1, json{{"method", "rk4"}},
                                     {"out.csv"}, 0.25);
  const fs::path path = dir / "manifest.json";
  dvoc::ioutil::write_json_file(path.string(), m);
  REQUIRE(dvoc::ioutil::load_json_file(path.string()) == m);

  REQUIRE_THROWS_AS(dvoc::ioutil::load_json_file((dir / "absent.json").string()),
                    dvoc::ParseError);

  const fs::path garbage = dir / "garbage.json";
  dvoc::ioutil::write_text_file(garbage.string(), "{ this is not json");
  REQUIRE_THROWS_AS(dvoc::ioutil::load_json_file(garbage.string()), dvoc::ParseError);

  REQUIRE_THROWS_AS(
      dvoc::ioutil::write_text_file("/nonexistent-dir-for-io-tests/out.txt", "x"),
      dvoc::ValidationError);
}
