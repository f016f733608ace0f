// Command-line front end: case/profile/scenario ingestion, built-in study
// cases, and orchestration of the simulate / certify / audit / linearize /
// sweep pipelines with CSV/JSON artifacts and a manifest per run.
//
// Exit codes: 0 ok, 2 validation/parse failure, 3 numerical failure,
// 4 diverged simulation (partial outputs are still written).

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dvoc/dvoc.hpp"

namespace fs = std::filesystem;
using dvoc::json;

namespace {

struct CommonArgs {
  std::string case_ref = "threebus";
  std::string profile_path;
  std::string outdir = "out";
  double eta = std::numeric_limits<double>::quiet_NaN();
  double alpha = std::numeric_limits<double>::quiet_NaN();
  double kappa = std::numeric_limits<double>::quiet_NaN();
  unsigned long long seed = 42;
};

void add_common(CLI::App* cmd, CommonArgs& a) {
  cmd->add_option("--case", a.case_ref,
                  "built-in case name (threebus, ieee9) or JSON file path");
  cmd->add_option("--profile", a.profile_path, "set-point profile JSON file");
  cmd->add_option("--outdir", a.outdir, "artifact output directory");
  cmd->add_option("--eta", a.eta, "synchronization gain override (p.u.)");
  cmd->add_option("--alpha", a.alpha, "magnitude gain override (p.u.)");
  cmd->add_option("--kappa", a.kappa, "controller impedance angle override (rad)");
  cmd->add_option("--seed", a.seed, "random seed (env DVOC_SEED overrides)");
}

unsigned long long effective_seed(unsigned long long flag_seed) {
  if (const char* env = std::getenv("DVOC_SEED")) {
    try {
      return std::stoull(env);
    } catch (...) {
      throw dvoc::ValidationError("DVOC_SEED must be an unsigned integer");
    }
  }
  return flag_seed;
}

dvoc::CaseBundle load_bundle(const CommonArgs& a) {
  dvoc::CaseBundle b;
  if (a.case_ref == "threebus") {
    b = dvoc::threebus_case();
  } else if (a.case_ref == "ieee9") {
    b = dvoc::ieee9_case();
  } else {
    b.net = dvoc::case_from_json(dvoc::ioutil::load_json_file(a.case_ref));
    if (a.profile_path.empty())
      throw dvoc::ValidationError("file-based cases need --profile");
    b.gains.omega0 = b.net.omega0;
    const dvoc::RhoInfo rho = dvoc::rho_info(b.net);
    if (rho.uniform) b.gains.kappa = rho.kappa;
    // eta/alpha must come from overrides for file cases.
    b.gains.eta = 1e-3;
    b.gains.alpha = 1.0;
  }
  if (!a.profile_path.empty()) {
    const dvoc::SetpointProfile raw =
        dvoc::profile_from_json(dvoc::ioutil::load_json_file(a.profile_path));
    bool needs_completion = !raw.has_angles;
    for (int k = 0; k < raw.p_star.size() && !needs_completion; ++k)
      if (std::isnan(raw.p_star(k)) || std::isnan(raw.q_star(k)) || std::isnan(raw.v_star(k)))
        needs_completion = true;
    if (b.net.n_inverters() != raw.n())
      throw dvoc::DimensionMismatch("profile size does not match the case inverter count");
    b.profile = needs_completion
                    ? dvoc::complete_profile(b.net, raw.p_star, raw.q_star, raw.v_star)
                    : raw;
  }
  if (!std::isnan(a.eta)) b.gains.eta = a.eta;
  if (!std::isnan(a.alpha)) b.gains.alpha = a.alpha;
  if (!std::isnan(a.kappa)) b.gains.kappa = a.kappa;
  if (b.gains.kappa == 0.0) {
    const dvoc::RhoInfo rho = dvoc::rho_info(b.net);
    if (rho.uniform) b.gains.kappa = rho.kappa;
  }
  return b;
}

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

struct Stopwatch {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void write_manifest(const std::string& outdir, const std::string& command,
                    const dvoc::CaseBundle& b, unsigned long long seed,
                    const json& integrator, const std::vector<std::string>& outputs,
                    double wall_s) {
  dvoc::ioutil::write_json_file(
      outdir + "/manifest.json",
      dvoc::make_manifest(command, b.net, b.gains, seed, integrator, outputs, wall_s));
}

int classify_exit(const dvoc::Error& e) {
  if (dynamic_cast<const dvoc::ParseError*>(&e) ||
      dynamic_cast<const dvoc::ValidationError*>(&e) ||
      dynamic_cast<const dvoc::DimensionMismatch*>(&e) ||
      dynamic_cast<const dvoc::AssumptionViolated*>(&e) ||
      dynamic_cast<const dvoc::InconsistentProfile*>(&e) ||
      dynamic_cast<const dvoc::DisconnectedGraph*>(&e))
    return 2;
  return 3;
}

std::string error_type_name(const dvoc::Error& e) {
  if (dynamic_cast<const dvoc::ParseError*>(&e)) return "ParseError";
  if (dynamic_cast<const dvoc::DisconnectedGraph*>(&e)) return "DisconnectedGraph";
  if (dynamic_cast<const dvoc::ValidationError*>(&e)) return "ValidationError";
  if (dynamic_cast<const dvoc::DimensionMismatch*>(&e)) return "DimensionMismatch";
  if (dynamic_cast<const dvoc::AssumptionViolated*>(&e)) return "AssumptionViolated";
  if (dynamic_cast<const dvoc::InconsistentProfile*>(&e)) return "InconsistentProfile";
  if (dynamic_cast<const dvoc::NoConvergence*>(&e)) return "NoConvergence";
  if (dynamic_cast<const dvoc::StepSizeUnderflow*>(&e)) return "StepSizeUnderflow";
  if (dynamic_cast<const dvoc::NonFiniteState*>(&e)) return "NonFiniteState";
  if (dynamic_cast<const dvoc::DegenerateNetwork*>(&e)) return "DegenerateNetwork";
  if (dynamic_cast<const dvoc::DegenerateVoltage*>(&e)) return "DegenerateVoltage";
  if (dynamic_cast<const dvoc::EigensolveFailure*>(&e)) return "EigensolveFailure";
  if (dynamic_cast<const dvoc::SingularImpedance*>(&e)) return "SingularImpedance";
  return "Error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulator and stability-certification toolkit for inverter-based AC networks"};
  app.require_subcommand(1);
  const std::string command_line = join_args(argc, argv);

  // --- simulate ------------------------------------------------------------
  CommonArgs sim_args;
  std::string scenario_ref = "black-start";
  double sim_duration = std::numeric_limits<double>::quiet_NaN();
  double sim_cadence = std::numeric_limits<double>::quiet_NaN();
  bool fixed_step = false;
  double fixed_dt = 1e-5;
  double rtol = 1e-7, atol = 1e-9;
  CLI::App* sim = app.add_subcommand("simulate", "integrate a scenario and write channel CSV");
  add_common(sim, sim_args);
  sim->add_option("--scenario", scenario_ref,
                  "built-in scenario (black-start, paper-events, ieee9-events) or JSON file");
  sim->add_option("--duration", sim_duration, "override duration (s)");
  sim->add_option("--cadence", sim_cadence, "override sample cadence (s)");
  sim->add_flag("--fixed-step", fixed_step, "use the fixed-step integrator");
  sim->add_option("--dt", fixed_dt, "fixed integrator step (s)");
  sim->add_option("--rtol", rtol, "adaptive relative tolerance");
  sim->add_option("--atol", atol, "adaptive absolute tolerance");

  // --- certify ---------------------------------------------------------------
  CommonArgs cert_args;
  std::string cert_variant = "angle";
  double cert_c = std::numeric_limits<double>::quiet_NaN();
  CLI::App* cert_cmd = app.add_subcommand("certify", "evaluate the analytic stability certificate");
  add_common(cert_cmd, cert_args);
  cert_cmd->add_option("--variant", cert_variant, "certificate form: angle | power | both");
  cert_cmd->add_option("--c", cert_c, "fix the stability margin c (default: c_max/2)");

  // --- audit -----------------------------------------------------------------
  CommonArgs audit_args;
  std::string audit_kind = "full";
  double audit_c = std::numeric_limits<double>::quiet_NaN();
  double audit_duration = std::numeric_limits<double>::quiet_NaN();
  double audit_magnitude = 0.3;
  CLI::App* audit_cmd =
      app.add_subcommand("audit", "simulate a trajectory and audit the decrease claims");
  add_common(audit_cmd, audit_args);
  audit_cmd->add_option("--kind", audit_kind, "reduced | boundary | full");
  audit_cmd->add_option("--c", audit_c, "stability margin (default: c_max/2 from the certificate)");
  audit_cmd->add_option("--duration", audit_duration, "trajectory length (s)");
  audit_cmd->add_option("--magnitude", audit_magnitude, "initial perturbation size (p.u.)");

  // --- linearize ---------------------------------------------------------------
  CommonArgs lin_args;
  CLI::App* lin_cmd =
      app.add_subcommand("linearize", "refine the equilibrium and report the damping spectrum");
  add_common(lin_cmd, lin_args);

  // --- sweep-admittance ---------------------------------------------------------
  CommonArgs swa_args;
  int swa_branch = 0;
  double swa_min_s = std::numeric_limits<double>::quiet_NaN();
  double swa_max_s = std::numeric_limits<double>::quiet_NaN();
  double swa_min_pu = std::numeric_limits<double>::quiet_NaN();
  double swa_max_pu = std::numeric_limits<double>::quiet_NaN();
  int swa_points = 25;
  CLI::App* swa = app.add_subcommand("sweep-admittance",
                                     "trace the damping ratio while scaling one line admittance");
  add_common(swa, swa_args);
  swa->add_option("--branch", swa_branch, "branch index to sweep");
  swa->add_option("--ymin-s", swa_min_s, "smallest admittance (siemens)");
  swa->add_option("--ymax-s", swa_max_s, "largest admittance (siemens)");
  swa->add_option("--ymin-pu", swa_min_pu, "smallest admittance (p.u.)");
  swa->add_option("--ymax-pu", swa_max_pu, "largest admittance (p.u.)");
  swa->add_option("--points", swa_points, "number of sweep points");

  // --- sweep-gains ----------------------------------------------------------------
  CommonArgs swg_args;
  double swg_eta_min = 1e-4, swg_eta_max = 1e-1;
  double swg_alpha_min = 1e-1, swg_alpha_max = 1e2;
  int swg_eta_points = 40, swg_alpha_points = 40;
  int swg_jobs = 0;
  double swg_sim_duration = 10.0;
  CLI::App* swg = app.add_subcommand("sweep-gains", "grade a logarithmic gain grid");
  add_common(swg, swg_args);
  swg->add_option("--eta-min", swg_eta_min, "eta grid lower bound");
  swg->add_option("--eta-max", swg_eta_max, "eta grid upper bound");
  swg->add_option("--eta-points", swg_eta_points, "eta grid size");
  swg->add_option("--alpha-min", swg_alpha_min, "alpha grid lower bound");
  swg->add_option("--alpha-max", swg_alpha_max, "alpha grid upper bound");
  swg->add_option("--alpha-points", swg_alpha_points, "alpha grid size");
  swg->add_option("--jobs", swg_jobs, "worker pool size (0: hardware)");
  swg->add_option("--sim-duration", swg_sim_duration, "black-start grading horizon (s)");

  // --- setpoints -----------------------------------------------------------------
  CommonArgs sp_args;
  CLI::App* sp = app.add_subcommand("setpoints",
                                    "complete and verify a power-flow-consistent profile");
  add_common(sp, sp_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const CommonArgs& active = sim->parsed()     ? sim_args
                             : cert_cmd->parsed() ? cert_args
                             : audit_cmd->parsed() ? audit_args
                             : lin_cmd->parsed()   ? lin_args
                             : swa->parsed()       ? swa_args
                             : swg->parsed()       ? swg_args
                                                   : sp_args;
  Stopwatch watch;
  try {
    fs::create_directories(active.outdir);
    const unsigned long long seed = effective_seed(active.seed);
    dvoc::CaseBundle bundle = load_bundle(active);
    dvoc::SystemModel model = bundle.model();

    if (sim->parsed()) {
      dvoc::Scenario sc;
      if (scenario_ref == "black-start") {
        sc.name = "black-start";
        sc.duration = 10.0;
        sc.cadence = 1e-3;
      } else if (scenario_ref == "paper-events" || scenario_ref == "ieee9-events") {
        sc = dvoc::ieee9_events_scenario();
      } else {
        sc = dvoc::scenario_from_json(dvoc::ioutil::load_json_file(scenario_ref), bundle.net);
      }
      if (!std::isnan(sim_duration)) sc.duration = sim_duration;
      if (!std::isnan(sim_cadence)) sc.cadence = sim_cadence;
      sc.seed = seed;

      dvoc::IntegratorOptions opts;
      opts.fixed_step = fixed_step;
      opts.fixed_dt = fixed_dt;
      opts.rtol = rtol;
      opts.atol = atol;

      const dvoc::ScenarioResult run = dvoc::run_scenario(model, sc, opts);
      const std::string csv =
          dvoc::timeseries_csv(run.final_net, model.layout, run.series, model.gains.omega0);
      dvoc::ioutil::write_text_file(active.outdir + "/timeseries.csv", csv);
      dvoc::ioutil::write_json_file(active.outdir + "/scenario.json",
                                    dvoc::scenario_to_json(sc, bundle.net));
      json run_info;
      run_info["diverged"] = run.series.diverged;
      if (run.series.diverged) {
        run_info["diverged_at_s"] = run.series.diverged_at;
        run_info["reason"] = run.series.note;
      }
      run_info["samples"] = run.series.n_samples();
      dvoc::ioutil::write_json_file(active.outdir + "/run.json", run_info);
      const json integ{{"mode", fixed_step ? "fixed-rk4" : "adaptive-rk45"},
                       {"fixed_dt", fixed_dt},
                       {"rtol", rtol},
                       {"atol", atol}};
      write_manifest(active.outdir, command_line, bundle, seed, integ,
                     {"timeseries.csv", "scenario.json", "run.json"}, watch.seconds());
      if (run.series.diverged) {
        std::cerr << "diverged at t=" << run.series.diverged_at << " s (" << run.series.note
                  << "); partial outputs written\n";
        return 4;
      }
      std::cout << "wrote " << active.outdir << "/timeseries.csv ("
                << run.series.n_samples() << " samples)\n";
      return 0;
    }

    if (cert_cmd->parsed()) {
      const std::optional<double> c_opt =
          std::isnan(cert_c) ? std::nullopt : std::optional<double>(cert_c);
      json out;
      if (cert_variant == "angle" || cert_variant == "both")
        out["angle"] = dvoc::certificate_to_json(
            dvoc::condition2(bundle.net, bundle.profile, bundle.gains, c_opt));
      if (cert_variant == "power" || cert_variant == "both")
        out["power"] = dvoc::certificate_to_json(
            dvoc::prop2_powerform(bundle.net, bundle.profile, bundle.gains, c_opt));
      if (out.empty()) throw dvoc::ValidationError("unknown certificate variant: " + cert_variant);
      dvoc::ioutil::write_json_file(active.outdir + "/certificate.json", out);
      std::cout << out.dump(2) << "\n";
      write_manifest(active.outdir, command_line, bundle, seed, json::object(),
                     {"certificate.json"}, watch.seconds());
      return 0;
    }

    if (audit_cmd->parsed()) {
      double c_decay = audit_c;
      if (std::isnan(c_decay)) {
        const dvoc::StabilityCertificate cert =
            dvoc::condition2(bundle.net, bundle.profile, bundle.gains);
        if (!cert.graph_pass)
          throw dvoc::AssumptionViolated(
              "no admissible stability margin: pass --c or use certified gains");
        c_decay = cert.c;
      }
      const dvoc::LyapunovConstants lc =
          dvoc::lyapunov_constants(bundle.net, bundle.profile, bundle.gains, c_decay);
      std::mt19937_64 rng = dvoc::seeded_rng(seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      dvoc::DecreaseAudit audit;
      const int n = bundle.net.n_buses(), m = bundle.net.n_branches();

      if (audit_kind == "reduced") {
        const double horizon = std::isnan(audit_duration) ? 1.0 : audit_duration;
        Eigen::VectorXd v0 = dvoc::target_voltages(bundle.profile);
        for (int i = 0; i < v0.size(); ++i) v0(i) += audit_magnitude * normal(rng);
        const auto rhs = [&](double, const Eigen::VectorXd& v) -> Eigen::VectorXd {
          return dvoc::rhs_reduced(bundle.net, bundle.profile, bundle.gains, v);
        };
        const dvoc::Trajectory tr = dvoc::integrate(rhs, v0, 0.0, horizon, 1e-3);
        audit = dvoc::decrease_audit_reduced(bundle.net, bundle.profile, bundle.gains, lc,
                                             tr.t, tr.x);
      } else if (audit_kind == "boundary") {
        const double horizon = std::isnan(audit_duration) ? 0.3 : audit_duration;
        Eigen::VectorXd y0(2 * m);
        for (int i = 0; i < y0.size(); ++i) y0(i) = audit_magnitude * normal(rng);
        const auto rhs = [&](double, const Eigen::VectorXd& y) -> Eigen::VectorXd {
          return dvoc::rhs_boundary(bundle.net, bundle.gains, y);
        };
        const dvoc::Trajectory tr = dvoc::integrate(rhs, y0, 0.0, horizon, 1e-4);
        audit = dvoc::decrease_audit_boundary(bundle.net, tr.t, tr.x);
      } else if (audit_kind == "full") {
        if (!bundle.net.all_inverter())
          throw dvoc::AssumptionViolated("full-model audit requires an all-inverter case");
        const double horizon = std::isnan(audit_duration) ? 10.0 : audit_duration;
        dvoc::Scenario sc;
        sc.duration = horizon;
        sc.cadence = 1e-2;
        sc.seed = seed;
        const dvoc::ScenarioResult run = dvoc::run_scenario(model, sc);
        if (run.series.diverged)
          throw dvoc::NonFiniteState("audit trajectory diverged; not a certified operating point?");
        audit = dvoc::decrease_audit_full(bundle.net, bundle.profile, bundle.gains, lc,
                                          run.series.t, run.series.x);
      } else {
        throw dvoc::ValidationError("unknown audit kind: " + audit_kind);
      }
      (void)n;
      json out = dvoc::audit_to_json(audit);
      out["c"] = c_decay;
      dvoc::ioutil::write_json_file(active.outdir + "/audit.json", out);
      std::cout << out.dump(2) << "\n";
      write_manifest(active.outdir, command_line, bundle, seed, json::object(), {"audit.json"},
                     watch.seconds());
      return 0;
    }

    if (lin_cmd->parsed()) {
      const dvoc::LinearizationResult lin = dvoc::linearize(model);
      const json out = dvoc::linearization_to_json(lin);
      dvoc::ioutil::write_json_file(active.outdir + "/linearization.json", out);
      std::cout << "zeta_min = " << dvoc::ioutil::fmt(lin.spectrum.zeta_min) << "\n";
      write_manifest(active.outdir, command_line, bundle, seed, json::object(),
                     {"linearization.json"}, watch.seconds());
      return 0;
    }

    if (swa->parsed()) {
      const double zb = bundle.net.z_base();
      double lo_pu, hi_pu;
      if (!std::isnan(swa_min_s) && !std::isnan(swa_max_s)) {
        lo_pu = swa_min_s * zb;
        hi_pu = swa_max_s * zb;
      } else if (!std::isnan(swa_min_pu) && !std::isnan(swa_max_pu)) {
        lo_pu = swa_min_pu;
        hi_pu = swa_max_pu;
      } else {
        throw dvoc::ValidationError("pass --ymin-s/--ymax-s or --ymin-pu/--ymax-pu");
      }
      if (!(hi_pu > lo_pu) || !(lo_pu > 0.0))
        throw dvoc::ValidationError("sweep bounds must be positive and increasing");
      if (swa_points < 2) throw dvoc::ValidationError("need at least 2 sweep points");
      std::vector<double> values(static_cast<std::size_t>(swa_points));
      for (int i = 0; i < swa_points; ++i)
        values[static_cast<std::size_t>(i)] =
            lo_pu + (hi_pu - lo_pu) * static_cast<double>(i) / (swa_points - 1);
      const dvoc::AdmittanceSweepResult res =
          dvoc::sweep_admittance(model, swa_branch, values);
      dvoc::ioutil::write_text_file(active.outdir + "/sweep_admittance.csv",
                                    dvoc::admittance_sweep_csv(res, zb));
      std::cout << "wrote " << active.outdir << "/sweep_admittance.csv\n";
      write_manifest(active.outdir, command_line, bundle, seed, json::object(),
                     {"sweep_admittance.csv"}, watch.seconds());
      return 0;
    }

    if (swg->parsed()) {
      dvoc::GainGridOptions opts;
      opts.jobs = swg_jobs;
      opts.seed = seed;
      opts.sim_duration = swg_sim_duration;
      const dvoc::GainGridResult grid =
          dvoc::sweep_gains(model, dvoc::log_space(swg_eta_min, swg_eta_max, swg_eta_points),
                            dvoc::log_space(swg_alpha_min, swg_alpha_max, swg_alpha_points),
                            opts);
      dvoc::ioutil::write_text_file(active.outdir + "/gain_grid.csv",
                                    dvoc::gain_grid_csv(grid));
      std::cout << "wrote " << active.outdir << "/gain_grid.csv\n";
      write_manifest(active.outdir, command_line, bundle, seed, json::object(),
                     {"gain_grid.csv"}, watch.seconds());
      return 0;
    }

    if (sp->parsed()) {
      json out;
      out["profile"] = dvoc::profile_to_json(bundle.profile);
      if (bundle.net.all_inverter())
        out["consistency"] =
            dvoc::consistency_to_json(dvoc::verify_consistency(bundle.net, bundle.profile));
      dvoc::ioutil::write_json_file(active.outdir + "/setpoints.json", out);
      std::cout << out.dump(2) << "\n";
      write_manifest(active.outdir, command_line, bundle, seed, json::object(),
                     {"setpoints.json"}, watch.seconds());
      return 0;
    }

    throw dvoc::ValidationError("no subcommand executed");
  } catch (const dvoc::Error& e) {
    const json err = dvoc::error_to_json(error_type_name(e), e.what());
    std::cerr << err.dump(2) << "\n";
    try {
      dvoc::ioutil::write_json_file(active.outdir + "/error.json", err);
    } catch (...) {
    }
    return classify_exit(e);
  } catch (const std::exception& e) {
    const json err = dvoc::error_to_json("InternalError", e.what());
    std::cerr << err.dump(2) << "\n";
    return 3;
  }
}
