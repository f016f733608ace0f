#pragma once

// Scenario simulation: initial-condition policies (black start or steady
// seed), timed events (load steps, inverter loss), the segmented scenario
// runner, and per-bus derived output channels.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dvoc/integrate.hpp"
#include "dvoc/system.hpp"

namespace dvoc {

struct EventSpec {
  enum class Kind { load_step, inverter_loss };
  double t = 0.0;  // seconds
  Kind kind = Kind::load_step;
  int bus = -1;
  double scale = 1.0;  // load-step: admittance multiplier (>1 increases load)
};

struct Scenario {
  enum class Init { black_start, steady };
  std::string name = "custom";
  Init init = Init::black_start;
  double start_magnitude = 1e-4;  // p.u., black start
  double duration = 15.0;         // seconds
  double cadence = 1e-3;          // seconds
  std::vector<EventSpec> events;
  unsigned long long seed = 42;
};

struct TimeSeries {
  std::vector<double> t;
  std::vector<Eigen::VectorXd> x;    // full state, layout order
  std::vector<Eigen::VectorXd> dx;   // SI-time derivative at each sample
  std::vector<int> epoch;            // per-sample index into masks
  std::vector<ActiveMask> masks;     // one entry per segment
  bool diverged = false;
  double diverged_at = std::numeric_limits<double>::quiet_NaN();
  IntegrationStatus status = IntegrationStatus::ok;
  std::string note;

  std::size_t n_samples() const { return t.size(); }
};

struct ScenarioResult {
  TimeSeries series;
  NetworkCase final_net;   // case with any load steps applied
  ActiveMask final_mask;
};

// Black-start state: every network state at zero except the inverter
// voltages, which start as tiny phasors with seeded uniform random angles.
inline Eigen::VectorXd black_start_state(const SystemModel& model, double magnitude,
                                         unsigned long long seed) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(model.layout.dim);
  std::mt19937_64 rng = seeded_rng(seed);
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  for (int k = 0; k < model.layout.n_inv; ++k) {
    const double a = angle(rng);
    x.segment<2>(model.layout.off_v + 2 * k) =
        magnitude * Eigen::Vector2d(std::cos(a), std::sin(a));
  }
  return x;
}

inline void apply_event(const EventSpec& ev, NetworkCase& net, const StateLayout& layout,
                        ActiveMask& mask, Eigen::VectorXd& x) {
  if (ev.bus < 0 || ev.bus >= net.n_buses()) throw ValidationError("event bus out of range");
  switch (ev.kind) {
    case EventSpec::Kind::load_step: {
      Bus& b = net.buses[static_cast<std::size_t>(ev.bus)];
      if (!b.has_load) throw ValidationError("load step targets a bus without a load");
      if (!(ev.scale > 0.0)) throw ValidationError("load step scale must be positive");
      // Scaling the load admittance by `scale` divides the series impedance.
      b.load_r /= ev.scale;
      b.load_x /= ev.scale;
      break;
    }
    case EventSpec::Kind::inverter_loss:
      apply_inverter_loss(net, layout, mask, x, ev.bus);
      break;
  }
}

// ---------------------------------------------------------------------------
// Segmented scenario runner. Event times are snapped to the sample grid; the
// sample emitted at an event instant records the pre-event state. On
// divergence the series is returned truncated with the flag set.
// ---------------------------------------------------------------------------
inline ScenarioResult run_scenario(const SystemModel& model, const Scenario& sc,
                                   IntegratorOptions opts = {}) {
  if (!(sc.duration > 0.0) || !(sc.cadence > 0.0))
    throw ValidationError("scenario duration and cadence must be positive");
  const long n_samples = std::lround(sc.duration / sc.cadence);

  NetworkCase net = model.net;  // working copy; load steps mutate it
  const StateLayout& layout = model.layout;
  ActiveMask mask = ActiveMask::all_active(layout);

  Eigen::VectorXd x = sc.init == Scenario::Init::black_start
                          ? black_start_state(model, sc.start_magnitude, sc.seed)
                          : steady_seed(net, model.profile, layout);

  std::vector<EventSpec> events = sc.events;
  std::sort(events.begin(), events.end(),
            [](const EventSpec& a, const EventSpec& b) { return a.t < b.t; });
  for (const EventSpec& ev : events)
    if (ev.t <= 0.0 || ev.t >= sc.duration)
      throw ValidationError("event time must lie strictly inside the scenario window");

  ScenarioResult result;
  TimeSeries& ts = result.series;
  ts.masks.push_back(mask);
  opts.throw_on_failure = false;

  // Initial sample.
  ts.t.push_back(0.0);
  ts.x.push_back(x);
  ts.dx.push_back(model.gains.omega0 *
                  rhs_full_pu(net, model.profile, model.gains, model.km, layout, mask, x));
  ts.epoch.push_back(0);

  std::vector<long> boundaries;  // sample indices where segments end
  for (const EventSpec& ev : events)
    boundaries.push_back(std::max(1L, std::lround(ev.t / sc.cadence)));
  boundaries.push_back(n_samples);

  long sample_cursor = 0;  // index of the last emitted sample
  for (std::size_t seg = 0; seg < boundaries.size(); ++seg) {
    const long end_sample = boundaries[seg];
    if (end_sample > sample_cursor) {
      const double t_begin = static_cast<double>(sample_cursor) * sc.cadence;
      const double t_end = static_cast<double>(end_sample) * sc.cadence;
      // Explicit return type forces the scaled expression to materialize
      // while the rhs_full_pu temporary is still alive.
      const auto rhs = [&](double, const Eigen::VectorXd& state) -> Eigen::VectorXd {
        return model.gains.omega0 *
               rhs_full_pu(net, model.profile, model.gains, model.km, layout, mask, state);
      };
      const Trajectory tr = integrate(rhs, x, t_begin, t_end, sc.cadence, opts);
      for (std::size_t i = 1; i < tr.t.size(); ++i) {  // initial sample already emitted
        ts.t.push_back(tr.t[i]);
        ts.x.push_back(tr.x[i]);
        ts.dx.push_back(tr.dx[i]);
        ts.epoch.push_back(static_cast<int>(ts.masks.size()) - 1);
      }
      sample_cursor = static_cast<long>(ts.t.size()) - 1;
      if (tr.failed()) {
        ts.diverged = true;
        ts.diverged_at = tr.stop_time;
        ts.status = tr.status;
        ts.note = tr.status == IntegrationStatus::step_underflow
                      ? "step size underflow"
                      : (tr.status == IntegrationStatus::non_finite ? "non-finite state"
                                                                    : "state norm exceeded bound");
        break;
      }
      x = tr.x.back();
    }
    if (seg < events.size()) {
      apply_event(events[seg], net, layout, mask, x);
      ts.masks.push_back(mask);
    }
  }

  result.final_net = net;
  result.final_mask = mask;
  return result;
}

// ---------------------------------------------------------------------------
// Derived per-bus channels: voltage components and magnitude, instantaneous
// frequency, active/reactive injection into the network, and the magnitude of
// the net branch current leaving the bus. Frequency is left absent (NaN) when
// the voltage magnitude is below 1e-6 p.u. or the bus's inverter is lost.
// ---------------------------------------------------------------------------
struct BusChannels {
  double vx = 0.0, vy = 0.0, vmag = 0.0;
  double freq_hz = std::numeric_limits<double>::quiet_NaN();
  double p = 0.0, q = 0.0, iomag = 0.0;
};

inline std::vector<BusChannels> derived_channels(const NetworkCase& net,
                                                 const StateLayout& layout,
                                                 const ActiveMask& mask, double omega0,
                                                 const Eigen::VectorXd& x,
                                                 const Eigen::VectorXd& dx) {
  const int nb = net.n_buses();
  Eigen::VectorXd bus_out = Eigen::VectorXd::Zero(2 * nb);
  for (int l = 0; l < layout.n_br; ++l) {
    if (!mask.branch[static_cast<std::size_t>(l)]) continue;
    const Eigen::Vector2d il = layout.i_br(x, l);
    bus_out.segment<2>(2 * net.branches[l].from) += il;
    bus_out.segment<2>(2 * net.branches[l].to) -= il;
  }

  std::vector<BusChannels> out(static_cast<std::size_t>(nb));
  for (int b = 0; b < nb; ++b) {
    BusChannels& ch = out[static_cast<std::size_t>(b)];
    const int inv_slot = layout.inv_slot_of_bus[b];
    const bool lost = inv_slot >= 0 && !mask.inverter[static_cast<std::size_t>(inv_slot)];
    const Eigen::Vector2d v = layout.v_bus(x, b);
    const Eigen::Vector2d vdot = dx.segment<2>(layout.v_bus_offset(b));
    const Eigen::Vector2d io = bus_out.segment<2>(2 * b);
    ch.vx = v.x();
    ch.vy = v.y();
    ch.vmag = v.norm();
    ch.p = active_power(v, io);
    ch.q = reactive_power(v, io);
    ch.iomag = io.norm();
    if (!lost && ch.vmag >= 1e-6) {
      // Rotating-frame angle rate on top of the nominal frequency.
      const double cross = v.x() * vdot.y() - v.y() * vdot.x();
      ch.freq_hz = omega0 / (2.0 * M_PI) + cross / (2.0 * M_PI * ch.vmag * ch.vmag);
    }
  }
  return out;
}

// Largest inverter output-current magnitude over the samples of a series,
// optionally ignoring samples before `t_min`. Used for overshoot grading.
inline double max_inverter_current(const NetworkCase& net, const StateLayout& layout,
                                   const TimeSeries& ts, double t_min) {
  double best = 0.0;
  for (std::size_t i = 0; i < ts.n_samples(); ++i) {
    if (ts.t[i] < t_min) continue;
    const ActiveMask& mask = ts.masks[static_cast<std::size_t>(ts.epoch[i])];
    Eigen::VectorXd bus_out = Eigen::VectorXd::Zero(2 * net.n_buses());
    for (int l = 0; l < layout.n_br; ++l) {
      if (!mask.branch[static_cast<std::size_t>(l)]) continue;
      const Eigen::Vector2d il = layout.i_br(ts.x[i], l);
      bus_out.segment<2>(2 * net.branches[l].from) += il;
      bus_out.segment<2>(2 * net.branches[l].to) -= il;
    }
    for (int k = 0; k < layout.n_inv; ++k) {
      if (!mask.inverter[static_cast<std::size_t>(k)]) continue;
      best = std::max(best,
                      bus_out.segment<2>(2 * layout.inv_bus[static_cast<std::size_t>(k)]).norm());
    }
  }
  return best;
}

}  // namespace dvoc
