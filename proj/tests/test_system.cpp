// State layout, full/reduced/boundary right-hand sides, analytic Jacobian,
// steady seeds, outage masking, and the rotating/stationary frame equivalence.

#include <catch2/catch_amalgamated.hpp>

#include "dvoc/dvoc.hpp"

using Catch::Approx;

namespace {

// Triangle benchmark with the exactly consistent implied injections adopted,
// so the steady seed is an exact equilibrium of the rotating-frame dynamics.
dvoc::SystemModel consistent_triangle() {
  dvoc::CaseBundle bundle = dvoc::threebus_case();
  const dvoc::ConsistencyReport rep =
      dvoc::verify_consistency(bundle.net, bundle.profile, 1e9);
  bundle.profile.p_star = rep.p_implied;
  bundle.profile.q_star = rep.q_implied;
  return dvoc::SystemModel::make(bundle.net, bundle.profile, bundle.gains);
}

Eigen::VectorXd randn(std::mt19937_64& rng, int n, double scale) {
  std::normal_distribution<double> nd(0.0, scale);
  Eigen::VectorXd v(n);
  for (int k = 0; k < n; ++k) v(k) = nd(rng);
  return v;
}

}  // namespace

TEST_CASE("state layout of the triangle benchmark", "[system]") {
  const dvoc::StateLayout s = dvoc::StateLayout::of(dvoc::threebus_network());
  REQUIRE(s.n_inv == 3);
  REQUIRE(s.n_br == 3);
  REQUIRE(s.n_pas == 0);
  REQUIRE(s.n_load == 0);
  REQUIRE(s.off_v == 0);
  REQUIRE(s.off_i == 6);
  REQUIRE(s.dim == 12);
}

TEST_CASE("state layout of the nine-bus benchmark", "[system]") {
  const dvoc::StateLayout s = dvoc::StateLayout::of(dvoc::ieee9_network());
  REQUIRE(s.n_inv == 3);
  REQUIRE(s.n_br == 9);
  REQUIRE(s.n_pas == 6);
  REQUIRE(s.n_load == 3);
  REQUIRE(s.off_v == 0);
  REQUIRE(s.off_i == 6);
  REQUIRE(s.off_vp == 24);
  REQUIRE(s.off_il == 36);
  REQUIRE(s.dim == 42);

  // Slot maps: inverters occupy buses 0..2, passive buses 3..8,
  // the series loads hang off buses 4, 6, and 8.
  for (int b = 0; b < 3; ++b) REQUIRE(s.inv_slot_of_bus[b] == b);
  for (int b = 3; b < 9; ++b) {
    REQUIRE(s.inv_slot_of_bus[b] == -1);
    REQUIRE(s.pas_slot_of_bus[b] == b - 3);
  }
  REQUIRE(s.load_slot_of_bus[4] == 0);
  REQUIRE(s.load_slot_of_bus[6] == 1);
  REQUIRE(s.load_slot_of_bus[8] == 2);
  REQUIRE(s.load_slot_of_bus[3] == -1);

  // Segment accessors address the blocks the offsets promise.
  Eigen::VectorXd x(s.dim);
  for (int k = 0; k < s.dim; ++k) x(k) = k;
  REQUIRE((s.v_inv(x, 1) - Eigen::Vector2d(2, 3)).norm() == 0.0);
  REQUIRE((s.i_br(x, 0) - Eigen::Vector2d(6, 7)).norm() == 0.0);
  REQUIRE((s.v_pas(x, 0) - Eigen::Vector2d(24, 25)).norm() == 0.0);
  REQUIRE((s.i_load(x, 2) - Eigen::Vector2d(40, 41)).norm() == 0.0);
  REQUIRE((s.v_bus(x, 2) - Eigen::Vector2d(4, 5)).norm() == 0.0);
  REQUIRE((s.v_bus(x, 3) - Eigen::Vector2d(24, 25)).norm() == 0.0);
  REQUIRE(s.v_bus_offset(2) == 4);
  REQUIRE(s.v_bus_offset(8) == 34);
}

TEST_CASE("steady seed is an equilibrium under consistent set-points", "[system]") {
  const dvoc::SystemModel model = consistent_triangle();
  const Eigen::VectorXd x = dvoc::steady_seed(model.net, model.profile, model.layout);
  const Eigen::VectorXd dx = model.rhs_pu(model.all_active(), x);
  REQUIRE(dx.lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("nine-bus steady seed closes the mixed network balance", "[system]") {
  const dvoc::CaseBundle bundle = dvoc::ieee9_case();
  const dvoc::SystemModel model = bundle.model();
  const Eigen::VectorXd x = dvoc::steady_seed(model.net, model.profile, model.layout);
  const Eigen::VectorXd dx = model.rhs_pu(model.all_active(), x);
  REQUIRE(dx.lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("steady seed rotates equivariantly", "[system]") {
  for (bool nine : {false, true}) {
    const dvoc::CaseBundle bundle = nine ? dvoc::ieee9_case() : dvoc::threebus_case();
    const dvoc::StateLayout s = dvoc::StateLayout::of(bundle.net);
    const double a = 0.83;
    const Eigen::VectorXd x0 = dvoc::steady_seed(bundle.net, bundle.profile, s);
    const Eigen::VectorXd xa = dvoc::steady_seed(bundle.net, bundle.profile, s, a);
    REQUIRE((xa - dvoc::block_rot(s.dim / 2, a) * x0).norm() ==
            Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("steady seed requires a fully completed profile", "[system]") {
  const dvoc::CaseBundle bundle = dvoc::ieee9_case();
  const dvoc::StateLayout s = dvoc::StateLayout::of(bundle.net);
  dvoc::SetpointProfile no_angles = bundle.profile;
  no_angles.has_angles = false;
  REQUIRE_THROWS_AS(dvoc::steady_seed(bundle.net, no_angles, s),
                    dvoc::InconsistentProfile);
  dvoc::SetpointProfile no_passive = bundle.profile;
  no_passive.passive_v.resize(0);
  REQUIRE_THROWS_AS(dvoc::steady_seed(bundle.net, no_passive, s),
                    dvoc::InconsistentProfile);
}

TEST_CASE("SI right-hand side is the per-unit one scaled by the rated frequency",
          "[system]") {
  const dvoc::SystemModel model = dvoc::threebus_case().model();
  std::mt19937_64 rng = dvoc::seeded_rng(3);
  const Eigen::VectorXd x = randn(rng, model.layout.dim, 0.5);
  const dvoc::ActiveMask m = model.all_active();
  const Eigen::VectorXd pu = model.rhs_pu(m, x);
  const Eigen::VectorXd si = model.rhs_si(m, x);
  REQUIRE((si - model.gains.omega0 * pu).norm() == Approx(0.0).margin(1e-12));
  const Eigen::VectorXd free_fn =
      dvoc::rhs_full(model.net, model.profile, model.gains, model.km, model.layout, m, x);
  REQUIRE((free_fn - si).norm() == Approx(0.0).margin(1e-12));
}

TEST_CASE("analytic Jacobian matches central differences", "[system]") {
  for (bool nine : {false, true}) {
    const dvoc::SystemModel model =
        nine ? dvoc::ieee9_case().model() : dvoc::threebus_case().model();
    const dvoc::ActiveMask m = model.all_active();
    std::mt19937_64 rng = dvoc::seeded_rng(nine ? 17 : 13);
    Eigen::VectorXd x = dvoc::steady_seed(model.net, model.profile, model.layout);
    x += randn(rng, model.layout.dim, 0.05);

    const Eigen::MatrixXd jac = model.jac_pu(m, x);
    const double h = 1e-5;
    Eigen::MatrixXd fd(model.layout.dim, model.layout.dim);
    for (int j = 0; j < model.layout.dim; ++j) {
      Eigen::VectorXd xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      fd.col(j) = (model.rhs_pu(m, xp) - model.rhs_pu(m, xm)) / (2.0 * h);
    }
    REQUIRE((jac - fd).lpNorm<Eigen::Infinity>() < 1e-5);
  }
}

TEST_CASE("rotating-frame solution equals the rotated stationary-frame solution",
          "[system]") {
  const dvoc::SystemModel model = consistent_triangle();
  const dvoc::ActiveMask mask = model.all_active();
  std::mt19937_64 rng = dvoc::seeded_rng(29);
  Eigen::VectorXd x0 = dvoc::steady_seed(model.net, model.profile, model.layout);
  x0 += randn(rng, model.layout.dim, 0.05);

  const auto f_rot = [&](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return model.rhs_si(mask, x);
  };
  const auto f_stat = [&](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return model.gains.omega0 * dvoc::rhs_full_static_pu(model.net, model.profile,
                                                         model.gains, model.km,
                                                         model.layout, mask, x);
  };

  dvoc::IntegratorOptions opts;
  opts.rtol = 1e-9;
  opts.atol = 1e-12;
  const double horizon = 0.05;
  const dvoc::Trajectory rot_traj = dvoc::integrate(f_rot, x0, 0.0, horizon, horizon, opts);
  const dvoc::Trajectory stat_traj =
      dvoc::integrate(f_stat, x0, 0.0, horizon, horizon, opts);
  REQUIRE(rot_traj.status == dvoc::IntegrationStatus::ok);
  REQUIRE(stat_traj.status == dvoc::IntegrationStatus::ok);

  const Eigen::VectorXd x_rot = rot_traj.x.back();
  const Eigen::VectorXd x_stat = stat_traj.x.back();
  const double tau = model.gains.omega0 * horizon;
  const Eigen::VectorXd mapped =
      dvoc::block_rot(model.layout.dim / 2, -tau) * x_stat;
  REQUIRE((x_rot - mapped).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("inverter loss masks the unit and its incident branches", "[system]") {
  const dvoc::SystemModel model = dvoc::threebus_case().model();
  const dvoc::StateLayout& s = model.layout;
  dvoc::ActiveMask m = model.all_active();
  std::mt19937_64 rng = dvoc::seeded_rng(37);
  Eigen::VectorXd x = randn(rng, s.dim, 0.7);

  dvoc::apply_inverter_loss(model.net, s, m, x, 1);
  REQUIRE_FALSE(m.fully_active());
  REQUIRE(m.inverter[1] == 0);
  REQUIRE(m.inverter[0] == 1);
  // Branches 0 = (0,1) and 2 = (1,2) touch bus 1; branch 1 = (0,2) survives.
  REQUIRE(m.branch[0] == 0);
  REQUIRE(m.branch[1] == 1);
  REQUIRE(m.branch[2] == 0);
  REQUIRE(s.v_inv(x, 1).norm() == 0.0);
  REQUIRE(s.i_br(x, 0).norm() == 0.0);
  REQUIRE(s.i_br(x, 2).norm() == 0.0);

  // Masked entries stay frozen: zero rows in the right-hand side, zero
  // rows and columns in the Jacobian.
  const Eigen::VectorXd dx = model.rhs_pu(m, x);
  REQUIRE(dx.segment<2>(s.off_v + 2).norm() == 0.0);
  REQUIRE(dx.segment<2>(s.off_i + 0).norm() == 0.0);
  REQUIRE(dx.segment<2>(s.off_i + 4).norm() == 0.0);
  REQUIRE(dx.segment<2>(s.off_v + 0).norm() > 0.0);

  const Eigen::MatrixXd jac = model.jac_pu(m, x);
  REQUIRE(jac.row(s.off_v + 2).norm() == 0.0);
  REQUIRE(jac.row(s.off_i + 1).norm() == 0.0);
  REQUIRE(jac.col(s.off_v + 3).norm() == 0.0);
  REQUIRE(jac.col(s.off_i + 4).norm() == 0.0);

  // The Jacobian still matches central differences under the mask.
  const double h = 1e-5;
  Eigen::MatrixXd fd(s.dim, s.dim);
  for (int j = 0; j < s.dim; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    fd.col(j) = (model.rhs_pu(m, xp) - model.rhs_pu(m, xm)) / (2.0 * h);
  }
  REQUIRE((jac - fd).lpNorm<Eigen::Infinity>() < 1e-5);

  // Only inverter buses can be lost.
  const dvoc::SystemModel nine = dvoc::ieee9_case().model();
  dvoc::ActiveMask m9 = nine.all_active();
  Eigen::VectorXd x9 = Eigen::VectorXd::Zero(nine.layout.dim);
  REQUIRE_THROWS_AS(dvoc::apply_inverter_loss(nine.net, nine.layout, m9, x9, 3),
                    dvoc::ValidationError);
}

TEST_CASE("reduced model matches the explicit gain-minus-coupling form", "[system]") {
  const dvoc::SystemModel model = consistent_triangle();
  const dvoc::NetworkCase& c = model.net;
  const dvoc::SetpointProfile& pr = model.profile;
  const dvoc::GainSettings& g = model.gains;

  const Eigen::MatrixXd lap = dvoc::reduced_coupling(c);
  const Eigen::MatrixXd k_hat = model.km.stacked();

  std::mt19937_64 rng = dvoc::seeded_rng(43);
  for (int it = 0; it < 10; ++it) {
    const Eigen::VectorXd v = randn(rng, 6, 1.0);
    const Eigen::VectorXd got = dvoc::rhs_reduced(c, pr, g, v);
    const Eigen::VectorXd expect =
        g.omega0 * g.eta * ((k_hat - lap) * v + g.alpha * dvoc::phi_stacked(pr, v));
    REQUIRE((got - expect).norm() <= 1e-9 * std::max(1.0, expect.norm()));
  }

  // The synchronous set is an equilibrium of the reduced dynamics.
  for (double a : {0.0, -1.3}) {
    const Eigen::VectorXd vt = dvoc::target_voltages(pr, a);
    REQUIRE(dvoc::rhs_reduced(c, pr, g, vt).norm() < 1e-8);
  }

  // The reduced model refuses mixed networks and non-uniform ratios.
  const dvoc::CaseBundle nine = dvoc::ieee9_case();
  REQUIRE_THROWS_AS(
      dvoc::rhs_reduced(nine.net, nine.profile, nine.gains, Eigen::VectorXd::Zero(6)),
      dvoc::AssumptionViolated);
  dvoc::NetworkCase skewed = model.net;
  skewed.branches[0].r *= 3.0;
  REQUIRE_THROWS_AS(dvoc::reduced_coupling(skewed), dvoc::AssumptionViolated);
}

TEST_CASE("boundary-layer dynamics decay branch current errors", "[system]") {
  const dvoc::NetworkCase c = dvoc::threebus_network();
  std::mt19937_64 rng = dvoc::seeded_rng(47);
  const Eigen::VectorXd y = randn(rng, 6, 1.0);
  const Eigen::VectorXd dy = dvoc::rhs_boundary_pu(c, y);
  for (int l = 0; l < 3; ++l) {
    const dvoc::Branch& b = c.branches[l];
    const Eigen::Vector2d expect =
        -(b.r / b.x) * dvoc::seg2(y, l) - dvoc::J2() * dvoc::seg2(y, l);
    REQUIRE((dvoc::seg2(dy, l) - expect).norm() == Approx(0.0).margin(1e-14));
    // Each block shrinks its own magnitude at the resistive rate.
    REQUIRE(dvoc::seg2(y, l).dot(dvoc::seg2(dy, l)) ==
            Approx(-(b.r / b.x) * dvoc::seg2(y, l).squaredNorm()).margin(1e-12));
  }
  dvoc::GainSettings g;
  g.kappa = dvoc::rho_info(c).kappa;
  REQUIRE((dvoc::rhs_boundary(c, g, y) - g.omega0 * dy).norm() ==
          Approx(0.0).margin(1e-12));
  REQUIRE_THROWS_AS(dvoc::rhs_boundary_pu(c, Eigen::VectorXd::Zero(5)),
                    dvoc::DimensionMismatch);
}

TEST_CASE("layout J applies the quarter turn blockwise", "[system]") {
  const dvoc::StateLayout s = dvoc::StateLayout::of(dvoc::ieee9_network());
  const Eigen::MatrixXd j = dvoc::layout_J(s);
  std::mt19937_64 rng = dvoc::seeded_rng(53);
  const Eigen::VectorXd x = randn(rng, s.dim, 1.0);
  const Eigen::VectorXd jx = j * x;
  for (int k = 0; k < s.dim / 2; ++k) {
    REQUIRE((dvoc::seg2(jx, k) - dvoc::J2() * dvoc::seg2(x, k)).norm() ==
            Approx(0.0).margin(1e-14));
  }
}
