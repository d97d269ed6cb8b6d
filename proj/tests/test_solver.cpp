#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "gasnet/energy.hpp"
#include "gasnet/solver.hpp"
#include "oracles.hpp"

using namespace gasnet;

namespace {

PipeParameters pipe(double eps, double gamma = 1.0) {
  PipeParameters p;
  p.epsilon = eps;
  p.friction = Profile::constant(gamma);
  return p;
}

NetworkTopology loop(const PipeParameters& p) {
  return NetworkTopology({"v0", "v1"}, {Edge{"up", 0, 1, p}, Edge{"down", 1, 0, p}});
}

NetworkTopology y_network(const PipeParameters& p) {
  return NetworkTopology({"in", "j", "out1", "out2"},
                         {Edge{"a", 0, 1, p}, Edge{"b", 1, 2, p}, Edge{"c", 1, 3, p}});
}

double total_mass(const NetworkGrid& g, const NetworkState& s) {
  double m = 0.0;
  for (std::size_t c = 0; c < g.cell_count(); ++c) m += g.cell_weight(c) * s.rho[c];
  return m;
}

double pulse(double x) { return 1.0 + 0.2 * std::exp(-std::pow((x - 0.5) / 0.1, 2)); }

} // namespace

TEST(Hyperbolic, RestStateIsFixedPoint) {
  auto law = GasLaw::isothermal(1.0);
  auto p = pipe(0.5);
  p.elevation = Profile({0.0, 1.0}, {0.0, 0.5});
  p.gravity = 1.0;
  NetworkGrid g(NetworkTopology::single_pipe(p), 16);
  const double h0 = 1.2;
  auto s = make_state(g, [&](std::size_t, double x) { return law.inverse_potential_d1(h0 - p.elevation(x)); },
                      [](std::size_t, double) { return 0.0; });
  BoundaryData bd{{0, Schedule::constant(h0)}, {1, Schedule::constant(h0)}};
  SolverConfig cfg;
  cfg.final_time = 1.0;
  cfg.dt = 0.1;
  auto t = run(g, law, s, cfg, bd);
  ASSERT_TRUE(t.complete) << t.failure;
  EXPECT_EQ(t.snapshots.size(), 11u);
  for (const auto& snap : t.snapshots) {
    for (std::size_t c = 0; c < g.cell_count(); ++c) EXPECT_NEAR(snap.rho[c], s.rho[c], 1e-12);
    for (double w : snap.w) EXPECT_NEAR(w, 0.0, 1e-12);
  }
}

TEST(Hyperbolic, ZeroHorizonKeepsInitialSnapshot) {
  auto law = GasLaw::isothermal(1.0);
  NetworkGrid g(NetworkTopology::single_pipe(pipe(0.5)), 4);
  NetworkState s{std::vector<double>(4, 1.0), std::vector<double>(5, 0.0), {}, 0.0};
  SolverConfig cfg;
  cfg.final_time = 0.0;
  auto t = run(g, law, s, cfg, {{0, Schedule::constant(1.0)}, {1, Schedule::constant(1.0)}});
  EXPECT_EQ(t.snapshots.size(), 1u);
  EXPECT_TRUE(t.steps.empty());
}

TEST(Hyperbolic, RejectsZeroEpsilon) {
  auto law = GasLaw::isothermal(1.0);
  NetworkGrid g(NetworkTopology::single_pipe(pipe(0.0)), 4);
  NetworkState s{std::vector<double>(4, 1.0), std::vector<double>(5, 0.0), {}, 0.0};
  SolverConfig cfg;
  EXPECT_THROW(step_hyperbolic(g, law, s, 0.1, {{0, Schedule::constant(1.0)}, {1, Schedule::constant(1.0)}}, cfg),
               std::invalid_argument);
}

TEST(Hyperbolic, FrictionDecayOnLoop) {
  auto law = GasLaw::isothermal(1.0);
  const double eps = 0.5, gamma = 1.0, w0 = 1.0, T = 1.0;
  NetworkGrid g(loop(pipe(eps, gamma)), 8);
  auto s = make_state(g, [](std::size_t, double) { return 1.0; }, [&](std::size_t, double) { return w0; });
  auto err = [&](double dt) {
    SolverConfig cfg;
    cfg.dt = dt;
    cfg.final_time = T;
    auto t = run(g, law, s, cfg, {});
    EXPECT_TRUE(t.complete) << t.failure;
    double e = 0.0;
    for (const auto& snap : t.snapshots) {
      double exact = w0 / (1.0 + gamma * w0 * snap.tau / (eps * eps));
      for (double w : snap.w) e = std::max(e, std::abs(w - exact));
      for (double r : snap.rho) EXPECT_NEAR(r, 1.0, 1e-12);
    }
    return e;
  };
  double e1 = err(0.1), e2 = err(0.05), e3 = err(0.025);
  EXPECT_GT(e1 / e2, 3.5);
  EXPECT_LT(e1 / e2, 4.5);
  EXPECT_GT(e2 / e3, 3.5);
  EXPECT_LT(e2 / e3, 4.5);
}

TEST(Hyperbolic, MassConservedOnClosedLoop) {
  auto law = GasLaw::isothermal(1.0);
  NetworkGrid g(loop(pipe(0.5)), 16);
  auto s = make_state(g, [](std::size_t e, double x) { return e == 0 ? pulse(x) : 1.0; },
                      [](std::size_t, double) { return 0.1; });
  SolverConfig cfg;
  cfg.dt = 0.01;
  cfg.final_time = 0.3;
  auto t = run(g, law, s, cfg, {});
  ASSERT_TRUE(t.complete) << t.failure;
  for (const auto& snap : t.snapshots) EXPECT_NEAR(total_mass(g, snap), total_mass(g, s), 1e-11);
}

TEST(Hyperbolic, PowerBalanceOrderAndDissipativeEuler) {
  auto law = GasLaw::isothermal(1.0);
  NetworkGrid g(NetworkTopology::single_pipe(pipe(0.5)), 64);
  auto s = make_state(g, [](std::size_t, double x) { return pulse(x); }, [](std::size_t, double) { return 0.0; });
  double h = law.potential_d1(1.0);
  BoundaryData bd{{0, Schedule::constant(h)}, {1, Schedule::constant(h)}};
  auto worst = [&](double dt, Scheme scheme) {
    SolverConfig cfg;
    cfg.dt = dt;
    cfg.final_time = 0.2;
    cfg.scheme = scheme;
    auto t = run(g, law, s, cfg, bd);
    EXPECT_TRUE(t.complete) << t.failure;
    auto r = power_balance_residual(t);
    return r;
  };
  auto maxabs = [](const std::vector<double>& r) {
    double m = 0.0;
    for (double v : r) m = std::max(m, std::abs(v));
    return m;
  };
  double r1 = maxabs(worst(1e-2, Scheme::implicit_midpoint));
  double r2 = maxabs(worst(5e-3, Scheme::implicit_midpoint));
  double r3 = maxabs(worst(2.5e-3, Scheme::implicit_midpoint));
  EXPECT_GT(std::log2(r1 / r2), 1.8);
  EXPECT_GT(std::log2(r2 / r3), 1.8);
  for (double v : worst(1e-2, Scheme::backward_euler)) EXPECT_LE(v, 1e-10);
}

TEST(Hyperbolic, ZeroFrictionLoopEnergyDrift) {
  auto law = GasLaw::power_law(1.0, 1.4);
  NetworkGrid g(loop(pipe(0.5, 0.0)), 32);
  auto s = make_state(g, [](std::size_t e, double x) { return e == 0 ? pulse(x) : 1.0; },
                      [](std::size_t, double) { return 0.2; });
  auto drift = [&](double dt) {
    SolverConfig cfg;
    cfg.dt = dt;
    cfg.final_time = 4 * dt;
    auto t = run(g, law, s, cfg, {});
    EXPECT_TRUE(t.complete) << t.failure;
    double m = 0.0;
    for (std::size_t k = 0; k + 1 < t.energy.size(); ++k) m = std::max(m, std::abs(t.energy[k + 1] - t.energy[k]));
    return m;
  };
  double order = std::log2(drift(0.01) / drift(0.005));
  EXPECT_GT(order, 2.6);
}

TEST(Hyperbolic, JunctionConservationOnY) {
  auto law = GasLaw::isothermal(1.0);
  NetworkGrid g(y_network(pipe(0.3)), 16);
  auto s = make_state(g, [](std::size_t, double) { return 1.0; }, [](std::size_t, double) { return 0.0; });
  double h = law.potential_d1(1.0);
  BoundaryData bd{{0, Schedule::table({0.0, 0.2}, {h, h + 0.1})},
                  {2, Schedule::constant(h)},
                  {3, Schedule::constant(h - 0.05)}};
  SolverConfig cfg;
  cfg.dt = 0.01;
  cfg.final_time = 0.5;
  auto t = run(g, law, s, cfg, bd);
  ASSERT_TRUE(t.complete) << t.failure;
  double mass = 0.0, energy = 0.0, flow = 0.0;
  for (const auto& st : t.steps) {
    mass = std::max(mass, std::abs(st.stage.junction_mass[0]));
    energy = std::max(energy, std::abs(st.stage.junction_energy[0]));
  }
  for (double w : t.snapshots.back().w) flow = std::max(flow, std::abs(w));
  EXPECT_LT(mass, 1e-10);
  EXPECT_LT(energy, 1e-10);
  EXPECT_GT(flow, 1e-2); // the transient actually moves gas through the junction
}

TEST(Hyperbolic, MissingBoundaryNamesVertex) {
  auto law = GasLaw::isothermal(1.0);
  NetworkGrid g(y_network(pipe(0.3)), 4);
  auto s = make_state(g, [](std::size_t, double) { return 1.0; }, [](std::size_t, double) { return 0.0; });
  SolverConfig cfg;
  try {
    run(g, law, s, cfg, {{0, Schedule::constant(1.0)}, {3, Schedule::constant(1.0)}});
    FAIL();
  } catch (const BoundaryDataError& e) {
    EXPECT_NE(std::string(e.what()).find("'out1'"), std::string::npos);
  }
}

TEST(VelocityRecovery, ZeroGradient) {
  auto law = GasLaw::isothermal(1.0);
  NetworkGrid g(NetworkTopology::single_pipe(pipe(0.0)), 8);
  std::vector<double> rho(8, 1.3);
  for (double w : velocity_recovery_parabolic(g, law, rho)) EXPECT_EQ(w, 0.0);
}

TEST(VelocityRecovery, ExponentialProfile) {
  auto law = GasLaw::isothermal(1.0);
  for (double gamma : {1.0, 4.0}) {
    NetworkGrid g(NetworkTopology::single_pipe(pipe(0.0, gamma)), 10);
    std::vector<double> rho;
    for (const auto& c : g.cells()) rho.push_back(std::exp(-c.x));
    for (double w : velocity_recovery_parabolic(g, law, rho)) EXPECT_NEAR(w, 1.0 / std::sqrt(gamma), 1e-12);
  }
}

TEST(VelocityRecovery, SolvesFrictionBalanceExactly) {
  auto law = GasLaw::power_law(1.0, 1.4);
  auto p = pipe(0.0, 2.5);
  p.elevation = Profile({0.0, 1.0}, {0.0, 0.2});
  p.gravity = 1.0;
  NetworkGrid g(NetworkTopology::single_pipe(p), 12);
  std::vector<double> rho;
  for (const auto& c : g.cells()) rho.push_back(1.0 + 0.3 * std::sin(5 * c.x));
  std::vector<double> ports{1.5, 2.0};
  auto w = velocity_recovery_parabolic(g, law, rho, ports);
  auto s = parabolic_gradient(g, parabolic_enthalpy(g, law, rho), ports);
  for (std::size_t f = 0; f < w.size(); ++f)
    EXPECT_NEAR(2.5 * std::abs(w[f]) * w[f] + s[f], 0.0, 1e-13 * (1.0 + std::abs(s[f])));
}

TEST(Parabolic, UniformStateIsStationary) {
  auto law = GasLaw::isothermal(1.0);
  NetworkGrid g(y_network(pipe(0.0)), 8);
  auto s = make_state(g, [](std::size_t, double) { return 1.4; }, [](std::size_t, double) { return 0.0; });
  double h = law.potential_d1(1.4);
  BoundaryData bd{{0, Schedule::constant(h)}, {2, Schedule::constant(h)}, {3, Schedule::constant(h)}};
  SolverConfig cfg;
  cfg.parabolic = true;
  cfg.dt = 0.1;
  cfg.final_time = 0.5;
  auto t = run(g, law, s, cfg, bd);
  ASSERT_TRUE(t.complete) << t.failure;
  for (double r : t.snapshots.back().rho) EXPECT_NEAR(r, 1.4, 1e-12);
}

TEST(Parabolic, TwoCellSteadyStateMatchesRootFinder) {
  auto law = GasLaw::isothermal(1.0);
  const double gamma = 2.0, hl = 1.3, hr = 0.9, dx = 0.5;
  NetworkGrid g(NetworkTopology::single_pipe(pipe(0.0, gamma)), 2);
  NetworkState s{{1.0, 1.0}, {0.0, 0.0, 0.0}, {}, 0.0};
  SolverConfig cfg;
  cfg.parabolic = true;
  cfg.dt = 5.0;
  cfg.final_time = 500.0;
  auto t = run(g, law, s, cfg, {{0, Schedule::constant(hl)}, {1, Schedule::constant(hr)}});
  ASSERT_TRUE(t.complete) << t.failure;
  const auto& fin = t.snapshots.back();

  // Oracle: common flux m through three faces. Given m, each end face fixes its
  // cell density (left: the branch above the flux maximum at exp(hl - 3/2)).
  auto vel = [&](double ds, double wt) { double s = ds / wt; return -(s > 0 ? 1 : -1) * std::sqrt(std::abs(s) / gamma); };
  auto rho_left = [&](double m) {
    return oracle::bisect([&](double r) { return r * vel(std::log(r) + 1.0 - hl, dx / 2) - m; }, std::exp(hl - 1.5), std::exp(hl - 1.0));
  };
  auto rho_right = [&](double m) {
    return oracle::bisect([&](double r) { return r * vel(hr - std::log(r) - 1.0, dx / 2) - m; }, std::exp(hr - 1.0), 50.0);
  };
  auto mismatch = [&](double m) {
    double r0 = rho_left(m), r1 = rho_right(m);
    return 0.5 * (r0 + r1) * vel(std::log(r1) - std::log(r0), dx) - m;
  };
  double m = oracle::bisect(mismatch, 1e-6, 0.8);
  EXPECT_NEAR(fin.rho[0], rho_left(m), 1e-8);
  EXPECT_NEAR(fin.rho[1], rho_right(m), 1e-8);
  for (double w : fin.w) EXPECT_GT(w, 0.0);
}

TEST(Parabolic, MassConservedOnClosedLoop) {
  auto law = GasLaw::isothermal(1.0);
  NetworkGrid g(loop(pipe(0.0, 1.0)), 16);
  const double pi = std::acos(-1.0);
  auto s = make_state(g, [&](std::size_t e, double x) { return 1.0 + (e == 0 ? 0.15 : -0.15) * std::sin(pi * x); },
                      [](std::size_t, double) { return 0.0; });
  SolverConfig cfg;
  cfg.parabolic = true;
  cfg.dt = 0.02;
  cfg.final_time = 0.4;
  auto t = run(g, law, s, cfg, {});
  ASSERT_TRUE(t.complete) << t.failure;
  for (const auto& snap : t.snapshots) EXPECT_NEAR(total_mass(g, snap), total_mass(g, s), 1e-11);
  // the pulse spreads
  auto mx = *std::max_element(t.snapshots.back().rho.begin(), t.snapshots.back().rho.end());
  EXPECT_LT(mx, 1.15);
}

TEST(Parabolic, JunctionEnthalpyBalancesFluxes) {
  auto law = GasLaw::isothermal(1.0);
  NetworkGrid g(y_network(pipe(0.0, 1.0)), 8);
  auto s = make_state(g, [](std::size_t e, double x) { return e == 0 ? 1.2 - 0.1 * x : 1.1 - 0.2 * x; },
                      [](std::size_t, double) { return 0.0; });
  auto hj = solve_junction_enthalpies(g, law, s.rho);
  std::vector<double> ports(4, std::numeric_limits<double>::quiet_NaN());
  ports[1] = hj[0];
  ports[0] = law.potential_d1(1.2);
  ports[2] = ports[3] = law.potential_d1(0.9);
  auto w = velocity_recovery_parabolic(g, law, s.rho, ports);
  double sum = 0.0;
  for (std::size_t f : g.port_faces(1)) sum += g.faces()[f].incidence * g.face_area_density(f, s.rho) * w[f];
  EXPECT_NEAR(sum, 0.0, 1e-13);
}

TEST(Config, Validation) {
  SolverConfig cfg;
  cfg.dt = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg.dt = 0.1;
  cfg.newton_tol = -1.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  EXPECT_EQ(parse_scheme("midpoint"), Scheme::implicit_midpoint);
  EXPECT_THROW(parse_scheme("rk4"), std::invalid_argument);
}
