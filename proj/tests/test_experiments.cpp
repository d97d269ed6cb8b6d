#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "gasnet/mms.hpp"
#include "gasnet/output.hpp"
#include "gasnet/scenario.hpp"
#include "gasnet/study.hpp"

using namespace gasnet;

namespace {

std::filesystem::path scenario(const std::string& name) { return std::filesystem::path(GASNET_SCENARIO_DIR) / name; }

const char* kSingle = R"([scenario]
name = t
[gas]
law = isothermal
[model]
epsilon = 0.5
[vertices]
v0 v1
[edges]
e0 v0 v1 length=1
[initial]
rho = 1 + 0.1*x
w = 0
[boundary]
v0 = dP(1)
v1 = table 0:1, 1:1.1
[solver]
cells = 8
dt = 0.1
final_time = 0.5
)";

std::string error_of(const std::string& text) {
  try {
    load_scenario(ConfigDocument::parse_string(text, "s.cfg"));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string replace(std::string s, const std::string& from, const std::string& to) {
  auto p = s.find(from);
  EXPECT_NE(p, std::string::npos) << from;
  return s.replace(p, from.size(), to);
}

} // namespace

TEST(Expression, PrecedenceAndFunctions) {
  auto ev = [](const std::string& s, double x = 0.0) { return Expression::parse(s, {"x"})({x}); };
  EXPECT_DOUBLE_EQ(ev("1 + 2*3"), 7.0);
  EXPECT_DOUBLE_EQ(ev("(1 + 2)*3"), 9.0);
  EXPECT_DOUBLE_EQ(ev("2^3^2"), 512.0);
  EXPECT_DOUBLE_EQ(ev("-2^2"), -4.0);
  EXPECT_DOUBLE_EQ(ev("8/4/2"), 1.0);
  EXPECT_DOUBLE_EQ(ev("1e-2*x", 3.0), 0.03);
  EXPECT_NEAR(ev("sin(pi/2) + exp(0) + max(x, 2)", 5.0), 7.0, 1e-15);
  EXPECT_DOUBLE_EQ(ev("pow(x, 2) - abs(-x)", 3.0), 6.0);
}

TEST(Expression, Errors) {
  EXPECT_THROW(Expression::parse("1 +", {}), ExpressionError);
  EXPECT_THROW(Expression::parse("(1", {}), ExpressionError);
  EXPECT_THROW(Expression::parse("sin(1, 2)", {}), ExpressionError);
  try {
    Expression::parse("2*y", {"x"});
    FAIL();
  } catch (const ExpressionError& e) {
    EXPECT_NE(std::string(e.what()).find("unknown name 'y' at column 3"), std::string::npos) << e.what();
  }
}

TEST(Scenario, LoadsInlineScenario) {
  auto sc = load_scenario(ConfigDocument::parse_string(kSingle));
  EXPECT_EQ(sc.cells, 8u);
  EXPECT_DOUBLE_EQ(sc.boundary.at(0)(0.3), sc.law.potential_d1(1.0));
  EXPECT_DOUBLE_EQ(sc.boundary.at(1)(0.5), 1.05);
  auto grid = scenario_grid(sc);
  auto s = scenario_initial(sc, grid);
  EXPECT_DOUBLE_EQ(s.rho[0], 1.0 + 0.1 * grid.cells()[0].x);
  EXPECT_EQ(sc.topology.edges()[0].pipe.epsilon, 0.5);
}

TEST(Scenario, ShippedScenariosLoad) {
  for (const auto* name : {"rest.cfg", "pulse.cfg", "y_network.cfg", "limit_single.cfg", "limit_y.cfg",
                           "perturbation_single.cfg", "loop.cfg"}) {
    SCOPED_TRACE(name);
    auto sc = load_scenario(scenario(name));
    auto grid = scenario_grid(sc);
    auto s = scenario_initial(sc, grid);
    if (sc.bounds) EXPECT_TRUE(check_admissible(grid, s, *sc.bounds, sc.law).ok);
  }
}

TEST(Scenario, LimitVelocityBalancesFriction) {
  auto sc = load_scenario(scenario("limit_single.cfg"));
  auto grid = scenario_grid(sc);
  auto s = scenario_initial(sc, grid);
  // interior face: gamma |w| w = -(h_R - h_L)/dx
  const auto& f = grid.faces()[5];
  double grad = (sc.law.potential_d1(s.rho[f.right_cell]) - sc.law.potential_d1(s.rho[f.left_cell])) / f.weight;
  EXPECT_NEAR(std::abs(s.w[5]) * s.w[5], -grad, 1e-13);
}

TEST(Scenario, LineAnchoredErrors) {
  std::string text = kSingle;
  EXPECT_NE(error_of(replace(text, "dt = 0.1", "dt = fast")).find("s.cfg:19: expected a number"), std::string::npos);
  EXPECT_NE(error_of(replace(text, "rho = 1 + 0.1*x", "rho = 1 + q")).find("s.cfg:12: unknown name 'q'"),
            std::string::npos);
  EXPECT_NE(error_of(replace(text, "cells = 8", "cellz = 8")).find("unknown key 'cellz'"), std::string::npos);
  EXPECT_NE(error_of(replace(text, "law = isothermal", "law = ideal")).find("s.cfg:4"), std::string::npos);
  EXPECT_NE(error_of(replace(text, "v0 = dP(1)", "v7 = dP(1)")).find("unknown vertex 'v7'"), std::string::npos);
}

TEST(Scenario, MissingBoundaryNamesVertex) {
  auto msg = error_of(replace(kSingle, "v1 = table 0:1, 1:1.1\n", ""));
  EXPECT_NE(msg.find("boundary vertex 'v1'"), std::string::npos) << msg;
}

TEST(Scenario, JunctionScheduleRejected) {
  std::string text = kSingle;
  text = replace(text, "v0 v1\n", "v0 v1 v2\n");
  text = replace(text, "e0 v0 v1 length=1\n", "e0 v0 v1 length=1\ne1 v1 v2 length=1\n");
  text = replace(text, "v1 = table", "v2 = dP(1)\nv1 = table");
  EXPECT_NE(error_of(text).find("junction"), std::string::npos);
}

TEST(Scenario, StateFileRoundTrip) {
  auto dir = std::filesystem::temp_directory_path() / "gasnet_state_file";
  std::filesystem::create_directories(dir);
  auto sc = load_scenario(ConfigDocument::parse_string(kSingle));
  auto grid = scenario_grid(sc);
  auto s = scenario_initial(sc, grid);
  s.w[3] = 0.123456789012345678;
  Manifest::write_text(dir / "state.csv", state_csv(grid, s));
  auto text = replace(replace(kSingle, "rho = 1 + 0.1*x\n", "file = state.csv\n"), "w = 0\n", "");
  auto sc2 = load_scenario(ConfigDocument::parse_string(text, "s.cfg", dir));
  auto back = scenario_initial(sc2, grid);
  EXPECT_EQ(back.rho, s.rho);
  EXPECT_EQ(back.w, s.w);
  std::filesystem::remove_all(dir);
}

TEST(Manifest, RoundTrip) {
  auto path = std::filesystem::temp_directory_path() / "gasnet_manifest.txt";
  Manifest m;
  m.set("a", 0.1);
  m.set("b.c", "x = y");
  m.set("a", 1.0 / 3.0);
  m.write(path);
  auto r = Manifest::read(path);
  ASSERT_EQ(r.entries().size(), 2u);
  EXPECT_EQ(std::stod(r.entries()[0].second), 1.0 / 3.0);
  EXPECT_EQ(r.entries()[1].second, "x = y");
  std::filesystem::remove(path);
}

TEST(SlopeFit, ExactPowerLaw) {
  auto f = fit_loglog({1, 2, 4, 8}, {3, 12, 48, 192});
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_FALSE(f.discarded_largest);
}

TEST(SlopeFit, DiscardsPreAsymptoticLargestPoint) {
  auto f = fit_loglog({0.1, 0.2, 0.4, 0.8}, {0.01, 0.04, 0.16, 0.1});
  EXPECT_TRUE(f.discarded_largest);
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_EQ(f.used, 3u);
  // three points: nothing can be dropped
  EXPECT_FALSE(fit_loglog({0.2, 0.4, 0.8}, {0.04, 0.16, 0.1}).discarded_largest);
}

TEST(SlopeFit, DegenerateSweeps) {
  EXPECT_THROW(fit_loglog({1, 2}, {1, 4}), std::invalid_argument);
  EXPECT_THROW(fit_loglog({2, 2, 2}, {1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(fit_loglog({1, 2, 3}, {1, 0, 3}), std::invalid_argument);
}

TEST(TrajectoryError, HandComputed) {
  PipeParameters p;
  NetworkGrid g(NetworkTopology::single_pipe(p), 4);
  auto mk = [&](double r, double w, double t) {
    return make_state(g, [r](std::size_t, double) { return r; }, [w](std::size_t, double) { return w; }, t);
  };
  std::vector<NetworkState> u{mk(1.0, 0.0, 0.0), mk(1.0, 0.0, 0.5)}, uh{mk(1.0, 0.0, 0.0), mk(1.2, 0.5, 0.5)};
  auto e = trajectory_error(g, u, uh);
  EXPECT_NEAR(e.rho_sq, 0.04, 1e-15);
  EXPECT_NEAR(e.w_cubed, 0.5 * 0.5 * 0.125, 1e-15);
}

TEST(EpsilonStudy, InputValidation) {
  auto sc = load_scenario(scenario("limit_single.cfg"));
  EXPECT_THROW(epsilon_limit_study(sc, {0.2, 0.1, 0.0}), std::invalid_argument);
  EXPECT_THROW(epsilon_limit_study(sc, {0.1, 0.1, 0.1}), std::invalid_argument);
  EXPECT_THROW(epsilon_limit_study(sc, {0.05, 0.1, 0.2}), std::invalid_argument);
  EXPECT_THROW(epsilon_limit_study(sc, {0.2, 0.1}), std::invalid_argument);
}

TEST(EpsilonStudy, SinglePipeRateAndMonotoneErrors) {
  auto sc = load_scenario(scenario("limit_single.cfg"));
  StudyOptions opt;
  opt.threads = 2;
  auto r = epsilon_limit_study(sc, {0.2, 0.1, 0.05, 0.025}, opt);
  ASSERT_TRUE(r.slope_defined);
  EXPECT_GE(r.fit.slope, 0.9);
  int non_monotone = 0;
  for (std::size_t k = 1; k < r.points.size(); ++k)
    if (!(r.points[k].error.total() < r.points[k - 1].error.total())) ++non_monotone;
  EXPECT_LE(non_monotone, 1);
  EXPECT_TRUE(r.certificates_hold());
}

TEST(GammaStudy, ZeroOffsetIsAtSolverFloor) {
  auto sc = load_scenario(scenario("perturbation_single.cfg"));
  auto r = gamma_perturbation_study(sc, {0.0, 0.1, 0.05, 0.025});
  EXPECT_LT(r.points[0].error.total(), 1e-18);
  EXPECT_EQ(r.fit.used, 3u);
}

TEST(GammaStudy, InputValidation) {
  auto sc = load_scenario(scenario("perturbation_single.cfg"));
  EXPECT_THROW(gamma_perturbation_study(sc, {0.1, -0.1, 0.05}), std::invalid_argument);
  EXPECT_THROW(gamma_perturbation_study(sc, {-2.0, -1.0, -0.5}), std::invalid_argument);
  AdmissibleBounds b;
  b.gamma_min = 1.0;
  b.gamma_max = 1.2;
  b.rho_min = 0.5;
  b.w_max = 1.5;
  b.eps_max = 0.3;
  sc.bounds = b;
  EXPECT_THROW(gamma_perturbation_study(sc, {0.4, 0.2, 0.1}), std::invalid_argument);
}

TEST(GammaStudy, ThreadCountDoesNotChangeResults) {
  auto sc = load_scenario(scenario("perturbation_single.cfg"));
  StudyOptions one, four;
  four.threads = 4;
  auto a = gamma_perturbation_study(sc, {0.4, 0.2, 0.1}, one);
  auto b = gamma_perturbation_study(sc, {0.4, 0.2, 0.1}, four);
  for (std::size_t k = 0; k < a.points.size(); ++k) {
    EXPECT_EQ(a.points[k].error.rho_sq, b.points[k].error.rho_sq);
    EXPECT_EQ(a.points[k].error.w_cubed, b.points[k].error.w_cubed);
  }
  EXPECT_EQ(a.fit.slope, b.fit.slope);
}

TEST(BoundaryStudy, ZeroAmplitudeAndDiscrepancy) {
  auto sc = load_scenario(scenario("perturbation_single.cfg"));
  auto r = boundary_perturbation_study(sc, {0.0, 0.1, 0.05, 0.025});
  EXPECT_LT(r.points[0].error.total(), 1e-18);
  EXPECT_EQ(r.points[0].measure, 0.0);
  // only v0 perturbed: int_0^1 A sin(pi tau) dtau = 2A/pi
  EXPECT_NEAR(r.points[1].measure, 0.2 / std::numbers::pi, 1e-12);
  EXPECT_GE(r.fit.slope, 0.9);
  EXPECT_THROW(boundary_perturbation_study(sc, {0.1, -0.1, 0.05}), std::invalid_argument);
}

TEST(BoundaryStudy, OneVertexDiscrepancy) {
  auto sc = load_scenario(scenario("limit_y.cfg"));
  auto grid = scenario_grid(sc, 4);
  auto hh = perturbed_boundary(grid, sc.boundary, {grid.topology().vertex_index("out2")}, 0.3, 2.0);
  EXPECT_EQ(hh.at(grid.topology().vertex_index("in"))(0.7), sc.boundary.at(grid.topology().vertex_index("in"))(0.7));
  EXPECT_NEAR(boundary_discrepancy(grid, sc.boundary, hh, 2.0), 0.3 * 4.0 / std::numbers::pi, 1e-12);
}

TEST(Manufactured, ForcingMatchesDifferencedProfile) {
  // oracle: fourth-order central differences of the profile in the strong form
  MmsProblem pb;
  pb.law = GasLaw::power_law(1.0, 1.4);
  pb.area = 1.3;
  const auto& m = pb.profile;
  auto d = [](auto f, double v) {
    const double h = 1e-3;
    return (-f(v + 2 * h) + 8 * f(v + h) - 8 * f(v - h) + f(v - 2 * h)) / (12 * h);
  };
  for (double x : {0.1, 0.45, 0.9})
    for (double t : {0.0, 0.3, 0.77}) {
      double fr = pb.area * d([&](double s) { return m.rho(x, s); }, t) +
                  d([&](double y) { return pb.area * m.rho(y, t) * m.w(y, t); }, x);
      double fw = pb.epsilon * pb.epsilon * d([&](double s) { return m.w(x, s); }, t) +
                  d([&](double y) { return pb.enthalpy(y, t); }, x) + pb.gamma * std::abs(m.w(x, t)) * m.w(x, t);
      EXPECT_NEAR(pb.mass_forcing(x, t), fr, 1e-9);
      EXPECT_NEAR(pb.momentum_forcing(x, t), fw, 1e-9);
    }
}

TEST(Manufactured, RestStateIsExact) {
  EXPECT_EQ(mms_rest_deviation(GasLaw::isothermal(1.0), 1.0, 0.2, 1.0, 16, 10, 0.1), 0.0);
  EXPECT_LT(mms_rest_deviation(GasLaw::power_law(1.0, 1.4), 9.81, 0.05, 2.0, 16, 10, 0.1), 1e-13);
}

TEST(Manufactured, SecondOrderInSpaceAndTime) {
  MmsProblem pb;
  auto sp = mms_spatial(pb, {16, 32, 64}, 1e-3, 0.25);
  EXPECT_GT(sp.fitted_order, 1.7);
  EXPECT_LT(sp.fitted_order, 2.3);
  auto tm = mms_temporal(pb, 64, {0.04, 0.02, 0.01}, 0.4);
  EXPECT_GT(tm.fitted_order, 1.7);
  EXPECT_LT(tm.fitted_order, 2.3);
}

TEST(ParallelFor, RethrowsWorkerErrors) {
  std::vector<int> hit(10, 0);
  parallel_for(10, 3, [&](std::size_t k) { hit[k] = 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(5, 2, [](std::size_t k) { if (k == 3) throw std::runtime_error("x"); }),
               std::runtime_error);
}
