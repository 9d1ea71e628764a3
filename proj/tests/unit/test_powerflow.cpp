#include <doctest.h>

#include <complex>

#include "ccsoc/error.hpp"
#include "ccsoc/powerflow.hpp"

using namespace ccsoc;

namespace {

std::string data_path(const std::string& name) { return std::string(CCSOC_TEST_DATA) + "/" + name; }

}  // namespace

TEST_CASE("no-load two-bus case stays flat") {
  auto net = load_case(data_path("case2.m"));
  net.buses[1].p_load = net.buses[1].q_load = 0.0;
  auto seed = PowerFlowSeed::flat(net);
  seed.p_gen = {0.0};
  seed.q_gen = {0.0};
  auto sol = solve_power_flow(net, seed);
  CHECK(sol.converged);
  CHECK(sol.iterations == 1);
  CHECK(sol.v_mag[1] == 1.0);
  CHECK(sol.v_ang[1] == 0.0);
  CHECK(sol.branch_flows[0].p_ij == doctest::Approx(0.0));
  CHECK(sol.branch_flows[0].q_ij == doctest::Approx(0.0));
}

TEST_CASE("two-bus load flow matches a Gauss-Seidel oracle") {
  auto net = load_case(data_path("case2.m"));
  auto sol = solve_power_flow(net, PowerFlowSeed::flat(net));
  REQUIRE(sol.converged);

  // Oracle: V2 = (conj(S2) / conj(V2) - Y21 V1) / Y22 iterated to a fixed point.
  using C = std::complex<double>;
  const C y = 1.0 / C(0.0, 0.1);
  const C y22 = y, y21 = -y, v1 = 1.0;
  const C s2(-0.5, -0.2);
  C v2 = 1.0;
  for (int k = 0; k < 500; ++k) v2 = (std::conj(s2) / std::conj(v2) - y21 * v1) / y22;
  CHECK(sol.v_mag[1] == doctest::Approx(std::abs(v2)).epsilon(1e-8));
  CHECK(sol.v_ang[1] == doctest::Approx(std::arg(v2)).epsilon(1e-8));
  // Slack covers the load; the lossless line consumes reactive power only.
  CHECK(sol.p_gen[0] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(sol.branch_flows[0].p_ij == doctest::Approx(-sol.branch_flows[0].p_ji).epsilon(1e-10));
}

TEST_CASE("power balance closes over generation, load and losses") {
  for (const char* name : {"case118_linear.m", "case3_wind.m", "case2_lossy.m"}) {
    auto net = load_case(data_path(name));
    auto sol = solve_power_flow(net, PowerFlowSeed::flat(net));
    REQUIRE(sol.converged);
    double gen = 0.0, load = 0.0, losses = 0.0, shunt = 0.0;
    for (double p : sol.p_gen) gen += p;
    for (const auto& b : net.buses) load += b.p_load;
    for (const auto& f : sol.branch_flows) losses += f.p_ij + f.p_ji;
    for (std::size_t i = 0; i < net.num_buses(); ++i) {
      shunt += net.buses[i].g_shunt * sol.v_mag[i] * sol.v_mag[i];
    }
    CHECK(std::abs(gen - load - losses - shunt) <= 10 * 1e-8 * net.num_buses());
  }
}

TEST_CASE("lossless branches carry antisymmetric active flow") {
  auto net = load_case(data_path("case3_triangle.m"));
  auto sol = solve_power_flow(net, PowerFlowSeed::flat(net));
  REQUIRE(sol.converged);
  for (const auto& f : sol.branch_flows) {
    CHECK(f.p_ij == doctest::Approx(-f.p_ji).epsilon(1e-10));
    CHECK(f.s_ij * f.s_ij == doctest::Approx(f.p_ij * f.p_ij + f.q_ij * f.q_ij));
  }
  CHECK(sol.v_ang[1] == doctest::Approx(sol.v_ang[2]).epsilon(1e-12));
}

TEST_CASE("mismatch decreases over Newton steps") {
  auto net = load_case(data_path("case118_linear.m"));
  double last = 1e300;
  for (int k = 0; k <= 5; ++k) {
    auto sol = solve_power_flow(net, PowerFlowSeed::flat(net), 1e-14, k);
    CHECK(sol.max_mismatch <= last);
    last = sol.max_mismatch;
  }
}

TEST_CASE("non-convergence returns the last iterate") {
  auto net = load_case(data_path("case2.m"));
  net.buses[1].p_load = 20.0;
  auto sol = solve_power_flow(net, PowerFlowSeed::flat(net), 1e-8, 15);
  CHECK_FALSE(sol.converged);
  CHECK(sol.v_mag.size() == 2);
  CHECK(std::isfinite(sol.max_mismatch));
}

TEST_CASE("bad seeds are rejected") {
  auto net = load_case(data_path("case2.m"));
  auto seed = PowerFlowSeed::flat(net);
  seed.v_mag[1] = 0.0;
  CHECK_THROWS_AS(solve_power_flow(net, seed), ValidationError);
}

TEST_CASE("recovery leaves a feasible point untouched") {
  auto net = load_case(data_path("case3_wind.m"));
  auto sol = solve_power_flow(net, PowerFlowSeed::flat(net));
  REQUIRE(sol.converged);
  PowerFlowSeed seed = PowerFlowSeed::flat(net);
  seed.v_ang = sol.v_ang;
  seed.p_gen = sol.p_gen;
  seed.q_gen = sol.q_gen;
  auto rec = recover_feasible(net, seed);
  CHECK(rec.report.clamps.empty());
  CHECK_FALSE(rec.report.slack_reassigned);
  CHECK(rec.report.within_limits());
  CHECK(rec.report.status() == "feasible_within_limits");
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    CHECK(rec.solution.v_mag[i] == doctest::Approx(sol.v_mag[i]).epsilon(1e-9));
  }
}

TEST_CASE("generator above its reactive limit is clamped and re-solved as PQ") {
  auto net = load_case(data_path("case3_wind.m"));
  auto base = solve_power_flow(net, PowerFlowSeed::flat(net));
  REQUIRE(base.converged);
  // Gen 1 sits on PV bus 2: cap it 0.1 p.u. below what it produces.
  net.generators[1].q_max = base.q_gen[1] - 0.1;
  auto rec = recover_feasible(net, PowerFlowSeed::flat(net));
  REQUIRE(rec.report.clamps.size() == 1);
  CHECK(rec.report.clamps[0].bus_id == 2);
  CHECK(rec.report.clamps[0].at_upper);
  CHECK(rec.solution.q_gen[1] == doctest::Approx(net.generators[1].q_max));

  // Oracle: the same flow with bus 2 declared PQ at q_max.
  auto seed = PowerFlowSeed::flat(net);
  seed.q_gen[1] = net.generators[1].q_max;
  std::vector<BusKind> kinds{BusKind::Slack, BusKind::PQ, BusKind::PQ};
  auto oracle = PowerFlowModel(net).solve(seed, 1e-10, 30, kinds);
  REQUIRE(oracle.converged);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(rec.solution.v_mag[i] == doctest::Approx(oracle.v_mag[i]).epsilon(1e-7));
  }
  CHECK(rec.solution.v_mag[1] < base.v_mag[1]);
}

TEST_CASE("slack outside its active limits hands over to the largest headroom") {
  auto net = load_case(data_path("case3_wind.m"));
  net.generators[0].p_max = 0.5;
  auto rec = recover_feasible(net, PowerFlowSeed::flat(net));
  REQUIRE(rec.report.slack_reassigned);
  CHECK(rec.report.slack_reassigned->first == 1);
  CHECK(rec.report.slack_reassigned->second == 2);
  CHECK(rec.solution.p_gen[0] == doctest::Approx(0.5));
  CHECK(rec.solution.converged);
}

TEST_CASE("slack without any headroom is an error") {
  auto net = load_case(data_path("case3_wind.m"));
  net.generators[0].p_max = 0.5;
  net.generators[1].p_max = 0.7;
  CHECK_THROWS_AS(recover_feasible(net, PowerFlowSeed::flat(net)), SolverError);
}
