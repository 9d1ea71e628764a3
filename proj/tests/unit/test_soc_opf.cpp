#include <doctest.h>

#include <cmath>

#include "ccsoc/error.hpp"
#include "ccsoc/soc_opf.hpp"

using namespace ccsoc;

namespace {

std::string data_path(const std::string& name) { return std::string(CCSOC_TEST_DATA) + "/" + name; }

constexpr const char* kOneBus = R"(
mpc.baseMVA = 100;
mpc.bus = [
	1	3	100	10	0	0	1	1	0	135	1	1.05	0.95;
];
mpc.gen = [
	1	0	0	50	-50	1	100	1	60	0;
	1	0	0	50	-50	1	100	1	100	0;
];
mpc.branch = [
];
mpc.gencost = [
	2	0	0	2	10	0;
	2	0	0	2	20	0;
];
)";

double max_cone_slack(const SocState& st, const NetworkCase& net) {
  double worst = 0.0;
  for (double v : st.cone_slacks(net)) worst = std::max(worst, std::abs(v));
  return worst;
}

}  // namespace

TEST_CASE("single bus dispatch follows merit order") {
  auto net = parse_case(kOneBus, "one_bus");
  auto st = solve_soc_opf(net, nullptr, nullptr);
  CHECK(st.p_gen[0] == doctest::Approx(0.6).epsilon(1e-6));
  CHECK(st.p_gen[1] == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(st.objective == doctest::Approx(10 * 60 + 20 * 40).epsilon(1e-6));
}

TEST_CASE("two-bus lossy relaxation matches a grid-searched AC optimum") {
  auto net = load_case(data_path("case2_lossy.m"));
  auto res = solve_sequential(net, nullptr);
  CHECK(res.radial);
  CHECK(res.passes == 1);

  // Oracle: brute force over (V1, V2, delta) with the polar branch equations.
  const double r = 0.02, x = 0.1, bsh = 0.04;
  const double z2 = r * r + x * x, g = r / z2, b = -x / z2;
  auto cost_at = [&](double v1, double v2, double d, double& feasible) {
    const double cd = std::cos(d), sd = std::sin(d);
    const double p12 = v1 * v1 * g - v1 * v2 * (g * cd + b * sd);
    const double q12 = -v1 * v1 * (b + bsh / 2) - v1 * v2 * (g * sd - b * cd);
    const double p21 = v2 * v2 * g - v1 * v2 * (g * cd - b * sd);
    const double q21 = -v2 * v2 * (b + bsh / 2) + v1 * v2 * (g * sd + b * cd);
    const double pg1 = p12, qg1 = q12, pg2 = p21 + 0.9, qg2 = q21 + 0.3;
    feasible = pg1 >= 0 && pg1 <= 2 && qg1 >= -1 && qg1 <= 1 && pg2 >= 0 && pg2 <= 0.4 &&
               qg2 >= -0.4 && qg2 <= 0.4;
    return 1000 * pg1 + 3000 * pg2 + 5;
  };
  double best = 1e300, bv1 = 0, bv2 = 0, bd = 0;
  auto scan = [&](double v1lo, double v1hi, double v2lo, double v2hi, double dlo, double dhi,
                  double vstep, double dstep) {
    for (double v1 = v1lo; v1 <= v1hi + 1e-12; v1 += vstep) {
      for (double v2 = v2lo; v2 <= v2hi + 1e-12; v2 += vstep) {
        for (double d = dlo; d <= dhi; d += dstep) {
          double ok = 0;
          const double c = cost_at(v1, v2, d, ok);
          if (ok && c < best) {
            best = c;
            bv1 = v1;
            bv2 = v2;
            bd = d;
          }
        }
      }
    }
  };
  scan(0.9, 1.1, 0.9, 1.1, 0.0, 0.2, 0.005, 1e-4);
  scan(std::max(0.9, bv1 - 0.005), std::min(1.1, bv1 + 0.005), std::max(0.9, bv2 - 0.005),
       std::min(1.1, bv2 + 0.005), bd - 2e-4, bd + 2e-4, 2.5e-4, 1e-6);
  CHECK(res.state.objective == doctest::Approx(best).epsilon(1e-4));
  CHECK(res.state.objective <= best + 1e-6);
  CHECK(max_cone_slack(res.state, net) <= 1e-5);
}

TEST_CASE("radial case skips the angle loop") {
  auto net = load_case(data_path("case2.m"));
  auto res = solve_sequential(net, nullptr);
  CHECK(res.radial);
  CHECK(res.passes == 1);
  CHECK(res.deltas.empty());
  // One lossless line: all active load comes from the slack.
  CHECK(res.state.p_gen[0] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("meshed angle loop reproduces the AC power flow") {
  auto net = load_case(data_path("case3_wind.m"));
  auto res = solve_sequential(net, nullptr);
  CHECK_FALSE(res.radial);
  REQUIRE(res.passes >= 2);
  CHECK(res.deltas.back() <= 1e-6);
  CHECK(max_cone_slack(res.state, net) <= 1e-5);

  auto pf = solve_power_flow(net, res.state.to_seed(net));
  REQUIRE(pf.converged);
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    CHECK(pf.v_mag[i] == doctest::Approx(std::sqrt(res.state.u[i])).epsilon(1e-5));
    CHECK(pf.v_ang[i] == doctest::Approx(res.state.theta[i]).epsilon(1e-5));
  }
  CHECK(pf.p_gen[0] == doctest::Approx(res.state.p_gen[0]).epsilon(1e-5));
}

TEST_CASE("angles along the spanning tree") {
  auto net = load_case(data_path("case3_triangle.m"));
  const double a2 = -0.05, a3 = -0.08;
  std::vector<double> c{std::cos(-a2), std::cos(-a3), std::cos(a2 - a3)};
  std::vector<double> s{-std::sin(-a2), -std::sin(-a3), -std::sin(a2 - a3)};
  auto th = tree_angles(net, c, s);
  CHECK(th[0] == 0.0);
  CHECK(th[1] == doctest::Approx(a2));
  CHECK(th[2] == doctest::Approx(a3));
}

TEST_CASE("flow extraction on a purely inductive line") {
  auto net = load_case(data_path("case2.m"));
  SocState st;
  st.u = {1.0, 1.0};
  st.c = {1.0};
  st.s = {0.1};
  auto f = extract_flows(st, net);
  // g = 0, b = -10: P_ij = b s. Positive s means bus 1 lags bus 2.
  CHECK(f[0].p_ij == doctest::Approx(-1.0));
  CHECK(f[0].p_ji == doctest::Approx(1.0));
  CHECK(f[0].q_ij == doctest::Approx(0.0));
}

TEST_CASE("larger margins never lower the cost") {
  auto net = load_case(data_path("case3_wind.m"));
  double last = -1e300;
  for (double omega : {0.0, 0.05, 0.1, 0.2, 0.4}) {
    TighteningSet t;
    t.bounds[{Quantity::GenP, 0}] = omega;
    t.bounds[{Quantity::BusU, 2}] = omega / 10;
    auto st = solve_soc_opf(net, nullptr, &t);
    CHECK(st.objective >= last - 1e-6);
    last = st.objective;
  }
  TighteningSet crossed;
  crossed.bounds[{Quantity::GenP, 1}] = 0.8;
  CHECK_THROWS_AS(build_soc_opf(net, nullptr, &crossed), InfeasibleTighteningError);
}

TEST_CASE("critical line margins shrink the feasible flow region") {
  auto net = load_case(data_path("case3_wind.m"));
  const auto l = net.branch_by_label(2);
  net.branches[l].s_rating = 0.6;
  auto plain = solve_soc_opf(net, nullptr, nullptr);
  TighteningSet t;
  t.flows[{l, FlowDirection::Forward}] = {0.05, 0.03, 0.5};
  auto st = solve_soc_opf(net, nullptr, &t);
  const auto f = extract_flows(st, net)[l];
  const double kp = std::abs(f.p_ij) + 0.05, kq = std::abs(f.q_ij) + 0.03;
  CHECK(kp * kp + kq * kq <= 0.36 + 1e-6);
  CHECK(extract_flows(plain, net)[l].s_ij <= 0.6 + 1e-6);
  CHECK(st.objective >= plain.objective - 1e-6);
}

TEST_CASE("lossless mesh leaves the cones loose without the tightening pass") {
  auto net = load_case(data_path("case3_triangle.m"));
  SequentialOptions loose;
  loose.tighten_cones = false;
  auto a = solve_soc_opf(net, nullptr, nullptr, loose);
  auto b = solve_soc_opf(net, nullptr, nullptr);
  CHECK(max_cone_slack(a, net) > 1e-3);
  CHECK(max_cone_slack(b, net) <= 1e-5);
  // Zero optimality gap between the two points, up to the cost cap of the second pass.
  CHECK(std::abs(a.objective - b.objective) <= 1e-7 * a.objective + 1e-6);
}

TEST_CASE("state JSON round trip") {
  auto net = load_case(data_path("case3_wind.m"));
  auto st = solve_soc_opf(net, nullptr, nullptr);
  auto back = SocState::from_json(st.to_json(net), net);
  CHECK(back.u == st.u);
  CHECK(back.c == st.c);
  CHECK(back.p_gen == st.p_gen);
  CHECK(back.objective == st.objective);
}
