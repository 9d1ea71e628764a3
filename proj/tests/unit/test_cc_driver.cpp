#include <doctest.h>

#include <algorithm>

#include "ccsoc/cc_driver.hpp"
#include "ccsoc/error.hpp"
#include "ccsoc/sweep.hpp"

using namespace ccsoc;

namespace {

std::string data_path(const std::string& name) { return std::string(CCSOC_TEST_DATA) + "/" + name; }

UncertaintySpec spec_for(const NetworkCase& net) {
  UncertaintySpec spec;
  std::vector<double> sig;
  for (const auto& w : net.wind_farms) sig.push_back(w.sigma);
  spec.sigma = covariance(sig);
  spec.gamma = capacity_participation(net);
  return spec;
}

// Triangle with 50 MW of wind at bus 3 and line 1-3 rated just above its
// deterministic flow, so screening flags it under uncertainty.
NetworkCase congested_case(double sigma_mw = 10.0) {
  auto net = load_case(data_path("case3_wind.m"));
  std::vector<WindAddition> w{{3, 50.0, sigma_mw, 0.95}};
  net = apply_modifiers(net, 1.0, w);
  const auto plain = solve_sequential(net, nullptr);
  const auto flows = extract_flows(plain.state, net);
  net.branches[1].s_rating = 1.02 * std::max(flows[1].s_ij, flows[1].s_ji);
  return net;
}

}  // namespace

TEST_CASE("no uncertainty converges in one iteration") {
  auto net = congested_case();
  auto spec = spec_for(net);
  spec.sigma.setZero();
  const auto report = solve_cc(net, spec);
  REQUIRE(report.converged);
  CHECK(report.iterations.size() == 1);
  const auto& rec = report.iterations.front();
  CHECK(rec.index == 0);
  CHECK(rec.margin_delta == 0.0);
  CHECK(rec.critical_added.empty());
  for (const auto& [k, v] : rec.margins.bounds) CHECK(v == 0.0);
  const auto plain = solve_sequential(net, nullptr);
  CHECK(report.cost_cc == doctest::Approx(plain.state.objective).epsilon(1e-9));
  REQUIRE(report.recovered);
  CHECK(report.cost_recovered.has_value());
}

TEST_CASE("outer loop on a congested triangle") {
  auto net = congested_case();
  const auto spec = spec_for(net);
  CcOptions opt;
  const auto report = solve_cc(net, spec, opt);
  REQUIRE(report.converged);
  REQUIRE(report.iterations.size() >= 2);

  for (std::size_t k = 0; k < report.iterations.size(); ++k) {
    CHECK(report.iterations[k].index == static_cast<int>(k));
    CHECK(report.iterations[k].margin_delta >= 0.0);
  }
  CHECK(report.iterations.back().margin_delta <= opt.rho);
  CHECK(report.critical.contains({1, FlowDirection::Forward}));
  CHECK(report.iterations.front().critical_added.size() >= 1);

  // Critical set only grows.
  std::size_t seen = 0;
  for (const auto& added : report.critical.history) {
    seen += added.size();
    CHECK(seen <= report.critical.entries.size());
  }
  CHECK(seen == report.critical.entries.size());

  // Re-evaluating at the final state reproduces the margins within rho.
  CriticalLineSet crit = report.critical;
  const auto again = evaluate_margins(net, report.final_state, spec, crit);
  CHECK(margin_delta(again, report.iterations.back().margins) <= opt.rho);

  // Uncertainty costs money.
  CHECK(report.cost_cc >= report.iterations.front().objective - 1e-6);

  const auto j = report.to_json(net);
  CHECK(j.at("iteration_count") == report.iterations.size());
  CHECK(j.at("recovery").contains("status"));
  const auto csv = report.margins_csv(net);
  CHECK(csv.rfind("iteration,kind,element,direction,side,omega_pu\n", 0) == 0);
  CHECK(csv.find(",flow,2,forward,p,") != std::string::npos);
}

TEST_CASE("cc reports are reproducible") {
  auto net = congested_case();
  const auto spec = spec_for(net);
  const auto a = solve_cc(net, spec);
  const auto b = solve_cc(net, spec);
  CHECK(a.to_json(net).dump() == b.to_json(net).dump());
  CHECK(a.margins_csv(net) == b.margins_csv(net));
}

TEST_CASE("iteration cap raises with the history") {
  auto net = congested_case();
  const auto spec = spec_for(net);
  CcOptions opt;
  opt.max_outer = 1;
  try {
    solve_cc(net, spec, opt);
    FAIL("expected non-convergence");
  } catch (const CcNonConvergenceError& e) {
    CHECK(e.history().size() == 1);
  }
  opt.rho = 0.0;
  CHECK_THROWS_AS(solve_cc(net, spec, opt), ValidationError);
}

TEST_CASE("crossed tightenings identify the quantity") {
  auto net = congested_case(400.0);
  const auto spec = spec_for(net);
  try {
    solve_cc(net, spec);
    FAIL("expected infeasible tightening");
  } catch (const InfeasibleTighteningError& e) {
    CHECK_FALSE(e.quantity().empty());
  }
}

TEST_CASE("beta sweep") {
  auto net = congested_case();
  const auto spec = spec_for(net);
  SweepOptions opt;
  opt.mc_samples = 300;

  BetaAxis one{"l2", {{1, FlowDirection::Forward}, {1, FlowDirection::Reverse}}, {0.5}};
  const auto single = sweep_beta(net, spec, {one}, opt);
  REQUIRE(single.size() == 1);
  const auto direct = solve_cc(net, spec, opt.cc);
  CHECK(single[0].error.empty());
  CHECK(single[0].cost_cc == doctest::Approx(direct.cost_cc).epsilon(1e-12));
  CHECK(single[0].iterations == static_cast<int>(direct.iterations.size()));

  BetaAxis grid{"l2f", {{1, FlowDirection::Forward}}, {0.2, 0.5, std::nullopt}};
  BetaAxis other{"l1", {{0, FlowDirection::Forward}}, {0.3, 0.7}};
  const auto rows = sweep_beta(net, spec, {grid, other}, opt);
  REQUIRE(rows.size() == 6);
  CHECK(rows[1].betas[0] == 0.2);
  CHECK(rows[1].betas[1] == 0.7);
  CHECK_FALSE(rows[4].betas[0].has_value());
  opt.exec = Execution::Serial;
  CHECK(sweep_csv({grid, other}, rows) == sweep_csv({grid, other}, sweep_beta(net, spec, {grid, other}, opt)));

  BetaAxis bad{"x", {{1, FlowDirection::Forward}}, {1.0}};
  CHECK_THROWS_AS(sweep_beta(net, spec, {bad}, opt), ValidationError);

  // Failing combinations are recorded and the sweep continues.
  auto wide = congested_case(400.0);
  const auto rows_bad = sweep_beta(wide, spec_for(wide), {grid}, opt);
  REQUIRE(rows_bad.size() == 3);
  for (const auto& r : rows_bad) CHECK_FALSE(r.error.empty());
  const auto csv = sweep_csv({grid}, rows_bad);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}
