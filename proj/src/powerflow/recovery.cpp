#include <algorithm>
#include <cmath>
#include <set>

#include "ccsoc/error.hpp"
#include "ccsoc/powerflow.hpp"

namespace ccsoc {

std::string LimitReport::status() const {
  return within_limits() ? "feasible_within_limits" : "feasible_limits_violated";
}

namespace {

void audit(const NetworkCase& net, const PowerFlowSolution& sol, double tol, LimitReport& rep) {
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    const auto& b = net.buses[i];
    if (sol.v_mag[i] > b.v_max + tol) rep.violations.push_back({"bus_v", b.id, "upper", sol.v_mag[i], b.v_max});
    if (sol.v_mag[i] < b.v_min - tol) rep.violations.push_back({"bus_v", b.id, "lower", sol.v_mag[i], b.v_min});
  }
  for (std::size_t l = 0; l < net.num_branches(); ++l) {
    const auto& br = net.branches[l];
    if (!br.limited()) continue;
    const auto& f = sol.branch_flows[l];
    if (f.s_ij > br.s_rating + tol) rep.violations.push_back({"branch_s", br.label, "forward", f.s_ij, br.s_rating});
    if (f.s_ji > br.s_rating + tol) rep.violations.push_back({"branch_s", br.label, "reverse", f.s_ji, br.s_rating});
  }
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const auto& gen = net.generators[g];
    const int id = static_cast<int>(g);
    if (sol.p_gen[g] > gen.p_max + tol) rep.violations.push_back({"gen_p", id, "upper", sol.p_gen[g], gen.p_max});
    if (sol.p_gen[g] < gen.p_min - tol) rep.violations.push_back({"gen_p", id, "lower", sol.p_gen[g], gen.p_min});
    if (sol.q_gen[g] > gen.q_max + tol) rep.violations.push_back({"gen_q", id, "upper", sol.q_gen[g], gen.q_max});
    if (sol.q_gen[g] < gen.q_min - tol) rep.violations.push_back({"gen_q", id, "lower", sol.q_gen[g], gen.q_min});
  }
}

}  // namespace

RecoveryResult recover_feasible(const NetworkCase& net, const PowerFlowSeed& seed,
                                double limits_tol, int switch_budget) {
  const PowerFlowModel model(net);
  const auto gens_at = net.generators_at_buses();
  const std::size_t n = net.num_buses();

  std::vector<BusKind> kinds(n);
  for (std::size_t i = 0; i < n; ++i) kinds[i] = net.buses[i].kind;
  if (seed.slack_bus != net.slack_bus()) {
    kinds[net.slack_bus()] = BusKind::PV;
    kinds[seed.slack_bus] = BusKind::Slack;
  }
  std::set<std::size_t> former_slacks{seed.slack_bus};

  PowerFlowSeed cur = seed;
  RecoveryResult result;
  auto& rep = result.report;
  for (int round = 0;; ++round) {
    auto sol = model.solve(cur, 1e-8, 30, kinds);
    if (!sol.converged) {
      throw NonConvergenceError("power flow did not converge during recovery (round " +
                                std::to_string(round) + ", mismatch " +
                                std::to_string(sol.max_mismatch) + " p.u.)");
    }
    cur.v_mag = sol.v_mag;
    cur.v_ang = sol.v_ang;
    cur.p_gen = sol.p_gen;
    cur.q_gen = sol.q_gen;
    bool changed = false;

    for (std::size_t i = 0; i < n; ++i) {
      if (kinds[i] != BusKind::PV) continue;
      double q = 0.0, q_hi = 0.0, q_lo = 0.0;
      for (auto g : gens_at[i]) {
        q += sol.q_gen[g];
        q_hi += net.generators[g].q_max;
        q_lo += net.generators[g].q_min;
      }
      const bool upper = q > q_hi + limits_tol;
      if (!upper && !(q < q_lo - limits_tol)) continue;
      for (auto g : gens_at[i]) {
        cur.q_gen[g] = upper ? net.generators[g].q_max : net.generators[g].q_min;
      }
      kinds[i] = BusKind::PQ;
      rep.clamps.push_back({net.buses[i].id, upper, q, upper ? q_hi : q_lo});
      changed = true;
    }

    const std::size_t slack = sol.slack_bus;
    double p = 0.0, p_hi = 0.0, p_lo = 0.0;
    for (auto g : gens_at[slack]) {
      p += sol.p_gen[g];
      p_hi += net.generators[g].p_max;
      p_lo += net.generators[g].p_min;
    }
    const bool over = p > p_hi + limits_tol;
    if (over || p < p_lo - limits_tol) {
      std::size_t best = n;
      double best_room = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (kinds[i] != BusKind::PV || former_slacks.count(i)) continue;
        double room = 0.0;
        for (auto g : gens_at[i]) {
          room += over ? net.generators[g].p_max - cur.p_gen[g]
                       : cur.p_gen[g] - net.generators[g].p_min;
        }
        if (room > best_room) {
          best_room = room;
          best = i;
        }
      }
      if (best == n) {
        throw SolverError("slack active power outside its limits and no generator has headroom");
      }
      for (auto g : gens_at[slack]) {
        cur.p_gen[g] = over ? net.generators[g].p_max : net.generators[g].p_min;
      }
      kinds[slack] = BusKind::PV;
      kinds[best] = BusKind::Slack;
      cur.slack_bus = best;
      former_slacks.insert(best);
      const int old_id = rep.slack_reassigned ? rep.slack_reassigned->first : net.buses[slack].id;
      rep.slack_reassigned = std::make_pair(old_id, net.buses[best].id);
      changed = true;
    }

    if (!changed) {
      rep.rounds = round;
      result.solution = std::move(sol);
      break;
    }
    if (round + 1 > switch_budget) {
      throw NonConvergenceError("PV/PQ switching did not settle within " +
                                std::to_string(switch_budget) + " rounds");
    }
  }
  audit(net, result.solution, limits_tol, rep);
  return result;
}

nlohmann::json to_json(const PowerFlowSolution& sol, const NetworkCase& net) {
  using nlohmann::json;
  json buses = json::array();
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    buses.push_back({{"id", net.buses[i].id},
                     {"kind", std::string(to_string(sol.kinds.empty() ? net.buses[i].kind
                                                                     : sol.kinds[i]))},
                     {"v_mag_pu", sol.v_mag[i]},
                     {"v_ang_rad", sol.v_ang[i]},
                     {"p_inj_pu", sol.p_inj[i]},
                     {"q_inj_pu", sol.q_inj[i]}});
  }
  json gens = json::array();
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    gens.push_back({{"index", g},
                    {"bus", net.buses[net.generators[g].bus].id},
                    {"p_pu", sol.p_gen[g]},
                    {"q_pu", sol.q_gen[g]}});
  }
  json flows = json::array();
  for (std::size_t l = 0; l < net.num_branches(); ++l) {
    const auto& f = sol.branch_flows[l];
    flows.push_back({{"label", net.branches[l].label},
                     {"p_ij_pu", f.p_ij},
                     {"q_ij_pu", f.q_ij},
                     {"p_ji_pu", f.p_ji},
                     {"q_ji_pu", f.q_ji},
                     {"s_ij_pu", f.s_ij},
                     {"s_ji_pu", f.s_ji}});
  }
  return {{"converged", sol.converged},
          {"iterations", sol.iterations},
          {"max_mismatch_pu", sol.max_mismatch},
          {"slack_bus", net.buses[sol.slack_bus].id},
          {"cost_eur_per_h", generation_cost(net, sol.p_gen)},
          {"buses", buses},
          {"generators", gens},
          {"branches", flows}};
}

nlohmann::json to_json(const LimitReport& report) {
  using nlohmann::json;
  json clamps = json::array();
  for (const auto& c : report.clamps) {
    clamps.push_back({{"bus", c.bus_id},
                      {"side", c.at_upper ? "q_max" : "q_min"},
                      {"q_requested_pu", c.q_requested},
                      {"q_limit_pu", c.q_limit}});
  }
  json viol = json::array();
  for (const auto& v : report.violations) {
    viol.push_back({{"kind", v.kind},
                    {"element", v.element},
                    {"side", v.side},
                    {"value_pu", v.value},
                    {"limit_pu", v.limit}});
  }
  json j = {{"status", report.status()},
            {"rounds", report.rounds},
            {"q_clamps", clamps},
            {"violations", viol}};
  if (report.slack_reassigned) {
    j["slack_reassigned"] = {{"from", report.slack_reassigned->first},
                             {"to", report.slack_reassigned->second}};
  } else {
    j["slack_reassigned"] = nullptr;
  }
  return j;
}

}  // namespace ccsoc
