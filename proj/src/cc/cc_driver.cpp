#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "ccsoc/cc_driver.hpp"
#include "ccsoc/sensitivities.hpp"

namespace ccsoc {

namespace {

int element_label(const NetworkCase& net, Quantity kind, std::size_t index) {
  switch (kind) {
    case Quantity::BusU:
      return net.buses[index].id;
    case Quantity::BranchC:
    case Quantity::BranchS:
      return net.branches[index].label;
    default:
      return static_cast<int>(index);
  }
}

nlohmann::json line_list(const NetworkCase& net, const std::vector<LineDirection>& lines) {
  auto out = nlohmann::json::array();
  for (const auto& ld : lines) {
    out.push_back({{"branch", net.branches[ld.branch].label}, {"direction", std::string(to_string(ld.direction))}});
  }
  return out;
}

}  // namespace

TighteningSet evaluate_margins(const NetworkCase& net, const SocState& state, const UncertaintySpec& spec,
                               const CriticalLineSet& critical, std::vector<std::string>* warnings) {
  const auto response = response_model(net, state, spec);
  const auto bundle = sensitivities(net, state, response);
  if (warnings) warnings->insert(warnings->end(), bundle.warnings.begin(), bundle.warnings.end());
  return compute_tightenings(net, bundle, response, spec, critical);
}

CcSolveReport solve_cc(const NetworkCase& net, const UncertaintySpec& spec, const CcOptions& options) {
  if (!(options.rho > 0.0)) throw ValidationError("rho must be positive");
  if (options.max_outer < 1) throw ValidationError("max_outer must be at least 1");
  spec.validate(net);

  CcSolveReport report;
  report.rho = options.rho;
  const Eigen::MatrixXd shift = ptdf(net, net.slack_bus());

  TighteningSet applied;  // margins the current state was solved with
  auto pass = solve_sequential(net, nullptr, options.inner);
  for (int nu = 0;; ++nu) {
    IterationRecord rec;
    rec.index = nu;
    rec.state = pass.state;
    rec.objective = pass.state.objective;
    rec.inner_iterations = pass.passes;
    rec.critical_added = screen_critical_lines(net, pass.state, spec, shift, report.critical);
    rec.margins = evaluate_margins(net, pass.state, spec, report.critical, &rec.warnings);
    rec.margin_delta = margin_delta(rec.margins, applied);
    report.iterations.push_back(rec);

    if (rec.margin_delta <= options.rho) {
      report.converged = true;
      break;
    }
    if (nu + 1 >= options.max_outer) {
      throw CcNonConvergenceError(
          fmt::format("margins did not settle within {} iterations (last change {:.3e})", options.max_outer,
                      rec.margin_delta),
          report.iterations);
    }
    applied = rec.margins;
    pass = solve_sequential(net, &applied, options.inner, &report.iterations.back().state);
  }

  report.final_state = report.iterations.back().state;
  report.cost_cc = report.final_state.objective;
  try {
    auto rec = recover_feasible(net, report.final_state.to_seed(net), options.limits_tol);
    if (rec.solution.converged) report.cost_recovered = generation_cost(net, rec.solution.p_gen);
    report.recovered = std::move(rec);
  } catch (const Error& e) {
    report.recovery_error = e.what();
  }
  return report;
}

nlohmann::json CcSolveReport::to_json(const NetworkCase& net) const {
  using nlohmann::json;
  json iters = json::array();
  for (const auto& r : iterations) {
    iters.push_back({{"index", r.index},
                     {"objective_eur_per_h", r.objective},
                     {"margin_delta_pu", r.margin_delta},
                     {"inner_iterations", r.inner_iterations},
                     {"critical_added", line_list(net, r.critical_added)},
                     {"margins", r.margins.to_json(net)},
                     {"warnings", r.warnings}});
  }
  json out{{"converged", converged},
           {"rho", rho},
           {"iteration_count", iterations.size()},
           {"iterations", iters},
           {"critical_lines", line_list(net, {critical.entries.begin(), critical.entries.end()})},
           {"cost_cc_eur_per_h", cost_cc},
           {"final_state", final_state.to_json(net)}};
  json rec{{"cost_eur_per_h", cost_recovered ? json(*cost_recovered) : json(nullptr)}};
  if (recovered) {
    rec["status"] = recovered->solution.converged ? recovered->report.status() : "diverged";
    rec["limits"] = ccsoc::to_json(recovered->report);
    rec["solution"] = ccsoc::to_json(recovered->solution, net);
  } else {
    rec["status"] = "failed";
    rec["error"] = recovery_error;
  }
  out["recovery"] = rec;
  return out;
}

std::string CcSolveReport::margins_csv(const NetworkCase& net) const {
  std::ostringstream os;
  os << "iteration,kind,element,direction,side,omega_pu\n";
  for (const auto& r : iterations) {
    for (const auto& [key, omega] : r.margins.bounds) {
      os << fmt::format("{},{},{},,,{:.9e}\n", r.index, to_string(key.kind),
                        element_label(net, key.kind, key.index), omega);
    }
    for (const auto& [ld, m] : r.margins.flows) {
      const int label = net.branches[ld.branch].label;
      os << fmt::format("{},flow,{},{},p,{:.9e}\n", r.index, label, to_string(ld.direction), m.margin_p);
      os << fmt::format("{},flow,{},{},q,{:.9e}\n", r.index, label, to_string(ld.direction), m.margin_q);
    }
  }
  return os.str();
}

}  // namespace ccsoc
