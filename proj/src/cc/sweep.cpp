#include <sstream>

#include <fmt/format.h>

#include "ccsoc/error.hpp"
#include "ccsoc/sweep.hpp"

namespace ccsoc {

namespace {

SweepRow run_combination(const NetworkCase& net, UncertaintySpec spec, const std::vector<BetaAxis>& axes,
                         const std::vector<std::optional<double>>& betas, const Eigen::MatrixXd& xi,
                         const SweepOptions& options, Execution mc_exec) {
  SweepRow row;
  row.betas = betas;
  for (std::size_t a = 0; a < axes.size(); ++a) {
    for (const auto& ld : axes[a].lines) spec.beta[ld] = betas[a];
  }
  try {
    const auto report = solve_cc(net, spec, options.cc);
    row.iterations = static_cast<int>(report.iterations.size());
    row.cost_cc = report.cost_cc;
    row.cost_recovered = report.cost_recovered;
    if (!report.recovered) {
      row.recovery_status = "failed";
      return row;
    }
    const auto& sol = report.recovered->solution;
    row.recovery_status = sol.converged ? report.recovered->report.status() : "diverged";
    if (!sol.converged) return row;
    const auto policy = ScenarioPolicy::from_recovery(net, sol, report.final_state.q_wind, spec);
    const auto mc = evaluate_policy(net, policy, xi, options.limits_tol, mc_exec);
    row.class_max = mc.per_class_max();
    row.joint = mc.probability(mc.joint);
  } catch (const Error& e) {
    row.error = e.what();
  }
  return row;
}

std::string opt(const std::optional<double>& v, const char* spec) {
  return v ? fmt::format(fmt::runtime(spec), *v) : std::string();
}

}  // namespace

std::vector<SweepRow> sweep_beta(const NetworkCase& net, const UncertaintySpec& spec,
                                 const std::vector<BetaAxis>& axes, const SweepOptions& options) {
  std::size_t combos = 1;
  for (const auto& ax : axes) {
    if (ax.values.empty()) throw ValidationError("sweep axis " + ax.name + " has no values");
    for (const auto& v : ax.values) {
      if (v && !(*v > 0.0 && *v < 1.0)) throw ValidationError("beta values must lie in (0, 1)");
    }
    combos *= ax.values.size();
  }
  spec.validate(net);
  const Eigen::MatrixXd xi = sample_wind(spec, options.mc_samples, options.seed, options.exec);

  std::vector<std::vector<std::optional<double>>> grid(combos);
  for (std::size_t k = 0; k < combos; ++k) {
    std::size_t rest = k;
    grid[k].resize(axes.size());
    for (std::size_t a = axes.size(); a-- > 0;) {
      grid[k][a] = axes[a].values[rest % axes[a].values.size()];
      rest /= axes[a].values.size();
    }
  }

  std::vector<SweepRow> rows(combos);
  const auto n = static_cast<std::int64_t>(combos);
  if (options.exec == Execution::Parallel && combos > 1) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t k = 0; k < n; ++k) {
      rows[static_cast<std::size_t>(k)] =
          run_combination(net, spec, axes, grid[static_cast<std::size_t>(k)], xi, options, Execution::Serial);
    }
  } else {
    for (std::int64_t k = 0; k < n; ++k) {
      rows[static_cast<std::size_t>(k)] =
          run_combination(net, spec, axes, grid[static_cast<std::size_t>(k)], xi, options, options.exec);
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<BetaAxis>& axes, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  for (const auto& ax : axes) os << "beta_" << ax.name << ',';
  os << "iterations,cost_cc_eur_per_h,cost_recovered_eur_per_h,recovery,gen_p_max_pct,bus_v_max_pct,"
        "branch_s_max_pct,joint_pct,error\n";
  for (const auto& r : rows) {
    for (const auto& b : r.betas) os << (b ? fmt::format("{:.4f}", *b) : std::string("none")) << ',';
    auto cls = [&](ViolationClass c) {
      const auto it = r.class_max.find(c);
      return it == r.class_max.end() ? std::string() : fmt::format("{:.4f}", 100.0 * it->second);
    };
    std::string err = r.error;
    for (auto& ch : err) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    os << fmt::format("{},{},{},{},{},{},{},{},{}\n", r.iterations,
                      r.error.empty() ? fmt::format("{:.2f}", r.cost_cc) : std::string(),
                      opt(r.cost_recovered, "{:.2f}"), r.recovery_status, cls(ViolationClass::GenP),
                      cls(ViolationClass::BusV), cls(ViolationClass::BranchS),
                      r.joint ? fmt::format("{:.4f}", 100.0 * *r.joint) : std::string(), err);
  }
  return os.str();
}

}  // namespace ccsoc
