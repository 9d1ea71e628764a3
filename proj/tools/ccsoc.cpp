#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <omp.h>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ccsoc/cc_driver.hpp"
#include "ccsoc/error.hpp"
#include "ccsoc/sweep.hpp"
#include "ccsoc/validation.hpp"
#include "run_config.hpp"

using namespace ccsoc;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::optional<double> rho, epsilon, rating_scale, loss_penalty;
  std::optional<int> max_outer;
  std::string state;
  bool no_recover = false;
};

struct Run {
  cli::RunConfig cfg;
  NetworkCase net;
  std::filesystem::path out;
  std::string command;

  json meta() const {
    return {{"tool", "ccsoc"},
            {"version", kVersion},
            {"command", command},
            {"case", net.name},
            {"config_hash", cfg.hash()},
            {"seed", cfg.seed()}};
  }

  std::string csv_stamp() const { return fmt::format("# ccsoc {} config_hash={} seed={}\n", command, cfg.hash(), cfg.seed()); }

  void write(const std::string& name, const std::string& text) const {
    std::ofstream f(out / name, std::ios::binary);
    if (!f) throw ParseError("cannot write " + (out / name).string());
    f << text;
  }

  void write_json(const std::string& name, json body) const {
    body["meta"] = meta();
    write(name, body.dump(2) + "\n");
  }
};

Run prepare(const Overrides& o, const std::string& command) {
  Run r{cli::RunConfig::load(o.config), {}, {}, command};
  if (o.seed) r.cfg.set("mc.seed", *o.seed);
  if (o.samples) r.cfg.set("mc.samples", *o.samples);
  if (o.rho) r.cfg.set("tolerances.rho", *o.rho);
  if (o.max_outer) r.cfg.set("tolerances.max_outer", *o.max_outer);
  if (o.loss_penalty) r.cfg.set("tolerances.loss_penalty", *o.loss_penalty);
  if (o.epsilon) r.cfg.set("uncertainty.epsilon", *o.epsilon);
  if (o.rating_scale) r.cfg.set("modifiers.rating_scale", *o.rating_scale);
  if (!o.out.empty()) r.cfg.set("output.dir", o.out);
  r.net = r.cfg.network();
  r.out = r.cfg.output_dir();
  std::filesystem::create_directories(r.out);
  return r;
}

SocState load_state(const std::string& path, const NetworkCase& net) {
  if (path.empty()) throw ValidationError("--state is required");
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open state file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("state " + path + ": " + e.what());
  }
  if (j.contains("state")) j = j.at("state");
  return SocState::from_json(j, net);
}

std::string dispatch_csv(const NetworkCase& net, const std::vector<double>& p, const std::vector<double>& q,
                         const std::vector<double>& q_wind) {
  const double base = net.base_mva;
  std::string s = "unit,index,bus,p_mw,q_mvar\n";
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    s += fmt::format("gen,{},{},{:.4f},{:.4f}\n", g, net.buses[net.generators[g].bus].id, p[g] * base,
                     q[g] * base);
  }
  for (std::size_t w = 0; w < net.wind_farms.size(); ++w) {
    const auto& wf = net.wind_farms[w];
    s += fmt::format("wind,{},{},{:.4f},{:.4f}\n", w, net.buses[wf.bus].id, wf.p_forecast * base,
                     q_wind[w] * base);
  }
  return s;
}

std::string cone_csv(const NetworkCase& net, const SocState& st) {
  std::string s = "branch,from,to,cone_slack_pu2\n";
  const auto slack = st.cone_slacks(net);
  for (std::size_t l = 0; l < net.num_branches(); ++l) {
    const auto& br = net.branches[l];
    s += fmt::format("{},{},{},{:.3e}\n", br.label, net.buses[br.from_bus].id, net.buses[br.to_bus].id, slack[l]);
  }
  return s;
}

double max_cone_slack(const NetworkCase& net, const SocState& st) {
  double m = 0.0;
  for (double v : st.cone_slacks(net)) m = std::max(m, v);
  return m;
}

int cmd_solve(const Overrides& o) {
  auto r = prepare(o, "solve");
  const auto res = solve_sequential(r.net, nullptr, r.cfg.sequential());
  r.write_json("state.json", {{"state", res.state.to_json(r.net)},
                              {"angle_passes", res.passes},
                              {"angle_deltas_pu2", res.deltas},
                              {"radial", res.radial},
                              {"max_cone_slack_pu2", max_cone_slack(r.net, res.state)}});
  r.write("dispatch.csv", r.csv_stamp() + dispatch_csv(r.net, res.state.p_gen, res.state.q_gen, res.state.q_wind));
  r.write("cone_slacks.csv", r.csv_stamp() + cone_csv(r.net, res.state));
  fmt::print("Objective          {:>14.2f} EUR/h\n", res.state.objective);
  fmt::print("Angle passes       {:>14}\n", res.passes);
  fmt::print("Max cone slack     {:>14.3e} p.u.^2\n", max_cone_slack(r.net, res.state));
  fmt::print("Artifacts          {}\n", r.out.string());
  return 0;
}

void print_recovery(const RecoveryResult& rec, const NetworkCase& net) {
  fmt::print("Recovery status    {:>14}\n", rec.report.status());
  fmt::print("Recovered cost     {:>14.2f} EUR/h\n", generation_cost(net, rec.solution.p_gen));
  fmt::print("PV/PQ switches     {:>14}\n", rec.report.clamps.size());
  fmt::print("Limit violations   {:>14}\n", rec.report.violations.size());
}

int cmd_cc_solve(const Overrides& o) {
  auto r = prepare(o, "cc-solve");
  const auto spec = r.cfg.uncertainty(r.net);
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = solve_cc(r.net, spec, r.cfg.cc());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  r.write_json("cc_report.json", {{"report", report.to_json(r.net)}, {"uncertainty", spec.to_json(r.net)}});
  r.write_json("cc_state.json", {{"state", report.final_state.to_json(r.net)}});
  r.write("margins.csv", r.csv_stamp() + report.margins_csv(r.net));
  if (report.recovered) {
    const auto& sol = report.recovered->solution;
    r.write("recovered_dispatch.csv",
            r.csv_stamp() + dispatch_csv(r.net, sol.p_gen, sol.q_gen, report.final_state.q_wind));
  }

  fmt::print("{:>4} {:>16} {:>16} {:>6} {:>9}\n", "iter", "objective EUR/h", "delta p.u.", "inner", "critical");
  for (const auto& it : report.iterations) {
    fmt::print("{:>4} {:>16.2f} {:>16.3e} {:>6} {:>9}\n", it.index, it.objective, it.margin_delta,
               it.inner_iterations, it.critical_added.size());
  }
  fmt::print("CC cost            {:>14.2f} EUR/h\n", report.cost_cc);
  fmt::print("Iterations         {:>14}\n", report.iterations.size());
  fmt::print("Time               {:>14.2f} s\n", secs);
  if (report.recovered) {
    print_recovery(*report.recovered, r.net);
  } else {
    fmt::print("Recovery failed: {}\n", report.recovery_error);
  }
  return 0;
}

int cmd_recover(const Overrides& o) {
  auto r = prepare(o, "recover");
  const auto state = load_state(o.state, r.net);
  auto seed = state.to_seed(r.net);
  const auto rec = recover_feasible(r.net, seed, r.cfg.limits_tol());
  r.write_json("recovered.json", {{"status", rec.report.status()},
                                  {"cost_eur_per_h", generation_cost(r.net, rec.solution.p_gen)},
                                  {"limits", to_json(rec.report)},
                                  {"solution", to_json(rec.solution, r.net)}});
  r.write("recovered_dispatch.csv", r.csv_stamp() + dispatch_csv(r.net, rec.solution.p_gen, rec.solution.q_gen,
                                                                  state.q_wind));
  print_recovery(rec, r.net);
  return 0;
}

int cmd_validate(const Overrides& o) {
  auto r = prepare(o, "validate");
  const auto spec = r.cfg.uncertainty(r.net);
  const auto state = load_state(o.state, r.net);
  ScenarioPolicy policy;
  std::string point = "state";
  if (o.no_recover) {
    policy = ScenarioPolicy::from_state(r.net, state, spec);
  } else {
    const auto rec = recover_feasible(r.net, state.to_seed(r.net), r.cfg.limits_tol());
    policy = ScenarioPolicy::from_recovery(r.net, rec.solution, state.q_wind, spec);
    point = "recovered (" + rec.report.status() + ")";
  }
  const auto xi = sample_wind(spec, r.cfg.mc_samples(), r.cfg.seed());
  const auto report = evaluate_policy(r.net, policy, xi, r.cfg.limits_tol());
  r.write_json("violations.json", {{"operating_point", point}, {"epsilon", spec.epsilon}, {"report", report.to_json()}});
  r.write("violations.csv", r.csv_stamp() + report.to_csv());
  fmt::print("Operating point: {}\n", point);
  fmt::print("{}", report.table());
  return 0;
}

int cmd_sweep(const Overrides& o) {
  auto r = prepare(o, "sweep-beta");
  const auto spec = r.cfg.uncertainty(r.net);
  const auto axes = r.cfg.sweep_axes(r.net);
  SweepOptions opt;
  opt.cc = r.cfg.cc();
  opt.mc_samples = o.samples ? *o.samples : r.cfg.sweep_samples();
  opt.seed = r.cfg.seed();
  opt.limits_tol = r.cfg.limits_tol();
  const auto rows = sweep_beta(r.net, spec, axes, opt);
  r.write("sweep.csv", r.csv_stamp() + sweep_csv(axes, rows));
  std::size_t failed = 0;
  for (const auto& row : rows) failed += !row.error.empty();
  fmt::print("Combinations       {:>14}\n", rows.size());
  fmt::print("Failed             {:>14}\n", failed);
  fmt::print("Artifacts          {}\n", r.out.string());
  return 0;
}

int cmd_screen(const Overrides& o) {
  auto r = prepare(o, "screen");
  const auto spec = r.cfg.uncertainty(r.net);
  const SocState anchor = o.state.empty() ? solve_sequential(r.net, nullptr, r.cfg.sequential()).state
                                          : load_state(o.state, r.net);
  const auto shift = ptdf(r.net, r.net.slack_bus());
  CriticalLineSet set;
  screen_critical_lines(r.net, anchor, spec, shift, set);

  // Worst directional flow over the box vertices, for the audit trail.
  const auto flows = extract_flows(anchor, r.net);
  const auto vertices = screening_vertices(spec);
  json lines = json::array();
  for (const auto& ld : set.entries) {
    const auto& br = r.net.branches[ld.branch];
    const bool fwd = ld.direction == FlowDirection::Forward;
    double worst = fwd ? flows[ld.branch].p_ij : flows[ld.branch].p_ji;
    for (const auto& kappa : vertices) {
      Eigen::VectorXd dp = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(r.net.num_buses()));
      for (std::size_t w = 0; w < r.net.wind_farms.size(); ++w) dp(r.net.wind_farms[w].bus) += kappa(w);
      for (std::size_t g = 0; g < r.net.generators.size(); ++g) {
        dp(r.net.generators[g].bus) -= spec.gamma[g] * kappa.sum();
      }
      const double d = shift.row(static_cast<Eigen::Index>(ld.branch)).dot(dp);
      worst = std::max(worst, fwd ? flows[ld.branch].p_ij + d : flows[ld.branch].p_ji - d);
    }
    lines.push_back({{"branch", br.label},
                     {"from", r.net.buses[br.from_bus].id},
                     {"to", r.net.buses[br.to_bus].id},
                     {"direction", std::string(to_string(ld.direction))},
                     {"rating_pu", br.s_rating},
                     {"anchor_flow_pu", fwd ? flows[ld.branch].p_ij : flows[ld.branch].p_ji},
                     {"worst_vertex_flow_pu", worst}});
    fmt::print("line {:>4} ({:>3}-{:<3}) {:<8} worst {:>10.4f} p.u. rating {:>10.4f} p.u.\n", br.label,
               r.net.buses[br.from_bus].id, r.net.buses[br.to_bus].id, to_string(ld.direction), worst, br.s_rating);
  }
  r.write_json("screen.json", {{"vertices", vertices.size()}, {"critical_lines", lines}});
  fmt::print("Critical directions {:>13}\n", set.entries.size());
  return 0;
}

void report_error(const std::string& kind, const std::string& type, const std::string& message, int code,
                  const json& extra = {}) {
  json j{{"error", {{"kind", kind}, {"type", type}, {"message", message}}}, {"exit_code", code}};
  if (!extra.is_null()) j["details"] = extra;
  std::cerr << j.dump() << "\n";
}

void set_workers(std::optional<int> flag) {
  int n = 0;
  if (const char* env = std::getenv("CCSOC_WORKERS")) n = std::atoi(env);
  if (flag) n = *flag;
  if (n > 0) omp_set_num_threads(n);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chance-constrained SOC optimal power flow"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Overrides o;
  std::optional<int> workers;
  app.add_option("--workers", workers, "OpenMP threads (overrides CCSOC_WORKERS)");

  auto common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config, "JSON run configuration")->required();
    sub->add_option("-o,--out", o.out, "output directory");
    sub->add_option("--seed", o.seed, "Monte-Carlo seed");
    sub->add_option("--samples", o.samples, "Monte-Carlo samples");
    sub->add_option("--rho", o.rho, "margin tolerance, p.u.");
    sub->add_option("--max-outer", o.max_outer, "outer iteration cap");
    sub->add_option("--epsilon", o.epsilon, "violation level");
    sub->add_option("--rating-scale", o.rating_scale, "line rating multiplier");
    sub->add_option("--loss-penalty", o.loss_penalty, "EUR/h per p.u. of series reactive loss");
    return sub;
  };
  auto* solve = common(app.add_subcommand("solve", "deterministic SOC-OPF at the forecast"));
  auto* cc = common(app.add_subcommand("cc-solve", "chance-constrained outer loop and recovery"));
  auto* recover = common(app.add_subcommand("recover", "AC feasibility recovery from a state file"));
  recover->add_option("--state", o.state, "state JSON from solve or cc-solve")->required();
  auto* validate = common(app.add_subcommand("validate", "Monte-Carlo violation probabilities"));
  validate->add_option("--state", o.state, "state JSON from solve or cc-solve")->required();
  validate->add_flag("--no-recover", o.no_recover, "sample around the state itself");
  auto* sweep = common(app.add_subcommand("sweep-beta", "beta grid of cc-solve plus validation"));
  auto* screen = common(app.add_subcommand("screen", "critical line screening"));
  screen->add_option("--state", o.state, "anchor state (default: solve first)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    report_error("input", "usage", e.what(), 2);
    return 2;
  }

  try {
    set_workers(workers);
    if (*solve) return cmd_solve(o);
    if (*cc) return cmd_cc_solve(o);
    if (*recover) return cmd_recover(o);
    if (*validate) return cmd_validate(o);
    if (*sweep) return cmd_sweep(o);
    if (*screen) return cmd_screen(o);
  } catch (const CcNonConvergenceError& e) {
    json history = json::array();
    for (const auto& rec : e.history()) {
      history.push_back({{"index", rec.index}, {"objective_eur_per_h", rec.objective}, {"margin_delta_pu", rec.margin_delta}});
    }
    report_error("solver", "non_convergence", e.what(), 1, {{"history", history}});
    return 1;
  } catch (const InfeasibleTighteningError& e) {
    report_error("solver", "infeasible_tightening", e.what(), 1, {{"quantity", e.quantity()}});
    return 1;
  } catch (const ParseError& e) {
    report_error("input", "parse", e.what(), 2);
    return 2;
  } catch (const ValidationError& e) {
    report_error("input", "validation", e.what(), 2);
    return 2;
  } catch (const json::exception& e) {
    report_error("input", "config", e.what(), 2);
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    report_error("input", "filesystem", e.what(), 2);
    return 2;
  } catch (const Error& e) {
    report_error("solver", "solver", e.what(), 1);
    return 1;
  } catch (const std::exception& e) {
    report_error("solver", "internal", e.what(), 1);
    return 1;
  }
  return 2;
}
