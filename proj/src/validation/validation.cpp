#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "ccsoc/error.hpp"
#include "ccsoc/validation.hpp"

namespace ccsoc {

namespace {

std::vector<double> wind_ratios(const NetworkCase& net, const PowerFlowSeed& base) {
  std::vector<double> out;
  for (std::size_t w = 0; w < net.wind_farms.size(); ++w) {
    const double p = base.p_wind.empty() ? net.wind_farms[w].p_forecast : base.p_wind[w];
    const double q = base.q_wind.empty() ? 0.0 : base.q_wind[w];
    out.push_back(p != 0.0 ? q / p : 0.0);
  }
  return out;
}

// Flat index layout of the per-constraint table.
struct Layout {
  std::size_t gen_p = 0, gen_q = 0, bus_v = 0, branch_s = 0, size = 0;
  std::vector<std::size_t> limited;  // branch indices with a rating

  explicit Layout(const NetworkCase& net) {
    for (std::size_t l = 0; l < net.num_branches(); ++l) {
      if (net.branches[l].limited()) limited.push_back(l);
    }
    gen_p = 0;
    gen_q = gen_p + 2 * net.generators.size();
    bus_v = gen_q + 2 * net.generators.size();
    branch_s = bus_v + 2 * net.num_buses();
    size = branch_s + 2 * limited.size();
  }
};

}  // namespace

ScenarioPolicy ScenarioPolicy::from_state(const NetworkCase& net, const SocState& state,
                                          const UncertaintySpec& spec) {
  ScenarioPolicy p;
  p.base = state.to_seed(net);
  for (const auto& b : net.buses) p.kinds.push_back(b.kind);
  p.gamma = spec.gamma;
  p.lambda = wind_ratios(net, p.base);
  return p;
}

ScenarioPolicy ScenarioPolicy::from_recovery(const NetworkCase& net, const PowerFlowSolution& sol,
                                             const std::vector<double>& q_wind, const UncertaintySpec& spec) {
  if (q_wind.size() != net.wind_farms.size()) throw ValidationError("wind reactive output has the wrong size");
  ScenarioPolicy p;
  p.base.v_mag = sol.v_mag;
  p.base.v_ang = sol.v_ang;
  p.base.p_gen = sol.p_gen;
  p.base.q_gen = sol.q_gen;
  p.base.slack_bus = sol.slack_bus;
  for (const auto& w : net.wind_farms) p.base.p_wind.push_back(w.p_forecast);
  p.base.q_wind = q_wind;
  p.kinds = sol.kinds;
  p.gamma = spec.gamma;
  p.lambda = wind_ratios(net, p.base);
  return p;
}

Eigen::MatrixXd sample_wind(const UncertaintySpec& spec, std::size_t n, std::uint64_t seed, Execution exec) {
  return GaussianSampler(spec.sigma).sample(n, seed, exec);
}

std::string_view to_string(ViolationClass c) {
  switch (c) {
    case ViolationClass::GenP:
      return "gen_p";
    case ViolationClass::BusV:
      return "bus_v";
    case ViolationClass::BranchS:
      return "branch_s";
    case ViolationClass::GenQ:
      return "gen_q";
  }
  return "?";
}

double ViolationReport::probability(std::uint64_t count) const {
  return samples == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(samples);
}

double ViolationReport::standard_error(std::uint64_t count) const {
  if (samples == 0) return 0.0;
  const double p = probability(count);
  return std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
}

std::map<ViolationClass, double> ViolationReport::per_class_max() const {
  std::map<ViolationClass, double> out{
      {ViolationClass::GenP, 0.0}, {ViolationClass::BusV, 0.0}, {ViolationClass::BranchS, 0.0}};
  for (const auto& t : per_constraint) {
    if (t.kind == ViolationClass::GenQ) continue;
    out[t.kind] = std::max(out[t.kind], probability(t.count));
  }
  return out;
}

nlohmann::json ViolationReport::to_json() const {
  using nlohmann::json;
  json classes = json::object();
  for (const auto& [k, p] : per_class_max()) classes[std::string(to_string(k))] = p;
  json entries = json::array();
  for (const auto& t : per_constraint) {
    entries.push_back({{"kind", std::string(to_string(t.kind))},
                       {"element", t.element},
                       {"side", t.side},
                       {"count", t.count},
                       {"probability", probability(t.count)},
                       {"std_error", standard_error(t.count)}});
  }
  return {{"scoring",
           {{"generator_saturation", "clamped at the capability bound, counted as a gen_p violation"},
            {"diverged_power_flow", "counted as a joint violation only"},
            {"gen_q", "audit only, excluded from class maxima and joint"}}},
          {"samples", samples},
          {"diverged", diverged},
          {"joint", {{"count", joint}, {"probability", probability(joint)}, {"std_error", standard_error(joint)}}},
          {"per_class_max", classes},
          {"per_constraint", entries}};
}

std::string ViolationReport::to_csv() const {
  std::ostringstream os;
  os << "kind,element,side,count,probability_pct,std_error_pct\n";
  for (const auto& t : per_constraint) {
    os << fmt::format("{},{},{},{},{:.4f},{:.4f}\n", to_string(t.kind), t.element, t.side, t.count,
                      100.0 * probability(t.count), 100.0 * standard_error(t.count));
  }
  os << fmt::format("joint,,,{},{:.4f},{:.4f}\n", joint, 100.0 * probability(joint),
                    100.0 * standard_error(joint));
  return os.str();
}

std::string ViolationReport::table() const {
  const auto cls = per_class_max();
  std::ostringstream os;
  os << fmt::format("{:<40}{:>12}\n", "Constraint class (max over constraints)", "Violation");
  os << fmt::format("{:<40}{:>11.2f}%\n", "Generator active power limits", 100.0 * cls.at(ViolationClass::GenP));
  os << fmt::format("{:<40}{:>11.2f}%\n", "Bus voltage limits", 100.0 * cls.at(ViolationClass::BusV));
  os << fmt::format("{:<40}{:>11.2f}%\n", "Apparent power line flow limits",
                    100.0 * cls.at(ViolationClass::BranchS));
  os << fmt::format("{:<40}{:>11.2f}%\n", "Joint violation probability", 100.0 * probability(joint));
  os << fmt::format("{:<40}{:>12}\n", "Samples", samples);
  os << fmt::format("{:<40}{:>12}\n", "Diverged power flows", diverged);
  return os.str();
}

ViolationReport evaluate_policy(const NetworkCase& net, const ScenarioPolicy& policy,
                                const Eigen::MatrixXd& deviations, double limits_tol, Execution exec) {
  const auto nw = net.wind_farms.size();
  const auto ng = net.generators.size();
  if (static_cast<std::size_t>(deviations.cols()) != nw) {
    throw ValidationError("deviation matrix has the wrong number of columns");
  }
  if (policy.gamma.size() != ng || policy.lambda.size() != nw || policy.kinds.size() != net.num_buses()) {
    throw ValidationError("scenario policy does not match the case dimensions");
  }

  const Layout layout(net);
  const PowerFlowModel model(net);
  const auto n = static_cast<std::size_t>(deviations.rows());
  std::vector<char> at_slack(ng, 0);
  for (std::size_t g = 0; g < ng; ++g) at_slack[g] = policy.kinds[net.generators[g].bus] == BusKind::Slack;
  std::vector<double> p_forecast;
  for (std::size_t w = 0; w < nw; ++w) {
    p_forecast.push_back(policy.base.p_wind.empty() ? net.wind_farms[w].p_forecast : policy.base.p_wind[w]);
  }

  struct Tally {
    std::vector<std::uint64_t> counts;
    std::uint64_t joint = 0, diverged = 0;
  };

  auto run_sample = [&](std::size_t k, Tally& tally, std::vector<char>& hit) {
    std::fill(hit.begin(), hit.end(), 0);
    PowerFlowSeed seed = policy.base;
    seed.p_wind.assign(nw, 0.0);
    seed.q_wind.assign(nw, 0.0);
    double total = 0.0;
    for (std::size_t w = 0; w < nw; ++w) {
      const double xi = deviations(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(w));
      total += xi;
      seed.p_wind[w] = p_forecast[w] + xi;
      seed.q_wind[w] = policy.lambda[w] * seed.p_wind[w];
    }
    for (std::size_t g = 0; g < ng; ++g) {
      const auto& gen = net.generators[g];
      double p = policy.base.p_gen[g] - policy.gamma[g] * total;
      if (!at_slack[g]) {
        if (p > gen.p_max + limits_tol) hit[layout.gen_p + 2 * g + 1] = 1;
        if (p < gen.p_min - limits_tol) hit[layout.gen_p + 2 * g] = 1;
        p = std::clamp(p, gen.p_min, gen.p_max);
      }
      seed.p_gen[g] = p;
    }
    const auto sol = model.solve(seed, 1e-8, 30, policy.kinds);
    if (!sol.converged) {
      ++tally.diverged;
      ++tally.joint;
      return;
    }
    for (std::size_t g = 0; g < ng; ++g) {
      const auto& gen = net.generators[g];
      if (sol.p_gen[g] > gen.p_max + limits_tol) hit[layout.gen_p + 2 * g + 1] = 1;
      if (sol.p_gen[g] < gen.p_min - limits_tol) hit[layout.gen_p + 2 * g] = 1;
      if (sol.q_gen[g] > gen.q_max + limits_tol) hit[layout.gen_q + 2 * g + 1] = 1;
      if (sol.q_gen[g] < gen.q_min - limits_tol) hit[layout.gen_q + 2 * g] = 1;
    }
    for (std::size_t i = 0; i < net.num_buses(); ++i) {
      if (sol.v_mag[i] < net.buses[i].v_min - limits_tol) hit[layout.bus_v + 2 * i] = 1;
      if (sol.v_mag[i] > net.buses[i].v_max + limits_tol) hit[layout.bus_v + 2 * i + 1] = 1;
    }
    for (std::size_t j = 0; j < layout.limited.size(); ++j) {
      const auto l = layout.limited[j];
      const double rating = net.branches[l].s_rating + limits_tol;
      if (sol.branch_flows[l].s_ij > rating) hit[layout.branch_s + 2 * j] = 1;
      if (sol.branch_flows[l].s_ji > rating) hit[layout.branch_s + 2 * j + 1] = 1;
    }
    bool any = false;
    for (std::size_t e = 0; e < layout.size; ++e) {
      if (!hit[e]) continue;
      ++tally.counts[e];
      if (e < layout.gen_q || e >= layout.bus_v) any = true;
    }
    if (any) ++tally.joint;
  };

  const auto blocks = static_cast<std::int64_t>((n + kSampleBlock - 1) / kSampleBlock);
  std::vector<Tally> tallies(static_cast<std::size_t>(blocks));
  auto run_block = [&](std::int64_t b) {
    auto& t = tallies[static_cast<std::size_t>(b)];
    t.counts.assign(layout.size, 0);
    std::vector<char> hit(layout.size);
    const auto start = static_cast<std::size_t>(b) * kSampleBlock;
    const auto stop = std::min(n, start + kSampleBlock);
    for (std::size_t k = start; k < stop; ++k) run_sample(k, t, hit);
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t b = 0; b < blocks; ++b) run_block(b);
  } else {
    for (std::int64_t b = 0; b < blocks; ++b) run_block(b);
  }

  ViolationReport report;
  report.samples = n;
  std::vector<std::uint64_t> counts(layout.size, 0);
  for (const auto& t : tallies) {
    report.joint += t.joint;
    report.diverged += t.diverged;
    for (std::size_t e = 0; e < layout.size; ++e) counts[e] += t.counts[e];
  }
  for (std::size_t g = 0; g < ng; ++g) {
    report.per_constraint.push_back({ViolationClass::GenP, static_cast<int>(g), "lower", counts[layout.gen_p + 2 * g]});
    report.per_constraint.push_back(
        {ViolationClass::GenP, static_cast<int>(g), "upper", counts[layout.gen_p + 2 * g + 1]});
  }
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    report.per_constraint.push_back({ViolationClass::BusV, net.buses[i].id, "lower", counts[layout.bus_v + 2 * i]});
    report.per_constraint.push_back(
        {ViolationClass::BusV, net.buses[i].id, "upper", counts[layout.bus_v + 2 * i + 1]});
  }
  for (std::size_t j = 0; j < layout.limited.size(); ++j) {
    const int label = net.branches[layout.limited[j]].label;
    report.per_constraint.push_back({ViolationClass::BranchS, label, "forward", counts[layout.branch_s + 2 * j]});
    report.per_constraint.push_back(
        {ViolationClass::BranchS, label, "reverse", counts[layout.branch_s + 2 * j + 1]});
  }
  for (std::size_t g = 0; g < ng; ++g) {
    report.per_constraint.push_back({ViolationClass::GenQ, static_cast<int>(g), "lower", counts[layout.gen_q + 2 * g]});
    report.per_constraint.push_back(
        {ViolationClass::GenQ, static_cast<int>(g), "upper", counts[layout.gen_q + 2 * g + 1]});
  }
  return report;
}

}  // namespace ccsoc
