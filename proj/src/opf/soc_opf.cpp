#include <algorithm>
#include <cmath>
#include <queue>

#include "ccsoc/soc_opf.hpp"

namespace ccsoc {

std::string_view to_string(Quantity q) {
  switch (q) {
    case Quantity::GenP: return "gen_p";
    case Quantity::GenQ: return "gen_q";
    case Quantity::WindQ: return "wind_q";
    case Quantity::BusU: return "bus_u";
    case Quantity::BranchC: return "branch_c";
    case Quantity::BranchS: return "branch_s";
  }
  return "?";
}

std::string_view to_string(FlowDirection d) {
  return d == FlowDirection::Forward ? "forward" : "reverse";
}

double TighteningSet::margin(Quantity kind, std::size_t index) const {
  auto it = bounds.find({kind, index});
  return it == bounds.end() ? 0.0 : it->second;
}

nlohmann::json TighteningSet::to_json(const NetworkCase& net) const {
  using nlohmann::json;
  json b = json::array();
  for (const auto& [key, omega] : bounds) {
    int label = static_cast<int>(key.index);
    if (key.kind == Quantity::BusU) label = net.buses[key.index].id;
    if (key.kind == Quantity::BranchC || key.kind == Quantity::BranchS) {
      label = net.branches[key.index].label;
    }
    b.push_back({{"quantity", std::string(to_string(key.kind))}, {"element", label}, {"omega", omega}});
  }
  json f = json::array();
  for (const auto& [key, m] : flows) {
    f.push_back({{"branch", net.branches[key.branch].label},
                 {"direction", std::string(to_string(key.direction))},
                 {"margin_p_pu", m.margin_p},
                 {"margin_q_pu", m.margin_q},
                 {"beta", m.beta}});
  }
  return {{"bounds", b}, {"flows", f}};
}

std::vector<double> SocState::cone_slacks(const NetworkCase& net) const {
  std::vector<double> out;
  out.reserve(net.num_branches());
  for (std::size_t l = 0; l < net.num_branches(); ++l) {
    const auto& br = net.branches[l];
    out.push_back(u[br.from_bus] * u[br.to_bus] - c[l] * c[l] - s[l] * s[l]);
  }
  return out;
}

PowerFlowSeed SocState::to_seed(const NetworkCase& net) const {
  PowerFlowSeed seed;
  for (double ui : u) seed.v_mag.push_back(std::sqrt(std::max(ui, 1e-12)));
  seed.v_ang = theta;
  seed.p_gen = p_gen;
  seed.q_gen = q_gen;
  for (const auto& w : net.wind_farms) seed.p_wind.push_back(w.p_forecast);
  seed.q_wind = q_wind;
  seed.slack_bus = net.slack_bus();
  return seed;
}

nlohmann::json SocState::to_json(const NetworkCase& net) const {
  using nlohmann::json;
  json gens = json::array();
  for (std::size_t g = 0; g < p_gen.size(); ++g) {
    gens.push_back({{"index", g},
                    {"bus", net.buses[net.generators[g].bus].id},
                    {"p_pu", p_gen[g]},
                    {"q_pu", q_gen[g]}});
  }
  json wind = json::array();
  for (std::size_t w = 0; w < q_wind.size(); ++w) {
    wind.push_back({{"index", w}, {"bus", net.buses[net.wind_farms[w].bus].id}, {"q_pu", q_wind[w]}});
  }
  json buses = json::array();
  for (std::size_t i = 0; i < u.size(); ++i) {
    buses.push_back({{"id", net.buses[i].id}, {"u_pu2", u[i]}, {"theta_rad", theta[i]}});
  }
  const auto slack = cone_slacks(net);
  json branches = json::array();
  for (std::size_t l = 0; l < c.size(); ++l) {
    branches.push_back({{"label", net.branches[l].label},
                        {"c_pu2", c[l]},
                        {"s_pu2", s[l]},
                        {"cone_slack_pu2", slack[l]}});
  }
  return {{"objective_eur_per_h", objective},
          {"generators", gens},
          {"wind_farms", wind},
          {"buses", buses},
          {"branches", branches}};
}

SocState SocState::from_json(const nlohmann::json& j, const NetworkCase& net) {
  SocState st;
  try {
    st.objective = j.at("objective_eur_per_h");
    for (const auto& g : j.at("generators")) {
      st.p_gen.push_back(g.at("p_pu"));
      st.q_gen.push_back(g.at("q_pu"));
    }
    for (const auto& w : j.at("wind_farms")) st.q_wind.push_back(w.at("q_pu"));
    for (const auto& b : j.at("buses")) {
      st.u.push_back(b.at("u_pu2"));
      st.theta.push_back(b.at("theta_rad"));
    }
    for (const auto& b : j.at("branches")) {
      st.c.push_back(b.at("c_pu2"));
      st.s.push_back(b.at("s_pu2"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid state file: ") + e.what());
  }
  if (st.p_gen.size() != net.generators.size() || st.u.size() != net.num_buses() ||
      st.c.size() != net.num_branches() || st.q_wind.size() != net.wind_farms.size()) {
    throw ValidationError("state file does not match the case dimensions");
  }
  return st;
}

FlowExprs flow_expressions(const NetworkCase& net, std::size_t l, const SocLayout& lay) {
  const auto& br = net.branches[l];
  const VarId ui = lay.u[br.from_bus], uj = lay.u[br.to_bus];
  const VarId c = lay.c[l], s = lay.s[l];
  const auto k = flow_coefs(br);
  auto form = [&](const double* a) {
    AffineExpr e;
    e.add(ui, a[0]).add(uj, a[1]).add(c, a[2]).add(s, a[3]);
    return e;
  };
  return {form(k.p_ij), form(k.q_ij), form(k.p_ji), form(k.q_ji)};
}

namespace {

std::pair<double, double> shrink(double lo, double hi, double omega, const std::string& name) {
  if (omega == 0.0) return {lo, hi};
  const double a = lo + omega, b = hi - omega;
  if (a > b) throw InfeasibleTighteningError(name, a, b);
  return {a, b};
}

}  // namespace

SocProgram build_soc_opf(const NetworkCase& net, const SocState* anchor,
                         const TighteningSet* tightenings) {
  const TighteningSet none;
  const TighteningSet& t = tightenings ? *tightenings : none;
  if (anchor && (anchor->c.size() != net.num_branches() || anchor->s.size() != net.num_branches())) {
    throw ValidationError("anchor state does not match the case dimensions");
  }
  SocProgram out;
  auto& p = out.program;
  auto& lay = out.layout;
  const double base = net.base_mva;

  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const auto& gen = net.generators[g];
    const std::string tag = "g" + std::to_string(g) + "@" + std::to_string(net.buses[gen.bus].id);
    auto [plo, phi] = shrink(gen.p_min, gen.p_max, t.margin(Quantity::GenP, g), "P of generator " + tag);
    auto [qlo, qhi] = shrink(gen.q_min, gen.q_max, t.margin(Quantity::GenQ, g), "Q of generator " + tag);
    lay.p_gen.push_back(p.add_variable("p_" + tag, plo, phi));
    lay.q_gen.push_back(p.add_variable("q_" + tag, qlo, qhi));
  }
  for (std::size_t w = 0; w < net.wind_farms.size(); ++w) {
    const auto& wf = net.wind_farms[w];
    const double qmax = wf.max_q_ratio() * wf.p_forecast;
    const std::string tag = "w" + std::to_string(w) + "@" + std::to_string(net.buses[wf.bus].id);
    auto [lo, hi] = shrink(-qmax, qmax, t.margin(Quantity::WindQ, w), "Q of wind farm " + tag);
    lay.q_wind.push_back(p.add_variable("qw_" + tag, lo, hi));
  }
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    const auto& b = net.buses[i];
    auto [lo, hi] = shrink(b.v_min * b.v_min, b.v_max * b.v_max, t.margin(Quantity::BusU, i),
                           "u of bus " + std::to_string(b.id));
    lay.u.push_back(p.add_variable("u_" + std::to_string(b.id), lo, hi));
  }
  for (std::size_t l = 0; l < net.num_branches(); ++l) {
    const auto& br = net.branches[l];
    const double lim = net.buses[br.from_bus].v_max * net.buses[br.to_bus].v_max;
    const std::string tag = std::to_string(br.label);
    auto [clo, chi] = shrink(-lim, lim, t.margin(Quantity::BranchC, l), "c of branch " + tag);
    auto [slo, shi] = shrink(-lim, lim, t.margin(Quantity::BranchS, l), "s of branch " + tag);
    lay.c.push_back(p.add_variable("c_" + tag, clo, chi));
    lay.s.push_back(p.add_variable("s_" + tag, slo, shi));
  }
  if (anchor) {
    lay.has_angles = true;
    const auto slack = net.slack_bus();
    for (std::size_t i = 0; i < net.num_buses(); ++i) {
      const double bound = i == slack ? 0.0 : kInf;
      lay.theta.push_back(p.add_variable("theta_" + std::to_string(net.buses[i].id), -bound, bound));
    }
  }

  // Nodal balances: generation + wind - load = injection into the network.
  std::vector<AffineExpr> p_out(net.num_buses()), q_out(net.num_buses());
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    p_out[i].add(lay.u[i], net.buses[i].g_shunt);
    q_out[i].add(lay.u[i], -net.buses[i].b_shunt);
  }
  for (std::size_t l = 0; l < net.num_branches(); ++l) {
    const auto f = flow_expressions(net, l, lay);
    const auto& br = net.branches[l];
    p_out[br.from_bus].add(f.p_ij);
    q_out[br.from_bus].add(f.q_ij);
    p_out[br.to_bus].add(f.p_ji);
    q_out[br.to_bus].add(f.q_ji);
  }
  const auto gens_at = net.generators_at_buses();
  const auto wind_at = net.wind_at_buses();
  for (std::size_t i = 0; i < net.num_buses(); ++i) {
    const auto& b = net.buses[i];
    AffineExpr pb = -1.0 * p_out[i];
    AffineExpr qb = -1.0 * q_out[i];
    double wind_p = 0.0;
    for (auto g : gens_at[i]) {
      pb.add(lay.p_gen[g], 1.0);
      qb.add(lay.q_gen[g], 1.0);
    }
    for (auto w : wind_at[i]) {
      wind_p += net.wind_farms[w].p_forecast;
      qb.add(lay.q_wind[w], 1.0);
    }
    p.add_equality(pb, b.p_load - wind_p, "pbal_" + std::to_string(b.id));
    p.add_equality(qb, b.q_load, "qbal_" + std::to_string(b.id));
  }

  for (std::size_t l = 0; l < net.num_branches(); ++l) {
    const auto& br = net.branches[l];
    const std::string tag = std::to_string(br.label);
    p.add_rotated_soc({lay.c[l], lay.s[l]}, lay.u[br.from_bus], lay.u[br.to_bus], "cone_" + tag);
    if (anchor) {
      const double cb = anchor->c[l], sb = anchor->s[l];
      if (std::abs(cb) < 1e-9) {
        throw SolverError("angle linearization undefined on branch " + tag + ": anchor c = 0");
      }
      const double den = cb * cb + sb * sb;
      // theta_j - theta_i = atan(sb/cb) + (cb s - sb c) / (cb^2 + sb^2)
      AffineExpr e;
      e.add(lay.theta[br.to_bus], 1.0).add(lay.theta[br.from_bus], -1.0);
      e.add(lay.s[l], -cb / den).add(lay.c[l], sb / den);
      p.add_equality(e, std::atan(sb / cb), "angle_" + tag);
    }
    if (br.limited()) {
      const auto f = flow_expressions(net, l, lay);
      const double s2 = br.s_rating * br.s_rating;
      p.add_quadratic({f.p_ij, f.q_ij}, AffineExpr(-s2), "sij_" + tag);
      p.add_quadratic({f.p_ji, f.q_ji}, AffineExpr(-s2), "sji_" + tag);
    }
  }

  for (const auto& [key, m] : t.flows) {
    const auto& br = net.branches.at(key.branch);
    if (!br.limited()) continue;
    const std::string tag = std::to_string(br.label) + std::string(to_string(key.direction));
    const auto f = flow_expressions(net, key.branch, lay);
    const auto& pe = key.direction == FlowDirection::Forward ? f.p_ij : f.p_ji;
    const auto& qe = key.direction == FlowDirection::Forward ? f.q_ij : f.q_ji;
    auto kp = p.add_variable("kP_" + tag, 0.0, br.s_rating);
    auto kq = p.add_variable("kQ_" + tag, 0.0, br.s_rating);
    p.add_less_equal(pe - AffineExpr(kp), -m.margin_p, "kP+_" + tag);
    p.add_less_equal(-1.0 * pe - AffineExpr(kp), -m.margin_p, "kP-_" + tag);
    p.add_less_equal(qe - AffineExpr(kq), -m.margin_q, "kQ+_" + tag);
    p.add_less_equal(-1.0 * qe - AffineExpr(kq), -m.margin_q, "kQ-_" + tag);
    p.add_quadratic({kp, kq}, AffineExpr(-br.s_rating * br.s_rating), "k_" + tag);
    lay.k_vars[key] = {kp, kq};
  }

  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    out.cost.add(lay.p_gen[g], net.generators[g].cost_linear * base);
    out.cost += net.generators[g].cost_offset;
  }
  p.set_objective(out.cost);
  return out;
}

std::vector<double> tree_angles(const NetworkCase& net, const std::vector<double>& c,
                                const std::vector<double>& s) {
  const std::size_t n = net.num_buses();
  std::vector<std::vector<std::size_t>> incident(n);
  for (std::size_t l = 0; l < net.num_branches(); ++l) {
    incident[net.branches[l].from_bus].push_back(l);
    incident[net.branches[l].to_bus].push_back(l);
  }
  std::vector<double> theta(n, 0.0);
  std::vector<bool> seen(n, false);
  std::queue<std::size_t> queue;
  queue.push(net.slack_bus());
  seen[net.slack_bus()] = true;
  while (!queue.empty()) {
    const auto i = queue.front();
    queue.pop();
    for (auto l : incident[i]) {
      const auto& br = net.branches[l];
      const double d = std::atan2(s[l], c[l]);
      const auto j = br.from_bus == i ? br.to_bus : br.from_bus;
      if (seen[j]) continue;
      theta[j] = br.from_bus == i ? theta[i] + d : theta[i] - d;
      seen[j] = true;
      queue.push(j);
    }
  }
  return theta;
}

namespace {

SocState read_state(const NetworkCase& net, const SocProgram& sp, const ConicSolution& sol) {
  SocState st;
  const auto& lay = sp.layout;
  auto read = [&](const std::vector<VarId>& ids) {
    std::vector<double> v;
    v.reserve(ids.size());
    for (auto id : ids) v.push_back(sol.value(id));
    return v;
  };
  st.p_gen = read(lay.p_gen);
  st.q_gen = read(lay.q_gen);
  st.q_wind = read(lay.q_wind);
  st.u = read(lay.u);
  st.c = read(lay.c);
  st.s = read(lay.s);
  st.theta = lay.has_angles ? read(lay.theta) : tree_angles(net, st.c, st.s);
  st.objective = sp.cost.evaluate(sol.values);
  return st;
}

void require_optimal(const ConicSolution& sol, const std::string& what) {
  if (sol.status != SolveStatus::Optimal) {
    throw SolverError(what + " returned " + std::string(to_string(sol.status)) + " (" +
                      sol.stats.message + ")");
  }
}

}  // namespace

AffineExpr series_reactive_loss(const NetworkCase& net, const SocLayout& layout) {
  AffineExpr loss;
  for (std::size_t l = 0; l < net.num_branches(); ++l) {
    const auto& br = net.branches[l];
    const double w = std::abs(br.b), t = br.tap;
    loss.add(layout.u[br.from_bus], w / (t * t)).add(layout.u[br.to_bus], w).add(layout.c[l], -2.0 * w / t);
  }
  return loss;
}

SocState solve_soc_opf(const NetworkCase& net, const SocState* anchor,
                       const TighteningSet* tightenings, const SequentialOptions& options) {
  const InteriorPointBackend backend;
  auto sp = build_soc_opf(net, anchor, tightenings);
  if (options.loss_penalty < 0.0) throw ValidationError("loss penalty must be nonnegative");
  if (options.loss_penalty > 0.0) {
    AffineExpr obj = sp.cost;
    obj.add(series_reactive_loss(net, sp.layout), options.loss_penalty);
    sp.program.set_objective(obj);
  }
  auto sol = solve(sp.program, backend, options.solver_tol);
  require_optimal(sol, "SOC-OPF");
  if (!options.tighten_cones) return read_state(net, sp, sol);

  const double z = sp.cost.evaluate(sol.values);
  sp.program.add_less_equal(sp.cost, z + 1e-7 * std::abs(z) + 1e-6, "cost_cap");
  sp.program.set_objective(series_reactive_loss(net, sp.layout));
  auto tight = solve(sp.program, backend, options.solver_tol);
  if (tight.status != SolveStatus::Optimal) return read_state(net, sp, sol);
  return read_state(net, sp, tight);
}

SequentialResult solve_sequential(const NetworkCase& net, const TighteningSet* tightenings,
                                  const SequentialOptions& options, const SocState* warm) {
  SequentialResult res;
  res.radial = net.is_radial();
  SocState anchor;
  if (warm && !res.radial) {
    anchor = *warm;
  } else {
    anchor = solve_soc_opf(net, nullptr, tightenings, options);
    res.passes = 1;
    if (res.radial) {
      res.state = std::move(anchor);
      return res;
    }
  }
  for (int pass = 0; pass < options.max_outer; ++pass) {
    SocState next = solve_soc_opf(net, &anchor, tightenings, options);
    ++res.passes;
    double delta = 0.0;
    for (std::size_t l = 0; l < next.c.size(); ++l) {
      delta = std::max({delta, std::abs(next.c[l] - anchor.c[l]), std::abs(next.s[l] - anchor.s[l])});
    }
    res.deltas.push_back(delta);
    anchor = std::move(next);
    if (delta <= options.angle_tol) {
      res.state = std::move(anchor);
      return res;
    }
  }
  throw AngleLoopError("angle linearization loop did not settle within " +
                           std::to_string(options.max_outer) + " passes",
                       res.deltas);
}

std::vector<BranchFlow> extract_flows(const SocState& state, const NetworkCase& net) {
  std::vector<BranchFlow> out;
  out.reserve(net.num_branches());
  for (std::size_t l = 0; l < net.num_branches(); ++l) {
    const auto& br = net.branches[l];
    const double ui = state.u[br.from_bus], uj = state.u[br.to_bus];
    const double c = state.c[l], s = state.s[l];
    const auto k = flow_coefs(br);
    auto dot = [&](const double* a) { return a[0] * ui + a[1] * uj + a[2] * c + a[3] * s; };
    BranchFlow f;
    f.p_ij = dot(k.p_ij);
    f.q_ij = dot(k.q_ij);
    f.p_ji = dot(k.p_ji);
    f.q_ji = dot(k.q_ji);
    f.s_ij = std::hypot(f.p_ij, f.q_ij);
    f.s_ji = std::hypot(f.p_ji, f.q_ji);
    out.push_back(f);
  }
  return out;
}

}  // namespace ccsoc
