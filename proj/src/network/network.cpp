#include <cmath>
#include <iomanip>
#include <numeric>
#include <queue>
#include <sstream>

#include "ccsoc/error.hpp"
#include "ccsoc/network.hpp"

namespace ccsoc {

std::string_view to_string(BusKind kind) {
  switch (kind) {
    case BusKind::Slack: return "slack";
    case BusKind::PV: return "pv";
    case BusKind::PQ: return "pq";
  }
  return "?";
}

double WindFarm::max_q_ratio() const {
  return std::sqrt(1.0 - pf_min * pf_min) / pf_min;
}

std::size_t NetworkCase::slack_bus() const {
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (buses[i].kind == BusKind::Slack) return i;
  }
  throw ValidationError("case has no slack bus");
}

std::size_t NetworkCase::index_of(int bus_id) const {
  auto it = bus_index.find(bus_id);
  if (it == bus_index.end()) throw ValidationError("unknown bus " + std::to_string(bus_id));
  return it->second;
}

std::vector<std::vector<std::size_t>> NetworkCase::generators_at_buses() const {
  std::vector<std::vector<std::size_t>> at(buses.size());
  for (std::size_t g = 0; g < generators.size(); ++g) at[generators[g].bus].push_back(g);
  return at;
}

std::vector<std::vector<std::size_t>> NetworkCase::wind_at_buses() const {
  std::vector<std::vector<std::size_t>> at(buses.size());
  for (std::size_t w = 0; w < wind_farms.size(); ++w) at[wind_farms[w].bus].push_back(w);
  return at;
}

bool NetworkCase::is_radial() const {
  return branches.size() + 1 == buses.size() && islands(*this).size() == 1;
}

std::size_t NetworkCase::branch_by_label(int label) const {
  for (std::size_t l = 0; l < branches.size(); ++l) {
    if (branches[l].label == label) return l;
  }
  throw ValidationError("no in-service branch with label " + std::to_string(label));
}

std::vector<std::vector<int>> islands(const NetworkCase& net) {
  const std::size_t n = net.buses.size();
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& br : net.branches) {
    if (!br.status) continue;
    adj[br.from_bus].push_back(br.to_bus);
    adj[br.to_bus].push_back(br.from_bus);
  }
  std::vector<int> component(n, -1);
  std::vector<std::vector<int>> result;
  for (std::size_t start = 0; start < n; ++start) {
    if (component[start] >= 0) continue;
    const int id = static_cast<int>(result.size());
    result.emplace_back();
    std::queue<std::size_t> queue;
    queue.push(start);
    component[start] = id;
    while (!queue.empty()) {
      auto v = queue.front();
      queue.pop();
      result.back().push_back(net.buses[v].id);
      for (auto w : adj[v]) {
        if (component[w] < 0) {
          component[w] = id;
          queue.push(w);
        }
      }
    }
  }
  return result;
}

void validate_case(const NetworkCase& net) {
  if (net.buses.empty()) throw ValidationError("case has no buses");
  std::size_t slack_count = 0;
  for (const auto& b : net.buses) {
    if (b.kind == BusKind::Slack) ++slack_count;
    if (!(b.v_min > 0.0) || b.v_min > b.v_max) {
      throw ValidationError("bus " + std::to_string(b.id) + " has invalid voltage bounds");
    }
  }
  if (slack_count == 0) throw ValidationError("case has no slack bus");
  if (slack_count > 1) throw ValidationError("case has more than one slack bus");

  const std::size_t n = net.buses.size();
  for (const auto& br : net.branches) {
    if (br.from_bus >= n || br.to_bus >= n) {
      throw ValidationError("branch " + std::to_string(br.label) + " references a missing bus");
    }
    if (br.from_bus == br.to_bus) {
      throw ValidationError("branch " + std::to_string(br.label) + " is a self loop");
    }
    if (br.s_rating < 0.0) {
      throw ValidationError("branch " + std::to_string(br.label) + " has a negative rating");
    }
  }
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    const auto& gen = net.generators[g];
    if (gen.bus >= n) throw ValidationError("generator " + std::to_string(g) + " has no bus");
    if (gen.p_min > gen.p_max || gen.q_min > gen.q_max) {
      throw ValidationError("generator " + std::to_string(g) + " at bus " +
                            std::to_string(net.buses[gen.bus].id) + " has crossed limits");
    }
  }
  for (std::size_t w = 0; w < net.wind_farms.size(); ++w) {
    const auto& wf = net.wind_farms[w];
    if (wf.bus >= n) throw ValidationError("wind farm " + std::to_string(w) + " has no bus");
    if (wf.sigma < 0.0) throw ValidationError("wind farm sigma must be nonnegative");
    if (!(wf.pf_min > 0.0 && wf.pf_min <= 1.0)) {
      throw ValidationError("wind farm power factor must lie in (0, 1]");
    }
  }

  auto parts = islands(net);
  if (parts.size() > 1) {
    std::ostringstream msg;
    msg << "network is not connected; islands:";
    for (const auto& island : parts) {
      msg << " {";
      for (std::size_t k = 0; k < island.size(); ++k) msg << (k ? "," : "") << island[k];
      msg << "}";
    }
    throw ValidationError(msg.str());
  }
}

NetworkCase apply_modifiers(NetworkCase net, double rating_scale,
                            std::span<const WindAddition> wind_additions) {
  if (!(rating_scale > 0.0 && rating_scale <= 1.0)) {
    throw ValidationError("rating scale must lie in (0, 1]");
  }
  for (auto& br : net.branches) {
    if (br.limited()) br.s_rating *= rating_scale;
  }
  for (const auto& add : wind_additions) {
    auto it = net.bus_index.find(add.bus_id);
    if (it == net.bus_index.end()) {
      throw ValidationError("wind farm bus " + std::to_string(add.bus_id) + " not in case");
    }
    WindFarm wf;
    wf.bus = it->second;
    wf.p_forecast = add.p_mw / net.base_mva;
    wf.sigma = add.sigma_mw / net.base_mva;
    wf.pf_min = add.pf_min;
    net.wind_farms.push_back(wf);
  }
  validate_case(net);
  return net;
}

FlowCoefs flow_coefs(const Branch& br) {
  const double g = br.g, b = br.b, bh = 0.5 * br.b_sh;
  const double t = br.tap, t2 = br.tap * br.tap;
  return {{g / t2, 0.0, -g / t, b / t},
          {-(b + bh) / t2, 0.0, b / t, g / t},
          {0.0, g, -g / t, -b / t},
          {0.0, -(b + bh), b / t, -g / t}};
}

Admittances branch_admittances(const NetworkCase& net) {
  Admittances y;
  const std::size_t n = net.buses.size();
  y.g_diag.assign(n, 0.0);
  y.b_diag.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    y.g_diag[i] = net.buses[i].g_shunt;
    y.b_diag[i] = net.buses[i].b_shunt;
  }
  for (const auto& br : net.branches) {
    y.branches.push_back({br.g, br.b, br.b_sh});
    const double t2 = br.tap * br.tap;
    y.g_diag[br.from_bus] += br.g / t2;
    y.b_diag[br.from_bus] += (br.b + 0.5 * br.b_sh) / t2;
    y.g_diag[br.to_bus] += br.g;
    y.b_diag[br.to_bus] += br.b + 0.5 * br.b_sh;
  }
  return y;
}

namespace {

int matpower_type(BusKind kind) {
  switch (kind) {
    case BusKind::Slack: return 3;
    case BusKind::PV: return 2;
    case BusKind::PQ: return 1;
  }
  return 1;
}

}  // namespace

std::string write_case(const NetworkCase& net) {
  std::ostringstream out;
  out << std::setprecision(17);
  const double base = net.base_mva;
  out << "function mpc = " << net.name << "\n";
  out << "% Variant: " << net.variant << "\n";
  out << "mpc.version = '2';\n";
  out << "mpc.baseMVA = " << base << ";\n";
  out << "mpc.bus = [\n";
  for (const auto& b : net.buses) {
    out << "\t" << b.id << "\t" << matpower_type(b.kind) << "\t" << b.p_load * base << "\t"
        << b.q_load * base << "\t" << b.g_shunt * base << "\t" << b.b_shunt * base << "\t1\t"
        << b.v_set << "\t0\t" << b.base_kv << "\t1\t" << b.v_max << "\t" << b.v_min << ";\n";
  }
  out << "];\n";
  out << "mpc.gen = [\n";
  for (const auto& g : net.generators) {
    out << "\t" << net.buses[g.bus].id << "\t" << g.p_set * base << "\t" << g.q_set * base
        << "\t" << g.q_max * base << "\t" << g.q_min * base << "\t" << g.v_set << "\t" << base
        << "\t1\t" << g.p_max * base << "\t" << g.p_min * base << ";\n";
  }
  out << "];\n";
  out << "mpc.branch = [\n";
  for (const auto& br : net.branches) {
    out << "\t" << net.buses[br.from_bus].id << "\t" << net.buses[br.to_bus].id << "\t" << br.r
        << "\t" << br.x << "\t" << br.b_sh << "\t" << br.s_rating * base
        << "\t0\t0\t" << (br.tap == 1.0 ? 0.0 : br.tap) << "\t0\t1\t-360\t360;\n";
  }
  out << "];\n";
  out << "mpc.gencost = [\n";
  for (const auto& g : net.generators) {
    out << "\t2\t0\t0\t2\t" << g.cost_linear << "\t" << g.cost_offset << ";\n";
  }
  out << "];\n";
  return out.str();
}

nlohmann::json case_to_json(const NetworkCase& net) {
  using nlohmann::json;
  json j;
  j["metadata"] = {{"name", net.name},
                   {"variant", net.variant},
                   {"base_mva", net.base_mva},
                   {"units", "p.u. on base_mva; costs EUR/MWh and EUR/h"},
                   {"counts",
                    {{"buses", net.buses.size()},
                     {"branches", net.branches.size()},
                     {"generators", net.generators.size()},
                     {"wind_farms", net.wind_farms.size()}}}};
  json buses = json::array();
  for (const auto& b : net.buses) {
    buses.push_back({{"id", b.id},
                     {"kind", std::string(to_string(b.kind))},
                     {"v_min", b.v_min},
                     {"v_max", b.v_max},
                     {"g_shunt", b.g_shunt},
                     {"b_shunt", b.b_shunt},
                     {"p_load", b.p_load},
                     {"q_load", b.q_load},
                     {"v_set", b.v_set}});
  }
  json branches = json::array();
  for (const auto& br : net.branches) {
    branches.push_back({{"label", br.label},
                        {"from", net.buses[br.from_bus].id},
                        {"to", net.buses[br.to_bus].id},
                        {"r", br.r},
                        {"x", br.x},
                        {"g", br.g},
                        {"b", br.b},
                        {"b_sh", br.b_sh},
                        {"tap", br.tap},
                        {"s_rating", br.s_rating}});
  }
  json gens = json::array();
  for (const auto& g : net.generators) {
    gens.push_back({{"bus", net.buses[g.bus].id},
                    {"p_min", g.p_min},
                    {"p_max", g.p_max},
                    {"q_min", g.q_min},
                    {"q_max", g.q_max},
                    {"cost_linear", g.cost_linear},
                    {"cost_offset", g.cost_offset}});
  }
  json wind = json::array();
  for (const auto& w : net.wind_farms) {
    wind.push_back({{"bus", net.buses[w.bus].id},
                    {"p_forecast", w.p_forecast},
                    {"sigma", w.sigma},
                    {"pf_min", w.pf_min}});
  }
  j["buses"] = std::move(buses);
  j["branches"] = std::move(branches);
  j["generators"] = std::move(gens);
  j["wind_farms"] = std::move(wind);
  return j;
}

}  // namespace ccsoc
