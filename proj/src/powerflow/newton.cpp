#include <algorithm>
#include <cmath>

#include <Eigen/SparseLU>

#include "ccsoc/error.hpp"
#include "ccsoc/powerflow.hpp"

namespace ccsoc {
namespace {

using Complex = std::complex<double>;
using CSpMat = Eigen::SparseMatrix<Complex>;

constexpr Complex kJ{0.0, 1.0};

// Splits `total` over generators in proportion to their capability ranges,
// starting from the lower limits; equal split when all ranges are zero.
void share_by_range(std::span<const std::size_t> gens, double total,
                    const std::vector<double>& lo, const std::vector<double>& hi,
                    std::vector<double>& out) {
  if (gens.empty()) return;
  double lo_sum = 0.0, range = 0.0;
  for (auto g : gens) {
    lo_sum += lo[g];
    range += hi[g] - lo[g];
  }
  if (range <= 0.0 || !std::isfinite(range)) {
    for (auto g : gens) out[g] = total / static_cast<double>(gens.size());
    return;
  }
  const double t = (total - lo_sum) / range;
  for (auto g : gens) out[g] = lo[g] + t * (hi[g] - lo[g]);
}

// Adds `delta` to the current values in proportion to the capability ranges.
void shift_by_range(std::span<const std::size_t> gens, double delta,
                    const std::vector<double>& lo, const std::vector<double>& hi,
                    std::vector<double>& out) {
  if (gens.empty()) return;
  double range = 0.0;
  for (auto g : gens) range += hi[g] - lo[g];
  for (auto g : gens) {
    const double w = range > 0.0 ? (hi[g] - lo[g]) / range : 1.0 / static_cast<double>(gens.size());
    out[g] += w * delta;
  }
}

}  // namespace

PowerFlowSeed PowerFlowSeed::flat(const NetworkCase& net) {
  PowerFlowSeed seed;
  seed.v_ang.assign(net.num_buses(), 0.0);
  for (const auto& b : net.buses) seed.v_mag.push_back(b.kind == BusKind::PQ ? 1.0 : b.v_set);
  for (const auto& g : net.generators) {
    seed.p_gen.push_back(g.p_set);
    seed.q_gen.push_back(g.q_set);
  }
  seed.slack_bus = net.slack_bus();
  return seed;
}

PowerFlowModel::PowerFlowModel(const NetworkCase& net) : net_(net) {
  const auto n = static_cast<Eigen::Index>(net.num_buses());
  std::vector<Eigen::Triplet<Complex>> t;
  for (Eigen::Index i = 0; i < n; ++i) {
    t.emplace_back(i, i, Complex(net.buses[i].g_shunt, net.buses[i].b_shunt));
  }
  for (const auto& br : net.branches) {
    if (!br.status) continue;
    const Complex y(br.g, br.b);
    const Complex ysh(0.0, 0.5 * br.b_sh);
    const auto f = static_cast<Eigen::Index>(br.from_bus);
    const auto k = static_cast<Eigen::Index>(br.to_bus);
    t.emplace_back(f, f, (y + ysh) / (br.tap * br.tap));
    t.emplace_back(k, k, y + ysh);
    t.emplace_back(f, k, -y / br.tap);
    t.emplace_back(k, f, -y / br.tap);
  }
  ybus_.resize(n, n);
  ybus_.setFromTriplets(t.begin(), t.end());
  ybus_.makeCompressed();
}

PowerFlowSolution PowerFlowModel::solve(const PowerFlowSeed& seed, double tol, int max_iter,
                                        std::span<const BusKind> kinds_override) const {
  const auto& net = net_;
  const std::size_t n = net.num_buses();
  if (seed.v_mag.size() != n || seed.v_ang.size() != n ||
      seed.p_gen.size() != net.generators.size() || seed.q_gen.size() != net.generators.size()) {
    throw ValidationError("power flow seed does not match the case dimensions");
  }
  for (double v : seed.v_mag) {
    if (!(v > 0.0)) throw ValidationError("power flow seed has a nonpositive voltage");
  }

  std::vector<BusKind> kinds(net.num_buses());
  if (!kinds_override.empty()) {
    kinds.assign(kinds_override.begin(), kinds_override.end());
  } else {
    for (std::size_t i = 0; i < n; ++i) kinds[i] = net.buses[i].kind;
    const auto case_slack = net.slack_bus();
    if (seed.slack_bus != case_slack) {
      kinds[case_slack] = BusKind::PV;
      kinds[seed.slack_bus] = BusKind::Slack;
    }
  }

  // Specified injections.
  std::vector<Complex> s_spec(n);
  for (std::size_t i = 0; i < n; ++i) s_spec[i] = -Complex(net.buses[i].p_load, net.buses[i].q_load);
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    s_spec[net.generators[g].bus] += Complex(seed.p_gen[g], seed.q_gen[g]);
  }
  std::vector<double> p_wind(net.wind_farms.size()), q_wind(net.wind_farms.size(), 0.0);
  for (std::size_t w = 0; w < net.wind_farms.size(); ++w) {
    p_wind[w] = seed.p_wind.empty() ? net.wind_farms[w].p_forecast : seed.p_wind.at(w);
    if (!seed.q_wind.empty()) q_wind[w] = seed.q_wind.at(w);
    s_spec[net.wind_farms[w].bus] += Complex(p_wind[w], q_wind[w]);
  }

  // Unknown ordering: angles of PV and PQ buses, then magnitudes of PQ buses.
  std::vector<int> pos_a(n, -1), pos_m(n, -1);
  int npvpq = 0, npq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (kinds[i] != BusKind::Slack) pos_a[i] = npvpq++;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (kinds[i] == BusKind::PQ) pos_m[i] = npvpq + npq++;
  }
  const int dim = npvpq + npq;

  Eigen::VectorXd vm = Eigen::Map<const Eigen::VectorXd>(seed.v_mag.data(), n);
  Eigen::VectorXd va = Eigen::Map<const Eigen::VectorXd>(seed.v_ang.data(), n);
  Eigen::VectorXcd v(n);
  auto refresh_v = [&] {
    for (std::size_t i = 0; i < n; ++i) v(i) = std::polar(vm(i), va(i));
  };

  Eigen::VectorXd mismatch(dim);
  auto evaluate = [&]() {
    Eigen::VectorXcd ibus = ybus_ * v;
    for (std::size_t i = 0; i < n; ++i) {
      const Complex s = v(i) * std::conj(ibus(i)) - s_spec[i];
      if (pos_a[i] >= 0) mismatch(pos_a[i]) = s.real();
      if (pos_m[i] >= 0) mismatch(pos_m[i]) = s.imag();
    }
    return dim ? mismatch.lpNorm<Eigen::Infinity>() : 0.0;
  };

  PowerFlowSolution sol;
  refresh_v();
  double norm = evaluate();
  sol.iterations = 1;
  Eigen::VectorXd best_vm = vm, best_va = va;
  double best_norm = norm;

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool analyzed = false;
  int steps = 0;
  while (std::isfinite(norm) && norm > tol && steps < max_iter) {
    Eigen::VectorXcd ibus = ybus_ * v;
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(ybus_.nonZeros()) * 4);
    for (Eigen::Index k = 0; k < ybus_.outerSize(); ++k) {
      for (CSpMat::InnerIterator it(ybus_, k); it; ++it) {
        const auto i = static_cast<std::size_t>(it.row());
        const auto j = static_cast<std::size_t>(it.col());
        const Complex yv = it.value() * v(j);
        Complex ds_da, ds_dm;
        if (i == j) {
          ds_da = kJ * v(i) * std::conj(ibus(i) - yv);
          ds_dm = v(i) * std::conj(yv / vm(i)) + std::conj(ibus(i)) * v(i) / vm(i);
        } else {
          ds_da = -kJ * v(i) * std::conj(yv);
          ds_dm = v(i) * std::conj(yv / vm(j));
        }
        if (pos_a[i] >= 0 && pos_a[j] >= 0) t.emplace_back(pos_a[i], pos_a[j], ds_da.real());
        if (pos_a[i] >= 0 && pos_m[j] >= 0) t.emplace_back(pos_a[i], pos_m[j], ds_dm.real());
        if (pos_m[i] >= 0 && pos_a[j] >= 0) t.emplace_back(pos_m[i], pos_a[j], ds_da.imag());
        if (pos_m[i] >= 0 && pos_m[j] >= 0) t.emplace_back(pos_m[i], pos_m[j], ds_dm.imag());
      }
    }
    Eigen::SparseMatrix<double> jac(dim, dim);
    jac.setFromTriplets(t.begin(), t.end());
    jac.makeCompressed();
    if (!analyzed) {
      lu.analyzePattern(jac);
      analyzed = true;
    }
    lu.factorize(jac);
    if (lu.info() != Eigen::Success) throw SolverError("singular power flow Jacobian");
    Eigen::VectorXd dx = lu.solve(mismatch);
    for (std::size_t i = 0; i < n; ++i) {
      if (pos_a[i] >= 0) va(i) -= dx(pos_a[i]);
      if (pos_m[i] >= 0) vm(i) -= dx(pos_m[i]);
    }
    ++steps;
    refresh_v();
    norm = evaluate();
    ++sol.iterations;
    if (!std::isfinite(norm) || (vm.array() <= 0.0).any()) {
      norm = std::numeric_limits<double>::infinity();
      break;
    }
    if (norm < best_norm) {
      best_norm = norm;
      best_vm = vm;
      best_va = va;
    }
  }
  if (!std::isfinite(norm)) {
    vm = best_vm;
    va = best_va;
    refresh_v();
    norm = evaluate();
  }

  sol.converged = norm <= tol;
  sol.max_mismatch = norm;
  sol.kinds = kinds;
  for (std::size_t i = 0; i < n; ++i) {
    if (kinds[i] == BusKind::Slack) sol.slack_bus = i;
  }
  sol.v_mag.assign(vm.data(), vm.data() + n);
  sol.v_ang.assign(va.data(), va.data() + n);
  Eigen::VectorXcd ibus = ybus_ * v;
  sol.p_inj.resize(n);
  sol.q_inj.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Complex s = v(i) * std::conj(ibus(i));
    sol.p_inj[i] = s.real();
    sol.q_inj[i] = s.imag();
  }

  // Generator pickup: slack takes the P residual, regulated buses take Q.
  sol.p_gen = seed.p_gen;
  sol.q_gen = seed.q_gen;
  std::vector<double> p_lo, p_hi, q_lo, q_hi;
  for (const auto& g : net.generators) {
    p_lo.push_back(g.p_min);
    p_hi.push_back(g.p_max);
    q_lo.push_back(g.q_min);
    q_hi.push_back(g.q_max);
  }
  const auto gens_at = net.generators_at_buses();
  const auto wind_at = net.wind_at_buses();
  for (std::size_t i = 0; i < n; ++i) {
    if (kinds[i] == BusKind::PQ || gens_at[i].empty()) continue;
    double wind_p = 0.0, wind_q = 0.0;
    for (auto w : wind_at[i]) {
      wind_p += p_wind[w];
      wind_q += q_wind[w];
    }
    const double q_need = sol.q_inj[i] + net.buses[i].q_load - wind_q;
    share_by_range(gens_at[i], q_need, q_lo, q_hi, sol.q_gen);
    if (kinds[i] == BusKind::Slack) {
      double p_now = 0.0;
      for (auto g : gens_at[i]) p_now += seed.p_gen[g];
      const double p_need = sol.p_inj[i] + net.buses[i].p_load - wind_p;
      shift_by_range(gens_at[i], p_need - p_now, p_lo, p_hi, sol.p_gen);
    }
  }
  sol.branch_flows = branch_flows(net, sol.v_mag, sol.v_ang);
  return sol;
}

PowerFlowSolution solve_power_flow(const NetworkCase& net, const PowerFlowSeed& seed, double tol,
                                   int max_iter) {
  return PowerFlowModel(net).solve(seed, tol, max_iter);
}

std::vector<BranchFlow> branch_flows(const NetworkCase& net, std::span<const double> v_mag,
                                     std::span<const double> v_ang) {
  std::vector<BranchFlow> flows;
  flows.reserve(net.num_branches());
  for (const auto& br : net.branches) {
    const double vi = v_mag[br.from_bus], vj = v_mag[br.to_bus];
    const double u_i = vi * vi, u_j = vj * vj;
    const double dth = v_ang[br.from_bus] - v_ang[br.to_bus];
    const double c = vi * vj * std::cos(dth);
    const double s = -vi * vj * std::sin(dth);
    const auto k = flow_coefs(br);
    auto dot = [&](const double* a) { return a[0] * u_i + a[1] * u_j + a[2] * c + a[3] * s; };
    BranchFlow f;
    f.p_ij = dot(k.p_ij);
    f.q_ij = dot(k.q_ij);
    f.p_ji = dot(k.p_ji);
    f.q_ji = dot(k.q_ji);
    f.s_ij = std::hypot(f.p_ij, f.q_ij);
    f.s_ji = std::hypot(f.p_ji, f.q_ji);
    flows.push_back(f);
  }
  return flows;
}

double generation_cost(const NetworkCase& net, std::span<const double> p_gen) {
  double cost = 0.0;
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    cost += net.generators[g].cost_linear * p_gen[g] * net.base_mva + net.generators[g].cost_offset;
  }
  return cost;
}

}  // namespace ccsoc
