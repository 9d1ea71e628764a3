#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/SparseLU>

#include "ccsoc/error.hpp"
#include "ccsoc/sensitivities.hpp"

namespace ccsoc {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

double dot4(const double* k, double ui, double uj, double c, double s) {
  return k[0] * ui + k[1] * uj + k[2] * c + k[3] * s;
}

}  // namespace

Eigen::VectorXd soc_residuals(const NetworkCase& net, const SocState& y) {
  const std::size_t nb = net.num_buses(), nl = net.num_branches();
  Eigen::VectorXd r = Eigen::VectorXd::Zero(2 * nb + 2 * nl);
  for (std::size_t i = 0; i < nb; ++i) {
    r(i) = net.buses[i].g_shunt * y.u[i];
    r(nb + i) = -net.buses[i].b_shunt * y.u[i];
  }
  for (std::size_t l = 0; l < nl; ++l) {
    const auto& br = net.branches[l];
    const auto k = flow_coefs(br);
    const std::size_t i = br.from_bus, j = br.to_bus;
    const double ui = y.u[i], uj = y.u[j], c = y.c[l], s = y.s[l];
    r(i) += dot4(k.p_ij, ui, uj, c, s);
    r(nb + i) += dot4(k.q_ij, ui, uj, c, s);
    r(j) += dot4(k.p_ji, ui, uj, c, s);
    r(nb + j) += dot4(k.q_ji, ui, uj, c, s);
    r(2 * nb + l) = c * c + s * s - ui * uj;
    r(2 * nb + nl + l) = y.theta[j] - y.theta[i] - std::atan(s / c);
  }
  return r;
}

SocJacobian soc_jacobian(const NetworkCase& net, const SocState& anchor) {
  SocJacobian jac;
  jac.buses = net.num_buses();
  jac.branches = net.num_branches();
  jac.anchor = anchor;
  auto& y = jac.anchor;
  if (y.u.size() != jac.buses || y.c.size() != jac.branches || y.theta.size() != jac.buses) {
    throw ValidationError("anchor state does not match the case dimensions");
  }
  for (std::size_t l = 0; l < jac.branches; ++l) {
    const auto& br = net.branches[l];
    const double prod = y.u[br.from_bus] * y.u[br.to_bus];
    const double r2 = y.c[l] * y.c[l] + y.s[l] * y.s[l];
    if (prod - r2 > 1e-6 && r2 > 0.0) {
      jac.warnings.push_back("branch " + std::to_string(br.label) + ": cone slack " +
                             std::to_string(prod - r2) + " p.u.^2 at the anchor, linearized at its projection");
      const double k = std::sqrt(prod / r2);
      y.c[l] *= k;
      y.s[l] *= k;
    }
    if (std::abs(y.c[l]) < 1e-9) {
      throw SolverError("angle linearization undefined on branch " + std::to_string(br.label) +
                        ": c = 0 at the anchor");
    }
  }

  Triplets t;
  for (std::size_t i = 0; i < jac.buses; ++i) {
    t.emplace_back(jac.row_p(i), jac.col_u(i), net.buses[i].g_shunt);
    t.emplace_back(jac.row_q(i), jac.col_u(i), -net.buses[i].b_shunt);
  }
  for (std::size_t l = 0; l < jac.branches; ++l) {
    const auto& br = net.branches[l];
    const auto k = flow_coefs(br);
    const std::size_t i = br.from_bus, j = br.to_bus;
    const std::size_t cols[4] = {jac.col_u(i), jac.col_u(j), jac.col_c(l), jac.col_s(l)};
    for (int a = 0; a < 4; ++a) {
      t.emplace_back(jac.row_p(i), cols[a], k.p_ij[a]);
      t.emplace_back(jac.row_q(i), cols[a], k.q_ij[a]);
      t.emplace_back(jac.row_p(j), cols[a], k.p_ji[a]);
      t.emplace_back(jac.row_q(j), cols[a], k.q_ji[a]);
    }
    const double c = y.c[l], s = y.s[l], r2 = c * c + s * s;
    t.emplace_back(jac.row_cone(l), jac.col_c(l), 2.0 * c);
    t.emplace_back(jac.row_cone(l), jac.col_s(l), 2.0 * s);
    t.emplace_back(jac.row_cone(l), jac.col_u(i), -y.u[j]);
    t.emplace_back(jac.row_cone(l), jac.col_u(j), -y.u[i]);
    t.emplace_back(jac.row_angle(l), jac.col_theta(j), 1.0);
    t.emplace_back(jac.row_angle(l), jac.col_theta(i), -1.0);
    t.emplace_back(jac.row_angle(l), jac.col_c(l), s / r2);
    t.emplace_back(jac.row_angle(l), jac.col_s(l), -c / r2);
  }
  jac.matrix.resize(2 * jac.buses + 2 * jac.branches, 2 * jac.buses + 2 * jac.branches);
  jac.matrix.setFromTriplets(t.begin(), t.end());
  jac.matrix.prune(0.0);
  return jac;
}

Eigen::MatrixXd build_psi(const NetworkCase& net, const ResponseModel& response) {
  const std::size_t nb = net.num_buses(), nl = net.num_branches();
  const std::size_t nw = net.wind_farms.size();
  if (response.gamma.size() != net.generators.size()) {
    throw ValidationError("participation factors must be given for every generator");
  }
  if (response.lambda.size() != nw) {
    throw ValidationError("reactive ratios must be given for every wind farm");
  }
  const double sum = std::accumulate(response.gamma.begin(), response.gamma.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-10) {
    throw ValidationError("participation factors sum to " + std::to_string(sum) + ", not 1");
  }
  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(2 * nb + 2 * nl, nw);
  for (std::size_t g = 0; g < net.generators.size(); ++g) {
    psi.row(net.generators[g].bus).array() -= response.gamma[g];
  }
  for (std::size_t w = 0; w < nw; ++w) {
    const auto bus = net.wind_farms[w].bus;
    psi(bus, w) += 1.0;
    psi(nb + bus, w) += response.lambda[w];
  }
  return psi;
}

SensitivityBundle derive_upsilon(const NetworkCase& net, const SocJacobian& jac,
                                 const Eigen::MatrixXd& psi) {
  SensitivityBundle out;
  out.anchor = jac.anchor;
  out.warnings = jac.warnings;
  const std::size_t nb = jac.buses, nl = jac.branches;
  out.ref_bus = net.slack_bus();
  for (std::size_t i = 0; i < nb; ++i) {
    if (i == out.ref_bus) continue;
    (net.buses[i].kind == BusKind::PV ? out.pv_buses : out.pq_buses).push_back(i);
  }

  // Partition rows into determined responses (I) and zero-change equations (II).
  std::vector<std::size_t> rows_i{jac.row_p(out.ref_bus), jac.row_q(out.ref_bus)};
  for (auto i : out.pv_buses) rows_i.push_back(jac.row_q(i));
  std::vector<std::size_t> rows_ii;
  for (std::size_t i = 0; i < nb; ++i) {
    if (i != out.ref_bus) rows_ii.push_back(jac.row_p(i));
  }
  for (auto i : out.pq_buses) rows_ii.push_back(jac.row_q(i));
  for (std::size_t l = 0; l < nl; ++l) rows_ii.push_back(jac.row_cone(l));
  for (std::size_t l = 0; l < nl; ++l) rows_ii.push_back(jac.row_angle(l));

  std::vector<std::size_t> cols;
  for (auto i : out.pq_buses) cols.push_back(jac.col_u(i));
  for (std::size_t l = 0; l < nl; ++l) cols.push_back(jac.col_c(l));
  for (std::size_t l = 0; l < nl; ++l) cols.push_back(jac.col_s(l));
  for (auto i : out.pv_buses) cols.push_back(jac.col_theta(i));
  for (auto i : out.pq_buses) cols.push_back(jac.col_theta(i));
  if (cols.size() != rows_ii.size()) {
    throw ValidationError("sensitivity partition is not square");
  }

  const auto total = static_cast<std::size_t>(jac.matrix.rows());
  std::vector<long> col_map(total, -1), row_map_i(total, -1), row_map_ii(total, -1);
  for (std::size_t k = 0; k < cols.size(); ++k) col_map[cols[k]] = static_cast<long>(k);
  for (std::size_t k = 0; k < rows_i.size(); ++k) row_map_i[rows_i[k]] = static_cast<long>(k);
  for (std::size_t k = 0; k < rows_ii.size(); ++k) row_map_ii[rows_ii[k]] = static_cast<long>(k);

  Triplets t_iv, t_i;
  for (Eigen::Index j = 0; j < jac.matrix.outerSize(); ++j) {
    for (SparseMatrix::InnerIterator it(jac.matrix, j); it; ++it) {
      const long c = col_map[it.col()];
      if (c < 0) continue;
      if (row_map_ii[it.row()] >= 0) t_iv.emplace_back(row_map_ii[it.row()], c, it.value());
      if (row_map_i[it.row()] >= 0) t_i.emplace_back(row_map_i[it.row()], c, it.value());
    }
  }
  const auto n = static_cast<Eigen::Index>(cols.size());
  SparseMatrix j_iv(n, n), j_i(static_cast<Eigen::Index>(rows_i.size()), n);
  j_iv.setFromTriplets(t_iv.begin(), t_iv.end());
  j_i.setFromTriplets(t_i.begin(), t_i.end());

  Eigen::MatrixXd psi_ii(n, psi.cols()), psi_i(rows_i.size(), psi.cols());
  for (std::size_t k = 0; k < rows_ii.size(); ++k) psi_ii.row(k) = psi.row(rows_ii[k]);
  for (std::size_t k = 0; k < rows_i.size(); ++k) psi_i.row(k) = psi.row(rows_i[k]);

  Eigen::SparseLU<SparseMatrix> lu;
  lu.analyzePattern(j_iv);
  lu.factorize(j_iv);
  if (lu.info() != Eigen::Success) {
    throw SolverError("reduced load-flow Jacobian is singular (" + lu.lastErrorMessage() +
                      "); check for PQ buses without a path to a voltage-controlled bus");
  }
  out.upsilon_yhat = psi.cols() > 0 ? Eigen::MatrixXd(lu.solve(psi_ii)) : Eigen::MatrixXd(n, 0);
  out.upsilon_g = j_i * out.upsilon_yhat - psi_i;
  return out;
}

SensitivityBundle sensitivities(const NetworkCase& net, const SocState& anchor,
                                const ResponseModel& response) {
  return derive_upsilon(net, soc_jacobian(net, anchor), build_psi(net, response));
}

namespace {

// Position of a bus in a sorted index list, or -1.
long find_pos(const std::vector<std::size_t>& v, std::size_t x) {
  auto it = std::lower_bound(v.begin(), v.end(), x);
  return it != v.end() && *it == x ? it - v.begin() : -1;
}

}  // namespace

Eigen::RowVectorXd SensitivityBundle::row(const NetworkCase& net, const ResponseModel& response,
                                          Quantity kind, std::size_t index) const {
  const auto nw = upsilon_yhat.cols();
  const std::size_t npq = pq_buses.size(), nl = net.num_branches();
  Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(nw);
  switch (kind) {
    case Quantity::GenP: {
      r.setConstant(-response.gamma.at(index));
      const auto bus = net.generators[index].bus;
      if (bus == ref_bus) {
        double range = 0.0;
        for (const auto& g : net.generators) {
          if (g.bus == bus) range += g.p_max - g.p_min;
        }
        const auto& gen = net.generators[index];
        r += (range > 0.0 ? (gen.p_max - gen.p_min) / range : 1.0) * upsilon_g.row(0);
      }
      break;
    }
    case Quantity::GenQ: {
      const auto bus = net.generators.at(index).bus;
      Eigen::Index g_row = -1;
      if (bus == ref_bus) g_row = 1;
      if (auto k = find_pos(pv_buses, bus); k >= 0) g_row = 2 + k;
      if (g_row < 0) break;
      double range = 0.0, count = 0.0;
      for (const auto& g : net.generators) {
        if (g.bus == bus) {
          range += g.q_max - g.q_min;
          count += 1.0;
        }
      }
      const auto& gen = net.generators[index];
      r = (range > 0.0 ? (gen.q_max - gen.q_min) / range : 1.0 / count) * upsilon_g.row(g_row);
      break;
    }
    case Quantity::WindQ:
      break;
    case Quantity::BusU:
      if (auto k = find_pos(pq_buses, index); k >= 0) r = upsilon_yhat.row(k);
      break;
    case Quantity::BranchC:
      r = upsilon_yhat.row(npq + index);
      break;
    case Quantity::BranchS:
      r = upsilon_yhat.row(npq + nl + index);
      break;
  }
  return r;
}

std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd> SensitivityBundle::flow_rows(
    const NetworkCase& net, LineDirection ld) const {
  const auto& br = net.branches.at(ld.branch);
  const auto k = flow_coefs(br);
  const std::size_t npq = pq_buses.size(), nl = net.num_branches();
  const bool fwd = ld.direction == FlowDirection::Forward;
  const double* kp = fwd ? k.p_ij : k.p_ji;
  const double* kq = fwd ? k.q_ij : k.q_ji;
  const auto nw = upsilon_yhat.cols();
  Eigen::RowVectorXd du_i = Eigen::RowVectorXd::Zero(nw), du_j = Eigen::RowVectorXd::Zero(nw);
  if (auto p = find_pos(pq_buses, br.from_bus); p >= 0) du_i = upsilon_yhat.row(p);
  if (auto p = find_pos(pq_buses, br.to_bus); p >= 0) du_j = upsilon_yhat.row(p);
  const Eigen::RowVectorXd dc = upsilon_yhat.row(npq + ld.branch);
  const Eigen::RowVectorXd ds = upsilon_yhat.row(npq + nl + ld.branch);
  Eigen::RowVectorXd rp = kp[0] * du_i + kp[1] * du_j + kp[2] * dc + kp[3] * ds;
  Eigen::RowVectorXd rq = kq[0] * du_i + kq[1] * du_j + kq[2] * dc + kq[3] * ds;
  return {rp, rq};
}

SocState SensitivityBundle::delta(const NetworkCase& net, const Eigen::VectorXd& xi) const {
  const std::size_t nb = net.num_buses(), nl = net.num_branches();
  const std::size_t npq = pq_buses.size(), npv = pv_buses.size();
  const Eigen::VectorXd d = upsilon_yhat * xi;
  SocState out;
  out.u.assign(nb, 0.0);
  out.theta.assign(nb, 0.0);
  out.c.resize(nl);
  out.s.resize(nl);
  for (std::size_t k = 0; k < npq; ++k) out.u[pq_buses[k]] = d(k);
  for (std::size_t l = 0; l < nl; ++l) {
    out.c[l] = d(npq + l);
    out.s[l] = d(npq + nl + l);
  }
  for (std::size_t k = 0; k < npv; ++k) out.theta[pv_buses[k]] = d(npq + 2 * nl + k);
  for (std::size_t k = 0; k < npq; ++k) out.theta[pq_buses[k]] = d(npq + 2 * nl + npv + k);
  return out;
}

Eigen::MatrixXd ptdf(const NetworkCase& net, std::size_t slack) {
  const auto nb = static_cast<Eigen::Index>(net.num_buses());
  const auto nl = static_cast<Eigen::Index>(net.num_branches());
  if (slack >= net.num_buses()) throw ValidationError("PTDF slack index out of range");
  Eigen::MatrixXd bbus = Eigen::MatrixXd::Zero(nb, nb);
  for (const auto& br : net.branches) {
    if (br.x == 0.0) {
      throw ValidationError("branch " + std::to_string(br.label) + " has zero reactance");
    }
    const double y = 1.0 / (br.x * br.tap);
    bbus(br.from_bus, br.from_bus) += y;
    bbus(br.to_bus, br.to_bus) += y;
    bbus(br.from_bus, br.to_bus) -= y;
    bbus(br.to_bus, br.from_bus) -= y;
  }
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < nb; ++i) {
    if (i != static_cast<Eigen::Index>(slack)) keep.push_back(i);
  }
  const auto m = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd red(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) red(a, b) = bbus(keep[a], keep[b]);
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(red);
  if (m > 0 && !lu.isInvertible()) {
    throw ValidationError("PTDF needs a connected network");
  }
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(nb, nb);
  if (m > 0) {
    const Eigen::MatrixXd inv = lu.inverse();
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) x(keep[a], keep[b]) = inv(a, b);
    }
  }
  Eigen::MatrixXd out(nl, nb);
  for (Eigen::Index l = 0; l < nl; ++l) {
    const auto& br = net.branches[l];
    out.row(l) = (x.row(br.from_bus) - x.row(br.to_bus)) / (br.x * br.tap);
  }
  return out;
}

}  // namespace ccsoc
