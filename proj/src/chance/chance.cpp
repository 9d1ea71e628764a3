#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "ccsoc/chance.hpp"
#include "ccsoc/error.hpp"

namespace ccsoc {

double gaussian_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw ValidationError("quantile argument " + std::to_string(p) + " outside (0, 1)");
  }
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

std::optional<double> UncertaintySpec::beta_for(LineDirection ld) const {
  auto it = beta.find(ld);
  return it == beta.end() ? default_beta : it->second;
}

void UncertaintySpec::validate(const NetworkCase& net) const {
  const auto nw = static_cast<Eigen::Index>(net.wind_farms.size());
  if (sigma.rows() != nw || sigma.cols() != nw) {
    throw ValidationError("covariance must be " + std::to_string(nw) + " x " + std::to_string(nw));
  }
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ValidationError("epsilon must lie in (0, 1)");
  if (gamma.size() != net.generators.size()) {
    throw ValidationError("participation factors must be given for every generator");
  }
  const double sum = std::accumulate(gamma.begin(), gamma.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-10) {
    throw ValidationError("participation factors sum to " + std::to_string(sum) + ", not 1");
  }
  auto check_beta = [](const std::optional<double>& b) {
    if (b && !(*b > 0.0 && *b < 1.0)) throw ValidationError("beta must lie in (0, 1)");
  };
  check_beta(default_beta);
  for (const auto& [ld, b] : beta) check_beta(b);
  GaussianSampler check(sigma);  // symmetry and semidefiniteness
}

nlohmann::json UncertaintySpec::to_json(const NetworkCase& net) const {
  using nlohmann::json;
  json s = json::array();
  for (Eigen::Index i = 0; i < sigma.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < sigma.cols(); ++j) row.push_back(sigma(i, j));
    s.push_back(row);
  }
  json lines = json::array();
  for (const auto& [ld, b] : beta) {
    lines.push_back({{"branch", net.branches[ld.branch].label},
                     {"direction", std::string(to_string(ld.direction))},
                     {"value", b ? json(*b) : json(nullptr)}});
  }
  return {{"epsilon", epsilon},
          {"sigma_pu2", s},
          {"gamma", gamma},
          {"beta", {{"default", default_beta ? json(*default_beta) : json(nullptr)}, {"lines", lines}}}};
}

std::vector<double> capacity_participation(const NetworkCase& net) {
  double total = 0.0;
  for (const auto& g : net.generators) total += g.p_max;
  if (total <= 0.0) throw ValidationError("no installed generation capacity for participation");
  std::vector<double> gamma;
  for (const auto& g : net.generators) gamma.push_back(g.p_max / total);
  return gamma;
}

Eigen::MatrixXd covariance(const std::vector<double>& sigmas, const Eigen::MatrixXd& correlation) {
  const auto n = static_cast<Eigen::Index>(sigmas.size());
  Eigen::MatrixXd corr = correlation.size() == 0 ? Eigen::MatrixXd::Identity(n, n) : correlation;
  if (corr.rows() != n || corr.cols() != n) throw ValidationError("correlation matrix has wrong size");
  const Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(sigmas.data(), n);
  return s.asDiagonal() * corr * s.asDiagonal();
}

namespace {

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto n = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (j[r].size() != static_cast<std::size_t>(n)) throw ValidationError("matrix must be square");
    for (Eigen::Index c = 0; c < n; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

UncertaintySpec uncertainty_from_json(const nlohmann::json& j, const NetworkCase& net) {
  UncertaintySpec spec;
  try {
    spec.epsilon = j.value("epsilon", 0.05);
    if (j.contains("sigma")) {
      spec.sigma = matrix_from_json(j.at("sigma"));
    } else {
      std::vector<double> sig;
      for (const auto& w : net.wind_farms) sig.push_back(w.sigma);
      spec.sigma = covariance(sig, j.contains("correlation") ? matrix_from_json(j.at("correlation"))
                                                             : Eigen::MatrixXd());
    }
    if (j.contains("gamma") && j.at("gamma").is_array()) {
      spec.gamma = j.at("gamma").get<std::vector<double>>();
    } else {
      spec.gamma = capacity_participation(net);
    }
    if (j.contains("beta")) {
      const auto& b = j.at("beta");
      if (b.contains("default")) {
        spec.default_beta = b.at("default").is_null() ? std::nullopt
                                                      : std::optional<double>(b.at("default").get<double>());
      }
      for (const auto& line : b.value("lines", nlohmann::json::array())) {
        const auto l = net.branch_by_label(line.at("branch").get<int>());
        const auto dir = line.value("direction", std::string("both"));
        const auto& v = line.at("value");
        const std::optional<double> value = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
        if (dir == "forward" || dir == "both") spec.beta[{l, FlowDirection::Forward}] = value;
        if (dir == "reverse" || dir == "both") spec.beta[{l, FlowDirection::Reverse}] = value;
        if (dir != "forward" && dir != "reverse" && dir != "both") {
          throw ValidationError("beta direction must be forward, reverse or both");
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid uncertainty section: ") + e.what());
  }
  spec.validate(net);
  return spec;
}

double uncertainty_margin(const Eigen::RowVectorXd& row, const Eigen::MatrixXd& sigma, double epsilon,
                          const QuantileFn& quantile) {
  if (row.size() != sigma.rows()) throw ValidationError("sensitivity row does not match covariance");
  if (row.size() == 0) return 0.0;
  const double qf = row * sigma * row.transpose();
  const double scale = row.squaredNorm() * std::max(1e-300, sigma.cwiseAbs().maxCoeff());
  if (qf < -1e-12 * scale) throw ValidationError("covariance gives a negative variance");
  if (qf <= 0.0) return 0.0;
  return quantile(1.0 - epsilon) * std::sqrt(qf);
}

std::pair<double, double> tighten_bound(double lower, double upper, double omega,
                                        const std::string& quantity) {
  if (omega < 0.0) throw ValidationError("negative margin for " + quantity);
  const double lo = lower + omega, hi = upper - omega;
  if (lo > hi) throw InfeasibleTighteningError(quantity, lo, hi);
  return {lo, hi};
}

FlowChanceMargins two_sided_flow_margins(const Eigen::RowVectorXd& row_p, const Eigen::RowVectorXd& row_q,
                                         const Eigen::MatrixXd& sigma, double epsilon,
                                         std::optional<double> beta, const QuantileFn& quantile) {
  FlowChanceMargins m;
  if (beta) {
    if (!(*beta > 0.0 && *beta < 1.0)) throw ValidationError("beta must lie in (0, 1)");
    m.beta = *beta;
    m.margin_p = uncertainty_margin(row_p, sigma, *beta * epsilon, quantile);
    m.margin_q = uncertainty_margin(row_q, sigma, (1.0 - *beta) * epsilon, quantile);
  } else {
    m.beta = 0.0;
    m.margin_p = uncertainty_margin(row_p, sigma, epsilon, quantile);
    m.margin_q = uncertainty_margin(row_q, sigma, epsilon, quantile);
  }
  return m;
}

std::vector<Eigen::VectorXd> screening_vertices(const UncertaintySpec& spec) {
  const auto nw = spec.sigma.rows();
  const double q = spec.quantile(1.0 - spec.epsilon / 2.0);
  Eigen::VectorXd half(nw);
  for (Eigen::Index w = 0; w < nw; ++w) half(w) = q * std::sqrt(std::max(0.0, spec.sigma(w, w)));
  std::vector<Eigen::VectorXd> out;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << nw); ++mask) {
    Eigen::VectorXd v(nw);
    for (Eigen::Index w = 0; w < nw; ++w) v(w) = (mask >> w & 1) ? -half(w) : half(w);
    out.push_back(std::move(v));
  }
  return out;
}

std::vector<LineDirection> screen_critical_lines(const NetworkCase& net, const SocState& anchor,
                                                 const UncertaintySpec& spec, const Eigen::MatrixXd& ptdf,
                                                 CriticalLineSet& set) {
  const auto flows = extract_flows(anchor, net);
  const auto nb = static_cast<Eigen::Index>(net.num_buses());
  std::vector<LineDirection> added;
  for (const auto& kappa : screening_vertices(spec)) {
    if (kappa.isZero()) continue;
    Eigen::VectorXd dp = Eigen::VectorXd::Zero(nb);
    const double total = kappa.sum();
    for (std::size_t w = 0; w < net.wind_farms.size(); ++w) dp(net.wind_farms[w].bus) += kappa(w);
    for (std::size_t g = 0; g < net.generators.size(); ++g) {
      dp(net.generators[g].bus) -= spec.gamma[g] * total;
    }
    const Eigen::VectorXd dflow = ptdf * dp;
    for (std::size_t l = 0; l < net.num_branches(); ++l) {
      const auto& br = net.branches[l];
      if (!br.limited()) continue;
      const auto k = static_cast<Eigen::Index>(l);
      const LineDirection fwd{l, FlowDirection::Forward}, rev{l, FlowDirection::Reverse};
      if (flows[l].p_ij + dflow(k) > br.s_rating && set.entries.insert(fwd).second) added.push_back(fwd);
      if (flows[l].p_ji - dflow(k) > br.s_rating && set.entries.insert(rev).second) added.push_back(rev);
    }
  }
  std::sort(added.begin(), added.end());
  set.history.push_back(added);
  return added;
}

ResponseModel response_model(const NetworkCase& net, const SocState& anchor, const UncertaintySpec& spec) {
  ResponseModel r;
  r.gamma = spec.gamma;
  for (std::size_t w = 0; w < net.wind_farms.size(); ++w) {
    const double p = net.wind_farms[w].p_forecast;
    r.lambda.push_back(p != 0.0 ? anchor.q_wind.at(w) / p : 0.0);
  }
  return r;
}

TighteningSet compute_tightenings(const NetworkCase& net, const SensitivityBundle& bundle,
                                  const ResponseModel& response, const UncertaintySpec& spec,
                                  const CriticalLineSet& critical) {
  TighteningSet t;
  auto put = [&](Quantity kind, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      t.bounds[{kind, i}] =
          uncertainty_margin(bundle.row(net, response, kind, i), spec.sigma, spec.epsilon, spec.quantile);
    }
  };
  put(Quantity::GenP, net.generators.size());
  put(Quantity::GenQ, net.generators.size());
  put(Quantity::WindQ, net.wind_farms.size());
  put(Quantity::BusU, net.num_buses());
  put(Quantity::BranchC, net.num_branches());
  put(Quantity::BranchS, net.num_branches());
  for (const auto& ld : critical.entries) {
    const auto [rp, rq] = bundle.flow_rows(net, ld);
    t.flows[ld] = two_sided_flow_margins(rp, rq, spec.sigma, spec.epsilon, spec.beta_for(ld), spec.quantile);
  }
  return t;
}

double margin_delta(const TighteningSet& a, const TighteningSet& b) {
  double d = 0.0;
  for (const auto& [k, v] : a.bounds) {
    auto it = b.bounds.find(k);
    d = std::max(d, std::abs(v - (it == b.bounds.end() ? 0.0 : it->second)));
  }
  for (const auto& [k, v] : b.bounds) {
    if (!a.bounds.count(k)) d = std::max(d, std::abs(v));
  }
  for (const auto& [k, m] : a.flows) {
    auto it = b.flows.find(k);
    if (it == b.flows.end()) {
      d = std::max({d, std::abs(m.margin_p), std::abs(m.margin_q)});
    } else {
      d = std::max({d, std::abs(m.margin_p - it->second.margin_p), std::abs(m.margin_q - it->second.margin_q)});
    }
  }
  for (const auto& [k, m] : b.flows) {
    if (!a.flows.count(k)) d = std::max({d, std::abs(m.margin_p), std::abs(m.margin_q)});
  }
  return d;
}

LinearMcResult linear_model_mc(const Eigen::MatrixXd& rows, const Eigen::VectorXd& offset,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                               const Eigen::MatrixXd& sigma, std::size_t samples, std::uint64_t seed,
                               Execution exec) {
  const GaussianSampler sampler(sigma);
  const auto k = rows.rows();
  if (rows.cols() != sigma.rows() || offset.size() != k || lower.size() != k || upper.size() != k) {
    throw ValidationError("linear model dimensions do not agree");
  }
  const auto blocks = static_cast<std::int64_t>((samples + kSampleBlock - 1) / kSampleBlock);
  // Per-block integer tallies, summed in block order: identical for any schedule.
  std::vector<std::vector<std::uint64_t>> tally(static_cast<std::size_t>(blocks),
                                                std::vector<std::uint64_t>(k + 1, 0));
  auto run = [&](std::int64_t b) {
    const auto start = b * static_cast<std::int64_t>(kSampleBlock);
    const auto count = std::min<std::int64_t>(kSampleBlock, static_cast<std::int64_t>(samples) - start);
    Eigen::MatrixXd xi(count, sigma.rows());
    sampler.fill_block(seed, static_cast<std::uint64_t>(b), xi);
    const Eigen::MatrixXd y = (xi * rows.transpose()).rowwise() + offset.transpose();
    auto& out = tally[static_cast<std::size_t>(b)];
    for (Eigen::Index s = 0; s < count; ++s) {
      bool any = false;
      for (Eigen::Index r = 0; r < k; ++r) {
        if (y(s, r) > upper(r) || y(s, r) < lower(r)) {
          ++out[r];
          any = true;
        }
      }
      if (any) ++out[k];
    }
  };
  if (exec == Execution::Parallel) {
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t b = 0; b < blocks; ++b) run(b);
  } else {
    for (std::int64_t b = 0; b < blocks; ++b) run(b);
  }
  LinearMcResult res;
  res.samples = samples;
  res.violations.assign(k, 0);
  for (const auto& t : tally) {
    for (Eigen::Index r = 0; r < k; ++r) res.violations[r] += t[r];
    res.joint += t[k];
  }
  return res;
}

}  // namespace ccsoc
