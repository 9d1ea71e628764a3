#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ccsoc/network.hpp"
#include "ccsoc/sampling.hpp"
#include "ccsoc/sensitivities.hpp"
#include "ccsoc/soc_opf.hpp"

namespace ccsoc {

/// Inverse standard normal CDF. Throws ValidationError outside (0, 1).
double gaussian_quantile(double p);

using QuantileFn = std::function<double(double)>;

struct UncertaintySpec {
  Eigen::MatrixXd sigma;       // |W| x |W|, p.u.^2
  double epsilon = 0.05;
  std::vector<double> gamma;   // per generator, sums to 1
  /// Weight per critical line direction; nullopt enforces both sides at 1 - epsilon.
  std::map<LineDirection, std::optional<double>> beta;
  std::optional<double> default_beta = 0.5;
  QuantileFn quantile = gaussian_quantile;

  std::optional<double> beta_for(LineDirection ld) const;
  void validate(const NetworkCase& net) const;
  nlohmann::json to_json(const NetworkCase& net) const;
};

/// Participation proportional to installed capacity p_max.
std::vector<double> capacity_participation(const NetworkCase& net);

/// Sigma from per-farm standard deviations (p.u.) and a correlation matrix
/// (identity when empty).
Eigen::MatrixXd covariance(const std::vector<double>& sigmas, const Eigen::MatrixXd& correlation = {});

/// UncertaintySpec from the uncertainty section of a run config: "epsilon", "sigma" (full matrix in p.u.^2)
/// or per-farm sigmas from the case with optional "correlation", "gamma" (or "capacity"),
/// "beta": {"default": 0.5 | null, "lines": [{"branch", "direction", "value"}]}.
UncertaintySpec uncertainty_from_json(const nlohmann::json& j, const NetworkCase& net);

/// Omega = quantile(1 - epsilon) * sqrt(row Sigma row').
double uncertainty_margin(const Eigen::RowVectorXd& row, const Eigen::MatrixXd& sigma, double epsilon,
                          const QuantileFn& quantile = gaussian_quantile);

/// [lower + omega, upper - omega]; throws InfeasibleTighteningError when crossed.
std::pair<double, double> tighten_bound(double lower, double upper, double omega,
                                        const std::string& quantity);

/// Margins of |P| <= kP and |Q| <= kQ at 1 - beta*eps and 1 - (1-beta)*eps, or both
/// at 1 - eps without beta.
FlowChanceMargins two_sided_flow_margins(const Eigen::RowVectorXd& row_p, const Eigen::RowVectorXd& row_q,
                                         const Eigen::MatrixXd& sigma, double epsilon,
                                         std::optional<double> beta,
                                         const QuantileFn& quantile = gaussian_quantile);

struct CriticalLineSet {
  std::set<LineDirection> entries;
  std::vector<std::vector<LineDirection>> history;  // additions per screening call

  bool contains(LineDirection ld) const { return entries.count(ld) > 0; }
};

/// Vertices of the box +-quantile(1 - eps/2) * sqrt(diag Sigma), one per sign pattern.
std::vector<Eigen::VectorXd> screening_vertices(const UncertaintySpec& spec);

/// Flags limited lines whose active flow at some vertex exceeds the rating
/// (anchor flow plus PTDF times the injection change). Returns the new entries.
std::vector<LineDirection> screen_critical_lines(const NetworkCase& net, const SocState& anchor,
                                                 const UncertaintySpec& spec, const Eigen::MatrixXd& ptdf,
                                                 CriticalLineSet& set);

/// Response model at an operating point: participation factors, wind Q/P ratio of the anchor.
ResponseModel response_model(const NetworkCase& net, const SocState& anchor, const UncertaintySpec& spec);

/// Omega for every bounded quantity plus two-sided margins for the critical lines.
TighteningSet compute_tightenings(const NetworkCase& net, const SensitivityBundle& bundle,
                                  const ResponseModel& response, const UncertaintySpec& spec,
                                  const CriticalLineSet& critical);

/// Largest absolute difference over the union of keys; a key missing on one side counts
/// with its full magnitude.
double margin_delta(const TighteningSet& a, const TighteningSet& b);

/// Monte-Carlo check of a linear model: constraint k holds when
/// lower_k <= offset_k + rows_k . xi <= upper_k.
struct LinearMcResult {
  std::size_t samples = 0;
  std::vector<std::uint64_t> violations;  // per row
  std::uint64_t joint = 0;                // samples with at least one violated row
};

LinearMcResult linear_model_mc(const Eigen::MatrixXd& rows, const Eigen::VectorXd& offset,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                               const Eigen::MatrixXd& sigma, std::size_t samples, std::uint64_t seed,
                               Execution exec = Execution::Parallel);

}  // namespace ccsoc
