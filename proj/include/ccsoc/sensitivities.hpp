#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "ccsoc/network.hpp"
#include "ccsoc/soc_opf.hpp"

namespace ccsoc {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Rows: P balance (buses), Q balance (buses), cone equality (branches), angle (branches).
/// Columns: u (buses), c (branches), s (branches), theta (buses).
struct SocJacobian {
  SparseMatrix matrix;
  std::size_t buses = 0;
  std::size_t branches = 0;
  SocState anchor;  // c, s rescaled onto the cone where it was loose
  std::vector<std::string> warnings;

  std::size_t row_p(std::size_t bus) const { return bus; }
  std::size_t row_q(std::size_t bus) const { return buses + bus; }
  std::size_t row_cone(std::size_t l) const { return 2 * buses + l; }
  std::size_t row_angle(std::size_t l) const { return 2 * buses + branches + l; }
  std::size_t col_u(std::size_t bus) const { return bus; }
  std::size_t col_c(std::size_t l) const { return buses + l; }
  std::size_t col_s(std::size_t l) const { return buses + branches + l; }
  std::size_t col_theta(std::size_t bus) const { return buses + 2 * branches + bus; }
};

/// Network side of the lifted load flow at (u, c, s, theta): bus outflows P and Q,
/// c^2 + s^2 - u_i u_j and theta_j - theta_i - atan(s / c), stacked as the Jacobian rows.
Eigen::VectorXd soc_residuals(const NetworkCase& net, const SocState& y);

/// Loose anchors (slack above 1e-6) are projected onto the cone and reported in warnings.
SocJacobian soc_jacobian(const NetworkCase& net, const SocState& anchor);

/// Wind forecast error response: participation factors per generator (sum 1).
struct ResponseModel {
  std::vector<double> gamma;        // per generator
  std::vector<double> lambda;       // per wind farm, Q/P of the deviation
};

/// Right-hand side of J dy = Psi xi (+ slack and PV reactive responses).
Eigen::MatrixXd build_psi(const NetworkCase& net, const ResponseModel& response);

struct SensitivityBundle {
  Eigen::MatrixXd upsilon_yhat;  // rows: u_PQ, c, s, theta_PV, theta_PQ
  Eigen::MatrixXd upsilon_g;     // rows: P_ref, Q_ref, Q_PV
  std::vector<std::size_t> pq_buses, pv_buses;
  std::size_t ref_bus = 0;
  SocState anchor;
  std::vector<std::string> warnings;

  /// Row of d(quantity)/d(xi) for a bound-type quantity.
  Eigen::RowVectorXd row(const NetworkCase& net, const ResponseModel& response, Quantity kind,
                         std::size_t index) const;
  /// Rows of dP and dQ for one directional branch flow.
  std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd> flow_rows(const NetworkCase& net,
                                                              LineDirection ld) const;
  /// Full lifted state change (u, c, s, theta per bus/branch) for a deviation.
  SocState delta(const NetworkCase& net, const Eigen::VectorXd& xi) const;
};

SensitivityBundle derive_upsilon(const NetworkCase& net, const SocJacobian& jac,
                                 const Eigen::MatrixXd& psi);

/// Convenience: Jacobian, Psi and Upsilon at an anchor.
SensitivityBundle sensitivities(const NetworkCase& net, const SocState& anchor,
                                const ResponseModel& response);

/// DC injection-shift factors (branches x buses), series reactance only; slack column zero.
Eigen::MatrixXd ptdf(const NetworkCase& net, std::size_t slack);

}  // namespace ccsoc
