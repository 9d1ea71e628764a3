#pragma once

#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <nlohmann/json.hpp>

#include "ccsoc/network.hpp"

namespace ccsoc {

struct PowerFlowSeed {
  std::vector<double> v_mag;  // per bus
  std::vector<double> v_ang;  // per bus, rad
  std::vector<double> p_gen;  // per generator, p.u.
  std::vector<double> q_gen;
  std::vector<double> p_wind;  // per wind farm; empty means forecast
  std::vector<double> q_wind;  // per wind farm; empty means zero
  std::size_t slack_bus = 0;

  /// Flat start at the case setpoints with the generators' stored dispatch.
  static PowerFlowSeed flat(const NetworkCase& net);
};

struct BranchFlow {
  double p_ij = 0.0, q_ij = 0.0, p_ji = 0.0, q_ji = 0.0;
  double s_ij = 0.0, s_ji = 0.0;
};

struct PowerFlowSolution {
  std::vector<double> v_mag, v_ang;
  std::vector<double> p_inj, q_inj;  // net injections computed from voltages
  std::vector<double> p_gen, q_gen;  // per generator after slack and PV pickup
  std::vector<BranchFlow> branch_flows;
  std::vector<BusKind> kinds;  // bus roles used in the final solve
  std::size_t slack_bus = 0;
  bool converged = false;
  int iterations = 0;  // mismatch evaluations, so an already balanced start counts 1
  double max_mismatch = 0.0;
};

/// Newton-Raphson on polar mismatch equations. Caches the bus admittance
/// matrix so repeated solves on one case (Monte-Carlo) skip the assembly.
class PowerFlowModel {
 public:
  explicit PowerFlowModel(const NetworkCase& net);

  /// `kinds` overrides the case bus roles (size num_buses) when non-empty.
  PowerFlowSolution solve(const PowerFlowSeed& seed, double tol = 1e-8, int max_iter = 30,
                          std::span<const BusKind> kinds = {}) const;

  const NetworkCase& network() const noexcept { return net_; }
  const Eigen::SparseMatrix<std::complex<double>>& ybus() const noexcept { return ybus_; }

 private:
  const NetworkCase& net_;
  Eigen::SparseMatrix<std::complex<double>> ybus_;
};

PowerFlowSolution solve_power_flow(const NetworkCase& net, const PowerFlowSeed& seed,
                                   double tol = 1e-8, int max_iter = 30);

/// Pi-model flows for all branches at the given voltages.
std::vector<BranchFlow> branch_flows(const NetworkCase& net, std::span<const double> v_mag,
                                     std::span<const double> v_ang);

/// Linear generation cost in EUR/h.
double generation_cost(const NetworkCase& net, std::span<const double> p_gen);

struct QClamp {
  int bus_id = 0;
  bool at_upper = true;
  double q_requested = 0.0;  // bus generator total before clamping, p.u.
  double q_limit = 0.0;
};

struct LimitViolation {
  std::string kind;  // "bus_v", "branch_s", "gen_p", "gen_q"
  int element = 0;   // bus id, branch label or generator index
  std::string side;  // "upper"/"lower" or "forward"/"reverse"
  double value = 0.0;
  double limit = 0.0;
};

struct LimitReport {
  std::vector<QClamp> clamps;
  std::optional<std::pair<int, int>> slack_reassigned;  // (old, new) bus ids
  std::vector<LimitViolation> violations;
  int rounds = 0;

  bool within_limits() const noexcept { return violations.empty(); }
  /// "feasible_within_limits" or "feasible_limits_violated".
  std::string status() const;
};

struct RecoveryResult {
  PowerFlowSolution solution;
  LimitReport report;
};

/// Warm-started power flow with generator Q limit enforcement (PV to PQ),
/// slack P limit handling by reassignment, and a final limit audit.
RecoveryResult recover_feasible(const NetworkCase& net, const PowerFlowSeed& seed,
                                double limits_tol = 1e-6, int switch_budget = 20);

nlohmann::json to_json(const PowerFlowSolution& sol, const NetworkCase& net);
nlohmann::json to_json(const LimitReport& report);

}  // namespace ccsoc
