#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ccsoc/chance.hpp"
#include "ccsoc/powerflow.hpp"
#include "ccsoc/sampling.hpp"
#include "ccsoc/soc_opf.hpp"

namespace ccsoc {

/// Operating point plus the affine response applied in every scenario.
struct ScenarioPolicy {
  PowerFlowSeed base;          // dispatch, held voltages, wind Q at forecast
  std::vector<BusKind> kinds;  // bus roles kept fixed across scenarios
  std::vector<double> gamma;   // per generator
  std::vector<double> lambda;  // per wind farm, Q/P

  /// Straight from a lifted state: V = sqrt(u), case bus roles.
  static ScenarioPolicy from_state(const NetworkCase& net, const SocState& state, const UncertaintySpec& spec);
  /// From a recovered power flow, keeping the roles it ended with. `q_wind` is the
  /// wind reactive output the recovery was seeded with.
  static ScenarioPolicy from_recovery(const NetworkCase& net, const PowerFlowSolution& sol,
                                      const std::vector<double>& q_wind, const UncertaintySpec& spec);
};

/// n x |W| matrix of N(0, Sigma) wind deviations.
Eigen::MatrixXd sample_wind(const UncertaintySpec& spec, std::size_t n, std::uint64_t seed,
                            Execution exec = Execution::Parallel);

enum class ViolationClass { GenP, BusV, BranchS, GenQ };
std::string_view to_string(ViolationClass c);

struct ConstraintTally {
  ViolationClass kind = ViolationClass::GenP;
  int element = 0;   // generator index, bus id or branch label
  std::string side;  // lower/upper or forward/reverse
  std::uint64_t count = 0;
};

struct ViolationReport {
  std::size_t samples = 0;
  std::uint64_t diverged = 0;
  std::uint64_t joint = 0;  // samples with a scored violation, diverged included
  std::vector<ConstraintTally> per_constraint;

  double probability(std::uint64_t count) const;
  double standard_error(std::uint64_t count) const;
  /// Largest per-constraint probability in each scored class (gen Q is audit only).
  std::map<ViolationClass, double> per_class_max() const;
  nlohmann::json to_json() const;
  /// kind,element,side,count,probability_pct,std_error_pct
  std::string to_csv() const;
  /// Class maxima and joint probability as a fixed-width text table.
  std::string table() const;
};

/// Monte-Carlo over `deviations` (rows are scenarios): AC power flow per scenario
/// and a limit check with `limits_tol` (p.u.).
ViolationReport evaluate_policy(const NetworkCase& net, const ScenarioPolicy& policy,
                                const Eigen::MatrixXd& deviations, double limits_tol = 1e-6,
                                Execution exec = Execution::Parallel);

}  // namespace ccsoc
