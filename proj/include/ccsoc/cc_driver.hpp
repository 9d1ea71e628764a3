#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccsoc/chance.hpp"
#include "ccsoc/powerflow.hpp"
#include "ccsoc/soc_opf.hpp"

namespace ccsoc {

struct CcOptions {
  double rho = 1e-5;
  int max_outer = 30;
  SequentialOptions inner;
  double limits_tol = 1e-6;
};

struct IterationRecord {
  int index = 0;
  SocState state;
  TighteningSet margins;     // evaluated at `state`
  double margin_delta = 0.0; // against the margins `state` was solved with
  std::vector<LineDirection> critical_added;
  double objective = 0.0;    // EUR/h
  int inner_iterations = 0;
  std::vector<std::string> warnings;
};

struct CcSolveReport {
  std::vector<IterationRecord> iterations;
  bool converged = false;
  double rho = 0.0;
  SocState final_state;
  CriticalLineSet critical;
  std::optional<RecoveryResult> recovered;
  std::string recovery_error;  // set when recovery threw
  double cost_cc = 0.0;
  std::optional<double> cost_recovered;

  nlohmann::json to_json(const NetworkCase& net) const;
  /// One row per margin and iteration: iteration,kind,element,direction,side,omega_pu.
  std::string margins_csv(const NetworkCase& net) const;
};

class CcNonConvergenceError : public NonConvergenceError {
 public:
  CcNonConvergenceError(const std::string& msg, std::vector<IterationRecord> history)
      : NonConvergenceError(msg), history_(std::move(history)) {}
  const std::vector<IterationRecord>& history() const noexcept { return history_; }

 private:
  std::vector<IterationRecord> history_;
};

/// Outer loop: plain SOC-OPF, then alternate screening, margin evaluation and
/// tightened re-solves until the margins settle within rho. Recovery runs on
/// the final state.
CcSolveReport solve_cc(const NetworkCase& net, const UncertaintySpec& spec, const CcOptions& options = {});

/// Margins a state induces: sensitivities at `state`, Omega for all bounds and the critical lines.
TighteningSet evaluate_margins(const NetworkCase& net, const SocState& state, const UncertaintySpec& spec,
                               const CriticalLineSet& critical, std::vector<std::string>* warnings = nullptr);

}  // namespace ccsoc
