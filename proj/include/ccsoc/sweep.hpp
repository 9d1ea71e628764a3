#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ccsoc/cc_driver.hpp"
#include "ccsoc/validation.hpp"

namespace ccsoc {

/// One sweep dimension: every listed line direction takes the same beta value.
/// A nullopt value drops the weight (both sides at 1 - epsilon).
struct BetaAxis {
  std::string name;
  std::vector<LineDirection> lines;
  std::vector<std::optional<double>> values;
};

struct SweepOptions {
  CcOptions cc;
  std::size_t mc_samples = 2000;
  std::uint64_t seed = 1;
  double limits_tol = 1e-6;
  Execution exec = Execution::Parallel;
};

struct SweepRow {
  std::vector<std::optional<double>> betas;  // one per axis
  std::string error;                          // empty when the combination solved
  int iterations = 0;
  double cost_cc = 0.0;
  std::optional<double> cost_recovered;
  std::string recovery_status;
  std::map<ViolationClass, double> class_max;
  std::optional<double> joint;
};

/// Cartesian product of the axes, rows in lexicographic order of the value indices.
/// All combinations share one wind sample so rows differ only by beta.
std::vector<SweepRow> sweep_beta(const NetworkCase& net, const UncertaintySpec& spec,
                                 const std::vector<BetaAxis>& axes, const SweepOptions& options = {});

std::string sweep_csv(const std::vector<BetaAxis>& axes, const std::vector<SweepRow>& rows);

}  // namespace ccsoc
