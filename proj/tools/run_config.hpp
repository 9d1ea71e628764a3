#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "ccsoc/cc_driver.hpp"
#include "ccsoc/network.hpp"
#include "ccsoc/sweep.hpp"

namespace ccsoc::cli {

/// JSON run configuration:
///   case              path to a MATPOWER file, relative to the config file
///   transformer_taps  keep off-nominal ratios (default false)
///   modifiers         rating_scale, v_min, v_max, wind [{bus, p_mw, sigma_mw, pf_min}]
///   uncertainty       see uncertainty_from_json
///   tolerances        angle_tol, rho, max_outer, pf_tol, limits_tol, solver_tol, loss_penalty
///   mc                samples, seed
///   sweep             samples, axes [{name, lines [{branch, direction}], values | range}]
///   output            dir
struct RunConfig {
  nlohmann::json raw;  // after command-line overrides
  std::filesystem::path base_dir;

  static RunConfig load(const std::filesystem::path& path);

  /// Sets a dotted key ("mc.seed") in the raw config.
  void set(const std::string& dotted, nlohmann::json value);

  /// FNV-1a of the canonical dump, output section excluded.
  std::string hash() const;

  NetworkCase network() const;
  UncertaintySpec uncertainty(const NetworkCase& net) const;
  SequentialOptions sequential() const;
  CcOptions cc() const;
  double pf_tol() const;
  double limits_tol() const;
  std::size_t mc_samples() const;
  std::uint64_t seed() const;
  std::vector<BetaAxis> sweep_axes(const NetworkCase& net) const;
  std::size_t sweep_samples() const;
  std::filesystem::path output_dir() const;
};

}  // namespace ccsoc::cli
