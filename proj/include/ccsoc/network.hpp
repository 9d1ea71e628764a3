#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace ccsoc {

enum class BusKind { Slack, PV, PQ };

std::string_view to_string(BusKind kind);

struct Bus {
  int id = 0;  // external label from the case file
  BusKind kind = BusKind::PQ;
  double v_min = 0.9;
  double v_max = 1.1;
  double g_shunt = 0.0;  // p.u. at 1 p.u. voltage
  double b_shunt = 0.0;
  double p_load = 0.0;  // p.u. on system base
  double q_load = 0.0;
  double v_set = 1.0;  // voltage magnitude from the case file
  double base_kv = 0.0;
};

struct Branch {
  int label = 0;  // 1-based row number in the source branch table
  std::size_t from_bus = 0;
  std::size_t to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double g = 0.0;     // series conductance
  double b = 0.0;     // series susceptance (negative for inductive lines)
  double b_sh = 0.0;  // total line charging, half at each end
  double tap = 1.0;   // off-nominal ratio at the from end
  double s_rating = 0.0;  // 0 means unlimited
  bool status = true;

  bool limited() const noexcept { return s_rating > 0.0; }
};

struct Generator {
  std::size_t bus = 0;
  double p_min = 0.0;
  double p_max = 0.0;
  double q_min = 0.0;
  double q_max = 0.0;
  double cost_linear = 0.0;  // EUR/MWh
  double cost_offset = 0.0;  // EUR/h
  double p_set = 0.0;        // dispatch stored in the case file, p.u.
  double q_set = 0.0;
  double v_set = 1.0;
};

struct WindFarm {
  std::size_t bus = 0;
  double p_forecast = 0.0;  // p.u.
  double sigma = 0.0;       // p.u.
  double pf_min = 1.0;

  /// Largest admissible |Q/P| for the power-factor limit.
  double max_q_ratio() const;
};

/// Wind farm described in engineering units, addressed by external bus label.
struct WindAddition {
  int bus_id = 0;
  double p_mw = 0.0;
  double sigma_mw = 0.0;
  double pf_min = 0.95;
};

struct NetworkCase {
  std::string name;
  std::string variant;
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> generators;
  std::vector<WindFarm> wind_farms;
  std::map<int, std::size_t> bus_index;

  std::size_t num_buses() const noexcept { return buses.size(); }
  std::size_t num_branches() const noexcept { return branches.size(); }
  std::size_t slack_bus() const;
  std::size_t index_of(int bus_id) const;

  /// Generator indices per bus.
  std::vector<std::vector<std::size_t>> generators_at_buses() const;
  std::vector<std::vector<std::size_t>> wind_at_buses() const;

  /// Connected over branches and exactly as many edges as a spanning tree.
  bool is_radial() const;

  /// Index of the branch with the given source row label.
  std::size_t branch_by_label(int label) const;
};

/// Parses the MATPOWER `mpc` subset (baseMVA, bus, gen, branch, gencost).
/// Out-of-service generators and branches are dropped; branch labels keep the
/// source row numbers.
/// Transformer ratios are read only with `keep_taps`; otherwise every branch has tap 1.
NetworkCase parse_case(std::string_view text, std::string name = "case", bool keep_taps = false);
NetworkCase load_case(const std::filesystem::path& path, bool keep_taps = false);

/// Writes MATPOWER text that parse_case reads back to an equal structure.
std::string write_case(const NetworkCase& net);

/// Canonical JSON dump, including variant metadata.
nlohmann::json case_to_json(const NetworkCase& net);

/// Throws ValidationError on dangling references, missing or duplicate slack,
/// bad bounds or islands.
void validate_case(const NetworkCase& net);

/// Connected components over in-service branches, as external bus labels.
std::vector<std::vector<int>> islands(const NetworkCase& net);

NetworkCase apply_modifiers(NetworkCase net, double rating_scale,
                            std::span<const WindAddition> wind_additions);

struct BranchAdmittance {
  double g = 0.0;
  double b = 0.0;
  double b_sh = 0.0;
};

struct Admittances {
  std::vector<BranchAdmittance> branches;
  std::vector<double> g_diag;  // G_ii
  std::vector<double> b_diag;  // B_ii
};

/// Directional flows as linear forms in (u_from, u_to, c, s).
struct FlowCoefs {
  double p_ij[4], q_ij[4], p_ji[4], q_ji[4];
};
FlowCoefs flow_coefs(const Branch& br);

/// Bus self-admittances and per-branch series terms of the pi model.
Admittances branch_admittances(const NetworkCase& net);

}  // namespace ccsoc
