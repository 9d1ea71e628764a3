#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccsoc/conic.hpp"
#include "ccsoc/error.hpp"
#include "ccsoc/network.hpp"
#include "ccsoc/powerflow.hpp"

namespace ccsoc {

/// Lifted operating point: u = V^2, c = Vi Vj cos(theta_ij), s = -Vi Vj sin(theta_ij).
struct SocState {
  std::vector<double> p_gen, q_gen;  // per generator, p.u.
  std::vector<double> q_wind;        // per wind farm, p.u.
  std::vector<double> u;             // per bus, p.u.^2
  std::vector<double> c, s;          // per branch, p.u.^2
  std::vector<double> theta;         // per bus, rad
  double objective = 0.0;            // EUR/h

  /// u_i u_j - c^2 - s^2 per branch.
  std::vector<double> cone_slacks(const NetworkCase& net) const;

  /// Warm start for the AC power flow: V = sqrt(u), wind at forecast.
  PowerFlowSeed to_seed(const NetworkCase& net) const;

  nlohmann::json to_json(const NetworkCase& net) const;
  static SocState from_json(const nlohmann::json& j, const NetworkCase& net);
};

enum class Quantity { GenP, GenQ, WindQ, BusU, BranchC, BranchS };

std::string_view to_string(Quantity q);

struct QuantityKey {
  Quantity kind = Quantity::GenP;
  std::size_t index = 0;
  auto operator<=>(const QuantityKey&) const = default;
};

enum class FlowDirection { Forward, Reverse };

std::string_view to_string(FlowDirection d);

struct LineDirection {
  std::size_t branch = 0;
  FlowDirection direction = FlowDirection::Forward;
  auto operator<=>(const LineDirection&) const = default;
};

/// Margins for the two-sided split |P| <= kP - margin_p, |Q| <= kQ - margin_q,
/// kP^2 + kQ^2 <= S^2.
struct FlowChanceMargins {
  double margin_p = 0.0;
  double margin_q = 0.0;
  double beta = 0.5;
};

struct TighteningSet {
  std::map<QuantityKey, double> bounds;  // symmetric shrink of both bounds
  std::map<LineDirection, FlowChanceMargins> flows;

  bool empty() const noexcept { return bounds.empty() && flows.empty(); }
  double margin(Quantity kind, std::size_t index) const;
  nlohmann::json to_json(const NetworkCase& net) const;
};

/// Variable handles of a built SOC-OPF program.
struct SocLayout {
  std::vector<VarId> p_gen, q_gen, q_wind, u, c, s, theta;
  std::map<LineDirection, std::pair<VarId, VarId>> k_vars;  // (kP, kQ) per critical direction
  bool has_angles = false;
};

struct SocProgram {
  ConicProgram program;
  SocLayout layout;
  AffineExpr cost;  // EUR/h
};

/// Affine expressions of the directional flows in (u, c, s).
struct FlowExprs {
  AffineExpr p_ij, q_ij, p_ji, q_ji;
};

FlowExprs flow_expressions(const NetworkCase& net, std::size_t branch, const SocLayout& layout);

/// Builds the lifted OPF with relaxed cones. The angle equalities are linearized
/// about `anchor` and omitted when no anchor is given.
SocProgram build_soc_opf(const NetworkCase& net, const SocState* anchor = nullptr,
                         const TighteningSet* tightenings = nullptr);

struct SequentialOptions {
  double angle_tol = 1e-6;  // p.u.^2, on max change of c and s
  int max_outer = 50;
  /// Second solve at fixed optimal cost that minimizes the series reactive loss,
  /// which pushes c to the cone boundary.
  bool tighten_cones = true;
  /// EUR/h per p.u. of series reactive loss added to the cost; 0 keeps the plain relaxation.
  double loss_penalty = 0.0;
  double solver_tol = 1e-9;
};

struct SequentialResult {
  SocState state;
  int passes = 0;                 // conic solves of the angle loop
  std::vector<double> deltas;     // max(|dc|, |ds|) per pass after the first
  bool radial = false;
};

class AngleLoopError : public NonConvergenceError {
 public:
  AngleLoopError(const std::string& msg, std::vector<double> history)
      : NonConvergenceError(msg), history_(std::move(history)) {}
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

/// sum |b| (u_from / tap^2 + u_to - 2 c / tap): the series reactive loss when the cone is tight.
AffineExpr series_reactive_loss(const NetworkCase& net, const SocLayout& layout);

/// Solves one SOC-OPF program and reads back the state. Throws SolverError
/// unless the backend reports Optimal.
SocState solve_soc_opf(const NetworkCase& net, const SocState* anchor,
                       const TighteningSet* tightenings, const SequentialOptions& options = {});

/// Relaxation followed by repeated angle-linearized solves until c and s settle.
/// `warm` replaces the initial relaxation pass as the first anchor.
SequentialResult solve_sequential(const NetworkCase& net, const TighteningSet* tightenings,
                                  const SequentialOptions& options = {},
                                  const SocState* warm = nullptr);

/// Directional branch flows at a lifted state.
std::vector<BranchFlow> extract_flows(const SocState& state, const NetworkCase& net);

/// Angles along a BFS spanning tree from the slack: theta_j = theta_i + atan2(s, c).
std::vector<double> tree_angles(const NetworkCase& net, const std::vector<double>& c,
                                const std::vector<double>& s);

}  // namespace ccsoc
