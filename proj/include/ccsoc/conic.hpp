#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ccsoc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct VarId {
  std::size_t index = 0;
  friend bool operator==(VarId, VarId) = default;
};

struct LinearTerm {
  std::size_t var = 0;
  double coef = 0.0;
};

/// Sparse affine form sum(coef * x[var]) + constant.
struct AffineExpr {
  std::vector<LinearTerm> terms;
  double constant = 0.0;

  AffineExpr() = default;
  AffineExpr(double c) : constant(c) {}  // NOLINT(google-explicit-constructor)
  AffineExpr(VarId v, double coef = 1.0) : terms{{v.index, coef}} {}  // NOLINT

  AffineExpr& add(VarId v, double coef) {
    if (coef != 0.0) terms.push_back({v.index, coef});
    return *this;
  }
  AffineExpr& add(const AffineExpr& other, double scale = 1.0);
  AffineExpr& operator+=(double c) {
    constant += c;
    return *this;
  }

  double evaluate(std::span<const double> values) const;
};

AffineExpr operator+(AffineExpr lhs, const AffineExpr& rhs);
AffineExpr operator-(AffineExpr lhs, const AffineExpr& rhs);
AffineExpr operator*(double scale, AffineExpr expr);

enum class ConeKind { Standard, Rotated };

/// Standard: ||x|| <= t. Rotated: sum(x_k^2) <= u * v with u, v >= 0.
struct ConeConstraint {
  ConeKind kind = ConeKind::Standard;
  std::vector<AffineExpr> x;
  AffineExpr t;  // Standard only
  AffineExpr u;  // Rotated only
  AffineExpr v;  // Rotated only
  std::string name;
};

/// Convex quadratic sum(squares_k^2) + linear <= 0.
struct QuadraticConstraint {
  std::vector<AffineExpr> squares;
  AffineExpr linear;
  std::string name;
};

enum class LinearSense { Equal, LessEqual };

/// expr == 0 or expr <= 0.
struct LinearConstraint {
  AffineExpr expr;
  LinearSense sense = LinearSense::Equal;
  std::string name;
};

struct Variable {
  std::string name;
  double lower = -kInf;
  double upper = kInf;
};

enum class ConstraintKind { Linear, Cone, Quadratic };

struct ConstraintHandle {
  ConstraintKind kind = ConstraintKind::Linear;
  std::size_t index = 0;
};

class ConicProgram {
 public:
  VarId add_variable(std::string name, double lower = -kInf, double upper = kInf);
  void set_bounds(VarId v, double lower, double upper);

  void set_objective(AffineExpr objective);
  const AffineExpr& objective() const noexcept { return objective_; }

  ConstraintHandle add_equality(AffineExpr lhs, double rhs, std::string name = {});
  ConstraintHandle add_less_equal(AffineExpr lhs, double rhs, std::string name = {});
  ConstraintHandle add_soc(std::vector<AffineExpr> x, AffineExpr t, std::string name = {});
  ConstraintHandle add_rotated_soc(std::vector<AffineExpr> x, AffineExpr u, AffineExpr v,
                                   std::string name = {});
  ConstraintHandle add_quadratic(std::vector<AffineExpr> squares, AffineExpr linear,
                                 std::string name = {});

  std::size_t num_variables() const noexcept { return variables_.size(); }
  const std::vector<Variable>& variables() const noexcept { return variables_; }
  const std::vector<LinearConstraint>& linear_constraints() const noexcept { return linear_; }
  const std::vector<ConeConstraint>& cones() const noexcept { return cones_; }
  const std::vector<QuadraticConstraint>& quadratics() const noexcept { return quadratics_; }

  nlohmann::json to_json() const;
  static ConicProgram from_json(const nlohmann::json& j);

 private:
  void check_expr(const AffineExpr& e, const std::string& where) const;

  std::vector<Variable> variables_;
  AffineExpr objective_;
  std::vector<LinearConstraint> linear_;
  std::vector<ConeConstraint> cones_;
  std::vector<QuadraticConstraint> quadratics_;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, NumericalFailure };

std::string_view to_string(SolveStatus status);

struct SolverStats {
  int iterations = 0;
  double runtime_seconds = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double relative_gap = 0.0;
  bool reduced_accuracy = false;
  std::string message;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::NumericalFailure;
  std::vector<double> values;
  double objective_value = 0.0;
  SolverStats stats;

  double value(VarId v) const { return values.at(v.index); }
};

struct SolverSettings {
  double gap_tolerance = 1e-8;
  double feasibility_tolerance = 1e-8;
  int max_iterations = 100;
};

/// Contract for conic backends: accept the IR, return a ConicSolution.
class ConicBackend {
 public:
  virtual ~ConicBackend() = default;
  virtual ConicSolution solve(const ConicProgram& program,
                              const SolverSettings& settings) const = 0;
  virtual std::string name() const = 0;
};

/// Homogeneous self-dual primal-dual interior point method with
/// Nesterov-Todd scaling and Mehrotra correction, solving the sparse
/// quasi-definite KKT system by LDL^T.
class InteriorPointBackend final : public ConicBackend {
 public:
  ConicSolution solve(const ConicProgram& program,
                      const SolverSettings& settings) const override;
  std::string name() const override { return "ccsoc-ipm"; }
};

ConicSolution solve(const ConicProgram& program, const ConicBackend& backend,
                    double tol = 1e-8);

struct ConstraintResidual {
  std::string name;
  ConstraintKind kind = ConstraintKind::Linear;
  std::size_t index = 0;
  double violation = 0.0;  // > 0 means violated
  double slack = 0.0;      // rotated cones: u*v - sum(x^2); standard cones: t - ||x||
};

struct ResidualReport {
  std::vector<ConstraintResidual> constraints;
  double max_bound_violation = 0.0;
  double max_violation = 0.0;

  bool feasible(double tol) const noexcept { return max_violation <= tol; }
};

ResidualReport check_solution(const ConicProgram& program, std::span<const double> values);

}  // namespace ccsoc
