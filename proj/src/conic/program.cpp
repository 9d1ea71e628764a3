#include <algorithm>
#include <cmath>

#include "ccsoc/conic.hpp"
#include "ccsoc/error.hpp"

namespace ccsoc {

AffineExpr& AffineExpr::add(const AffineExpr& other, double scale) {
  for (const auto& t : other.terms) {
    if (t.coef * scale != 0.0) terms.push_back({t.var, t.coef * scale});
  }
  constant += scale * other.constant;
  return *this;
}

double AffineExpr::evaluate(std::span<const double> values) const {
  double sum = constant;
  for (const auto& t : terms) sum += t.coef * values[t.var];
  return sum;
}

AffineExpr operator+(AffineExpr lhs, const AffineExpr& rhs) { return lhs.add(rhs, 1.0); }
AffineExpr operator-(AffineExpr lhs, const AffineExpr& rhs) { return lhs.add(rhs, -1.0); }
AffineExpr operator*(double scale, AffineExpr expr) {
  for (auto& t : expr.terms) t.coef *= scale;
  expr.constant *= scale;
  return expr;
}

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::NumericalFailure: return "numerical_failure";
  }
  return "?";
}

VarId ConicProgram::add_variable(std::string name, double lower, double upper) {
  if (lower > upper) throw ValidationError("variable " + name + " has crossed bounds");
  variables_.push_back({std::move(name), lower, upper});
  return VarId{variables_.size() - 1};
}

void ConicProgram::set_bounds(VarId v, double lower, double upper) {
  auto& var = variables_.at(v.index);
  if (lower > upper) throw ValidationError("variable " + var.name + " has crossed bounds");
  var.lower = lower;
  var.upper = upper;
}

void ConicProgram::check_expr(const AffineExpr& e, const std::string& where) const {
  for (const auto& t : e.terms) {
    if (t.var >= variables_.size()) {
      throw ValidationError(where + " references undeclared variable " + std::to_string(t.var));
    }
    if (!std::isfinite(t.coef)) throw ValidationError(where + " has a non-finite coefficient");
  }
  if (!std::isfinite(e.constant)) throw ValidationError(where + " has a non-finite constant");
}

void ConicProgram::set_objective(AffineExpr objective) {
  check_expr(objective, "objective");
  objective_ = std::move(objective);
}

ConstraintHandle ConicProgram::add_equality(AffineExpr lhs, double rhs, std::string name) {
  check_expr(lhs, "equality " + name);
  lhs.constant -= rhs;
  linear_.push_back({std::move(lhs), LinearSense::Equal, std::move(name)});
  return {ConstraintKind::Linear, linear_.size() - 1};
}

ConstraintHandle ConicProgram::add_less_equal(AffineExpr lhs, double rhs, std::string name) {
  check_expr(lhs, "inequality " + name);
  lhs.constant -= rhs;
  linear_.push_back({std::move(lhs), LinearSense::LessEqual, std::move(name)});
  return {ConstraintKind::Linear, linear_.size() - 1};
}

ConstraintHandle ConicProgram::add_soc(std::vector<AffineExpr> x, AffineExpr t,
                                       std::string name) {
  if (x.empty()) throw ValidationError("cone " + name + " has no x terms");
  for (const auto& e : x) check_expr(e, "cone " + name);
  check_expr(t, "cone " + name);
  ConeConstraint c;
  c.kind = ConeKind::Standard;
  c.x = std::move(x);
  c.t = std::move(t);
  c.name = std::move(name);
  cones_.push_back(std::move(c));
  return {ConstraintKind::Cone, cones_.size() - 1};
}

ConstraintHandle ConicProgram::add_rotated_soc(std::vector<AffineExpr> x, AffineExpr u,
                                               AffineExpr v, std::string name) {
  if (x.empty()) throw ValidationError("rotated cone " + name + " has no x terms");
  for (const auto& e : x) check_expr(e, "rotated cone " + name);
  check_expr(u, "rotated cone " + name);
  check_expr(v, "rotated cone " + name);
  ConeConstraint c;
  c.kind = ConeKind::Rotated;
  c.x = std::move(x);
  c.u = std::move(u);
  c.v = std::move(v);
  c.name = std::move(name);
  cones_.push_back(std::move(c));
  return {ConstraintKind::Cone, cones_.size() - 1};
}

ConstraintHandle ConicProgram::add_quadratic(std::vector<AffineExpr> squares, AffineExpr linear,
                                             std::string name) {
  if (squares.empty()) throw ValidationError("quadratic " + name + " has no squared terms");
  for (const auto& e : squares) check_expr(e, "quadratic " + name);
  check_expr(linear, "quadratic " + name);
  quadratics_.push_back({std::move(squares), std::move(linear), std::move(name)});
  return {ConstraintKind::Quadratic, quadratics_.size() - 1};
}

namespace {

nlohmann::json expr_json(const AffineExpr& e) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : e.terms) terms.push_back({t.var, t.coef});
  return {{"terms", terms}, {"constant", e.constant}};
}

AffineExpr expr_from_json(const nlohmann::json& j) {
  AffineExpr e;
  for (const auto& t : j.at("terms")) e.terms.push_back({t.at(0).get<std::size_t>(), t.at(1)});
  e.constant = j.at("constant");
  return e;
}

nlohmann::json bound_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double bound_from_json(const nlohmann::json& j) {
  if (j.is_string()) return j.get<std::string>() == "inf" ? kInf : -kInf;
  return j.get<double>();
}

}  // namespace

nlohmann::json ConicProgram::to_json() const {
  using nlohmann::json;
  json vars = json::array();
  for (const auto& v : variables_) {
    vars.push_back({{"name", v.name}, {"lower", bound_json(v.lower)},
                    {"upper", bound_json(v.upper)}});
  }
  json lin = json::array();
  for (const auto& c : linear_) {
    lin.push_back({{"name", c.name},
                   {"sense", c.sense == LinearSense::Equal ? "eq" : "le"},
                   {"expr", expr_json(c.expr)}});
  }
  json cones = json::array();
  for (const auto& c : cones_) {
    json x = json::array();
    for (const auto& e : c.x) x.push_back(expr_json(e));
    json entry = {{"name", c.name}, {"x", x}};
    if (c.kind == ConeKind::Standard) {
      entry["kind"] = "standard";
      entry["t"] = expr_json(c.t);
    } else {
      entry["kind"] = "rotated";
      entry["u"] = expr_json(c.u);
      entry["v"] = expr_json(c.v);
    }
    cones.push_back(entry);
  }
  json quads = json::array();
  for (const auto& q : quadratics_) {
    json sq = json::array();
    for (const auto& e : q.squares) sq.push_back(expr_json(e));
    quads.push_back({{"name", q.name}, {"squares", sq}, {"linear", expr_json(q.linear)}});
  }
  return {{"format", "ccsoc-conic-ir/1"},
          {"variables", vars},
          {"objective", expr_json(objective_)},
          {"linear", lin},
          {"cones", cones},
          {"quadratics", quads}};
}

ConicProgram ConicProgram::from_json(const nlohmann::json& j) {
  ConicProgram p;
  try {
    for (const auto& v : j.at("variables")) {
      p.add_variable(v.at("name"), bound_from_json(v.at("lower")),
                     bound_from_json(v.at("upper")));
    }
    p.set_objective(expr_from_json(j.at("objective")));
    for (const auto& c : j.at("linear")) {
      auto e = expr_from_json(c.at("expr"));
      if (c.at("sense") == "eq") {
        p.add_equality(e, 0.0, c.at("name"));
      } else {
        p.add_less_equal(e, 0.0, c.at("name"));
      }
    }
    for (const auto& c : j.at("cones")) {
      std::vector<AffineExpr> x;
      for (const auto& e : c.at("x")) x.push_back(expr_from_json(e));
      if (c.at("kind") == "standard") {
        p.add_soc(std::move(x), expr_from_json(c.at("t")), c.at("name"));
      } else {
        p.add_rotated_soc(std::move(x), expr_from_json(c.at("u")), expr_from_json(c.at("v")),
                          c.at("name"));
      }
    }
    for (const auto& q : j.at("quadratics")) {
      std::vector<AffineExpr> sq;
      for (const auto& e : q.at("squares")) sq.push_back(expr_from_json(e));
      p.add_quadratic(std::move(sq), expr_from_json(q.at("linear")), q.at("name"));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid conic program dump: ") + e.what());
  }
  return p;
}

ConicSolution solve(const ConicProgram& program, const ConicBackend& backend, double tol) {
  SolverSettings settings;
  settings.gap_tolerance = tol;
  settings.feasibility_tolerance = tol;
  return backend.solve(program, settings);
}

ResidualReport check_solution(const ConicProgram& program, std::span<const double> values) {
  if (values.size() != program.num_variables()) {
    throw ValidationError("value vector does not cover all variables");
  }
  ResidualReport report;
  const auto& vars = program.variables();
  for (std::size_t i = 0; i < vars.size(); ++i) {
    double v = std::max(vars[i].lower - values[i], values[i] - vars[i].upper);
    report.max_bound_violation = std::max(report.max_bound_violation, v);
  }
  report.max_violation = report.max_bound_violation;

  const auto& lin = program.linear_constraints();
  for (std::size_t k = 0; k < lin.size(); ++k) {
    const double r = lin[k].expr.evaluate(values);
    ConstraintResidual res{lin[k].name, ConstraintKind::Linear, k, 0.0, 0.0};
    if (lin[k].sense == LinearSense::Equal) {
      res.violation = std::abs(r);
    } else {
      res.violation = std::max(0.0, r);
      res.slack = -r;
    }
    report.max_violation = std::max(report.max_violation, res.violation);
    report.constraints.push_back(std::move(res));
  }

  const auto& cones = program.cones();
  for (std::size_t k = 0; k < cones.size(); ++k) {
    const auto& c = cones[k];
    double sumsq = 0.0;
    for (const auto& e : c.x) {
      const double xv = e.evaluate(values);
      sumsq += xv * xv;
    }
    ConstraintResidual res{c.name, ConstraintKind::Cone, k, 0.0, 0.0};
    if (c.kind == ConeKind::Standard) {
      res.slack = c.t.evaluate(values) - std::sqrt(sumsq);
      res.violation = std::max(0.0, -res.slack);
    } else {
      const double u = c.u.evaluate(values);
      const double v = c.v.evaluate(values);
      res.slack = u * v - sumsq;
      res.violation = std::max({0.0, -res.slack, -u, -v});
    }
    report.max_violation = std::max(report.max_violation, res.violation);
    report.constraints.push_back(std::move(res));
  }

  const auto& quads = program.quadratics();
  for (std::size_t k = 0; k < quads.size(); ++k) {
    double q = quads[k].linear.evaluate(values);
    for (const auto& e : quads[k].squares) {
      const double xv = e.evaluate(values);
      q += xv * xv;
    }
    ConstraintResidual res{quads[k].name, ConstraintKind::Quadratic, k, std::max(0.0, q), -q};
    report.max_violation = std::max(report.max_violation, res.violation);
    report.constraints.push_back(std::move(res));
  }
  return report;
}

}  // namespace ccsoc
