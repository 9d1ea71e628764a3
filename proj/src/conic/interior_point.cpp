#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "ccsoc/conic.hpp"
#include "ccsoc/detail/cones.hpp"

namespace ccsoc {
namespace {

using detail::SocScaling;
using detail::Vec;
using SpMat = Eigen::SparseMatrix<double>;
using Triplets = std::vector<Eigen::Triplet<double>>;

// min c'x  s.t.  A x = b,  G x + s = h,  s in R+^{m_lin} x Q^{d_1} x ... x Q^{d_k}
struct StandardForm {
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  Eigen::Index m = 0;
  Eigen::Index m_lin = 0;
  std::vector<Eigen::Index> soc_dims;
  SpMat A, G;
  Vec c, b, h;
  double objective_constant = 0.0;
};

class FormBuilder {
 public:
  explicit FormBuilder(std::size_t n) : n_(static_cast<Eigen::Index>(n)) {}

  void equality(const AffineExpr& e) {
    for (const auto& t : e.terms) a_.emplace_back(p_, t.var, t.coef);
    b_.push_back(-e.constant);
    ++p_;
  }

  // Queues a row of s = h - G x, i.e. s = e.
  void slack_row(std::vector<Eigen::Triplet<double>>& rows, std::vector<double>& h,
                 Eigen::Index row, const AffineExpr& e, double scale = 1.0) {
    for (const auto& t : e.terms) rows.emplace_back(row, t.var, -scale * t.coef);
    h.push_back(scale * e.constant);
  }

  void nonnegative(const AffineExpr& e) {
    slack_row(lin_rows_, lin_h_, static_cast<Eigen::Index>(lin_h_.size()), e);
  }

  // ||x|| <= t
  void soc(const AffineExpr& t, const std::vector<AffineExpr>& x) {
    const auto base = static_cast<Eigen::Index>(soc_h_.size());
    slack_row(soc_rows_, soc_h_, base, t);
    for (std::size_t k = 0; k < x.size(); ++k) {
      slack_row(soc_rows_, soc_h_, base + 1 + static_cast<Eigen::Index>(k), x[k]);
    }
    dims_.push_back(static_cast<Eigen::Index>(x.size()) + 1);
  }

  // sum x^2 <= u v  <=>  ||(2x, u - v)|| <= u + v
  void rotated(const AffineExpr& u, const AffineExpr& v, const std::vector<AffineExpr>& x) {
    std::vector<AffineExpr> body;
    body.push_back(u - v);
    for (const auto& e : x) body.push_back(2.0 * e);
    soc(u + v, body);
  }

  StandardForm finish(const AffineExpr& objective) {
    StandardForm f;
    f.n = n_;
    f.p = p_;
    f.m_lin = static_cast<Eigen::Index>(lin_h_.size());
    f.m = f.m_lin + static_cast<Eigen::Index>(soc_h_.size());
    f.soc_dims = dims_;
    f.A.resize(f.p, f.n);
    f.A.setFromTriplets(a_.begin(), a_.end());
    Triplets g = lin_rows_;
    for (const auto& t : soc_rows_) g.emplace_back(t.row() + f.m_lin, t.col(), t.value());
    f.G.resize(f.m, f.n);
    f.G.setFromTriplets(g.begin(), g.end());
    f.b = Eigen::Map<const Vec>(b_.data(), f.p);
    f.h.resize(f.m);
    for (Eigen::Index i = 0; i < f.m_lin; ++i) f.h(i) = lin_h_[i];
    for (std::size_t i = 0; i < soc_h_.size(); ++i) f.h(f.m_lin + i) = soc_h_[i];
    f.c = Vec::Zero(f.n);
    for (const auto& t : objective.terms) f.c(t.var) += t.coef;
    f.objective_constant = objective.constant;
    return f;
  }

 private:
  Eigen::Index n_;
  Eigen::Index p_ = 0;
  Triplets a_;
  std::vector<double> b_;
  Triplets lin_rows_, soc_rows_;
  std::vector<double> lin_h_, soc_h_;
  std::vector<Eigen::Index> dims_;
};

StandardForm to_standard_form(const ConicProgram& prog) {
  FormBuilder fb(prog.num_variables());
  const auto& vars = prog.variables();
  for (std::size_t j = 0; j < vars.size(); ++j) {
    const VarId v{j};
    const double lo = vars[j].lower;
    const double hi = vars[j].upper;
    if (lo == hi) {
      fb.equality(AffineExpr(v) - AffineExpr(lo));
      continue;
    }
    if (std::isfinite(lo)) fb.nonnegative(AffineExpr(v) - AffineExpr(lo));
    if (std::isfinite(hi)) fb.nonnegative(AffineExpr(hi) - AffineExpr(v));
  }
  for (const auto& c : prog.linear_constraints()) {
    if (c.sense == LinearSense::Equal) {
      fb.equality(c.expr);
    } else {
      fb.nonnegative(-1.0 * c.expr);
    }
  }
  for (const auto& c : prog.cones()) {
    if (c.kind == ConeKind::Standard) {
      fb.soc(c.t, c.x);
    } else {
      fb.rotated(c.u, c.v, c.x);
    }
  }
  for (const auto& q : prog.quadratics()) {
    if (q.linear.terms.empty() && q.linear.constant <= 0.0) {
      // sum sq^2 <= r with constant r: plain norm bound.
      fb.soc(AffineExpr(std::sqrt(-q.linear.constant)), q.squares);
    } else {
      fb.rotated(-1.0 * q.linear, AffineExpr(1.0), q.squares);
    }
  }
  return fb.finish(prog.objective());
}

// Equilibration x = D xs, rows scaled by E (uniform within each cone block),
// objective by cscale.
struct Scaling {
  Vec d, ea, eg;
  double cscale = 1.0;
};

Scaling equilibrate(StandardForm& f) {
  Scaling sc;
  sc.d = Vec::Ones(f.n);
  sc.ea = Vec::Ones(f.p);
  sc.eg = Vec::Ones(f.m);
  SpMat a = f.A;
  SpMat g = f.G;
  for (int pass = 0; pass < 20; ++pass) {
    Vec col = Vec::Zero(f.n);
    Vec row_a = Vec::Zero(f.p);
    Vec row_g = Vec::Zero(f.m);
    for (Eigen::Index j = 0; j < f.n; ++j) {
      for (SpMat::InnerIterator it(a, j); it; ++it) {
        col(j) = std::max(col(j), std::abs(it.value()));
        row_a(it.row()) = std::max(row_a(it.row()), std::abs(it.value()));
      }
      for (SpMat::InnerIterator it(g, j); it; ++it) {
        col(j) = std::max(col(j), std::abs(it.value()));
        row_g(it.row()) = std::max(row_g(it.row()), std::abs(it.value()));
      }
    }
    Eigen::Index off = f.m_lin;
    for (auto dim : f.soc_dims) {
      row_g.segment(off, dim).setConstant(row_g.segment(off, dim).maxCoeff());
      off += dim;
    }
    auto factor = [](double norm) {
      if (norm <= 0.0) return 1.0;
      return std::clamp(1.0 / std::sqrt(norm), 1e-3, 1e3);
    };
    Vec dc(f.n), da(f.p), dg(f.m);
    for (Eigen::Index j = 0; j < f.n; ++j) dc(j) = factor(col(j));
    for (Eigen::Index i = 0; i < f.p; ++i) da(i) = factor(row_a(i));
    for (Eigen::Index i = 0; i < f.m; ++i) dg(i) = factor(row_g(i));
    a = da.asDiagonal() * a * dc.asDiagonal();
    g = dg.asDiagonal() * g * dc.asDiagonal();
    sc.d.array() *= dc.array();
    sc.ea.array() *= da.array();
    sc.eg.array() *= dg.array();
    if (std::abs(col.maxCoeff() - 1.0) < 1e-3 && (f.p == 0 || std::abs(row_a.maxCoeff() - 1.0) < 1e-3))
      break;
  }
  f.A = a;
  f.G = g;
  f.b = sc.ea.cwiseProduct(f.b);
  f.h = sc.eg.cwiseProduct(f.h);
  Vec c = sc.d.cwiseProduct(f.c);
  const double cn = c.lpNorm<Eigen::Infinity>();
  sc.cscale = cn > 0.0 ? 1.0 / cn : 1.0;
  f.c = sc.cscale * c;
  return sc;
}

class ConeSet {
 public:
  explicit ConeSet(const StandardForm& f) : m_lin_(f.m_lin), dims_(f.soc_dims) {
    Eigen::Index off = f.m_lin;
    for (auto d : dims_) {
      offsets_.push_back(off);
      off += d;
    }
    m_ = off;
  }

  Eigen::Index degree() const { return m_lin_ + static_cast<Eigen::Index>(dims_.size()); }

  Vec identity() const {
    Vec e = Vec::Zero(m_);
    e.head(m_lin_).setOnes();
    for (auto off : offsets_) e(off) = 1.0;
    return e;
  }

  // Smallest alpha with r + alpha e on the cone boundary: negative when r is interior.
  double boundary_shift(const Vec& r) const {
    double worst = -kInf;
    for (Eigen::Index i = 0; i < m_lin_; ++i) worst = std::max(worst, -r(i));
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      auto seg = r.segment(offsets_[k], dims_[k]);
      worst = std::max(worst, seg.tail(dims_[k] - 1).norm() - seg(0));
    }
    return worst;
  }

  Vec push_interior(const Vec& r) const {
    const double alpha = boundary_shift(r);
    if (alpha < 0.0) return r;
    return r + (1.0 + alpha) * identity();
  }

  void update_scaling(const Vec& s, const Vec& z) {
    w_lin_ = (s.head(m_lin_).array() / z.head(m_lin_).array()).sqrt();
    soc_.clear();
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      soc_.push_back(detail::nt_scaling(s.segment(offsets_[k], dims_[k]),
                                        z.segment(offsets_[k], dims_[k])));
    }
  }

  void set_identity_scaling() {
    w_lin_ = Vec::Ones(m_lin_);
    soc_.clear();
    for (auto d : dims_) {
      SocScaling sc;
      sc.w = Vec::Zero(d);
      sc.w(0) = 1.0;
      soc_.push_back(sc);
    }
  }

  Vec apply_w(const Vec& v) const {
    Vec r(m_);
    r.head(m_lin_) = w_lin_.cwiseProduct(v.head(m_lin_));
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      r.segment(offsets_[k], dims_[k]) = soc_[k].apply(v.segment(offsets_[k], dims_[k]));
    }
    return r;
  }

  Vec apply_winv(const Vec& v) const {
    Vec r(m_);
    r.head(m_lin_) = v.head(m_lin_).cwiseQuotient(w_lin_);
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      r.segment(offsets_[k], dims_[k]) =
          soc_[k].apply_inverse(v.segment(offsets_[k], dims_[k]));
    }
    return r;
  }

  Vec apply_w2(const Vec& v) const { return apply_w(apply_w(v)); }

  Vec product(const Vec& x, const Vec& y) const {
    Vec r(m_);
    r.head(m_lin_) = x.head(m_lin_).cwiseProduct(y.head(m_lin_));
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      r.segment(offsets_[k], dims_[k]) = detail::jordan_product(
          x.segment(offsets_[k], dims_[k]), y.segment(offsets_[k], dims_[k]));
    }
    return r;
  }

  Vec divide(const Vec& lambda, const Vec& v) const {
    Vec r(m_);
    r.head(m_lin_) = v.head(m_lin_).cwiseQuotient(lambda.head(m_lin_));
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      r.segment(offsets_[k], dims_[k]) = detail::jordan_divide(
          lambda.segment(offsets_[k], dims_[k]), v.segment(offsets_[k], dims_[k]));
    }
    return r;
  }

  double step_length(const Vec& x, const Vec& d, double cap) const {
    double alpha = cap;
    for (Eigen::Index i = 0; i < m_lin_; ++i) {
      if (d(i) < 0.0) alpha = std::min(alpha, -x(i) / d(i));
    }
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      alpha = std::min(alpha, detail::soc_step_length(x.segment(offsets_[k], dims_[k]),
                                                      d.segment(offsets_[k], dims_[k]), cap));
    }
    return alpha;
  }

  Eigen::Index m_lin() const { return m_lin_; }
  const std::vector<Eigen::Index>& dims() const { return dims_; }
  const std::vector<Eigen::Index>& offsets() const { return offsets_; }
  const std::vector<SocScaling>& soc() const { return soc_; }
  const Vec& w_lin() const { return w_lin_; }

 private:
  Eigen::Index m_lin_;
  Eigen::Index m_ = 0;
  std::vector<Eigen::Index> dims_;
  std::vector<Eigen::Index> offsets_;
  Vec w_lin_;
  std::vector<SocScaling> soc_;
};

// Quasi-definite KKT [[dI, A', G'], [A, -dI, 0], [G, 0, -W^2 - dI]] with a
// fixed sparsity pattern; only the scaling block changes between iterations.
class KktSystem {
 public:
  static constexpr double kReg = 1e-7;

  KktSystem(const StandardForm& f, const ConeSet& cones) : f_(f), cones_(cones) {
    const auto n = f.n, p = f.p, m = f.m;
    dim_ = n + p + m;
    Triplets t;
    for (Eigen::Index j = 0; j < n; ++j) t.emplace_back(j, j, kReg);
    for (Eigen::Index i = 0; i < p; ++i) t.emplace_back(n + i, n + i, -kReg);
    for (Eigen::Index j = 0; j < n; ++j) {
      for (SpMat::InnerIterator it(f.A, j); it; ++it) t.emplace_back(n + it.row(), j, it.value());
      for (SpMat::InnerIterator it(f.G, j); it; ++it)
        t.emplace_back(n + p + it.row(), j, it.value());
    }
    const auto zoff = n + p;
    for (Eigen::Index i = 0; i < cones.m_lin(); ++i) t.emplace_back(zoff + i, zoff + i, -1.0);
    for (std::size_t k = 0; k < cones.dims().size(); ++k) {
      const auto o = zoff + cones.offsets()[k];
      for (Eigen::Index a = 0; a < cones.dims()[k]; ++a) {
        for (Eigen::Index b = 0; b <= a; ++b) t.emplace_back(o + a, o + b, a == b ? -1.0 : 0.0);
      }
    }
    k_.resize(dim_, dim_);
    k_.setFromTriplets(t.begin(), t.end());
    k_.makeCompressed();
    for (Eigen::Index i = 0; i < cones.m_lin(); ++i) {
      lin_pos_.push_back(position(zoff + i, zoff + i));
    }
    for (std::size_t k = 0; k < cones.dims().size(); ++k) {
      const auto o = zoff + cones.offsets()[k];
      std::vector<Eigen::Index> block;
      for (Eigen::Index a = 0; a < cones.dims()[k]; ++a) {
        for (Eigen::Index b = 0; b <= a; ++b) block.push_back(position(o + a, o + b));
      }
      soc_pos_.push_back(std::move(block));
    }
    ldlt_.analyzePattern(k_);
  }

  bool factor() {
    double* val = k_.valuePtr();
    const auto& w = cones_.w_lin();
    for (std::size_t i = 0; i < lin_pos_.size(); ++i) val[lin_pos_[i]] = -w(i) * w(i) - kReg;
    w2_.clear();
    for (std::size_t k = 0; k < soc_pos_.size(); ++k) {
      Eigen::MatrixXd w2 = cones_.soc()[k].squared();
      std::size_t idx = 0;
      for (Eigen::Index a = 0; a < w2.rows(); ++a) {
        for (Eigen::Index b = 0; b <= a; ++b) {
          val[soc_pos_[k][idx++]] = -(w2(a, b) + (a == b ? kReg : 0.0));
        }
      }
      w2_.push_back(std::move(w2));
    }
    ldlt_.factorize(k_);
    return ldlt_.info() == Eigen::Success;
  }

  // Solves the unregularized system by regularized factor + refinement.
  Vec solve(const Vec& rhs) const {
    Vec x = ldlt_.solve(rhs);
    for (int iter = 0; iter < 8; ++iter) {
      Vec r = rhs - multiply(x);
      if (r.lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) break;
      x += ldlt_.solve(r);
    }
    return x;
  }

 private:
  Eigen::Index position(Eigen::Index row, Eigen::Index col) const {
    const auto* outer = k_.outerIndexPtr();
    const auto* inner = k_.innerIndexPtr();
    for (auto q = outer[col]; q < outer[col + 1]; ++q) {
      if (inner[q] == row) return q;
    }
    return -1;
  }

  Vec multiply(const Vec& v) const {
    const auto n = f_.n, p = f_.p, m = f_.m;
    Vec out(dim_);
    auto vx = v.head(n);
    auto vy = v.segment(n, p);
    auto vz = v.tail(m);
    out.head(n) = f_.A.transpose() * vy + f_.G.transpose() * vz;
    out.segment(n, p) = f_.A * vx;
    Vec w2z(m);
    const auto& w = cones_.w_lin();
    w2z.head(cones_.m_lin()) = w.cwiseProduct(w).cwiseProduct(vz.head(cones_.m_lin()));
    for (std::size_t k = 0; k < w2_.size(); ++k) {
      const auto o = cones_.offsets()[k];
      const auto d = cones_.dims()[k];
      w2z.segment(o, d) = w2_[k] * vz.segment(o, d);
    }
    out.tail(m) = f_.G * vx - w2z;
    return out;
  }

  const StandardForm& f_;
  const ConeSet& cones_;
  Eigen::Index dim_ = 0;
  SpMat k_;
  std::vector<Eigen::Index> lin_pos_;
  std::vector<std::vector<Eigen::Index>> soc_pos_;
  std::vector<Eigen::MatrixXd> w2_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt_;
};

struct Iterate {
  Vec x, y, z, s;
  double tau = 1.0;
  double kappa = 1.0;
};

struct Metrics {
  double pres = kInf;
  double dres = kInf;
  double gap = kInf;
  double relgap = kInf;
  double pcost = 0.0;
  double dcost = 0.0;
  double merit() const { return std::max({pres, dres, std::min(gap, relgap)}); }
};

class Solver {
 public:
  Solver(const StandardForm& original, StandardForm scaled, Scaling sc,
         const SolverSettings& settings)
      : orig_(original), f_(std::move(scaled)), sc_(std::move(sc)), set_(settings),
        cones_(f_), kkt_(f_, cones_) {}

  ConicSolution run() {
    ConicSolution out;
    Iterate it;
    if (!initialize(it)) {
      out.status = SolveStatus::NumericalFailure;
      out.stats.message = "KKT factorization failed at initialization";
      return out;
    }
    Iterate best = it;
    Metrics best_m;
    const double deg = static_cast<double>(cones_.degree()) + 1.0;
    std::string stop = "iteration limit reached";

    for (int k = 0; k <= set_.max_iterations; ++k) {
      iterations_ = k;
      const Metrics met = measure(it);
      if (met.merit() < best_m.merit()) {
        best = it;
        best_m = met;
      }
      if (met.pres <= set_.feasibility_tolerance && met.dres <= set_.feasibility_tolerance &&
          (met.gap <= set_.gap_tolerance || met.relgap <= set_.gap_tolerance)) {
        return finish(it, met, SolveStatus::Optimal, "optimal", false);
      }
      if (it.tau < it.kappa) {
        if (auto status = certificate(it)) return finish(it, met, *status, "certificate", false);
      }
      if (k == set_.max_iterations) break;

      const Vec r1 = f_.A.transpose() * it.y + f_.G.transpose() * it.z + f_.c * it.tau;
      const Vec r2 = -(f_.A * it.x) + f_.b * it.tau;
      const Vec r3 = -(f_.G * it.x) + f_.h * it.tau - it.s;
      const double r4 = -f_.c.dot(it.x) - f_.b.dot(it.y) - f_.h.dot(it.z) - it.kappa;
      const double mu = (it.s.dot(it.z) + it.tau * it.kappa) / deg;

      cones_.update_scaling(it.s, it.z);
      const Vec lambda = cones_.apply_w(it.z);
      if (!kkt_.factor()) {
        stop = "KKT factorization failed";
        break;
      }
      Vec rhs1(f_.n + f_.p + f_.m);
      rhs1 << -f_.c, f_.b, f_.h;
      const Vec v1 = kkt_.solve(rhs1);

      auto direction = [&](double eta, const Vec& xi_s, double xi_t, Iterate& d) {
        const Vec wl = cones_.apply_w(cones_.divide(lambda, xi_s));
        Vec rhs2(f_.n + f_.p + f_.m);
        rhs2 << -eta * r1, eta * r2, eta * r3 - wl;
        const Vec v2 = kkt_.solve(rhs2);
        const auto x1 = v1.head(f_.n), y1 = v1.segment(f_.n, f_.p), z1 = v1.tail(f_.m);
        const auto x2 = v2.head(f_.n), y2 = v2.segment(f_.n, f_.p), z2 = v2.tail(f_.m);
        const double num = -eta * r4 + xi_t / it.tau + f_.c.dot(x2) + f_.b.dot(y2) + f_.h.dot(z2);
        const double den = it.kappa / it.tau - f_.c.dot(x1) - f_.b.dot(y1) - f_.h.dot(z1);
        d.tau = num / den;
        d.x = x2 + d.tau * x1;
        d.y = y2 + d.tau * y1;
        d.z = z2 + d.tau * z1;
        d.s = wl - cones_.apply_w2(d.z);
        d.kappa = (xi_t - it.kappa * d.tau) / it.tau;
      };
      auto max_step = [&](const Iterate& d) {
        double a = cones_.step_length(it.s, d.s, kInf);
        a = cones_.step_length(it.z, d.z, a);
        if (d.tau < 0.0) a = std::min(a, -it.tau / d.tau);
        if (d.kappa < 0.0) a = std::min(a, -it.kappa / d.kappa);
        return a;
      };

      const Vec ll = cones_.product(lambda, lambda);
      Iterate aff;
      direction(1.0, -ll, -it.tau * it.kappa, aff);
      const double a_aff = std::min(1.0, max_step(aff));
      const double sigma = std::clamp(std::pow(1.0 - a_aff, 3), 0.0, 1.0);

      const Vec corr = cones_.product(cones_.apply_winv(aff.s), cones_.apply_w(aff.z));
      const Vec xi_s = -ll - corr + sigma * mu * cones_.identity();
      const double xi_t = -it.tau * it.kappa - aff.tau * aff.kappa + sigma * mu;
      Iterate d;
      direction(1.0 - sigma, xi_s, xi_t, d);
      const double alpha = std::min(1.0, 0.99 * max_step(d));
      if (!(alpha > 1e-12) || !d.x.allFinite()) {
        stop = "step length collapsed";
        break;
      }
      it.x += alpha * d.x;
      it.y += alpha * d.y;
      it.z += alpha * d.z;
      it.s += alpha * d.s;
      it.tau += alpha * d.tau;
      it.kappa += alpha * d.kappa;
    }

    const double loose = 1e-6;
    if (best_m.pres <= loose && best_m.dres <= loose &&
        (best_m.gap <= loose || best_m.relgap <= loose)) {
      return finish(best, best_m, SolveStatus::Optimal, stop + "; reduced accuracy", true);
    }
    return finish(best, best_m, SolveStatus::NumericalFailure, stop, false);
  }

 private:
  bool initialize(Iterate& it) {
    cones_.set_identity_scaling();
    if (!kkt_.factor()) return false;
    const auto n = f_.n, p = f_.p, m = f_.m;
    Vec rhs(n + p + m);
    rhs << Vec::Zero(n), f_.b, f_.h;
    Vec primal = kkt_.solve(rhs);
    rhs << -f_.c, Vec::Zero(p), Vec::Zero(m);
    Vec dual = kkt_.solve(rhs);
    it.x = primal.head(n);
    it.s = cones_.push_interior(-primal.tail(m));
    it.y = dual.segment(n, p);
    it.z = cones_.push_interior(dual.tail(m));
    it.tau = 1.0;
    it.kappa = 1.0;
    return it.x.allFinite() && it.y.allFinite() && it.z.allFinite() && it.s.allFinite();
  }

  void unscale(const Iterate& it, double div, Vec& x, Vec& y, Vec& z, Vec& s) const {
    x = sc_.d.cwiseProduct(it.x) / div;
    y = sc_.ea.cwiseProduct(it.y) / (sc_.cscale * div);
    z = sc_.eg.cwiseProduct(it.z) / (sc_.cscale * div);
    s = it.s.cwiseQuotient(sc_.eg) / div;
  }

  static double inf_norm(const Vec& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

  Metrics measure(const Iterate& it) const {
    Vec x, y, z, s;
    unscale(it, it.tau, x, y, z, s);
    Metrics m;
    const double pa = inf_norm(orig_.A * x - orig_.b) / (1.0 + inf_norm(orig_.b));
    const double pg = inf_norm(orig_.G * x + s - orig_.h) / (1.0 + inf_norm(orig_.h));
    m.pres = std::max(pa, pg);
    m.dres = inf_norm(orig_.A.transpose() * y + orig_.G.transpose() * z + orig_.c) /
             (1.0 + inf_norm(orig_.c));
    m.pcost = orig_.c.dot(x);
    m.dcost = -orig_.b.dot(y) - orig_.h.dot(z);
    m.gap = std::abs(s.dot(z));
    m.relgap = m.gap / std::max(1.0, std::abs(m.pcost));
    return m;
  }

  std::optional<SolveStatus> certificate(const Iterate& it) const {
    Vec x, y, z, s;
    unscale(it, 1.0, x, y, z, s);
    const double tol = set_.feasibility_tolerance;
    const double hz = orig_.b.dot(y) + orig_.h.dot(z);
    if (hz < 0.0) {
      const double res = inf_norm(orig_.A.transpose() * y + orig_.G.transpose() * z) / -hz;
      if (res <= tol) return SolveStatus::Infeasible;
    }
    const double cx = orig_.c.dot(x);
    if (cx < 0.0) {
      const double res = std::max(inf_norm(orig_.A * x), inf_norm(orig_.G * x + s)) / -cx;
      if (res <= tol) return SolveStatus::Unbounded;
    }
    return std::nullopt;
  }

  ConicSolution finish(const Iterate& it, const Metrics& met, SolveStatus status,
                       std::string message, bool reduced) const {
    ConicSolution out;
    out.status = status;
    Vec x, y, z, s;
    unscale(it, it.tau, x, y, z, s);
    out.values.assign(x.data(), x.data() + x.size());
    out.objective_value = met.pcost + orig_.objective_constant;
    out.stats.iterations = iterations_;
    out.stats.primal_residual = met.pres;
    out.stats.dual_residual = met.dres;
    out.stats.gap = met.gap;
    out.stats.relative_gap = met.relgap;
    out.stats.reduced_accuracy = reduced;
    out.stats.message = std::move(message);
    return out;
  }

  const StandardForm& orig_;
  StandardForm f_;
  Scaling sc_;
  SolverSettings set_;
  ConeSet cones_;
  KktSystem kkt_;
  int iterations_ = 0;
};

}  // namespace

ConicSolution InteriorPointBackend::solve(const ConicProgram& program,
                                          const SolverSettings& settings) const {
  const auto start = std::chrono::steady_clock::now();
  const StandardForm original = to_standard_form(program);
  StandardForm scaled = original;
  Scaling sc = equilibrate(scaled);
  Solver solver(original, std::move(scaled), std::move(sc), settings);
  ConicSolution sol = solver.run();
  sol.stats.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

}  // namespace ccsoc
