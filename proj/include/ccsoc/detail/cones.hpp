#pragma once

// Second-order cone algebra used by the interior point backend. Cones are
// stored as (x0, x1) with x0 the scalar head; membership means x0 >= ||x1||.

#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace ccsoc::detail {

using Vec = Eigen::VectorXd;
using VecRef = Eigen::Ref<Eigen::VectorXd>;
using CVecRef = Eigen::Ref<const Eigen::VectorXd>;

/// x0^2 - ||x1||^2
inline double soc_residual(const CVecRef& x) {
  return x(0) * x(0) - x.tail(x.size() - 1).squaredNorm();
}

/// Jordan product x o y = (x'y, x0 y1 + y0 x1).
inline Vec jordan_product(const CVecRef& x, const CVecRef& y) {
  Vec r(x.size());
  r(0) = x.dot(y);
  r.tail(x.size() - 1) = x(0) * y.tail(y.size() - 1) + y(0) * x.tail(x.size() - 1);
  return r;
}

/// Solves lambda o r = v for r.
inline Vec jordan_divide(const CVecRef& lambda, const CVecRef& v) {
  const auto k = lambda.size() - 1;
  const double l0 = lambda(0);
  const double det = l0 * l0 - lambda.tail(k).squaredNorm();
  Vec r(lambda.size());
  r(0) = (l0 * v(0) - lambda.tail(k).dot(v.tail(k))) / det;
  r.tail(k) = (v.tail(k) - r(0) * lambda.tail(k)) / l0;
  return r;
}

/// Largest alpha (capped at `cap`) keeping x + alpha d in the cone, for x interior.
inline double soc_step_length(const CVecRef& x, const CVecRef& d, double cap) {
  const auto k = x.size() - 1;
  const double a = d(0) * d(0) - d.tail(k).squaredNorm();
  const double b = x(0) * d(0) - x.tail(k).dot(d.tail(k));
  const double c = std::max(soc_residual(x), 0.0);
  double best = cap;
  auto consider = [&](double alpha) {
    if (alpha > 0.0 && alpha < best) best = alpha;
  };
  if (d(0) < 0.0) consider(-x(0) / d(0));
  const double scale = std::max({std::abs(a), std::abs(b), c, 1e-300});
  if (std::abs(a) <= 1e-14 * scale) {
    if (b < 0.0) consider(-c / (2.0 * b));
    return best;
  }
  const double disc = b * b - a * c;
  if (disc < 0.0) return best;
  const double q = -(b + std::copysign(std::sqrt(disc), b));
  if (q != 0.0) {
    consider(q / a);
    consider(c / q);
  } else {
    consider(std::sqrt(-c / a));
  }
  return best;
}

/// Nesterov-Todd scaling for one cone block: W z = W^{-1} s = lambda.
struct SocScaling {
  double eta = 1.0;
  Vec w;  // normalized scaling point, w'Jw = 1

  /// W v = eta * Wbar v with Wbar = [[w0, w1'], [w1, I + w1 w1'/(1 + w0)]].
  Vec apply(const CVecRef& v) const {
    const auto k = w.size() - 1;
    const double w0 = w(0);
    const double dot = w.tail(k).dot(v.tail(k));
    Vec r(v.size());
    r(0) = w0 * v(0) + dot;
    r.tail(k) = v.tail(k) + (v(0) + dot / (1.0 + w0)) * w.tail(k);
    return eta * r;
  }

  /// W^{-1} v = (1/eta) J Wbar J v.
  Vec apply_inverse(const CVecRef& v) const {
    const auto k = w.size() - 1;
    const double w0 = w(0);
    const double dot = w.tail(k).dot(v.tail(k));
    Vec r(v.size());
    r(0) = w0 * v(0) - dot;
    r.tail(k) = v.tail(k) + (-v(0) + dot / (1.0 + w0)) * w.tail(k);
    return r / eta;
  }

  /// W^2 = eta^2 (2 w w' - J), dense.
  Eigen::MatrixXd squared() const {
    const auto n = w.size();
    Eigen::MatrixXd m = 2.0 * w * w.transpose();
    m(0, 0) -= 1.0;
    for (Eigen::Index i = 1; i < n; ++i) m(i, i) += 1.0;
    return eta * eta * m;
  }
};

inline double j_norm(const CVecRef& x) { return std::sqrt(std::max(soc_residual(x), 0.0)); }

inline SocScaling nt_scaling(const CVecRef& s, const CVecRef& z) {
  const auto k = s.size() - 1;
  const double sn = j_norm(s);
  const double zn = j_norm(z);
  Vec sb = s / sn;
  Vec zb = z / zn;
  const double gamma = std::sqrt(std::max((1.0 + sb.dot(zb)) / 2.0, 0.0));
  SocScaling sc;
  sc.eta = std::sqrt(sn / zn);
  sc.w.resize(s.size());
  sc.w(0) = (sb(0) + zb(0)) / (2.0 * gamma);
  sc.w.tail(k) = (sb.tail(k) - zb.tail(k)) / (2.0 * gamma);
  return sc;
}

}  // namespace ccsoc::detail
