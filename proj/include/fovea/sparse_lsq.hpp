#pragma once

#include <cmath>
#include <concepts>
#include <optional>
#include <span>
#include <vector>

#include "fovea/common.hpp"

namespace fovea {

/// Matrix-free operator: y = A x and x = A^T y.
template <class Op>
concept LinearOperator = requires(const Op& op, std::span<const double> in, std::span<double> out) {
  { op.rows() } -> std::convertible_to<std::size_t>;
  { op.cols() } -> std::convertible_to<std::size_t>;
  op.apply(in, out);
  op.apply_transpose(in, out);
};

struct SolverOptions {
  double tolerance = 1e-8;  ///< ||r||/||b||, or ||A^T r||/(||A|| ||r||) for inconsistent systems
  int max_iterations = 2000;
  /// Column (Jacobi) scaling of the normal equations. Changes which solution
  /// is returned when A is rank deficient, so callers only enable it for
  /// full-rank systems.
  bool precondition = true;
};

struct SolverReport {
  int iterations = 0;
  double residual_norm = 0.0;      ///< ||b - A x||
  double relative_residual = 0.0;  ///< ||b - A x|| / ||b||
  double normal_residual = 0.0;    ///< ||A^T (b - A x)|| / ||A^T b||
  bool converged = false;
  bool rank_deficient = false;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace detail

/// CGLS for min ||A x - b||. Started from x = 0 (or any x0 in the row space
/// of A) without scaling it converges to the minimum-norm solution.
/// `column_scale`, when given, is D in the substitution x = D z.
template <LinearOperator Op>
SolverReport cgls(const Op& op, std::span<const double> b, std::vector<double>& x, const SolverOptions& options,
                  std::span<const double> column_scale = {}) {
  const std::size_t m = op.rows();
  const std::size_t n = op.cols();
  require(b.size() == m, "cgls: rhs length " + std::to_string(b.size()) + " != rows " + std::to_string(m));
  require(options.tolerance > 0 && options.max_iterations >= 0, "cgls: invalid solver options");
  const bool scaled = !column_scale.empty();
  require(!scaled || column_scale.size() == n, "cgls: column scale length mismatch");
  if (x.empty()) x.assign(n, 0.0);
  require(x.size() == n, "cgls: initial guess length mismatch");

  SolverReport rep;
  rep.rows = m;
  rep.cols = n;

  // Work in z with x = D z.
  std::vector<double> z(x);
  if (scaled)
    for (std::size_t j = 0; j < n; ++j) z[j] = column_scale[j] != 0 ? x[j] / column_scale[j] : 0.0;

  std::vector<double> tmp(n), r(m), s(n), p(n), q(m);
  auto apply_scaled = [&](std::span<const double> in, std::span<double> out) {
    if (!scaled) return op.apply(in, out);
    for (std::size_t j = 0; j < n; ++j) tmp[j] = column_scale[j] * in[j];
    op.apply(tmp, out);
  };
  auto apply_scaled_t = [&](std::span<const double> in, std::span<double> out) {
    op.apply_transpose(in, out);
    if (scaled)
      for (std::size_t j = 0; j < n; ++j) out[j] *= column_scale[j];
  };

  const double b_norm = detail::norm(b);
  std::vector<double> atb(n);
  apply_scaled_t(b, atb);
  const double atb_norm = detail::norm(atb);

  apply_scaled(z, r);
  for (std::size_t i = 0; i < m; ++i) r[i] = b[i] - r[i];
  apply_scaled_t(r, s);
  p = s;
  double gamma = detail::dot(s, s);

  // ||A D||_2 by a few power iterations, for the incompatible-system test
  double a_norm = 0.0;
  if (atb_norm > 0) {
    std::vector<double> v(atb), av(m);
    for (int it = 0; it < 12; ++it) {
      const double vn = detail::norm(v);
      if (vn == 0) break;
      for (auto& e : v) e /= vn;
      apply_scaled(v, av);
      a_norm = detail::norm(av);
      apply_scaled_t(av, v);
    }
  }

  // Stops when ||r|| <= tol ||b||, or when ||A^T r|| <= tol ||A|| ||r|| (the
  // least-squares optimum of an inconsistent system).
  auto done = [&](double r_norm, double s_norm) {
    rep.residual_norm = r_norm;
    rep.relative_residual = b_norm > 0 ? r_norm / b_norm : r_norm;
    rep.normal_residual = atb_norm > 0 ? s_norm / atb_norm : s_norm;
    return rep.relative_residual <= options.tolerance || s_norm <= options.tolerance * a_norm * r_norm;
  };

  rep.converged = done(detail::norm(r), std::sqrt(gamma));
  while (!rep.converged && rep.iterations < options.max_iterations) {
    apply_scaled(p, q);
    const double qq = detail::dot(q, q);
    if (qq <= 0) break;
    const double alpha = gamma / qq;
    for (std::size_t j = 0; j < n; ++j) z[j] += alpha * p[j];
    for (std::size_t i = 0; i < m; ++i) r[i] -= alpha * q[i];
    apply_scaled_t(r, s);
    const double gamma_next = detail::dot(s, s);
    ++rep.iterations;
    rep.converged = done(detail::norm(r), std::sqrt(gamma_next));
    const double beta = gamma_next / gamma;
    gamma = gamma_next;
    for (std::size_t j = 0; j < n; ++j) p[j] = s[j] + beta * p[j];
  }
  if (!rep.converged && gamma == 0.0) rep.converged = true;

  x = z;
  if (scaled)
    for (std::size_t j = 0; j < n; ++j) x[j] = column_scale[j] * z[j];
  return rep;
}

}  // namespace fovea
