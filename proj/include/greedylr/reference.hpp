#pragma once

#include "greedylr/errors.hpp"
#include "greedylr/operators.hpp"
#include "greedylr/types.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace greedylr {

inline Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Normal-equations matrix acting on vec(W) (column-major stacking of the n_Y x n_X W):
//   A = sum_a (x_a x_a^T) kron diag(omega_a) + lambda (Lx^2 kron I + 2 Lx kron Ly + I kron Ly^2).
inline Mat kronecker_system(const ProblemInstance& p, Index budget = kDenseBudget) {
  const Index n = p.n_y() * p.n_x();
  if (n * n > budget)
    throw validation_error("kronecker_system: densification budget exceeded");
  const Mat lx = Mat(p.lx), ly = Mat(p.ly);
  const Mat iy = Mat::Identity(p.n_y(), p.n_y());
  const Mat ix = Mat::Identity(p.n_x(), p.n_x());
  Mat a = p.lambda * (kron(lx * lx, iy) + 2.0 * kron(lx, ly) + kron(ix, ly * ly));
  for (Index k = 0; k < p.n_inj(); ++k) {
    const Vec xa = p.x.col(k);
    a += kron(Mat(xa * xa.transpose()), Mat(p.omega.col(k).asDiagonal()));
  }
  return a;
}

// Direct solve of A vec(W) = vec(D); the workhorse oracle for small instances.
inline Mat dense_solve(const ProblemInstance& p, Index budget = kDenseBudget) {
  const Mat a = kronecker_system(p, budget);
  const Mat d = rhs(p).dense();
  const Eigen::Map<const Vec> dv(d.data(), d.size());
  const Vec wv = a.ldlt().solve(dv);
  const double resid = (a * wv - dv).norm();
  if (!wv.allFinite() || resid > 1e-10 * std::max(dv.norm(), 1e-300))
    throw solver_error("dense_solve: direct solve residual check failed");
  return Eigen::Map<const Mat>(wv.data(), p.n_y(), p.n_x());
}

struct CgResult {
  Mat w;
  long iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;  // Frobenius norms, including the initial one
};

// Unpreconditioned matrix-valued Krylov baseline on the full space, the solver the
// greedy method is measured against. The residual-minimizing (conjugate-residual)
// step choice keeps the recorded residual norms non-increasing at the same single
// operator application per iteration. Stops at ||D - A(W)||_F <= tol * ||D||_F.
inline CgResult full_cg_solve(const ProblemInstance& p, double tol, long max_iter,
                              Index budget = kDenseBudget) {
  if (p.n_y() * p.n_x() > budget)
    throw validation_error("full_cg_solve: densification budget exceeded");
  if (!(tol > 0.0) || max_iter < 1) throw validation_error("full_cg_solve: bad tol/max_iter");
  CgResult out;
  out.w = Mat::Zero(p.n_y(), p.n_x());
  const Mat d = rhs(p).dense();
  const double dn = d.norm();
  if (dn == 0.0) {
    out.converged = true;
    out.residual_history.push_back(0.0);
    return out;
  }
  Mat r = d;  // residual at W = 0
  out.residual_history.push_back(dn);
  out.relative_residual = 1.0;
  if (out.relative_residual <= tol) {
    out.converged = true;
    return out;
  }
  Mat ar = apply_A(p, r);
  double rar = r.cwiseProduct(ar).sum();
  Mat q = r, aq = ar;
  for (long it = 1; it <= max_iter; ++it) {
    const double aq_sq = aq.squaredNorm();
    if (!(rar > 0.0) || !(aq_sq > 0.0))
      throw solver_error("full_cg_solve: operator not positive definite");
    const double alpha = rar / aq_sq;
    out.w += alpha * q;
    r -= alpha * aq;
    if (it % 50 == 0) {  // drift refresh; restart the search direction
      r = d - apply_A(p, out.w);
      ar = apply_A(p, r);
      rar = r.cwiseProduct(ar).sum();
      q = r;
      aq = ar;
    } else {
      ar = apply_A(p, r);
      const double rar_next = r.cwiseProduct(ar).sum();
      const double beta = rar_next / rar;
      q = r + beta * q;
      aq = ar + beta * aq;
      rar = rar_next;
    }
    out.iterations = it;
    out.relative_residual = r.norm() / dn;
    out.residual_history.push_back(r.norm());
    if (out.relative_residual <= tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

struct ErrorSummary {
  double rms = 0.0;            // ||Wr - Wstar||_F / sqrt(n_Y * n_X)
  double rel_frobenius = 0.0;  // ||Wr - Wstar||_F / ||Wstar||_F
  double linf = 0.0;           // max |Wr - Wstar| entrywise
};

namespace detail {

// Column view over a dense matrix or a factored product; lets the metrics stream
// column-by-column without materializing large operands.
struct ColumnView {
  const Mat* dense = nullptr;
  const Factored* fact = nullptr;
  Index rows() const { return dense ? dense->rows() : fact->rows(); }
  Index cols() const { return dense ? dense->cols() : fact->cols(); }
  Vec col(Index j) const {
    if (dense) return dense->col(j);
    return fact->left * fact->right.row(j).transpose();
  }
};

inline ErrorSummary errors_impl(const ColumnView& wr, const ColumnView& wstar) {
  if (wr.rows() != wstar.rows() || wr.cols() != wstar.cols())
    throw validation_error("errors: operand shapes differ");
  double diff_sq = 0.0, ref_sq = 0.0, linf = 0.0;
  for (Index j = 0; j < wr.cols(); ++j) {
    const Vec a = wr.col(j);
    const Vec b = wstar.col(j);
    diff_sq += (a - b).squaredNorm();
    ref_sq += b.squaredNorm();
    linf = std::max(linf, (a - b).cwiseAbs().maxCoeff());
  }
  if (ref_sq == 0.0) throw validation_error("errors: reference matrix is zero");
  ErrorSummary s;
  s.rms = std::sqrt(diff_sq / static_cast<double>(wr.rows() * wr.cols()));
  s.rel_frobenius = std::sqrt(diff_sq / ref_sq);
  s.linf = linf;
  return s;
}

}  // namespace detail

inline ErrorSummary errors(const Mat& wr, const Mat& wstar) {
  return detail::errors_impl({&wr, nullptr}, {&wstar, nullptr});
}
inline ErrorSummary errors(const Factored& wr, const Mat& wstar) {
  return detail::errors_impl({nullptr, &wr}, {&wstar, nullptr});
}
inline ErrorSummary errors(const Mat& wr, const Factored& wstar) {
  return detail::errors_impl({&wr, nullptr}, {nullptr, &wstar});
}
inline ErrorSummary errors(const Factored& wr, const Factored& wstar) {
  return detail::errors_impl({nullptr, &wr}, {nullptr, &wstar});
}

struct NonnegReport {
  long long negatives = 0;
  double min_entry = 0.0;
  Mat projected;  // max(W, 0)
};

inline NonnegReport nonneg_analysis(const Mat& w) {
  if (w.size() == 0) throw validation_error("nonneg_analysis: empty matrix");
  NonnegReport r;
  r.negatives = (w.array() < 0.0).count();
  r.min_entry = w.minCoeff();
  r.projected = w.cwiseMax(0.0);
  return r;
}

inline NonnegReport nonneg_analysis(const Factored& w, Index budget = kDenseBudget) {
  if (w.rows() * w.cols() > budget)
    throw validation_error("nonneg_analysis: densification budget exceeded");
  return nonneg_analysis(w.dense());
}

}  // namespace greedylr
