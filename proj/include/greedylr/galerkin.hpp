#pragma once

#include "greedylr/errors.hpp"
#include "greedylr/operators.hpp"
#include "greedylr/types.hpp"

#include <cmath>
#include <utility>
#include <vector>

namespace greedylr {

// Coefficients of the j x j Galerkin equation
//   lambda (Z Mx2 + 2 My1 Z Mx1 + My2 Z) + sum_a P_a Z (q_a q_a^T) = D_proj
// with Mx1 = V^T Lx V, Mx2 = V^T Lx^2 V, My1 = U^T Ly U, My2 = U^T Ly^2 U,
// P_a = U^T diag(omega_a) U and q_a = V^T x_a (the data blocks stay rank one).
struct ProjectedSystem {
  Index rank = 0;
  Mat lx_proj, lx2_proj;   // j x j
  Mat ly_proj, ly2_proj;   // j x j
  std::vector<Mat> mask_proj;  // n_inj blocks, j x j
  Mat xv;                  // j x n_inj, column a = V^T x_a
  Mat uy;                  // j x n_inj, column a = U^T (omega_a o y_a)
  Mat rhs_proj;            // U^T D V = uy * xv^T
};

namespace detail {

inline void check_orthonormal(const Mat& q, const char* name) {
  if (q.cols() == 0) return;
  const Mat g = q.transpose() * q - Mat::Identity(q.cols(), q.cols());
  if (g.cwiseAbs().maxCoeff() > 1e-8)
    throw validation_error(std::string(name) + ": columns are not orthonormal");
}

inline void symmetrize(Mat& m) { m = 0.5 * (m + m.transpose()).eval(); }

}  // namespace detail

// Projects the operator onto span(U) x span(V). When `previous` holds the blocks of
// the leading (j-1)-column basis (the greedy append-only case), only the new row and
// column of each block are computed.
inline ProjectedSystem project(const ProblemInstance& p, const Mat& u, const Mat& v,
                               const ProjectedSystem* previous = nullptr) {
  const Index j = u.cols();
  if (v.cols() != j || j < 1) throw validation_error("project: U and V need matching rank >= 1");
  if (u.rows() != p.n_y() || v.rows() != p.n_x())
    throw validation_error("project: factor row counts must match the problem");
  detail::check_orthonormal(u, "project: U");
  detail::check_orthonormal(v, "project: V");

  ProjectedSystem s;
  s.rank = j;
  const Mat masked_y = p.omega.cwiseProduct(p.y);

  if (previous != nullptr && previous->rank == j - 1 && j >= 2) {
    auto grow = [&](const Mat& old, const Vec& new_col) {
      Mat m(j, j);
      m.topLeftCorner(j - 1, j - 1) = old;
      m.col(j - 1) = new_col;
      m.row(j - 1) = new_col.transpose();
      return m;
    };
    const Vec un = u.col(j - 1);
    const Vec vn = v.col(j - 1);
    s.lx_proj = grow(previous->lx_proj, v.transpose() * (p.lx * vn));
    s.lx2_proj = grow(previous->lx2_proj, v.transpose() * (p.lx2 * vn));
    s.ly_proj = grow(previous->ly_proj, u.transpose() * (p.ly * un));
    s.ly2_proj = grow(previous->ly2_proj, u.transpose() * (p.ly2 * un));
    s.mask_proj.reserve(static_cast<std::size_t>(p.n_inj()));
    for (Index a = 0; a < p.n_inj(); ++a)
      s.mask_proj.push_back(
          grow(previous->mask_proj[static_cast<std::size_t>(a)],
               u.transpose() * p.omega.col(a).cwiseProduct(un)));
    s.xv.resize(j, p.n_inj());
    s.xv << previous->xv, vn.transpose() * p.x;
    s.uy.resize(j, p.n_inj());
    s.uy << previous->uy, un.transpose() * masked_y;
  } else {
    s.lx_proj = v.transpose() * (p.lx * v);
    s.lx2_proj = v.transpose() * (p.lx2 * v);
    s.ly_proj = u.transpose() * (p.ly * u);
    s.ly2_proj = u.transpose() * (p.ly2 * u);
    detail::symmetrize(s.lx_proj);
    detail::symmetrize(s.lx2_proj);
    detail::symmetrize(s.ly_proj);
    detail::symmetrize(s.ly2_proj);
    s.mask_proj.reserve(static_cast<std::size_t>(p.n_inj()));
    for (Index a = 0; a < p.n_inj(); ++a) {
      Mat block = u.transpose() * p.omega.col(a).asDiagonal() * u;
      detail::symmetrize(block);
      s.mask_proj.push_back(std::move(block));
    }
    s.xv = v.transpose() * p.x;
    s.uy = u.transpose() * masked_y;
  }
  s.rhs_proj = s.uy * s.xv.transpose();
  return s;
}

// Applies the projected operator to a j x j core.
inline Mat projected_apply(const ProblemInstance& p, const ProjectedSystem& s, const Mat& z) {
  if (z.rows() != s.rank || z.cols() != s.rank)
    throw validation_error("projected_apply: core has wrong shape");
  Mat out = p.lambda * (z * s.lx2_proj + 2.0 * s.ly_proj * z * s.lx_proj + s.ly2_proj * z);
  for (Index a = 0; a < p.n_inj(); ++a) {
    const Vec q = s.xv.col(a);
    out.noalias() += (s.mask_proj[static_cast<std::size_t>(a)] * (z * q)) * q.transpose();
  }
  return out;
}

struct ProjectedSolve {
  Mat z;
  long iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;  // Frobenius norms, including the initial one
};

// Matrix-valued conjugate-residual iteration under the Frobenius inner product. The
// residual-minimizing step choice keeps the recorded residual norms non-increasing
// (plain CG only controls the error energy norm) at the same one operator application
// per iteration. z0 is the warm start (pass an empty matrix for a cold start); stops
// at ||rhs - op(Z)||_F <= tol * ||rhs||_F.
inline ProjectedSolve solve_projected(const ProblemInstance& p, const ProjectedSystem& s,
                                      const Mat& z0, double tol, long max_iter) {
  if (!(tol > 0.0) || max_iter < 1) throw validation_error("solve_projected: bad tol/max_iter");
  const Index j = s.rank;
  ProjectedSolve out;
  out.z = (z0.size() == 0) ? Mat::Zero(j, j) : z0;
  if (out.z.rows() != j || out.z.cols() != j)
    throw validation_error("solve_projected: warm start has wrong shape");
  const double dn = s.rhs_proj.norm();
  if (dn == 0.0) {
    out.z.setZero();
    out.converged = true;
    out.residual_history.push_back(0.0);
    return out;
  }
  Mat r = s.rhs_proj - projected_apply(p, s, out.z);
  out.residual_history.push_back(r.norm());
  out.relative_residual = r.norm() / dn;
  if (out.relative_residual <= tol) {
    out.converged = true;
    return out;
  }
  Mat ar = projected_apply(p, s, r);
  double rar = r.cwiseProduct(ar).sum();
  Mat q = r, aq = ar;
  for (long it = 1; it <= max_iter; ++it) {
    const double aq_sq = aq.squaredNorm();
    if (!(rar > 0.0) || !(aq_sq > 0.0))
      throw solver_error("solve_projected: projected operator lost positive definiteness");
    const double alpha = rar / aq_sq;
    out.z += alpha * q;
    r -= alpha * aq;
    if (it % 50 == 0) {  // drift refresh; restart the search direction
      r = s.rhs_proj - projected_apply(p, s, out.z);
      ar = projected_apply(p, s, r);
      rar = r.cwiseProduct(ar).sum();
      q = r;
      aq = ar;
    } else {
      ar = projected_apply(p, s, r);
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

}  // namespace greedylr
