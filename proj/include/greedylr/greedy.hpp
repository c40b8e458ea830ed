#pragma once

#include "greedylr/als.hpp"
#include "greedylr/errors.hpp"
#include "greedylr/galerkin.hpp"
#include "greedylr/operators.hpp"
#include "greedylr/problem.hpp"
#include "greedylr/types.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <chrono>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace greedylr {

enum class Termination { rank_reached, tolerance_met, stalled };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::rank_reached: return "rank-reached";
    case Termination::tolerance_met: return "tolerance-met";
    case Termination::stalled: return "stalled";
  }
  return "unknown";
}

struct RankRecord {
  Index rank = 0;
  double delta_w = 0.0;      // ||W_j - W_{j-1}||_F / ||W_j||_F
  int als_sweeps = 0;
  long cg_iterations = 0;
  bool cg_converged = true;
  double objective = 0.0;
  double seconds = 0.0;      // wall time spent on this rank
};

struct SolveReport {
  std::vector<RankRecord> records;
  Termination termination = Termination::rank_reached;
  double total_seconds = 0.0;
  long total_cg_iterations = 0;
  long als_restarts = 0;
  long shift_retries = 0;
};

struct GreedyResult {
  LowRankSolution solution;
  SolveReport report;
};

using ProgressFn = std::function<void(const RankRecord&)>;

// Relative step between nested iterates through Gram matrices only:
// ||Wc - Wp||^2 = ||Zc||^2 + ||Zp||^2 - 2 <Zc, (Uc^T Up) Zp (Vc^T Vp)^T>.
inline double delta_w(const LowRankSolution& prev, const LowRankSolution& curr) {
  detail::check_orthonormal(curr.u, "delta_w: current U");
  detail::check_orthonormal(curr.v, "delta_w: current V");
  detail::check_orthonormal(prev.u, "delta_w: previous U");
  detail::check_orthonormal(prev.v, "delta_w: previous V");
  const double cn_sq = curr.z.squaredNorm();
  if (cn_sq == 0.0) throw validation_error("delta_w: current solution is zero");
  if (prev.rank() == 0) return 1.0;
  const Mat gu = curr.u.transpose() * prev.u;
  const Mat gv = curr.v.transpose() * prev.v;
  const double cross = curr.z.cwiseProduct(gu * prev.z * gv.transpose()).sum();
  const double diff_sq = std::max(0.0, cn_sq + prev.z.squaredNorm() - 2.0 * cross);
  return std::sqrt(diff_sq / cn_sq);
}

struct SolutionSvd {
  Mat u_hat;  // n_Y x j, orthonormal
  Vec sigma;  // descending singular values
  Mat v_hat;  // n_X x j, orthonormal
};

// SVD of the core: Z = Uz diag(sigma) Vz^T lifts to W = (U Uz) diag(sigma) (V Vz)^T.
inline SolutionSvd solution_svd(const LowRankSolution& w) {
  SolutionSvd out;
  const Index j = w.rank();
  if (j == 0) {
    out.u_hat.resize(w.u.rows(), 0);
    out.v_hat.resize(w.v.rows(), 0);
    out.sigma.resize(0);
    return out;
  }
  const Eigen::BDCSVD<Mat> svd(w.z, Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.u_hat = w.u * svd.matrixU();
  out.sigma = svd.singularValues();
  out.v_hat = w.v * svd.matrixV();
  return out;
}

namespace detail {

// Two-pass modified Gram-Schmidt against the columns of an orthonormal Q;
// returns the norm of what is left.
inline double orthogonalize_against(const Mat& q, Vec& w) {
  for (int pass = 0; pass < 2; ++pass)
    for (Index k = 0; k < q.cols(); ++k) w -= q.col(k) * q.col(k).dot(w);
  return w.norm();
}

inline Mat padded_core(const Mat& z, Index j) {
  Mat z0 = Mat::Zero(j, j);
  z0.topLeftCorner(z.rows(), z.cols()) = z;
  return z0;
}

// Unit vector orthogonal to the columns of an orthonormal basis (which must not
// already span the whole space).
// Conjugate-residual refinement of a dense iterate of the full equation A(W) = D,
// the same recurrence solve_projected uses on the core. Only called at the
// full-rank limit of rectangular problems, where the factored iterate already
// stores as many numbers as a dense W.
struct DenseRefine {
  long iterations = 0;
  bool converged = false;
};

inline DenseRefine dense_residual_refine(const ProblemInstance& p, Mat& w, double tol,
                                         long max_iter) {
  DenseRefine out;
  const Mat d = rhs(p).dense();
  const double dn = d.norm();
  if (dn == 0.0) {
    w.setZero();
    out.converged = true;
    return out;
  }
  Mat r = d - apply_A(p, w);
  if (r.norm() <= tol * dn) {
    out.converged = true;
    return out;
  }
  Mat ar = apply_A(p, r);
  double rar = r.cwiseProduct(ar).sum();
  Mat q = r, aq = ar;
  for (long it = 1; it <= max_iter; ++it) {
    const double aq_sq = aq.squaredNorm();
    if (!(rar > 0.0) || !(aq_sq > 0.0))
      throw solver_error("greedy_solve: dense refinement lost positive definiteness");
    const double alpha = rar / aq_sq;
    w += alpha * q;
    r -= alpha * aq;
    if (it % 50 == 0) {  // drift refresh; restart the search direction
      r = d - apply_A(p, w);
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
    if (r.norm() <= tol * dn) {
      out.converged = true;
      break;
    }
  }
  return out;
}

inline Vec random_complement(std::mt19937_64& rng, const Mat& basis) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int attempt = 0; attempt < 32; ++attempt) {
    Vec w(basis.rows());
    for (Index i = 0; i < w.size(); ++i) w(i) = gauss(rng);
    const double rem = orthogonalize_against(basis, w);
    if (rem > 1e-8 * std::sqrt(static_cast<double>(basis.rows()))) return w / rem;
  }
  throw solver_error("greedy_solve: no direction found outside the current span");
}

}  // namespace detail

// Greedy rank-1 expansion with Galerkin refinement: sketch a direction by ALS,
// append it to the orthonormal bases, re-solve the projected equation (warm-started
// CG), and stop at max_rank or when the relative step delta W drops below tau.
inline GreedyResult greedy_solve(const ProblemInstance& p, const SolveSettings& settings,
                                 const ProgressFn& progress = {}) {
  if (settings.max_rank < 1 ||
      settings.max_rank > std::min(p.n_y(), p.n_x()))
    throw validation_error("greedy_solve: max_rank must be in [1, min(n_Y, n_X)]");
  if (!(settings.tau > 0.0) || !(settings.als_delta > 0.0) || !(settings.cg_tol_factor > 0.0))
    throw validation_error("greedy_solve: tolerances must be positive");

  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();
  auto seconds_since = [](clock::time_point t0) {
    return std::chrono::duration<double>(clock::now() - t0).count();
  };

  GreedyResult out;
  out.solution = LowRankSolution::zero(p.n_y(), p.n_x());
  out.report.termination = Termination::rank_reached;
  LowRankSolution& sol = out.solution;
  LowRankSolution prev = sol;

  AlsWorkspace ws(p, settings.seed);
  ProjectedSystem sys;
  const double d_norm = frobenius_norm(rhs(p));

  for (Index j = 1; j <= settings.max_rank; ++j) {
    const auto t_rank = clock::now();
    const ResidualHandle residual(p, sol);
    if (residual.norm() <= 1e-14 * d_norm) {  // nothing left to fit (covers D = 0)
      out.report.termination = Termination::tolerance_met;
      break;
    }

    // Sketch a new direction. A sketch with both factors already inside the spans
    // triggers a fresh ALS start instead of inserting a null column. When exactly one
    // factor collapses, the sketch still carries new information through the other
    // side (the residual then lives in a mixed block like U_perp^T R V, whose optimal
    // rank-1 factor on the collapsed side genuinely lies inside the span, so ALS
    // restarts would reproduce it); the collapsed side is completed with a random
    // complement direction and the Galerkin solve supplies the in-span coupling.
    Vec u_new, v_new;
    int sweeps = 0;
    bool accepted = false;
    for (int tries = 0; tries < settings.max_restarts; ++tries) {
      AlsResult als;
      try {
        als = als_rank1(ws, residual, settings);
      } catch (const solver_error&) {
        break;  // restart budget inside ALS exhausted
      }
      sweeps = als.sweeps;
      u_new = als.u;
      v_new = als.v;
      const double nu = detail::orthogonalize_against(sol.u, u_new);
      const double nv = detail::orthogonalize_against(sol.v, v_new);
      if (nu < 1e-12 && nv < 1e-12) continue;
      u_new = (nu < 1e-12) ? detail::random_complement(ws.rng, sol.u) : Vec(u_new / nu);
      v_new = (nv < 1e-12) ? detail::random_complement(ws.rng, sol.v) : Vec(v_new / nv);
      accepted = true;
      break;
    }
    if (!accepted) {
      out.report.termination = Termination::stalled;
      break;
    }

    sol.u.conservativeResize(p.n_y(), j);
    sol.u.col(j - 1) = u_new;
    sol.v.conservativeResize(p.n_x(), j);
    sol.v.col(j - 1) = v_new;
    const Mat gu = sol.u.transpose() * sol.u - Mat::Identity(j, j);
    const Mat gv = sol.v.transpose() * sol.v - Mat::Identity(j, j);
    if (std::max(gu.cwiseAbs().maxCoeff(), gv.cwiseAbs().maxCoeff()) > 1e-8)
      throw solver_error("greedy_solve: orthonormality loss beyond 1e-8");

    ProjectedSystem next = project(p, sol.u, sol.v, &sys);
    sys = std::move(next);
    const Mat z0 = settings.warm_start ? detail::padded_core(sol.z, j) : Mat::Zero(j, j);
    const ProjectedSolve cg =
        solve_projected(p, sys, z0, settings.cg_tol_factor * settings.tau, settings.cg_max_iter);
    sol.z = cg.z;

    // Full-rank limit of a rectangular problem: one basis is now complete, but the
    // other side still spans only a j-dimensional slice of its space, so the Galerkin
    // solution cannot reach the unconstrained minimizer. One dense conjugate-residual
    // pass over the whole space closes the gap, then the result is refolded into
    // orthonormal factors through a thin QR on the free side.
    long refine_iterations = 0;
    bool refine_converged = true;
    if (j == std::min(p.n_y(), p.n_x()) && p.n_y() != p.n_x() &&
        p.n_y() * p.n_x() <= kDenseBudget) {
      Mat w = sol.factored().dense();
      const detail::DenseRefine refine = detail::dense_residual_refine(
          p, w, settings.cg_tol_factor * settings.tau, settings.cg_max_iter);
      refine_iterations = refine.iterations;
      refine_converged = refine.converged;
      if (refine.iterations > 0) {
        if (p.n_y() < p.n_x()) {
          const Mat zt = (sol.u.transpose() * w).transpose();  // n_x x j
          Eigen::HouseholderQR<Mat> qr(zt);
          sol.v = qr.householderQ() * Mat::Identity(p.n_x(), j);
          sol.z =
              Mat(Mat(qr.matrixQR().topRows(j)).triangularView<Eigen::Upper>()).transpose();
        } else {
          const Mat wz = w * sol.v;  // n_y x j
          Eigen::HouseholderQR<Mat> qr(wz);
          sol.u = qr.householderQ() * Mat::Identity(p.n_y(), j);
          sol.z = Mat(Mat(qr.matrixQR().topRows(j)).triangularView<Eigen::Upper>());
        }
      }
    }

    RankRecord rec;
    rec.rank = j;
    rec.delta_w = (sol.z.squaredNorm() == 0.0) ? 0.0 : delta_w(prev, sol);
    rec.als_sweeps = sweeps;
    rec.cg_iterations = cg.iterations + refine_iterations;
    rec.cg_converged = cg.converged && refine_converged;
    rec.objective = evaluate_objective(p, sol);
    rec.seconds = seconds_since(t_rank);
    out.report.records.push_back(rec);
    out.report.total_cg_iterations += cg.iterations;
    if (progress) progress(rec);

    prev = sol;
    if (rec.delta_w <= settings.tau) {
      out.report.termination = Termination::tolerance_met;
      break;
    }
  }

  out.report.als_restarts = ws.restarts;
  out.report.shift_retries = ws.shift_retries;
  out.report.total_seconds = seconds_since(t_start);
  return out;
}

}  // namespace greedylr
