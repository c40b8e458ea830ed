#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>

namespace greedylr {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

// Entry budget for anything that materializes a large dense object (full W, the
// Kronecker system matrix, ...). Callers may pass a larger budget explicitly.
inline constexpr Index kDenseBudget = 1'000'000;

// Low-rank product left * right^T, kept factored so rank-structured results of the
// operators (residuals, right-hand sides) never touch n_Y x n_X storage.
struct Factored {
  Mat left;   // m x k
  Mat right;  // n x k
  Index rows() const { return left.rows(); }
  Index cols() const { return right.rows(); }
  Index rank() const { return left.cols(); }
  Mat dense() const { return left * right.transpose(); }
};

// ||left * right^T||_F via the k x k Gram matrices: tr((L^T L)(R^T R)).
inline double frobenius_norm(const Factored& f) {
  if (f.rank() == 0) return 0.0;
  const Mat gl = f.left.transpose() * f.left;
  const Mat gr = f.right.transpose() * f.right;
  const double sq = gl.cwiseProduct(gr).sum();
  return std::sqrt(std::max(0.0, sq));
}

// One regression problem: lambda * B(W) + C(W) = D with
//   B(W) = W Lx^2 + 2 Ly W Lx + Ly^2 W,
//   C(W) = sum_a diag(omega_a) W x_a x_a^T,
//   D    = (omega o y) x^T.
// omega uses the internal convention 1 = observed, 0 = masked. lx2/ly2 are cached
// squares; build them through build_problem so the invariants hold.
struct ProblemInstance {
  SpMat lx, ly;    // symmetric graph Laplacians, n_X x n_X and n_Y x n_Y
  SpMat lx2, ly2;  // cached Lx^2, Ly^2
  Mat x;           // n_X x n_inj source fluorescence
  Mat y;           // n_Y x n_inj target fluorescence
  Mat omega;       // n_Y x n_inj binary observation mask
  double lambda = 0.0;      // effective smoothing weight
  double lambda_bar = 0.0;  // user-facing weight; lambda = lambda_bar * n_inj / n_X

  Index n_x() const { return lx.rows(); }
  Index n_y() const { return ly.rows(); }
  Index n_inj() const { return x.cols(); }
};

// W = U Z V^T with orthonormal U (n_Y x j) and V (n_X x j); Z is the j x j core.
struct LowRankSolution {
  Mat u, v, z;
  Index rank() const { return z.rows(); }
  Factored factored() const { return {u * z, v}; }

  static LowRankSolution zero(Index n_y, Index n_x) {
    LowRankSolution s;
    s.u.resize(n_y, 0);
    s.v.resize(n_x, 0);
    s.z.resize(0, 0);
    return s;
  }
};

struct SolveSettings {
  int max_rank = 1;             // greedy stops at this rank at the latest
  double tau = 1e-6;            // relative step tolerance on delta W
  double als_delta = 0.1;       // ALS stop: | ||u_hat||/||v_hat|| - 1 | <= als_delta
  int als_max_sweeps = 20;      // hard cap per rank-1 sketch
  int max_restarts = 5;         // degenerate-direction restarts before giving up
  double cg_tol_factor = 0.5;   // Galerkin CG tolerance = cg_tol_factor * tau
  long cg_max_iter = 10000;
  std::uint64_t seed = 0;
  bool warm_start = true;       // pad previous core as the CG initial guess
};

}  // namespace greedylr
