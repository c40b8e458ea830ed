#pragma once

#include "greedylr/errors.hpp"
#include "greedylr/operators.hpp"
#include "greedylr/types.hpp"

#include <Eigen/SparseCholesky>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace greedylr {

namespace detail {

// Pivot-ratio threshold below which an LDLT factorization is treated as singular.
inline constexpr double kPivotRatioTol = 1e-12;

inline SpMat sparse_diagonal(const Vec& d) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(d.size()));
  for (Index i = 0; i < d.size(); ++i) trip.emplace_back(i, i, d(i));
  SpMat m(d.size(), d.size());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

// SimplicialLDLT wrapper that reuses the symbolic analysis across calls with the
// same pattern, detects (near-)singular factors via the pivot ratio, and retries
// once with a 1e-12 * mean-diagonal shift before reporting failure.
class ShiftedLdlt {
 public:
  // Returns false when even the shifted factorization is unusable.
  bool compute(const SpMat& a, long& shift_retries) {
    if (!pattern_ready_) {
      base_.analyzePattern(a);
      pattern_ready_ = true;
    }
    base_.factorize(a);
    use_alt_ = false;
    bool suspect = base_.info() != Eigen::Success;
    if (!suspect) {
      const Vec d = base_.vectorD().cwiseAbs();
      const double dmax = d.maxCoeff();
      suspect = !(dmax > 0.0) || d.minCoeff() < kPivotRatioTol * dmax;
    }
    if (!suspect) return true;
    const Index n = a.rows();
    const double tr = Vec(a.diagonal()).sum();
    const double shift = 1e-12 * (tr > 0.0 ? tr / static_cast<double>(n) : 1.0);
    SpMat id(n, n);
    id.setIdentity();
    alt_.compute(SpMat(a + shift * id));
    ++shift_retries;
    use_alt_ = true;
    return alt_.info() == Eigen::Success;
  }

  Vec solve(const Vec& b) const { return use_alt_ ? Vec(alt_.solve(b)) : Vec(base_.solve(b)); }
  Mat solve(const Mat& b) const { return use_alt_ ? Mat(alt_.solve(b)) : Mat(base_.solve(b)); }
  bool shifted() const { return use_alt_; }

 private:
  Eigen::SimplicialLDLT<SpMat> base_, alt_;
  bool pattern_ready_ = false;
  bool use_alt_ = false;
};

}  // namespace detail

// Coefficients of the two reduced systems at the most recent half step.
struct AlsScalars {
  double vt_lx2_v = 0.0;  // v^T Lx^2 v = ||Lx v||^2
  double vt_lx_v = 0.0;   // v^T Lx v
  double ut_ly2_u = 0.0;  // u^T Ly^2 u = ||Ly u||^2
  double ut_ly_u = 0.0;   // u^T Ly u
  Vec xt_v;               // per injection: x_a^T v
  Vec mask_u;             // per injection: u^T diag(omega_a) u
};

// Reusable state for repeated rank-1 sketches on one problem: the seeded RNG
// stream, symbolic factorizations for both reduced systems, and failure counters.
struct AlsWorkspace {
  AlsWorkspace(const ProblemInstance& problem, std::uint64_t seed)
      : problem(&problem), rng(seed) {}

  const ProblemInstance* problem;
  std::mt19937_64 rng;
  detail::ShiftedLdlt u_factor, v_factor;
  AlsScalars scalars;
  long shift_retries = 0;
  long restarts = 0;
  long dense_fallbacks = 0;
};

namespace detail {

inline Vec checked_direct_solve(ShiftedLdlt& factor, const SpMat& a, const Vec& b,
                                long& shift_retries, const char* who) {
  if (!factor.compute(a, shift_retries))
    throw degenerate_direction(std::string(who) + ": reduced system is singular");
  const double bn = b.norm();
  if (bn == 0.0) return Vec::Zero(b.size());
  Vec x = factor.solve(b);
  auto residual_ok = [&](const Vec& xx) {
    return xx.allFinite() && (a * xx - b).norm() <= 1e-10 * bn;
  };
  if (residual_ok(x)) return x;
  if (x.allFinite()) {  // one step of iterative refinement
    x += factor.solve(Vec(b - a * x));
    if (residual_ok(x)) return x;
  }
  throw degenerate_direction(std::string(who) + ": direct solve residual check failed");
}

}  // namespace detail

// u-side half step: solve [lambda ((v^T Lx^2 v) I + 2 (v^T Lx v) Ly + Ly^2)
//                          + sum_a (x_a^T v)^2 diag(omega_a)] u_hat = R v.
inline Vec solve_u(AlsWorkspace& ws, const ResidualHandle& residual, const Vec& v) {
  const ProblemInstance& p = *ws.problem;
  if (v.size() != p.n_x()) throw validation_error("solve_u: v has wrong size");
  const Vec lxv = p.lx * v;
  ws.scalars.vt_lx2_v = lxv.squaredNorm();
  ws.scalars.vt_lx_v = v.dot(lxv);
  ws.scalars.xt_v = p.x.transpose() * v;
  const Vec diag = p.omega * ws.scalars.xt_v.cwiseAbs2();

  SpMat id(p.n_y(), p.n_y());
  id.setIdentity();
  const SpMat a = p.lambda * (ws.scalars.vt_lx2_v * id + 2.0 * ws.scalars.vt_lx_v * p.ly + p.ly2) +
                  detail::sparse_diagonal(diag);
  return detail::checked_direct_solve(ws.u_factor, a, residual.apply(v), ws.shift_retries,
                                      "solve_u");
}

// v-side half step: B_hat = S + Xt Xt^T with the sparse part
// S = lambda (Lx^2 + 2 (u^T Ly u) Lx + (u^T Ly^2 u) I) and Xt = X diag(sqrt(u^T omega_a u));
// solved through Sherman-Morrison-Woodbury around the factorized S, falling back to a
// dense solve when the capacitance matrix is ill-conditioned.
inline Vec solve_v(AlsWorkspace& ws, const ResidualHandle& residual, const Vec& u,
                   Index budget = kDenseBudget) {
  const ProblemInstance& p = *ws.problem;
  if (u.size() != p.n_y()) throw validation_error("solve_v: u has wrong size");
  const Vec lyu = p.ly * u;
  ws.scalars.ut_ly2_u = lyu.squaredNorm();
  ws.scalars.ut_ly_u = u.dot(lyu);
  ws.scalars.mask_u = p.omega.transpose() * u.cwiseAbs2();

  SpMat id(p.n_x(), p.n_x());
  id.setIdentity();
  const SpMat s =
      p.lambda * (p.lx2 + 2.0 * ws.scalars.ut_ly_u * p.lx + ws.scalars.ut_ly2_u * id);
  const Mat xt = p.x * ws.scalars.mask_u.cwiseSqrt().asDiagonal();
  const Vec b = residual.apply_t(u);
  const double bn = b.norm();

  auto apply_bhat = [&](const Vec& w) -> Vec { return s * w + xt * (xt.transpose() * w); };
  auto residual_ok = [&](const Vec& w) {
    return w.allFinite() && (apply_bhat(w) - b).norm() <= 1e-10 * bn;
  };
  auto dense_fallback = [&]() -> Vec {
    if (p.n_x() * p.n_x() > budget)
      throw solver_error("solve_v: dense fallback exceeds densification budget");
    ++ws.dense_fallbacks;
    const Mat bd = Mat(s) + xt * xt.transpose();
    const Vec w = bd.ldlt().solve(b);
    if (!residual_ok(w)) throw degenerate_direction("solve_v: dense fallback failed");
    return w;
  };

  if (!ws.v_factor.compute(s, ws.shift_retries)) {
    if (bn == 0.0) return Vec::Zero(b.size());
    return dense_fallback();
  }
  if (bn == 0.0) return Vec::Zero(b.size());

  const Mat t = ws.v_factor.solve(xt);
  Mat cap = Mat::Identity(p.n_inj(), p.n_inj()) + xt.transpose() * t;
  cap = 0.5 * (cap + cap.transpose());
  const Eigen::SelfAdjointEigenSolver<Mat> es(cap);
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  if (!(emin > 0.0) || emax / emin > 1e12) return dense_fallback();

  const Vec t0 = ws.v_factor.solve(b);
  Vec w = t0 - t * cap.ldlt().solve(Vec(xt.transpose() * t0));
  if (residual_ok(w)) return w;
  if (w.allFinite()) {  // one SMW refinement pass
    const Vec r = b - apply_bhat(w);
    const Vec c0 = ws.v_factor.solve(r);
    w += c0 - t * cap.ldlt().solve(Vec(xt.transpose() * c0));
    if (residual_ok(w)) return w;
  }
  return dense_fallback();
}

struct AlsResult {
  Vec u, v;           // unit vectors
  double magnitude = 0.0;  // ||v_hat|| of the final half step; scale of the increment
  int sweeps = 0;
};

// Observer for instrumented tests: called after every half step with the pair
// (left, right) whose outer product is the current rank-1 iterate.
using AlsProbe = std::function<void(const Vec& left, const Vec& right)>;

// One greedy sketch: alternate the two reduced solves from a randomized start until
// the norm ratio settles (|| ||u_hat||/||v_hat|| - 1 | <= als_delta), restarting on
// degenerate directions up to settings.max_restarts times.
inline AlsResult als_rank1(AlsWorkspace& ws, const ResidualHandle& residual,
                           const SolveSettings& settings, const AlsProbe& probe = {}) {
  const ProblemInstance& p = *ws.problem;
  const double rnorm = residual.norm();
  if (rnorm == 0.0) throw validation_error("als_rank1: residual is zero (already converged)");
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int attempt = 0; attempt <= settings.max_restarts; ++attempt) {
    if (attempt > 0) ++ws.restarts;
    Vec w(p.n_y());
    for (Index i = 0; i < w.size(); ++i) w(i) = gauss(ws.rng);
    w.normalize();
    Vec v = residual.apply_t(w);
    if (!v.allFinite() || v.norm() <= 1e-14 * rnorm) continue;  // degenerate start
    v.normalize();

    try {
      Vec u;
      for (int sweep = 1; sweep <= settings.als_max_sweeps; ++sweep) {
        const Vec u_hat = solve_u(ws, residual, v);
        const double nu = u_hat.norm();
        if (!u_hat.allFinite() || nu == 0.0)
          throw degenerate_direction("als_rank1: u half step vanished");
        u = u_hat / nu;
        if (probe) probe(u_hat, v);

        const Vec v_hat = solve_v(ws, residual, u);
        const double nv = v_hat.norm();
        if (!v_hat.allFinite() || nv == 0.0)
          throw degenerate_direction("als_rank1: v half step vanished");
        v = v_hat / nv;
        if (probe) probe(u, v_hat);

        if (std::abs(nu / nv - 1.0) <= settings.als_delta || sweep == settings.als_max_sweeps)
          return {u, v, nv, sweep};
      }
    } catch (const degenerate_direction&) {
      // fall through to a fresh random start
    }
  }
  throw solver_error("als_rank1: repeated degenerate starts exhausted restart budget");
}

}  // namespace greedylr
