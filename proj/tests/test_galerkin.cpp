#include "greedylr/als.hpp"
#include "greedylr/galerkin.hpp"
#include "greedylr/reference.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <random>

namespace {

using namespace greedylr;
using testsupport::random_instance;
using testsupport::random_matrix;
using testsupport::random_orthonormal;
using testsupport::unvectorize;
using testsupport::vectorize;

double max_abs_diff(const Mat& a, const Mat& b) { return (a - b).cwiseAbs().maxCoeff(); }

TEST(Project, RankOneBlocksMatchAlsScalars) {
  std::mt19937_64 rng(71);
  const ProblemInstance p = random_instance(rng, 7, 6, 3);
  const LowRankSolution w0 = LowRankSolution::zero(7, 6);
  const ResidualHandle r(p, w0);
  Vec u = random_matrix(rng, 7, 1), v = random_matrix(rng, 6, 1);
  u.normalize();
  v.normalize();
  AlsWorkspace ws(p, 0);
  solve_u(ws, r, v);   // fills the v-side scalars
  solve_v(ws, r, u);   // fills the u-side scalars
  const ProjectedSystem s = project(p, u, v);
  ASSERT_EQ(s.rank, 1);
  EXPECT_NEAR(s.lx2_proj(0, 0), ws.scalars.vt_lx2_v, 1e-12 * (1.0 + ws.scalars.vt_lx2_v));
  EXPECT_NEAR(s.lx_proj(0, 0), ws.scalars.vt_lx_v, 1e-12 * (1.0 + std::abs(ws.scalars.vt_lx_v)));
  EXPECT_NEAR(s.ly2_proj(0, 0), ws.scalars.ut_ly2_u, 1e-12 * (1.0 + ws.scalars.ut_ly2_u));
  EXPECT_NEAR(s.ly_proj(0, 0), ws.scalars.ut_ly_u, 1e-12 * (1.0 + std::abs(ws.scalars.ut_ly_u)));
  for (Index a = 0; a < p.n_inj(); ++a) {
    EXPECT_NEAR(s.mask_proj[static_cast<std::size_t>(a)](0, 0), ws.scalars.mask_u(a), 1e-12);
    EXPECT_NEAR(s.xv(0, a), ws.scalars.xt_v(a), 1e-12);
  }
}

TEST(Project, FullSpaceBasisRecoversOperators) {
  std::mt19937_64 rng(72);
  const Index n = 6;
  const ProblemInstance p = random_instance(rng, n, n, 3);
  const Mat id = Mat::Identity(n, n);
  const ProjectedSystem s = project(p, id, id);
  EXPECT_LE(max_abs_diff(s.lx_proj, Mat(p.lx)), 1e-13);
  EXPECT_LE(max_abs_diff(s.lx2_proj, Mat(p.lx2)), 1e-13);
  EXPECT_LE(max_abs_diff(s.ly_proj, Mat(p.ly)), 1e-13);
  EXPECT_LE(max_abs_diff(s.ly2_proj, Mat(p.ly2)), 1e-13);
  for (Index a = 0; a < p.n_inj(); ++a)
    EXPECT_LE(max_abs_diff(s.mask_proj[static_cast<std::size_t>(a)],
                           Mat(p.omega.col(a).asDiagonal())), 1e-13);
  EXPECT_LE(max_abs_diff(s.rhs_proj, rhs(p).dense()), 1e-12);
  const Mat z = random_matrix(rng, n, n);
  EXPECT_LE(max_abs_diff(projected_apply(p, s, z), apply_A(p, z)),
            1e-12 * apply_A(p, z).cwiseAbs().maxCoeff());
}

TEST(Project, IncrementalMatchesScratch) {
  std::mt19937_64 rng(73);
  const ProblemInstance p = random_instance(rng, 12, 10, 4);
  const Index j = 5;
  const Mat u = random_orthonormal(rng, 12, j);
  const Mat v = random_orthonormal(rng, 10, j);
  const ProjectedSystem prev = project(p, u.leftCols(j - 1), v.leftCols(j - 1));
  const ProjectedSystem inc = project(p, u, v, &prev);
  const ProjectedSystem scr = project(p, u, v);
  auto close = [&](const Mat& a, const Mat& b) {
    EXPECT_LE(max_abs_diff(a, b), 1e-13 * (1.0 + b.cwiseAbs().maxCoeff()));
  };
  close(inc.lx_proj, scr.lx_proj);
  close(inc.lx2_proj, scr.lx2_proj);
  close(inc.ly_proj, scr.ly_proj);
  close(inc.ly2_proj, scr.ly2_proj);
  for (std::size_t a = 0; a < inc.mask_proj.size(); ++a)
    close(inc.mask_proj[a], scr.mask_proj[a]);
  close(inc.xv, scr.xv);
  close(inc.uy, scr.uy);
  close(inc.rhs_proj, scr.rhs_proj);
}

TEST(Project, RankZeroPreviousFallsBackToScratch) {
  std::mt19937_64 rng(74);
  const ProblemInstance p = random_instance(rng, 8, 7, 2);
  const Mat u = random_orthonormal(rng, 8, 1);
  const Mat v = random_orthonormal(rng, 7, 1);
  const ProjectedSystem empty;  // what the greedy loop holds before the first rank
  const ProjectedSystem inc = project(p, u, v, &empty);
  const ProjectedSystem scr = project(p, u, v);
  EXPECT_LE(max_abs_diff(inc.rhs_proj, scr.rhs_proj), 1e-14);
  EXPECT_LE(max_abs_diff(inc.lx2_proj, scr.lx2_proj), 1e-14);
}

TEST(Project, RejectsNonOrthonormalFactors) {
  std::mt19937_64 rng(75);
  const ProblemInstance p = random_instance(rng, 6, 5, 2);
  const Mat u = 2.0 * random_matrix(rng, 6, 2);
  const Mat v = random_orthonormal(rng, 5, 2);
  EXPECT_THROW(project(p, u, v), validation_error);
  EXPECT_THROW(project(p, random_orthonormal(rng, 6, 2), Mat(2.0 * v)), validation_error);
  EXPECT_THROW(project(p, random_orthonormal(rng, 6, 2), random_orthonormal(rng, 5, 3)),
               validation_error);
}

TEST(ProjectedApply, MatchesDenseOperatorOnLiftedCore) {
  std::mt19937_64 rng(76);
  for (int trial = 0; trial < 5; ++trial) {
    const ProblemInstance p = random_instance(rng, 11, 9, 3);
    const Index j = 4;
    const Mat u = random_orthonormal(rng, 11, j);
    const Mat v = random_orthonormal(rng, 9, j);
    const ProjectedSystem s = project(p, u, v);
    const Mat z = random_matrix(rng, j, j);
    const Mat expect = u.transpose() * apply_A(p, Mat(u * z * v.transpose())) * v;
    EXPECT_LE(max_abs_diff(projected_apply(p, s, z), expect),
              1e-11 * (1.0 + expect.cwiseAbs().maxCoeff()));
  }
}

TEST(SolveProjected, MatchesVectorizedDenseSolve) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    const ProblemInstance p = random_instance(rng, 10, 8, 3);
    const Index j = 3;
    const Mat u = random_orthonormal(rng, 10, j);
    const Mat v = random_orthonormal(rng, 8, j);
    const ProjectedSystem s = project(p, u, v);
    // Assemble the j^2 x j^2 matrix of the projected operator column by column.
    Mat big(j * j, j * j);
    for (Index c = 0; c < j * j; ++c) {
      Vec e = Vec::Zero(j * j);
      e(c) = 1.0;
      big.col(c) = vectorize(projected_apply(p, s, unvectorize(e, j, j)));
    }
    const Vec z_expect = big.ldlt().solve(vectorize(s.rhs_proj));
    const ProjectedSolve got = solve_projected(p, s, Mat(), 1e-13, 10000);
    EXPECT_TRUE(got.converged);
    EXPECT_LE((vectorize(got.z) - z_expect).norm(), 1e-9 * z_expect.norm());
  }
}

TEST(SolveProjected, ResidualHistoryMonotoneAndConverges) {
  std::mt19937_64 rng(78);
  long longest = 0;
  for (int trial = 0; trial < 4; ++trial) {
    const ProblemInstance p = random_instance(rng, 24, 20, 4, 1e4);
    const Index j = 10;
    const ProjectedSystem s =
        project(p, random_orthonormal(rng, 24, j), random_orthonormal(rng, 20, j));
    const ProjectedSolve got = solve_projected(p, s, Mat(), 1e-13, 10000);
    EXPECT_TRUE(got.converged);
    EXPECT_LE(got.relative_residual, 1e-13);
    ASSERT_GE(got.residual_history.size(), 2u);
    for (std::size_t k = 1; k < got.residual_history.size(); ++k)
      EXPECT_LE(got.residual_history[k],
                got.residual_history[k - 1] + 1e-12 * got.residual_history[0]);
    longest = std::max(longest, got.iterations);
    EXPECT_EQ(static_cast<long>(got.residual_history.size()), got.iterations + 1);
  }
  EXPECT_GT(longest, 50);  // ensures the drift-refresh path is exercised
}

TEST(SolveProjected, ReportedResidualMatchesLiftedOrthogonality) {
  // || U^T (D - A(U Z V^T)) V ||_F recomputed densely must respect the solver tolerance
  // relative to || U^T D V ||_F.
  std::mt19937_64 rng(79);
  const ProblemInstance p = random_instance(rng, 14, 12, 3);
  const Index j = 5;
  const Mat u = random_orthonormal(rng, 14, j);
  const Mat v = random_orthonormal(rng, 12, j);
  const ProjectedSystem s = project(p, u, v);
  const double tol = 5e-8;
  const ProjectedSolve got = solve_projected(p, s, Mat(), tol, 10000);
  ASSERT_TRUE(got.converged);
  const Mat w = u * got.z * v.transpose();
  const Mat d = rhs(p).dense();
  const double lifted = (u.transpose() * (d - apply_A(p, w)) * v).norm();
  EXPECT_LE(lifted, tol * s.rhs_proj.norm() * 1.01);
  EXPECT_NEAR(lifted / s.rhs_proj.norm(), got.relative_residual,
              1e-6 * got.relative_residual + 1e-15);
}

TEST(SolveProjected, WarmStartFromGrownCoreSavesIterations) {
  std::mt19937_64 rng(80);
  const ProblemInstance p = random_instance(rng, 20, 18, 4);
  const Index j = 6;
  const Mat u = random_orthonormal(rng, 20, j);
  const Mat v = random_orthonormal(rng, 18, j);
  const ProjectedSystem prev = project(p, u.leftCols(j - 1), v.leftCols(j - 1));
  const ProjectedSolve at_prev = solve_projected(p, prev, Mat(), 1e-11, 10000);
  ASSERT_TRUE(at_prev.converged);
  const ProjectedSystem s = project(p, u, v, &prev);
  Mat z0 = Mat::Zero(j, j);
  z0.topLeftCorner(j - 1, j - 1) = at_prev.z;
  const ProjectedSolve warm = solve_projected(p, s, z0, 1e-11, 10000);
  const ProjectedSolve cold = solve_projected(p, s, Mat(), 1e-11, 10000);
  ASSERT_TRUE(warm.converged);
  ASSERT_TRUE(cold.converged);
  EXPECT_LE(warm.iterations, cold.iterations);
  EXPECT_LT(warm.residual_history.front(), cold.residual_history.front());
}

TEST(SolveProjected, ZeroRhsShortCircuits) {
  std::mt19937_64 rng(81);
  ProblemInstance p = random_instance(rng, 9, 8, 2);
  p.y.setZero();
  const ProjectedSystem s =
      project(p, random_orthonormal(rng, 9, 2), random_orthonormal(rng, 8, 2));
  EXPECT_EQ(s.rhs_proj.norm(), 0.0);
  const ProjectedSolve got = solve_projected(p, s, Mat(), 1e-10, 100);
  EXPECT_TRUE(got.converged);
  EXPECT_EQ(got.iterations, 0);
  EXPECT_EQ(got.z.norm(), 0.0);
}

TEST(SolveProjected, IndefiniteOperatorThrows) {
  std::mt19937_64 rng(82);
  const ProblemInstance p = random_instance(rng, 4, 4, 1);
  ProjectedSystem s;
  s.rank = 2;
  s.lx_proj = s.lx2_proj = s.ly_proj = Mat::Zero(2, 2);
  s.ly2_proj = -Mat::Identity(2, 2);  // makes the operator -lambda * Z
  s.mask_proj = {Mat::Zero(2, 2)};
  s.xv = Mat::Zero(2, 1);
  s.uy = Mat::Zero(2, 1);
  s.rhs_proj = Mat::Ones(2, 2);
  EXPECT_THROW(solve_projected(p, s, Mat(), 1e-10, 100), solver_error);
}

TEST(SolveProjected, RejectsBadArguments) {
  std::mt19937_64 rng(83);
  const ProblemInstance p = random_instance(rng, 6, 5, 2);
  const ProjectedSystem s =
      project(p, random_orthonormal(rng, 6, 2), random_orthonormal(rng, 5, 2));
  EXPECT_THROW(solve_projected(p, s, Mat::Zero(3, 3), 1e-10, 100), validation_error);
  EXPECT_THROW(solve_projected(p, s, Mat(), 0.0, 100), validation_error);
  EXPECT_THROW(solve_projected(p, s, Mat(), 1e-10, 0), validation_error);
  EXPECT_THROW(projected_apply(p, s, Mat::Zero(3, 3)), validation_error);
}

}  // namespace
