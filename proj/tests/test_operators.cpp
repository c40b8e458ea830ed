#include "greedylr/operators.hpp"
#include "greedylr/reference.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <queue>
#include <random>

namespace {

using namespace greedylr;
using testsupport::random_instance;
using testsupport::random_matrix;
using testsupport::unvectorize;
using testsupport::vectorize;

TEST(LaplacianChain, ThreeNodeStencil) {
  const Mat l = Mat(laplacian_chain(3));
  Mat expect(3, 3);
  expect << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  EXPECT_EQ((l - expect).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LaplacianChain, RowSumsAndSymmetry) {
  for (Index n : {2, 5, 17}) {
    const SpMat l = laplacian_chain(n);
    EXPECT_EQ((l * Vec::Ones(n)).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((Mat(l) - Mat(l).transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_THROW(laplacian_chain(1), validation_error);
}

TEST(LaplacianGrid, FullTwoByThree) {
  // Cells row-major: 0 1 2 / 3 4 5. Corner degree 2, edge degree 3.
  const Mat l = Mat(laplacian_grid_masked(GridMask::full(2, 3)));
  Mat expect(6, 6);
  expect << 2, -1, 0, -1, 0, 0,
           -1, 3, -1, 0, -1, 0,
            0, -1, 2, 0, 0, -1,
           -1, 0, 0, 2, -1, 0,
            0, -1, 0, -1, 3, -1,
            0, 0, -1, 0, -1, 2;
  EXPECT_EQ((l - expect).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LaplacianGrid, OneRowDegeneratesToChain) {
  const Mat grid = Mat(laplacian_grid_masked(GridMask::full(1, 7)));
  const Mat chain = Mat(laplacian_chain(7));
  EXPECT_EQ((grid - chain).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LaplacianGrid, DisconnectedMaskIsBlockwiseZeroSum) {
  // Two L-shaped components; verified against a BFS connected-components oracle
  // on the mask adjacency.
  GridMask m;
  m.height = 3;
  m.width = 4;
  m.cells = {1, 1, 0, 0,
             1, 0, 0, 1,
             0, 0, 1, 1};
  const SpMat l = laplacian_grid_masked(m);
  const std::vector<Index> idx = grid_cell_index(m);

  // BFS component labels per solver index.
  std::vector<int> comp(static_cast<std::size_t>(m.count()), -1);
  int labels = 0;
  for (Index r = 0; r < m.height; ++r)
    for (Index c = 0; c < m.width; ++c) {
      if (!m.at(r, c) || comp[static_cast<std::size_t>(idx[r * m.width + c])] >= 0) continue;
      std::queue<std::pair<Index, Index>> q;
      q.push({r, c});
      comp[static_cast<std::size_t>(idx[r * m.width + c])] = labels;
      while (!q.empty()) {
        auto [rr, cc] = q.front();
        q.pop();
        const Index dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const Index r2 = rr + dr[k], c2 = cc + dc[k];
          if (r2 < 0 || r2 >= m.height || c2 < 0 || c2 >= m.width || !m.at(r2, c2)) continue;
          Index i2 = idx[r2 * m.width + c2];
          if (comp[static_cast<std::size_t>(i2)] < 0) {
            comp[static_cast<std::size_t>(i2)] = labels;
            q.push({r2, c2});
          }
        }
      }
      ++labels;
    }
  ASSERT_EQ(labels, 2);

  // No coupling across components, and each component's rows sum to zero.
  const Mat ld = Mat(l);
  for (Index i = 0; i < ld.rows(); ++i)
    for (Index j = 0; j < ld.cols(); ++j)
      if (comp[static_cast<std::size_t>(i)] != comp[static_cast<std::size_t>(j)])
        EXPECT_EQ(ld(i, j), 0.0);
  for (int g = 0; g < labels; ++g) {
    Vec ind = Vec::Zero(ld.rows());
    for (Index i = 0; i < ld.rows(); ++i)
      if (comp[static_cast<std::size_t>(i)] == g) ind(i) = 1.0;
    EXPECT_EQ((ld * ind).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(LaplacianGrid, RejectsDegenerateMasks) {
  GridMask empty = GridMask::full(2, 2);
  empty.cells = {0, 0, 0, 0};
  EXPECT_THROW(laplacian_grid_masked(empty), validation_error);
  GridMask single = GridMask::full(2, 2);
  single.cells = {1, 0, 0, 0};
  EXPECT_THROW(laplacian_grid_masked(single), validation_error);
}

// vec(B(W)) must equal the smoothing part of the Kronecker system applied to vec(W);
// this is the independent route through explicit Kronecker products.
TEST(Operators, ApplyBMatchesKroneckerSmoother) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<Index> dim(3, 8), injs(1, 4);
    const ProblemInstance p = random_instance(rng, dim(rng), dim(rng), injs(rng));
    const Mat lx = Mat(p.lx), ly = Mat(p.ly);
    const Mat iy = Mat::Identity(p.n_y(), p.n_y());
    const Mat ix = Mat::Identity(p.n_x(), p.n_x());
    const Mat bk = kron(lx * lx, iy) + 2.0 * kron(lx, ly) + kron(ix, ly * ly);
    const Mat w = random_matrix(rng, p.n_y(), p.n_x());
    const Mat via_kron = unvectorize(bk * vectorize(w), p.n_y(), p.n_x());
    const double scale = std::max(1.0, via_kron.cwiseAbs().maxCoeff());
    EXPECT_LE((apply_B(p, w) - via_kron).cwiseAbs().maxCoeff(), 1e-11 * scale);
  }
}

TEST(Operators, ApplyAMatchesKroneckerSystem) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<Index> dim(3, 8), injs(1, 4);
    const ProblemInstance p = random_instance(rng, dim(rng), dim(rng), injs(rng));
    const Mat a = kronecker_system(p);
    const Mat w = random_matrix(rng, p.n_y(), p.n_x());
    const Mat via_kron = unvectorize(a * vectorize(w), p.n_y(), p.n_x());
    const double scale = std::max(1.0, via_kron.cwiseAbs().maxCoeff());
    EXPECT_LE((apply_A(p, w) - via_kron).cwiseAbs().maxCoeff(), 1e-11 * scale);
  }
}

TEST(Operators, ApplyCWithZeroMaskIsZero) {
  std::mt19937_64 rng(23);
  ProblemInstance p = random_instance(rng, 5, 4, 2);
  p.omega.setZero();
  const Mat w = random_matrix(rng, 5, 4);
  EXPECT_EQ(apply_C(p, w).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Operators, OperatorIsSelfAdjoint) {
  // <A(W1), W2>_F == <W1, A(W2)>_F for the Frobenius inner product.
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<Index> dim(3, 7), injs(1, 3);
    const ProblemInstance p = random_instance(rng, dim(rng), dim(rng), injs(rng));
    const Mat w1 = random_matrix(rng, p.n_y(), p.n_x());
    const Mat w2 = random_matrix(rng, p.n_y(), p.n_x());
    const double lhs = apply_A(p, w1).cwiseProduct(w2).sum();
    const double rhs_ip = w1.cwiseProduct(apply_A(p, w2)).sum();
    EXPECT_NEAR(lhs, rhs_ip, 1e-11 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(Operators, FactoredPathsMatchDense) {
  std::mt19937_64 rng(25);
  for (int trial = 0; trial < 15; ++trial) {
    std::uniform_int_distribution<Index> dim(3, 8), injs(1, 4), ranks(0, 3);
    const Index n_y = dim(rng), n_x = dim(rng), k = ranks(rng);
    const ProblemInstance p = random_instance(rng, n_y, n_x, injs(rng));
    const Factored w{random_matrix(rng, n_y, k), random_matrix(rng, n_x, k)};
    const Mat wd = w.dense();
    EXPECT_LE((apply_B(p, w).dense() - apply_B(p, wd)).cwiseAbs().maxCoeff(), 1e-11);
    EXPECT_LE((apply_C(p, w).dense() - apply_C(p, wd)).cwiseAbs().maxCoeff(), 1e-11);
    EXPECT_LE((apply_A(p, w).dense() - apply_A(p, wd)).cwiseAbs().maxCoeff(), 1e-11);
  }
}

TEST(Operators, RhsMatchesDefinition) {
  std::mt19937_64 rng(26);
  const ProblemInstance p = random_instance(rng, 6, 5, 3);
  const Mat expect = p.omega.cwiseProduct(p.y) * p.x.transpose();
  EXPECT_EQ((rhs(p).dense() - expect).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(rhs(p).rank(), 3);
}

TEST(ResidualHandle, MatchesDenseResidual) {
  std::mt19937_64 rng(27);
  for (int trial = 0; trial < 10; ++trial) {
    std::uniform_int_distribution<Index> dim(4, 8), injs(1, 3), ranks(0, 3);
    const Index n_y = dim(rng), n_x = dim(rng), j = ranks(rng);
    const ProblemInstance p = random_instance(rng, n_y, n_x, injs(rng));
    LowRankSolution w;
    w.u = testsupport::random_orthonormal(rng, n_y, j);
    w.v = testsupport::random_orthonormal(rng, n_x, j);
    w.z = random_matrix(rng, j, j);
    const ResidualHandle h(p, w);
    const Mat r_dense = rhs(p).dense() - apply_A(p, Mat(w.u * w.z * w.v.transpose()));
    const double scale = std::max(1.0, r_dense.cwiseAbs().maxCoeff());
    EXPECT_LE((h.dense() - r_dense).cwiseAbs().maxCoeff(), 1e-11 * scale);
    const Vec v = testsupport::random_matrix(rng, n_x, 1);
    const Vec u = testsupport::random_matrix(rng, n_y, 1);
    EXPECT_LE((h.apply(v) - r_dense * v).cwiseAbs().maxCoeff(), 1e-11 * scale);
    EXPECT_LE((h.apply_t(u) - r_dense.transpose() * u).cwiseAbs().maxCoeff(), 1e-11 * scale);
    EXPECT_NEAR(h.norm(), r_dense.norm(), 1e-11 * std::max(1.0, r_dense.norm()));
  }
}

TEST(ResidualHandle, StaleAfterRankChange) {
  std::mt19937_64 rng(28);
  const ProblemInstance p = random_instance(rng, 5, 4, 2);
  LowRankSolution w = LowRankSolution::zero(5, 4);
  const ResidualHandle h(p, w);
  EXPECT_NO_THROW(h.apply(Vec::Ones(4)));
  w.u = testsupport::random_orthonormal(rng, 5, 1);
  w.v = testsupport::random_orthonormal(rng, 4, 1);
  w.z = Mat::Ones(1, 1);
  EXPECT_THROW(h.apply(Vec::Ones(4)), solver_error);
  EXPECT_THROW(h.apply_t(Vec::Ones(5)), solver_error);
  EXPECT_THROW(h.norm(), solver_error);
}

TEST(ResidualHandle, DenseRespectsBudget) {
  std::mt19937_64 rng(29);
  const ProblemInstance p = random_instance(rng, 6, 5, 2);
  const ResidualHandle h(p, LowRankSolution::zero(6, 5));
  EXPECT_THROW(h.dense(/*budget=*/10), validation_error);
  EXPECT_NO_THROW(h.dense());
}

TEST(Operators, ShapeChecks) {
  std::mt19937_64 rng(30);
  const ProblemInstance p = random_instance(rng, 5, 4, 2);
  EXPECT_THROW(apply_B(p, Mat(Mat::Zero(4, 5))), validation_error);
  EXPECT_THROW(apply_C(p, Mat(Mat::Zero(5, 5))), validation_error);
  const ResidualHandle h(p, LowRankSolution::zero(5, 4));
  EXPECT_THROW(h.apply(Vec::Ones(5)), validation_error);
  EXPECT_THROW(h.apply_t(Vec::Ones(4)), validation_error);
}

}  // namespace
