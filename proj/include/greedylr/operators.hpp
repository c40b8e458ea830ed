#pragma once

#include "greedylr/errors.hpp"
#include "greedylr/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace greedylr {

// 3-point chain Laplacian with free (Neumann) ends: diag [1, 2, ..., 2, 1], off-diag -1.
inline SpMat laplacian_chain(Index n) {
  if (n < 2) throw validation_error("laplacian_chain: need n >= 2");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(3 * n));
  for (Index i = 0; i < n; ++i) {
    const double deg = (i == 0 || i == n - 1) ? 1.0 : 2.0;
    trip.emplace_back(i, i, deg);
    if (i + 1 < n) {
      trip.emplace_back(i, i + 1, -1.0);
      trip.emplace_back(i + 1, i, -1.0);
    }
  }
  SpMat l(n, n);
  l.setFromTriplets(trip.begin(), trip.end());
  l.makeCompressed();
  return l;
}

// Binary occupancy grid; solver vectors index the true cells in row-major order.
struct GridMask {
  Index height = 0, width = 0;
  std::vector<std::uint8_t> cells;  // row-major, size height * width

  bool at(Index r, Index c) const { return cells[static_cast<std::size_t>(r * width + c)] != 0; }
  Index count() const {
    Index n = 0;
    for (auto c : cells) n += (c != 0);
    return n;
  }
  static GridMask full(Index height, Index width) {
    GridMask m;
    m.height = height;
    m.width = width;
    m.cells.assign(static_cast<std::size_t>(height * width), 1);
    return m;
  }
};

// Maps each true cell to its solver index (row-major scan order); -1 for masked cells.
inline std::vector<Index> grid_cell_index(const GridMask& m) {
  std::vector<Index> idx(m.cells.size(), -1);
  Index next = 0;
  for (std::size_t k = 0; k < m.cells.size(); ++k)
    if (m.cells[k] != 0) idx[k] = next++;
  return idx;
}

// 5-point grid Laplacian restricted to the mask's true cells, free boundary: the
// diagonal holds the count of true 4-neighbors, so row sums are exactly zero.
inline SpMat laplacian_grid_masked(const GridMask& m) {
  if (m.height < 1 || m.width < 1 || m.cells.size() != static_cast<std::size_t>(m.height * m.width))
    throw validation_error("laplacian_grid_masked: inconsistent mask shape");
  const Index n = m.count();
  if (n < 2) throw validation_error("laplacian_grid_masked: mask needs at least 2 true cells");
  const std::vector<Index> idx = grid_cell_index(m);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(5 * n));
  for (Index r = 0; r < m.height; ++r)
    for (Index c = 0; c < m.width; ++c) {
      if (!m.at(r, c)) continue;
      const Index i = idx[static_cast<std::size_t>(r * m.width + c)];
      Index deg = 0;
      const Index dr[4] = {-1, 1, 0, 0};
      const Index dc[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const Index rr = r + dr[k], cc = c + dc[k];
        if (rr < 0 || rr >= m.height || cc < 0 || cc >= m.width || !m.at(rr, cc)) continue;
        trip.emplace_back(i, idx[static_cast<std::size_t>(rr * m.width + cc)], -1.0);
        ++deg;
      }
      if (deg > 0) trip.emplace_back(i, i, static_cast<double>(deg));
    }
  SpMat l(n, n);
  l.setFromTriplets(trip.begin(), trip.end());
  l.makeCompressed();
  return l;
}

namespace detail {
inline void check_w_shape(const ProblemInstance& p, Index rows, Index cols,
                          const std::string& who) {
  if (rows != p.n_y() || cols != p.n_x())
    throw validation_error(who + ": W must be n_Y x n_X");
}
}  // namespace detail

// B(W) = W Lx^2 + 2 Ly W Lx + Ly^2 W, the squared two-sided smoothing operator.
inline Mat apply_B(const ProblemInstance& p, const Mat& w) {
  detail::check_w_shape(p, w.rows(), w.cols(), "apply_B");
  return w * p.lx2 + 2.0 * (p.ly * w) * p.lx + p.ly2 * w;
}

inline Factored apply_B(const ProblemInstance& p, const Factored& w) {
  detail::check_w_shape(p, w.rows(), w.cols(), "apply_B");
  const Index k = w.rank();
  Factored out;
  out.left.resize(p.n_y(), 3 * k);
  out.right.resize(p.n_x(), 3 * k);
  out.left << w.left, 2.0 * (p.ly * w.left), p.ly2 * w.left;
  out.right << p.lx2 * w.right, p.lx * w.right, w.right;
  return out;
}

// C(W) = sum_a diag(omega_a) W x_a x_a^T = (omega o (W x)) x^T; rank <= n_inj.
inline Mat apply_C(const ProblemInstance& p, const Mat& w) {
  detail::check_w_shape(p, w.rows(), w.cols(), "apply_C");
  return p.omega.cwiseProduct(w * p.x) * p.x.transpose();
}

inline Factored apply_C(const ProblemInstance& p, const Factored& w) {
  detail::check_w_shape(p, w.rows(), w.cols(), "apply_C");
  return {p.omega.cwiseProduct(w.left * (w.right.transpose() * p.x)), p.x};
}

// A(W) = lambda B(W) + C(W), the full normal-equations operator.
inline Mat apply_A(const ProblemInstance& p, const Mat& w) {
  return p.lambda * apply_B(p, w) + apply_C(p, w);
}

inline Factored apply_A(const ProblemInstance& p, const Factored& w) {
  Factored b = apply_B(p, w);
  Factored c = apply_C(p, w);
  Factored out;
  out.left.resize(p.n_y(), b.rank() + c.rank());
  out.right.resize(p.n_x(), b.rank() + c.rank());
  out.left << p.lambda * b.left, c.left;
  out.right << b.right, c.right;
  return out;
}

// Right-hand side D = (omega o y) x^T, kept at rank n_inj.
inline Factored rhs(const ProblemInstance& p) { return {p.omega.cwiseProduct(p.y), p.x}; }

// Implicit residual R = D - A(U Z V^T), stored as a rank-(n_inj + 3j) factorization:
//   R = [omega o (y - U Z V^T x)] x^T - lambda (U Z V^T Lx^2 + 2 Ly U Z V^T Lx + Ly^2 U Z V^T).
// The handle snapshots the factors; it refuses to act after the solution's rank moved on.
class ResidualHandle {
 public:
  ResidualHandle(const ProblemInstance& p, const LowRankSolution& w)
      : problem_(&p), solution_(&w), rank_at_creation_(w.rank()) {
    detail::check_w_shape(p, w.u.rows(), w.v.rows(), "ResidualHandle");
    const Index j = w.rank();
    const Mat uz = w.u * w.z;
    factors_.left.resize(p.n_y(), p.n_inj() + 3 * j);
    factors_.right.resize(p.n_x(), p.n_inj() + 3 * j);
    factors_.left << p.omega.cwiseProduct(p.y - uz * (w.v.transpose() * p.x)),
        -p.lambda * uz, -2.0 * p.lambda * (p.ly * uz), -p.lambda * (p.ly2 * uz);
    factors_.right << p.x, p.lx2 * w.v, p.lx * w.v, w.v;
  }

  // R v
  Vec apply(const Vec& v) const {
    check_fresh();
    if (v.size() != problem_->n_x()) throw validation_error("ResidualHandle::apply: bad size");
    return factors_.left * (factors_.right.transpose() * v);
  }

  // R^T u
  Vec apply_t(const Vec& u) const {
    check_fresh();
    if (u.size() != problem_->n_y()) throw validation_error("ResidualHandle::apply_t: bad size");
    return factors_.right * (factors_.left.transpose() * u);
  }

  double norm() const {
    check_fresh();
    return frobenius_norm(factors_);
  }

  const Factored& factored() const {
    check_fresh();
    return factors_;
  }

  Mat dense(Index budget = kDenseBudget) const {
    check_fresh();
    if (problem_->n_y() * problem_->n_x() > budget)
      throw validation_error("ResidualHandle::dense: densification budget exceeded");
    return factors_.dense();
  }

  const ProblemInstance& problem() const { return *problem_; }

 private:
  void check_fresh() const {
    if (solution_->rank() != rank_at_creation_)
      throw solver_error("ResidualHandle: stale handle (solution rank changed since creation)");
  }

  const ProblemInstance* problem_;
  const LowRankSolution* solution_;
  Index rank_at_creation_;
  Factored factors_;
};

}  // namespace greedylr
