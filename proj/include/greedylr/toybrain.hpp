#pragma once

#include "greedylr/errors.hpp"
#include "greedylr/operators.hpp"
#include "greedylr/problem.hpp"
#include "greedylr/types.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>
#include <vector>

namespace greedylr {

// ----------------------------------------------------------------------------
// One-dimensional toy brain: n voxels on the unit interval connected by a chain
// Laplacian on both sides, a smooth translation-invariant connectivity kernel
// plus one off-diagonal hotspot, and a handful of contiguous injection sites
// whose voxels are masked out of the observations.
// ----------------------------------------------------------------------------

// Ground-truth connectivity from source coordinate x to target coordinate y.
inline double true_kernel(double x, double y) {
  const double d = (x - y) / 0.4;
  const double hx = x - 0.8, hy = y - 0.1;
  return std::exp(-d * d) + 0.9 * std::exp(-(hx * hx + hy * hy) / 0.04);
}

struct Injection {
  double center = 0.0;  // fraction of the unit domain
  double width = 0.0;   // fraction of the unit domain
};

struct ToySpec {
  Index n = 200;
  Index n_inj = 5;
  double noise_sigma = 0.1;
  double lambda_bar = 4000.0;
  std::uint64_t seed = 0;
};

struct ToyProblem {
  ProblemInstance problem;
  Mat w_true;             // n x n kernel samples, w_true(i, k) = true_kernel(x_k, x_i)
  double lattice_weight;  // quadrature weight h = 1/n; the regression target is h * w_true
  std::vector<Injection> injections;
};

namespace detail {

// Draws n_inj disjoint intervals with widths 0.12..0.22 of the domain. Widths sum to
// 0.6..1.1, so independent center draws essentially never pack; instead the widths
// are redrawn until they fit with slack and the intervals are laid out left to right
// with the free length split into uniform random gaps. Whole layouts are retried only
// when some interval fails to claim a lattice voxel of its own.
inline std::vector<Injection> place_injections(std::mt19937_64& rng, Index n_inj,
                                               const std::vector<double>& lattice) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const std::size_t m = static_cast<std::size_t>(n_inj);
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<double> widths(m);
    double total = 0.0;
    for (double& w : widths) {
      w = 0.12 + 0.1 * unif(rng);
      total += w;
    }
    if (total > 0.95) continue;
    std::vector<double> cuts(m + 1);
    for (std::size_t g = 0; g < m; ++g) cuts[g] = unif(rng);
    cuts[m] = 1.0;
    std::sort(cuts.begin(), cuts.end());
    const double free_len = 1.0 - total;

    std::vector<Injection> injections(m);
    std::vector<std::uint8_t> claimed(lattice.size(), 0);
    double cursor = free_len * cuts[0];
    bool ok = true;
    for (std::size_t a = 0; a < m && ok; ++a) {
      injections[a] = {cursor + 0.5 * widths[a], widths[a]};
      cursor += widths[a];
      if (a + 1 < m) cursor += free_len * (cuts[a + 1] - cuts[a]);
      bool any = false;
      for (std::size_t k = 0; k < lattice.size(); ++k) {
        if (std::abs(lattice[k] - injections[a].center) > 0.5 * widths[a]) continue;
        if (claimed[k] != 0) {
          ok = false;
          break;
        }
        claimed[k] = 1;
        any = true;
      }
      ok = ok && any;
    }
    if (ok) return injections;
  }
  throw solver_error("generate_toy: could not place disjoint injections in 100 attempts");
}

}  // namespace detail

inline ToyProblem generate_toy(const ToySpec& spec) {
  if (spec.n < 2) throw validation_error("generate_toy: need at least 2 voxels");
  if (spec.n_inj < 1) throw validation_error("generate_toy: need at least 1 injection");
  if (0.12 * static_cast<double>(spec.n_inj) > 1.0)
    throw validation_error("generate_toy: injections cannot fit in the unit interval");
  if (spec.noise_sigma < 0.0) throw validation_error("generate_toy: negative noise level");

  const Index n = spec.n;
  std::vector<double> lattice(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k)
    lattice[static_cast<std::size_t>(k)] = static_cast<double>(k) / static_cast<double>(n - 1);

  std::mt19937_64 rng(spec.seed);
  const std::vector<Injection> injections = detail::place_injections(rng, spec.n_inj, lattice);

  Mat x = Mat::Zero(n, spec.n_inj);
  for (Index a = 0; a < spec.n_inj; ++a)
    for (Index k = 0; k < n; ++k)
      if (std::abs(lattice[static_cast<std::size_t>(k)] - injections[static_cast<std::size_t>(a)].center) <=
          0.5 * injections[static_cast<std::size_t>(a)].width)
        x(k, a) = 1.0;
  const Mat omega = Mat::Ones(n, spec.n_inj) - x;

  Mat w_true(n, n);
  for (Index k = 0; k < n; ++k)
    for (Index i = 0; i < n; ++i)
      w_true(i, k) =
          true_kernel(lattice[static_cast<std::size_t>(k)], lattice[static_cast<std::size_t>(i)]);

  // The quadrature weight h turns h*W_true*x into a lattice approximation of the
  // kernel integral over the injection interval. Noise is stated in kernel units
  // (sigma relative to W_true*x) and rides along with the weight, so changing h
  // rescales the whole instance and the recovered W, nothing else.
  const double h = 1.0 / static_cast<double>(n);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat y = w_true * x;
  for (Index a = 0; a < spec.n_inj; ++a)
    for (Index i = 0; i < n; ++i) y(i, a) += spec.noise_sigma * gauss(rng);
  y = omega.cwiseProduct((h * y).eval());

  ToyProblem out;
  out.problem = build_problem(laplacian_chain(n), laplacian_chain(n), x, y, omega,
                              spec.lambda_bar);
  out.w_true = std::move(w_true);
  out.lattice_weight = h;
  out.injections = injections;
  return out;
}

// ----------------------------------------------------------------------------
// Two-dimensional synthetic: a height x width grid on both sides, a nonnegative
// low-rank ground truth assembled from Gaussian bumps, and rectangular injection
// patches. Used for scaling studies and the image-export path.
// ----------------------------------------------------------------------------

struct GridSpec {
  Index height = 20;
  Index width = 30;
  Index n_inj = 4;
  Index true_rank = 6;
  double noise_sigma = 0.1;
  double lambda_bar = 100.0;
  std::uint64_t seed = 0;
};

struct GridInjection {
  Index row0 = 0, col0 = 0;  // top-left cell of the rectangle
  Index rows = 0, cols = 0;
};

struct GridProblem {
  ProblemInstance problem;
  Factored w_true;        // nonnegative factors, rank = spec.true_rank
  double lattice_weight;  // quadrature weight h = 1/(height*width), as in the 1-d toy
  GridMask grid;          // full occupancy; carries the cell ordering for image export
  std::vector<GridInjection> injections;
};

namespace detail {

// One column of a bump factor: amplitude * exp(-||cell - center||^2 / (2 sigma^2))
// over normalized cell centers, hence strictly positive.
inline Vec bump_column(std::mt19937_64& rng, Index height, Index width) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double amp = 0.5 + unif(rng);
  const double cy = unif(rng), cx = unif(rng);
  const double sigma = 0.15 + 0.2 * unif(rng);
  Vec col(height * width);
  for (Index r = 0; r < height; ++r)
    for (Index c = 0; c < width; ++c) {
      const double py = (static_cast<double>(r) + 0.5) / static_cast<double>(height);
      const double px = (static_cast<double>(c) + 0.5) / static_cast<double>(width);
      const double d2 = (py - cy) * (py - cy) + (px - cx) * (px - cx);
      col(r * width + c) = amp * std::exp(-d2 / (2.0 * sigma * sigma));
    }
  return col;
}

inline GridInjection place_patch(std::mt19937_64& rng, Index height, Index width,
                                 std::vector<std::uint8_t>& claimed) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int attempt = 0; attempt < 100; ++attempt) {
    GridInjection inj;
    inj.rows = std::max<Index>(
        1, static_cast<Index>(std::lround((0.12 + 0.1 * unif(rng)) * static_cast<double>(height))));
    inj.cols = std::max<Index>(
        1, static_cast<Index>(std::lround((0.12 + 0.1 * unif(rng)) * static_cast<double>(width))));
    if (inj.rows > height || inj.cols > width) continue;
    inj.row0 = static_cast<Index>(unif(rng) * static_cast<double>(height - inj.rows + 1));
    inj.col0 = static_cast<Index>(unif(rng) * static_cast<double>(width - inj.cols + 1));
    bool collision = false;
    for (Index r = inj.row0; r < inj.row0 + inj.rows && !collision; ++r)
      for (Index c = inj.col0; c < inj.col0 + inj.cols; ++c)
        if (claimed[static_cast<std::size_t>(r * width + c)] != 0) {
          collision = true;
          break;
        }
    if (collision) continue;
    for (Index r = inj.row0; r < inj.row0 + inj.rows; ++r)
      for (Index c = inj.col0; c < inj.col0 + inj.cols; ++c)
        claimed[static_cast<std::size_t>(r * width + c)] = 1;
    return inj;
  }
  throw solver_error("generate_grid: could not place disjoint patches in 100 attempts");
}

}  // namespace detail

inline GridProblem generate_grid(const GridSpec& spec) {
  if (spec.height < 1 || spec.width < 1 || spec.height * spec.width < 2)
    throw validation_error("generate_grid: need at least 2 cells");
  if (spec.n_inj < 1) throw validation_error("generate_grid: need at least 1 injection");
  if (spec.true_rank < 1) throw validation_error("generate_grid: need rank >= 1");
  if (spec.noise_sigma < 0.0) throw validation_error("generate_grid: negative noise level");

  const Index cells = spec.height * spec.width;
  std::mt19937_64 rng(spec.seed);

  Factored w_true;
  w_true.left.resize(cells, spec.true_rank);
  w_true.right.resize(cells, spec.true_rank);
  for (Index r = 0; r < spec.true_rank; ++r) {
    w_true.left.col(r) = detail::bump_column(rng, spec.height, spec.width);
    w_true.right.col(r) = detail::bump_column(rng, spec.height, spec.width);
  }

  std::vector<std::uint8_t> claimed(static_cast<std::size_t>(cells), 0);
  std::vector<GridInjection> injections;
  injections.reserve(static_cast<std::size_t>(spec.n_inj));
  for (Index a = 0; a < spec.n_inj; ++a)
    injections.push_back(detail::place_patch(rng, spec.height, spec.width, claimed));

  Mat x = Mat::Zero(cells, spec.n_inj);
  for (Index a = 0; a < spec.n_inj; ++a) {
    const GridInjection& inj = injections[static_cast<std::size_t>(a)];
    for (Index r = inj.row0; r < inj.row0 + inj.rows; ++r)
      for (Index c = inj.col0; c < inj.col0 + inj.cols; ++c) x(r * spec.width + c, a) = 1.0;
  }
  const Mat omega = Mat::Ones(cells, spec.n_inj) - x;

  const double h = 1.0 / static_cast<double>(cells);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat y = w_true.left * (w_true.right.transpose() * x);
  for (Index a = 0; a < spec.n_inj; ++a)
    for (Index i = 0; i < cells; ++i) y(i, a) += spec.noise_sigma * gauss(rng);
  y = omega.cwiseProduct((h * y).eval());

  GridProblem out;
  out.grid = GridMask::full(spec.height, spec.width);
  const SpMat l = laplacian_grid_masked(out.grid);
  out.problem = build_problem(l, l, x, y, omega, spec.lambda_bar);
  out.w_true = std::move(w_true);
  out.lattice_weight = h;
  out.injections = std::move(injections);
  return out;
}

}  // namespace greedylr
