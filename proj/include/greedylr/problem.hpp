#pragma once

#include "greedylr/errors.hpp"
#include "greedylr/types.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace greedylr {

enum class MaskConvention {
  observed_is_one,  // internal convention: omega(i,a) = 1 means entry is observed
  masked_is_one,    // stored mask marks the injection region; flipped on ingest
};

namespace detail {

inline double max_abs(const SpMat& m) {
  double v = 0.0;
  for (Index k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it) v = std::max(v, std::abs(it.value()));
  return v;
}

inline void validate_laplacian(const SpMat& l, const std::string& name) {
  if (l.rows() != l.cols()) throw validation_error(name + ": Laplacian must be square");
  if (l.rows() < 2) throw validation_error(name + ": Laplacian needs at least 2 nodes");
  const double scale = std::max(1.0, max_abs(l));
  const SpMat asym = SpMat(l.transpose()) - l;
  if (max_abs(asym) > 1e-10 * scale) throw validation_error(name + ": Laplacian is not symmetric");
  const Vec row_sums = l * Vec::Ones(l.cols());
  if (row_sums.cwiseAbs().maxCoeff() > 1e-10)
    throw validation_error(name + ": Laplacian row sums exceed 1e-10");
  for (Index k = 0; k < l.outerSize(); ++k)
    for (SpMat::InnerIterator it(l, k); it; ++it) {
      if (it.row() == it.col() && it.value() < -1e-12 * scale)
        throw validation_error(name + ": Laplacian has a negative diagonal entry");
      if (it.row() != it.col() && it.value() > 1e-12 * scale)
        throw validation_error(name + ": Laplacian has a positive off-diagonal entry");
    }
}

inline void validate_binary(const Mat& m, const std::string& name) {
  if (!((m.array() == 0.0) || (m.array() == 1.0)).all())
    throw validation_error(name + ": entries must be exactly 0 or 1");
}

}  // namespace detail

// Validates all inputs and assembles an instance with lambda = lambda_bar * n_inj / n_X.
inline ProblemInstance build_problem(SpMat lx, SpMat ly, Mat x, Mat y, Mat omega,
                                     double lambda_bar,
                                     MaskConvention convention = MaskConvention::observed_is_one) {
  detail::validate_laplacian(lx, "lx");
  detail::validate_laplacian(ly, "ly");
  const Index n_x = lx.rows();
  const Index n_y = ly.rows();
  if (x.rows() != n_x) throw validation_error("x: row count must match lx dimension");
  const Index n_inj = x.cols();
  if (n_inj < 1) throw validation_error("x: need at least one injection column");
  if (y.rows() != n_y || y.cols() != n_inj)
    throw validation_error("y: shape must be n_Y x n_inj");
  if (omega.rows() != n_y || omega.cols() != n_inj)
    throw validation_error("omega: shape must be n_Y x n_inj");
  detail::validate_binary(omega, "omega");
  if (convention == MaskConvention::masked_is_one)
    omega = Mat::Ones(n_y, n_inj) - omega;
  if (!(lambda_bar > 0.0)) throw validation_error("lambda_bar must be positive");

  ProblemInstance p;
  p.lx = std::move(lx);
  p.ly = std::move(ly);
  p.lx.makeCompressed();
  p.ly.makeCompressed();
  p.lx2 = p.lx * p.lx;
  p.ly2 = p.ly * p.ly;
  p.x = std::move(x);
  p.y = std::move(y);
  p.omega = std::move(omega);
  p.lambda_bar = lambda_bar;
  p.lambda = lambda_bar * static_cast<double>(n_inj) / static_cast<double>(n_x);
  return p;
}

// Imported problems pin lambda directly; lambda_bar is back-derived so that the
// lambda == lambda_bar * n_inj / n_X invariant holds by construction.
inline ProblemInstance build_problem_with_lambda(SpMat lx, SpMat ly, Mat x, Mat y, Mat omega,
                                                 double lambda,
                                                 MaskConvention convention =
                                                     MaskConvention::observed_is_one) {
  if (!(lambda > 0.0)) throw validation_error("lambda must be positive");
  const double lambda_bar =
      lambda * static_cast<double>(lx.rows()) / static_cast<double>(x.cols() > 0 ? x.cols() : 1);
  return build_problem(std::move(lx), std::move(ly), std::move(x), std::move(y), std::move(omega),
                       lambda_bar, convention);
}

// J(W) = 1/2 ||omega o (W x - y)||_F^2 + lambda/2 ||Ly W + W Lx||_F^2.
inline double evaluate_objective(const ProblemInstance& p, const Mat& w) {
  if (w.rows() != p.n_y() || w.cols() != p.n_x())
    throw validation_error("evaluate_objective: W must be n_Y x n_X");
  const double loss = p.omega.cwiseProduct(w * p.x - p.y).squaredNorm();
  const Mat smooth = p.ly * w + w * p.lx;
  return 0.5 * loss + 0.5 * p.lambda * smooth.squaredNorm();
}

// Factored path: the loss shrinks to n_inj columns, and the smoothing norm comes from
// Ly W + W Lx = [Ly L, L] [R, Lx R]^T evaluated through 2k x 2k Gram matrices.
inline double evaluate_objective(const ProblemInstance& p, const Factored& w) {
  if (w.rows() != p.n_y() || w.cols() != p.n_x())
    throw validation_error("evaluate_objective: W must be n_Y x n_X");
  const Index k = w.rank();
  if (k == 0) return 0.5 * p.omega.cwiseProduct(p.y).squaredNorm();
  const double loss =
      p.omega.cwiseProduct(w.left * (w.right.transpose() * p.x) - p.y).squaredNorm();
  Mat f(p.n_y(), 2 * k), g(p.n_x(), 2 * k);
  f << p.ly * w.left, w.left;
  g << w.right, p.lx * w.right;
  const Mat gf = f.transpose() * f;
  const Mat gg = g.transpose() * g;
  const double smooth_sq = std::max(0.0, gf.cwiseProduct(gg).sum());
  return 0.5 * loss + 0.5 * p.lambda * smooth_sq;
}

inline double evaluate_objective(const ProblemInstance& p, const LowRankSolution& w) {
  return evaluate_objective(p, w.factored());
}

}  // namespace greedylr
