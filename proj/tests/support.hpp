#pragma once

#include "greedylr/operators.hpp"
#include "greedylr/problem.hpp"

#include <cmath>
#include <random>
#include <vector>

// Shared generators for the unit and acceptance suites. Everything is driven by an
// explicit engine so each test pins its own seed.
namespace testsupport {

using namespace greedylr;

// Connected weighted graph Laplacian: a chain plus ~n/2 extra random unit edges
// (duplicates accumulate into heavier weights, which is still a valid Laplacian).
inline SpMat random_laplacian(std::mt19937_64& rng, Index n) {
  std::vector<Eigen::Triplet<double>> trip;
  std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
  auto add_edge = [&](Index a, Index b) {
    trip.emplace_back(a, b, -1.0);
    trip.emplace_back(b, a, -1.0);
    deg[static_cast<std::size_t>(a)] += 1.0;
    deg[static_cast<std::size_t>(b)] += 1.0;
  };
  for (Index i = 0; i + 1 < n; ++i) add_edge(i, i + 1);
  std::uniform_int_distribution<Index> pick(0, n - 1);
  for (Index e = 0; e < n / 2; ++e) {
    const Index a = pick(rng), b = pick(rng);
    if (a != b) add_edge(a, b);
  }
  for (Index i = 0; i < n; ++i) trip.emplace_back(i, i, deg[static_cast<std::size_t>(i)]);
  SpMat l(n, n);
  l.setFromTriplets(trip.begin(), trip.end());
  l.makeCompressed();
  return l;
}

// Small random instance with strictly positive X (keeps the operator positive
// definite together with connected Laplacians) and a ~70% observation mask.
inline ProblemInstance random_instance(std::mt19937_64& rng, Index n_y, Index n_x, Index n_inj,
                                       double lambda_bar = -1.0) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat x(n_x, n_inj), y(n_y, n_inj), omega(n_y, n_inj);
  for (Index a = 0; a < n_inj; ++a) {
    for (Index i = 0; i < n_x; ++i) x(i, a) = 0.05 + 0.95 * unif(rng);
    bool any = false;
    for (Index i = 0; i < n_y; ++i) {
      y(i, a) = gauss(rng);
      omega(i, a) = unif(rng) < 0.7 ? 1.0 : 0.0;
      any = any || omega(i, a) > 0.0;
    }
    if (!any) omega(0, a) = 1.0;
  }
  if (lambda_bar <= 0.0)
    lambda_bar = std::exp(std::uniform_real_distribution<double>(std::log(0.1), std::log(10.0))(rng));
  return build_problem(random_laplacian(rng, n_x), random_laplacian(rng, n_y), x, y, omega,
                       lambda_bar);
}

inline Mat random_matrix(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = gauss(rng);
  return m;
}

// Random matrix with orthonormal columns via Householder QR.
inline Mat random_orthonormal(std::mt19937_64& rng, Index rows, Index cols) {
  const Mat m = random_matrix(rng, rows, cols);
  return Eigen::HouseholderQR<Mat>(m).householderQ() * Mat::Identity(rows, cols);
}

inline Vec vectorize(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

inline Mat unvectorize(const Vec& v, Index rows, Index cols) {
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

}  // namespace testsupport
