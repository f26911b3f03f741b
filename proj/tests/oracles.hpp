#pragma once

// Test-only reference computations. Nothing here calls into the solver or
// gradient code it is used to check.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "ucds/cds.hpp"
#include "ucds/models.hpp"

namespace oracle {

inline Eigen::MatrixXd to_eigen(const ucds::SquareMatrix& m) {
  Eigen::MatrixXd out(m.size(), m.size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j) out(i, j) = m(i, j);
  return out;
}

// Largest eigenvalue of the principal submatrix without `excluded`.
inline double dense_lambda_max(const ucds::SquareMatrix& a, std::size_t excluded) {
  const auto n = a.size();
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < n; ++i)
    if (i != excluded) keep.push_back(i);
  Eigen::MatrixXd sub(keep.size(), keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r)
    for (std::size_t c = 0; c < keep.size(); ++c) sub(r, c) = a(keep[r], keep[c]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sub);
  return eig.eigenvalues().maxCoeff();
}

// KKT points of max x'Bx over the simplex, found by enumerating supports:
// solve B_SS y = 1, normalize, require positivity on S and (Bx)_j <= lambda
// off S. Returns the supports as bitmasks.
inline std::vector<unsigned> kkt_supports(const Eigen::MatrixXd& b, double tol = 1e-9) {
  const auto n = static_cast<unsigned>(b.rows());
  std::vector<unsigned> out;
  for (unsigned mask = 1; mask < (1u << n); ++mask) {
    std::vector<int> s;
    for (unsigned i = 0; i < n; ++i)
      if (mask & (1u << i)) s.push_back(static_cast<int>(i));
    const auto k = static_cast<int>(s.size());
    Eigen::MatrixXd bss(k, k);
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < k; ++c) bss(r, c) = b(s[r], s[c]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(bss);
    if (lu.rank() < k) continue;
    const Eigen::VectorXd y = lu.solve(Eigen::VectorXd::Ones(k));
    const double sum = y.sum();
    if (!(sum > 0)) continue;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    bool positive = true;
    for (int r = 0; r < k; ++r) {
      x(s[r]) = y(r) / sum;
      if (!(x(s[r]) > 1e-12)) positive = false;
    }
    if (!positive) continue;
    const double lambda = 1.0 / sum;
    const Eigen::VectorXd bx = b * x;
    bool dominant = true;
    for (unsigned j = 0; j < n; ++j)
      if (!(mask & (1u << j)) && bx(j) > lambda + tol) dominant = false;
    if (dominant) out.push_back(mask);
  }
  return out;
}

// B = A - alpha * diag(1 - e_constraint) + alpha * J, built directly. The
// constant alpha * J leaves the KKT supports unchanged but keeps lambda away
// from 0, where B_SS y = 1 has no solution (e.g. S = {constraint}, A_cc = 0).
inline Eigen::MatrixXd constrained_b(const ucds::SquareMatrix& a, std::size_t constraint,
                                     double alpha) {
  Eigen::MatrixXd b = to_eigen(a).array() + alpha;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (i != constraint) b(i, i) -= alpha;
  return b;
}

inline ucds::SquareMatrix random_affinity(std::size_t n, double density, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ucds::SquareMatrix a(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (unit(rng) < density) a(i, j) = a(j, i) = unit(rng);
  return a;
}

// Central differences of f over every entry of `params` (restricted by
// `include` when given), compared against `analytic`. Returns the largest
// relative error, using max(|a|, |n|, floor) as the denominator.
inline double max_relative_error(ucds::ParamSet& params, const ucds::ParamSet& analytic,
                                 const std::function<double()>& f, double step = 1e-5,
                                 const std::function<bool(std::size_t, std::size_t)>& include = {},
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& values = params[p].values;
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (include && !include(p, k)) continue;
      const double saved = values[k];
      values[k] = saved + step;
      const double up = f();
      values[k] = saved - step;
      const double down = f();
      values[k] = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = analytic[p].values[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace oracle
