#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "walkex/hqp.hpp"

namespace walkex::testing {

/// Equality cascade on an affine set x_p + range(N), N orthonormal, via QR nullspace bases.
struct AffineCascade
{
  Eigen::VectorXd particular;
  Eigen::MatrixXd basis;
  bool empty = false;  // the imposed constraints were inconsistent
};

inline Eigen::MatrixXd qrNullspace(const Eigen::MatrixXd& m)
{
  // null(m) = orthogonal complement of range(m^T)
  const Eigen::Index k = m.cols();
  if (m.rows() == 0) return Eigen::MatrixXd::Identity(k, k);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m.transpose());
  qr.setThreshold(1e-10);
  const Eigen::Index rank = qr.rank();
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
  return q.rightCols(k - rank);
}

/// min |A x - b| on the current affine set, shrinking it to the level's optimum set.
inline void cascadeLevel(AffineCascade& s, const Eigen::MatrixXd& a, const Eigen::VectorXd& b)
{
  if (s.basis.cols() == 0 || a.rows() == 0) return;
  const Eigen::MatrixXd reduced = a * s.basis;
  const Eigen::VectorXd z = reduced.completeOrthogonalDecomposition().solve(b - a * s.particular);
  s.particular += s.basis * z;
  s.basis = s.basis * qrNullspace(reduced);
}

inline Eigen::VectorXd cascadeMinNorm(const AffineCascade& s)
{
  return s.particular - s.basis * (s.basis.transpose() * s.particular);
}

/// Pure-equality oracle: tasks grouped into levels by priority.
inline Eigen::VectorXd equalityCascade(const std::vector<Task>& tasks, int dim)
{
  AffineCascade s{Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Identity(dim, dim)};
  std::size_t i = 0;
  while (i < tasks.size()) {
    std::size_t j = i;
    int rows = 0;
    while (j < tasks.size() && tasks[j].priority == tasks[i].priority) rows += tasks[j++].rows();
    Eigen::MatrixXd a(rows, dim);
    Eigen::VectorXd b(rows);
    int r = 0;
    for (std::size_t k = i; k < j; ++k) {
      a.middleRows(r, tasks[k].rows()) = tasks[k].matrix;
      b.segment(r, tasks[k].rows()) = tasks[k].vector;
      r += tasks[k].rows();
    }
    cascadeLevel(s, a, b);
    i = j;
  }
  return cascadeMinNorm(s);
}

/**
 * Oracle for a feasible hard inequality set C x <= d followed by equality
 * levels: enumerate every subset S of C's rows, solve the equality cascade on
 * {C_S x = d_S}, keep feasible candidates and return the lexicographically
 * smallest (level residuals, then norm).
 */
inline Eigen::VectorXd inequalityEnumeration(const Eigen::MatrixXd& c, const Eigen::VectorXd& d,
                                             const std::vector<Task>& equalities, int dim)
{
  const int m = static_cast<int>(c.rows());
  Eigen::VectorXd best;
  std::vector<double> bestKey;
  for (int mask = 0; mask < (1 << m); ++mask) {
    std::vector<int> rows;
    for (int r = 0; r < m; ++r)
      if (mask & (1 << r)) rows.push_back(r);
    AffineCascade s{Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Identity(dim, dim)};
    Eigen::MatrixXd cs(rows.size(), dim);
    Eigen::VectorXd ds(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      cs.row(k) = c.row(rows[k]);
      ds(k) = d(rows[k]);
    }
    cascadeLevel(s, cs, ds);
    if (rows.size() > 0 && (cs * s.particular - ds).norm() > 1e-9) continue;
    for (const Task& t : equalities) cascadeLevel(s, t.matrix, t.vector);
    const Eigen::VectorXd x = cascadeMinNorm(s);
    if (((c * x - d).array() > 1e-9).any()) continue;
    std::vector<double> key;
    for (const Task& t : equalities) key.push_back((t.matrix * x - t.vector).norm());
    key.push_back(x.norm());
    bool better = bestKey.empty();
    for (std::size_t k = 0; k < key.size() && !better; ++k) {
      if (key[k] < bestKey[k] - 1e-9) better = true;
      else if (key[k] > bestKey[k] + 1e-9) break;
    }
    if (better) {
      best = x;
      bestKey = key;
    }
  }
  return best;
}

/// Matrix with singular values drawn from [0.5, 2] and the requested rank.
inline Eigen::MatrixXd conditionedMatrix(std::mt19937& rng, int rows, int cols, int rank)
{
  std::normal_distribution<double> n(0.0, 1.0);
  auto orth = [&](int k) {
    Eigen::MatrixXd g(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) g(i, j) = n(rng);
    return Eigen::MatrixXd(Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ());
  };
  std::uniform_real_distribution<double> u(0.5, 2.0);
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(rows, cols);
  for (int i = 0; i < rank; ++i) s(i, i) = u(rng);
  return orth(rows) * s * orth(cols).transpose();
}

inline Eigen::VectorXd randomVector(std::mt19937& rng, int n, double scale = 1.0)
{
  std::normal_distribution<double> g(0.0, scale);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

/// Smallest nonzero singular value that the equality cascade meets on its way, used to skip ill-posed draws.
inline double cascadeConditioning(const std::vector<Task>& tasks, int dim)
{
  Eigen::MatrixXd basis = Eigen::MatrixXd::Identity(dim, dim);
  double worst = 1e300;
  for (const Task& t : tasks) {
    if (basis.cols() == 0) break;
    const Eigen::MatrixXd reduced = t.matrix * basis;
    const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(reduced).singularValues();
    for (Eigen::Index i = 0; i < s.size(); ++i)
      if (s(i) > 1e-8) worst = std::min(worst, s(i));
    basis = basis * qrNullspace(reduced);
  }
  return worst;
}

/// Random stack of up to maxLevels equality levels in R^dim with well-separated singular values.
inline std::vector<Task> randomEqualityStack(std::mt19937& rng, int dim, int levels)
{
  for (;;) {
    std::vector<Task> tasks;
    std::uniform_int_distribution<int> rowsDist(1, dim);
    for (int l = 0; l < levels; ++l) {
      const int rows = rowsDist(rng);
      const int rank = std::uniform_int_distribution<int>(1, rows)(rng);
      tasks.push_back(Task::equality("level" + std::to_string(l), l, conditionedMatrix(rng, rows, dim, rank),
                                     randomVector(rng, rows)));
    }
    if (cascadeConditioning(tasks, dim) > 0.2) return tasks;
  }
}

}  // namespace walkex::testing
