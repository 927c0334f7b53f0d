#include "walkex/hqp.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "walkex/errors.hpp"

namespace walkex {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Stack
{
  MatrixXd matrix;
  VectorXd vector;

  void append(const MatrixXd& m, const VectorXd& v)
  {
    const Eigen::Index r = matrix.rows();
    MatrixXd nm(r + m.rows(), m.cols());
    VectorXd nv(r + m.rows());
    if (r > 0) {
      nm.topRows(r) = matrix;
      nv.head(r) = vector;
    }
    nm.bottomRows(m.rows()) = m;
    nv.tail(m.rows()) = v;
    matrix = std::move(nm);
    vector = std::move(nv);
  }
  Eigen::Index rows() const { return matrix.rows(); }
};

/// Orthonormal basis of the nullspace of k (columns), ncols = k.cols().
MatrixXd nullspace(const MatrixXd& k, Eigen::Index ncols)
{
  if (k.rows() == 0) {
    return MatrixXd::Identity(ncols, ncols);
  }
  Eigen::JacobiSVD<MatrixXd> svd(k, Eigen::ComputeFullV);
  const VectorXd& s = svd.singularValues();
  const double threshold = 1e-10 * std::max(1.0, s.size() > 0 ? s(0) : 0.0);
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > threshold) {
    ++rank;
  }
  return svd.matrixV().rightCols(ncols - rank);
}

/// Minimum-norm least-squares solution of m y = r.
VectorXd minNormLeastSquares(const MatrixXd& m, const VectorXd& r)
{
  const Eigen::Index k = m.cols();
  if (m.rows() == 0 || k == 0) {
    return VectorXd::Zero(k);
  }
  Eigen::JacobiSVD<MatrixXd> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  const double threshold = 1e-10 * std::max(1.0, s(0));
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > threshold) {
    ++rank;
  }
  const VectorXd coeff = (svd.matrixU().leftCols(rank).transpose() * r).cwiseQuotient(s.head(rank));
  return svd.matrixV().leftCols(rank) * coeff;
}

struct LevelResult
{
  VectorXd x;
  VectorXd slack;
  int iterations = 0;
};

/**
 * min |A x - b|^2 + |v|^2
 * s.t. E x = e, F x <= f, C x - v <= d
 * by a primal active-set method started from the feasible point x0.
 * Singular subproblems take the minimum-norm step.
 */
LevelResult solveLevel(const Stack& eq, const Stack& frozenIneq, const MatrixXd& a, const VectorXd& b,
                       const MatrixXd& c, const VectorXd& d, const VectorXd& x0, const HqpOptions& opt)
{
  const Eigen::Index n = x0.size();
  const Eigen::Index m = c.rows();
  const Eigen::Index nz = n + m;

  MatrixXd obj = MatrixXd::Zero(a.rows() + m, nz);
  VectorXd target = VectorXd::Zero(a.rows() + m);
  if (a.rows() > 0) {
    obj.topLeftCorner(a.rows(), n) = a;
    target.head(a.rows()) = b;
  }
  obj.bottomRightCorner(m, m).setIdentity();

  MatrixXd keq = MatrixXd::Zero(eq.rows(), nz);
  if (eq.rows() > 0) {
    keq.leftCols(n) = eq.matrix;
  }

  const Eigen::Index ng = frozenIneq.rows() + m;
  MatrixXd g = MatrixXd::Zero(ng, nz);
  VectorXd h(ng);
  if (frozenIneq.rows() > 0) {
    g.topLeftCorner(frozenIneq.rows(), n) = frozenIneq.matrix;
    h.head(frozenIneq.rows()) = frozenIneq.vector;
  }
  if (m > 0) {
    g.bottomLeftCorner(m, n) = c;
    g.bottomRightCorner(m, m) = -MatrixXd::Identity(m, m);
    h.tail(m) = d;
  }

  VectorXd z(nz);
  z.head(n) = x0;
  if (m > 0) {
    z.tail(m) = (c * x0 - d).cwiseMax(0.0);
  }

  std::vector<bool> working(ng, false);
  for (Eigen::Index j = 0; j < ng; ++j) {
    working[j] = g.row(j).dot(z) >= h(j) - 1e-12;
  }

  LevelResult result;
  for (int it = 0; it < opt.maxIterations; ++it) {
    result.iterations = it + 1;
    std::vector<Eigen::Index> rows;
    for (Eigen::Index j = 0; j < ng; ++j) {
      if (working[j]) rows.push_back(j);
    }
    MatrixXd k(keq.rows() + static_cast<Eigen::Index>(rows.size()), nz);
    k.topRows(keq.rows()) = keq;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      k.row(keq.rows() + static_cast<Eigen::Index>(i)) = g.row(rows[i]);
    }

    const MatrixXd basis = nullspace(k, nz);
    VectorXd p = VectorXd::Zero(nz);
    if (basis.cols() > 0) {
      p = basis * minNormLeastSquares(obj * basis, target - obj * z);
    }

    if (p.norm() <= 1e-12 * (1.0 + z.norm())) {
      if (rows.empty()) break;
      const VectorXd grad = obj.transpose() * (obj * z - target);
      const VectorXd mult = k.transpose().completeOrthogonalDecomposition().solve(-grad);
      double worst = -1e-11 * std::max(1.0, grad.norm());
      Eigen::Index drop = -1;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const double lambda = mult(keq.rows() + static_cast<Eigen::Index>(i));
        if (lambda < worst) {
          worst = lambda;
          drop = rows[i];
        }
      }
      if (drop < 0) break;
      working[drop] = false;
      continue;
    }

    double step = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index j = 0; j < ng; ++j) {
      if (working[j]) continue;
      const double gp = g.row(j).dot(p);
      if (gp <= 1e-14 * (1.0 + p.norm())) continue;
      const double ratio = std::max(0.0, (h(j) - g.row(j).dot(z)) / gp);
      if (ratio < step) {
        step = ratio;
        blocking = j;
      }
    }
    z += step * p;
    if (blocking >= 0) {
      working[blocking] = true;
    }
  }
  result.x = z.head(n);
  result.slack = z.tail(m);
  return result;
}

}  // namespace

Task Task::equality(std::string name, int priority, Eigen::MatrixXd a, Eigen::VectorXd b)
{
  return Task{std::move(name), priority, TaskKind::Equality, std::move(a), std::move(b)};
}

Task Task::inequality(std::string name, int priority, Eigen::MatrixXd c, Eigen::VectorXd d)
{
  return Task{std::move(name), priority, TaskKind::Inequality, std::move(c), std::move(d)};
}

double taskResidual(const Task& task, const Eigen::VectorXd& x)
{
  const VectorXd r = task.matrix * x - task.vector;
  return task.kind == TaskKind::Equality ? r.norm() : r.cwiseMax(0.0).norm();
}

HqpSolution solveHqp(const std::vector<Task>& tasks, int dim, const HqpOptions& options)
{
  if (dim <= 0) {
    throw std::invalid_argument("solution dimension must be positive");
  }
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& t = tasks[i];
    if (t.matrix.cols() != dim || t.matrix.rows() != t.vector.size()) {
      throw std::invalid_argument("task '" + t.name + "' has inconsistent dimensions");
    }
    if (!t.matrix.allFinite() || !t.vector.allFinite()) {
      throw std::invalid_argument("task '" + t.name + "' has non-finite entries");
    }
    if (i > 0 && t.priority < tasks[i - 1].priority) {
      throw std::invalid_argument("tasks must be sorted by priority");
    }
  }

  HqpSolution sol;
  sol.x = VectorXd::Zero(dim);
  Stack eq;
  Stack frozen;
  std::size_t first = 0;
  bool firstLevel = true;
  while (first < tasks.size()) {
    std::size_t last = first;
    while (last < tasks.size() && tasks[last].priority == tasks[first].priority) ++last;

    Stack levelEq;
    Stack levelIneq;
    for (std::size_t i = first; i < last; ++i) {
      (tasks[i].kind == TaskKind::Equality ? levelEq : levelIneq).append(tasks[i].matrix, tasks[i].vector);
    }
    const MatrixXd a = levelEq.rows() > 0 ? levelEq.matrix : MatrixXd(0, dim);
    const VectorXd b = levelEq.rows() > 0 ? levelEq.vector : VectorXd(0);
    const MatrixXd c = levelIneq.rows() > 0 ? levelIneq.matrix : MatrixXd(0, dim);
    const VectorXd d = levelIneq.rows() > 0 ? levelIneq.vector : VectorXd(0);

    const LevelResult r = solveLevel(eq, frozen, a, b, c, d, sol.x, options);
    sol.iterations += r.iterations;
    sol.x = r.x;

    if (firstLevel && c.rows() > 0) {
      Eigen::Index worst;
      const double v = r.slack.maxCoeff(&worst);
      if (v > options.infeasibilityTolerance) {
        Eigen::Index offset = 0;
        for (std::size_t i = first; i < last; ++i) {
          if (tasks[i].kind != TaskKind::Inequality) continue;
          if (worst < offset + tasks[i].rows()) {
            throw Infeasible("inequality task '" + tasks[i].name + "' cannot be satisfied (row " +
                                 std::to_string(worst - offset) + ")",
                             static_cast<int>(i), static_cast<int>(worst - offset));
          }
          offset += tasks[i].rows();
        }
      }
    }
    if (a.rows() > 0) eq.append(a, a * r.x);
    if (c.rows() > 0) frozen.append(c, d + r.slack.cwiseMax(0.0));
    firstLevel = false;
    first = last;
  }
  if (options.minimumNormTieBreak) {
    const LevelResult r = solveLevel(eq, frozen, MatrixXd::Identity(dim, dim), VectorXd::Zero(dim), MatrixXd(0, dim),
                                     VectorXd(0), sol.x, options);
    sol.iterations += r.iterations;
    sol.x = r.x;
  }

  for (const Task& t : tasks) {
    sol.residuals.push_back(taskResidual(t, sol.x));
    std::vector<int> act;
    if (t.kind == TaskKind::Inequality) {
      const VectorXd r = t.matrix * sol.x - t.vector;
      for (Eigen::Index j = 0; j < r.size(); ++j) {
        if (std::abs(r(j)) <= 1e-9 * std::max(1.0, std::abs(t.vector(j)))) act.push_back(static_cast<int>(j));
      }
    }
    sol.active.push_back(std::move(act));
  }
  return sol;
}

}  // namespace walkex
