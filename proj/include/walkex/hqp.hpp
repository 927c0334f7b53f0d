#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace walkex {

enum class TaskKind { Equality, Inequality };

/**
 * One prioritized block: A x = b in the least-squares sense, or C x <= d.
 * Lower priority numbers are more important; tasks sharing a priority form
 * one level and are traded off against each other with unit weight.
 */
struct Task
{
  std::string name;
  int priority = 0;
  TaskKind kind = TaskKind::Equality;
  Eigen::MatrixXd matrix;
  Eigen::VectorXd vector;

  static Task equality(std::string name, int priority, Eigen::MatrixXd a, Eigen::VectorXd b);
  static Task inequality(std::string name, int priority, Eigen::MatrixXd c, Eigen::VectorXd d);
  int rows() const { return static_cast<int>(matrix.rows()); }
};

struct HqpOptions
{
  /// Terminal level min |x| over the optimum set of all tasks.
  bool minimumNormTieBreak = true;
  int maxIterations = 100;
  /// Inequality rows of the first level whose slack exceeds this raise Infeasible.
  double infeasibilityTolerance = 1e-8;
};

struct HqpSolution
{
  Eigen::VectorXd x;
  /// Per task: |A x - b| for equalities, |max(C x - d, 0)| for inequalities.
  std::vector<double> residuals;
  /// Per task: rows with C x - d within 1e-9 of zero (empty for equalities).
  std::vector<std::vector<int>> active;
  int iterations = 0;
};

/// Lexicographic cascade over the task levels; see the README for the formulation.
HqpSolution solveHqp(const std::vector<Task>& tasks, int dim, const HqpOptions& options = {});

double taskResidual(const Task& task, const Eigen::VectorXd& x);

}  // namespace walkex
