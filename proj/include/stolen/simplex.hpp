#pragma once

#include <Eigen/Dense>

namespace stolen {

struct SimplexOptions {
  // Phase-one objective (sum of artificials) at or below this is feasible.
  double feasibility_tol = 1e-8;
  double pivot_tol = 1e-11;
  // 0 selects 50 * (rows + columns).
  int max_iterations = 0;
};

enum class FeasibilityStatus { feasible, infeasible, iteration_limit };

struct FeasibilityResult {
  FeasibilityStatus status = FeasibilityStatus::iteration_limit;
  // A primal point with A x ~= b, x >= 0 (meaningful when feasible).
  Eigen::VectorXd x;
  // Farkas certificate y with y^T A >= 0 and y^T b < 0 (meaningful when
  // infeasible), read off the optimal phase-one duals.
  Eigen::VectorXd farkas;
  double phase_one_objective = 0.0;
  int iterations = 0;
};

/// Decides whether { x : A x = b, x >= 0 } is nonempty with a dense
/// phase-one simplex. Pricing is Dantzig's rule, switching to Bland's rule
/// after a run of degenerate pivots so the method cannot cycle.
FeasibilityResult solve_feasibility(const Eigen::MatrixXd &A,
                                    const Eigen::VectorXd &b,
                                    const SimplexOptions &options = {});

}  // namespace stolen
