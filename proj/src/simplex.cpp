#include "stolen/simplex.hpp"

#include <limits>
#include <vector>

namespace stolen {

namespace {
  constexpr int kDegenerateRunBeforeBland = 50;
}  // namespace

FeasibilityResult solve_feasibility(const Eigen::MatrixXd &A,
                                    const Eigen::VectorXd &b,
                                    const SimplexOptions &options) {
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  const Eigen::Index rhs = n + m;
  const int max_iter = options.max_iterations > 0
                           ? options.max_iterations
                           : static_cast<int>(50 * (m + n));

  // Tableau over [structural | artificial | rhs]; rows flipped so rhs >= 0.
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, n + m + 1);
  Eigen::VectorXd sign = Eigen::VectorXd::Ones(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (b[i] < 0)
      sign[i] = -1.0;
    T.row(i).head(n) = sign[i] * A.row(i);
    T(i, n + i) = 1.0;
    T(i, rhs) = sign[i] * b[i];
  }
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i)
    basis[static_cast<std::size_t>(i)] = n + i;

  // Reduced costs for min sum(artificials); last entry holds -objective.
  Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n + m + 1);
  for (Eigen::Index i = 0; i < m; ++i) {
    r.head(n) -= T.row(i).head(n);
    r[rhs] -= T(i, rhs);
  }

  FeasibilityResult result;
  int degenerate_run = 0;
  bool bland = false;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    Eigen::Index enter = -1;
    double best = -options.pivot_tol;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (r[j] < best) {
        enter = j;
        if (bland)
          break;
        best = r[j];
      }
    }
    if (enter < 0)
      break;

    Eigen::Index leave = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      const double a = T(i, enter);
      if (a <= options.pivot_tol)
        continue;
      const double ratio = T(i, rhs) / a;
      if (ratio < best_ratio - 1e-15 ||
          (ratio <= best_ratio + 1e-15 && leave >= 0 &&
           basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
        best_ratio = ratio;
        leave = i;
      }
    }
    if (leave < 0)
      break;  // unbounded direction; cannot happen for a phase-one objective

    if (best_ratio <= options.pivot_tol) {
      if (++degenerate_run > kDegenerateRunBeforeBland)
        bland = true;
    } else {
      degenerate_run = 0;
    }

    T.row(leave) /= T(leave, enter);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i == leave)
        continue;
      const double f = T(i, enter);
      if (f != 0.0)
        T.row(i) -= f * T.row(leave);
    }
    r -= r[enter] * T.row(leave);
    basis[static_cast<std::size_t>(leave)] = enter;
  }
  result.iterations = iter;

  if (iter >= max_iter) {
    result.status = FeasibilityStatus::iteration_limit;
    return result;
  }

  result.phase_one_objective = -r[rhs];
  result.x = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index j = basis[static_cast<std::size_t>(i)];
    if (j < n)
      result.x[j] = std::max(0.0, T(i, rhs));
  }

  // Phase-one duals: y_i = c_art - r_art = 1 - r[n + i].
  result.farkas.resize(m);
  for (Eigen::Index i = 0; i < m; ++i)
    result.farkas[i] = -sign[i] * (1.0 - r[n + i]);

  result.status = result.phase_one_objective <= options.feasibility_tol
                      ? FeasibilityStatus::feasible
                      : FeasibilityStatus::infeasible;
  return result;
}

}  // namespace stolen
