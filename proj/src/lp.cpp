#include "mkvlab/lp.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mkvlab::lp {

Solution maximize(const InequalityLp& problem, int max_iterations) {
  const Eigen::Index rows = problem.A.rows();
  const Eigen::Index cols = problem.A.cols();
  if (problem.b.size() != rows || problem.c.size() != cols ||
      static_cast<Eigen::Index>(problem.free.size()) != cols)
    throw std::invalid_argument("lp: inconsistent problem dimensions");
  if ((problem.b.array() < 0.0).any())
    throw std::invalid_argument("lp: right-hand side must be nonnegative");

  // Dictionary: basic(r) = beta(r) - sum_j T(r, j) * nonbasic(j),
  //             z = z0 + sum_j d(j) * nonbasic(j).
  // Variables 0..cols-1 are structural, cols..cols+rows-1 are slacks.
  Eigen::MatrixXd T = problem.A;
  Eigen::VectorXd beta = problem.b;
  Eigen::VectorXd d = problem.c;
  double z0 = 0.0;
  std::vector<Eigen::Index> basic(static_cast<std::size_t>(rows));
  std::vector<Eigen::Index> nonbasic(static_cast<std::size_t>(cols));
  for (Eigen::Index r = 0; r < rows; ++r) basic[static_cast<std::size_t>(r)] = cols + r;
  for (Eigen::Index j = 0; j < cols; ++j) nonbasic[static_cast<std::size_t>(j)] = j;
  // A free variable is carried as sign * x so that it only ever increases.
  std::vector<double> sign(static_cast<std::size_t>(cols + rows), 1.0);
  auto is_free = [&](Eigen::Index var) {
    return var < cols && problem.free[static_cast<std::size_t>(var)];
  };

  const double scale = std::max(1.0, problem.c.cwiseAbs().maxCoeff());
  const double opt_tol = 1e-12 * scale;
  const double piv_tol = 1e-11;

  Solution sol;
  int degenerate_run = 0;
  bool bland = false;
  Eigen::VectorXd pivot_col(rows);
  Eigen::RowVectorXd pivot_row(cols);

  for (int it = 0;; ++it) {
    if (it >= max_iterations) {
      sol.status = Status::iteration_limit;
      break;
    }
    // Pricing.
    Eigen::Index enter = -1;
    double best = 0.0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      const Eigen::Index var = nonbasic[static_cast<std::size_t>(j)];
      const double gain = is_free(var) ? std::abs(d(j)) : d(j);
      if (gain <= opt_tol) continue;
      if (bland) {
        if (enter < 0 || var < nonbasic[static_cast<std::size_t>(enter)]) enter = j;
      } else if (gain > best) {
        best = gain;
        enter = j;
      }
    }
    if (enter < 0) {
      sol.status = Status::optimal;
      sol.iterations = it;
      break;
    }
    const Eigen::Index enter_var = nonbasic[static_cast<std::size_t>(enter)];
    if (d(enter) < 0.0) {
      T.col(enter) *= -1.0;
      d(enter) = -d(enter);
      sign[static_cast<std::size_t>(enter_var)] *= -1.0;
    }

    // Ratio test over sign-constrained basic variables.
    Eigen::Index leave = -1;
    double min_ratio = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index var = basic[static_cast<std::size_t>(r)];
      if (is_free(var)) continue;
      const double t = T(r, enter);
      if (t <= piv_tol) continue;
      const double ratio = std::max(0.0, beta(r)) / t;
      if (ratio < min_ratio - 1e-15) {
        min_ratio = ratio;
        leave = r;
      } else if (bland && ratio <= min_ratio + 1e-15 &&
                 var < basic[static_cast<std::size_t>(leave)]) {
        leave = r;
      }
    }
    if (leave < 0) {
      sol.status = Status::unbounded;
      sol.iterations = it;
      return sol;
    }
    if (min_ratio <= 1e-14) {
      if (++degenerate_run > 50) bland = true;
    } else {
      degenerate_run = 0;
      bland = false;
    }

    // Pivot.
    const double p = T(leave, enter);
    pivot_row = T.row(leave) / p;
    pivot_row(enter) = 1.0 / p;
    const double beta_r = beta(leave) / p;
    pivot_col = T.col(enter);
    pivot_col(leave) = 0.0;
    T.col(enter).setZero();
    T.noalias() -= pivot_col * pivot_row;
    T.row(leave) = pivot_row;
    beta -= pivot_col * beta_r;
    beta(leave) = beta_r;
    const double d_enter = d(enter);
    z0 += d_enter * beta_r;
    d -= d_enter * pivot_row.transpose();
    d(enter) = -d_enter / p;

    std::swap(basic[static_cast<std::size_t>(leave)], nonbasic[static_cast<std::size_t>(enter)]);
  }

  sol.x = Eigen::VectorXd::Zero(cols);
  sol.dual = Eigen::VectorXd::Zero(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index var = basic[static_cast<std::size_t>(r)];
    if (var < cols) sol.x(var) = sign[static_cast<std::size_t>(var)] * beta(r);
  }
  for (Eigen::Index j = 0; j < cols; ++j) {
    const Eigen::Index var = nonbasic[static_cast<std::size_t>(j)];
    if (var >= cols) sol.dual(var - cols) = std::max(0.0, -d(j));
  }
  sol.objective = problem.c.dot(sol.x);
  sol.dual_objective = problem.b.dot(sol.dual);
  return sol;
}

}  // namespace mkvlab::lp
