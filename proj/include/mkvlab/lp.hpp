#pragma once

#include <Eigen/Dense>
#include <vector>

namespace mkvlab::lp {

/// maximize c^T x  subject to  A x <= b,  x_j >= 0 unless free[j].
/// Requires b >= 0 so the origin is feasible.
struct InequalityLp {
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  std::vector<bool> free;
};

enum class Status { optimal, unbounded, iteration_limit };

struct Solution {
  Status status = Status::iteration_limit;
  Eigen::VectorXd x;
  double objective = 0.0;
  /// Multipliers of the inequality rows (y >= 0, A^T y = c on free columns).
  Eigen::VectorXd dual;
  double dual_objective = 0.0;
  int iterations = 0;
};

/// Dense dictionary simplex with Dantzig pricing; switches to Bland's rule
/// after a run of degenerate pivots.
Solution maximize(const InequalityLp& problem, int max_iterations = 2'000'000);

}  // namespace mkvlab::lp
