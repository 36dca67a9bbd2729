#pragma once

#include <Eigen/Dense>

namespace mkvlab::transport {

struct Solution {
  Eigen::MatrixXd plan;  ///< n x m, row sums = supply, column sums = demand
  double cost = 0.0;
  Eigen::VectorXd row_potential;
  Eigen::VectorXd col_potential;
  double dual_objective = 0.0;
  int iterations = 0;
};

/// Exact balanced transportation problem by the network simplex method on
/// the bipartite graph (northwest-corner start, u-v potentials, Dantzig
/// pricing). Zero-mass rows/columns are allowed.
Solution network_simplex(const Eigen::VectorXd& supply, const Eigen::VectorXd& demand,
                         const Eigen::MatrixXd& cost);

struct SinkhornSolution {
  Eigen::MatrixXd plan;
  double cost = 0.0;  ///< <plan, cost>, without the entropy term
  double epsilon = 0.0;
  double marginal_error = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Log-domain Sinkhorn iterations for entropically regularized transport.
SinkhornSolution sinkhorn(const Eigen::VectorXd& supply, const Eigen::VectorXd& demand,
                          const Eigen::MatrixXd& cost, double epsilon, double tol = 1e-6,
                          int max_iterations = 100000);

}  // namespace mkvlab::transport
