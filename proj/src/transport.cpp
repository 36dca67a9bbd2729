#include "mkvlab/transport.hpp"

#include "mkvlab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace mkvlab::transport {

namespace {

struct Cell {
  int row;
  int col;
};

// Spanning tree over n row nodes and m column nodes (column j is node n + j),
// rooted at row 0.
struct Tree {
  std::vector<int> parent;
  std::vector<int> parent_cell;
  std::vector<int> depth;
};

}  // namespace

Solution network_simplex(const Eigen::VectorXd& supply_in, const Eigen::VectorXd& demand_in,
                         const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(supply_in.size());
  const int m = static_cast<int>(demand_in.size());
  if (n == 0 || m == 0) throw std::invalid_argument("transport: empty marginal");
  if (cost.rows() != n || cost.cols() != m)
    throw std::invalid_argument("transport: cost matrix shape mismatch");
  if ((supply_in.array() < 0.0).any() || (demand_in.array() < 0.0).any())
    throw std::invalid_argument("transport: negative mass");
  const double total = supply_in.sum();
  if (!(total > 0.0) || std::abs(total - demand_in.sum()) > 1e-9 * std::max(1.0, total))
    throw std::invalid_argument("transport: unbalanced marginals");
  Eigen::VectorXd supply = supply_in;
  Eigen::VectorXd demand = demand_in * (total / demand_in.sum());

  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(n, m);
  std::vector<Cell> basis;
  basis.reserve(static_cast<std::size_t>(n + m - 1));
  std::vector<char> is_basic(static_cast<std::size_t>(n) * m, 0);
  auto basic_flag = [&](int i, int j) -> char& {
    return is_basic[static_cast<std::size_t>(i) * m + j];
  };

  // Northwest corner: n + m - 1 cells forming a staircase spanning tree.
  {
    Eigen::VectorXd rs = supply, cs = demand;
    int i = 0, j = 0;
    while (i < n && j < m) {
      const double x = std::min(rs(i), cs(j));
      flow(i, j) = x;
      basis.push_back({i, j});
      basic_flag(i, j) = 1;
      rs(i) -= x;
      cs(j) -= x;
      if (i == n - 1) {
        ++j;
      } else if (j == m - 1) {
        ++i;
      } else if (rs(i) <= cs(j)) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  const double cost_scale = std::max(1.0, cost.cwiseAbs().maxCoeff());
  const double opt_tol = 1e-12 * cost_scale;
  const int nodes = n + m;
  std::vector<std::vector<std::pair<int, int>>> adj(static_cast<std::size_t>(nodes));
  Tree tree{std::vector<int>(nodes), std::vector<int>(nodes), std::vector<int>(nodes)};
  Eigen::VectorXd u(n), v(m);
  std::vector<int> queue(static_cast<std::size_t>(nodes));
  PathStream tie_break(0x7a115u, static_cast<std::uint64_t>(n) * 1315423911u + m);

  const long long max_iterations = 50LL * (n + m) * (n + m) + 1000;
  Solution sol;
  for (long long it = 0;; ++it) {
    if (it > max_iterations) throw std::runtime_error("transport: iteration limit exceeded");

    for (auto& a : adj) a.clear();
    for (int k = 0; k < static_cast<int>(basis.size()); ++k) {
      adj[static_cast<std::size_t>(basis[k].row)].push_back({n + basis[k].col, k});
      adj[static_cast<std::size_t>(n + basis[k].col)].push_back({basis[k].row, k});
    }
    // Potentials u_i + v_j = c_ij on basic cells, by BFS from row 0.
    std::fill(tree.parent.begin(), tree.parent.end(), -2);
    tree.parent[0] = -1;
    tree.parent_cell[0] = -1;
    tree.depth[0] = 0;
    u(0) = 0.0;
    std::size_t head = 0, tail = 0;
    queue[tail++] = 0;
    while (head < tail) {
      const int node = queue[head++];
      for (const auto& [next, k] : adj[static_cast<std::size_t>(node)]) {
        if (tree.parent[static_cast<std::size_t>(next)] != -2) continue;
        tree.parent[static_cast<std::size_t>(next)] = node;
        tree.parent_cell[static_cast<std::size_t>(next)] = k;
        tree.depth[static_cast<std::size_t>(next)] = tree.depth[static_cast<std::size_t>(node)] + 1;
        const Cell c = basis[static_cast<std::size_t>(k)];
        if (next >= n)
          v(c.col) = cost(c.row, c.col) - u(c.row);
        else
          u(c.row) = cost(c.row, c.col) - v(c.col);
        queue[tail++] = next;
      }
    }
    if (tail != static_cast<std::size_t>(nodes))
      throw std::logic_error("transport: basis is not a spanning tree");

    // Dantzig pricing.
    int ei = -1, ej = -1;
    double most_negative = -opt_tol;
    for (int j = 0; j < m; ++j) {
      for (int i = 0; i < n; ++i) {
        const double reduced = cost(i, j) - u(i) - v(j);
        if (reduced < most_negative && !basic_flag(i, j)) {
          most_negative = reduced;
          ei = i;
          ej = j;
        }
      }
    }
    if (ei < 0) {
      sol.iterations = static_cast<int>(it);
      break;
    }

    // Cycle through the tree: entering cell, then the column side up to the
    // common ancestor, then the row side back down.
    std::vector<int> col_side, row_side;
    int a = ei, b = n + ej;
    while (a != b) {
      if (tree.depth[static_cast<std::size_t>(a)] >= tree.depth[static_cast<std::size_t>(b)]) {
        row_side.push_back(tree.parent_cell[static_cast<std::size_t>(a)]);
        a = tree.parent[static_cast<std::size_t>(a)];
      } else {
        col_side.push_back(tree.parent_cell[static_cast<std::size_t>(b)]);
        b = tree.parent[static_cast<std::size_t>(b)];
      }
    }
    std::vector<int> cycle = col_side;
    cycle.insert(cycle.end(), row_side.rbegin(), row_side.rend());

    // Odd positions lose mass.
    double theta = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < cycle.size(); p += 2) {
      const Cell c = basis[static_cast<std::size_t>(cycle[p])];
      theta = std::min(theta, flow(c.row, c.col));
    }
    std::vector<std::size_t> candidates;
    for (std::size_t p = 0; p < cycle.size(); p += 2) {
      const Cell c = basis[static_cast<std::size_t>(cycle[p])];
      if (flow(c.row, c.col) <= theta) candidates.push_back(p);
    }
    const std::size_t pick = candidates[tie_break() % candidates.size()];

    for (std::size_t p = 0; p < cycle.size(); ++p) {
      const Cell c = basis[static_cast<std::size_t>(cycle[p])];
      flow(c.row, c.col) += (p % 2 == 0) ? -theta : theta;
    }
    flow(ei, ej) += theta;
    const int leave_cell = cycle[pick];
    const Cell leaving = basis[static_cast<std::size_t>(leave_cell)];
    flow(leaving.row, leaving.col) = 0.0;
    basic_flag(leaving.row, leaving.col) = 0;
    basis[static_cast<std::size_t>(leave_cell)] = {ei, ej};
    basic_flag(ei, ej) = 1;
  }

  flow = flow.cwiseMax(0.0);
  sol.plan = std::move(flow);
  sol.cost = (sol.plan.array() * cost.array()).sum();
  sol.row_potential = u;
  sol.col_potential = v;
  sol.dual_objective = supply.dot(u) + demand.dot(v);
  return sol;
}

SinkhornSolution sinkhorn(const Eigen::VectorXd& supply, const Eigen::VectorXd& demand,
                          const Eigen::MatrixXd& cost, double epsilon, double tol,
                          int max_iterations) {
  const Eigen::Index n = supply.size(), m = demand.size();
  if (cost.rows() != n || cost.cols() != m)
    throw std::invalid_argument("sinkhorn: cost matrix shape mismatch");
  if (!(epsilon > 0.0)) throw std::invalid_argument("sinkhorn: epsilon must be positive");

  const Eigen::ArrayXd log_a = supply.array().log();
  const Eigen::ArrayXd log_b = demand.array().log();
  Eigen::ArrayXd f = Eigen::ArrayXd::Zero(n), g = Eigen::ArrayXd::Zero(m);
  auto log_sum_exp = [](const Eigen::ArrayXd& x) {
    const double mx = x.maxCoeff();
    if (!std::isfinite(mx)) return mx;
    return mx + std::log((x - mx).exp().sum());
  };

  SinkhornSolution out;
  out.epsilon = epsilon;
  Eigen::ArrayXd scratch_m(m), scratch_n(n);
  for (int it = 1; it <= max_iterations; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) {
      scratch_m = log_b + (g - cost.row(i).transpose().array()) / epsilon;
      f(i) = -epsilon * log_sum_exp(scratch_m);
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      scratch_n = log_a + (f - cost.col(j).array()) / epsilon;
      g(j) = -epsilon * log_sum_exp(scratch_n);
    }
    // Columns are exact after the g-update; measure the row defect.
    double err = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      scratch_m = log_b + (g - cost.row(i).transpose().array()) / epsilon;
      err += std::abs(std::exp(log_a(i) + f(i) / epsilon + log_sum_exp(scratch_m)) - supply(i));
    }
    out.iterations = it;
    out.marginal_error = err;
    if (err < tol) {
      out.converged = true;
      break;
    }
  }
  out.plan.resize(n, m);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      out.plan(i, j) = std::exp(log_a(i) + log_b(j) + (f(i) + g(j) - cost(i, j)) / epsilon);
  out.cost = (out.plan.array() * cost.array()).sum();
  return out;
}

}  // namespace mkvlab::transport
