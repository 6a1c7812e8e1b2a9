#pragma once

// Exact and grid-restricted solvers for the single-variable problem
//
//   minimise  1/2 sum_k w_k (ybar_k - theta_k)^2 + sum_k rho(theta_(k+1) - theta_(k))
//
// where theta_(k) are the order statistics of theta.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "scope/penalty.hpp"

namespace scope {

inline constexpr double kClusterTol = 1e-8;

struct WeightedMeans {
  std::vector<double> w;     // w_k = n_k / n (sum may be below one for weighted subproblems)
  std::vector<double> ybar;  // per-level subaverages
  std::vector<std::string> labels;

  std::size_t size() const { return w.size(); }
  // Throws std::invalid_argument when the invariants do not hold.
  void validate() const;
};

struct UnivariateSolution {
  std::vector<double> theta;  // original level order
  double objective = 0.0;
  std::vector<int> clusters;  // ids ordered by increasing fitted value
  std::vector<std::size_t> stage_pieces;  // pieces of f_k per stage, for profiling
};

// Collapse responses to per-level weights and means; `level` holds 0-based codes.
WeightedMeans collapse_to_subaverages(std::span<const double> y, std::span<const int> level, std::size_t num_levels);

double objective_value(std::span<const double> theta, const WeightedMeans& m, const McpParams& p);

UnivariateSolution solve_exact(const WeightedMeans& m, const McpParams& p);

// Exact minimiser over theta restricted to a sorted grid (O(K L^2)).
UnivariateSolution solve_discrete(const WeightedMeans& m, const McpParams& p, std::span<const double> grid);
// Same table, with each stage's L-wide inner loop split across OpenMP threads.
UnivariateSolution solve_discrete_parallel(const WeightedMeans& m, const McpParams& p, std::span<const double> grid);

// `points` equispaced values spanning [min ybar, max ybar].
std::vector<double> default_grid(const WeightedMeans& m, std::size_t points = 256);

std::vector<int> cluster_ids(std::span<const double> theta, double tol = kClusterTol);

}  // namespace scope
