#pragma once

// Independent checks: brute-force univariate minimisation, least squares with
// known groupings, and the separation conditions for exact group recovery.

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "scope/fit.hpp"
#include "scope/univariate.hpp"

namespace scope {

// True grouping and coefficients per variable.
struct OracleSpec {
  std::vector<std::vector<int>> groups;  // group id per level
  std::vector<std::vector<double>> theta0;

  // Spec with groups read off from equal entries of theta0.
  static OracleSpec from_coefficients(std::vector<std::vector<double>> theta0);
  // Throws unless theta0 is constant within groups and shapes match the design.
  void validate(const Design& d) const;
};

struct GridResult {
  std::vector<double> theta;
  double objective = 0.0;
  std::size_t visited = 0;
};

inline constexpr std::size_t kGridOracleMaxLevels = 5;

// Best assignment of levels to an equispaced grid over [min ybar - pad, max ybar + pad],
// by branch and bound over monotone assignments.
GridResult grid_oracle(const WeightedMeans& m, const McpParams& p, std::size_t grid_points, double pad);

// Least squares with coefficients constant on the true groups, recentred to
// satisfy the identifiability constraint.
Coefficients oracle_least_squares(const Design& d, std::span<const double> y, const OracleSpec& spec);

struct VariableSeparation {
  double delta = std::numeric_limits<double>::infinity();
  std::size_t s = 1;
  std::size_t levels = 0;
  std::size_t n0_min = 0, n0_max = 0, n_min = 0;
  double lambda_j = 0.0;
  double gamma_lower = 0.0;  // min(gamma, eta s)
  double gamma_upper = 0.0;  // max(gamma, eta s)
  double bound_global = 0.0;     // univariate global-optimum condition
  double bound_blockwise = 0.0;  // multivariate blockwise-optimum condition
  bool satisfied = false;
};

struct SeparationReport {
  double eta = 0.0;
  std::vector<VariableSeparation> vars;
  bool satisfied = false;
  // Raw probability lower bounds, with n_min as observed and with n/K in its place.
  double prob_nmin = 0.0;
  double prob_n_over_k = 0.0;
};

// Gaps are checked against the global bound when p = 1 and the blockwise bound
// otherwise. With `scale_by_levels` the penalty level of variable j is lambda sqrt(K_j).
SeparationReport check_separation(const OracleSpec& spec, const Design& d, double gamma, double lambda, double sigma,
                                  bool scale_by_levels = true);

void print_report(std::ostream& os, const SeparationReport& r);

}  // namespace scope
