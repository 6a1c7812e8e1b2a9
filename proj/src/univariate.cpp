#include "scope/univariate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "scope/pwq.hpp"

namespace scope {

void WeightedMeans::validate() const {
  if (w.empty()) throw std::invalid_argument("WeightedMeans: no levels");
  if (w.size() != ybar.size()) throw std::invalid_argument("WeightedMeans: size mismatch");
  if (!labels.empty() && labels.size() != w.size()) throw std::invalid_argument("WeightedMeans: label count mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (!std::isfinite(w[k]) || !(w[k] > 0.0)) throw std::invalid_argument("WeightedMeans: weights must be positive");
    if (!std::isfinite(ybar[k])) throw std::invalid_argument("WeightedMeans: non-finite subaverage");
    total += w[k];
  }
  if (total > 1.0 + 1e-12) throw std::invalid_argument("WeightedMeans: weights sum above one");
}

WeightedMeans collapse_to_subaverages(std::span<const double> y, std::span<const int> level, std::size_t num_levels) {
  if (y.size() != level.size()) throw std::invalid_argument("collapse_to_subaverages: size mismatch");
  std::vector<double> sum(num_levels, 0.0);
  std::vector<std::size_t> count(num_levels, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int k = level[i];
    if (k < 0 || static_cast<std::size_t>(k) >= num_levels)
      throw std::invalid_argument("collapse_to_subaverages: level index out of range");
    sum[k] += y[i];
    ++count[k];
  }
  WeightedMeans m;
  m.w.resize(num_levels);
  m.ybar.resize(num_levels);
  const double n = static_cast<double>(y.size());
  for (std::size_t k = 0; k < num_levels; ++k) {
    if (count[k] == 0)
      throw std::invalid_argument("collapse_to_subaverages: level " + std::to_string(k) + " has no observations");
    m.w[k] = static_cast<double>(count[k]) / n;
    m.ybar[k] = sum[k] / static_cast<double>(count[k]);
  }
  return m;
}

double objective_value(std::span<const double> theta, const WeightedMeans& m, const McpParams& p) {
  if (theta.size() != m.size()) throw std::invalid_argument("objective_value: size mismatch");
  double loss = 0.0;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double r = m.ybar[k] - theta[k];
    loss += m.w[k] * r * r;
  }
  std::vector<double> sorted(theta.begin(), theta.end());
  std::sort(sorted.begin(), sorted.end());
  double pen = 0.0;
  for (std::size_t k = 0; k + 1 < sorted.size(); ++k) pen += mcp_value(sorted[k + 1] - sorted[k], p);
  return 0.5 * loss + pen;
}

std::vector<int> cluster_ids(std::span<const double> theta, double tol) {
  if (tol < 0.0) throw std::invalid_argument("cluster_ids: negative tolerance");
  std::vector<std::size_t> order(theta.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return theta[a] < theta[b]; });
  std::vector<int> ids(theta.size(), 0);
  int id = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (r > 0 && theta[order[r]] - theta[order[r - 1]] > tol) ++id;
    ids[order[r]] = id;
  }
  return ids;
}

namespace {

std::vector<std::size_t> order_by_subaverage(const WeightedMeans& m) {
  std::vector<std::size_t> order(m.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m.ybar[a] < m.ybar[b]; });
  return order;
}

UnivariateSolution finish(std::vector<double> theta, const WeightedMeans& m, const McpParams& p) {
  UnivariateSolution sol;
  sol.objective = objective_value(theta, m, p);
  sol.clusters = cluster_ids(theta);
  sol.theta = std::move(theta);
  return sol;
}

}  // namespace

UnivariateSolution solve_exact(const WeightedMeans& m, const McpParams& p) {
  m.validate();
  const std::size_t K = m.size();
  const auto order = order_by_subaverage(m);

  std::vector<PiecewiseLinear> backs;
  backs.reserve(K);
  std::vector<std::size_t> stage_pieces;
  stage_pieces.reserve(K);

  auto f = add_quadratic(PiecewiseQuadratic::single({}), m.w[order[0]], m.ybar[order[0]]);
  stage_pieces.push_back(f.size());
  for (std::size_t k = 1; k < K; ++k) {
    Envelope env = lower_envelope(candidates_from(f, p));
    backs.push_back(std::move(env.back));
    f = add_quadratic(env.value, m.w[order[k]], m.ybar[order[k]]);
    stage_pieces.push_back(f.size());
  }

  std::vector<double> sorted_theta(K);
  sorted_theta[K - 1] = global_minimize(f).argmin;
  for (std::size_t k = K - 1; k > 0; --k) {
    const double next = sorted_theta[k];
    sorted_theta[k - 1] = std::min(backs[k - 1](next), next);
  }

  std::vector<double> theta(K);
  for (std::size_t r = 0; r < K; ++r) theta[order[r]] = sorted_theta[r];
  auto sol = finish(std::move(theta), m, p);
  sol.stage_pieces = std::move(stage_pieces);
  return sol;
}

namespace {

template <bool Parallel>
UnivariateSolution discrete_dp(const WeightedMeans& m, const McpParams& p, std::span<const double> grid) {
  m.validate();
  if (grid.empty()) throw std::invalid_argument("solve_discrete: empty grid");
  for (std::size_t l = 1; l < grid.size(); ++l)
    if (!(grid[l - 1] < grid[l])) throw std::invalid_argument("solve_discrete: grid must be strictly increasing");

  const std::size_t K = m.size();
  const std::size_t L = grid.size();
  const auto order = order_by_subaverage(m);

  std::vector<double> cost(L), prev(L);
  std::vector<std::size_t> back(K * L);
  {
    const double w = m.w[order[0]], yb = m.ybar[order[0]];
    for (std::size_t l = 0; l < L; ++l) {
      const double r = yb - grid[l];
      cost[l] = 0.5 * w * r * r;
      back[l] = l;
    }
  }
  for (std::size_t k = 1; k < K; ++k) {
    std::swap(cost, prev);
    const double w = m.w[order[k]], yb = m.ybar[order[k]];
    std::size_t* row = back.data() + k * L;
    const long long LL = static_cast<long long>(L);
#pragma omp parallel for schedule(static) if (Parallel)
    for (long long li = 0; li < LL; ++li) {
      const std::size_t l = static_cast<std::size_t>(li);
      double best = prev[0] + mcp_value(grid[l] - grid[0], p);
      std::size_t arg = 0;
      for (std::size_t j = 1; j <= l; ++j) {
        const double v = prev[j] + mcp_value(grid[l] - grid[j], p);
        if (v < best) {
          best = v;
          arg = j;
        }
      }
      const double r = yb - grid[l];
      cost[l] = best + 0.5 * w * r * r;
      row[l] = arg;
    }
  }

  std::size_t idx = static_cast<std::size_t>(std::min_element(cost.begin(), cost.end()) - cost.begin());
  std::vector<double> theta(K);
  for (std::size_t k = K; k-- > 0;) {
    theta[order[k]] = grid[idx];
    idx = back[k * L + idx];
  }
  return finish(std::move(theta), m, p);
}

}  // namespace

UnivariateSolution solve_discrete(const WeightedMeans& m, const McpParams& p, std::span<const double> grid) {
  return discrete_dp<false>(m, p, grid);
}

UnivariateSolution solve_discrete_parallel(const WeightedMeans& m, const McpParams& p, std::span<const double> grid) {
  return discrete_dp<true>(m, p, grid);
}

std::vector<double> default_grid(const WeightedMeans& m, std::size_t points) {
  m.validate();
  if (points == 0) throw std::invalid_argument("default_grid: need at least one point");
  const auto [lo_it, hi_it] = std::minmax_element(m.ybar.begin(), m.ybar.end());
  const double lo = *lo_it, hi = *hi_it;
  if (points == 1 || lo == hi) return {lo};
  std::vector<double> grid(points);
  for (std::size_t l = 0; l < points; ++l)
    grid[l] = lo + (hi - lo) * static_cast<double>(l) / static_cast<double>(points - 1);
  return grid;
}

}  // namespace scope
