#pragma once

// Brute-force references shared by the unit tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "scope/penalty.hpp"
#include "scope/pwq.hpp"
#include "scope/univariate.hpp"

namespace oracle {

// min over t <= x of f(t) + rho(x - t), scanning t on a dense grid below x
// together with a handful of exact critical points.
template <typename F>
double inner_min(const F& f, double x, const scope::McpParams& p, double reach, int points,
                 const std::vector<double>& extra = {}) {
  double best = f(x);
  const double lo = x - reach;
  for (int i = 0; i <= points; ++i) {
    const double t = std::min(x, lo + (x - lo) * i / points);
    best = std::min(best, f(t) + scope::mcp_value(x - t, p));
  }
  for (double t : extra)
    if (t <= x) best = std::min(best, f(t) + scope::mcp_value(x - t, p));
  return best;
}

// Continuous, coercive random piecewise quadratic with `n` pieces.
inline scope::PiecewiseQuadratic random_pwq(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> knot(-5, 5), coef(-1, 1), pos(0.1, 2);
  std::vector<double> ks(n - 1);
  for (auto& k : ks) k = knot(rng);
  std::sort(ks.begin(), ks.end());
  std::vector<scope::QuadraticPiece> pieces;
  double lo = -scope::kInf;
  double prev_val = 0.0;
  for (int i = 0; i < n; ++i) {
    const double hi = i + 1 < n ? ks[i] : scope::kInf;
    scope::Quadratic q;
    q.a = (i == 0 || i + 1 == n) ? pos(rng) : coef(rng);
    q.b = 3 * coef(rng);
    if (i == 0) {
      q.c = coef(rng);
    } else {
      q.c = 0.0;
      q.c = prev_val - q(lo);
    }
    if (hi != scope::kInf) prev_val = q(hi);
    pieces.push_back({lo, hi, q});
    lo = hi;
  }
  return scope::PiecewiseQuadratic(std::move(pieces));
}

inline scope::WeightedMeans random_means(std::mt19937_64& rng, int K, double spread = 3.0) {
  std::uniform_real_distribution<double> u(-spread, spread), wt(0.2, 1.0);
  scope::WeightedMeans m;
  double total = 0;
  for (int k = 0; k < K; ++k) {
    m.w.push_back(wt(rng));
    m.ybar.push_back(u(rng));
    total += m.w.back();
  }
  for (auto& w : m.w) w /= total;
  return m;
}

}  // namespace oracle

#include "scope/fit.hpp"

namespace oracle {

// Random categorical design with every level observed.
inline scope::Design random_design(std::mt19937_64& rng, std::size_t n, const std::vector<std::size_t>& K,
                                   std::size_t d = 0) {
  scope::Design des;
  des.n = n;
  for (std::size_t j = 0; j < K.size(); ++j) {
    scope::CategoricalVar v;
    v.name = "x" + std::to_string(j);
    for (std::size_t k = 0; k < K[j]; ++k) v.labels.push_back("l" + std::to_string(k));
    std::uniform_int_distribution<int> u(0, static_cast<int>(K[j]) - 1);
    v.codes.resize(n);
    for (std::size_t i = 0; i < n; ++i) v.codes[i] = i < K[j] ? static_cast<int>(i) : u(rng);
    std::shuffle(v.codes.begin(), v.codes.end(), rng);
    des.categorical.push_back(std::move(v));
  }
  std::normal_distribution<double> nd;
  des.continuous.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t l = 0; l < d; ++l) des.continuous(i, l) = nd(rng) + 0.5 * static_cast<double>(l);
  for (std::size_t l = 0; l < d; ++l) des.continuous_names.push_back("z" + std::to_string(l));
  return des;
}

// y = sum_j signal_j(level) + noise, with level effects taken from a small grid.
inline std::vector<double> random_response(std::mt19937_64& rng, const scope::Design& des, double sigma,
                                           double strength = 2.0) {
  std::vector<double> y(des.n, 1.0);
  for (const auto& v : des.categorical) {
    std::vector<double> eff(v.levels());
    for (std::size_t k = 0; k < eff.size(); ++k) eff[k] = strength * (static_cast<double>(k % 3) - 1.0);
    for (std::size_t i = 0; i < des.n; ++i) y[i] += eff[static_cast<std::size_t>(v.codes[i])];
  }
  std::normal_distribution<double> nd(0.0, sigma);
  for (auto& v : y) v += nd(rng);
  return y;
}

}  // namespace oracle
