#include "scope/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "scope/pwq.hpp"

namespace scope {

OracleSpec OracleSpec::from_coefficients(std::vector<std::vector<double>> theta0) {
  OracleSpec s;
  s.groups.reserve(theta0.size());
  for (const auto& t : theta0) {
    std::map<double, int> ids;
    std::vector<int> g(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) {
      auto [it, fresh] = ids.emplace(t[k], static_cast<int>(ids.size()));
      g[k] = it->second;
    }
    s.groups.push_back(std::move(g));
  }
  s.theta0 = std::move(theta0);
  return s;
}

void OracleSpec::validate(const Design& d) const {
  if (groups.size() != d.p() || theta0.size() != d.p()) throw std::invalid_argument("OracleSpec: variable count mismatch");
  for (std::size_t j = 0; j < d.p(); ++j) {
    const std::size_t K = d.categorical[j].levels();
    if (groups[j].size() != K || theta0[j].size() != K)
      throw std::invalid_argument("OracleSpec: level count mismatch for variable " + std::to_string(j));
    std::map<int, double> value;
    for (std::size_t k = 0; k < K; ++k) {
      if (groups[j][k] < 0) throw std::invalid_argument("OracleSpec: negative group id");
      auto [it, fresh] = value.emplace(groups[j][k], theta0[j][k]);
      if (!fresh && it->second != theta0[j][k])
        throw std::invalid_argument("OracleSpec: theta0 not constant within a group of variable " + std::to_string(j));
    }
  }
}

GridResult grid_oracle(const WeightedMeans& m, const McpParams& p, std::size_t grid_points, double pad) {
  m.validate();
  const std::size_t K = m.size();
  if (K > kGridOracleMaxLevels) throw std::invalid_argument("grid_oracle: too many levels for enumeration");
  if (grid_points < 2) throw std::invalid_argument("grid_oracle: need at least two grid points");
  if (!(pad >= 0.0)) throw std::invalid_argument("grid_oracle: negative pad");

  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return m.ybar[a] < m.ybar[b]; });

  const auto [lo_it, hi_it] = std::minmax_element(m.ybar.begin(), m.ybar.end());
  const double lo = *lo_it - pad, hi = *hi_it + pad;
  const std::size_t L = grid_points;
  std::vector<double> grid(L);
  for (std::size_t l = 0; l < L; ++l) grid[l] = lo + (hi - lo) * static_cast<double>(l) / static_cast<double>(L - 1);

  std::vector<std::vector<double>> loss(K, std::vector<double>(L));
  std::vector<std::size_t> argmin(K);
  for (std::size_t r = 0; r < K; ++r) {
    const double w = m.w[order[r]], yb = m.ybar[order[r]];
    for (std::size_t l = 0; l < L; ++l) loss[r][l] = 0.5 * w * (yb - grid[l]) * (yb - grid[l]);
    argmin[r] = static_cast<std::size_t>(std::min_element(loss[r].begin(), loss[r].end()) - loss[r].begin());
  }
  std::vector<std::vector<double>> pen(L, std::vector<double>(L, 0.0));
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = a; b < L; ++b) pen[a][b] = mcp_value(grid[b] - grid[a], p);

  // bound[r][l]: lower bound on the cost of levels r.. given level r-1 sits at l.
  // Concavity makes the remaining penalty at least rho(last - l); each loss is
  // bounded by its minimum over [l, last].
  std::vector<std::vector<double>> bound(K + 1, std::vector<double>(L, 0.0));
  for (std::size_t r = 1; r < K; ++r)
    for (std::size_t l = 0; l < L; ++l) {
      double b = kInf;
      for (std::size_t e = l; e < L; ++e) {
        double v = loss[K - 1][e] + pen[l][e];
        for (std::size_t q = r; q + 1 < K; ++q) v += loss[q][std::clamp(argmin[q], l, e)];
        b = std::min(b, v);
      }
      bound[r][l] = b;
    }

  std::vector<std::size_t> cur(K), best(K);
  auto cost_of = [&](const std::vector<std::size_t>& a) {
    double c = 0.0;
    for (std::size_t r = 0; r < K; ++r) c += loss[r][a[r]] + (r > 0 ? pen[a[r - 1]][a[r]] : 0.0);
    return c;
  };
  // incumbent: the better of rounding every subaverage and the best constant fit
  for (std::size_t r = 0; r < K; ++r) best[r] = r > 0 ? std::max(argmin[r], best[r - 1]) : argmin[r];
  double best_cost = cost_of(best);
  for (std::size_t l = 0; l < L; ++l) {
    std::fill(cur.begin(), cur.end(), l);
    const double c = cost_of(cur);
    if (c < best_cost) {
      best_cost = c;
      best = cur;
    }
  }

  GridResult out;
  auto dfs = [&](auto&& self, std::size_t r, std::size_t from, double acc) -> void {
    for (std::size_t l = from; l < L; ++l) {
      ++out.visited;
      const double c = acc + loss[r][l] + (r > 0 ? pen[from][l] : 0.0);
      if (c + bound[r + 1][l] >= best_cost) continue;
      cur[r] = l;
      if (r + 1 == K) {
        best_cost = c;
        best = cur;
      } else {
        self(self, r + 1, l, c);
      }
    }
  };
  dfs(dfs, 0, 0, 0.0);

  out.theta.resize(K);
  for (std::size_t r = 0; r < K; ++r) out.theta[order[r]] = grid[best[r]];
  out.objective = objective_value(out.theta, m, p);
  return out;
}

Coefficients oracle_least_squares(const Design& d, std::span<const double> y, const OracleSpec& spec) {
  d.validate(false);
  spec.validate(d);
  if (y.size() != d.n) throw std::invalid_argument("oracle_least_squares: response length mismatch");
  const std::size_t n = d.n;

  // Relabel groups densely; group 0 of each variable is the reference.
  std::vector<std::vector<int>> gid(d.p());
  std::vector<std::size_t> ngroups(d.p());
  std::size_t cols = 1;
  for (std::size_t j = 0; j < d.p(); ++j) {
    std::map<int, int> dense;
    for (int g : spec.groups[j]) dense.emplace(g, 0);
    int next = 0;
    for (auto& [g, v] : dense) v = next++;
    gid[j].resize(spec.groups[j].size());
    for (std::size_t k = 0; k < gid[j].size(); ++k) gid[j][k] = dense[spec.groups[j][k]];
    ngroups[j] = dense.size();
    cols += ngroups[j] - 1;
  }
  cols += d.d();

  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols));
  X.col(0).setOnes();
  std::vector<std::size_t> offset(d.p());
  std::size_t c = 1;
  for (std::size_t j = 0; j < d.p(); ++j) {
    offset[j] = c;
    for (std::size_t i = 0; i < n; ++i) {
      const int code = d.categorical[j].codes[i];
      if (code < 0) throw std::invalid_argument("oracle_least_squares: unseen level in design");
      const int g = gid[j][static_cast<std::size_t>(code)];
      if (g > 0) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + g - 1)) = 1.0;
    }
    c += ngroups[j] - 1;
  }
  if (d.d() > 0) X.rightCols(static_cast<Eigen::Index>(d.d())) = d.continuous;

  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(n));
  const Eigen::MatrixXd XtX = X.transpose() * X;
  const Eigen::VectorXd Xty = X.transpose() * yv;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(XtX);
  qr.setThreshold(1e-10);
  if (static_cast<std::size_t>(qr.rank()) < cols)
    throw std::runtime_error("oracle_least_squares: grouped design is rank deficient");
  const Eigen::VectorXd b = qr.solve(Xty);

  Coefficients out = Coefficients::zeros(d);
  out.mu = b(0);
  const auto counts = d.level_counts();
  for (std::size_t j = 0; j < d.p(); ++j) {
    auto& th = out.theta[j];
    for (std::size_t k = 0; k < th.size(); ++k) {
      const int g = gid[j][k];
      th[k] = g > 0 ? b(static_cast<Eigen::Index>(offset[j] + g - 1)) : 0.0;
    }
    double shift = 0.0;
    for (std::size_t k = 0; k < th.size(); ++k) shift += static_cast<double>(counts[j][k]) * th[k];
    shift /= static_cast<double>(n);
    for (double& t : th) t -= shift;
    out.mu += shift;
  }
  for (std::size_t l = 0; l < d.d(); ++l) out.beta[l] = b(static_cast<Eigen::Index>(c + l));
  return out;
}

SeparationReport check_separation(const OracleSpec& spec, const Design& d, double gamma, double lambda, double sigma,
                                  bool scale_by_levels) {
  const double n = static_cast<double>(d.n);
  const auto counts = d.level_counts();
  SeparationReport rep;
  rep.vars.resize(d.p());

  double eta = 1.0;
  for (std::size_t j = 0; j < d.p(); ++j) {
    auto& v = rep.vars[j];
    const auto& g = spec.groups[j];
    const auto& t = spec.theta0[j];
    v.levels = g.size();

    std::map<int, std::size_t> rows;
    for (std::size_t k = 0; k < g.size(); ++k) rows[g[k]] += counts[j][k];
    v.s = rows.size();
    v.n0_min = v.n0_max = rows.begin()->second;
    for (const auto& [id, r] : rows) {
      v.n0_min = std::min(v.n0_min, r);
      v.n0_max = std::max(v.n0_max, r);
    }
    v.n_min = *std::min_element(counts[j].begin(), counts[j].end());

    std::vector<double> vals(t.begin(), t.end());
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    for (std::size_t k = 1; k < vals.size(); ++k) v.delta = std::min(v.delta, vals[k] - vals[k - 1]);

    const double s = static_cast<double>(v.s);
    eta = std::min({eta, s * static_cast<double>(v.n0_min) / n, n / (s * static_cast<double>(v.n0_max))});
  }
  rep.eta = std::max(eta, std::numeric_limits<double>::min());

  const bool single = d.p() == 1;
  double tail_nmin = 0.0, tail_nk = 0.0;
  rep.satisfied = true;
  for (auto& v : rep.vars) {
    const double s = static_cast<double>(v.s), K = static_cast<double>(v.levels);
    v.lambda_j = scale_by_levels ? lambda * std::sqrt(K) : lambda;
    v.gamma_lower = std::min(gamma, rep.eta * s);
    v.gamma_upper = std::max(gamma, rep.eta * s);
    const double root = std::sqrt(gamma * v.gamma_upper) * v.lambda_j;
    v.bound_global = 3.0 * (1.0 + std::sqrt(2.0) / rep.eta) * root;
    v.bound_blockwise = 3.0 * (4.0 / 3.0 + std::sqrt(2.0) / rep.eta) * root;
    v.satisfied = v.delta >= (single ? v.bound_global : v.bound_blockwise);
    rep.satisfied = rep.satisfied && v.satisfied;

    const double rate = rep.eta * s * v.gamma_lower * v.lambda_j * v.lambda_j / (8.0 * sigma * sigma);
    tail_nmin += std::exp(-static_cast<double>(v.n_min) * rate + std::log(K));
    tail_nk += std::exp(-(n / K) * rate + std::log(K));
  }
  const double mult = single ? 2.0 : 4.0;
  rep.prob_nmin = 1.0 - mult * tail_nmin;
  rep.prob_n_over_k = 1.0 - mult * tail_nk;
  return rep;
}

void print_report(std::ostream& os, const SeparationReport& r) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  auto clip = [](double x) { return std::clamp(x, 0.0, 1.0); };
  os << std::setprecision(4);
  os << "eta " << r.eta << "\n";
  os << std::left << std::setw(4) << "var" << std::right << std::setw(6) << "K" << std::setw(4) << "s" << std::setw(8)
     << "n0_min" << std::setw(8) << "n0_max" << std::setw(7) << "n_min" << std::setw(11) << "lambda_j" << std::setw(11)
     << "gamma_lo" << std::setw(11) << "gamma_hi" << std::setw(11) << "delta" << std::setw(11) << "bound_1"
     << std::setw(11) << "bound_2" << std::setw(5) << "ok" << "\n";
  for (std::size_t j = 0; j < r.vars.size(); ++j) {
    const auto& v = r.vars[j];
    os << std::left << std::setw(4) << j << std::right << std::setw(6) << v.levels << std::setw(4) << v.s
       << std::setw(8) << v.n0_min << std::setw(8) << v.n0_max << std::setw(7) << v.n_min << std::setw(11)
       << v.lambda_j << std::setw(11) << v.gamma_lower << std::setw(11) << v.gamma_upper << std::setw(11) << v.delta
       << std::setw(11) << v.bound_global << std::setw(11) << v.bound_blockwise << std::setw(5)
       << (v.satisfied ? "yes" : "no") << "\n";
  }
  os << "satisfied " << (r.satisfied ? "yes" : "no") << "\n";
  os << "probability (n_min) " << clip(r.prob_nmin) << "  raw " << r.prob_nmin << "\n";
  os << "probability (n/K)   " << clip(r.prob_n_over_k) << "  raw " << r.prob_n_over_k << "\n";
  os.flags(flags);
  os.precision(prec);
}

}  // namespace scope
