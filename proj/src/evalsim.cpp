#include "scope/evalsim.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

#include "scope/univariate.hpp"

namespace scope {

void SimSpec::validate() const {
  if (n == 0 || p == 0 || K == 0) throw std::invalid_argument("sim: n, p and K must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("sim: rho must lie in [0, 1)");
  if (!(sigma2 > 0.0)) throw std::invalid_argument("sim: sigma2 must be positive");
  if (theta0.size() != p) throw std::invalid_argument("sim: need one template per variable");
  for (const auto& t : theta0)
    if (t.size() != K) throw std::invalid_argument("sim: template length differs from K");
  if (balanced && n % K != 0) throw std::invalid_argument("sim: balanced design needs n divisible by K");
}

namespace {

std::vector<double> blocks(std::initializer_list<std::pair<double, int>> parts) {
  std::vector<double> out;
  for (const auto& [v, c] : parts) out.insert(out.end(), static_cast<std::size_t>(c), v);
  return out;
}

SimSpec with(std::string name, std::size_t p, double rho, double sigma2,
             std::initializer_list<std::pair<std::size_t, std::vector<double>>> signal) {
  SimSpec s;
  s.name = std::move(name);
  s.p = p;
  s.rho = rho;
  s.sigma2 = sigma2;
  s.theta0.assign(p, std::vector<double>(24, 0.0));
  std::size_t j = 0;
  for (const auto& [count, t] : signal)
    for (std::size_t r = 0; r < count; ++r) s.theta0[j++] = t;
  return s;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

std::vector<std::string> preset_names() {
  return {"ld1", "ld2", "ld3", "hd1", "hd2", "hd3", "hd4", "hd5", "hd6", "hd7", "hd8", "fig2"};
}

SimSpec preset(const std::string& name) {
  const auto ld1 = blocks({{-3, 10}, {0, 4}, {3, 10}});
  const auto hd_a = blocks({{-2, 8}, {0, 8}, {2, 8}});
  const auto hd_b = blocks({{-2, 10}, {0, 4}, {2, 10}});
  const auto hd_c = blocks({{-2, 16}, {3, 8}});
  if (name == "ld1") return with(name, 10, 0.0, 1.0, {{3, ld1}});
  if (name == "ld2") return with(name, 10, 0.0, 1.0, {{3, blocks({{-3, 8}, {0, 8}, {3, 8}})}});
  if (name == "ld3") return with(name, 10, 0.8, 1.0, {{3, ld1}});
  if (name == "hd1") return with(name, 100, 0.0, 50.0, {{3, hd_a}, {3, hd_b}});
  if (name == "hd2") return with(name, 100, 0.5, 50.0, {{3, hd_a}, {3, hd_b}});
  if (name == "hd3") return with(name, 100, 0.5, 100.0, {{3, hd_a}, {3, hd_c}});
  if (name == "hd4") return with(name, 100, 0.0, 25.0, {{5, blocks({{-2, 5}, {-1, 5}, {0, 4}, {1, 5}, {2, 5}})}});
  if (name == "hd5") return with(name, 100, 0.0, 1.0, {{25, hd_c}});
  if (name == "hd6") return with(name, 100, 0.5, 1.0, {{25, hd_c}});
  if (name == "hd7") return with(name, 100, 0.0, 25.0, {{10, blocks({{-2, 4}, {0, 12}, {2, 8}})}});
  if (name == "hd8") return with(name, 100, 0.0, 25.0, {{5, blocks({{-3, 6}, {-1, 6}, {1, 6}, {3, 6}})}});
  if (name == "fig2") {
    SimSpec s;
    s.name = name;
    s.n = 20;
    s.p = 1;
    s.K = 20;
    s.balanced = true;
    s.theta0 = {blocks({{-6, 4}, {-2.5, 6}, {2.5, 6}, {6, 4}})};
    return s;
  }
  throw std::invalid_argument("unknown setting '" + name + "'");
}

std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t rep) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (rep + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

CopulaSampler::CopulaSampler(std::size_t p, double rho) {
  if (p == 0) throw std::invalid_argument("copula: p must be positive");
  if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("copula: rho must lie in [0, 1)");
  const Eigen::Index q = static_cast<Eigen::Index>(p);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(q, q, 2.0 * std::sin(std::numbers::pi * rho / 6.0));
  sigma.diagonal().setOnes();
  chol_ = sigma.llt().matrixL();
}

void CopulaSampler::draw(std::mt19937_64& rng, std::span<double> u) const {
  const Eigen::Index q = chol_.rows();
  if (u.size() != static_cast<std::size_t>(q)) throw std::invalid_argument("copula: output size mismatch");
  std::normal_distribution<double> nd;
  Eigen::VectorXd e(q);
  for (Eigen::Index j = 0; j < q; ++j) e(j) = nd(rng);
  const Eigen::VectorXd w = chol_.triangularView<Eigen::Lower>() * e;
  for (Eigen::Index j = 0; j < q; ++j) u[static_cast<std::size_t>(j)] = normal_cdf(w(j));
}

namespace {

Design draw_design(const SimSpec& s, std::mt19937_64& rng, std::size_t n, bool require_full) {
  Design d;
  d.n = n;
  d.continuous.resize(static_cast<Eigen::Index>(n), 0);
  d.categorical.resize(s.p);
  for (std::size_t j = 0; j < s.p; ++j) {
    d.categorical[j].name = "x" + std::to_string(j + 1);
    for (std::size_t k = 0; k < s.K; ++k) d.categorical[j].labels.push_back(std::to_string(k + 1));
    d.categorical[j].codes.resize(n);
  }
  if (s.balanced) {
    for (auto& v : d.categorical)
      for (std::size_t i = 0; i < n; ++i) v.codes[i] = static_cast<int>(i % s.K);
    return d;
  }

  const CopulaSampler sampler(s.p, s.rho);
  std::vector<double> u(s.p);
  std::vector<std::size_t> seen(s.K);
  for (std::size_t attempt = 0; attempt < kDesignRetries; ++attempt) {
    for (std::size_t i = 0; i < n; ++i) {
      sampler.draw(rng, u);
      for (std::size_t j = 0; j < s.p; ++j) {
        const auto k = std::min(s.K - 1, static_cast<std::size_t>(std::floor(static_cast<double>(s.K) * u[j])));
        d.categorical[j].codes[i] = static_cast<int>(k);
      }
    }
    bool full = true;
    for (const auto& v : d.categorical) {
      std::fill(seen.begin(), seen.end(), 0);
      for (int c : v.codes) ++seen[static_cast<std::size_t>(c)];
      full = full && std::find(seen.begin(), seen.end(), std::size_t{0}) == seen.end();
    }
    if (full || !require_full) return d;
  }
  throw std::runtime_error("sim: could not draw a design with every level observed");
}

}  // namespace

Design gen_design(const SimSpec& s, std::mt19937_64& rng, std::size_t n) {
  s.validate();
  return draw_design(s, rng, n ? n : s.n, true);
}

SimResponse gen_response(const Design& d, const SimSpec& s, std::mt19937_64& rng) {
  s.validate();
  if (d.p() != s.p) throw std::invalid_argument("sim: design has the wrong number of variables");
  SimResponse r;
  r.truth = Coefficients::zeros(d);
  r.truth.mu = s.mu0;
  const auto counts = d.level_counts();
  for (std::size_t j = 0; j < s.p; ++j) {
    auto t = s.theta0[j];
    double shift = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) shift += static_cast<double>(counts[j][k]) * t[k];
    shift /= static_cast<double>(d.n);
    for (auto& v : t) v -= shift;
    r.truth.theta[j] = std::move(t);
  }
  r.g = linear_predictor(r.truth, d);
  std::normal_distribution<double> nd(0.0, std::sqrt(s.sigma2));
  r.y = r.g;
  for (auto& v : r.y) v += nd(rng);
  return r;
}

double mspe(const Coefficients& fit, const Coefficients& truth, const SimSpec& s, std::size_t n_test,
            std::uint64_t seed) {
  if (n_test == 0) throw std::invalid_argument("mspe: need test rows");
  s.validate();
  std::mt19937_64 rng(seed);
  SimSpec draw = s;
  draw.balanced = false;
  const Design d = draw_design(draw, rng, n_test, false);
  const auto g = linear_predictor(truth, d);
  const auto gh = linear_predictor(fit, d);
  double acc = 0.0;
  for (std::size_t i = 0; i < n_test; ++i) acc += (g[i] - gh[i]) * (g[i] - gh[i]);
  return acc / static_cast<double>(n_test);
}

double snr(const SimSpec& s, std::size_t n_mc, std::uint64_t seed) {
  s.validate();
  std::mt19937_64 rng(seed);
  SimSpec draw = s;
  draw.balanced = false;
  const Design d = draw_design(draw, rng, n_mc, false);
  Coefficients c = Coefficients::zeros(d);
  c.theta = s.theta0;
  const auto g = linear_predictor(c, d);
  double mean = 0.0;
  for (double v : g) mean += v;
  mean /= static_cast<double>(g.size());
  double var = 0.0;
  for (double v : g) var += (v - mean) * (v - mean);
  var /= static_cast<double>(g.size());
  return std::sqrt(var / s.sigma2);
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("ari: partitions differ in size");
  auto dense = [](const std::vector<int>& x) {
    std::unordered_map<int, int> ids;
    std::vector<int> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = ids.emplace(x[i], static_cast<int>(ids.size())).first->second;
    return std::make_pair(out, ids.size());
  };
  const auto [da, ra] = dense(a);
  const auto [db, rb] = dense(b);
  std::vector<double> table(ra * rb, 0.0), rows(ra, 0.0), cols(rb, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[static_cast<std::size_t>(da[i]) * rb + static_cast<std::size_t>(db[i])] += 1.0;
    rows[static_cast<std::size_t>(da[i])] += 1.0;
    cols[static_cast<std::size_t>(db[i])] += 1.0;
  }
  auto pairs = [](double x) { return 0.5 * x * (x - 1.0); };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (double v : table) index += pairs(v);
  for (double v : rows) sa += pairs(v);
  for (double v : cols) sb += pairs(v);
  const double total = pairs(static_cast<double>(a.size()));
  if (total == 0.0) return 1.0;
  const double expected = sa * sb / total;
  const double maximum = 0.5 * (sa + sb);
  if (maximum == expected) return 1.0;
  return (index - expected) / (maximum - expected);
}

SelectionRates selection_rates(const Coefficients& fit, const OracleSpec& spec) {
  if (fit.theta.size() != spec.theta0.size()) throw std::invalid_argument("selection_rates: variable count mismatch");
  SelectionRates r;
  for (std::size_t j = 0; j < fit.theta.size(); ++j) {
    const auto& t0 = spec.theta0[j];
    const bool signal = std::any_of(t0.begin(), t0.end(), [&](double v) { return v != t0.front(); });
    const bool selected =
        std::any_of(fit.theta[j].begin(), fit.theta[j].end(), [](double v) { return std::abs(v) > kSelectionTol; });
    if (signal) {
      ++r.total_signal;
      r.missed_signal += !selected;
    } else {
      ++r.total_null;
      r.selected_null += selected;
    }
  }
  r.fpr = r.total_null ? static_cast<double>(r.selected_null) / static_cast<double>(r.total_null) : 0.0;
  r.fnr = r.total_signal ? static_cast<double>(r.missed_signal) / static_cast<double>(r.total_signal) : 0.0;
  return r;
}

Design split_levels(const Design& d, std::size_t m, std::uint64_t seed) {
  if (m == 0) throw std::invalid_argument("split_levels: multiplier must be at least 1");
  Design out = d;
  out.hierarchy.reset();
  if (m == 1) return out;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  for (auto& v : out.categorical) {
    const std::size_t target = m * v.levels();
    std::vector<std::vector<std::size_t>> rows(v.levels());
    for (std::size_t i = 0; i < v.codes.size(); ++i) rows[static_cast<std::size_t>(v.codes[i])].push_back(i);
    while (v.levels() < target) {
      // levels with a single row cannot be split into two observed halves
      std::vector<double> weight(rows.size());
      for (std::size_t k = 0; k < rows.size(); ++k) weight[k] = rows[k].size() >= 2 ? double(rows[k].size()) : 0.0;
      if (std::all_of(weight.begin(), weight.end(), [](double w) { return w == 0.0; })) break;
      std::discrete_distribution<std::size_t> pick(weight.begin(), weight.end());
      const std::size_t k = pick(rng);
      std::vector<std::size_t> left, right;
      do {
        left.clear();
        right.clear();
        for (std::size_t i : rows[k]) (coin(rng) ? right : left).push_back(i);
      } while (left.empty() || right.empty());
      const int fresh = static_cast<int>(v.levels());
      const std::string base = v.labels[k];
      v.labels[k] = base + "-0";
      v.labels.push_back(base + "-1");
      for (std::size_t i : right) v.codes[i] = fresh;
      rows[k] = std::move(left);
      rows.push_back(std::move(right));
    }
  }
  return out;
}

Metrics evaluate(const Coefficients& fit, const Coefficients& truth, const Design& d, const SimSpec& s,
                 std::size_t n_test, std::uint64_t seed) {
  Metrics m;
  m.mspe = mspe(fit, truth, s, n_test, seed);
  const auto spec = OracleSpec::from_coefficients(s.theta0);
  const auto sel = selection_rates(fit, spec);
  m.fpr = sel.fpr;
  m.fnr = sel.fnr;
  m.df = degrees_of_freedom(fit, d);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < s.p; ++j) {
    const auto& t0 = s.theta0[j];
    if (std::all_of(t0.begin(), t0.end(), [&](double v) { return v == t0.front(); })) continue;
    const double a = adjusted_rand_index(spec.groups[j], cluster_ids(fit.theta[j]));
    m.ari_per_var.push_back(a);
    sum += a;
    ++count;
  }
  m.ari = count ? sum / static_cast<double>(count) : 1.0;
  return m;
}

Metrics run_replication(const SimSpec& s, std::size_t rep, const FitConfig& cfg, std::size_t n_test) {
  const std::uint64_t seed = replication_seed(s.seed, rep);
  std::mt19937_64 rng(seed);
  const Design d = gen_design(s, rng);
  const auto data = gen_response(d, s, rng);

  FitConfig c = cfg;
  c.seed = seed;
  const CvResult cv = cross_validate(d, data.y, c);
  const auto& lams = cv.lambdas[cv.best_gamma_index];
  const std::vector<double> head(lams.begin(), lams.begin() + static_cast<long>(cv.best_lambda_index) + 1);
  const SolutionPath path = fit_path(d, data.y, cv.best_gamma, head, c);
  const FitResult& fit = path.entries.back().fit;

  Metrics m = evaluate(fit.coef, data.truth, d, s, n_test, replication_seed(seed, 0xfeed));
  m.rep = rep;
  m.gamma = cv.best_gamma;
  m.lambda = cv.best_lambda;
  m.converged = fit.converged;
  return m;
}

}  // namespace scope
