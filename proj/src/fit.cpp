#include "scope/fit.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "scope/univariate.hpp"

namespace scope {

const char* family_name(Family f) { return f == Family::linear ? "linear" : "logistic"; }

Family parse_family(const std::string& s) {
  if (s == "linear") return Family::linear;
  if (s == "logistic") return Family::logistic;
  throw std::invalid_argument("unknown family '" + s + "'");
}

std::size_t Design::total_levels() const {
  std::size_t t = 0;
  for (const auto& v : categorical) t += v.levels();
  return t;
}

std::vector<std::vector<std::size_t>> Design::level_counts() const {
  std::vector<std::vector<std::size_t>> out(p());
  for (std::size_t j = 0; j < p(); ++j) {
    out[j].assign(categorical[j].levels(), 0);
    for (int c : categorical[j].codes)
      if (c >= 0) ++out[j][static_cast<std::size_t>(c)];
  }
  return out;
}

void Design::validate(bool require_all_levels) const {
  for (const auto& v : categorical) {
    if (v.codes.size() != n) throw std::invalid_argument("design: variable '" + v.name + "' has wrong row count");
    if (v.levels() == 0) throw std::invalid_argument("design: variable '" + v.name + "' has no levels");
    std::vector<char> seen(v.levels(), 0);
    for (int c : v.codes) {
      if (c < 0 || static_cast<std::size_t>(c) >= v.levels())
        throw std::invalid_argument("design: variable '" + v.name + "' has a level code out of range");
      seen[static_cast<std::size_t>(c)] = 1;
    }
    if (require_all_levels)
      for (std::size_t k = 0; k < seen.size(); ++k)
        if (!seen[k])
          throw std::invalid_argument("design: level '" + v.labels[k] + "' of '" + v.name + "' has no observations");
  }
  if (continuous.cols() > 0 && static_cast<std::size_t>(continuous.rows()) != n)
    throw std::invalid_argument("design: continuous block has wrong row count");
  if (!continuous.allFinite()) throw std::invalid_argument("design: non-finite continuous value");
  if (hierarchy) {
    const auto& h = *hierarchy;
    if (h.parent >= p() || h.child >= p() || h.parent == h.child)
      throw std::invalid_argument("design: hierarchy refers to invalid variables");
    const auto& par = categorical[h.parent];
    const auto& chi = categorical[h.child];
    if (h.parent_of.size() != chi.levels()) throw std::invalid_argument("design: hierarchy map has wrong size");
    for (int k : h.parent_of)
      if (k < 0 || static_cast<std::size_t>(k) >= par.levels())
        throw std::invalid_argument("design: hierarchy map refers to an invalid parent level");
    for (std::size_t i = 0; i < n; ++i)
      if (h.parent_of[static_cast<std::size_t>(chi.codes[i])] != par.codes[i])
        throw std::invalid_argument("design: row " + std::to_string(i) + " violates the hierarchy");
  }
}

Design Design::subset(std::span<const std::size_t> rows) const {
  Design out;
  out.n = rows.size();
  out.continuous_names = continuous_names;
  out.hierarchy = hierarchy;
  out.categorical.reserve(p());
  for (const auto& v : categorical) {
    CategoricalVar s{v.name, {}, v.labels};
    s.codes.reserve(rows.size());
    for (std::size_t r : rows) s.codes.push_back(v.codes[r]);
    out.categorical.push_back(std::move(s));
  }
  out.continuous.resize(static_cast<Eigen::Index>(rows.size()), continuous.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.continuous.row(static_cast<Eigen::Index>(i)) = continuous.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

Hierarchy infer_hierarchy(const Design& d, std::size_t parent, std::size_t child) {
  if (parent >= d.p() || child >= d.p() || parent == child)
    throw std::invalid_argument("hierarchy: invalid variable indices");
  const auto& par = d.categorical[parent];
  const auto& chi = d.categorical[child];
  Hierarchy h{parent, child, std::vector<int>(chi.levels(), -1)};
  for (std::size_t i = 0; i < d.n; ++i) {
    int& slot = h.parent_of[static_cast<std::size_t>(chi.codes[i])];
    if (slot < 0) {
      slot = par.codes[i];
    } else if (slot != par.codes[i]) {
      throw std::invalid_argument("hierarchy: level '" + chi.labels[static_cast<std::size_t>(chi.codes[i])] +
                                  "' of '" + chi.name + "' occurs under two levels of '" + par.name + "'");
    }
  }
  for (std::size_t l = 0; l < h.parent_of.size(); ++l)
    if (h.parent_of[l] < 0) throw std::invalid_argument("hierarchy: level '" + chi.labels[l] + "' never observed");
  return h;
}

Coefficients Coefficients::zeros(const Design& d) {
  Coefficients c;
  c.theta.resize(d.p());
  for (std::size_t j = 0; j < d.p(); ++j) c.theta[j].assign(d.categorical[j].levels(), 0.0);
  c.beta.assign(d.d(), 0.0);
  return c;
}

void FitConfig::validate() const {
  if (gamma_grid.empty()) throw std::invalid_argument("config: empty gamma grid");
  for (double g : gamma_grid)
    if (!(g > 0.0)) throw std::invalid_argument("config: gamma must be positive");
  if (path_len == 0) throw std::invalid_argument("config: path length must be positive");
  if (!(path_ratio > 0.0 && path_ratio < 1.0)) throw std::invalid_argument("config: path ratio must be in (0,1)");
  if (!(alpha >= 0.0)) throw std::invalid_argument("config: alpha must be nonnegative");
  if (!(bcd_tol > 0.0) || !(pn_tol > 0.0)) throw std::invalid_argument("config: tolerances must be positive");
  if (bcd_max_sweeps == 0 || pn_max_iters == 0) throw std::invalid_argument("config: iteration caps must be positive");
  if (cv_folds < 2) throw std::invalid_argument("config: need at least two folds");
  if (!(child_lambda_ratio > 0.0)) throw std::invalid_argument("config: child lambda ratio must be positive");
}

FitConfig FitConfig::defaults(Family f) {
  FitConfig c;
  c.family = f;
  if (f == Family::logistic) c.gamma_grid = {100.0};
  return c;
}

BcdOptions BcdOptions::from(const FitConfig& cfg) {
  BcdOptions o;
  o.tol = cfg.bcd_tol;
  o.max_sweeps = cfg.bcd_max_sweeps;
  o.alpha = cfg.alpha;
  o.standardize = cfg.standardize;
  return o;
}

double fit_intercept(std::span<const double> y) {
  if (y.empty()) throw std::invalid_argument("fit_intercept: empty response");
  double s = 0.0;
  for (double v : y) s += v;
  return s / static_cast<double>(y.size());
}

std::vector<double> linear_predictor(const Coefficients& c, const Design& d) {
  std::vector<double> eta(d.n, c.mu);
  for (std::size_t j = 0; j < d.p(); ++j) {
    const auto& codes = d.categorical[j].codes;
    const auto& th = c.theta[j];
    for (std::size_t i = 0; i < d.n; ++i)
      if (codes[i] >= 0) eta[i] += th[static_cast<std::size_t>(codes[i])];
  }
  for (std::size_t l = 0; l < d.d(); ++l) {
    if (c.beta[l] == 0.0) continue;
    for (std::size_t i = 0; i < d.n; ++i)
      eta[i] += c.beta[l] * d.continuous(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l));
  }
  return eta;
}

std::vector<double> predict(const Coefficients& c, const Design& d, Family family) {
  auto eta = linear_predictor(c, d);
  if (family == Family::logistic)
    for (auto& e : eta) e = 1.0 / (1.0 + std::exp(-e));
  return eta;
}

namespace {

// Penalty sum over the order-statistic gaps of the observed entries of theta.
double gap_penalty(std::vector<double> vals, const McpParams& p) {
  std::sort(vals.begin(), vals.end());
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < vals.size(); ++k) s += mcp_value(vals[k + 1] - vals[k], p);
  return s;
}

double lambda_for(std::size_t levels, double lambda) { return lambda * std::sqrt(static_cast<double>(levels)); }

double child_lambda(double lambda, const BcdOptions& opt) { return opt.lambda_child < 0.0 ? lambda : opt.lambda_child; }

// Groups of child levels per parent level (dictionary order).
std::vector<std::vector<std::size_t>> child_groups(const Design& d) {
  const auto& h = *d.hierarchy;
  std::vector<std::vector<std::size_t>> g(d.categorical[h.parent].levels());
  for (std::size_t l = 0; l < h.parent_of.size(); ++l) g[static_cast<std::size_t>(h.parent_of[l])].push_back(l);
  return g;
}

double variable_penalty(const Design& d, std::size_t j, const std::vector<double>& th,
                        const std::vector<std::size_t>& counts, double gamma, double lambda, const BcdOptions& opt,
                        const std::vector<std::vector<std::size_t>>* groups) {
  if (d.hierarchy && j == d.hierarchy->child) {
    const double lc = child_lambda(lambda, opt);
    double s = 0.0;
    for (const auto& g : *groups) {
      std::vector<double> vals;
      for (std::size_t l : g)
        if (counts[l] > 0) vals.push_back(th[l]);
      s += gap_penalty(std::move(vals), {gamma, lambda_for(g.size(), lc)});
    }
    return s;
  }
  std::vector<double> vals;
  for (std::size_t k = 0; k < th.size(); ++k)
    if (counts[k] > 0) vals.push_back(th[k]);
  return gap_penalty(std::move(vals), {gamma, lambda_for(th.size(), lambda)});
}

std::vector<double> column_scales(const Design& d, bool standardize) {
  std::vector<double> s(d.d(), 1.0);
  if (!standardize) return s;
  for (std::size_t l = 0; l < d.d(); ++l) {
    const auto col = d.continuous.col(static_cast<Eigen::Index>(l));
    const double m = col.mean();
    const double var = (col.array() - m).square().mean();
    s[l] = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

}  // namespace

double penalty_value(const Coefficients& c, const Design& d, double gamma, double lambda, const BcdOptions& opt) {
  const auto counts = d.level_counts();
  std::vector<std::vector<std::size_t>> groups;
  if (d.hierarchy) groups = child_groups(d);
  double s = 0.0;
  for (std::size_t j = 0; j < d.p(); ++j)
    s += variable_penalty(d, j, c.theta[j], counts[j], gamma, lambda, opt, &groups);
  if (opt.alpha > 0.0) {
    const auto sc = column_scales(d, opt.standardize);
    for (std::size_t l = 0; l < d.d(); ++l) s += opt.alpha * sc[l] * std::abs(c.beta[l]);
  }
  return s;
}

double objective(const Coefficients& c, const Design& d, std::span<const double> y, double gamma, double lambda,
                 const BcdOptions& opt) {
  const auto eta = linear_predictor(c, d);
  double loss = 0.0;
  for (std::size_t i = 0; i < d.n; ++i) {
    const double r = y[i] - eta[i];
    loss += (opt.weights.empty() ? 1.0 : opt.weights[i]) * r * r;
  }
  return loss / (2.0 * static_cast<double>(d.n)) + penalty_value(c, d, gamma, lambda, opt);
}

namespace {

// Minimiser of 1/2 sum w_k (ybar_k - theta_k)^2 + pen over one block. When the
// centred subaverages are small enough that the null-consistency condition
// holds the answer is the common weighted mean and the DP is skipped.
std::vector<double> solve_block(const WeightedMeans& m, const McpParams& p) {
  const std::size_t K = m.size();
  double wsum = 0.0, mean = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    wsum += m.w[k];
    mean += m.w[k] * m.ybar[k];
  }
  mean /= wsum;
  if (K == 1) return {m.ybar[0]};
  double dev = 0.0;
  for (std::size_t k = 0; k < K; ++k) dev = std::max(dev, std::abs(m.ybar[k] - mean));
  const double bound = std::min(2.0, std::sqrt(p.gamma * wsum)) * p.lambda / wsum;
  if (dev < bound * (1.0 - 1e-9)) return std::vector<double>(K, mean);
  return solve_exact(m, p).theta;
}

// Row-count weighted mean of t over `seen`; exact when t is constant so fused
// blocks recentre to exact zeros.
double count_mean(const std::vector<double>& t, const std::vector<std::size_t>& counts,
                  const std::vector<std::size_t>& seen) {
  if (std::all_of(t.begin(), t.end(), [&](double v) { return v == t.front(); })) return t.front();
  double c = 0.0, cnt = 0.0;
  for (std::size_t r = 0; r < seen.size(); ++r) {
    c += static_cast<double>(counts[seen[r]]) * t[r];
    cnt += static_cast<double>(counts[seen[r]]);
  }
  return c / cnt;
}

class Engine {
 public:
  Engine(const Design& d, std::span<const double> y, double gamma, double lambda, const BcdOptions& opt)
      : d_(d), y_(y), gamma_(gamma), lambda_(lambda), opt_(opt), n_(static_cast<double>(d.n)) {
    if (y.size() != d.n) throw std::invalid_argument("bcd_fit: response length differs from design rows");
    if (d.n == 0) throw std::invalid_argument("bcd_fit: no observations");
    if (!(gamma > 0.0) || !(lambda >= 0.0)) throw std::invalid_argument("bcd_fit: invalid gamma or lambda");
    if (!opt.weights.empty() && opt.weights.size() != d.n)
      throw std::invalid_argument("bcd_fit: weight vector has wrong length");
    for (double v : y)
      if (!std::isfinite(v)) throw std::invalid_argument("bcd_fit: non-finite response");
    v_.assign(d.n, 1.0);
    if (!opt.weights.empty())
      for (std::size_t i = 0; i < d.n; ++i) {
        if (!(opt.weights[i] > 0.0)) throw std::invalid_argument("bcd_fit: weights must be positive");
        v_[i] = opt.weights[i];
      }
    vsum_ = std::accumulate(v_.begin(), v_.end(), 0.0);
    counts_ = d.level_counts();
    if (d.hierarchy) groups_ = child_groups(d);

    const Eigen::Index dd = d.continuous.cols();
    zmean_ = dd > 0 ? Eigen::VectorXd(d.continuous.colwise().mean().transpose()) : Eigen::VectorXd();
    zc_ = d.continuous.rowwise() - zmean_.transpose();
    scale_ = column_scales(d, opt.standardize);
    zsq_.assign(static_cast<std::size_t>(dd), 0.0);
    for (Eigen::Index l = 0; l < dd; ++l)
      for (std::size_t i = 0; i < d.n; ++i) zsq_[l] += v_[i] * zc_(static_cast<Eigen::Index>(i), l) * zc_(static_cast<Eigen::Index>(i), l);
  }

  FitResult run(const Coefficients& init) {
    load(init);
    FitResult out;
    double q = total();
    if (!std::isfinite(q)) throw std::runtime_error("bcd_fit: non-finite objective at the initial point");
    if (opt_.trace) out.trace.push_back(q);
    // Full sweeps alternate with sweeps over the blocks that are currently nonzero;
    // convergence is only declared on a full sweep.
    std::vector<std::size_t> all(d_.p()), active;
    std::iota(all.begin(), all.end(), std::size_t{0});
    bool full = true;
    for (std::size_t sweep = 0; sweep < opt_.max_sweeps; ++sweep) {
      const double before = q;
      step_ = 0.0;
      update_mu();
      record(out, q);
      for (std::size_t j : full ? all : active) {
        if (d_.hierarchy && j == d_.hierarchy->child)
          update_child(j);
        else
          update_block(j);
        record(out, q);
      }
      if (d_.d() > 0) {
        update_beta();
        update_mu();
        record(out, q);
      }
      q = total();
      if (!std::isfinite(q)) throw std::runtime_error("bcd_fit: objective diverged");
      out.sweeps = sweep + 1;
      const double drop = before - q;
      const bool settled =
          drop <= opt_.tol * std::max(std::abs(before), std::numeric_limits<double>::min()) && step_ <= opt_.step_tol;
      if (!full) {
        full = settled;
        continue;
      }
      if (settled) {
        out.converged = true;
        break;
      }
      active.clear();
      for (std::size_t j = 0; j < d_.p(); ++j)
        if (std::any_of(theta_[j].begin(), theta_[j].end(), [](double t) { return t != 0.0; }) ||
            (d_.hierarchy && (j == d_.hierarchy->child || j == d_.hierarchy->parent)))
          active.push_back(j);
      full = active.size() == d_.p();
    }
    out.objective = total();
    out.coef = store();
    return out;
  }

 private:
  void load(const Coefficients& c) {
    if (c.theta.size() != d_.p() || c.beta.size() != d_.d())
      throw std::invalid_argument("bcd_fit: initial coefficients do not match the design");
    theta_ = c.theta;
    for (std::size_t j = 0; j < d_.p(); ++j) {
      if (theta_[j].size() != d_.categorical[j].levels())
        throw std::invalid_argument("bcd_fit: initial coefficients do not match the design");
      for (std::size_t k = 0; k < theta_[j].size(); ++k)
        if (counts_[j][k] == 0) theta_[j][k] = 0.0;
    }
    beta_ = c.beta;
    mu_ = c.mu;
    for (std::size_t l = 0; l < d_.d(); ++l) mu_ += beta_[l] * zmean_[static_cast<Eigen::Index>(l)];

    res_.assign(d_.n, 0.0);
    for (std::size_t i = 0; i < d_.n; ++i) res_[i] = y_[i] - mu_;
    for (std::size_t j = 0; j < d_.p(); ++j) {
      const auto& codes = d_.categorical[j].codes;
      for (std::size_t i = 0; i < d_.n; ++i) res_[i] -= theta_[j][static_cast<std::size_t>(codes[i])];
    }
    for (std::size_t l = 0; l < d_.d(); ++l)
      for (std::size_t i = 0; i < d_.n; ++i)
        res_[i] -= beta_[l] * zc_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l));
    pen_.assign(d_.p(), 0.0);
    for (std::size_t j = 0; j < d_.p(); ++j) pen_[j] = variable_penalty(d_, j, theta_[j], counts_[j], gamma_, lambda_, opt_, &groups_);
  }

  Coefficients store() const {
    Coefficients c;
    c.theta = theta_;
    c.beta = beta_;
    c.mu = mu_;
    for (std::size_t l = 0; l < d_.d(); ++l) c.mu -= beta_[l] * zmean_[static_cast<Eigen::Index>(l)];
    return c;
  }

  double loss() const {
    double s = 0.0;
    for (std::size_t i = 0; i < d_.n; ++i) s += v_[i] * res_[i] * res_[i];
    return s / (2.0 * n_);
  }

  double total() const {
    double s = loss();
    for (double p : pen_) s += p;
    for (std::size_t l = 0; l < d_.d(); ++l) s += opt_.alpha * scale_[l] * std::abs(beta_[l]);
    return s;
  }

  void record(FitResult& out, double& q) {
    if (!opt_.trace) return;
    q = total();
    const double prev = out.trace.back();
    assert(q <= prev + 1e-10 * std::max(1.0, std::abs(prev)));
    (void)prev;
    out.trace.push_back(q);
  }

  void update_mu() {
    double s = 0.0;
    for (std::size_t i = 0; i < d_.n; ++i) s += v_[i] * res_[i];
    const double shift = s / vsum_;
    mu_ += shift;
    for (auto& r : res_) r -= shift;
  }

  // Collapse partial residuals of variable j over `levels`, solve, and return
  // the new values (same order as `levels`).
  std::vector<double> solve_levels(std::size_t j, const std::vector<std::size_t>& levels, double lam,
                                   const std::vector<double>& sum_vr, const std::vector<double>& sum_v) {
    WeightedMeans m;
    m.w.reserve(levels.size());
    m.ybar.reserve(levels.size());
    for (std::size_t k : levels) {
      m.w.push_back(sum_v[k] / n_);
      m.ybar.push_back(sum_vr[k] / sum_v[k]);
    }
    (void)j;
    return solve_block(m, {gamma_, lam});
  }

  void collapse(std::size_t j, std::vector<double>& sum_vr, std::vector<double>& sum_v) const {
    const auto& codes = d_.categorical[j].codes;
    const auto& th = theta_[j];
    sum_vr.assign(th.size(), 0.0);
    sum_v.assign(th.size(), 0.0);
    for (std::size_t i = 0; i < d_.n; ++i) {
      const auto k = static_cast<std::size_t>(codes[i]);
      sum_vr[k] += v_[i] * (res_[i] + th[k]);
      sum_v[k] += v_[i];
    }
  }

  void apply(std::size_t j, const std::vector<double>& fresh) {
    const auto& codes = d_.categorical[j].codes;
    auto& th = theta_[j];
    for (std::size_t i = 0; i < d_.n; ++i) {
      const auto k = static_cast<std::size_t>(codes[i]);
      res_[i] += th[k] - fresh[k];
    }
    for (std::size_t k = 0; k < th.size(); ++k) note_step(th[k], fresh[k]);
    th = fresh;
  }

  void update_block(std::size_t j) {
    std::vector<double> sum_vr, sum_v;
    collapse(j, sum_vr, sum_v);
    std::vector<std::size_t> seen;
    for (std::size_t k = 0; k < sum_v.size(); ++k)
      if (counts_[j][k] > 0) seen.push_back(k);
    const double lam = lambda_for(theta_[j].size(), lambda_);
    const auto t = solve_levels(j, seen, lam, sum_vr, sum_v);

    // Recentre with the row counts; the shift moves into the intercept.
    const double c = count_mean(t, counts_[j], seen);
    std::vector<double> fresh(theta_[j].size(), 0.0);
    for (std::size_t r = 0; r < seen.size(); ++r) fresh[seen[r]] = t[r] - c;
    apply(j, fresh);
    mu_ += c;
    for (auto& r : res_) r -= c;
    pen_[j] = variable_penalty(d_, j, theta_[j], counts_[j], gamma_, lambda_, opt_, &groups_);
  }

  // Child levels within each parent group, each group centred with its own row
  // counts; groups are independent given everything else.
  void update_child(std::size_t j) {
    std::vector<double> sum_vr, sum_v;
    collapse(j, sum_vr, sum_v);
    const double lc = child_lambda(lambda_, opt_);
    std::vector<double> fresh(theta_[j].size(), 0.0);
    const long G = static_cast<long>(groups_.size());
    std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
    for (long gi = 0; gi < G; ++gi) {
      try {
        const auto& g = groups_[static_cast<std::size_t>(gi)];
        std::vector<std::size_t> seen;
        for (std::size_t l : g)
          if (counts_[j][l] > 0) seen.push_back(l);
        if (seen.empty()) continue;
        // Centre the subaverages so the unconstrained minimiser meets the constraint.
        double ws = 0.0, wm = 0.0;
        for (std::size_t l : seen) {
          ws += sum_v[l];
          wm += sum_vr[l];
        }
        wm /= ws;
        std::vector<double> svr(sum_vr.size()), sv(sum_v);
        for (std::size_t l : seen) svr[l] = sum_vr[l] - wm * sum_v[l];
        const auto t = solve_levels(j, seen, lambda_for(g.size(), lc), svr, sv);
        const double c = count_mean(t, counts_[j], seen);
        for (std::size_t r = 0; r < seen.size(); ++r) fresh[seen[r]] = t[r] - c;
      } catch (...) {
#pragma omp critical
        err = std::current_exception();
      }
    }
    if (err) std::rethrow_exception(err);
    apply(j, fresh);
    pen_[j] = variable_penalty(d_, j, theta_[j], counts_[j], gamma_, lambda_, opt_, &groups_);
  }

  void update_beta() {
    for (std::size_t l = 0; l < d_.d(); ++l) {
      const auto col = static_cast<Eigen::Index>(l);
      if (zsq_[l] <= 0.0) continue;
      double g = 0.0;
      for (std::size_t i = 0; i < d_.n; ++i) {
        const double z = zc_(static_cast<Eigen::Index>(i), col);
        g += v_[i] * z * (res_[i] + beta_[l] * z);
      }
      g /= n_;
      const double thr = opt_.alpha * scale_[l];
      const double shrunk = g > thr ? g - thr : (g < -thr ? g + thr : 0.0);
      const double fresh = shrunk / (zsq_[l] / n_);
      const double delta = fresh - beta_[l];
      if (delta != 0.0)
        for (std::size_t i = 0; i < d_.n; ++i) res_[i] -= delta * zc_(static_cast<Eigen::Index>(i), col);
      note_step(beta_[l], fresh);
      beta_[l] = fresh;
    }
  }

  void note_step(double before, double after) {
    step_ = std::max(step_, std::abs(after - before) / std::max(1.0, std::abs(after)));
  }

  const Design& d_;
  std::span<const double> y_;
  double gamma_, lambda_;
  BcdOptions opt_;
  double n_;
  std::vector<double> v_;
  double vsum_ = 0.0;
  double step_ = 0.0;  // largest relative coefficient change in the current sweep
  std::vector<std::vector<std::size_t>> counts_;
  std::vector<std::vector<std::size_t>> groups_;
  Eigen::VectorXd zmean_;
  Eigen::MatrixXd zc_;
  std::vector<double> scale_, zsq_;

  double mu_ = 0.0;
  std::vector<std::vector<double>> theta_;
  std::vector<double> beta_;
  std::vector<double> res_;
  std::vector<double> pen_;
};

bool all_fused(const Coefficients& c) {
  for (const auto& th : c.theta)
    for (double v : th)
      if (v != 0.0) return false;
  return true;
}

void check_binary(std::span<const double> y) {
  bool zero = false, one = false;
  for (double v : y) {
    if (v == 0.0)
      zero = true;
    else if (v == 1.0)
      one = true;
    else
      throw std::invalid_argument("logistic: response must be 0/1");
  }
  if (!zero || !one) throw std::invalid_argument("logistic: both classes must be present");
}

double logit_mean(std::span<const double> y) {
  const double m = fit_intercept(y);
  return std::log(m / (1.0 - m));
}

}  // namespace

FitResult bcd_fit(const Design& d, std::span<const double> y, double gamma, double lambda, const Coefficients& init,
                  const BcdOptions& opt) {
  Engine e(d, y, gamma, lambda, opt);
  return e.run(init);
}

FitResult hierarchical_fit(const Design& d, std::span<const double> y, double gamma, double lambda_parent,
                           double lambda_child, const Coefficients& init, BcdOptions opt) {
  if (!d.hierarchy) throw std::invalid_argument("hierarchical_fit: design has no hierarchy");
  if (!(lambda_child >= 0.0)) throw std::invalid_argument("hierarchical_fit: child lambda must be nonnegative");
  opt.lambda_child = lambda_child;
  return bcd_fit(d, y, gamma, lambda_parent, init, opt);
}

IrlsApprox irls_approx(const Coefficients& c, const Design& d, std::span<const double> y) {
  const auto eta = linear_predictor(c, d);
  IrlsApprox a;
  a.z.resize(d.n);
  a.v.resize(d.n);
  const double clip = 1.0 / kWeightFloor;
  for (std::size_t i = 0; i < d.n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-eta[i]));
    const double v = std::max(p * (1.0 - p), kWeightFloor);
    a.v[i] = v;
    a.z[i] = eta[i] + std::clamp((y[i] - p) / v, -clip, clip);
  }
  return a;
}

double logistic_loss(const Coefficients& c, const Design& d, std::span<const double> y) {
  const auto eta = linear_predictor(c, d);
  double s = 0.0;
  for (std::size_t i = 0; i < d.n; ++i) {
    // log(1 + e^eta) - y eta, computed stably.
    const double e = eta[i];
    const double soft = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    s += soft - y[i] * e;
  }
  return s / static_cast<double>(d.n);
}

namespace {

Coefficients blend(const Coefficients& a, const Coefficients& b, double t) {
  Coefficients c = a;
  c.mu = a.mu + t * (b.mu - a.mu);
  for (std::size_t j = 0; j < c.theta.size(); ++j)
    for (std::size_t k = 0; k < c.theta[j].size(); ++k) c.theta[j][k] = a.theta[j][k] + t * (b.theta[j][k] - a.theta[j][k]);
  for (std::size_t l = 0; l < c.beta.size(); ++l) c.beta[l] = a.beta[l] + t * (b.beta[l] - a.beta[l]);
  return c;
}

}  // namespace

FitResult logistic_fit(const Design& d, std::span<const double> y, double gamma, double lambda,
                       const Coefficients& init, const FitConfig& cfg) {
  if (d.hierarchy) throw std::invalid_argument("logistic_fit: nested categories are supported for linear fits only");
  if (y.size() != d.n) throw std::invalid_argument("logistic_fit: response length differs from design rows");
  check_binary(y);
  BcdOptions opt = BcdOptions::from(cfg);

  Coefficients cur = init;
  bool blank = cur.mu == 0.0 && all_fused(cur);
  for (double b : cur.beta) blank = blank && b == 0.0;
  if (blank) cur.mu = logit_mean(y);

  auto penalised = [&](const Coefficients& c) {
    return logistic_loss(c, d, y) + penalty_value(c, d, gamma, lambda, opt);
  };

  FitResult out;
  double f = penalised(cur);
  out.trace.push_back(f);
  for (std::size_t it = 0; it < cfg.pn_max_iters; ++it) {
    const IrlsApprox a = irls_approx(cur, d, y);
    opt.weights = a.v;
    const FitResult inner = bcd_fit(d, a.z, gamma, lambda, cur, opt);

    Coefficients prop = inner.coef;
    double fp = penalised(prop);
    double t = 1.0;
    for (int h = 0; h < 40 && !(fp <= f); ++h) {
      t *= 0.5;
      prop = blend(cur, inner.coef, t);
      fp = penalised(prop);
    }
    out.sweeps = it + 1;
    if (!(fp <= f)) {
      // No descent available beyond rounding.
      out.converged = fp <= f + 1e-10 * std::max(1.0, std::abs(f));
      break;
    }
    const double rel = (f - fp) / std::max(std::abs(f), std::numeric_limits<double>::min());
    cur = std::move(prop);
    f = fp;
    out.trace.push_back(f);
    if (rel < cfg.pn_tol) {
      out.converged = true;
      break;
    }
  }
  out.coef = std::move(cur);
  out.objective = f;
  return out;
}

FitResult fit_one(const Design& d, std::span<const double> y, double gamma, double lambda, const Coefficients& init,
                  const FitConfig& cfg) {
  if (cfg.family == Family::logistic) return logistic_fit(d, y, gamma, lambda, init, cfg);
  BcdOptions opt = BcdOptions::from(cfg);
  if (d.hierarchy) opt.lambda_child = lambda * cfg.child_lambda_ratio;
  return bcd_fit(d, y, gamma, lambda, init, opt);
}

std::size_t degrees_of_freedom(const Coefficients& c, const Design& d) {
  const auto counts = d.level_counts();
  std::size_t df = 1;
  auto distinct = [&](const std::vector<double>& vals) -> std::size_t {
    if (vals.empty()) return 0;
    const auto ids = cluster_ids(vals);
    return static_cast<std::size_t>(*std::max_element(ids.begin(), ids.end()) + 1);
  };
  for (std::size_t j = 0; j < d.p(); ++j) {
    if (d.hierarchy && j == d.hierarchy->child) {
      for (const auto& g : child_groups(d)) {
        std::vector<double> vals;
        for (std::size_t l : g)
          if (counts[j][l] > 0) vals.push_back(c.theta[j][l]);
        if (!vals.empty()) df += distinct(vals) - 1;
      }
      continue;
    }
    std::vector<double> vals;
    for (std::size_t k = 0; k < c.theta[j].size(); ++k)
      if (counts[j][k] > 0) vals.push_back(c.theta[j][k]);
    if (!vals.empty()) df += distinct(vals) - 1;
  }
  for (double b : c.beta)
    if (b != 0.0) ++df;
  return df;
}

double lambda_max(const Design& d, std::span<const double> y, double gamma, const FitConfig& cfg) {
  const bool logistic = cfg.family == Family::logistic;
  Coefficients start = Coefficients::zeros(d);
  BcdOptions opt = BcdOptions::from(cfg);
  std::vector<double> target(y.begin(), y.end());
  std::vector<double> weights;
  if (logistic) {
    if (d.hierarchy) throw std::invalid_argument("lambda_max: nested categories are supported for linear fits only");
    check_binary(y);
    start.mu = logit_mean(y);
    const IrlsApprox a = irls_approx(start, d, y);
    target = a.z;
    weights = a.v;
    opt.weights = weights;
  } else {
    start.mu = fit_intercept(y);
  }
  const double ratio = d.hierarchy ? cfg.child_lambda_ratio : 1.0;

  // Null-consistency bound for every block at the null fit.
  const auto counts = d.level_counts();
  const double n = static_cast<double>(d.n);
  std::vector<double> vv = weights.empty() ? std::vector<double>(d.n, 1.0) : weights;
  double upper = 0.0;
  auto block_bound = [&](const std::vector<double>& svr, const std::vector<double>& sv,
                         const std::vector<std::size_t>& levels, double levels_scale) {
    double ws = 0.0, mean = 0.0;
    for (std::size_t k : levels) {
      ws += sv[k] / n;
      mean += svr[k] / n;
    }
    if (ws <= 0.0) return;
    mean /= ws;
    double dev = 0.0;
    for (std::size_t k : levels) dev = std::max(dev, std::abs(svr[k] / sv[k] - mean));
    upper = std::max(upper, dev * ws / (std::min(2.0, std::sqrt(gamma * ws)) * levels_scale));
  };
  for (std::size_t j = 0; j < d.p(); ++j) {
    const auto& codes = d.categorical[j].codes;
    const std::size_t K = d.categorical[j].levels();
    std::vector<double> svr(K, 0.0), sv(K, 0.0);
    for (std::size_t i = 0; i < d.n; ++i) {
      svr[static_cast<std::size_t>(codes[i])] += vv[i] * (target[i] - start.mu);
      sv[static_cast<std::size_t>(codes[i])] += vv[i];
    }
    if (d.hierarchy && j == d.hierarchy->child) {
      for (const auto& g : child_groups(d)) {
        std::vector<std::size_t> seen;
        for (std::size_t l : g)
          if (counts[j][l] > 0) seen.push_back(l);
        block_bound(svr, sv, seen, ratio * std::sqrt(static_cast<double>(g.size())));
      }
      continue;
    }
    std::vector<std::size_t> seen;
    for (std::size_t k = 0; k < K; ++k)
      if (counts[j][k] > 0) seen.push_back(k);
    block_bound(svr, sv, seen, std::sqrt(static_cast<double>(K)));
  }
  if (!(upper > 0.0)) return 1e-10 * std::max(1.0, std::abs(start.mu));
  upper *= 1.0 + 1e-6;

  auto fuses = [&](double lam) {
    BcdOptions o = opt;
    if (d.hierarchy) o.lambda_child = lam * ratio;
    return all_fused(bcd_fit(d, target, gamma, lam, start, o).coef);
  };
  double hi = upper, lo = upper * 0.5;
  int halvings = 0;
  while (fuses(lo)) {
    hi = lo;
    lo *= 0.5;
    if (++halvings > 60) return hi;
  }
  while (hi / lo > 1.01) {
    const double mid = std::sqrt(hi * lo);
    if (fuses(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

std::vector<double> lambda_sequence(double lmax, std::size_t len, double ratio) {
  if (len == 0) throw std::invalid_argument("lambda_sequence: empty");
  if (!(lmax > 0.0) || !(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("lambda_sequence: invalid range");
  std::vector<double> out(len);
  for (std::size_t i = 0; i < len; ++i)
    out[i] = len == 1 ? lmax : lmax * std::pow(ratio, static_cast<double>(i) / static_cast<double>(len - 1));
  return out;
}

namespace {

double training_loss(const FitResult& f, const Design& d, std::span<const double> y, Family family) {
  if (family == Family::logistic) return 2.0 * static_cast<double>(d.n) * logistic_loss(f.coef, d, y);
  const auto eta = linear_predictor(f.coef, d);
  double s = 0.0;
  for (std::size_t i = 0; i < d.n; ++i) s += (y[i] - eta[i]) * (y[i] - eta[i]);
  return s;
}

Coefficients null_start(const Design& d, std::span<const double> y, Family family) {
  Coefficients c = Coefficients::zeros(d);
  c.mu = family == Family::logistic ? logit_mean(y) : fit_intercept(y);
  return c;
}

}  // namespace

SolutionPath fit_path(const Design& d, std::span<const double> y, double gamma, std::span<const double> lambdas,
                      const FitConfig& cfg) {
  for (std::size_t i = 1; i < lambdas.size(); ++i)
    if (!(lambdas[i] < lambdas[i - 1])) throw std::invalid_argument("fit_path: lambdas must be strictly decreasing");
  SolutionPath path;
  Coefficients init = null_start(d, y, cfg.family);
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    PathEntry e;
    e.gamma = gamma;
    e.lambda = lambdas[i];
    e.fit = fit_one(d, y, gamma, lambdas[i], init, cfg);
    e.df = degrees_of_freedom(e.fit.coef, d);
    e.loss = training_loss(e.fit, d, y, cfg.family);
    e.warm_start = i == 0 ? -1 : static_cast<long>(i - 1);
    init = e.fit.coef;
    path.entries.push_back(std::move(e));
  }
  return path;
}

SolutionPath fit_path(const Design& d, std::span<const double> y, const FitConfig& cfg) {
  cfg.validate();
  const std::size_t G = cfg.gamma_grid.size();
  std::vector<SolutionPath> parts(G);
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (long g = 0; g < static_cast<long>(G); ++g) {
    try {
      const double gamma = cfg.gamma_grid[static_cast<std::size_t>(g)];
      const auto lams = lambda_sequence(lambda_max(d, y, gamma, cfg), cfg.path_len, cfg.path_ratio);
      parts[static_cast<std::size_t>(g)] = fit_path(d, y, gamma, lams, cfg);
    } catch (...) {
#pragma omp critical
      err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  SolutionPath out;
  for (auto& part : parts) {
    const long offset = static_cast<long>(out.entries.size());
    for (auto& e : part.entries) {
      if (e.warm_start >= 0) e.warm_start += offset;
      out.entries.push_back(std::move(e));
    }
  }
  return out;
}

std::vector<int> assign_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2 || folds > n) throw std::invalid_argument("assign_folds: need 2 <= folds <= n");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<int> fold(n);
  for (std::size_t r = 0; r < n; ++r) fold[idx[r]] = static_cast<int>(r % folds);
  return fold;
}

CvResult cross_validate(const Design& d, std::span<const double> y, const FitConfig& cfg) {
  cfg.validate();
  if (y.size() != d.n) throw std::invalid_argument("cross_validate: response length differs from design rows");
  const std::size_t G = cfg.gamma_grid.size();
  const std::size_t F = cfg.cv_folds;
  const std::size_t L = cfg.path_len;

  CvResult out;
  out.fold = assign_folds(d.n, F, cfg.seed);
  out.lambdas.resize(G);
  for (std::size_t g = 0; g < G; ++g)
    out.lambdas[g] = lambda_sequence(lambda_max(d, y, cfg.gamma_grid[g], cfg), L, cfg.path_ratio);

  std::vector<std::vector<std::size_t>> train(F), test(F);
  for (std::size_t i = 0; i < d.n; ++i)
    for (std::size_t f = 0; f < F; ++f) (static_cast<std::size_t>(out.fold[i]) == f ? test : train)[f].push_back(i);

  // Held-out loss sums per (gamma, fold, lambda).
  std::vector<std::vector<double>> partial(G * F, std::vector<double>(L, 0.0));
  std::exception_ptr err;
#pragma omp parallel for schedule(dynamic)
  for (long task = 0; task < static_cast<long>(G * F); ++task) {
    try {
      const std::size_t g = static_cast<std::size_t>(task) / F;
      const std::size_t f = static_cast<std::size_t>(task) % F;
      const Design dtr = d.subset(train[f]);
      const Design dte = d.subset(test[f]);
      std::vector<double> ytr, yte;
      for (std::size_t i : train[f]) ytr.push_back(y[i]);
      for (std::size_t i : test[f]) yte.push_back(y[i]);
      const SolutionPath path = fit_path(dtr, ytr, cfg.gamma_grid[g], out.lambdas[g], cfg);
      for (std::size_t l = 0; l < L; ++l) {
        const auto pred = predict(path.entries[l].fit.coef, dte, cfg.family);
        double s = 0.0;
        for (std::size_t i = 0; i < yte.size(); ++i) {
          if (cfg.family == Family::linear) {
            s += (yte[i] - pred[i]) * (yte[i] - pred[i]);
          } else {
            const double p = std::clamp(pred[i], 1e-15, 1.0 - 1e-15);
            s += -2.0 * (yte[i] * std::log(p) + (1.0 - yte[i]) * std::log(1.0 - p));
          }
        }
        partial[static_cast<std::size_t>(task)][l] = s;
      }
    } catch (...) {
#pragma omp critical
      err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  out.error.assign(G, std::vector<double>(L, 0.0));
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t l = 0; l < L; ++l) out.error[g][l] += partial[g * F + f][l];
  for (auto& row : out.error)
    for (auto& e : row) e /= static_cast<double>(d.n);

  // Minimum error; ties go to the larger lambda, then the smaller gamma.
  bool have = false;
  double best = 0.0;
  for (std::size_t g = 0; g < G; ++g)
    for (std::size_t l = 0; l < L; ++l) {
      const double e = out.error[g][l];
      bool take = !have;
      if (have) {
        const double tol = 1e-12 * std::max(1.0, std::abs(best));
        if (e < best - tol) {
          take = true;
        } else if (e <= best + tol) {
          const double lam = out.lambdas[g][l];
          take = lam > out.best_lambda || (lam == out.best_lambda && cfg.gamma_grid[g] < out.best_gamma);
        }
      }
      if (!take) continue;
      have = true;
      best = e;
      out.best_gamma_index = g;
      out.best_lambda_index = l;
      out.best_gamma = cfg.gamma_grid[g];
      out.best_lambda = out.lambdas[g][l];
    }
  return out;
}

double ebic_value(double loss, std::size_t df, std::size_t n, std::size_t total_levels, Family family, double zeta) {
  const double nn = static_cast<double>(n);
  const double pen = static_cast<double>(df) *
                     (std::log(nn) + 2.0 * zeta * std::log(static_cast<double>(std::max<std::size_t>(total_levels, 1))));
  if (family == Family::logistic) return loss + pen;
  const double rss = std::max(loss, std::numeric_limits<double>::min());
  return nn * std::log(rss / nn) + pen;
}

std::size_t ebic_select(SolutionPath& path, std::size_t n, std::size_t total_levels, Family family, double zeta) {
  if (path.entries.empty()) throw std::invalid_argument("ebic_select: empty path");
  std::size_t best = 0;
  for (std::size_t i = 0; i < path.entries.size(); ++i) {
    auto& e = path.entries[i];
    e.ebic = ebic_value(e.loss, e.df, n, total_levels, family, zeta);
    if (*e.ebic < *path.entries[best].ebic) best = i;
  }
  return best;
}

}  // namespace scope
