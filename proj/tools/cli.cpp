#include "cli.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "scope/data_io.hpp"
#include "scope/evalsim.hpp"
#include "scope/fit.hpp"
#include "scope/univariate.hpp"
#include "scope/verify.hpp"

namespace scope::cli {

namespace {

struct NotConverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataFlags {
  std::string data;
  std::string response = "y";
  std::vector<std::string> categorical, continuous, drop;
  std::string family = "linear";
  std::string hierarchy;
};

void add_data_flags(CLI::App* app, DataFlags& f) {
  app->add_option("--data", f.data, "input CSV")->required()->check(CLI::ExistingFile);
  app->add_option("--response", f.response, "response column");
  app->add_option("--categorical", f.categorical, "columns treated as categorical")->delimiter(',');
  app->add_option("--continuous", f.continuous, "columns treated as continuous")->delimiter(',');
  app->add_option("--drop", f.drop, "columns to ignore")->delimiter(',');
  app->add_option("--family", f.family, "linear or logistic")->check(CLI::IsMember({"linear", "logistic"}));
  app->add_option("--hierarchy", f.hierarchy, "PARENT:CHILD nested categorical columns");
}

// Output file or the given stream.
class Sink {
 public:
  Sink(const std::string& path, std::ostream& fallback) : os_(&fallback) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*file_) throw std::runtime_error("cannot write '" + path + "'");
    os_ = file_.get();
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::ostream* os_;
};

Dataset load(const DataFlags& f, std::ostream& err) {
  SchemaHints h;
  h.response = f.response;
  h.drop = f.drop;
  for (const auto& c : f.categorical) h.kinds[c] = ColumnKind::categorical;
  for (const auto& c : f.continuous) {
    if (h.kinds.count(c)) throw std::invalid_argument("column '" + c + "' listed as both categorical and continuous");
    h.kinds[c] = ColumnKind::continuous;
  }
  Dataset ds = read_csv(f.data, h);
  if (ds.dropped_rows) err << "note: dropped " << ds.dropped_rows << " rows with missing values\n";
  for (const auto& c : ds.single_observation) err << "note: column '" << c << "' has levels seen only once\n";
  if (ds.design.p() == 0 && ds.design.d() == 0) throw std::invalid_argument("no predictors found");
  if (!f.hierarchy.empty()) {
    const auto colon = f.hierarchy.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("--hierarchy expects PARENT:CHILD");
    auto index = [&](const std::string& name) {
      for (std::size_t j = 0; j < ds.design.p(); ++j)
        if (ds.design.categorical[j].name == name) return j;
      throw std::invalid_argument("hierarchy column '" + name + "' is not categorical");
    };
    ds.design.hierarchy =
        infer_hierarchy(ds.design, index(f.hierarchy.substr(0, colon)), index(f.hierarchy.substr(colon + 1)));
  }
  if (parse_family(f.family) == Family::logistic)
    for (double v : ds.y)
      if (v != 0.0 && v != 1.0) throw std::invalid_argument("logistic response must be coded 0/1");
  return ds;
}

void apply_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv(kThreadsEnv)) threads = std::atoi(env);
  }
  if (threads > 0) omp_set_num_threads(threads);
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(10) << x;
  return os.str();
}

void write_report(std::ostream& os, const Coefficients& c, const Design& d) {
  write_csv_row(os, {"kind", "variable", "group", "coefficient", "levels"});
  write_csv_row(os, {"intercept", "", "", format_double(c.mu), ""});
  for (std::size_t j = 0; j < d.p(); ++j) {
    const auto& v = d.categorical[j];
    const auto ids = cluster_ids(c.theta[j]);
    const int groups = ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end()) + 1;
    for (int g = 0; g < groups; ++g) {
      std::string labels;
      double value = 0.0;
      for (std::size_t k = 0; k < ids.size(); ++k)
        if (ids[k] == g) {
          if (!labels.empty()) labels += ';';
          labels += v.labels[k];
          value = c.theta[j][k];
        }
      write_csv_row(os, {"categorical", v.name, std::to_string(g + 1), format_double(value), labels});
    }
  }
  for (std::size_t l = 0; l < d.d(); ++l)
    write_csv_row(os, {"continuous", d.continuous_names[l], "", format_double(c.beta[l]), ""});
}

// ---------------------------------------------------------------------------

struct FitArgs {
  DataFlags data;
  std::optional<double> gamma, lambda;
  std::size_t path = 100;
  double ratio = 0.01;
  double alpha = 0.0;
  bool standardize = false;
  double child_ratio = 1.0;
  std::size_t max_sweeps = 1000;
  double tol = 1e-9;
  std::string out, report;
  bool strict = false;
};

FitConfig base_config(const std::string& family) {
  return FitConfig::defaults(parse_family(family));
}

int cmd_fit(const FitArgs& a, std::ostream& out, std::ostream& err) {
  Dataset ds = load(a.data, err);
  FitConfig cfg = base_config(a.data.family);
  const double gamma = a.gamma.value_or(cfg.gamma_grid.front());
  cfg.gamma_grid = {gamma};
  cfg.alpha = a.alpha;
  cfg.standardize = a.standardize;
  cfg.child_lambda_ratio = a.child_ratio;
  cfg.bcd_max_sweeps = a.max_sweeps;
  cfg.bcd_tol = a.tol;
  cfg.path_len = a.path;
  cfg.path_ratio = a.ratio;
  cfg.validate();

  FitResult fit;
  double lambda = 0.0;
  if (a.lambda) {
    lambda = *a.lambda;
    fit = fit_one(ds.design, ds.y, gamma, lambda, Coefficients::zeros(ds.design), cfg);
  } else {
    const auto lams = lambda_sequence(lambda_max(ds.design, ds.y, gamma, cfg), cfg.path_len, cfg.path_ratio);
    SolutionPath path = fit_path(ds.design, ds.y, gamma, lams, cfg);
    const std::size_t best = ebic_select(path, ds.design.n, ds.design.total_levels(), cfg.family);
    lambda = path.entries[best].lambda;
    fit = path.entries[best].fit;
    err << "selected lambda " << fmt(lambda) << " (EBIC, entry " << best + 1 << " of " << path.entries.size()
        << ")\n";
  }
  if (!a.out.empty()) save_model(a.out, make_model(ds.design, a.data.response, cfg.family, gamma, lambda, fit));
  {
    Sink rep(a.report, out);
    write_report(*rep, fit.coef, ds.design);
  }
  if (!fit.converged) {
    err << "warning: not converged after " << fit.sweeps << " iterations\n";
    if (a.strict) return kNotConverged;
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct CvArgs {
  DataFlags data;
  std::vector<double> gammas;
  std::size_t folds = 5;
  std::size_t path = 100;
  double ratio = 0.01;
  std::uint64_t seed = 1;
  std::string out, refit;
  bool strict = false;
};

int cmd_cv(const CvArgs& a, std::ostream& out, std::ostream& err) {
  Dataset ds = load(a.data, err);
  FitConfig cfg = base_config(a.data.family);
  if (!a.gammas.empty()) cfg.gamma_grid = a.gammas;
  cfg.cv_folds = a.folds;
  cfg.path_len = a.path;
  cfg.path_ratio = a.ratio;
  cfg.seed = a.seed;
  cfg.validate();
  if (ds.design.n < cfg.cv_folds) throw std::invalid_argument("fewer rows than folds");

  const CvResult cv = cross_validate(ds.design, ds.y, cfg);
  {
    Sink table(a.out, out);
    write_csv_row(*table, {"gamma", "lambda_index", "lambda", "cv_error"});
    for (std::size_t g = 0; g < cv.lambdas.size(); ++g)
      for (std::size_t l = 0; l < cv.lambdas[g].size(); ++l)
        write_csv_row(*table, {format_double(cfg.gamma_grid[g]), std::to_string(l + 1), format_double(cv.lambdas[g][l]),
                               format_double(cv.error[g][l])});
  }
  err << "chosen gamma " << fmt(cv.best_gamma) << " lambda " << fmt(cv.best_lambda) << " (index "
      << cv.best_lambda_index + 1 << ")\n";
  if (!a.refit.empty()) {
    const auto& lams = cv.lambdas[cv.best_gamma_index];
    const std::vector<double> head(lams.begin(), lams.begin() + static_cast<long>(cv.best_lambda_index) + 1);
    const SolutionPath path = fit_path(ds.design, ds.y, cv.best_gamma, head, cfg);
    const FitResult& fit = path.entries.back().fit;
    save_model(a.refit, make_model(ds.design, a.data.response, cfg.family, cv.best_gamma, cv.best_lambda, fit));
    if (!fit.converged) {
      err << "warning: refit not converged\n";
      if (a.strict) return kNotConverged;
    }
  }
  return kOk;
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  std::string model, data, out;
};

int cmd_predict(const PredictArgs& a, std::ostream& out, std::ostream& err) {
  const ModelFile m = load_model(a.model);
  std::ifstream in(a.data, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + a.data + "'");
  const Encoded e = encode_for_model(parse_csv(in), m);
  for (const auto& note : e.notes) err << "note: " << note << "\n";
  const auto pred = predict(m.coef, e.design, m.family);
  Sink sink(a.out, out);
  write_csv_row(*sink, {"row", "prediction"});
  for (std::size_t i = 0; i < pred.size(); ++i) write_csv_row(*sink, {std::to_string(e.rows[i] + 1), format_double(pred[i])});
  if (e.y && !pred.empty()) {
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double y = (*e.y)[i];
      if (m.family == Family::linear) {
        s += (y - pred[i]) * (y - pred[i]);
      } else {
        const double p = std::clamp(pred[i], 1e-15, 1.0 - 1e-15);
        s += -2.0 * (y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
      }
    }
    err << (m.family == Family::linear ? "mean squared error " : "mean deviance ") << fmt(s / double(pred.size()))
        << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------

SimSpec spec_from_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("spec: ") + e.what());
  }
  try {
    SimSpec s;
    s.name = j.value("name", std::string("custom"));
    s.n = j.at("n").get<std::size_t>();
    s.p = j.at("p").get<std::size_t>();
    s.K = j.value("K", std::size_t{24});
    s.rho = j.value("rho", 0.0);
    s.sigma2 = j.value("sigma2", 1.0);
    s.mu0 = j.value("mu0", 0.0);
    s.balanced = j.value("balanced", false);
    s.theta0 = j.at("theta0").get<std::vector<std::vector<double>>>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("spec: ") + e.what());
  }
}

struct SimulateArgs {
  std::string setting, spec, out;
  std::size_t reps = 20;
  std::uint64_t seed = 1;
  std::vector<double> gammas{8.0, 32.0};
  std::size_t folds = 5;
  std::size_t path = 100;
  std::size_t n_test = 10000;
  std::optional<double> sigma2;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  if (a.setting.empty() == a.spec.empty()) throw std::invalid_argument("give exactly one of --setting and --spec");
  SimSpec s = a.spec.empty() ? preset(a.setting) : spec_from_json(a.spec);
  s.seed = a.seed;
  if (a.sigma2) s.sigma2 = *a.sigma2;
  s.validate();
  FitConfig cfg;
  cfg.gamma_grid = a.gammas;
  cfg.cv_folds = a.folds;
  cfg.path_len = a.path;
  cfg.validate();

  std::vector<Metrics> rows(a.reps);
  std::exception_ptr fail;
#pragma omp parallel for schedule(dynamic)
  for (long r = 0; r < static_cast<long>(a.reps); ++r) {
    try {
      rows[static_cast<std::size_t>(r)] = run_replication(s, static_cast<std::size_t>(r), cfg, a.n_test);
    } catch (...) {
#pragma omp critical
      fail = std::current_exception();
    }
  }
  if (fail) std::rethrow_exception(fail);

  Sink sink(a.out, out);
  write_csv_row(*sink, {"setting", "rep", "gamma", "lambda", "mspe", "fpr", "fnr", "ari", "df", "converged"});
  Metrics mean;
  double conv = 0.0, df = 0.0;
  for (const auto& m : rows) {
    write_csv_row(*sink, {s.name, std::to_string(m.rep + 1), format_double(m.gamma), format_double(m.lambda),
                          format_double(m.mspe), format_double(m.fpr), format_double(m.fnr), format_double(m.ari),
                          std::to_string(m.df), m.converged ? "1" : "0"});
    mean.gamma += m.gamma;
    mean.lambda += m.lambda;
    mean.mspe += m.mspe;
    mean.fpr += m.fpr;
    mean.fnr += m.fnr;
    mean.ari += m.ari;
    df += static_cast<double>(m.df);
    conv += m.converged;
  }
  const double R = static_cast<double>(std::max<std::size_t>(rows.size(), 1));
  write_csv_row(*sink, {s.name, "mean", format_double(mean.gamma / R), format_double(mean.lambda / R),
                        format_double(mean.mspe / R), format_double(mean.fpr / R), format_double(mean.fnr / R),
                        format_double(mean.ari / R), format_double(df / R), format_double(conv / R)});
  if (conv < R) err << "warning: " << R - conv << " replications did not converge\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string setting;
  std::vector<double> theta;
  std::size_t per_level = 10;
  double gamma = 8.0;
  double lambda = 0.1;
  std::optional<double> sigma;
  std::size_t checks = 200;
  std::uint64_t seed = 1;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out, std::ostream&) {
  if (a.setting.empty() == a.theta.empty()) throw std::invalid_argument("give exactly one of --setting and --theta");
  std::mt19937_64 rng(a.seed);
  Design d;
  SimSpec s;
  if (!a.setting.empty()) {
    s = preset(a.setting);
    d = gen_design(s, rng);
  } else {
    if (a.per_level == 0) throw std::invalid_argument("--per-level must be positive");
    s.name = "custom";
    s.p = 1;
    s.K = a.theta.size();
    s.n = s.K * a.per_level;
    s.balanced = true;
    s.theta0 = {a.theta};
    d = gen_design(s, rng);
  }
  const double sigma = a.sigma.value_or(std::sqrt(s.sigma2));
  s.sigma2 = sigma * sigma;
  const auto spec = OracleSpec::from_coefficients(s.theta0);
  const bool single = d.p() == 1;

  out << "separation (gamma " << fmt(a.gamma) << ", lambda " << fmt(a.lambda) << ", sigma " << fmt(sigma) << ")\n";
  print_report(out, check_separation(spec, d, a.gamma, a.lambda, sigma, !single));

  const auto data = gen_response(d, s, rng);
  const Coefficients ols = oracle_least_squares(d, data.y, spec);
  auto sup = [&](const Coefficients& c) {
    double m = 0.0;
    for (std::size_t j = 0; j < d.p(); ++j)
      for (std::size_t k = 0; k < c.theta[j].size(); ++k) m = std::max(m, std::abs(c.theta[j][k] - ols.theta[j][k]));
    return m;
  };
  out << "\noracle least squares vs fit\n";
  if (single) {
    const auto m = collapse_to_subaverages(data.y, d.categorical[0].codes, d.categorical[0].levels());
    const auto sol = solve_exact(m, McpParams(a.gamma, a.lambda));
    Coefficients c = ols;
    const double shift = std::inner_product(m.w.begin(), m.w.end(), sol.theta.begin(), 0.0);
    for (std::size_t k = 0; k < sol.theta.size(); ++k) c.theta[0][k] = sol.theta[k] - shift;
    out << "exact solver sup-norm difference " << fmt(sup(c)) << "\n";
  } else {
    const auto from_oracle = bcd_fit(d, data.y, a.gamma, a.lambda, ols);
    const auto from_zero = bcd_fit(d, data.y, a.gamma, a.lambda, Coefficients::zeros(d));
    out << "blockwise fit from oracle start, sup-norm difference " << fmt(sup(from_oracle.coef)) << "\n";
    out << "blockwise fit from zero start, sup-norm difference " << fmt(sup(from_zero.coef)) << "\n";
  }

  out << "\nunivariate cross-checks (" << a.checks << " random instances, K <= 5)\n";
  std::uniform_int_distribution<int> kd(2, 5);
  std::uniform_real_distribution<double> u(-3.0, 3.0), wt(0.2, 1.0), lam(0.0, 2.0);
  const double gammas[] = {1.5, 4.0, 8.0, 32.0};
  std::size_t exact_ok = 0, grid_ok = 0;
  double worst = 0.0;
  for (std::size_t t = 0; t < a.checks; ++t) {
    WeightedMeans m;
    const int K = kd(rng);
    double tot = 0.0;
    for (int k = 0; k < K; ++k) {
      m.w.push_back(wt(rng));
      m.ybar.push_back(u(rng));
      tot += m.w.back();
    }
    for (auto& w : m.w) w /= tot;
    const McpParams p(gammas[t % 4], lam(rng));
    const auto ex = solve_exact(m, p);
    const auto go = grid_oracle(m, p, 201, 1.0);
    exact_ok += ex.objective <= go.objective + 1e-9;
    const auto [lo, hi] = std::minmax_element(m.ybar.begin(), m.ybar.end());
    std::vector<double> grid(201);
    for (std::size_t l = 0; l < grid.size(); ++l) grid[l] = (*lo - 1.0) + (*hi - *lo + 2.0) * double(l) / 200.0;
    const auto dp = solve_discrete(m, p, grid);
    const double gap = std::abs(dp.objective - go.objective);
    worst = std::max(worst, gap);
    grid_ok += gap <= 1e-9;
  }
  out << "exact <= brute-force grid: " << exact_ok << "/" << a.checks << "\n";
  out << "discrete table == brute-force grid: " << grid_ok << "/" << a.checks << " (max gap " << fmt(worst) << ")\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::vector<std::size_t> sizes{50, 500, 2000};
  std::size_t reps = 25;
  std::uint64_t seed = 1;
  double gamma = 8.0;
  double lambda = 0.1;
  std::string out;
};

int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream&) {
  Sink sink(a.out, out);
  write_csv_row(*sink, {"K", "reps", "mean_seconds", "min_seconds", "max_seconds", "max_pieces"});
  std::mt19937_64 rng(a.seed);
  std::normal_distribution<double> nd(0.0, 0.3);
  for (std::size_t K : a.sizes) {
    if (K == 0) throw std::invalid_argument("bench sizes must be positive");
    double sum = 0.0, lo = 1e300, hi = 0.0;
    std::size_t pieces = 0;
    for (std::size_t r = 0; r < a.reps; ++r) {
      WeightedMeans m;
      for (std::size_t k = 0; k < K; ++k) {
        m.w.push_back(1.0 / static_cast<double>(K));
        m.ybar.push_back(static_cast<double>(k % 3) - 1.0 + nd(rng));
      }
      const auto t0 = std::chrono::steady_clock::now();
      const auto sol = solve_exact(m, McpParams(a.gamma, a.lambda));
      const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      sum += dt;
      lo = std::min(lo, dt);
      hi = std::max(hi, dt);
      for (auto p : sol.stage_pieces) pieces = std::max(pieces, p);
    }
    write_csv_row(*sink, {std::to_string(K), std::to_string(a.reps), format_double(sum / double(a.reps)),
                          format_double(lo), format_double(hi), std::to_string(pieces)});
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse categorical regression with a concave fusion penalty", "scope"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "worker thread cap (default: $" + std::string(kThreadsEnv) + " or all cores)");

  FitArgs fa;
  auto* fit = app.add_subcommand("fit", "fit one model and report the fused groups");
  add_data_flags(fit, fa.data);
  fit->add_option("--gamma", fa.gamma, "concavity (default 8 linear, 100 logistic)")->check(CLI::PositiveNumber);
  auto* lam_opt = fit->add_option("--lambda", fa.lambda, "penalty level")->check(CLI::NonNegativeNumber);
  auto* path_opt = fit->add_option("--path", fa.path, "path length when --lambda is absent (EBIC selection)");
  auto* ratio_opt = fit->add_option("--ratio", fa.ratio, "smallest lambda as a fraction of lambda_max");
  lam_opt->excludes(path_opt)->excludes(ratio_opt);
  fit->add_option("--alpha", fa.alpha, "l1 level for continuous columns")->check(CLI::NonNegativeNumber);
  fit->add_flag("--standardize", fa.standardize, "scale continuous columns in the l1 penalty");
  fit->add_option("--child-ratio", fa.child_ratio, "child penalty relative to parent");
  fit->add_option("--max-sweeps", fa.max_sweeps, "block descent sweep limit");
  fit->add_option("--tol", fa.tol, "relative objective tolerance");
  fit->add_option("--out", fa.out, "model file to write");
  fit->add_option("--report", fa.report, "cluster report CSV (default stdout)");
  fit->add_flag("--strict", fa.strict, "exit 3 when the fit does not converge");

  CvArgs ca;
  auto* cv = app.add_subcommand("cv", "cross-validate over gamma and lambda");
  add_data_flags(cv, ca.data);
  cv->add_option("--gamma", ca.gammas, "gamma grid")->delimiter(',');
  cv->add_option("--folds", ca.folds, "number of folds")->check(CLI::Range(2, 1000));
  cv->add_option("--path", ca.path, "lambda path length");
  cv->add_option("--ratio", ca.ratio, "smallest lambda as a fraction of lambda_max");
  cv->add_option("--seed", ca.seed, "fold assignment seed");
  cv->add_option("--out", ca.out, "CV table CSV (default stdout)");
  cv->add_option("--refit", ca.refit, "write the model refitted at the chosen pair");
  cv->add_flag("--strict", ca.strict, "exit 3 when the refit does not converge");

  PredictArgs pa;
  auto* pr = app.add_subcommand("predict", "predict new rows from a saved model");
  pr->add_option("--model", pa.model, "model file")->required()->check(CLI::ExistingFile);
  pr->add_option("--data", pa.data, "input CSV")->required()->check(CLI::ExistingFile);
  pr->add_option("--out", pa.out, "predictions CSV (default stdout)");

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "run a simulation setting and report metrics");
  sim->add_option("--setting", sa.setting, "named setting")->check(CLI::IsMember(preset_names()));
  sim->add_option("--spec", sa.spec, "setting as a JSON document")->check(CLI::ExistingFile);
  sim->add_option("--reps", sa.reps, "replications");
  sim->add_option("--seed", sa.seed, "base seed");
  sim->add_option("--gamma", sa.gammas, "gamma grid for cross-validation")->delimiter(',');
  sim->add_option("--folds", sa.folds, "folds")->check(CLI::Range(2, 1000));
  sim->add_option("--path", sa.path, "lambda path length");
  sim->add_option("--n-test", sa.n_test, "test rows for the prediction error");
  sim->add_option("--sigma2", sa.sigma2, "override the noise variance")->check(CLI::PositiveNumber);
  sim->add_option("--out", sa.out, "metrics CSV (default stdout)");

  VerifyArgs va;
  auto* ver = app.add_subcommand("verify", "separation conditions and oracle cross-checks");
  ver->add_option("--setting", va.setting, "named setting")->check(CLI::IsMember(preset_names()));
  ver->add_option("--theta", va.theta, "univariate true coefficients, one per level")->delimiter(',');
  ver->add_option("--per-level", va.per_level, "rows per level with --theta");
  ver->add_option("--gamma", va.gamma, "gamma")->check(CLI::PositiveNumber);
  ver->add_option("--lambda", va.lambda, "lambda")->check(CLI::NonNegativeNumber);
  ver->add_option("--sigma", va.sigma, "noise standard deviation")->check(CLI::PositiveNumber);
  ver->add_option("--checks", va.checks, "random univariate instances");
  ver->add_option("--seed", va.seed, "seed");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "time the exact univariate solver");
  bench->add_option("--sizes", ba.sizes, "numbers of levels")->delimiter(',');
  bench->add_option("--reps", ba.reps, "repetitions per size")->check(CLI::PositiveNumber);
  bench->add_option("--seed", ba.seed, "seed");
  bench->add_option("--gamma", ba.gamma, "gamma")->check(CLI::PositiveNumber);
  bench->add_option("--lambda", ba.lambda, "lambda")->check(CLI::NonNegativeNumber);
  bench->add_option("--out", ba.out, "timings CSV (default stdout)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kDataError;
  }

  try {
    apply_threads(threads);
    if (fit->parsed()) return cmd_fit(fa, out, err);
    if (cv->parsed()) return cmd_cv(ca, out, err);
    if (pr->parsed()) return cmd_predict(pa, out, err);
    if (sim->parsed()) return cmd_simulate(sa, out, err);
    if (ver->parsed()) return cmd_verify(va, out, err);
    if (bench->parsed()) return cmd_bench(ba, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kDataError;
}

}  // namespace scope::cli
