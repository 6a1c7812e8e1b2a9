#pragma once

// Multivariate fitting: block coordinate descent over categorical blocks with
// an l1 update for continuous covariates, lambda paths, cross-validation,
// EBIC selection, proximal Newton for logistic loss and the nested-category
// penalty.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scope/penalty.hpp"

namespace scope {

enum class Family { linear, logistic };

const char* family_name(Family f);
Family parse_family(const std::string& s);

struct CategoricalVar {
  std::string name;
  std::vector<int> codes;           // 0-based level per row; -1 marks a label unseen in training
  std::vector<std::string> labels;  // level dictionary, size K

  std::size_t levels() const { return labels.size(); }
};

// Child levels subdivide parent levels: parent_of[child level] = parent level.
struct Hierarchy {
  std::size_t parent = 0;
  std::size_t child = 1;
  std::vector<int> parent_of;
};

struct Design {
  std::size_t n = 0;
  std::vector<CategoricalVar> categorical;
  Eigen::MatrixXd continuous;  // n x d, possibly d = 0
  std::vector<std::string> continuous_names;
  std::optional<Hierarchy> hierarchy;

  std::size_t p() const { return categorical.size(); }
  std::size_t d() const { return static_cast<std::size_t>(continuous.cols()); }
  std::size_t total_levels() const;

  // Row counts n_jk.
  std::vector<std::vector<std::size_t>> level_counts() const;

  // Codes in range, continuous shape, hierarchy consistency. When
  // `require_all_levels` is set every level must be observed.
  void validate(bool require_all_levels = true) const;

  Design subset(std::span<const std::size_t> rows) const;
};

// Derive parent_of from the data; throws if some child level maps to two parents.
Hierarchy infer_hierarchy(const Design& d, std::size_t parent, std::size_t child);

struct Coefficients {
  double mu = 0.0;
  std::vector<std::vector<double>> theta;
  std::vector<double> beta;

  static Coefficients zeros(const Design& d);
};

struct FitConfig {
  Family family = Family::linear;
  std::vector<double> gamma_grid{8.0, 32.0};
  std::size_t path_len = 100;
  double path_ratio = 0.01;
  double alpha = 0.0;
  bool standardize = false;
  double bcd_tol = 1e-9;
  std::size_t bcd_max_sweeps = 1000;
  std::size_t pn_max_iters = 25;
  double pn_tol = 1e-8;
  std::size_t cv_folds = 5;
  std::uint64_t seed = 1;
  // Multiplier for the child-level penalty when a hierarchy is present.
  double child_lambda_ratio = 1.0;

  void validate() const;
  static FitConfig defaults(Family f);
};

// Per-call knobs of the block solver.
struct BcdOptions {
  double tol = 1e-9;        // relative decrease of Q over a sweep
  double step_tol = std::numeric_limits<double>::infinity();  // optional cap on the largest relative coefficient change
  std::size_t max_sweeps = 1000;
  double alpha = 0.0;
  bool standardize = false;
  double lambda_child = -1.0;     // < 0: use lambda for the child groups
  std::span<const double> weights;  // empty: unit weights
  bool trace = false;             // record Q after every block update

  static BcdOptions from(const FitConfig& cfg);
};

struct FitResult {
  Coefficients coef;
  double objective = 0.0;  // Q for linear, mean negative log-likelihood plus penalty for logistic
  std::size_t sweeps = 0;  // BCD sweeps, or proximal Newton iterations for logistic
  bool converged = false;
  std::vector<double> trace;
};

double fit_intercept(std::span<const double> y);

// Linear predictor mu + sum_j theta_j + Z beta; unseen codes contribute 0.
std::vector<double> linear_predictor(const Coefficients& c, const Design& d);
std::vector<double> predict(const Coefficients& c, const Design& d, Family family = Family::linear);

// Penalty part of Q.
double penalty_value(const Coefficients& c, const Design& d, double gamma, double lambda, const BcdOptions& opt);
// (1/2n) sum v_i (y_i - eta_i)^2 + penalty.
double objective(const Coefficients& c, const Design& d, std::span<const double> y, double gamma, double lambda,
                 const BcdOptions& opt);

FitResult bcd_fit(const Design& d, std::span<const double> y, double gamma, double lambda, const Coefficients& init,
                  const BcdOptions& opt = {});

FitResult hierarchical_fit(const Design& d, std::span<const double> y, double gamma, double lambda_parent,
                           double lambda_child, const Coefficients& init, BcdOptions opt = {});

// Smallest lambda (to 1%) at which a fit from zero fuses every variable.
double lambda_max(const Design& d, std::span<const double> y, double gamma, const FitConfig& cfg = {});

// Working response and weights of the quadratic approximation at c.
struct IrlsApprox {
  std::vector<double> z;
  std::vector<double> v;
};
inline constexpr double kWeightFloor = 1e-5;
IrlsApprox irls_approx(const Coefficients& c, const Design& d, std::span<const double> y);
// Mean negative log-likelihood.
double logistic_loss(const Coefficients& c, const Design& d, std::span<const double> y);

FitResult logistic_fit(const Design& d, std::span<const double> y, double gamma, double lambda,
                       const Coefficients& init, const FitConfig& cfg = FitConfig::defaults(Family::logistic));

// Dispatch on family and hierarchy.
FitResult fit_one(const Design& d, std::span<const double> y, double gamma, double lambda, const Coefficients& init,
                  const FitConfig& cfg);

// 1 + sum_j (#distinct fitted values_j - 1) + #nonzero beta; for a hierarchy the
// child term counts distinct values within each group.
std::size_t degrees_of_freedom(const Coefficients& c, const Design& d);

struct PathEntry {
  double gamma = 0.0;
  double lambda = 0.0;
  FitResult fit;
  std::size_t df = 0;
  double loss = 0.0;  // RSS (linear) or deviance (logistic) on the training data
  long warm_start = -1;  // index of the entry used as initialiser, -1 for zero
  std::optional<double> cv_error;
  std::optional<double> ebic;
};

struct SolutionPath {
  std::vector<PathEntry> entries;
};

std::vector<double> lambda_sequence(double lambda_max, std::size_t len, double ratio);

SolutionPath fit_path(const Design& d, std::span<const double> y, const FitConfig& cfg);
// Path for one gamma over a given lambda sequence.
SolutionPath fit_path(const Design& d, std::span<const double> y, double gamma, std::span<const double> lambdas,
                      const FitConfig& cfg);

struct CvResult {
  double best_gamma = 0.0;
  double best_lambda = 0.0;
  std::size_t best_gamma_index = 0;
  std::size_t best_lambda_index = 0;
  std::vector<std::vector<double>> lambdas;  // per gamma
  std::vector<std::vector<double>> error;    // per gamma x lambda
  std::vector<int> fold;                     // fold id per row
};

std::vector<int> assign_folds(std::size_t n, std::size_t folds, std::uint64_t seed);

CvResult cross_validate(const Design& d, std::span<const double> y, const FitConfig& cfg);

double ebic_value(double loss, std::size_t df, std::size_t n, std::size_t total_levels, Family family,
                  double zeta = 1.0);
// Fills each entry's ebic and returns the index of the minimiser.
std::size_t ebic_select(SolutionPath& path, std::size_t n, std::size_t total_levels, Family family = Family::linear,
                        double zeta = 1.0);

}  // namespace scope
