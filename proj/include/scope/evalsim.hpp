#pragma once

// Simulated categorical designs, response generation and evaluation metrics.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scope/fit.hpp"
#include "scope/verify.hpp"

namespace scope {

struct SimSpec {
  std::string name;
  std::size_t n = 500;
  std::size_t p = 10;
  std::size_t K = 24;
  double rho = 0.0;     // target correlation of the uniform margins
  double sigma2 = 1.0;  // noise variance
  double mu0 = 0.0;
  std::vector<std::vector<double>> theta0;  // p templates of length K
  bool balanced = false;  // level k of row i is i mod K (no copula)
  std::uint64_t seed = 1;

  void validate() const;
};

// ld1..ld3 (n=500, p=10), hd1..hd8 (n=500, p=100), fig2 (K=20, one row per level).
SimSpec preset(const std::string& name);
std::vector<std::string> preset_names();

std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t rep);

// Rows of a Gaussian copula whose uniform margins have pairwise correlation rho.
class CopulaSampler {
 public:
  CopulaSampler(std::size_t p, double rho);
  void draw(std::mt19937_64& rng, std::span<double> u) const;

 private:
  Eigen::MatrixXd chol_;
};

inline constexpr std::size_t kDesignRetries = 100;

// Draw a design; redraws when some level is empty. `n` overrides spec.n when nonzero.
Design gen_design(const SimSpec& s, std::mt19937_64& rng, std::size_t n = 0);

struct SimResponse {
  std::vector<double> y;
  std::vector<double> g;  // noiseless regression function at the rows
  Coefficients truth;     // templates recentred on this design
};

SimResponse gen_response(const Design& d, const SimSpec& s, std::mt19937_64& rng);

// Monte Carlo E_x (g(x) - ghat(x))^2 over fresh designs.
double mspe(const Coefficients& fit, const Coefficients& truth, const SimSpec& s, std::size_t n_test,
            std::uint64_t seed);

// sd g(x) / sigma over a fresh design.
double snr(const SimSpec& s, std::size_t n_mc, std::uint64_t seed);

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct SelectionRates {
  double fpr = 0.0;
  double fnr = 0.0;
  std::size_t selected_null = 0, total_null = 0;
  std::size_t missed_signal = 0, total_signal = 0;
};

inline constexpr double kSelectionTol = 1e-8;
SelectionRates selection_rates(const Coefficients& fit, const OracleSpec& spec);

// Split levels until each variable has m times its original number of levels.
Design split_levels(const Design& d, std::size_t m, std::uint64_t seed);

struct Metrics {
  std::size_t rep = 0;
  double gamma = 0.0;
  double lambda = 0.0;
  double mspe = 0.0;
  double ari = 0.0;  // mean over signal variables (1 when there are none)
  std::vector<double> ari_per_var;
  double fpr = 0.0, fnr = 0.0;
  std::size_t df = 0;
  bool converged = true;
};

Metrics evaluate(const Coefficients& fit, const Coefficients& truth, const Design& d, const SimSpec& s,
                 std::size_t n_test, std::uint64_t seed);

// One replication: draw data, select (gamma, lambda) by cross-validation, refit on
// the full data and score.
Metrics run_replication(const SimSpec& s, std::size_t rep, const FitConfig& cfg, std::size_t n_test);

}  // namespace scope
