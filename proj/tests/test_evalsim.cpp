#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "scope/evalsim.hpp"

using namespace scope;

TEST_CASE("presets") {
  for (const auto& name : preset_names()) {
    const auto s = preset(name);
    CHECK_NOTHROW(s.validate());
    CHECK(s.name == name);
  }
  CHECK(preset("ld1").p == 10);
  CHECK(preset("hd1").p == 100);
  CHECK(preset("hd6").rho == 0.5);
  CHECK(preset("hd3").sigma2 == 100.0);
  const auto hd5 = preset("hd5");
  std::size_t signal = 0;
  for (const auto& t : hd5.theta0) signal += t.front() != t.back();
  CHECK(signal == 25);
  CHECK_THROWS(preset("nope"));
}

TEST_CASE("copula design") {
  SUBCASE("levels in range and deterministic") {
    auto s = preset("ld3");
    std::mt19937_64 a(5), b(5), c(6);
    const auto d1 = gen_design(s, a), d2 = gen_design(s, b), d3 = gen_design(s, c);
    for (const auto& v : d1.categorical)
      for (int k : v.codes) CHECK((k >= 0 && k < 24));
    CHECK(d1.categorical[4].codes == d2.categorical[4].codes);
    CHECK(d1.categorical[4].codes != d3.categorical[4].codes);
    CHECK_NOTHROW(d1.validate());
  }
  SUBCASE("uniform level frequencies without correlation") {
    SimSpec s = preset("ld1");
    s.p = 1;
    s.theta0.resize(1);
    std::mt19937_64 rng(17);
    const auto d = gen_design(s, rng, 50000);
    std::vector<double> count(24, 0.0);
    for (int k : d.categorical[0].codes) count[k] += 1.0;
    const double e = 50000.0 / 24;
    double chi2 = 0.0;
    for (double c : count) chi2 += (c - e) * (c - e) / e;
    // upper 0.001 point of chi-square with 23 degrees of freedom
    CHECK(chi2 < 49.73);
  }
  SUBCASE("uniform margins reach the target correlation") {
    const CopulaSampler cs(2, 0.8);
    std::mt19937_64 rng(19);
    std::vector<double> u(2);
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
      cs.draw(rng, u);
      sx += u[0];
      sy += u[1];
      sxx += u[0] * u[0];
      syy += u[1] * u[1];
      sxy += u[0] * u[1];
    }
    const double cov = sxy / n - sx / n * sy / n;
    const double r = cov / std::sqrt((sxx / n - sx * sx / n / n) * (syy / n - sy * sy / n / n));
    CHECK(std::abs(r - 0.8) < 0.02);
  }
  SUBCASE("tiny samples exhaust the retry budget") {
    auto s = preset("ld1");
    s.n = 10;
    std::mt19937_64 rng(1);
    CHECK_THROWS_AS(gen_design(s, rng), std::runtime_error);
  }
  SUBCASE("balanced layout") {
    const auto s = preset("fig2");
    std::mt19937_64 rng(1);
    const auto d = gen_design(s, rng);
    for (std::size_t i = 0; i < 20; ++i) CHECK(d.categorical[0].codes[i] == static_cast<int>(i));
  }
}

TEST_CASE("responses") {
  auto s = preset("ld1");
  std::mt19937_64 rng(23);
  const auto d = gen_design(s, rng);
  SUBCASE("near-zero noise") {
    s.sigma2 = 1e-20;
    const auto r = gen_response(d, s, rng);
    for (std::size_t i = 0; i < d.n; ++i) CHECK(std::abs(r.y[i] - r.g[i]) < 1e-8);
  }
  SUBCASE("templates are recentred on the design") {
    const auto r = gen_response(d, s, rng);
    const auto counts = d.level_counts();
    for (std::size_t j = 0; j < s.p; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < 24; ++k) acc += counts[j][k] * r.truth.theta[j][k];
      CHECK(std::abs(acc) < 1e-9);
    }
  }
  SUBCASE("zero templates") {
    s.theta0.assign(s.p, std::vector<double>(24, 0.0));
    s.mu0 = 1.5;
    const auto r = gen_response(d, s, rng);
    for (double g : r.g) CHECK(g == 1.5);
  }
  SUBCASE("signal to noise") {
    const double v = snr(preset("ld1"), 200000, 3);
    CHECK(std::abs(v - 4.7) < 0.3);
  }
}

TEST_CASE("prediction error") {
  const auto s = preset("ld1");
  std::mt19937_64 rng(29);
  const auto d = gen_design(s, rng);
  const auto r = gen_response(d, s, rng);
  CHECK(mspe(r.truth, r.truth, s, 5000, 1) == 0.0);
  auto shifted = r.truth;
  shifted.mu += 0.3;
  CHECK(mspe(shifted, r.truth, s, 5000, 1) == doctest::Approx(0.09));

  SUBCASE("oracle fit at large n") {
    std::mt19937_64 big(31);
    const auto db = gen_design(s, big, 20000);
    const auto rb = gen_response(db, s, big);
    const auto fit = oracle_least_squares(db, rb.y, OracleSpec::from_coefficients(s.theta0));
    CHECK(mspe(fit, rb.truth, s, 20000, 2) <= 0.01);
  }
}

TEST_CASE("adjusted rand index") {
  const std::vector<int> a{0, 0, 1, 1, 2, 2};
  CHECK(adjusted_rand_index(a, a) == doctest::Approx(1.0));
  CHECK(adjusted_rand_index(a, {5, 5, 7, 7, 1, 1}) == doctest::Approx(1.0));
  CHECK(adjusted_rand_index({0, 0, 0, 0, 0, 0}, a) == doctest::Approx(0.0));
  CHECK(adjusted_rand_index({0, 0, 1, 1}, {0, 1, 0, 1}) == doctest::Approx(-0.5));
  CHECK_THROWS(adjusted_rand_index({0}, {0, 1}));

  std::mt19937_64 rng(37);
  std::uniform_int_distribution<int> u(0, 4);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> x(30), y(30);
    for (auto& v : x) v = u(rng);
    for (auto& v : y) v = u(rng);
    const double r = adjusted_rand_index(x, y);
    CHECK(r == adjusted_rand_index(y, x));
    CHECK((r >= -1.0 && r <= 1.0));
    auto refined = x;
    refined[0] = 99;  // split one element off its cluster
    if (std::count(x.begin(), x.end(), x[0]) > 1) CHECK(adjusted_rand_index(x, refined) < 1.0);
  }
}

TEST_CASE("selection rates") {
  const auto spec = OracleSpec::from_coefficients({{1, -1}, {0, 0}, {2, 2}, {1, 0}});
  Coefficients perfect;
  perfect.theta = {{0.5, -0.5}, {0, 0}, {0, 0}, {0.1, -0.1}};
  auto r = selection_rates(perfect, spec);
  CHECK(r.fpr == 0.0);
  CHECK(r.fnr == 0.0);
  Coefficients zero;
  zero.theta.assign(4, {0.0, 0.0});
  r = selection_rates(zero, spec);
  CHECK(r.fpr == 0.0);
  CHECK(r.fnr == 1.0);

  std::mt19937_64 rng(41);
  std::bernoulli_distribution coin(0.5);
  for (int t = 0; t < 20; ++t) {
    Coefficients c;
    std::size_t sel = 0;
    for (int j = 0; j < 4; ++j) {
      const bool on = coin(rng);
      sel += on;
      c.theta.push_back({on ? 0.3 : 0.0, 0.0});
    }
    r = selection_rates(c, spec);
    CHECK(r.total_null + r.total_signal == 4);
    CHECK(r.selected_null + (r.total_signal - r.missed_signal) == sel);
  }
}

TEST_CASE("level splitting") {
  std::mt19937_64 rng(43);
  const auto d = oracle::random_design(rng, 300, {6, 4}, 1);
  SUBCASE("identity") {
    const auto s = split_levels(d, 1, 1);
    CHECK(s.categorical[0].codes == d.categorical[0].codes);
    CHECK(s.categorical[1].labels == d.categorical[1].labels);
  }
  SUBCASE("level counts multiply and children partition parents") {
    for (std::size_t m : {2u, 3u, 4u}) {
      const auto s = split_levels(d, m, 7);
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(s.categorical[j].levels() == m * d.categorical[j].levels());
        CHECK_NOTHROW(s.validate());
        // each new level lives inside exactly one original level
        std::vector<int> parent(s.categorical[j].levels(), -1);
        for (std::size_t i = 0; i < d.n; ++i) {
          int& slot = parent[s.categorical[j].codes[i]];
          if (slot < 0) slot = d.categorical[j].codes[i];
          CHECK(slot == d.categorical[j].codes[i]);
        }
        for (const auto& l : s.categorical[j].labels) CHECK(l.rfind("l", 0) == 0);
      }
    }
  }
  SUBCASE("refusing the split reproduces the unsplit fit") {
    const auto y = oracle::random_response(rng, d, 0.5);
    const auto s = split_levels(d, 3, 11);
    std::vector<std::vector<double>> coarse(2);
    for (std::size_t j = 0; j < 2; ++j) {
      coarse[j].assign(s.categorical[j].levels(), 0.0);
      for (std::size_t i = 0; i < d.n; ++i) coarse[j][s.categorical[j].codes[i]] = d.categorical[j].codes[i];
    }
    std::vector<std::vector<double>> fine(2);
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < d.categorical[j].levels(); ++k) fine[j].push_back(double(k));
    const auto a = oracle_least_squares(d, y, OracleSpec::from_coefficients(fine));
    const auto b = oracle_least_squares(s, y, OracleSpec::from_coefficients(coarse));
    const auto pa = predict(a, d), pb = predict(b, s);
    for (std::size_t i = 0; i < d.n; ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-8));
  }
}

TEST_CASE("replication seeds") {
  CHECK(replication_seed(1, 0) != replication_seed(1, 1));
  CHECK(replication_seed(1, 0) != replication_seed(2, 0));
  CHECK(replication_seed(5, 3) == replication_seed(5, 3));
}

TEST_CASE("signal to noise across settings") {
  CHECK(snr(preset("ld2"), 200000, 4) == doctest::Approx(4.2).epsilon(0.05));
  CHECK(snr(preset("hd5"), 100000, 4) == doctest::Approx(12.0).epsilon(0.05));
  CHECK(snr(preset("hd6"), 100000, 4) == doctest::Approx(36.0).epsilon(0.1));
}
