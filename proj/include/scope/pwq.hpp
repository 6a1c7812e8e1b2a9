#pragma once

// Piecewise-quadratic functions on the real line and the lower-envelope
// machinery used by the univariate dynamic program.

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "scope/penalty.hpp"

namespace scope {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Quadratic {
  double a = 0.0, b = 0.0, c = 0.0;

  double operator()(double x) const { return (a * x + b) * x + c; }
  double slope(double x) const { return 2.0 * a * x + b; }
  double curvature() const { return 2.0 * a; }
};

// a x^2 + b x + c on [lo, hi); lo may be -inf and hi may be +inf.
struct QuadraticPiece {
  double lo = -kInf;
  double hi = kInf;
  Quadratic q;

  bool contains(double x) const { return lo <= x && x < hi; }
};

struct LinearMap {
  double slope = 1.0;
  double intercept = 0.0;

  double operator()(double x) const { return slope * x + intercept; }
  static LinearMap identity() { return {1.0, 0.0}; }
  static LinearMap constant(double v) { return {0.0, v}; }
};

struct LinearPiece {
  double lo = -kInf;
  double hi = kInf;
  LinearMap map;
};

// Ordered, disjoint, closed-left pieces covering the real line.
class PiecewiseQuadratic {
 public:
  PiecewiseQuadratic() : pieces_{QuadraticPiece{}} {}
  explicit PiecewiseQuadratic(std::vector<QuadraticPiece> pieces);
  static PiecewiseQuadratic single(Quadratic q) { return PiecewiseQuadratic({QuadraticPiece{-kInf, kInf, q}}); }

  const std::vector<QuadraticPiece>& pieces() const { return pieces_; }
  std::size_t size() const { return pieces_.size(); }

  // Index of the piece whose [lo, hi) contains x.
  std::size_t locate(double x) const;
  double operator()(double x) const { return pieces_[locate(x)].q(x); }

  // Largest |left value - right value| over interior knots, relative to max(1, |value|).
  double max_jump() const;

 private:
  std::vector<QuadraticPiece> pieces_;
};

class PiecewiseLinear {
 public:
  PiecewiseLinear() : pieces_{LinearPiece{}} {}
  explicit PiecewiseLinear(std::vector<LinearPiece> pieces);

  const std::vector<LinearPiece>& pieces() const { return pieces_; }
  std::size_t size() const { return pieces_.size(); }
  std::size_t locate(double x) const;
  double operator()(double x) const { return pieces_[locate(x)].map(x); }

 private:
  std::vector<LinearPiece> pieces_;
};

double evaluate(const PiecewiseQuadratic& f, double x);

struct Minimum {
  double argmin = 0.0;
  double value = 0.0;
};

// Smallest global minimiser of a coercive piecewise quadratic.
// Throws std::domain_error if f is not coercive.
Minimum global_minimize(const PiecewiseQuadratic& f);

enum class CandidateKind { stationary, saturated, identity };

// A quadratic restricted to an interval together with the map from the outer
// argument back to the inner minimiser that produced it.
struct Candidate {
  QuadraticPiece quad;
  LinearMap back;
  CandidateKind kind = CandidateKind::identity;
};

// Candidate minimiser functions of
//   g(x) = min_{t <= x} f(t) + rho(x - t)
// generated piece by piece from f.
std::vector<Candidate> candidates_from(const PiecewiseQuadratic& f, const McpParams& p);

struct Envelope {
  PiecewiseQuadratic value;
  PiecewiseLinear back;
};

// Pointwise minimum of the candidates, walked knot by knot.
// Throws std::invalid_argument on an empty candidate list.
Envelope lower_envelope(std::vector<Candidate> cands);

// g(x) + w (ybar - x)^2 / 2 on the same intervals.
PiecewiseQuadratic add_quadratic(const PiecewiseQuadratic& g, double w, double ybar);

// One line per piece: lo hi a b c.
void dump(std::ostream& os, const PiecewiseQuadratic& f);
std::string dump(const PiecewiseQuadratic& f);

}  // namespace scope
