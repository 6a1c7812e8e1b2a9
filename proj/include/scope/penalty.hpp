#pragma once

#include <limits>
#include <stdexcept>

namespace scope {

// Minimax concave penalty parameters: slope lambda at the origin, flat beyond
// gamma * lambda.
struct McpParams {
  double gamma = 8.0;
  double lambda = 0.0;

  McpParams() = default;
  McpParams(double g, double l) : gamma(g), lambda(l) {
    if (!(gamma > 0.0)) throw std::invalid_argument("McpParams: gamma must be positive");
    if (!(lambda >= 0.0)) throw std::invalid_argument("McpParams: lambda must be nonnegative");
  }

  double breakpoint() const { return gamma * lambda; }
  double saturation() const { return 0.5 * gamma * lambda * lambda; }
};

// rho(x) = lambda x - x^2 / (2 gamma) on [0, gamma lambda), gamma lambda^2 / 2 beyond.
double mcp_value(double x, const McpParams& p);

// Right derivative lambda (1 - x / (gamma lambda))_+.
double mcp_derivative(double x, const McpParams& p);

// One of the two interval-restricted quadratics whose pointwise minimum is rho.
// Outside [lo, hi) the piece is +infinity. An empty piece has lo == hi.
struct PenaltyPiece {
  double lo = 0.0;
  double hi = 0.0;
  double a = 0.0, b = 0.0, c = 0.0;  // a x^2 + b x + c

  bool empty() const { return !(lo < hi); }
  bool contains(double x) const { return lo <= x && x < hi; }
  double operator()(double x) const {
    return contains(x) ? (a * x + b) * x + c : std::numeric_limits<double>::infinity();
  }
};

struct PenaltyPieces {
  PenaltyPiece concave;   // finite on [0, gamma lambda)
  PenaltyPiece constant;  // finite on [gamma lambda, inf)

  double min_at(double x) const {
    const double u = concave(x), v = constant(x);
    return u < v ? u : v;
  }
};

PenaltyPieces mcp_pieces(const McpParams& p);

}  // namespace scope
