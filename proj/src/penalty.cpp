#include "scope/penalty.hpp"

#include <cmath>

namespace scope {

double mcp_value(double x, const McpParams& p) {
  if (!(x >= 0.0)) throw std::domain_error("mcp_value: argument must be nonnegative");
  const double knee = p.breakpoint();
  if (x >= knee) return p.saturation();
  return p.lambda * x - x * x / (2.0 * p.gamma);
}

double mcp_derivative(double x, const McpParams& p) {
  if (!(x >= 0.0)) throw std::domain_error("mcp_derivative: argument must be nonnegative");
  const double knee = p.breakpoint();
  if (x >= knee) return 0.0;
  return p.lambda - x / p.gamma;
}

PenaltyPieces mcp_pieces(const McpParams& p) {
  const double knee = p.breakpoint();
  PenaltyPieces out;
  // -gamma lambda^2 (1 - x / (gamma lambda))^2 / 2 + gamma lambda^2 / 2 expanded.
  out.concave = {0.0, knee, -1.0 / (2.0 * p.gamma), p.lambda, 0.0};
  out.constant = {knee, std::numeric_limits<double>::infinity(), 0.0, 0.0, p.saturation()};
  return out;
}

}  // namespace scope
