#include "scope/pwq.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace scope {

namespace {

// Relative tolerances for the envelope walk.
constexpr double kValueTol = 1e-11;
constexpr double kSlopeTol = 1e-9;
constexpr double kRootTol = 1e-10;
constexpr double kMinWidth = 1e-12;

double scale_of(double x) { return std::max(1.0, std::abs(x)); }

bool is_finite(double x) { return std::isfinite(x); }

template <typename Piece>
void check_cover(const std::vector<Piece>& pieces, const char* what) {
  if (pieces.empty()) throw std::invalid_argument(std::string(what) + ": no pieces");
  if (pieces.front().lo != -kInf || pieces.back().hi != kInf)
    throw std::invalid_argument(std::string(what) + ": pieces must cover the real line");
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    if (!(pieces[i].lo < pieces[i].hi))
      throw std::invalid_argument(std::string(what) + ": empty or inverted piece");
    if (i > 0 && pieces[i].lo != pieces[i - 1].hi)
      throw std::invalid_argument(std::string(what) + ": pieces must be contiguous");
  }
}

template <typename Piece>
std::size_t locate_in(const std::vector<Piece>& pieces, double x) {
  // First piece whose hi > x.
  auto it = std::upper_bound(pieces.begin(), pieces.end(), x,
                             [](double v, const Piece& p) { return v < p.hi; });
  if (it == pieces.end()) return pieces.size() - 1;
  return static_cast<std::size_t>(it - pieces.begin());
}

}  // namespace

PiecewiseQuadratic::PiecewiseQuadratic(std::vector<QuadraticPiece> pieces) : pieces_(std::move(pieces)) {
  check_cover(pieces_, "PiecewiseQuadratic");
}

std::size_t PiecewiseQuadratic::locate(double x) const { return locate_in(pieces_, x); }

double PiecewiseQuadratic::max_jump() const {
  double worst = 0.0;
  for (std::size_t i = 1; i < pieces_.size(); ++i) {
    const double x = pieces_[i].lo;
    const double left = pieces_[i - 1].q(x);
    const double right = pieces_[i].q(x);
    worst = std::max(worst, std::abs(left - right) / scale_of(right));
  }
  return worst;
}

PiecewiseLinear::PiecewiseLinear(std::vector<LinearPiece> pieces) : pieces_(std::move(pieces)) {
  check_cover(pieces_, "PiecewiseLinear");
}

std::size_t PiecewiseLinear::locate(double x) const { return locate_in(pieces_, x); }

double evaluate(const PiecewiseQuadratic& f, double x) { return f(x); }

Minimum global_minimize(const PiecewiseQuadratic& f) {
  const auto& pieces = f.pieces();
  const Quadratic& first = pieces.front().q;
  const Quadratic& last = pieces.back().q;
  if (!(first.a > 0.0 || (first.a == 0.0 && first.b < 0.0)) ||
      !(last.a > 0.0 || (last.a == 0.0 && last.b > 0.0)))
    throw std::domain_error("global_minimize: function is not coercive");

  Minimum best{0.0, kInf};
  auto consider = [&](double x, const Quadratic& q) {
    const double v = q(x);
    if (v < best.value - kValueTol * scale_of(best.value) || !is_finite(best.value)) best = {x, v};
  };
  for (const auto& piece : pieces) {
    const Quadratic& q = piece.q;
    if (q.a > 0.0) {
      const double vertex = -q.b / (2.0 * q.a);
      consider(std::clamp(vertex, piece.lo, piece.hi), q);
    } else {
      if (is_finite(piece.lo)) consider(piece.lo, q);
      if (is_finite(piece.hi)) consider(piece.hi, q);
    }
  }
  return best;
}

std::vector<Candidate> candidates_from(const PiecewiseQuadratic& f, const McpParams& p) {
  const double gamma = p.gamma;
  const double lambda = p.lambda;
  const double knee = p.breakpoint();
  std::vector<Candidate> out;
  out.reserve(3 * f.size());

  for (const auto& piece : f.pieces()) {
    const double a = piece.q.a, b = piece.q.b, c = piece.q.c;

    // Saturated penalty: inner argument at the vertex of this piece, gap >= gamma lambda.
    if (a > 0.0) {
      const double vertex = -b / (2.0 * a);
      const double slack = 1e-9 * scale_of(vertex);
      if (vertex >= piece.lo - slack && vertex < piece.hi + slack) {
        Candidate cand;
        cand.kind = CandidateKind::saturated;
        cand.quad = {vertex + knee, kInf, {0.0, 0.0, piece.q(vertex) + p.saturation()}};
        cand.back = LinearMap::constant(vertex);
        if (cand.quad.lo < cand.quad.hi) out.push_back(cand);
      }
    }

    // Interior stationary point with the gap inside (0, gamma lambda); a minimum
    // only when the combined curvature 2a - 1/gamma is positive.
    if (2.0 * a - 1.0 / gamma > 0.0 && knee > 0.0) {
      const double s = 1.0 - 2.0 * a * gamma;  // negative
      const double alpha = 1.0 / s;
      const double beta = gamma * (b - lambda) / s;
      const double om = 1.0 - alpha;

      Candidate cand;
      cand.kind = CandidateKind::stationary;
      cand.back = {alpha, beta};
      cand.quad.q.a = a * alpha * alpha - om * om / (2.0 * gamma);
      cand.quad.q.b = 2.0 * a * alpha * beta + b * alpha + lambda * om + om * beta / gamma;
      cand.quad.q.c = a * beta * beta + b * beta + c - lambda * beta - beta * beta / (2.0 * gamma);

      // Gap x - t in (0, gamma lambda) and inner argument t inside the piece; t is
      // decreasing in x, so the piece's hi maps to the lower bound.
      const double gap_zero = (lambda - b) / (2.0 * a);
      const double gap_full = knee - b / (2.0 * a);
      const double from_hi = is_finite(piece.hi) ? (piece.hi - beta) / alpha : -kInf;
      const double from_lo = is_finite(piece.lo) ? (piece.lo - beta) / alpha : kInf;
      cand.quad.lo = std::max(gap_zero, from_hi);
      cand.quad.hi = std::min(gap_full, from_lo);
      if (cand.quad.lo < cand.quad.hi) out.push_back(cand);
    }

    // Inner argument equal to the outer one.
    Candidate same;
    same.kind = CandidateKind::identity;
    same.quad = piece;
    same.back = LinearMap::identity();
    out.push_back(same);
  }
  return out;
}

namespace {

// Among the saturated constants active at any point keep only the lowest: each
// has domain [start, inf), so a sweep by start yields a staircase.
void reduce_saturated(std::vector<Candidate>& cands) {
  std::vector<std::size_t> sat;
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (cands[i].kind == CandidateKind::saturated) sat.push_back(i);
  if (sat.size() < 2) return;
  std::stable_sort(sat.begin(), sat.end(),
                   [&](std::size_t l, std::size_t r) { return cands[l].quad.lo < cands[r].quad.lo; });
  std::vector<std::size_t> kept;
  double best = kInf;
  for (std::size_t i : sat) {
    const double v = cands[i].quad.q.c;
    if (v < best) {
      kept.push_back(i);
      best = v;
    } else {
      cands[i].quad.hi = cands[i].quad.lo;  // mark empty
    }
  }
  for (std::size_t k = 0; k + 1 < kept.size(); ++k)
    cands[kept[k]].quad.hi = std::max(cands[kept[k]].quad.lo, cands[kept[k + 1]].quad.lo);
  std::erase_if(cands, [](const Candidate& c) { return !(c.quad.lo < c.quad.hi); });
}

// ChooseFunction: minimum value, then slope, then curvature, then lowest index.
std::size_t choose(const std::vector<Candidate>& cands, const std::vector<std::size_t>& active, double x) {
  thread_local std::vector<double> val, slo;
  val.resize(active.size());
  slo.resize(active.size());
  double vmin = kInf;
  for (std::size_t r = 0; r < active.size(); ++r) {
    val[r] = cands[active[r]].quad.q(x);
    vmin = std::min(vmin, val[r]);
  }
  const double vtol = kValueTol * scale_of(vmin);
  double smin = kInf;
  for (std::size_t r = 0; r < active.size(); ++r)
    if (val[r] <= vmin + vtol) {
      slo[r] = cands[active[r]].quad.q.slope(x);
      smin = std::min(smin, slo[r]);
    }
  const double stol = kSlopeTol * scale_of(smin);
  double cmin = kInf;
  for (std::size_t r = 0; r < active.size(); ++r)
    if (val[r] <= vmin + vtol && slo[r] <= smin + stol) cmin = std::min(cmin, cands[active[r]].quad.q.curvature());
  const double ctol = kSlopeTol * scale_of(cmin);
  std::size_t pick = cands.size();
  for (std::size_t r = 0; r < active.size(); ++r)
    if (val[r] <= vmin + vtol && slo[r] <= smin + stol && cands[active[r]].quad.q.curvature() <= cmin + ctol)
      pick = std::min(pick, active[r]);
  return pick;
}

// First y > x at which `other` drops below `cur`; +inf if none.
double first_overtake(const Quadratic& other, const Quadratic& cur, double x) {
  const double da = other.a - cur.a;
  const double db = other.b - cur.b;
  const double dc = other.c - cur.c;
  const double amag = std::max(std::abs(other.a), std::abs(cur.a));
  const double bmag = std::max(std::abs(other.b), std::abs(cur.b));
  const double xtol = kMinWidth * scale_of(x);

  const bool flat_a = std::abs(da) <= kRootTol * amag;
  const bool flat_b = std::abs(db) <= kRootTol * bmag;
  if (flat_a) {
    if (flat_b) return kInf;  // parallel or identical
    if (db >= 0.0) return kInf;
    const double y = -dc / db;
    return y > x + xtol ? y : kInf;
  }
  const double disc = db * db - 4.0 * da * dc;
  if (disc <= kRootTol * std::max(db * db, 4.0 * std::abs(da * dc)) || disc <= 0.0) return kInf;
  const double sq = std::sqrt(disc);
  const double qq = -0.5 * (db + std::copysign(sq, db));
  double r1 = qq / da;
  double r2 = qq != 0.0 ? dc / qq : r1;
  if (r1 > r2) std::swap(r1, r2);
  // Opening upward: negative between the roots, so the crossing is r1.
  // Opening downward: negative outside, so the crossing is r2.
  const double y = da > 0.0 ? r1 : r2;
  if (y > x + xtol) return y;
  return kInf;
}

struct Segment {
  double lo, hi;
  std::size_t idx;
};

}  // namespace

Envelope lower_envelope(std::vector<Candidate> cands) {
  std::erase_if(cands, [](const Candidate& c) { return !(c.quad.lo < c.quad.hi); });
  if (cands.empty()) throw std::invalid_argument("lower_envelope: no candidates");
  reduce_saturated(cands);
  const std::size_t n = cands.size();

  std::vector<double> events;
  events.reserve(2 * n);
  for (const auto& c : cands) {
    if (is_finite(c.quad.lo)) events.push_back(c.quad.lo);
    if (is_finite(c.quad.hi)) events.push_back(c.quad.hi);
  }
  std::sort(events.begin(), events.end());
  events.erase(std::unique(events.begin(), events.end()), events.end());

  std::vector<std::size_t> by_lo(n);
  std::iota(by_lo.begin(), by_lo.end(), std::size_t{0});
  std::stable_sort(by_lo.begin(), by_lo.end(),
                   [&](std::size_t l, std::size_t r) { return cands[l].quad.lo < cands[r].quad.lo; });

  std::vector<std::size_t> active;
  std::size_t next_in = 0;
  while (next_in < n && cands[by_lo[next_in]].quad.lo == -kInf) active.push_back(by_lo[next_in++]);
  if (active.empty()) throw std::invalid_argument("lower_envelope: candidates do not extend to -inf");

  // Start left of every event and of every crossing among the leftmost candidates,
  // so that the initial winner is the winner on the whole unbounded left ray.
  double x = events.empty() ? 0.0 : events.front() - 1.0;
  for (std::size_t i = 0; i < active.size(); ++i)
    for (std::size_t j = 0; j < active.size(); ++j) {
      if (i == j) continue;
      const double y = first_overtake(cands[active[i]].quad.q, cands[active[j]].quad.q, -1e300);
      if (is_finite(y) && y - 1.0 < x) x = y - 1.0;
    }
  std::sort(active.begin(), active.end());

  std::vector<Segment> segs;
  segs.reserve(2 * n);
  double seg_start = -kInf;
  std::size_t cur = choose(cands, active, x);
  std::size_t next_event = 0;
  while (next_event < events.size() && events[next_event] <= x) ++next_event;

  auto emit = [&](double hi, std::size_t winner) {
    if (hi > seg_start) segs.push_back({seg_start, hi, cur});
    seg_start = hi;
    cur = winner;
  };

  for (;;) {
    const double ev = next_event < events.size() ? events[next_event] : kInf;
    double cross = kInf;
    for (std::size_t i : active) {
      if (i == cur) continue;
      cross = std::min(cross, first_overtake(cands[i].quad.q, cands[cur].quad.q, x));
    }

    if (cross < ev) {
      x = cross;
      const std::size_t winner = choose(cands, active, x);
      if (winner != cur) emit(x, winner);
      continue;
    }
    if (!is_finite(ev)) break;

    x = ev;
    ++next_event;
    std::erase_if(active, [&](std::size_t i) { return cands[i].quad.hi <= x; });
    bool added = false;
    while (next_in < n && cands[by_lo[next_in]].quad.lo <= x) {
      const std::size_t i = by_lo[next_in++];
      if (cands[i].quad.hi > x) {
        active.push_back(i);
        added = true;
      }
    }
    if (added) std::sort(active.begin(), active.end());
    if (active.empty()) throw std::invalid_argument("lower_envelope: candidates leave a gap");
    const bool cur_alive = cands[cur].quad.hi > x;
    const std::size_t winner = choose(cands, active, x);
    if (!cur_alive || winner != cur) emit(x, winner);
  }
  segs.push_back({seg_start, kInf, cur});

  // Merge runs of the same candidate, then absorb jitter-width pieces into their
  // left neighbour.
  std::vector<Segment> merged;
  for (const auto& s : segs) {
    if (!merged.empty() && merged.back().idx == s.idx) {
      merged.back().hi = s.hi;
      continue;
    }
    if (!merged.empty() && s.hi - s.lo < kMinWidth * scale_of(s.lo)) {
      merged.back().hi = s.hi;
      continue;
    }
    merged.push_back(s);
  }

  std::vector<QuadraticPiece> qp;
  std::vector<LinearPiece> lp;
  qp.reserve(merged.size());
  lp.reserve(merged.size());
  for (const auto& s : merged) {
    const Candidate& c = cands[s.idx];
    if (!qp.empty()) {
      const Quadratic& pq = qp.back().q;
      const LinearMap& pb = lp.back().map;
      if (pq.a == c.quad.q.a && pq.b == c.quad.q.b && pq.c == c.quad.q.c && pb.slope == c.back.slope &&
          pb.intercept == c.back.intercept) {
        qp.back().hi = s.hi;
        lp.back().hi = s.hi;
        continue;
      }
    }
    qp.push_back({s.lo, s.hi, c.quad.q});
    lp.push_back({s.lo, s.hi, c.back});
  }
  return {PiecewiseQuadratic(std::move(qp)), PiecewiseLinear(std::move(lp))};
}

PiecewiseQuadratic add_quadratic(const PiecewiseQuadratic& g, double w, double ybar) {
  if (!(w > 0.0)) throw std::invalid_argument("add_quadratic: weight must be positive");
  std::vector<QuadraticPiece> pieces = g.pieces();
  for (auto& p : pieces) {
    p.q.a += 0.5 * w;
    p.q.b -= w * ybar;
    p.q.c += 0.5 * w * ybar * ybar;
  }
  return PiecewiseQuadratic(std::move(pieces));
}

void dump(std::ostream& os, const PiecewiseQuadratic& f) {
  char buf[160];
  for (const auto& p : f.pieces()) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g\n", p.lo, p.hi, p.q.a, p.q.b, p.q.c);
    os << buf;
  }
}

std::string dump(const PiecewiseQuadratic& f) {
  std::ostringstream os;
  dump(os, f);
  return os.str();
}

}  // namespace scope
