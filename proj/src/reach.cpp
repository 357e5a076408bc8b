#include "fluidmc/reach.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "fluidmc/error.hpp"

namespace fluidmc {

namespace {

using RowMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// goal wins over unsafe; everything else is safe
struct Masks {
  std::vector<bool> goal, unsafe, safe;
};

Masks masks_at(const TimeVaryingSet& g, const TimeVaryingSet& u, double t) {
  Masks m;
  m.goal = g.at(t);
  m.unsafe = u.at(t);
  m.safe.resize(m.goal.size());
  for (std::size_t i = 0; i < m.goal.size(); ++i) {
    if (m.goal[i]) m.unsafe[i] = false;
    m.safe[i] = !m.goal[i] && !m.unsafe[i];
  }
  return m;
}

void warn_overlap(const TimeVaryingSet& g, const TimeVaryingSet& u, double a, double b, const ReachOptions& opts) {
  if (!opts.warnings) return;
  std::vector<double> pts{a};
  for (double t : g.switch_times())
    if (t > a && t <= b) pts.push_back(t);
  for (double t : u.switch_times())
    if (t > a && t <= b) pts.push_back(t);
  for (double t : pts)
    for (std::size_t s = 0; s < g.size(); ++s)
      if (g.contains(s, t) && u.contains(s, t)) {
        opts.warnings->push_back("state " + std::to_string(s) + " is both goal and unsafe at t=" + std::to_string(t) +
                                 "; treating it as a goal");
        return;
      }
}

std::vector<double> merged_switches(const TimeVaryingSet& g, const TimeVaryingSet& u, double a, double b) {
  std::vector<double> out;
  for (double t : g.switch_times())
    if (t > a && t <= b) out.push_back(t);
  for (double t : u.switch_times())
    if (t > a && t <= b) out.push_back(t);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void push_in(std::vector<double>& v, double t, double lo, double hi) {
  if (t > lo && t < hi) v.push_back(t);
}

OdeOptions ode_options(const ReachOptions& o) {
  OdeOptions ode;
  ode.rtol = o.rtol;
  ode.atol = o.atol;
  return ode;
}

// Q restricted to the safe block, and the rate vector from safe states into the goal
void restricted(const Matrix& q, const Masks& m, Matrix& qw, Vector& qg) {
  const auto n = q.rows();
  qw.setZero(n, n);
  qg.setZero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!m.safe[static_cast<std::size_t>(i)]) continue;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (m.safe[static_cast<std::size_t>(j)])
        qw(i, j) = q(i, j);
      else if (m.goal[static_cast<std::size_t>(j)] && j != i)
        qg(i) += q(i, j);
    }
  }
}

// Solution of the reduced system on one interval between membership switches.
// State vector: n x n safe-block matrix (row-major), then n goal masses.
struct Segment {
  double lo, hi;
  DenseOutput dense;
};

const Segment& segment_at(const std::vector<Segment>& segs, double t) {
  for (const auto& s : segs)
    if (t >= s.lo && t <= s.hi) return s;
  return t < segs.front().lo ? segs.front() : segs.back();
}

// Backward sweep from `a` down to `c`: B(t) is the probability of being in
// each safe state at a− (after the masks at a are applied) without having
// touched the goal, h(t) the probability of having reached it.
std::vector<Segment> sweep_backward(const Generator& q, const TimeVaryingSet& g, const TimeVaryingSet& u, double c,
                                    double a, const ReachOptions& opts) {
  const std::size_t n = q.size();
  const auto N = static_cast<Eigen::Index>(n);
  auto sw = merged_switches(g, u, c, a);  // switches in (c, a]
  // integration edges from a downwards
  std::vector<double> edges{a};
  for (auto it = sw.rbegin(); it != sw.rend(); ++it)
    if (*it < a) edges.push_back(*it);
  edges.push_back(c);

  Masks cur;
  Matrix qt, qw;
  Vector qg;
  OdeRhs rhs = [&](double t, std::span<const double> y, std::span<double> dy) {
    q.eval(t, qt);
    restricted(qt, cur, qw, qg);
    ConstRowMap B(y.data(), N, N);
    RowMap dB(dy.data(), N, N);
    dB.noalias() = -qw * B;
    Eigen::Map<const Vector> h(y.data() + n * n, N);
    Eigen::Map<Vector> dh(dy.data() + n * n, N);
    dh.noalias() = -qw * h - qg;
  };

  std::vector<double> y(n * n + n, 0.0);
  {
    // value just below a: masks of the segment under a, then the switch at a
    const double below = edges.size() > 1 ? 0.5 * (edges[0] + edges[1]) : a;
    const Masks pre = masks_at(g, u, below), post = masks_at(g, u, a);
    for (std::size_t i = 0; i < n; ++i) {
      if (pre.safe[i] && post.safe[i]) y[i * n + i] = 1.0;
      if (pre.safe[i] && post.goal[i]) y[n * n + i] = 1.0;
    }
  }
  std::vector<Segment> segs;
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    const double hi = edges[k], lo = edges[k + 1];
    if (hi == lo) continue;
    cur = masks_at(g, u, 0.5 * (lo + hi));
    auto stops = q.breakpoints_in(lo, hi);
    DenseOutput d = integrate(rhs, hi, y, lo, ode_options(opts), stops);
    y.assign(d.back().begin(), d.back().end());
    segs.push_back({lo, hi, std::move(d)});
    if (k + 2 < edges.size()) {
      // crossing the switch at lo while moving to earlier times
      const double below = 0.5 * (lo + edges[k + 2]);
      const Masks pre = masks_at(g, u, below), post = masks_at(g, u, lo);
      for (std::size_t i = 0; i < n; ++i) {
        if (pre.safe[i] && post.safe[i]) continue;
        for (std::size_t j = 0; j < n; ++j) y[i * n + j] = 0.0;
        y[n * n + i] = (pre.safe[i] && post.goal[i]) ? 1.0 : 0.0;
      }
    }
  }
  if (segs.empty()) {
    DenseOutput d(n * n + n);
    d.start(a, y);
    segs.push_back({c, a, std::move(d)});
  }
  return segs;
}

// Forward sweep from a to e: M(a, s) over safe states and goal mass g(a, s),
// with masks applied at every switch in (a, e]; each segment [b, b') holds
// the values after the switch at b.
std::vector<Segment> sweep_forward(const Generator& q, const TimeVaryingSet& g, const TimeVaryingSet& u, double a,
                                   double e, const ReachOptions& opts) {
  const std::size_t n = q.size();
  const auto N = static_cast<Eigen::Index>(n);
  auto sw = merged_switches(g, u, a, e);
  std::vector<double> edges{a};
  for (double t : sw)
    if (t < e) edges.push_back(t);
  edges.push_back(e);

  Masks cur;
  Matrix qt, qw;
  Vector qg;
  OdeRhs rhs = [&](double t, std::span<const double> y, std::span<double> dy) {
    q.eval(t, qt);
    restricted(qt, cur, qw, qg);
    ConstRowMap M(y.data(), N, N);
    RowMap dM(dy.data(), N, N);
    dM.noalias() = M * qw;
    Eigen::Map<Vector> dg(dy.data() + n * n, N);
    dg.noalias() = M * qg;
  };

  std::vector<double> y(n * n + n, 0.0);
  const Masks start = masks_at(g, u, a);
  for (std::size_t i = 0; i < n; ++i)
    if (start.safe[i]) y[i * n + i] = 1.0;

  std::vector<Segment> segs;
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    const double lo = edges[k], hi = edges[k + 1];
    if (k > 0) {
      const Masks pre = masks_at(g, u, 0.5 * (edges[k - 1] + lo)), post = masks_at(g, u, lo);
      for (std::size_t j = 0; j < n; ++j) {
        if (pre.safe[j] && post.safe[j]) continue;
        for (std::size_t i = 0; i < n; ++i) {
          if (pre.safe[j] && post.goal[j]) y[n * n + i] += y[i * n + j];
          y[i * n + j] = 0.0;
        }
      }
    }
    if (hi == lo) continue;
    cur = masks_at(g, u, 0.5 * (lo + hi));
    auto stops = q.breakpoints_in(lo, hi);
    DenseOutput d = integrate(rhs, lo, y, hi, ode_options(opts), stops);
    y.assign(d.back().begin(), d.back().end());
    segs.push_back({lo, hi, std::move(d)});
  }
  // a switch exactly at e acts on the final value
  if (!sw.empty() && sw.back() == e && edges.size() >= 2) {
    const double before = edges[edges.size() - 2];
    const Masks pre = masks_at(g, u, 0.5 * (before + e)), post = masks_at(g, u, e);
    for (std::size_t j = 0; j < n; ++j) {
      if (pre.safe[j] && post.safe[j]) continue;
      for (std::size_t i = 0; i < n; ++i) {
        if (pre.safe[j] && post.goal[j]) y[n * n + i] += y[i * n + j];
        y[i * n + j] = 0.0;
      }
    }
    DenseOutput d(n * n + n);
    d.start(e, y);
    segs.push_back({e, e, std::move(d)});
  }
  if (segs.empty()) {
    DenseOutput d(n * n + n);
    d.start(a, y);
    segs.push_back({a, e, std::move(d)});
  }
  return segs;
}

// forward segment holding the right-continuous value at s
const Segment& forward_segment_at(const std::vector<Segment>& segs, double s) {
  for (std::size_t k = segs.size(); k-- > 0;)
    if (s >= segs[k].lo && (s <= segs[k].hi)) return segs[k];
  return s < segs.front().lo ? segs.front() : segs.back();
}

// chunk ends: consecutive anchors are at most T apart
std::vector<double> chunk_anchors(double t0, double t1, double T) {
  std::vector<double> anchors{t0};
  const std::size_t count = static_cast<std::size_t>(std::ceil((t1 - t0) / T));
  if (count > 1'000'000) throw NumericError("reachability horizon too short for the initial-time range");
  for (std::size_t k = 1; k < count; ++k) anchors.push_back(t0 + (t1 - t0) * static_cast<double>(k) / static_cast<double>(count));
  if (t1 > t0) anchors.push_back(t1);
  return anchors;
}

struct Chunk {
  std::vector<Segment> back, fwd;
};

}  // namespace

TimeFunction reach_tv(const Generator& q, const TimeVaryingSet& goal, const TimeVaryingSet& unsafe, double T,
                      double t0, double t1, const ReachOptions& opts, const TimeFunction* terminal) {
  if (T < 0) throw std::invalid_argument("reachability horizon must be nonnegative");
  if (t1 < t0) throw std::invalid_argument("reachability needs t0 <= t1");
  if (goal.size() != q.size() || unsafe.size() != q.size())
    throw std::invalid_argument("goal/unsafe sets do not match the generator size");
  q.require_domain(t0, t1 + T);
  warn_overlap(goal, unsafe, t0, t1 + T, opts);
  const std::size_t n = q.size();

  const std::vector<double> all_sw = merged_switches(goal, unsafe, t0 - 1.0, t1 + T);
  std::vector<double> term_cuts;
  if (terminal) term_cuts = terminal->boundaries();
  // the result may outlive the caller's terminal function
  std::shared_ptr<const TimeFunction> term = terminal ? std::make_shared<TimeFunction>(*terminal) : nullptr;
  const std::vector<double> qb = q.breakpoints();

  // value for a piece with frozen masks and frozen terminal piece
  auto make_eval = [n, T, term](std::shared_ptr<const Chunk> chunk, const Segment* bseg, const Segment* fseg,
                                    Masks m, std::size_t term_piece) {
    return [=, keep = std::move(chunk)](double t, std::span<double> out) {
      const auto N = static_cast<Eigen::Index>(n);
      const double s = t + T;
      std::vector<double> yf(n * n + n);
      fseg->dense.eval(std::clamp(s, fseg->lo, fseg->hi), yf);
      ConstRowMap M(yf.data(), N, N);
      Vector v = Eigen::Map<const Vector>(yf.data() + n * n, N);
      if (term) {
        std::vector<double> r(n);
        const auto& p = term->pieces()[term_piece];
        p.f(std::clamp(s, p.lo, p.hi), r);
        v += M * Eigen::Map<const Vector>(r.data(), N);
      }
      Vector P(N);
      if (bseg) {
        std::vector<double> yb(n * n + n);
        bseg->dense.eval(std::clamp(t, bseg->lo, bseg->hi), yb);
        ConstRowMap B(yb.data(), N, N);
        P = B * v + Eigen::Map<const Vector>(yb.data() + n * n, N);
      } else {
        P = v;
      }
      for (std::size_t i = 0; i < n; ++i)
        out[i] = m.goal[i] ? 1.0 : (m.unsafe[i] ? 0.0 : P(static_cast<Eigen::Index>(i)));
    };
  };
  auto term_piece_at = [terminal](double s) -> std::size_t { return terminal ? terminal->piece_index(s) : 0; };

  std::vector<TimeFunction::Piece> pieces;
  if (T == 0.0) {
    // nothing can happen inside the window: indicator of the goal, or the terminal value
    std::vector<double> cuts{t0};
    for (double b : all_sw) push_in(cuts, b, t0, t1);
    for (double b : term_cuts) push_in(cuts, b, t0, t1);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    cuts.push_back(t1);
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
      const Masks m = masks_at(goal, unsafe, cuts[k] == cuts[k + 1] ? cuts[k] : mid);
      const std::size_t tp = term_piece_at(mid);
      pieces.push_back({cuts[k], cuts[k + 1], [=](double t, std::span<double> out) {
                          std::vector<double> r(n, 0.0);
                          if (term) {
                            const auto& p = term->pieces()[tp];
                            p.f(std::clamp(t, p.lo, p.hi), r);
                          }
                          for (std::size_t i = 0; i < n; ++i) out[i] = m.goal[i] ? 1.0 : (m.unsafe[i] ? 0.0 : r[i]);
                        }});
    }
    return TimeFunction(n, std::move(pieces));
  }

  const std::vector<double> anchors = chunk_anchors(t0, t1, T);
  for (std::size_t k = 0; k + 1 < anchors.size(); ++k) {
    const double c = anchors[k], a = anchors[k + 1];
    auto chunk = std::make_shared<Chunk>();
    chunk->back = sweep_backward(q, goal, unsafe, c, a, opts);
    chunk->fwd = sweep_forward(q, goal, unsafe, a, a + T, opts);

    std::vector<double> cuts{c};
    for (double b : all_sw) {
      push_in(cuts, b, c, a);
      push_in(cuts, b - T, c, a);
    }
    for (double b : term_cuts) push_in(cuts, b - T, c, a);
    for (double b : qb) {
      push_in(cuts, b, c, a);
      push_in(cuts, b - T, c, a);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    cuts.push_back(a);
    for (std::size_t p = 0; p + 1 < cuts.size(); ++p) {
      const double lo = cuts[p], hi = cuts[p + 1];
      const double mid = 0.5 * (lo + hi);
      const Segment* bseg = &segment_at(chunk->back, mid);
      const Segment* fseg = &segment_at(chunk->fwd, mid + T);
      pieces.push_back({lo, hi, make_eval(chunk, bseg, fseg, masks_at(goal, unsafe, mid), term_piece_at(mid + T))});
    }
  }

  // value at t1 itself: start there with the current masks
  {
    auto chunk = std::make_shared<Chunk>();
    chunk->fwd = sweep_forward(q, goal, unsafe, t1, t1 + T, opts);
    const Segment* fseg = &forward_segment_at(chunk->fwd, t1 + T);
    pieces.push_back({t1, t1, make_eval(chunk, nullptr, fseg, masks_at(goal, unsafe, t1), term_piece_at(t1 + T))});
  }
  return TimeFunction(n, std::move(pieces));
}

TimeFunction reach_horizon(const Generator& q, const TimeVaryingSet& goal, const TimeVaryingSet& unsafe, double t0,
                           double T_max, const ReachOptions& opts) {
  if (T_max < 0) throw std::invalid_argument("horizon must be nonnegative");
  q.require_domain(t0, t0 + T_max);
  warn_overlap(goal, unsafe, t0, t0 + T_max, opts);
  const std::size_t n = q.size();
  auto segs = std::make_shared<std::vector<Segment>>(sweep_forward(q, goal, unsafe, t0, t0 + T_max, opts));
  const Masks m = masks_at(goal, unsafe, t0);
  std::vector<TimeFunction::Piece> pieces;
  for (std::size_t k = 0; k < segs->size(); ++k) {
    const Segment* seg = &(*segs)[k];
    pieces.push_back({seg->lo - t0, seg->hi - t0, [segs, seg, m, n, t0](double T, std::span<double> out) {
                        std::vector<double> y(n * n + n);
                        seg->dense.eval(std::clamp(t0 + T, seg->lo, seg->hi), y);
                        for (std::size_t i = 0; i < n; ++i)
                          out[i] = m.goal[i] ? 1.0 : (m.unsafe[i] ? 0.0 : y[n * n + i]);
                      }});
  }
  return TimeFunction(n, std::move(pieces));
}

// ---------------------------------------------------------------------------

namespace {

// Q with the rows of the given states replaced by zero
class AbsorbingGenerator final : public Generator {
 public:
  AbsorbingGenerator(const Generator& base, std::vector<bool> absorbing) : base_(base), abs_(std::move(absorbing)) {}
  std::size_t size() const override { return base_.size(); }
  void eval(double t, Matrix& q) const override {
    base_.eval(t, q);
    for (std::size_t i = 0; i < abs_.size(); ++i)
      if (abs_[i]) q.row(static_cast<Eigen::Index>(i)).setZero();
  }
  std::vector<double> breakpoints() const override { return base_.breakpoints(); }
  double t_min() const override { return base_.t_min(); }
  double t_max() const override { return base_.t_max(); }
  const std::vector<std::string>& state_names() const override { return base_.state_names(); }

 private:
  const Generator& base_;
  std::vector<bool> abs_;
};

}  // namespace

TimeFunction reach_const(const Generator& q, const std::vector<bool>& goal, const std::vector<bool>& unsafe, double T,
                         double t0, double t1, const ReachOptions& opts) {
  const std::size_t n = q.size();
  if (goal.size() != n || unsafe.size() != n) throw std::invalid_argument("goal/unsafe sets do not match the generator size");
  if (T < 0) throw std::invalid_argument("reachability horizon must be nonnegative");
  if (t1 < t0) throw std::invalid_argument("reachability needs t0 <= t1");
  q.require_domain(t0, t1 + T);
  std::vector<bool> absorbing(n);
  Vector eg = Vector::Zero(static_cast<Eigen::Index>(n));
  bool overlap = false;
  for (std::size_t i = 0; i < n; ++i) {
    absorbing[i] = goal[i] || unsafe[i];
    if (goal[i]) eg(static_cast<Eigen::Index>(i)) = 1.0;
    overlap = overlap || (goal[i] && unsafe[i]);
  }
  if (overlap && opts.warnings) opts.warnings->push_back("a state is both goal and unsafe; treating it as a goal");
  auto qa = std::make_shared<AbsorbingGenerator>(q, absorbing);
  const std::vector<double> qb = q.breakpoints();
  auto finish = [goal, n](const Vector& p, std::span<double> out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = goal[i] ? 1.0 : p(static_cast<Eigen::Index>(i));
  };

  std::vector<TimeFunction::Piece> pieces;
  if (T == 0.0) {
    return TimeFunction(n, {{t0, t1, [finish, n](double, std::span<double> out) {
                               finish(Vector::Zero(static_cast<Eigen::Index>(n)), out);
                             }}});
  }

  if (opts.two_sided) {
    // Pi(t, t + T) evolved directly in t from its value at t0
    const auto N = static_cast<Eigen::Index>(n);
    const Matrix start = forward(*qa, t0, t0 + T, opts.transient()).raw(t0 + T);
    Matrix qx, qy;
    OdeRhs rhs = [&, N](double t, std::span<const double> y, std::span<double> dy) {
      qa->eval(t, qx);
      qa->eval(t + T, qy);
      ConstRowMap P(y.data(), N, N);
      RowMap d(dy.data(), N, N);
      d.noalias() = -qx * P + P * qy;
    };
    std::vector<double> y0(n * n);
    RowMap(y0.data(), N, N) = start;
    std::vector<double> stops;
    for (double b : qb) {
      push_in(stops, b, t0, t1);
      push_in(stops, b - T, t0, t1);
    }
    auto dense = std::make_shared<DenseOutput>(integrate(rhs, t0, y0, t1, ode_options(opts), stops));
    std::sort(stops.begin(), stops.end());
    std::vector<double> cuts{t0};
    cuts.insert(cuts.end(), stops.begin(), stops.end());
    cuts.push_back(t1);
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
      pieces.push_back({cuts[k], cuts[k + 1], [dense, eg, finish, N](double t, std::span<double> out) {
                          std::vector<double> y(static_cast<std::size_t>(N * N));
                          dense->eval(t, y);
                          finish(ConstRowMap(y.data(), N, N) * eg, out);
                        }});
    return TimeFunction(n, std::move(pieces));
  }

  const std::vector<double> anchors = chunk_anchors(t0, t1, T);
  auto add_chunk = [&](double c, double a, bool point) {
    auto back = std::make_shared<TransientSolution>();
    if (!point) *back = backward(*qa, c, a, opts.transient());
    auto fwd = std::make_shared<TransientSolution>(forward(*qa, a, a + T, opts.transient()));
    std::vector<double> cuts{c};
    if (!point)
      for (double b : qb) {
        push_in(cuts, b, c, a);
        push_in(cuts, b - T, c, a);
      }
    std::sort(cuts.begin(), cuts.end());
    cuts.push_back(a);
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
      pieces.push_back({cuts[k], cuts[k + 1], [back, fwd, eg, finish, point, T](double t, std::span<double> out) {
                          Vector v = fwd->raw(t + T) * eg;
                          if (!point) v = back->raw(t) * v;
                          finish(v, out);
                        }});
  };
  for (std::size_t k = 0; k + 1 < anchors.size(); ++k) add_chunk(anchors[k], anchors[k + 1], false);
  add_chunk(t1, t1, true);
  return TimeFunction(n, std::move(pieces));
}

// ---------------------------------------------------------------------------

Matrix zeta_matrix(const TimeVaryingSet& goal, const TimeVaryingSet& unsafe, double b) {
  const std::size_t n = goal.size();
  const auto N = static_cast<Eigen::Index>(n);
  Matrix z = Matrix::Zero(2 * N, 2 * N);
  // membership just before b: step functions are right-continuous, so look a
  // hair to the left of the switch
  const double eps = 1e-9 * std::max(1.0, std::abs(b));
  const Masks pre = masks_at(goal, unsafe, b - eps), post = masks_at(goal, unsafe, b);
  for (std::size_t i = 0; i < n; ++i) {
    const auto I = static_cast<Eigen::Index>(i);
    z(N + I, N + I) = 1.0;
    if (!pre.safe[i]) continue;
    if (post.safe[i])
      z(I, I) = 1.0;
    else if (post.goal[i])
      z(I, N + I) = 1.0;
  }
  return z;
}

Matrix upsilon(const Generator& q, const TimeVaryingSet& goal, const TimeVaryingSet& unsafe, double t, double T,
               const ReachOptions& opts) {
  const std::size_t n = q.size();
  const auto N = static_cast<Eigen::Index>(n);
  q.require_domain(t, t + T);
  auto sw = merged_switches(goal, unsafe, t, t + T);
  std::vector<double> edges{t};
  for (double b : sw)
    if (b < t + T) edges.push_back(b);
  edges.push_back(t + T);

  Matrix ups = Matrix::Identity(2 * N, 2 * N);
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    const double lo = edges[k], hi = edges[k + 1];
    if (k > 0) ups = ups * zeta_matrix(goal, unsafe, lo);
    if (hi == lo) continue;
    const Masks m = masks_at(goal, unsafe, 0.5 * (lo + hi));
    // doubled chain: safe -> safe as in Q, safe -> goal into the barred copy,
    // safe -> unsafe kept (absorbing there), barred copy evolves freely
    FunctionGenerator doubled(
        2 * n,
        [&q, m, n, N](double s, Matrix& out) {
          Matrix qs;
          q.eval(s, qs);
          out.setZero(2 * N, 2 * N);
          out.block(N, N, N, N) = qs;
          for (std::size_t i = 0; i < n; ++i) {
            if (!m.safe[i]) continue;
            const auto I = static_cast<Eigen::Index>(i);
            for (std::size_t j = 0; j < n; ++j) {
              const auto J = static_cast<Eigen::Index>(j);
              if (i == j) {
                out(I, I) = qs(I, I);
              } else if (m.goal[j]) {
                out(I, N + J) += qs(I, J);
              } else {
                out(I, J) += qs(I, J);
              }
            }
          }
        },
        q.breakpoints(), q.t_min(), q.t_max());
    ups = ups * forward(doubled, lo, hi, opts.transient()).raw(hi);
  }
  if (!sw.empty() && sw.back() == t + T && edges.size() >= 2) ups = ups * zeta_matrix(goal, unsafe, t + T);
  return ups;
}

std::vector<double> reach_upsilon(const Generator& q, const TimeVaryingSet& goal, const TimeVaryingSet& unsafe,
                                  double t, double T, const ReachOptions& opts) {
  const std::size_t n = q.size();
  const auto N = static_cast<Eigen::Index>(n);
  const Matrix ups = upsilon(q, goal, unsafe, t, T, opts);
  const Masks m = masks_at(goal, unsafe, t);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto I = static_cast<Eigen::Index>(i);
    out[i] = m.goal[i] ? 1.0 : (m.unsafe[i] ? 0.0 : std::clamp(ups.block(I, N, 1, N).sum(), 0.0, 1.0));
  }
  return out;
}

}  // namespace fluidmc
