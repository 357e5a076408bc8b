#include "fluidmc/time_set.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fluidmc {

TimeVaryingSet::TimeVaryingSet(std::size_t n, double a, double b)
    : a_(a), b_(b), init_(n, false), switches_(n) {
  if (b < a) throw std::invalid_argument("time-varying set needs a <= b");
}

TimeVaryingSet TimeVaryingSet::constant(const std::vector<bool>& members, double a, double b) {
  TimeVaryingSet s(members.size(), a, b);
  s.init_ = members;
  return s;
}

TimeVaryingSet TimeVaryingSet::constant_indices(std::size_t n, const std::vector<int>& members, double a, double b) {
  std::vector<bool> m(n, false);
  for (int i : members) m.at(static_cast<std::size_t>(i)) = true;
  return constant(m, a, b);
}

void TimeVaryingSet::set(std::size_t s, bool initial, std::vector<double> switches) {
  for (std::size_t i = 0; i < switches.size(); ++i) {
    if (switches[i] <= a_ || switches[i] > b_)
      throw std::invalid_argument("switch time outside the set's interval");
    if (i > 0 && switches[i] <= switches[i - 1]) throw std::invalid_argument("switch times must increase strictly");
  }
  init_.at(s) = initial;
  switches_.at(s) = std::move(switches);
  if (switch_count() > kMaxSwitches) throw std::length_error("time-varying set exceeds the switch cap");
}

bool TimeVaryingSet::contains(std::size_t s, double t) const {
  const auto& sw = switches_[s];
  const auto k = std::upper_bound(sw.begin(), sw.end(), t) - sw.begin();
  return init_[s] != (k % 2 == 1);
}

std::vector<bool> TimeVaryingSet::at(double t) const {
  std::vector<bool> out(size());
  for (std::size_t s = 0; s < size(); ++s) out[s] = contains(s, t);
  return out;
}

std::vector<double> TimeVaryingSet::switch_times() const {
  std::vector<double> all;
  for (const auto& sw : switches_) all.insert(all.end(), sw.begin(), sw.end());
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

std::size_t TimeVaryingSet::switch_count() const {
  std::size_t c = 0;
  for (const auto& sw : switches_) c += sw.size();
  return c;
}

TimeVaryingSet TimeVaryingSet::complement() const {
  TimeVaryingSet out = *this;
  out.init_.flip();
  return out;
}

TimeVaryingSet TimeVaryingSet::intersect(const TimeVaryingSet& other) const {
  if (other.size() != size()) throw std::invalid_argument("intersecting sets over different state spaces");
  const double a = std::max(a_, other.a_), b = std::min(b_, other.b_);
  if (b < a) throw std::invalid_argument("intersecting sets with disjoint time domains");
  TimeVaryingSet out(size(), a, b);
  for (std::size_t s = 0; s < size(); ++s) {
    std::vector<double> pts;
    for (double t : switches_[s])
      if (t > a && t <= b) pts.push_back(t);
    for (double t : other.switches_[s])
      if (t > a && t <= b) pts.push_back(t);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    bool cur = contains(s, a) && other.contains(s, a);
    const bool first = cur;
    std::vector<double> sw;
    for (double t : pts) {
      const bool v = contains(s, t) && other.contains(s, t);
      if (v != cur) {
        sw.push_back(t);
        cur = v;
      }
    }
    out.init_[s] = first;
    out.switches_[s] = std::move(sw);
  }
  return out;
}

TimeVaryingSet TimeVaryingSet::unite(const TimeVaryingSet& other) const {
  return complement().intersect(other.complement()).complement();
}

TimeVaryingSet TimeVaryingSet::restrict(double a, double b) const {
  if (a < a_ || b > b_ || b < a) throw std::invalid_argument("restriction outside the set's interval");
  TimeVaryingSet out(size(), a, b);
  for (std::size_t s = 0; s < size(); ++s) {
    out.init_[s] = contains(s, a);
    for (double t : switches_[s])
      if (t > a && t <= b) out.switches_[s].push_back(t);
  }
  return out;
}

bool operator==(const TimeVaryingSet& x, const TimeVaryingSet& y) {
  return x.a_ == y.a_ && x.b_ == y.b_ && x.init_ == y.init_ && x.switches_ == y.switches_;
}

// ---------------------------------------------------------------------------

TimeFunction::TimeFunction(std::size_t dim, std::vector<Piece> pieces) : dim_(dim), pieces_(std::move(pieces)) {
  if (pieces_.empty()) throw std::invalid_argument("time function needs at least one piece");
  for (std::size_t k = 0; k < pieces_.size(); ++k) {
    if (pieces_[k].hi < pieces_[k].lo) throw std::invalid_argument("time function piece with hi < lo");
    if (k > 0 && pieces_[k].lo != pieces_[k - 1].hi) throw std::invalid_argument("time function pieces must be contiguous");
  }
}

TimeFunction TimeFunction::constant(std::vector<double> value, double a, double b) {
  const std::size_t n = value.size();
  return TimeFunction(n, {{a, b, [value](double, std::span<double> out) { std::copy(value.begin(), value.end(), out.begin()); }}});
}

std::size_t TimeFunction::piece_index(double t) const {
  // last piece whose lower end is <= t
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), t, [](double v, const Piece& p) { return v < p.lo; });
  if (it == pieces_.begin()) return 0;
  std::size_t k = static_cast<std::size_t>(it - pieces_.begin()) - 1;
  // zero-length pieces cannot hold a value; skip forward past them
  while (k + 1 < pieces_.size() && pieces_[k].hi == pieces_[k].lo && pieces_[k + 1].lo == t) ++k;
  return k;
}

void TimeFunction::eval(double t, std::span<double> out) const {
  const auto& p = pieces_[piece_index(t)];
  p.f(std::clamp(t, p.lo, p.hi), out);
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
}

std::vector<double> TimeFunction::eval(double t) const {
  std::vector<double> out(dim_);
  eval(t, out);
  return out;
}

double TimeFunction::eval(double t, std::size_t i) const { return eval(t)[i]; }

std::vector<double> TimeFunction::raw(double t) const {
  std::vector<double> out(dim_);
  const auto& p = pieces_[piece_index(t)];
  p.f(std::clamp(t, p.lo, p.hi), out);
  return out;
}

std::vector<double> TimeFunction::left_limit(double t) const {
  std::size_t k = piece_index(t);
  while (k > 0 && pieces_[k].lo >= t) --k;
  std::vector<double> out(dim_);
  const auto& p = pieces_[k];
  p.f(std::clamp(t, p.lo, p.hi), out);
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
  return out;
}

std::vector<TimeFunction::Jump> TimeFunction::jumps(double tol) const {
  std::vector<Jump> out;
  for (std::size_t k = 1; k < pieces_.size(); ++k) {
    const double t = pieces_[k].lo;
    if (t <= pieces_.front().lo) continue;
    if (!out.empty() && out.back().time == t) continue;
    auto l = left_limit(t), r = eval(t);
    double d = 0;
    for (std::size_t i = 0; i < dim_; ++i) d = std::max(d, std::abs(l[i] - r[i]));
    if (d > tol) out.push_back({t, std::move(l), std::move(r)});
  }
  return out;
}

std::vector<double> TimeFunction::boundaries() const {
  std::vector<double> out;
  for (std::size_t k = 1; k < pieces_.size(); ++k)
    if (out.empty() || out.back() != pieces_[k].lo) out.push_back(pieces_[k].lo);
  return out;
}

}  // namespace fluidmc
