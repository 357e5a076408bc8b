#include "fluidmc/csl.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fluidmc/error.hpp"
#include "fluidmc/next.hpp"

namespace fluidmc {

bool compare(double value, Comparison cmp, double p) {
  switch (cmp) {
    case Comparison::Less: return value < p;
    case Comparison::LessEq: return value <= p;
    case Comparison::GreaterEq: return value >= p;
    case Comparison::Greater: return value > p;
  }
  return false;
}

std::string to_string(Comparison cmp) {
  switch (cmp) {
    case Comparison::Less: return "<";
    case Comparison::LessEq: return "<=";
    case Comparison::GreaterEq: return ">=";
    case Comparison::Greater: return ">";
  }
  return "?";
}

namespace {

Csl make(CslNode n) { return std::make_shared<const CslNode>(std::move(n)); }

void check_bounds(double p, double t1, double t2) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("probability bound outside [0, 1]");
  if (!(t1 >= 0.0 && t1 <= t2)) throw std::invalid_argument("time bounds need 0 <= T1 <= T2");
}

}  // namespace

Csl csl_true() { return make(CslNode{}); }

Csl csl_false() {
  CslNode n;
  n.kind = CslNode::Kind::False;
  return make(std::move(n));
}

Csl csl_atom(std::string name) {
  CslNode n;
  n.kind = CslNode::Kind::Atom;
  n.atom = std::move(name);
  return make(std::move(n));
}

Csl csl_not(Csl f) {
  CslNode n;
  n.kind = CslNode::Kind::Not;
  n.left = std::move(f);
  return make(std::move(n));
}

Csl csl_and(Csl a, Csl b) {
  CslNode n;
  n.kind = CslNode::Kind::And;
  n.left = std::move(a);
  n.right = std::move(b);
  return make(std::move(n));
}

Csl csl_or(Csl a, Csl b) {
  CslNode n;
  n.kind = CslNode::Kind::Or;
  n.left = std::move(a);
  n.right = std::move(b);
  return make(std::move(n));
}

Csl csl_next(Comparison cmp, double p, double t1, double t2, Csl f) {
  check_bounds(p, t1, t2);
  CslNode n;
  n.kind = CslNode::Kind::Next;
  n.cmp = cmp;
  n.p = p;
  n.t1 = t1;
  n.t2 = t2;
  n.left = std::move(f);
  return make(std::move(n));
}

Csl csl_until(Comparison cmp, double p, double t1, double t2, Csl a, Csl b) {
  check_bounds(p, t1, t2);
  CslNode n;
  n.kind = CslNode::Kind::Until;
  n.cmp = cmp;
  n.p = p;
  n.t1 = t1;
  n.t2 = t2;
  n.left = std::move(a);
  n.right = std::move(b);
  return make(std::move(n));
}

// ---------------------------------------------------------------------------
// parser

namespace {

struct CslToken {
  enum Type { Ident, Number, Punct, End } type;
  std::string text;
  int column;
};

class CslParser {
 public:
  explicit CslParser(std::string_view src) : src_(src) { lex(); }

  Csl parse() {
    Csl f = disjunction();
    if (peek().type != CslToken::End) fail(peek(), "unexpected '" + peek().text + "' after the formula");
    return f;
  }

 private:
  [[noreturn]] void fail(const CslToken& at, const std::string& msg) {
    throw DiagnosticError({Diagnostic{1, at.column, msg}});
  }

  void lex() {
    std::size_t i = 0;
    while (i < src_.size()) {
      const char c = src_[i];
      const int col = static_cast<int>(i) + 1;
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
        std::size_t j = i;
        while (j < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[j])) || src_[j] == '_')) ++j;
        toks_.push_back({CslToken::Ident, std::string(src_.substr(i, j - i)), col});
        i = j;
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t j = i;
        while (j < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[j])) || src_[j] == '.')) ++j;
        if (j < src_.size() && (src_[j] == 'e' || src_[j] == 'E')) {
          std::size_t k = j + 1;
          if (k < src_.size() && (src_[k] == '+' || src_[k] == '-')) ++k;
          if (k < src_.size() && std::isdigit(static_cast<unsigned char>(src_[k]))) {
            j = k;
            while (j < src_.size() && std::isdigit(static_cast<unsigned char>(src_[j]))) ++j;
          }
        }
        toks_.push_back({CslToken::Number, std::string(src_.substr(i, j - i)), col});
        i = j;
      } else if ((c == '<' || c == '>') && i + 1 < src_.size() && src_[i + 1] == '=') {
        toks_.push_back({CslToken::Punct, std::string(src_.substr(i, 2)), col});
        i += 2;
      } else if (std::string_view("!&|()[],<>/").find(c) != std::string_view::npos) {
        toks_.push_back({CslToken::Punct, std::string(1, c), col});
        ++i;
      } else {
        throw DiagnosticError({Diagnostic{1, col, std::string("unexpected character '") + c + "'"}});
      }
    }
    toks_.push_back({CslToken::End, "end of input", static_cast<int>(src_.size()) + 1});
  }

  const CslToken& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
  const CslToken& take() { return toks_[std::min(pos_++, toks_.size() - 1)]; }
  bool is(const char* punct, std::size_t ahead = 0) const {
    return peek(ahead).type == CslToken::Punct && peek(ahead).text == punct;
  }
  bool keyword(const char* word, std::size_t ahead = 0) const {
    return peek(ahead).type == CslToken::Ident && peek(ahead).text == word;
  }
  void expect(const char* punct) {
    if (!is(punct)) fail(peek(), std::string("expected '") + punct + "' but found '" + peek().text + "'");
    take();
  }

  double number() {
    const CslToken& t = take();
    if (t.type != CslToken::Number) fail(t, "expected a number but found '" + t.text + "'");
    double v = 0;
    try {
      std::size_t used = 0;
      v = std::stod(t.text, &used);
      if (used != t.text.size()) throw std::invalid_argument(t.text);
    } catch (const std::exception&) {
      fail(t, "malformed number '" + t.text + "'");
    }
    if (is("/")) {
      take();
      const CslToken& d = peek();
      const double den = number();
      if (den == 0.0) fail(d, "division by zero in a constant");
      v /= den;
    }
    return v;
  }

  Csl disjunction() {
    Csl f = conjunction();
    while (is("|")) {
      take();
      f = csl_or(f, conjunction());
    }
    return f;
  }

  Csl conjunction() {
    Csl f = unary();
    while (is("&")) {
      take();
      f = csl_and(f, unary());
    }
    return f;
  }

  Csl unary() {
    if (is("!")) {
      take();
      return csl_not(unary());
    }
    return primary();
  }

  Csl primary() {
    const CslToken& t = peek();
    if (is("(")) {
      take();
      Csl f = disjunction();
      expect(")");
      return f;
    }
    if (t.type != CslToken::Ident) fail(t, "expected a formula but found '" + t.text + "'");
    if (t.text == "P" && (is("<", 1) || is("<=", 1) || is(">=", 1) || is(">", 1))) return probabilistic();
    if (t.text == "U" || t.text == "X" || t.text == "P") fail(t, "'" + t.text + "' is reserved and cannot name an atom");
    take();
    if (t.text == "true") return csl_true();
    if (t.text == "false") return csl_false();
    return csl_atom(t.text);
  }

  void interval(double& a, double& b) {
    const CslToken& start = peek();
    expect("[");
    a = number();
    expect(",");
    b = number();
    expect("]");
    if (a < 0) fail(start, "time bounds must be nonnegative");
    if (a > b) fail(start, "lower time bound exceeds the upper one");
  }

  Csl probabilistic() {
    take();  // P
    const CslToken& op = take();
    Comparison cmp;
    if (op.text == "<") cmp = Comparison::Less;
    else if (op.text == "<=") cmp = Comparison::LessEq;
    else if (op.text == ">=") cmp = Comparison::GreaterEq;
    else cmp = Comparison::Greater;
    const CslToken& pt = peek();
    const double p = number();
    if (!(p >= 0.0 && p <= 1.0)) fail(pt, "probability bound " + pt.text + " outside [0, 1]");
    expect("[");
    Csl out;
    double a = 0, b = 0;
    if (keyword("X") && is("[", 1)) {
      take();
      interval(a, b);
      out = csl_next(cmp, p, a, b, disjunction());
    } else {
      Csl lhs = disjunction();
      if (!keyword("U")) fail(peek(), "expected 'U' but found '" + peek().text + "'");
      take();
      interval(a, b);
      out = csl_until(cmp, p, a, b, lhs, disjunction());
    }
    expect("]");
    return out;
  }

  std::string_view src_;
  std::vector<CslToken> toks_;
  std::size_t pos_ = 0;
};

// shortest decimal that reads back to the same double
std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

Csl parse_csl(std::string_view text) { return CslParser(text).parse(); }

std::string to_string(const Csl& f) {
  using K = CslNode::Kind;
  switch (f->kind) {
    case K::True: return "true";
    case K::False: return "false";
    case K::Atom: return f->atom;
    case K::Not: return "!" + to_string(f->left);
    case K::And: return "(" + to_string(f->left) + " & " + to_string(f->right) + ")";
    case K::Or: return "(" + to_string(f->left) + " | " + to_string(f->right) + ")";
    case K::Next:
      return "P" + to_string(f->cmp) + num(f->p) + " [ X[" + num(f->t1) + "," + num(f->t2) + "] " + to_string(f->left) +
             " ]";
    case K::Until:
      return "P" + to_string(f->cmp) + num(f->p) + " [ " + to_string(f->left) + " U[" + num(f->t1) + "," + num(f->t2) +
             "] " + to_string(f->right) + " ]";
  }
  return "?";
}

bool structurally_equal(const Csl& a, const Csl& b) {
  if (!a || !b) return a == b;
  return a->kind == b->kind && a->atom == b->atom && a->cmp == b->cmp && a->p == b->p && a->t1 == b->t1 &&
         a->t2 == b->t2 && structurally_equal(a->left, b->left) && structurally_equal(a->right, b->right);
}

double time_depth(const Csl& f) {
  using K = CslNode::Kind;
  switch (f->kind) {
    case K::True:
    case K::False:
    case K::Atom: return 0.0;
    case K::Not: return time_depth(f->left);
    case K::And:
    case K::Or: return std::max(time_depth(f->left), time_depth(f->right));
    case K::Next: return f->t2 + time_depth(f->left);
    case K::Until: return f->t2 + std::max(time_depth(f->left), time_depth(f->right));
  }
  return 0.0;
}

// ---------------------------------------------------------------------------

Labelling Labelling::from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DiagnosticError({Diagnostic{0, 0, std::string("labelling is not valid JSON: ") + e.what()}});
  }
  if (!j.is_object()) throw DiagnosticError({Diagnostic{0, 0, "labelling must be an object of state -> [props]"}});
  std::map<std::string, std::set<std::string>> labels;
  for (const auto& [state, props] : j.items()) {
    if (!props.is_array()) throw DiagnosticError({Diagnostic{0, 0, "labels of state '" + state + "' must be an array"}});
    auto& dst = labels[state];
    for (const auto& p : props) {
      if (!p.is_string())
        throw DiagnosticError({Diagnostic{0, 0, "labels of state '" + state + "' must be strings"}});
      dst.insert(p.get<std::string>());
    }
  }
  return Labelling(std::move(labels));
}

Labelling Labelling::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open labelling file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::vector<bool> Labelling::states_with(const std::string& atom, const std::vector<std::string>& states) const {
  std::vector<bool> out(states.size(), false);
  bool any = false;
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto it = labels_.find(states[i]);
    out[i] = states[i] == atom || (it != labels_.end() && it->second.count(atom) > 0);
    any = any || out[i];
  }
  if (!any) {
    // an atom that some state of the model carries, just not a reachable one, is fine
    bool known = false;
    for (const auto& [s, props] : labels_) known = known || props.count(atom) > 0 || s == atom;
    if (!known) throw std::invalid_argument("atomic proposition '" + atom + "' labels no state");
  }
  return out;
}

// ---------------------------------------------------------------------------
// diagnostics

bool ThresholdReport::near_tangential() const {
  return std::any_of(crossings.begin(), crossings.end(), [](const Crossing& c) { return c.tangential; });
}

bool ThresholdReport::zero_at_t0() const {
  return std::any_of(crossings.begin(), crossings.end(), [](const Crossing& c) { return c.at_t0; });
}

bool RobustnessReport::robust() const {
  return std::none_of(thresholds.begin(), thresholds.end(),
                      [](const ThresholdReport& r) { return r.near_tangential() || r.plateau() || r.zero_at_t0(); });
}

// ---------------------------------------------------------------------------
// threshold

namespace {

class PieceSampler {
 public:
  PieceSampler(const TimeFunction::Piece& p, std::size_t dim) : piece_(p), buf_(dim) {}
  const std::vector<double>& operator()(double t) {
    piece_.f(std::clamp(t, piece_.lo, piece_.hi), buf_);
    return buf_;
  }
  double at(double t, std::size_t s) { return (*this)(t)[s]; }

 private:
  const TimeFunction::Piece& piece_;
  std::vector<double> buf_;
};

struct Sample {
  double t;
  std::vector<double> v;
};

// grid over one piece, refined where some component comes close to p
std::vector<Sample> sample_piece(PieceSampler& f, double lo, double hi, double p, const CheckOptions& opts) {
  const std::size_t base = std::max<std::size_t>(opts.initial_grid, 2);
  std::vector<Sample> coarse;
  coarse.reserve(base + 1);
  for (std::size_t i = 0; i <= base; ++i) {
    const double t = i == base ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(base);
    coarse.push_back({t, f(t)});
  }
  const std::size_t factor = std::max<std::size_t>(1, opts.max_grid / base);
  if (factor == 1) return coarse;
  const std::size_t dim = coarse.front().v.size();
  std::vector<Sample> out;
  out.reserve(coarse.size());
  for (std::size_t i = 0; i + 1 < coarse.size(); ++i) {
    out.push_back(coarse[i]);
    bool suspicious = false;
    for (std::size_t s = 0; s < dim && !suspicious; ++s) {
      const double d0 = coarse[i].v[s] - p, d1 = coarse[i + 1].v[s] - p;
      double var = std::abs(d1 - d0);
      if (i > 0) var = std::max(var, std::abs(d0 - (coarse[i - 1].v[s] - p)));
      if (i + 2 < coarse.size()) var = std::max(var, std::abs((coarse[i + 2].v[s] - p) - d1));
      // a crossing pair or a touch can hide inside the cell only if p is
      // within a few cell variations of the samples
      suspicious = (d0 > 0) != (d1 > 0) || std::min(std::abs(d0), std::abs(d1)) < 4.0 * var + opts.plateau_tol;
    }
    if (!suspicious) continue;
    const double a = coarse[i].t, b = coarse[i + 1].t;
    for (std::size_t k = 1; k < factor; ++k) {
      const double t = a + (b - a) * static_cast<double>(k) / static_cast<double>(factor);
      out.push_back({t, f(t)});
    }
  }
  out.push_back(coarse.back());
  return out;
}

double derivative(PieceSampler& f, std::size_t s, double t, double lo, double hi) {
  const double h = std::max(1e-7, 1e-6 * (hi - lo));
  const double a = std::max(lo, t - h), b = std::min(hi, t + h);
  if (b <= a) return 0.0;
  return (f.at(b, s) - f.at(a, s)) / (b - a);
}

}  // namespace

TimeVaryingSet threshold(const TimeFunction& f, double p, Comparison cmp, double a, double b, const CheckOptions& opts,
                         ThresholdReport* report) {
  if (b < a) throw std::invalid_argument("threshold needs a <= b");
  const std::size_t n = f.dim();
  ThresholdReport local;
  ThresholdReport& rep = report ? *report : local;

  // (time, truth from then on) per state, in time order
  std::vector<std::vector<std::pair<double, bool>>> changes(n);
  std::vector<bool> initial(n);
  {
    const auto v = f.eval(a);
    for (std::size_t s = 0; s < n; ++s) initial[s] = compare(v[s], cmp, p);
  }

  const auto& pieces = f.pieces();
  for (std::size_t k = 0; k < pieces.size(); ++k) {
    const auto& piece = pieces[k];
    const double lo = std::max(piece.lo, a), hi = std::min(piece.hi, b);
    if (hi < lo) continue;
    if (lo == hi && !(piece.lo == piece.hi)) {
      // a piece that only touches the window at one end contributes nothing
      // beyond its start value, handled as the jump at its lower end
      if (piece.lo != lo) continue;
    }
    PieceSampler sampler(piece, n);

    // value entering the piece: a jump at its start
    if (piece.lo > a && piece.lo <= b) {
      const auto left = f.left_limit(piece.lo);
      const auto& right = sampler(piece.lo);
      for (std::size_t s = 0; s < n; ++s) {
        const double r = std::clamp(right[s], 0.0, 1.0), l = left[s];
        const bool tl = compare(l, cmp, p), tr = compare(r, cmp, p);
        changes[s].push_back({piece.lo, tr});
        if (tl != tr) {
          Crossing c;
          c.state = s;
          c.time = c.lo = c.hi = piece.lo;
          c.residual = std::abs(r - p);
          c.jump = true;
          rep.crossings.push_back(c);
        }
      }
    }
    if (lo == hi) continue;

    auto grid = sample_piece(sampler, lo, hi, p, opts);
    for (std::size_t s = 0; s < n; ++s) {
      auto val = [&](std::size_t i) { return std::clamp(grid[i].v[s], 0.0, 1.0); };
      for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        const bool t0v = compare(val(i), cmp, p), t1v = compare(val(i + 1), cmp, p);
        if (t0v == t1v) continue;
        double l = grid[i].t, r = grid[i + 1].t;
        while (r - l > opts.zero_tol) {
          const double m = 0.5 * (l + r);
          if (m <= l || m >= r) break;
          (compare(std::clamp(sampler.at(m, s), 0.0, 1.0), cmp, p) == t0v ? l : r) = m;
        }
        Crossing c;
        c.state = s;
        c.lo = l;
        c.hi = r;
        c.time = 0.5 * (l + r);
        c.residual = std::abs(sampler.at(c.time, s) - p);
        c.derivative = derivative(sampler, s, c.time, piece.lo, piece.hi);
        c.tangential = std::abs(c.derivative) < opts.deriv_tol;
        c.at_t0 = c.time - a < opts.zero_tol;
        rep.crossings.push_back(c);
        changes[s].push_back({r, t1v});
      }
      // plateaus and isolated touches of p
      std::size_t run = 0;
      for (std::size_t i = 0; i <= grid.size(); ++i) {
        const bool flat = i < grid.size() && std::abs(grid[i].v[s] - p) < opts.plateau_tol;
        if (flat) {
          ++run;
          continue;
        }
        if (run >= 2) {
          rep.plateaus.push_back({s, grid[i - run].t, grid[i - 1].t});
        } else if (run == 1) {
          const double t = grid[i - 1].t;
          const bool crossed = std::any_of(rep.crossings.begin(), rep.crossings.end(), [&](const Crossing& c) {
            return c.state == s && std::abs(c.time - t) <= std::max(opts.zero_tol, (hi - lo) / static_cast<double>(opts.max_grid));
          });
          if (!crossed) {
            Crossing c;
            c.state = s;
            c.time = c.lo = c.hi = t;
            c.residual = std::abs(grid[i - 1].v[s] - p);
            c.derivative = derivative(sampler, s, t, piece.lo, piece.hi);
            c.tangential = std::abs(c.derivative) < opts.deriv_tol;
            c.at_t0 = t - a < opts.zero_tol;
            rep.crossings.push_back(c);
          }
        }
        run = 0;
      }
    }
  }

  for (const auto& c : rep.crossings)
    if (c.at_t0 || (c.time - a < opts.zero_tol && c.residual < opts.plateau_tol))
      throw NonRobust("probability of state " + std::to_string(c.state) + " equals the bound " + std::to_string(p) +
                      " at the evaluation time t=" + std::to_string(a) + "; truth undecidable at this tolerance");
  for (const auto& pl : rep.plateaus)
    if (pl.lo - a < opts.zero_tol)
      throw NonRobust("probability of state " + std::to_string(pl.state) + " stays at the bound " + std::to_string(p) +
                      " from t=" + std::to_string(a) + "; truth undecidable at this tolerance");

  TimeVaryingSet out(n, a, b);
  for (std::size_t s = 0; s < n; ++s) {
    auto& ch = changes[s];
    std::stable_sort(ch.begin(), ch.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
    bool cur = initial[s];
    std::vector<double> sw;
    for (const auto& [t, v] : ch) {
      if (t <= a || v == cur) continue;
      if (!sw.empty() && t <= sw.back()) {
        // two changes closer than the time resolution cancel out
        sw.pop_back();
        cur = v;
        continue;
      }
      sw.push_back(t);
      cur = v;
    }
    out.set(s, initial[s], std::move(sw));
  }
  return out;
}

// ---------------------------------------------------------------------------
// recursive check

namespace {

void warn_incompatible(const TimeVaryingSet& x, const TimeVaryingSet& y, const std::string& where, double tol,
                       RobustnessReport& rep) {
  for (std::size_t s = 0; s < x.size(); ++s)
    for (double a : x.switches(s))
      for (double b : y.switches(s))
        if (std::abs(a - b) <= tol) {
          rep.warnings.push_back("operands of " + where + " both switch for state " + std::to_string(s) + " near t=" +
                                 std::to_string(a));
          return;
        }
}

struct Checker {
  const Generator& q;
  const Labelling& labels;
  const CheckOptions& opts;
  RobustnessReport& rep;

  TimeVaryingSet truth(const Csl& f, double t0, double t1) {
    using K = CslNode::Kind;
    const std::size_t n = q.size();
    switch (f->kind) {
      case K::True: return TimeVaryingSet::constant(std::vector<bool>(n, true), t0, t1);
      case K::False: return TimeVaryingSet::constant(std::vector<bool>(n, false), t0, t1);
      case K::Atom: return TimeVaryingSet::constant(labels.states_with(f->atom, q.state_names()), t0, t1);
      case K::Not: return truth(f->left, t0, t1).complement();
      case K::And: {
        auto a = truth(f->left, t0, t1), b = truth(f->right, t0, t1);
        warn_incompatible(a, b, to_string(f), opts.zero_tol, rep);
        return a.intersect(b);
      }
      case K::Or: {
        auto a = truth(f->left, t0, t1), b = truth(f->right, t0, t1);
        warn_incompatible(a, b, to_string(f), opts.zero_tol, rep);
        return a.complement().intersect(b.complement()).complement();
      }
      case K::Next:
      case K::Until: {
        const TimeFunction pf = probability(f, t0, t1);
        ThresholdReport tr;
        tr.formula = to_string(f);
        auto set = threshold(pf, f->p, f->cmp, t0, t1, opts, &tr);
        rep.thresholds.push_back(std::move(tr));
        return set;
      }
    }
    throw std::logic_error("unknown formula kind");
  }

  TimeFunction probability(const Csl& f, double t0, double t1) {
    ReachOptions ro = opts.reach;
    ro.warnings = &rep.warnings;
    if (f->kind == CslNode::Kind::Next) {
      const auto goal = truth(f->left, t0, t1 + f->t2);
      return next_fn(q, goal, f->t1, f->t2, t0, t1, opts.transient);
    }
    if (f->kind != CslNode::Kind::Until) throw std::invalid_argument("not a probabilistic operator");
    const double ta = f->t1, tb = f->t2;
    const auto stay = truth(f->left, t0, t1 + tb), goal = truth(f->right, t0, t1 + tb);
    warn_incompatible(stay, goal, to_string(f), opts.zero_tol, rep);
    const auto unsafe = stay.complement();
    if (ta == 0.0) return reach_tv(q, goal, unsafe, tb, t0, t1, ro);
    // remain in phi1 for ta, then reach phi2 within tb - ta from wherever the agent is
    const TimeFunction second = reach_tv(q, goal, unsafe, tb - ta, t0 + ta, t1 + ta, ro);
    const auto none = TimeVaryingSet::constant(std::vector<bool>(q.size(), false), t0, t1 + tb);
    return reach_tv(q, none, unsafe, ta, t0, t1, ro, &second);
  }
};

}  // namespace

CheckResult check(const Generator& q, const Labelling& labels, const Csl& f, double t0, double t1,
                  const CheckOptions& opts) {
  if (t1 < t0) throw std::invalid_argument("check needs t0 <= t1");
  q.require_domain(t0, t1 + time_depth(f));
  CheckResult out;
  Checker c{q, labels, opts, out.report};
  if (f->is_probabilistic()) {
    out.probability = c.probability(f, t0, t1);
    ThresholdReport tr;
    tr.formula = to_string(f);
    out.truth = threshold(*out.probability, f->p, f->cmp, t0, t1, opts, &tr);
    out.report.thresholds.push_back(std::move(tr));
  } else {
    out.truth = c.truth(f, t0, t1);
  }
  return out;
}

TimeFunction probability_fn(const Generator& q, const Labelling& labels, const Csl& f, double t0, double t1,
                            const CheckOptions& opts, RobustnessReport* report) {
  if (t1 < t0) throw std::invalid_argument("probability_fn needs t0 <= t1");
  if (!f->is_probabilistic()) throw std::invalid_argument("probability_fn needs a probabilistic operator");
  q.require_domain(t0, t1 + time_depth(f));
  RobustnessReport local;
  Checker c{q, labels, opts, report ? *report : local};
  return c.probability(f, t0, t1);
}

}  // namespace fluidmc
