#include "fluidmc/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace fluidmc {

std::string Diagnostic::str() const {
  std::ostringstream os;
  if (line > 0) os << line << ":" << column << ": ";
  os << message;
  return os.str();
}

namespace {
std::string join_diags(const std::vector<Diagnostic>& d) {
  std::string s;
  for (const auto& x : d) {
    if (!s.empty()) s += "\n";
    s += x.str();
  }
  return s;
}
}  // namespace

DiagnosticError::DiagnosticError(std::vector<Diagnostic> diags)
    : std::runtime_error(join_diags(diags)), diags_(std::move(diags)) {}

StepSizeUnderflow::StepSizeUnderflow(double t, double h)
    : NumericError("step size underflow at t=" + std::to_string(t) + " (h=" + std::to_string(h) + ")"),
      t_(t) {}

// ---------------------------------------------------------------------------
// Model helpers

std::vector<int> Transition::update_vector(std::size_t n_states) const {
  std::vector<int> v(n_states, 0);
  for (const auto& r : rules) {
    v[static_cast<std::size_t>(r.target)] += r.multiplicity;
    v[static_cast<std::size_t>(r.source)] -= r.multiplicity;
  }
  return v;
}

int Transition::multiplicity(int source, int target) const {
  int m = 0;
  for (const auto& r : rules)
    if (r.source == source && r.target == target) m += r.multiplicity;
  return m;
}

int Transition::consumed(int source) const {
  int m = 0;
  for (const auto& r : rules)
    if (r.source == source) m += r.multiplicity;
  return m;
}

const AgentRateDecl* Transition::agent_rate(int state) const {
  for (const auto& a : agent_rates)
    if (a.state == state) return &a;
  return nullptr;
}

std::optional<int> PopulationModel::state_index(std::string_view name) const {
  for (std::size_t i = 0; i < states.size(); ++i)
    if (states[i] == name) return static_cast<int>(i);
  return std::nullopt;
}

std::optional<int> PopulationModel::param_index(std::string_view name) const {
  for (std::size_t i = 0; i < param_names.size(); ++i)
    if (param_names[i] == name) return static_cast<int>(i);
  return std::nullopt;
}

double PopulationModel::rate(std::size_t transition, std::span<const double> x) const {
  return transitions[transition].rate->eval(x, param_values);
}

int PopulationModel::class_of(int state) const {
  for (std::size_t c = 0; c < classes.size(); ++c)
    if (std::find(classes[c].states.begin(), classes[c].states.end(), state) != classes[c].states.end())
      return static_cast<int>(c);
  return -1;
}

std::vector<int> PopulationModel::agent_states(int state) const {
  int c = class_of(state);
  if (c < 0) {
    std::vector<int> all(states.size());
    std::iota(all.begin(), all.end(), 0);
    if (!classes.empty()) {
      // states outside every declared class form one implicit class
      std::vector<int> rest;
      for (int s : all)
        if (class_of(s) < 0) rest.push_back(s);
      return rest;
    }
    return all;
  }
  return classes[static_cast<std::size_t>(c)].states;
}

bool structurally_equal(const PopulationModel& a, const PopulationModel& b) {
  if (a.states != b.states || a.param_names != b.param_names || a.param_values != b.param_values ||
      a.init != b.init || a.classes != b.classes || a.transitions.size() != b.transitions.size())
    return false;
  for (std::size_t t = 0; t < a.transitions.size(); ++t) {
    const auto& x = a.transitions[t];
    const auto& y = b.transitions[t];
    if (x.name != y.name || x.rules != y.rules || !Expr::equal(x.rate, y.rate) ||
        x.agent_rates.size() != y.agent_rates.size())
      return false;
    for (std::size_t k = 0; k < x.agent_rates.size(); ++k) {
      if (x.agent_rates[k].state != y.agent_rates[k].state ||
          !Expr::equal(x.agent_rates[k].rate, y.agent_rates[k].rate) ||
          !Expr::equal(x.agent_rates[k].boundary, y.agent_rates[k].boundary))
        return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Lexer

namespace {

enum class Tok { Ident, Number, Punct, Arrow, Empty, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0.0;
  int line = 1;
  int column = 1;
};

std::vector<Token> lex(std::string_view src, std::vector<Diagnostic>& diags) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < src.size()) {
    char c = src[i];
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    Token t;
    t.line = line;
    t.column = col;
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      t.kind = Tok::Ident;
      t.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c)) || (c == '.' && i + 1 < src.size() &&
                                                              std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i;
      while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.')) ++j;
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          j = k;
          while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
        }
      }
      t.kind = Tok::Number;
      t.text = std::string(src.substr(i, j - i));
      try {
        std::size_t used = 0;
        t.number = std::stod(t.text, &used);
        if (used != t.text.size()) throw std::invalid_argument(t.text);
      } catch (const std::exception&) {
        diags.push_back({line, col, "malformed number '" + t.text + "'"});
      }
      advance(j - i);
    } else if (c == '-' && i + 1 < src.size() && src[i + 1] == '>') {
      t.kind = Tok::Arrow;
      t.text = "->";
      advance(2);
    } else if (src.substr(i, 3) == "\xE2\x88\x85") {  // U+2205 empty set
      t.kind = Tok::Empty;
      t.text = "\xE2\x88\x85";
      advance(3);
    } else if (std::string_view("{}();:,=*+-/^").find(c) != std::string_view::npos) {
      t.kind = Tok::Punct;
      t.text = std::string(1, c);
      advance(1);
    } else {
      diags.push_back({line, col, std::string("unexpected character '") + c + "'"});
      advance(1);
      continue;
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.kind = Tok::End;
  end.line = line;
  end.column = col;
  out.push_back(end);
  return out;
}

// ---------------------------------------------------------------------------
// Parser

struct SyntaxError {
  Diagnostic diag;
};

class Parser {
 public:
  Parser(std::vector<Token> toks, std::vector<Diagnostic>& diags) : toks_(std::move(toks)), diags_(diags) {}

  PopulationModel run() {
    while (peek().kind != Tok::End) {
      try {
        statement();
      } catch (const SyntaxError& e) {
        diags_.push_back(e.diag);
        recover();
      }
    }
    if (model_.init.size() < model_.states.size()) model_.init.resize(model_.states.size(), 0.0);
    return std::move(model_);
  }

 private:
  const Token& peek(std::size_t k = 0) const { return toks_[std::min(pos_ + k, toks_.size() - 1)]; }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  bool is_punct(const char* p, std::size_t k = 0) const {
    return peek(k).kind == Tok::Punct && peek(k).text == p;
  }
  bool is_word(const char* w) const { return peek().kind == Tok::Ident && peek().text == w; }

  [[noreturn]] void fail(const Token& t, std::string msg) const { throw SyntaxError{{t.line, t.column, std::move(msg)}}; }
  void error(const Token& t, std::string msg) { diags_.push_back({t.line, t.column, std::move(msg)}); }

  void expect(const char* p) {
    if (!is_punct(p)) fail(peek(), std::string("expected '") + p + "' but found '" + describe(peek()) + "'");
    next();
  }
  static std::string describe(const Token& t) { return t.kind == Tok::End ? "end of input" : t.text; }
  const Token& ident(const char* what) {
    if (peek().kind != Tok::Ident) fail(peek(), std::string("expected ") + what + " but found '" + describe(peek()) + "'");
    return next();
  }

  void recover() {
    int depth = 0;
    while (peek().kind != Tok::End) {
      if (is_punct("{")) ++depth;
      if (is_punct("}")) {
        next();
        if (--depth <= 0) return;
        continue;
      }
      if (is_punct(";") && depth == 0) {
        next();
        return;
      }
      next();
    }
  }

  void statement() {
    const Token& kw = ident("a statement keyword");
    if (kw.text == "states") {
      while (!is_punct(";")) {
        if (is_punct(",")) {
          next();
          continue;
        }
        const Token& s = ident("a state name");
        if (model_.state_index(s.text))
          error(s, "duplicate state '" + s.text + "'");
        else
          model_.states.push_back(s.text);
      }
      next();
    } else if (kw.text == "param") {
      const Token& name = ident("a parameter name");
      expect("=");
      double v = constant();
      expect(";");
      if (model_.param_index(name.text)) {
        error(name, "duplicate parameter '" + name.text + "'");
      } else if (name.text.size() > 1 && name.text[0] == 'x' && model_.state_index(name.text.substr(1))) {
        error(name, "parameter '" + name.text + "' shadows the occupancy variable of state '" + name.text.substr(1) + "'");
      } else {
        model_.param_names.push_back(name.text);
        model_.param_values.push_back(v);
      }
    } else if (kw.text == "init") {
      const Token& name = ident("a state name");
      expect("=");
      double v = constant();
      expect(";");
      auto s = model_.state_index(name.text);
      if (!s) {
        error(name, "undeclared state '" + name.text + "'");
      } else {
        model_.init.resize(model_.states.size(), 0.0);
        model_.init[static_cast<std::size_t>(*s)] = v;
      }
    } else if (kw.text == "class") {
      StateClass cls;
      cls.name = ident("a class name").text;
      expect("=");
      while (!is_punct(";")) {
        if (is_punct(",")) {
          next();
          continue;
        }
        const Token& s = ident("a state name");
        auto idx = model_.state_index(s.text);
        if (!idx)
          error(s, "undeclared state '" + s.text + "'");
        else if (model_.class_of(*idx) >= 0)
          error(s, "state '" + s.text + "' already belongs to a class");
        else
          cls.states.push_back(*idx);
      }
      next();
      model_.classes.push_back(std::move(cls));
    } else if (kw.text == "transition") {
      transition(kw);
    } else {
      fail(kw, "unknown statement '" + kw.text + "'");
    }
  }

  void transition(const Token& kw) {
    Transition tr;
    tr.line = kw.line;
    const Token& name = ident("a transition name");
    tr.name = name.text;
    for (const auto& t : model_.transitions)
      if (t.name == tr.name) error(name, "duplicate transition '" + tr.name + "'");
    expect("{");
    bool have_rules = false;
    while (!is_punct("}")) {
      const Token& clause = ident("'rules', 'rate' or 'agent'");
      if (clause.text == "rules") {
        expect(":");
        have_rules = true;
        while (true) {
          rule(tr);
          if (is_punct(",")) {
            next();
            continue;
          }
          break;
        }
        expect(";");
      } else if (clause.text == "rate") {
        expect(":");
        tr.rate = expr();
        expect(";");
      } else if (clause.text == "agent") {
        const Token& s = ident("a state name");
        auto idx = model_.state_index(s.text);
        if (!idx) fail(s, "undeclared state '" + s.text + "'");
        expect(":");
        AgentRateDecl decl;
        decl.state = *idx;
        decl.rate = expr();
        if (is_word("boundary")) {
          next();
          expect("(");
          const Token& v = ident("an occupancy variable");
          if (v.text != "x" + s.text) fail(v, "boundary condition must refer to x" + s.text);
          expect("=");
          if (peek().kind != Tok::Number || peek().number != 0.0) fail(peek(), "boundary condition must be '" + v.text + "=0'");
          next();
          expect(":");
          decl.boundary = expr();
          expect(")");
        }
        expect(";");
        if (tr.agent_rate(decl.state)) error(s, "duplicate agent rate for state '" + s.text + "'");
        tr.agent_rates.push_back(std::move(decl));
      } else {
        fail(clause, "unknown transition clause '" + clause.text + "'");
      }
    }
    next();
    if (!have_rules) error(kw, "transition '" + tr.name + "' has no rules");
    if (!tr.rate) error(kw, "transition '" + tr.name + "' has no rate");
    for (const auto& a : tr.agent_rates)
      if (tr.consumed(a.state) == 0)
        error(kw, "agent rate for state '" + model_.states[static_cast<std::size_t>(a.state)] +
                      "' but no rule of transition '" + tr.name + "' leaves it");
    if (tr.rate && have_rules) model_.transitions.push_back(std::move(tr));
  }

  void rule(Transition& tr) {
    const Token& start = peek();
    auto empty_side = [&]() {
      return peek().kind == Tok::Empty || (peek().kind == Tok::Number && peek().number == 0.0) ||
             is_punct(",") || is_punct(";");
    };
    if (peek().kind == Tok::Arrow || peek().kind == Tok::Empty ||
        (peek().kind == Tok::Number && peek().number == 0.0)) {
      if (peek().kind != Tok::Arrow) next();
      fail(start, "birth rule rejected: rules of the form \xE2\x88\x85 -> i are not supported (constant population, no birth/death)");
    }
    const Token& src = ident("a source state");
    if (peek().kind != Tok::Arrow) fail(peek(), "expected '->' in update rule");
    next();
    if (empty_side())
      fail(start, "death rule rejected: rules of the form i -> \xE2\x88\x85 are not supported (constant population, no birth/death)");
    const Token& dst = ident("a target state");
    int mult = 1;
    if (is_punct("*")) {
      next();
      const Token& m = peek();
      if (m.kind != Tok::Number || m.number < 1 || std::floor(m.number) != m.number)
        fail(m, "rule multiplicity must be a positive integer");
      mult = static_cast<int>(m.number);
      next();
    }
    auto si = model_.state_index(src.text);
    auto di = model_.state_index(dst.text);
    if (!si) fail(src, "undeclared state '" + src.text + "'");
    if (!di) fail(dst, "undeclared state '" + dst.text + "'");
    if (*si == *di) fail(start, "self-loop rule rejected: '" + src.text + " -> " + dst.text + "'");
    int cs = model_.class_of(*si), cd = model_.class_of(*di);
    if (cs != cd) fail(start, "rule '" + src.text + " -> " + dst.text + "' crosses the class partition");
    for (auto& r : tr.rules) {
      if (r.source == *si && r.target == *di) {
        r.multiplicity += mult;
        return;
      }
    }
    tr.rules.push_back({*si, *di, mult});
  }

  double constant() {
    const Token& at = peek();
    ExprPtr e = expr();
    std::vector<int> vars;
    e->collect_vars(vars);
    if (!vars.empty()) fail(at, "occupancy variables are not allowed in constant expressions");
    double v = e->eval({}, model_.param_values);
    if (!std::isfinite(v)) fail(at, "constant expression is not finite");
    return v;
  }

  // expr := term {('+'|'-') term}
  ExprPtr expr() {
    ExprPtr lhs = term();
    while (is_punct("+") || is_punct("-")) {
      auto k = next().text == "+" ? Expr::Kind::Add : Expr::Kind::Sub;
      lhs = Expr::binary(k, lhs, term());
    }
    return lhs;
  }
  ExprPtr term() {
    ExprPtr lhs = unary();
    while (is_punct("*") || is_punct("/")) {
      auto k = next().text == "*" ? Expr::Kind::Mul : Expr::Kind::Div;
      lhs = Expr::binary(k, lhs, unary());
    }
    return lhs;
  }
  ExprPtr unary() {
    if (is_punct("-")) {
      next();
      return Expr::unary(Expr::Kind::Neg, unary());
    }
    ExprPtr base = primary();
    if (is_punct("^")) {
      next();
      return Expr::binary(Expr::Kind::Pow, base, unary());
    }
    return base;
  }
  ExprPtr primary() {
    const Token& t = peek();
    if (t.kind == Tok::Number) {
      next();
      return Expr::literal(t.number);
    }
    if (is_punct("(")) {
      next();
      ExprPtr e = expr();
      expect(")");
      return e;
    }
    if (t.kind != Tok::Ident) fail(t, "expected an expression but found '" + describe(t) + "'");
    next();
    if (is_punct("(")) {
      next();
      std::vector<ExprPtr> args;
      if (!is_punct(")")) {
        args.push_back(expr());
        while (is_punct(",")) {
          next();
          args.push_back(expr());
        }
      }
      expect(")");
      return call(t, args);
    }
    if (auto p = model_.param_index(t.text)) return Expr::param(*p);
    if (t.text.size() > 1 && t.text[0] == 'x')
      if (auto s = model_.state_index(t.text.substr(1))) return Expr::var(*s);
    fail(t, "undeclared identifier '" + t.text + "'");
  }
  ExprPtr call(const Token& fn, const std::vector<ExprPtr>& args) {
    const std::string& f = fn.text;
    if (f == "min" || f == "max") {
      if (args.size() < 2) fail(fn, f + " needs at least two arguments");
      auto k = f == "min" ? Expr::Kind::Min : Expr::Kind::Max;
      ExprPtr acc = args[0];
      for (std::size_t i = 1; i < args.size(); ++i) acc = Expr::binary(k, acc, args[i]);
      return acc;
    }
    if (f == "pow") {
      if (args.size() != 2) fail(fn, "pow needs two arguments");
      return Expr::binary(Expr::Kind::Pow, args[0], args[1]);
    }
    if (f == "exp" || f == "log") {
      if (args.size() != 1) fail(fn, f + " needs one argument");
      return Expr::unary(f == "exp" ? Expr::Kind::Exp : Expr::Kind::Log, args[0]);
    }
    fail(fn, "unknown function '" + f + "'");
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::vector<Diagnostic>& diags_;
  PopulationModel model_;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

PopulationModel parse_model(std::string_view text) {
  std::vector<Diagnostic> diags;
  auto toks = lex(text, diags);
  Parser parser(std::move(toks), diags);
  PopulationModel m = parser.run();
  if (!diags.empty()) {
    std::stable_sort(diags.begin(), diags.end(), [](const Diagnostic& a, const Diagnostic& b) {
      return a.line != b.line ? a.line < b.line : a.column < b.column;
    });
    throw DiagnosticError(std::move(diags));
  }
  return m;
}

PopulationModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DiagnosticError({{0, 0, "cannot open model file '" + path + "'"}});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model(ss.str());
}

std::string print_model(const PopulationModel& m) {
  std::ostringstream os;
  os << "states";
  for (const auto& s : m.states) os << " " << s;
  os << ";\n";
  for (std::size_t p = 0; p < m.param_names.size(); ++p)
    os << "param " << m.param_names[p] << " = " << num(m.param_values[p]) << ";\n";
  for (std::size_t s = 0; s < m.states.size(); ++s)
    if (m.init[s] != 0.0) os << "init " << m.states[s] << " = " << num(m.init[s]) << ";\n";
  for (const auto& c : m.classes) {
    os << "class " << c.name << " =";
    for (int s : c.states) os << " " << m.states[static_cast<std::size_t>(s)];
    os << ";\n";
  }
  for (const auto& t : m.transitions) {
    os << "transition " << t.name << " {\n  rules: ";
    for (std::size_t r = 0; r < t.rules.size(); ++r) {
      if (r) os << ", ";
      os << m.states[static_cast<std::size_t>(t.rules[r].source)] << " -> "
         << m.states[static_cast<std::size_t>(t.rules[r].target)];
      if (t.rules[r].multiplicity != 1) os << " *" << t.rules[r].multiplicity;
    }
    os << ";\n  rate: " << to_string(t.rate, m.states, m.param_names) << ";\n";
    for (const auto& a : t.agent_rates) {
      const auto& sn = m.states[static_cast<std::size_t>(a.state)];
      os << "  agent " << sn << ": " << to_string(a.rate, m.states, m.param_names);
      if (a.boundary) os << " boundary(x" << sn << "=0: " << to_string(a.boundary, m.states, m.param_names) << ")";
      os << ";\n";
    }
    os << "}\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Sampling and validation

std::vector<std::vector<double>> simplex_samples(const PopulationModel& m, std::size_t count) {
  const std::size_t n = m.n_states();
  std::vector<std::vector<double>> out;
  if (n == 0) return out;

  // groups: declared classes plus the implicit rest, each with its initial mass
  std::vector<std::vector<int>> groups;
  for (const auto& c : m.classes) groups.push_back(c.states);
  std::vector<int> rest;
  for (std::size_t s = 0; s < n; ++s)
    if (m.class_of(static_cast<int>(s)) < 0) rest.push_back(static_cast<int>(s));
  if (!rest.empty()) groups.push_back(rest);
  std::vector<double> mass;
  for (const auto& g : groups) {
    double w = 0;
    for (int s : g) w += m.init[static_cast<std::size_t>(s)];
    mass.push_back(m.classes.empty() ? 1.0 : w);
  }

  std::vector<int> primes;
  for (int c = 2; primes.size() < n; ++c) {
    bool prime = true;
    for (int p : primes)
      if (c % p == 0) prime = false;
    if (prime) primes.push_back(c);
  }
  auto halton = [](std::size_t index, int base) {
    double f = 1.0, r = 0.0;
    while (index > 0) {
      f /= base;
      r += f * static_cast<double>(index % static_cast<std::size_t>(base));
      index /= static_cast<std::size_t>(base);
    }
    return r;
  };

  for (std::size_t k = 1; k <= count; ++k) {
    std::vector<double> x(n, 0.0);
    for (std::size_t g = 0; g < groups.size(); ++g) {
      double sum = 0.0;
      for (int s : groups[g]) {
        double u = halton(k, primes[static_cast<std::size_t>(s)]);
        x[static_cast<std::size_t>(s)] = -std::log(u);
        sum += x[static_cast<std::size_t>(s)];
      }
      for (int s : groups[g]) x[static_cast<std::size_t>(s)] *= mass[g] / sum;
    }
    out.push_back(std::move(x));
  }
  // vertices of the product region: every group concentrated in one state
  std::vector<std::size_t> pick(groups.size(), 0);
  while (out.size() < count + 4096) {
    std::vector<double> x(n, 0.0);
    for (std::size_t g = 0; g < groups.size(); ++g)
      x[static_cast<std::size_t>(groups[g][pick[g]])] = mass[g];
    out.push_back(std::move(x));
    std::size_t g = 0;
    for (; g < groups.size(); ++g) {
      if (++pick[g] < groups[g].size()) break;
      pick[g] = 0;
    }
    if (g == groups.size()) break;
  }
  return out;
}

std::vector<Diagnostic> validate(const PopulationModel& m) {
  std::vector<Diagnostic> d;
  const std::size_t n = m.n_states();
  double sum = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    if (m.init[s] < 0.0) d.push_back({0, 0, "initial occupancy of '" + m.states[s] + "' is negative"});
    sum += m.init[s];
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "occupancy sums to %.12g (must be 1)", sum);
    d.push_back({0, 0, buf});
  }
  for (std::size_t p = 0; p < m.param_values.size(); ++p)
    if (!std::isfinite(m.param_values[p]))
      d.push_back({0, 0, "parameter '" + m.param_names[p] + "' is not finite"});
  if (n == 0) {
    d.push_back({0, 0, "model declares no states"});
    return d;
  }

  auto samples = simplex_samples(m, 1000);
  for (std::size_t t = 0; t < m.transitions.size(); ++t) {
    const auto& tr = m.transitions[t];
    bool reported_neg = false, reported_nan = false;
    for (const auto& x : samples) {
      double r = m.rate(t, x);
      if (!std::isfinite(r) && !reported_nan) {
        d.push_back({tr.line, 1, "transition '" + tr.name + "': non-finite rate at sample point"});
        reported_nan = true;
      } else if (r < 0.0 && !reported_neg) {
        d.push_back({tr.line, 1, "transition '" + tr.name + "': negative rate at sample point"});
        reported_neg = true;
      }
    }
    for (const auto& a : tr.agent_rates) {
      const auto i = static_cast<std::size_t>(a.state);
      for (const auto& x : samples) {
        if (x[i] <= 1e-6) continue;
        double f = m.rate(t, x);
        double g = a.rate->eval(x, m.param_values);
        if (!(std::abs(x[i] * g - f) <= 1e-9 * (1.0 + std::abs(f)))) {
          d.push_back({tr.line, 1, "transition '" + tr.name + "': agent rate for '" + m.states[i] +
                                       "' does not factor the transition rate"});
          break;
        }
      }
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Single-agent rates

double SingleAgentRate::eval(std::span<const double> x, std::span<const double> params) const {
  if (boundary && x[static_cast<std::size_t>(source)] <= 0.0) return boundary->eval(x, params);
  return rate->eval(x, params);
}

std::vector<SingleAgentRate> single_agent_rates(const PopulationModel& m, int state) {
  std::vector<SingleAgentRate> out;
  for (std::size_t t = 0; t < m.transitions.size(); ++t) {
    const auto& tr = m.transitions[t];
    if (tr.consumed(state) == 0) continue;
    ExprPtr f;
    ExprPtr boundary;
    bool automatic = false;
    if (const auto* decl = tr.agent_rate(state)) {
      f = decl->rate;
      boundary = decl->boundary;
    } else {
      f = factor_out(tr.rate, state);
      automatic = true;
    }
    if (!f)
      throw NotSingleAgentCompatible("transition '" + tr.name + "' is not single-agent compatible for state '" +
                                     m.states[static_cast<std::size_t>(state)] +
                                     "': its rate has no factor x" + m.states[static_cast<std::size_t>(state)] +
                                     " and no explicit agent rate is declared");
    for (const auto& r : tr.rules) {
      if (r.source != state) continue;
      out.push_back({static_cast<int>(t), state, r.target, r.multiplicity, f, boundary, automatic});
    }
  }
  return out;
}

}  // namespace fluidmc
