#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fluidmc/agent.hpp"
#include "fluidmc/csl.hpp"
#include "fluidmc/error.hpp"
#include "fluidmc/fluid.hpp"
#include "fluidmc/model.hpp"
#include "fluidmc/next.hpp"
#include "fluidmc/reach.hpp"
#include "fluidmc/ssa.hpp"
#include "fluidmc/svg.hpp"
#include "fluidmc/transient.hpp"

namespace fluidmc::cli {

namespace {

using nlohmann::json;

constexpr const char* kVersion = "0.1.0";

/// A user-facing input problem (bad flag value, unknown state): exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<double> linspace(double a, double b, std::size_t points) {
  if (points < 1) throw UsageError("a grid needs at least one point");
  if (b < a) throw UsageError("grid end " + num(b) + " lies before its start " + num(a));
  std::vector<double> g;
  if (points == 1 || a == b) return {a};
  for (std::size_t k = 0; k < points; ++k)
    g.push_back(k + 1 == points ? b : a + (b - a) * static_cast<double>(k) / static_cast<double>(points - 1));
  return g;
}

// Exact name, else the unique candidate whose name ends in "_<name>", else in "<name>".
// Candidates default to every model state.
int resolve_state(const PopulationModel& m, const std::string& name, const std::vector<int>* among = nullptr) {
  if (auto i = m.state_index(name)) return *i;
  std::vector<int> all;
  if (!among) {
    for (std::size_t s = 0; s < m.n_states(); ++s) all.push_back(static_cast<int>(s));
    among = &all;
  }
  auto suffix = [&](bool underscore) {
    std::vector<int> hits;
    for (int s : *among) {
      const auto& full = m.states[static_cast<std::size_t>(s)];
      if (full.size() <= name.size() || full.compare(full.size() - name.size(), name.size(), name) != 0) continue;
      if (underscore && full[full.size() - name.size() - 1] != '_') continue;
      hits.push_back(s);
    }
    return hits;
  };
  auto hits = suffix(true);
  if (hits.empty()) hits = suffix(false);
  if (hits.size() == 1) return hits[0];
  if (hits.empty()) throw UsageError("unknown state '" + name + "'");
  std::string c;
  for (int h : hits) c += (c.empty() ? "" : ", ") + m.states[static_cast<std::size_t>(h)];
  throw UsageError("state name '" + name + "' is ambiguous (" + c + ")");
}

// ---------------------------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<json>> rows;

  void add(std::vector<json> row) { rows.push_back(std::move(row)); }
};

std::string cell(const json& v) {
  if (v.is_number_float()) return num(v.get<double>());
  if (v.is_number()) return v.dump();
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string to_csv(const Table& t) {
  std::string o;
  for (std::size_t i = 0; i < t.header.size(); ++i) o += (i ? "," : "") + t.header[i];
  o += '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) o += (i ? "," : "") + cell(r[i]);
    o += '\n';
  }
  return o;
}

// Settings shared by every subcommand.
struct Common {
  std::string model;
  std::string out;
  std::string format = "csv";
  std::string sidecar;
  std::string track;
  double rtol = 1e-10, atol = 1e-12;
  double fluid_rtol = 1e-8, fluid_atol = 1e-10;
};

class Context {
 public:
  Context(CLI::App* sub, const Common& c, std::ostream& out, std::ostream& err) : sub_(sub), c_(c), out_(out), err_(err) {}

  const PopulationModel& model() {
    if (!model_) model_ = load_model(c_.model);
    return *model_;
  }

  int track_state() {
    const auto& m = model();
    if (!c_.track.empty()) return resolve_state(m, c_.track);
    for (std::size_t s = 0; s < m.n_states(); ++s)
      if (m.init[s] > 0) return static_cast<int>(s);
    return 0;
  }

  std::shared_ptr<const FluidTrajectory> trajectory(double t_max) {
    if (!traj_ || traj_->t_max() < t_max) {
      FluidOptions fo;
      fo.rtol = c_.fluid_rtol;
      fo.atol = c_.fluid_atol;
      traj_ = std::make_shared<FluidTrajectory>(integrate_fluid(build_drift(model()), model().init, t_max, fo));
    }
    return traj_;
  }

  std::shared_ptr<AgentGenerator> generator(double t_max, int k = 1) {
    const int s = track_state();
    return std::make_shared<AgentGenerator>(model(), trajectory(t_max), tracked_states(model(), s), k);
  }

  // local index within the tracked class
  std::size_t local_index(const AgentGenerator& g, const std::string& name) {
    const auto& loc = g.local_states();
    const int s = model().state_index(name) ? *model().state_index(name) : resolve_state(model(), name, &loc);
    auto it = std::find(loc.begin(), loc.end(), s);
    if (it == loc.end())
      throw UsageError("state " + model().states[static_cast<std::size_t>(s)] + " is outside the tracked agent's class");
    return static_cast<std::size_t>(it - loc.begin());
  }

  std::vector<bool> local_set(const AgentGenerator& g, const std::string& list) {
    std::vector<bool> v(g.size(), false);
    for (const auto& n : split_list(list)) v[local_index(g, n)] = true;
    return v;
  }

  std::vector<bool> model_set(const std::string& list) {
    std::vector<bool> v(model().n_states(), false);
    for (const auto& n : split_list(list)) v[static_cast<std::size_t>(resolve_state(model(), n))] = true;
    return v;
  }

  TransientOptions transient() const { return {c_.rtol, c_.atol}; }
  ReachOptions reach() const {
    ReachOptions r;
    r.rtol = c_.rtol;
    r.atol = c_.atol;
    return r;
  }

  json metadata() const {
    json m;
    m["tool"] = "fluidmc";
    m["version"] = kVersion;
    m["command"] = sub_->get_name();
    json flags = json::object();
    for (const CLI::Option* o : sub_->get_options()) {
      if (o->count() == 0 || o->get_name() == "--help") continue;
      const auto& res = o->results();
      std::string key = o->get_name();
      if (res.size() == 1)
        flags[key] = res[0];
      else
        flags[key] = res;
    }
    m["flags"] = flags;
    m["tolerances"] = {{"rtol", c_.rtol}, {"atol", c_.atol}, {"fluid_rtol", c_.fluid_rtol}, {"fluid_atol", c_.fluid_atol}};
    return m;
  }

  void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << text;
  }

  // Emits the main table in the chosen format and the JSON sidecar.
  void emit(const Table& t, json extra = json::object(), const std::vector<PlotSeries>& plot = {},
            const PlotOptions& popts = {}) {
    json meta = metadata();
    for (auto it = extra.begin(); it != extra.end(); ++it) meta[it.key()] = it.value();
    std::string body;
    if (c_.format == "csv") {
      body = to_csv(t);
    } else if (c_.format == "json") {
      json doc;
      doc["metadata"] = meta;
      doc["columns"] = t.header;
      doc["rows"] = t.rows;
      body = doc.dump(2) + "\n";
    } else if (c_.format == "svg") {
      if (plot.empty()) throw UsageError("command '" + sub_->get_name() + "' has nothing to plot");
      body = emit_svg(plot, popts);
    } else {
      throw UsageError("unknown output format '" + c_.format + "'");
    }
    if (c_.out.empty() || c_.out == "-")
      out_ << body;
    else
      write_file(c_.out, body);
    std::string side = c_.sidecar;
    if (side.empty() && !c_.out.empty() && c_.out != "-" && c_.format != "json") side = c_.out + ".json";
    if (!side.empty()) write_file(side, meta.dump(2) + "\n");
  }

  std::ostream& out() { return out_; }
  std::ostream& err() { return err_; }
  const Common& common() const { return c_; }

 private:
  CLI::App* sub_;
  const Common& c_;
  std::ostream& out_;
  std::ostream& err_;
  std::optional<PopulationModel> model_;
  std::shared_ptr<const FluidTrajectory> traj_;
};

std::vector<PlotSeries> per_state_plot(const Table& t, std::size_t xcol, std::size_t scol, std::size_t ycol) {
  std::map<std::string, PlotSeries> by;
  std::vector<std::string> order;
  for (const auto& r : t.rows) {
    const std::string s = cell(r[scol]);
    if (!by.count(s)) {
      order.push_back(s);
      by[s].label = s;
    }
    by[s].x.push_back(r[xcol].get<double>());
    by[s].y.push_back(r[ycol].get<double>());
  }
  std::vector<PlotSeries> out;
  for (const auto& s : order) out.push_back(by[s]);
  return out;
}

json jumps_json(const TimeFunction& f, const std::vector<std::string>& names) {
  json arr = json::array();
  for (const auto& j : f.jumps(1e-9)) {
    json e;
    e["time"] = j.time;
    for (std::size_t i = 0; i < names.size(); ++i)
      if (std::abs(j.left[i] - j.right[i]) > 1e-9) e["states"][names[i]] = {{"left", j.left[i]}, {"right", j.right[i]}};
    arr.push_back(e);
  }
  return arr;
}

// unsafe set from --unsafe or, when --safe is given, its complement without the goal
std::vector<bool> unsafe_set(Context& ctx, const AgentGenerator& g, const std::vector<bool>& goal,
                             const std::string& unsafe, const std::string& safe, bool safe_given) {
  if (!safe_given) return ctx.local_set(g, unsafe);
  auto s = ctx.local_set(g, safe);
  std::vector<bool> u(g.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = !s[i] && !goal[i];
  return u;
}

TimeVaryingSet tv_from_json(Context& ctx, const AgentGenerator& g, const json& j, double a, double b) {
  TimeVaryingSet set(g.size(), a, b);
  if (j.is_null()) return set;
  if (!j.is_object()) throw UsageError("time-varying set must be an object of state -> {initial, switches}");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::size_t s = ctx.local_index(g, it.key());
    const auto& v = it.value();
    bool initial = v.value("initial", false);
    std::vector<double> sw = v.value("switches", std::vector<double>{});
    std::vector<double> kept;
    for (double t : sw) {
      if (t <= a) {
        initial = !initial;  // switches before the window fold into the initial value
        continue;
      }
      if (t <= b) kept.push_back(t);
    }
    set.set(s, initial, kept);
  }
  return set;
}

// ---------------------------------------------------------------------------
// commands

struct Flags {
  double t_max = 100, t0 = 0, horizon = 50;
  std::size_t points = 101;
  std::vector<double> t0_range{0, 0};
  std::vector<double> window{0, 1};
  std::string goal, unsafe, safe, from_state, times, tv_file, csl, labels, tracked;
  int N = 150, k = 1;
  std::size_t R = 10000, replica = 0;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  bool transient_mode = false, reach_mode = false, vs_horizon = false, two_sided = false;
  double zero_tol = 1e-9, deriv_tol = 1e-6, plateau_tol = 1e-9;
  double max_discrepancy = -1;
};

int cmd_validate(Context& ctx) {
  const auto diags = validate(ctx.model());
  for (const auto& d : diags) ctx.err() << ctx.common().model << ":" << d.str() << "\n";
  return diags.empty() ? 0 : 1;
}

int cmd_fluid(Context& ctx, const Flags& f) {
  auto traj = ctx.trajectory(f.t_max);
  const auto& m = ctx.model();
  Table t;
  t.header.push_back("t");
  for (const auto& s : m.states) t.header.push_back(s);
  std::vector<PlotSeries> plot(m.n_states());
  for (std::size_t s = 0; s < m.n_states(); ++s) plot[s].label = m.states[s];
  for (double x : linspace(0, f.t_max, f.points)) {
    auto v = traj->eval(x);
    std::vector<json> row{x};
    for (std::size_t s = 0; s < v.size(); ++s) {
      row.push_back(v[s]);
      plot[s].x.push_back(x);
      plot[s].y.push_back(v[s]);
    }
    t.add(row);
  }
  json ev = json::array(), contacts = json::array();
  for (const auto& e : traj->events()) ev.push_back({{"time", e.time}, {"function", e.function}, {"label", e.label}});
  for (const auto& e : traj->contacts()) contacts.push_back({{"time", e.time}, {"function", e.function}, {"label", e.label}});
  PlotOptions po;
  po.title = "fluid limit";
  po.y_label = "occupancy";
  ctx.emit(t, {{"events", ev}, {"contacts", contacts}, {"steps", traj->steps()}}, plot, po);
  return 0;
}

int cmd_generator(Context& ctx, const Flags& f) {
  std::vector<double> times;
  if (!f.times.empty()) {
    for (const auto& s : split_list(f.times)) {
      try {
        times.push_back(std::stod(s));
      } catch (const std::exception&) {
        throw UsageError("bad time value '" + s + "' in --times");
      }
    }
  } else {
    times = linspace(0, f.t_max, f.points);
  }
  double tmax = 0;
  for (double x : times) tmax = std::max(tmax, x);
  auto g = ctx.generator(std::max(tmax, 1e-9), f.k);
  Table t;
  t.header = {"t", "from", "to", "rate"};
  Matrix q;
  for (double x : times) {
    g->eval(x, q);
    for (Eigen::Index i = 0; i < q.rows(); ++i)
      for (Eigen::Index j = 0; j < q.cols(); ++j)
        if (q(i, j) != 0.0)
          t.add({x, g->state_names()[static_cast<std::size_t>(i)], g->state_names()[static_cast<std::size_t>(j)], q(i, j)});
  }
  ctx.emit(t, {{"states", g->state_names()}, {"k", f.k}});
  return 0;
}

int cmd_transient(Context& ctx, const Flags& f) {
  if (f.t_max < f.t0) throw UsageError("--t-max must not lie before --t0");
  auto g = ctx.generator(f.t_max);
  const auto sol = forward(*g, f.t0, f.t_max, ctx.transient());
  std::vector<std::size_t> rows;
  if (!f.from_state.empty())
    rows.push_back(ctx.local_index(*g, f.from_state));
  else
    for (std::size_t i = 0; i < g->size(); ++i) rows.push_back(i);
  Table t;
  t.header = {"t", "from", "to", "prob"};
  for (double x : linspace(f.t0, f.t_max, f.points)) {
    const Matrix pi = sol.at(x);
    for (std::size_t i : rows)
      for (std::size_t j = 0; j < g->size(); ++j)
        t.add({x, g->state_names()[i], g->state_names()[j], pi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))});
  }
  std::vector<PlotSeries> plot;
  if (rows.size() == 1) plot = per_state_plot(t, 0, 2, 3);
  PlotOptions po;
  po.title = "transient probabilities";
  ctx.emit(t, {{"steps", sol.steps()}}, plot, po);
  return 0;
}

SimConfig sim_config(Context& ctx, const Flags& f, double horizon) {
  SimConfig c;
  c.N = f.N;
  c.horizon = horizon;
  c.replicas = f.R;
  c.seed = f.seed;
  c.threads = f.threads;
  if (!f.tracked.empty())
    for (const auto& s : split_list(f.tracked)) c.tracked.push_back(resolve_state(ctx.model(), s));
  else
    c.tracked.push_back(ctx.track_state());
  return c;
}

int cmd_simulate(Context& ctx, const Flags& f) {
  const auto& m = ctx.model();
  auto cfg = sim_config(ctx, f, f.horizon);
  const auto path = simulate(m, cfg, f.replica);
  Table t;
  t.header = {"t", "transition"};
  for (const auto& s : m.states) t.header.push_back(s);
  for (std::size_t a = 0; a < cfg.tracked.size(); ++a) t.header.push_back("tracked" + std::to_string(a + 1));
  for (std::size_t k = 0; k < path.times.size(); ++k) {
    std::vector<json> row{path.times[k], path.fired[k] < 0 ? std::string("start")
                                                           : m.transitions[static_cast<std::size_t>(path.fired[k])].name};
    for (int c : path.counts[k]) row.push_back(c);
    for (int s : path.tracked[k]) row.push_back(m.states[static_cast<std::size_t>(s)]);
    t.add(row);
  }
  ctx.emit(t, {{"seed", f.seed}, {"replica", f.replica}, {"absorbed", path.absorbed}, {"jumps", path.times.size() - 1}});
  return 0;
}

json series_json(const EstimateSeries& e) {
  return {{"label", e.label}, {"attempted", e.attempted}, {"replicas", e.replicas}};
}

int cmd_estimate(Context& ctx, const Flags& f) {
  const auto& m = ctx.model();
  if (f.reach_mode) {
    auto g = ctx.generator(1e-9);  // only used to resolve class membership
    const auto goal_l = ctx.local_set(*g, f.goal);
    const auto unsafe_l = unsafe_set(ctx, *g, goal_l, f.unsafe, f.safe, !f.safe.empty());
    std::vector<bool> goal(m.n_states(), false), unsafe(m.n_states(), false);
    for (std::size_t i = 0; i < g->size(); ++i) {
      goal[static_cast<std::size_t>(g->local_states()[i])] = goal_l[i];
      unsafe[static_cast<std::size_t>(g->local_states()[i])] = unsafe_l[i];
    }
    const int start = f.from_state.empty() ? ctx.track_state() : resolve_state(m, f.from_state);
    EstimateSeries e;
    std::string xname;
    if (f.vs_horizon) {
      auto cfg = sim_config(ctx, f, f.t0_range[0] + f.horizon);
      e = estimate_reach_horizon(m, cfg, goal, unsafe, start, f.t0_range[0], linspace(0, f.horizon, f.points));
      xname = "T";
    } else {
      auto cfg = sim_config(ctx, f, f.t0_range[1] + f.horizon);
      e = estimate_reach(m, cfg, goal, unsafe, start, linspace(f.t0_range[0], f.t0_range[1], f.points), f.horizon);
      xname = "t0";
    }
    Table t;
    t.header = {xname, "p_hat", "ci_lo", "ci_hi"};
    for (std::size_t k = 0; k < e.grid.size(); ++k) t.add({e.grid[k], e.p[k], e.lo[k], e.hi[k]});
    PlotSeries ps{e.label, e.grid, e.p, e.lo, e.hi};
    PlotOptions po;
    po.title = "estimated reachability";
    po.x_label = xname;
    ctx.emit(t, {{"seed", f.seed}, {"estimate", series_json(e)}}, {ps}, po);
    return 0;
  }
  auto cfg = sim_config(ctx, f, f.t_max);
  const auto grid = linspace(0, f.t_max, f.points);
  const auto est = estimate_transient(m, cfg, grid);
  const auto cls = tracked_states(m, cfg.tracked[0]);
  Table t;
  t.header = {"t", "state", "p_hat", "ci_lo", "ci_hi"};
  std::vector<PlotSeries> plot;
  json info = json::array();
  for (int s : cls) {
    const auto& e = est[static_cast<std::size_t>(s)];
    for (std::size_t k = 0; k < grid.size(); ++k) t.add({grid[k], e.label, e.p[k], e.lo[k], e.hi[k]});
    plot.push_back({e.label, e.grid, e.p, e.lo, e.hi});
    info.push_back(series_json(e));
  }
  PlotOptions po;
  po.title = "estimated transient probabilities";
  ctx.emit(t, {{"seed", f.seed}, {"estimates", info}}, plot, po);
  return 0;
}

int cmd_next(Context& ctx, const Flags& f) {
  const double a = f.t0_range[0], b = f.t0_range[1];
  if (f.window[0] < 0 || f.window[1] < f.window[0]) throw UsageError("--window needs 0 <= T1 <= T2");
  auto g = ctx.generator(b + f.window[1]);
  const auto goal = TimeVaryingSet::constant(ctx.local_set(*g, f.goal), a, b + f.window[1]);
  const auto fn = next_fn(*g, goal, f.window[0], f.window[1], a, b, ctx.transient());
  std::vector<std::size_t> states;
  if (!f.from_state.empty())
    states.push_back(ctx.local_index(*g, f.from_state));
  else
    for (std::size_t i = 0; i < g->size(); ++i) states.push_back(i);
  Table t;
  t.header = {"t0", "state", "prob"};
  for (double x : linspace(a, b, f.points)) {
    const auto v = fn.eval(x);
    for (std::size_t s : states) t.add({x, g->state_names()[s], v[s]});
  }
  PlotOptions po;
  po.title = "next-state probability";
  po.x_label = "t0";
  ctx.emit(t, {{"states", g->state_names()}}, per_state_plot(t, 0, 1, 2), po);
  return 0;
}

int cmd_reach(Context& ctx, const Flags& f) {
  const double a = f.t0_range[0], b = f.t0_range[1];
  if (f.horizon < 0) throw UsageError("--horizon must be nonnegative");
  auto g = ctx.generator(b + f.horizon);
  auto ro = ctx.reach();
  std::vector<std::string> warnings;
  ro.warnings = &warnings;
  ro.two_sided = f.two_sided;
  TimeVaryingSet goal, unsafe;
  bool constant = true;
  if (!f.tv_file.empty()) {
    std::ifstream in(f.tv_file);
    if (!in) throw UsageError("cannot open time-varying set file " + f.tv_file);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw DiagnosticError({Diagnostic{0, 0, f.tv_file + ": " + e.what()}});
    }
    goal = tv_from_json(ctx, *g, j.value("goal", json()), a, b + f.horizon);
    unsafe = tv_from_json(ctx, *g, j.value("unsafe", json()), a, b + f.horizon);
    constant = false;
  } else {
    const auto gl = ctx.local_set(*g, f.goal);
    goal = TimeVaryingSet::constant(gl, a, b + f.horizon);
    unsafe = TimeVaryingSet::constant(unsafe_set(ctx, *g, gl, f.unsafe, f.safe, !f.safe.empty()), a, b + f.horizon);
  }
  std::vector<std::size_t> states;
  if (!f.from_state.empty())
    states.push_back(ctx.local_index(*g, f.from_state));
  else
    for (std::size_t i = 0; i < g->size(); ++i) states.push_back(i);

  const auto started = std::chrono::steady_clock::now();
  TimeFunction fn;
  std::vector<double> grid;
  std::string xname = "t0";
  if (f.vs_horizon) {
    fn = reach_horizon(*g, goal, unsafe, a, f.horizon, ro);
    grid = linspace(0, f.horizon, f.points);
    xname = "T";
  } else {
    fn = constant ? reach_const(*g, goal.at(a), unsafe.at(a), f.horizon, a, b, ro)
                  : reach_tv(*g, goal, unsafe, f.horizon, a, b, ro);
    grid = linspace(a, b, f.points);
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  for (const auto& w : warnings) ctx.err() << "warning: " << w << "\n";
  Table t;
  t.header = {xname, "state", "prob"};
  for (double x : grid) {
    const auto v = fn.eval(x);
    for (std::size_t s : states) t.add({x, g->state_names()[s], v[s]});
  }
  PlotOptions po;
  po.title = "reachability probability";
  po.x_label = xname;
  ctx.emit(t, {{"jumps", jumps_json(fn, g->state_names())}, {"warnings", warnings}, {"solve_seconds", seconds}},
           per_state_plot(t, 0, 1, 2), po);
  return 0;
}

json report_json(const RobustnessReport& r, const std::vector<std::string>& names) {
  json th = json::array();
  for (const auto& tr : r.thresholds) {
    json c = json::array();
    for (const auto& x : tr.crossings)
      c.push_back({{"state", names[x.state]}, {"time", x.time}, {"bracket", {x.lo, x.hi}}, {"residual", x.residual},
                   {"derivative", x.derivative}, {"jump", x.jump}, {"near_tangential", x.tangential}, {"at_t0", x.at_t0}});
    json p = json::array();
    for (const auto& x : tr.plateaus) p.push_back({{"state", names[x.state]}, {"from", x.lo}, {"to", x.hi}});
    th.push_back({{"formula", tr.formula}, {"crossings", c}, {"plateaus", p}, {"near_tangential", tr.near_tangential()},
                  {"plateau", tr.plateau()}, {"zero_at_t0", tr.zero_at_t0()}});
  }
  return {{"thresholds", th}, {"warnings", r.warnings}, {"robust", r.robust()}};
}

int cmd_check(Context& ctx, const Flags& f) {
  if (f.csl.empty()) throw UsageError("--csl is required");
  Csl formula;
  try {
    formula = parse_csl(f.csl);
  } catch (const DiagnosticError& e) {
    for (const auto& d : e.diagnostics()) ctx.err() << "--csl:" << d.str() << "\n";
    return 1;
  }
  const double a = f.t0_range[0], b = f.t0_range[1];
  auto g = ctx.generator(b + time_depth(formula));
  const Labelling labels = f.labels.empty() ? Labelling() : Labelling::load(f.labels);
  CheckOptions co;
  co.zero_tol = f.zero_tol;
  co.deriv_tol = f.deriv_tol;
  co.plateau_tol = f.plateau_tol;
  co.reach = ctx.reach();
  co.transient = ctx.transient();
  const auto res = check(*g, labels, formula, a, b, co);
  const auto& names = g->state_names();

  std::size_t width = 5;
  for (const auto& n : names) width = std::max(width, n.size());
  ctx.out() << "formula: " << to_string(formula) << "\n";
  ctx.out() << std::left << std::setw(static_cast<int>(width) + 2) << "state" << "truth at t0=" << num(a) << "  switches\n";
  for (std::size_t s = 0; s < names.size(); ++s) {
    ctx.out() << std::left << std::setw(static_cast<int>(width) + 2) << names[s] << std::setw(14)
              << (res.truth.initial(s) ? "true" : "false");
    std::string sw;
    for (double x : res.truth.switches(s)) sw += (sw.empty() ? "" : " ") + num(x);
    ctx.out() << (sw.empty() ? "-" : sw) << "\n";
  }
  for (const auto& w : res.report.warnings) ctx.err() << "warning: " << w << "\n";
  if (!res.report.robust()) ctx.err() << "warning: some threshold comparison is not robust; see the report sidecar\n";

  // full truth as intervals
  Table t;
  t.header = {"state", "from", "to", "truth"};
  for (std::size_t s = 0; s < names.size(); ++s) {
    double lo = a;
    bool v = res.truth.initial(s);
    for (double x : res.truth.switches(s)) {
      t.add({names[s], lo, x, v});
      lo = x;
      v = !v;
    }
    t.add({names[s], lo, b, v});
  }
  json extra{{"formula", to_string(formula)}, {"report", report_json(res.report, names)}};
  if (res.probability) {
    json probe = json::array();
    for (double x : linspace(a, b, f.points)) probe.push_back({{"t0", x}, {"prob", res.probability->eval(x)}});
    extra["probability"] = probe;
  }
  Common c = ctx.common();
  // the truth CSV always goes to a file so the table above stays readable
  if (c.out.empty()) throw UsageError("check needs --out for the time-varying truth CSV");
  ctx.emit(t, extra);
  return 0;
}

int cmd_compare(Context& ctx, const Flags& f) {
  const auto& m = ctx.model();
  Table t;
  double sup = 0;
  std::size_t covered = 0, total = 0;
  std::vector<PlotSeries> plot;
  std::string xname;
  auto account = [&](double fluid, const EstimateSeries& e, std::size_t k) {
    sup = std::max(sup, std::abs(fluid - e.p[k]));
    covered += fluid >= e.lo[k] && fluid <= e.hi[k];
    ++total;
  };
  if (f.reach_mode) {
    const double a = f.t0_range[0], b = f.vs_horizon ? a : f.t0_range[1];
    auto g = ctx.generator(b + f.horizon);
    const auto gl = ctx.local_set(*g, f.goal);
    const auto ul = unsafe_set(ctx, *g, gl, f.unsafe, f.safe, !f.safe.empty());
    std::vector<bool> goal(m.n_states(), false), unsafe(m.n_states(), false);
    for (std::size_t i = 0; i < g->size(); ++i) {
      goal[static_cast<std::size_t>(g->local_states()[i])] = gl[i];
      unsafe[static_cast<std::size_t>(g->local_states()[i])] = ul[i];
    }
    const int start = f.from_state.empty() ? ctx.track_state() : resolve_state(m, f.from_state);
    const std::size_t sl = ctx.local_index(*g, m.states[static_cast<std::size_t>(start)]);
    auto cfg = sim_config(ctx, f, b + f.horizon);
    EstimateSeries e;
    TimeFunction fn;
    if (f.vs_horizon) {
      xname = "T";
      const auto G = TimeVaryingSet::constant(gl, a, a + f.horizon), U = TimeVaryingSet::constant(ul, a, a + f.horizon);
      fn = reach_horizon(*g, G, U, a, f.horizon, ctx.reach());
      e = estimate_reach_horizon(m, cfg, goal, unsafe, start, a, linspace(0, f.horizon, f.points));
    } else {
      xname = "t0";
      fn = reach_const(*g, gl, ul, f.horizon, a, b, ctx.reach());
      e = estimate_reach(m, cfg, goal, unsafe, start, linspace(a, b, f.points), f.horizon);
    }
    t.header = {xname, "fluid", "p_hat", "ci_lo", "ci_hi"};
    PlotSeries fl{"fluid", {}, {}};
    for (std::size_t k = 0; k < e.grid.size(); ++k) {
      const double v = fn.eval(e.grid[k], sl);
      t.add({e.grid[k], v, e.p[k], e.lo[k], e.hi[k]});
      fl.x.push_back(e.grid[k]);
      fl.y.push_back(v);
      account(v, e, k);
    }
    plot = {fl, {"ssa N=" + std::to_string(f.N), e.grid, e.p, e.lo, e.hi, true}};
  } else {
    xname = "t";
    auto g = ctx.generator(f.t_max);
    const int start = ctx.track_state();
    const std::size_t sl = ctx.local_index(*g, m.states[static_cast<std::size_t>(start)]);
    const auto sol = forward(*g, 0.0, f.t_max, ctx.transient());
    auto cfg = sim_config(ctx, f, f.t_max);
    cfg.tracked = {start};
    const auto grid = linspace(0, f.t_max, f.points);
    const auto est = estimate_transient(m, cfg, grid);
    t.header = {"t", "state", "fluid", "p_hat", "ci_lo", "ci_hi"};
    for (std::size_t j = 0; j < g->size(); ++j) {
      const auto& e = est[static_cast<std::size_t>(g->local_states()[j])];
      PlotSeries fl{"fluid " + e.label, {}, {}};
      for (std::size_t k = 0; k < grid.size(); ++k) {
        const double v = sol.at(grid[k])(static_cast<Eigen::Index>(sl), static_cast<Eigen::Index>(j));
        t.add({grid[k], e.label, v, e.p[k], e.lo[k], e.hi[k]});
        fl.x.push_back(grid[k]);
        fl.y.push_back(v);
        account(v, e, k);
      }
      plot.push_back(fl);
      plot.push_back({"ssa " + e.label, e.grid, e.p, e.lo, e.hi, true});
    }
  }
  const double coverage = total ? static_cast<double>(covered) / static_cast<double>(total) : 1.0;
  ctx.err() << "sup discrepancy " << num(sup) << ", CI coverage " << num(coverage) << " over " << total
            << " points\n";
  PlotOptions po;
  po.title = "fluid vs simulation";
  po.x_label = xname;
  ctx.emit(t, {{"sup_discrepancy", sup}, {"ci_coverage", coverage}, {"N", f.N}, {"R", f.R}, {"seed", f.seed}}, plot,
           po);
  if (f.max_discrepancy >= 0 && sup > f.max_discrepancy) {
    ctx.err() << "discrepancy exceeds --max-discrepancy " << num(f.max_discrepancy) << "\n";
    return 1;
  }
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fluid model checking of single agents in large populations", "fluidmc"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  Common common;
  Flags f;

  auto add_common = [&](CLI::App* s, bool fluid) {
    s->add_option("model", common.model, "Model file")->required()->check(CLI::ExistingFile);
    s->add_option("-o,--out", common.out, "Output file (default: standard output)");
    s->add_option("--format", common.format, "Output format")->check(CLI::IsMember({"csv", "json", "svg"}));
    s->add_option("--sidecar", common.sidecar, "Metadata JSON path (default: <out>.json)");
    if (fluid) {
      s->add_option("--track", common.track, "Start state that selects the tracked agent's class");
      s->add_option("--rtol", common.rtol, "Relative tolerance of the Kolmogorov solves");
      s->add_option("--atol", common.atol, "Absolute tolerance of the Kolmogorov solves");
      s->add_option("--fluid-rtol", common.fluid_rtol, "Relative tolerance of the fluid ODE");
      s->add_option("--fluid-atol", common.fluid_atol, "Absolute tolerance of the fluid ODE");
    }
  };
  auto add_ssa = [&](CLI::App* s) {
    s->add_option("--N", f.N, "Population size")->check(CLI::PositiveNumber);
    s->add_option("--R", f.R, "Number of replicas")->check(CLI::PositiveNumber);
    s->add_option("--seed", f.seed, "Random seed");
    s->add_option("--threads", f.threads, "Worker threads (capped by FLUIDMC_THREADS)");
    s->add_option("--tracked", f.tracked, "Comma-separated initial states of the tracked agents");
  };
  auto add_sets = [&](CLI::App* s) {
    s->add_option("--goal", f.goal, "Comma-separated goal states");
    auto* u = s->add_option("--unsafe", f.unsafe, "Comma-separated unsafe states");
    auto* sf = s->add_option("--safe", f.safe, "Comma-separated safe states (the rest, except goals, is unsafe)");
    u->excludes(sf);
    s->add_option("--from-state", f.from_state, "Report only this start state");
  };
  auto add_points = [&](CLI::App* s) { s->add_option("--points", f.points, "Grid points")->check(CLI::PositiveNumber); };

  auto* validate_cmd = app.add_subcommand("validate", "Parse and check a model; silent when clean");
  add_common(validate_cmd, false);

  auto* fluid_cmd = app.add_subcommand("fluid", "Fluid limit x(t) on a grid, with switching events");
  add_common(fluid_cmd, true);
  fluid_cmd->add_option("--t-max", f.t_max, "End time")->check(CLI::NonNegativeNumber);
  add_points(fluid_cmd);

  auto* gen_cmd = app.add_subcommand("generator", "Tracked-agent generator Q(t) entries");
  add_common(gen_cmd, true);
  gen_cmd->add_option("--times", f.times, "Comma-separated evaluation times");
  gen_cmd->add_option("--t-max", f.t_max, "End of the default grid");
  gen_cmd->add_option("--k", f.k, "Number of tracked agents")->check(CLI::PositiveNumber);
  add_points(gen_cmd);

  auto* sim_cmd = app.add_subcommand("simulate", "One exact simulation path of the N-agent system");
  add_common(sim_cmd, false);
  sim_cmd->add_option("--track", common.track, "Initial state of the tracked agent");
  add_ssa(sim_cmd);
  sim_cmd->add_option("--horizon", f.horizon, "End time")->check(CLI::NonNegativeNumber);
  sim_cmd->add_option("--replica", f.replica, "Replica index (selects the random stream)");

  auto* est_cmd = app.add_subcommand("estimate", "Statistical estimates from replicated simulation");
  add_common(est_cmd, false);
  est_cmd->add_option("--track", common.track, "Initial state of the tracked agent");
  add_ssa(est_cmd);
  add_sets(est_cmd);
  add_points(est_cmd);
  auto* et = est_cmd->add_flag("--transient", f.transient_mode, "Estimate the tracked agent's transient distribution");
  auto* er = est_cmd->add_flag("--reach", f.reach_mode, "Estimate a reachability probability");
  et->excludes(er);
  est_cmd->add_option("--t-max", f.t_max, "End time for --transient");
  est_cmd->add_option("--horizon", f.horizon, "Reachability horizon T");
  est_cmd->add_option("--t0-range", f.t0_range, "Initial-time range a b")->expected(2);
  est_cmd->add_flag("--vs-horizon", f.vs_horizon, "Vary the horizon in [0, T] at t0 = a instead");

  auto* tr_cmd = app.add_subcommand("transient", "Transient probabilities of the tracked agent");
  add_common(tr_cmd, true);
  tr_cmd->add_option("--from-state", f.from_state, "Start state (default: every state)");
  tr_cmd->add_option("--t0", f.t0, "Initial time");
  tr_cmd->add_option("--t-max", f.t_max, "End time");
  add_points(tr_cmd);

  auto* next_cmd = app.add_subcommand("next", "Next-state probabilities as functions of the initial time");
  add_common(next_cmd, true);
  next_cmd->add_option("--goal", f.goal, "Comma-separated goal states")->required();
  next_cmd->add_option("--from-state", f.from_state, "Report only this start state");
  next_cmd->add_option("--window", f.window, "Jump window T1 T2")->expected(2);
  next_cmd->add_option("--t0-range", f.t0_range, "Initial-time range a b")->expected(2);
  add_points(next_cmd);

  auto* reach_cmd = app.add_subcommand("reach", "Reachability probabilities as functions of the initial time");
  add_common(reach_cmd, true);
  add_sets(reach_cmd);
  reach_cmd->add_option("--horizon", f.horizon, "Horizon T");
  reach_cmd->add_option("--t0-range", f.t0_range, "Initial-time range a b")->expected(2);
  reach_cmd->add_option("--tv-file", f.tv_file, "JSON with time-varying goal/unsafe sets")->check(CLI::ExistingFile);
  reach_cmd->add_flag("--vs-horizon", f.vs_horizon, "Vary the horizon in [0, T] at t0 = a instead");
  reach_cmd->add_flag("--two-sided", f.two_sided, "Evolve Pi(t, t+T) with the two-sided equation");
  add_points(reach_cmd);

  auto* check_cmd = app.add_subcommand("check", "Time-dependent truth of a CSL formula");
  add_common(check_cmd, true);
  check_cmd->add_option("--csl", f.csl, "Formula, e.g. \"P<0.167 [ true U[0,50] timeout ]\"")->required();
  check_cmd->add_option("--labels", f.labels, "Labelling JSON: state -> [propositions]")->check(CLI::ExistingFile);
  check_cmd->add_option("--t0-range", f.t0_range, "Initial-time range a b")->expected(2);
  check_cmd->add_option("--zero-tol", f.zero_tol, "Time accuracy of threshold crossings");
  check_cmd->add_option("--deriv-tol", f.deriv_tol, "Slope below which a crossing is near-tangential");
  check_cmd->add_option("--plateau-tol", f.plateau_tol, "Distance to the bound that counts as a plateau");
  add_points(check_cmd);

  auto* cmp_cmd = app.add_subcommand("compare", "Fluid analysis against the simulation oracle");
  add_common(cmp_cmd, true);
  add_ssa(cmp_cmd);
  add_sets(cmp_cmd);
  add_points(cmp_cmd);
  auto* ct = cmp_cmd->add_flag("--transient", f.transient_mode, "Compare transient distributions (default)");
  auto* cr = cmp_cmd->add_flag("--reach", f.reach_mode, "Compare reachability probabilities");
  ct->excludes(cr);
  cmp_cmd->add_option("--t-max", f.t_max, "End time for --transient");
  cmp_cmd->add_option("--horizon", f.horizon, "Reachability horizon T");
  cmp_cmd->add_option("--t0-range", f.t0_range, "Initial-time range a b; without it the horizon varies at t0 = 0")
      ->expected(2);
  cmp_cmd->add_option("--max-discrepancy", f.max_discrepancy, "Exit with 1 when the sup discrepancy is larger");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    CLI::App* target = &app;
    for (auto* s : app.get_subcommands()) target = s;
    out << target->help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub == cmp_cmd && f.reach_mode && cmp_cmd->count("--t0-range") == 0) f.vs_horizon = true;
  if (f.t0_range.size() != 2) f.t0_range = {0, 0};
  if (f.t0_range[1] < f.t0_range[0]) {
    err << "error: --t0-range end lies before its start\n";
    return 1;
  }
  Context ctx(sub, common, out, err);
  try {
    if (sub == validate_cmd) return cmd_validate(ctx);
    if (sub == fluid_cmd) return cmd_fluid(ctx, f);
    if (sub == gen_cmd) return cmd_generator(ctx, f);
    if (sub == sim_cmd) return cmd_simulate(ctx, f);
    if (sub == est_cmd) return cmd_estimate(ctx, f);
    if (sub == tr_cmd) return cmd_transient(ctx, f);
    if (sub == next_cmd) return cmd_next(ctx, f);
    if (sub == reach_cmd) return cmd_reach(ctx, f);
    if (sub == check_cmd) return cmd_check(ctx, f);
    if (sub == cmp_cmd) return cmd_compare(ctx, f);
  } catch (const DiagnosticError& e) {
    for (const auto& d : e.diagnostics()) err << (d.line > 0 ? common.model + ":" : "") << d.str() << "\n";
    return 1;
  } catch (const NumericError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const NotSingleAgentCompatible& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace fluidmc::cli
