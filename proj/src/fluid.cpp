#include "fluidmc/fluid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fluidmc/error.hpp"

namespace fluidmc {

namespace {

void collect_switches(const ExprPtr& e, std::vector<std::pair<ExprPtr, ExprPtr>>& out) {
  if (!e) return;
  if (e->kind() == Expr::Kind::Min || e->kind() == Expr::Kind::Max) {
    bool seen = false;
    for (const auto& [a, b] : out)
      if (Expr::equal(a, e->lhs()) && Expr::equal(b, e->rhs())) seen = true;
    if (!seen) out.emplace_back(e->lhs(), e->rhs());
  }
  collect_switches(e->lhs(), out);
  collect_switches(e->rhs(), out);
}

// sign with a dead zone: values this small are treated as "on the surface"
int sign_of(double g) {
  constexpr double dead = 1e-13;
  if (g > dead) return 1;
  if (g < -dead) return -1;
  return 0;
}

}  // namespace

DriftField::DriftField(const PopulationModel& model) : n_(model.n_states()), params_(model.param_values) {
  for (const auto& tr : model.transitions) {
    rates_.push_back(tr.rate);
    std::vector<std::pair<std::size_t, int>> v;
    auto full = tr.update_vector(n_);
    for (std::size_t i = 0; i < n_; ++i)
      if (full[i] != 0) v.emplace_back(i, full[i]);
    updates_.push_back(std::move(v));
  }
  for (const auto& tr : model.transitions) {
    std::vector<std::pair<ExprPtr, ExprPtr>> found;
    collect_switches(tr.rate, found);
    for (const auto& decl : tr.agent_rates) collect_switches(decl.rate, found);
    for (auto& [a, b] : found) {
      std::string label = tr.name + ": " + to_string(a, model.states, model.param_names) + " vs " +
                          to_string(b, model.states, model.param_names);
      bool dup = false;
      for (const auto& s : switches_)
        if (Expr::equal(s.lhs, a) && Expr::equal(s.rhs, b)) dup = true;
      if (!dup) switches_.push_back({a, b, std::move(label)});
    }
  }
}

void DriftField::eval(std::span<const double> x, std::span<double> F) const {
  std::fill(F.begin(), F.end(), 0.0);
  for (std::size_t t = 0; t < rates_.size(); ++t) {
    const double r = rates_[t]->eval(x, params_);
    if (r == 0.0) continue;
    for (const auto& [i, v] : updates_[t]) F[i] += v * r;
  }
}

std::vector<double> DriftField::eval(std::span<const double> x) const {
  std::vector<double> F(n_);
  eval(x, F);
  return F;
}

double DriftField::switching(std::size_t k, std::span<const double> x) const {
  const auto& s = switches_[k];
  return s.lhs->eval(x, params_) - s.rhs->eval(x, params_);
}

DriftField build_drift(const PopulationModel& model) { return DriftField(model); }

// ---------------------------------------------------------------------------

FluidTrajectory FluidTrajectory::constant(std::vector<double> x0, double t_max) {
  FluidTrajectory traj;
  traj.dense_ = DenseOutput(x0.size());
  traj.dense_.start(0.0, x0);
  traj.t_max_ = t_max;
  return traj;
}

void FluidTrajectory::eval(double t, std::span<double> out) const {
  if (t < -1e-9 || t > t_max_ * (1 + 1e-12) + 1e-9) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "fluid trajectory queried at t=%.10g outside [0, %.10g]", t, t_max_);
    throw DomainError(buf);
  }
  dense_.eval(std::clamp(t, dense_.t_lo(), dense_.t_hi()), out);
  for (double& v : out) v = std::clamp(v, 0.0, 1.0);
}

std::vector<double> FluidTrajectory::eval(double t) const {
  std::vector<double> out(dim());
  eval(t, out);
  return out;
}

double FluidTrajectory::eval(double t, std::size_t i) const {
  std::vector<double> out(dim());
  eval(t, out);
  return out[i];
}

std::vector<double> FluidTrajectory::event_times() const {
  std::vector<double> out;
  for (const auto& e : events_) out.push_back(e.time);
  return out;
}

FluidTrajectory integrate_fluid(const DriftField& field, std::span<const double> x0, double t_max,
                                const FluidOptions& opts) {
  const std::size_t n = field.dim();
  const std::size_t ns = field.n_switching();
  FluidTrajectory traj;
  traj.t_max_ = t_max;
  traj.dense_ = DenseOutput(n);
  traj.dense_.start(0.0, x0);

  bool bad = false;
  double bad_t = 0.0;
  OdeRhs rhs = [&](double t, std::span<const double> y, std::span<double> dy) {
    field.eval(y, dy);
    for (double v : dy)
      if (!std::isfinite(v)) {
        if (!bad) bad_t = t;
        bad = true;
      }
  };
  OdeOptions ode;
  ode.rtol = opts.rtol;
  ode.atol = opts.atol;
  Dopri5 solver(rhs, n, ode);
  solver.reset(0.0, x0);

  std::vector<int> ref(ns);
  for (std::size_t k = 0; k < ns; ++k) ref[k] = sign_of(field.switching(k, x0));
  std::vector<char> near(ns, 0);
  std::vector<double> xs(n);
  constexpr int kSamples = 4;

  auto g_on = [&](const DenseOutput& d, std::size_t k, double t) {
    d.eval(t, xs);
    return field.switching(k, xs);
  };

  std::size_t guard = 0;
  while (solver.t() < t_max) {
    if (++guard > ode.max_steps) throw NumericError("fluid integration step budget exhausted");
    solver.step(t_max, nullptr);
    if (bad) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "non-finite drift at t=%.10g", bad_t);
      throw NonFiniteValue(buf);
    }
    const DenseOutput& local = solver.last_step_dense();
    const double ta = solver.last_t(), tb = solver.t();

    // earliest crossing among all switching functions
    double best_t = tb;
    std::size_t best_k = ns;
    for (std::size_t k = 0; k < ns; ++k) {
      if (ref[k] == 0) continue;
      double prev_t = ta;
      for (int j = 1; j <= kSamples; ++j) {
        const double tj = ta + (tb - ta) * j / kSamples;
        const double gj = g_on(local, k, tj);
        if (sign_of(gj) == -ref[k]) {
          double lo = prev_t, hi = tj;
          while (hi - lo > opts.event_tol) {
            const double mid = 0.5 * (lo + hi);
            if (sign_of(g_on(local, k, mid)) == -ref[k])
              hi = mid;
            else
              lo = mid;
          }
          if (hi < best_t || best_k == ns) {
            best_t = hi;
            best_k = k;
          }
          break;
        }
        prev_t = tj;
      }
    }

    if (best_k == ns) {
      traj.dense_.append(local);
      for (std::size_t k = 0; k < ns; ++k) {
        const double g = field.switching(k, solver.y());
        const int s = sign_of(g);
        if (ref[k] == 0) ref[k] = s;
        // a dip towards the surface without crossing
        double gmin = std::abs(g);
        for (int j = 1; j < kSamples; ++j) gmin = std::min(gmin, std::abs(g_on(local, k, ta + (tb - ta) * j / kSamples)));
        const bool is_near = ref[k] != 0 && gmin < 1e-9;
        if (is_near && !near[k]) traj.contacts_.push_back({tb, k, field.switching_label(k)});
        near[k] = is_near;
      }
      continue;
    }

    if (traj.events_.size() >= opts.max_events) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "more than %zu switching events before t=%.10g", opts.max_events, best_t);
      throw NumericError(buf);
    }
    // re-integrate up to the event so that no step straddles it
    const std::vector<double> y_prev(solver.last_y().begin(), solver.last_y().end());
    if (best_t >= tb - opts.event_tol) {
      traj.dense_.append(local);
      best_t = tb;
    } else {
      solver.reset(ta, y_prev);
      solver.set_proposed_step(best_t - ta);
      solver.advance_to(best_t, &traj.dense_);
    }
    traj.events_.push_back({best_t, best_k, field.switching_label(best_k)});
    ref[best_k] = -ref[best_k];
    near[best_k] = 0;
    const std::vector<double> y_event(solver.y().begin(), solver.y().end());
    solver.reset(best_t, y_event);
  }
  return traj;
}

}  // namespace fluidmc
