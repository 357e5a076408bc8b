#include "fluidmc/ssa.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <thread>

#include "fluidmc/error.hpp"

namespace fluidmc {

unsigned worker_threads(unsigned requested) {
  unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FLUIDMC_THREADS")) {
    char* end = nullptr;
    const long cap = std::strtol(env, &end, 10);
    if (end != env && cap > 0) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return std::max(1u, n);
}

std::vector<int> initial_counts(const PopulationModel& model, int N) {
  if (N <= 0) throw std::invalid_argument("population size must be positive");
  const std::size_t n = model.n_states();
  std::vector<int> counts(n);
  std::vector<std::pair<double, std::size_t>> rem;
  int total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = model.init[i] * N;
    counts[i] = static_cast<int>(std::floor(v + 1e-9));
    total += counts[i];
    rem.push_back({v - counts[i], i});
  }
  // hand the leftover agents to the largest remainders (ties to lower index)
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; total < N && k < rem.size(); ++k, ++total) ++counts[rem[k].second];
  return counts;
}

namespace {

using Rng = std::mt19937_64;

Rng replica_rng(std::uint64_t seed, std::size_t replica) {
  const auto r = static_cast<std::uint64_t>(replica);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r >> 32)};
  return Rng(seq);
}

// uniform in [0, 1) with 53 random bits; avoids implementation-defined distributions
double uniform(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform(rng) * static_cast<double>(n)));
}

class Engine {
 public:
  Engine(const PopulationModel& model, const SimConfig& cfg)
      : params_(model.param_values), N_(cfg.N), counts_(cfg.counts), tracked_(cfg.tracked) {
    const std::size_t n = model.n_states();
    if (N_ <= 0) throw std::invalid_argument("population size must be positive");
    if (counts_.empty()) counts_ = initial_counts(model, N_);
    if (counts_.size() != n) throw std::invalid_argument("initial counts do not match the number of states");
    long sum = 0;
    for (int c : counts_) {
      if (c < 0) throw std::invalid_argument("initial counts must be nonnegative");
      sum += c;
    }
    if (sum != N_) throw std::invalid_argument("initial counts sum to " + std::to_string(sum) + ", not N = " + std::to_string(N_));
    std::vector<int> need(n, 0);
    for (int s : tracked_) {
      if (s < 0 || static_cast<std::size_t>(s) >= n) throw std::invalid_argument("tracked agent state out of range");
      if (++need[static_cast<std::size_t>(s)] > counts_[static_cast<std::size_t>(s)])
        throw std::invalid_argument("more tracked agents in state " + model.states[static_cast<std::size_t>(s)] +
                                    " than agents there");
    }
    for (const auto& tr : model.transitions) {
      Trans t;
      t.rate = CompiledExpr(tr.rate);
      t.name = tr.name;
      for (const auto& r : tr.rules) {
        auto it = std::find_if(t.sources.begin(), t.sources.end(), [&](const Source& s) { return s.state == r.source; });
        if (it == t.sources.end()) {
          t.sources.push_back({r.source, 0, {}});
          it = t.sources.end() - 1;
        }
        it->consumed += r.multiplicity;
        for (int k = 0; k < r.multiplicity; ++k) it->targets.push_back(r.target);
      }
      const auto v = tr.update_vector(n);
      for (std::size_t i = 0; i < n; ++i)
        if (v[i] != 0) t.update.push_back({static_cast<int>(i), v[i]});
      trans_.push_back(std::move(t));
    }
    x_.resize(n);
    rates_.resize(trans_.size());
  }

  const std::vector<int>& counts() const { return counts_; }
  const std::vector<int>& tracked() const { return tracked_; }
  int tracked(std::size_t k) const { return tracked_[k]; }

  double total_rate() {
    for (std::size_t i = 0; i < x_.size(); ++i) x_[i] = static_cast<double>(counts_[i]) / N_;
    double total = 0;
    for (std::size_t k = 0; k < trans_.size(); ++k) {
      const auto& t = trans_[k];
      bool possible = true;
      for (const auto& s : t.sources) possible = possible && counts_[static_cast<std::size_t>(s.state)] >= s.consumed;
      double r = possible ? N_ * t.rate.eval(x_.data(), params_.data()) : 0.0;
      if (!std::isfinite(r)) throw NonFiniteValue("rate of transition '" + t.name + "' is not finite");
      if (r < 0) {
        // a tiny negative value from cancellation is treated as zero
        if (r < -1e-12 * N_) throw NumericError("negative rate " + std::to_string(r) + " for transition '" + t.name + "'");
        r = 0;
      }
      rates_[k] = r;
      total += r;
    }
    return total;
  }

  // Chooses a transition proportionally to the rates of the last total_rate
  // call and applies it; returns its index.
  std::size_t fire(Rng& rng, double total) {
    double u = uniform(rng) * total;
    std::size_t k = 0;
    for (; k + 1 < rates_.size(); ++k) {
      if (u < rates_[k]) break;
      u -= rates_[k];
    }
    while (rates_[k] == 0.0 && k > 0) --k;  // guard against rounding past the last enabled transition
    apply(k, rng);
    return k;
  }

 private:
  struct Source {
    int state;
    int consumed;
    std::vector<int> targets;  // one entry per consumed agent, in rule order
  };
  struct Trans {
    std::string name;
    CompiledExpr rate;
    std::vector<Source> sources;
    std::vector<std::pair<int, int>> update;
  };

  void apply(std::size_t k, Rng& rng) {
    const auto& t = trans_[k];
    moves_.clear();
    for (const auto& src : t.sources) {
      here_.clear();
      for (std::size_t a = 0; a < tracked_.size(); ++a)
        if (tracked_[a] == src.state) here_.push_back(a);
      if (here_.empty()) continue;
      // the agents of the source state are numbered with the tracked ones
      // first; choose `consumed` distinct numbers uniformly
      const auto X = static_cast<std::size_t>(counts_[static_cast<std::size_t>(src.state)]);
      picked_.clear();
      while (picked_.size() < static_cast<std::size_t>(src.consumed)) {
        const std::size_t c = uniform_index(rng, X);
        if (std::find(picked_.begin(), picked_.end(), c) == picked_.end()) picked_.push_back(c);
      }
      for (std::size_t r = 0; r < picked_.size(); ++r)
        if (picked_[r] < here_.size()) moves_.push_back({here_[picked_[r]], src.targets[r]});
    }
    for (const auto& [agent, target] : moves_) tracked_[agent] = target;
    for (const auto& [state, delta] : t.update) counts_[static_cast<std::size_t>(state)] += delta;
  }

  std::vector<double> params_;
  int N_;
  std::vector<int> counts_;
  std::vector<int> tracked_;
  std::vector<Trans> trans_;
  std::vector<double> x_, rates_;
  std::vector<std::size_t> here_, picked_;
  std::vector<std::pair<std::size_t, int>> moves_;
};

double waiting_time(Rng& rng, double total) { return -std::log1p(-uniform(rng)) / total; }

template <class F>
void parallel_for(std::size_t begin, std::size_t end, unsigned threads, F&& body) {
  if (end <= begin) return;
  const unsigned workers = std::min<std::size_t>(threads, end - begin);
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{begin};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= end) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next = end;
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

void require_tracked(const SimConfig& cfg) {
  if (cfg.tracked.empty()) throw std::invalid_argument("the estimate needs at least one tracked agent");
  if (cfg.replicas < 1) throw std::invalid_argument("replica count must be at least 1");
}

EstimateSeries make_series(std::string label, const std::vector<double>& grid, const std::vector<std::size_t>& hits,
                           const std::vector<std::size_t>& n, std::size_t attempted) {
  EstimateSeries e;
  e.label = std::move(label);
  e.grid = grid;
  e.attempted = attempted;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    double p, lo, hi;
    confidence_interval(hits[k], n[k], p, lo, hi);
    e.p.push_back(p);
    e.lo.push_back(lo);
    e.hi.push_back(hi);
    e.half_width.push_back(0.5 * (hi - lo));
    e.replicas.push_back(n[k]);
  }
  return e;
}

// Runs replicas in deterministic batches until every column has `want`
// accepted results or the attempt cap is hit. `run(r, row)` fills row with
// 0 (rejected), 1 (accepted, no event) or 2 (accepted, event).
template <class Run>
std::vector<std::uint8_t> conditioned_runs(std::size_t want, std::size_t columns, unsigned threads, Run&& run,
                                           std::size_t& attempted) {
  const std::size_t cap = 100 * want;
  std::vector<std::uint8_t> table;
  std::size_t done = 0, batch = want;
  for (;;) {
    table.resize((done + batch) * columns, 0);
    parallel_for(done, done + batch, threads, [&](std::size_t r) { run(r, &table[r * columns]); });
    done += batch;
    std::size_t worst = want;
    double worst_rate = 1.0;
    for (std::size_t c = 0; c < columns; ++c) {
      std::size_t acc = 0;
      for (std::size_t r = 0; r < done; ++r) acc += table[r * columns + c] != 0;
      if (acc < worst) {
        worst = acc;
        worst_rate = static_cast<double>(acc) / static_cast<double>(done);
      }
    }
    if (worst >= want || done >= cap) break;
    const double need = static_cast<double>(want - worst) / std::max(worst_rate, 0.01);
    batch = std::min(cap - done, static_cast<std::size_t>(std::ceil(1.1 * need)) + 16);
  }
  attempted = done;
  return table;
}

}  // namespace

void confidence_interval(std::size_t hits, std::size_t n, double& p, double& lo, double& hi) {
  if (n == 0) {
    p = std::numeric_limits<double>::quiet_NaN();
    lo = 0.0;
    hi = 1.0;
    return;
  }
  const double z = 1.959963984540054;
  const double R = static_cast<double>(n);
  p = static_cast<double>(hits) / R;
  if (p * (1 - p) * R < 10.0) {
    const double z2 = z * z;
    const double centre = (p + z2 / (2 * R)) / (1 + z2 / R);
    const double half = z / (1 + z2 / R) * std::sqrt(p * (1 - p) / R + z2 / (4 * R * R));
    lo = hits == 0 ? 0.0 : std::max(0.0, centre - half);
    hi = hits == n ? 1.0 : std::min(1.0, centre + half);
  } else {
    const double half = z * std::sqrt(p * (1 - p) / R);
    lo = std::max(0.0, p - half);
    hi = std::min(1.0, p + half);
  }
}

SimPath simulate(const PopulationModel& model, const SimConfig& config, std::size_t replica) {
  Engine e(model, config);
  Rng rng = replica_rng(config.seed, replica);
  SimPath path;
  double t = 0.0;
  path.times.push_back(0.0);
  path.counts.push_back(e.counts());
  path.tracked.push_back(e.tracked());
  path.fired.push_back(-1);
  for (;;) {
    const double total = e.total_rate();
    if (total <= 0.0) {
      path.absorbed = true;
      break;
    }
    const double next = t + waiting_time(rng, total);
    if (next > config.horizon) break;
    const std::size_t k = e.fire(rng, total);
    t = next;
    path.times.push_back(t);
    path.counts.push_back(e.counts());
    path.tracked.push_back(e.tracked());
    path.fired.push_back(static_cast<int>(k));
  }
  return path;
}

std::vector<EstimateSeries> estimate_transient(const PopulationModel& model, const SimConfig& config,
                                              const std::vector<double>& grid) {
  require_tracked(config);
  if (!std::is_sorted(grid.begin(), grid.end())) throw std::invalid_argument("time grid must be increasing");
  const std::size_t n = model.n_states(), G = grid.size(), R = config.replicas;
  const double horizon = grid.empty() ? 0.0 : grid.back();
  std::vector<int> states(R * G);
  parallel_for(0, R, worker_threads(config.threads), [&](std::size_t r) {
    Engine e(model, config);
    Rng rng = replica_rng(config.seed, r);
    int* row = &states[r * G];
    double t = 0.0;
    std::size_t g = 0;
    for (;;) {
      const double total = e.total_rate();
      const double next = total > 0 ? t + waiting_time(rng, total) : std::numeric_limits<double>::infinity();
      while (g < G && grid[g] < next) row[g++] = e.tracked(0);
      if (g == G || next > horizon) break;
      e.fire(rng, total);
      t = next;
    }
    while (g < G) row[g++] = e.tracked(0);
  });
  std::vector<EstimateSeries> out;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::size_t> hits(G, 0), count(G, R);
    for (std::size_t r = 0; r < R; ++r)
      for (std::size_t g = 0; g < G; ++g) hits[g] += states[r * G + g] == static_cast<int>(s);
    out.push_back(make_series(model.states[s], grid, hits, count, R));
  }
  return out;
}

EstimateSeries estimate_reach(const PopulationModel& model, const SimConfig& config, const std::vector<bool>& goal,
                              const std::vector<bool>& unsafe, int start_state, const std::vector<double>& t0_grid,
                              double T) {
  require_tracked(config);
  const std::size_t n = model.n_states(), G = t0_grid.size(), R = config.replicas;
  if (goal.size() != n || unsafe.size() != n) throw std::invalid_argument("goal/unsafe sets do not match the model");
  if (start_state < 0 || static_cast<std::size_t>(start_state) >= n) throw std::invalid_argument("start state out of range");
  if (!std::is_sorted(t0_grid.begin(), t0_grid.end())) throw std::invalid_argument("t0 grid must be increasing");
  if (T < 0) throw std::invalid_argument("horizon must be nonnegative");
  const std::string label = "reach from " + model.states[static_cast<std::size_t>(start_state)];
  const auto s0 = static_cast<std::size_t>(start_state);
  if (goal[s0] || unsafe[s0]) {
    const std::vector<std::size_t> hits(G, goal[s0] ? R : 0), count(G, R);
    return make_series(label, t0_grid, hits, count, 0);
  }
  const double t_end = G ? t0_grid.back() + T : 0.0;

  std::size_t attempted = 0;
  auto table = conditioned_runs(
      R, G, worker_threads(config.threads),
      [&](std::size_t r, std::uint8_t* row) {
        Engine e(model, config);
        Rng rng = replica_rng(config.seed, r);
        // jumps of the first tracked agent: (time, new state)
        std::vector<std::pair<double, int>> path{{0.0, e.tracked(0)}};
        double t = 0.0;
        for (;;) {
          const double total = e.total_rate();
          if (total <= 0) break;
          const double next = t + waiting_time(rng, total);
          if (next > t_end) break;
          const int before = e.tracked(0);
          e.fire(rng, total);
          t = next;
          if (e.tracked(0) != before) path.push_back({t, e.tracked(0)});
        }
        std::size_t j = 0;
        for (std::size_t k = 0; k < G; ++k) {
          const double t0 = t0_grid[k];
          while (j + 1 < path.size() && path[j + 1].first <= t0) ++j;
          if (path[j].second != start_state) continue;
          std::uint8_t outcome = 1;
          for (std::size_t i = j + 1; i < path.size() && path[i].first <= t0 + T; ++i) {
            const auto s = static_cast<std::size_t>(path[i].second);
            if (goal[s]) {
              outcome = 2;
              break;
            }
            if (unsafe[s]) break;
          }
          row[k] = outcome;
        }
      },
      attempted);

  std::vector<std::size_t> hits(G, 0), count(G, 0);
  const std::size_t rows = table.size() / std::max<std::size_t>(G, 1);
  for (std::size_t k = 0; k < G; ++k)
    for (std::size_t r = 0; r < rows && count[k] < R; ++r) {
      const auto v = table[r * G + k];
      if (v == 0) continue;
      ++count[k];
      hits[k] += v == 2;
    }
  for (std::size_t k = 0; k < G; ++k)
    if (count[k] == 0)
      throw NumericError("tracked agent never observed in state " + model.states[s0] + " at t0=" +
                         std::to_string(t0_grid[k]) + " within " + std::to_string(attempted) + " replicas");
  return make_series(label, t0_grid, hits, count, attempted);
}

EstimateSeries estimate_reach_horizon(const PopulationModel& model, const SimConfig& config,
                                      const std::vector<bool>& goal, const std::vector<bool>& unsafe, int start_state,
                                      double t0, const std::vector<double>& horizons) {
  require_tracked(config);
  const std::size_t n = model.n_states(), H = horizons.size(), R = config.replicas;
  if (goal.size() != n || unsafe.size() != n) throw std::invalid_argument("goal/unsafe sets do not match the model");
  if (start_state < 0 || static_cast<std::size_t>(start_state) >= n) throw std::invalid_argument("start state out of range");
  if (!std::is_sorted(horizons.begin(), horizons.end())) throw std::invalid_argument("horizon grid must be increasing");
  const auto s0 = static_cast<std::size_t>(start_state);
  const std::string label = "reach from " + model.states[s0];
  if (goal[s0] || unsafe[s0]) {
    const std::vector<std::size_t> hits(H, goal[s0] ? R : 0), count(H, R);
    return make_series(label, horizons, hits, count, 0);
  }
  const double t_end = t0 + (H ? horizons.back() : 0.0);
  constexpr double kNever = std::numeric_limits<double>::infinity();

  // hitting delay per replica; NaN marks a rejected replica
  std::vector<double> delay;
  std::size_t done = 0, accepted = 0, batch = R;
  const std::size_t cap = 100 * R;
  const unsigned threads = worker_threads(config.threads);
  for (;;) {
    delay.resize(done + batch);
    parallel_for(done, done + batch, threads, [&](std::size_t r) {
      Engine e(model, config);
      Rng rng = replica_rng(config.seed, r);
      double t = 0.0;
      bool watching = false;
      double result = kNever;
      for (;;) {
        const double total = e.total_rate();
        const double next = total > 0 ? t + waiting_time(rng, total) : kNever;
        if (!watching && next > t0) {
          if (e.tracked(0) != start_state) {
            result = std::numeric_limits<double>::quiet_NaN();
            break;
          }
          watching = true;
        }
        if (next > t_end) break;
        e.fire(rng, total);
        t = next;
        if (watching) {
          const auto s = static_cast<std::size_t>(e.tracked(0));
          if (goal[s]) {
            result = t - t0;
            break;
          }
          if (unsafe[s]) break;
        }
      }
      delay[r] = result;
    });
    for (std::size_t r = done; r < done + batch; ++r) accepted += !std::isnan(delay[r]);
    done += batch;
    if (accepted >= R || done >= cap) break;
    const double rate = std::max(static_cast<double>(accepted) / static_cast<double>(done), 0.01);
    batch = std::min(cap - done, static_cast<std::size_t>(std::ceil(1.1 * static_cast<double>(R - accepted) / rate)) + 16);
  }
  if (accepted == 0)
    throw NumericError("tracked agent never observed in state " + model.states[s0] + " at t0=" + std::to_string(t0));

  std::vector<double> kept;
  for (std::size_t r = 0; r < done && kept.size() < R; ++r)
    if (!std::isnan(delay[r])) kept.push_back(delay[r]);
  std::vector<std::size_t> hits(H, 0), count(H, kept.size());
  for (double d : kept)
    for (std::size_t k = 0; k < H; ++k) hits[k] += d <= horizons[k];
  return make_series(label, horizons, hits, count, done);
}

}  // namespace fluidmc
