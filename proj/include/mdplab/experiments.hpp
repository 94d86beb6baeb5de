#pragma once

// Monte Carlo experiments mirroring the asymptotic statements: law-of-large-
// numbers decay of u^eps - u0, skeleton continuity under weakly-null
// oscillatory perturbations, controlled-equation convergence M^{psi_eps} -> Y,
// and tail-exponent estimation with importance sampling. Replicas are
// embarrassingly parallel over derived streams; every aggregate uses pairwise
// summation over a slot-indexed buffer, so reports are bitwise reproducible
// for a fixed config+seed regardless of MDPLAB_WORKERS.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstdint>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mdplab/core.hpp"
#include "mdplab/grid.hpp"
#include "mdplab/model.hpp"
#include "mdplab/noise.hpp"
#include "mdplab/rate.hpp"
#include "mdplab/rng.hpp"
#include "mdplab/solvers.hpp"

namespace mdplab {

struct ExperimentThresholds {
  bool check_slope = true;   // lln: fitted log-log slope must land in the band
  double slope_lo = 0.8;
  double slope_hi = 1.2;
  bool check_ratio = false;  // lln: final/initial decay cap (the nse2d variant)
  double decay_ratio = 0.1;  // ratio cap for lln/mdp1/mdp2 final vs initial
  double tail_rel_tol = 0.3; // |r_eps - I_ball| / I_ball at the smallest eps
  double bound_trend_tol = 0.05;  // tolerated growth per eps-halving (mdp2 bound stat)
};

struct ExperimentConfig {
  std::string name = "experiment";
  ModelSpec model;
  JumpCoefficient g;
  MarkSpace space;
  double gamma = 0.3;
  std::vector<double> eps_grid;  // strictly decreasing
  std::size_t replicas = 10000;
  double horizon = 1.0;
  double h = 1e-3;
  double m_budget = 1.0;    // admissibility radius: (1/2)|phi|_2^2 <= m
  double tilt_bound = 10.0; // band [1/n, n] for tilts
  StateVector u0;           // initial state of the deterministic flow
  std::uint64_t master_seed = 1;
  StepControls controls;
  ExperimentThresholds thresholds;
};

struct StatRecord {
  double label = 0.0;  // epsilon, or the oscillation mode n for mdp1
  double a = 0.0;
  double speed = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  double ci_half = 0.0;  // normal-approximation 95%
  std::size_t replicas = 0;
  std::vector<std::pair<std::string, double>> extra;

  double extra_value(const std::string& key) const {
    for (const auto& kv : extra)
      if (kv.first == key) return kv.second;
    throw InputError("no such report column: " + key);
  }
};

struct ExperimentReport {
  std::string experiment;
  std::string model_label;
  std::uint64_t master_seed = 0;
  double gamma = 0.0;
  std::vector<StatRecord> rows;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double slope_se = std::numeric_limits<double>::quiet_NaN();
  bool passed = false;
  std::vector<std::string> notes;
  std::string config_echo;
  double wall_seconds = 0.0;  // excluded from serialized outputs
};

namespace detail {

inline std::size_t worker_count() {
  if (const char* env = std::getenv("MDPLAB_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (env[0] == '\0' || end == nullptr || *end != '\0' || v < 1)
      throw InputError("MDPLAB_WORKERS must be a positive integer");
    return static_cast<std::size_t>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

// Work-stealing over an atomic counter: scheduling is nondeterministic but
// every replica writes only its own slots, so the aggregate is not.
template <typename Fn>
void parallel_replicas(std::size_t n, Fn&& fn) {
  const std::size_t w = std::min(worker_count(), std::max<std::size_t>(n, 1));
  if (w <= 1) {
    for (std::size_t r = 0; r < n; ++r) fn(r);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mx;
  std::exception_ptr first_error;
  auto body = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= n) return;
      try {
        fn(r);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mx);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(w);
  for (std::size_t i = 0; i < w; ++i) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline double pairwise_sum(const double* v, std::size_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

struct ColumnStats {
  double mean = 0.0;
  double variance = 0.0;
  double ci_half = 0.0;
  double sum = 0.0;
};

// Two-pass moments over column c of a row-major replicas x width buffer.
inline ColumnStats column_stats(const std::vector<double>& buf, std::size_t width,
                                std::size_t c) {
  const std::size_t n = width == 0 ? 0 : buf.size() / width;
  std::vector<double> col(n);
  for (std::size_t r = 0; r < n; ++r) col[r] = buf[r * width + c];
  ColumnStats s;
  if (n == 0) return s;
  s.sum = pairwise_sum(col.data(), n);
  s.mean = s.sum / static_cast<double>(n);
  if (n > 1) {
    for (std::size_t r = 0; r < n; ++r) {
      const double d = col[r] - s.mean;
      col[r] = d * d;
    }
    s.variance = pairwise_sum(col.data(), n) / static_cast<double>(n - 1);
    s.ci_half = 1.959963984540054 * std::sqrt(s.variance / static_cast<double>(n));
  }
  return s;
}

// Streaming sup-H^2 + L^2-V accumulator of state - ref(t), left-endpoint
// quadrature on whatever (jump-adapted) node sequence the observer sees;
// doubled nodes replace the carried value at zero width, matching path_gap.
// The reference is read by linear interpolation: it is a continuous path,
// and a left-constant read would put an O(h) floor under the gap.
struct GapAccumulator {
  const ModelSpec* model = nullptr;
  const Trajectory* ref = nullptr;  // nullptr: gap against zero
  double sup_sq = 0.0;
  double l2v = 0.0;
  double cur_t = 0.0;
  double cur_vsq = 0.0;
  bool started = false;
  StateVector diff;
  StateVector ref_val;

  void observe(double t, const StateVector& u) {
    diff = u;
    if (ref != nullptr) {
      state_interp(*ref, t, ref_val);
      vec::axpy(-1.0, ref_val, diff);
    }
    sup_sq = std::max(sup_sq, vec::dot(diff, diff));
    const double vsq = v_norm_sq(*model, diff);
    if (started && t > cur_t) {
      l2v += cur_vsq * (t - cur_t);
      cur_t = t;
    } else if (!started) {
      started = true;
      cur_t = t;
    }
    cur_vsq = vsq;
  }
  double total() const { return sup_sq + l2v; }
};

// Least squares of log(y) on log(x) over the y > 0 rows.
struct LogLogFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
};

inline LogLogFit loglog_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i)
    if (xs[i] > 0.0 && ys[i] > 0.0) {
      lx.push_back(std::log(xs[i]));
      ly.push_back(std::log(ys[i]));
    }
  LogLogFit fit;
  fit.used = lx.size();
  if (fit.used < 2) return fit;
  const double n = static_cast<double>(fit.used);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < fit.used; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < fit.used; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (sxx <= 0.0) return fit;
  fit.slope = sxy / sxx;
  if (fit.used > 2) {
    double ssr = 0.0;
    const double b0 = my - fit.slope * mx;
    for (std::size_t i = 0; i < fit.used; ++i) {
      const double r = ly[i] - b0 - fit.slope * lx[i];
      ssr += r * r;
    }
    fit.se = std::sqrt(ssr / (n - 2.0) / sxx);
  } else {
    fit.se = 0.0;
  }
  return fit;
}

// Shortest-round-trip decimal so identical bits give identical text.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string json_number(double v) {
  return std::isfinite(v) ? fmt(v) : std::string("null");
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 8);
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out.push_back('\\');
      out.push_back(c);
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

inline void require_control_in_budget(const Control& phi, const MarkSpace& space,
                                      double m_budget, const char* who) {
  const double cost = 0.5 * l2_norm_sq(phi, space);
  if (cost > m_budget * (1.0 + 1e-12))
    throw InputError(std::string(who) + ": control cost " + fmt(cost) +
                     " exceeds the admissibility budget m=" + fmt(m_budget));
}

inline void append_window_note(ExperimentReport& rep, const std::vector<double>& eps,
                               double gamma) {
  bool monotone = true;
  for (std::size_t i = 1; i < eps.size(); ++i) {
    const DeviationScale lo = make_power_scale(eps[i], gamma);
    const DeviationScale hi = make_power_scale(eps[i - 1], gamma);
    if (!(lo.a_of_eps < hi.a_of_eps && lo.speed() < hi.speed())) monotone = false;
  }
  rep.notes.push_back(std::string("mdp window: a(eps) and eps/a^2 monotone along grid: ") +
                      (monotone ? "yes" : "NO"));
}

inline std::string echo_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "model=" << cfg.model.label << " dim=" << cfg.model.dim
     << " marks=" << cfg.space.size() << " gamma=" << fmt(cfg.gamma) << " eps=[";
  for (std::size_t i = 0; i < cfg.eps_grid.size(); ++i)
    os << (i ? "," : "") << fmt(cfg.eps_grid[i]);
  os << "] replicas=" << cfg.replicas << " T=" << fmt(cfg.horizon) << " h=" << fmt(cfg.h)
     << " m=" << fmt(cfg.m_budget) << " bound=" << fmt(cfg.tilt_bound)
     << " seed=" << cfg.master_seed;
  return os.str();
}

}  // namespace detail

inline void validate_experiment_config(const ExperimentConfig& cfg, bool needs_eps = true) {
  cfg.model.validate();
  if (cfg.u0.size() != cfg.model.dim)
    throw InputError("experiment: initial state dimension mismatch");
  if (cfg.replicas < 1) throw InputError("experiment: replicas must be >= 1");
  make_power_scale(std::min(0.25, cfg.controls.eps_ceiling), cfg.gamma);  // gamma gate
  if (needs_eps) {
    if (cfg.eps_grid.empty()) throw InputError("experiment: epsilon grid is empty");
    for (std::size_t i = 0; i < cfg.eps_grid.size(); ++i) {
      if (!(cfg.eps_grid[i] > 0.0) || cfg.eps_grid[i] > cfg.controls.eps_ceiling)
        throw InputError("experiment: epsilon grid entries must lie in (0, ceiling]");
      if (i > 0 && !(cfg.eps_grid[i] < cfg.eps_grid[i - 1]))
        throw InputError("experiment: epsilon grid must be strictly decreasing");
    }
  }
  make_time_grid(cfg.horizon, cfg.h);  // divisibility gate
}

// --------------------------------------------------------------------------
// LLN: E[sup_t |u^eps - u0|^2 + int |u^eps - u0|_V^2 dt] along the eps grid.

inline ExperimentReport run_lln(const ExperimentConfig& cfg) {
  validate_experiment_config(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const TimeGrid grid = make_time_grid(cfg.horizon, cfg.h);
  const Trajectory u0_path = evolve_deterministic(cfg.model, cfg.u0, grid);

  ExperimentReport rep;
  rep.experiment = "lln";
  rep.model_label = cfg.model.label;
  rep.master_seed = cfg.master_seed;
  rep.gamma = cfg.gamma;
  rep.config_echo = detail::echo_config(cfg);

  for (std::size_t ei = 0; ei < cfg.eps_grid.size(); ++ei) {
    const DeviationScale scale = make_power_scale(cfg.eps_grid[ei], cfg.gamma);
    const std::string tag = "lln:" + std::to_string(ei);
    std::vector<double> buf(cfg.replicas);
    detail::parallel_replicas(cfg.replicas, [&](std::size_t r) {
      RngStream rng(cfg.master_seed, r, tag);
      detail::GapAccumulator acc;
      acc.model = &cfg.model;
      acc.ref = &u0_path;
      integrate_stochastic(cfg.model, cfg.g, cfg.space, scale, cfg.u0, grid, rng,
                           [&acc](double t, const StateVector& u, bool) { acc.observe(t, u); },
                           cfg.controls);
      buf[r] = acc.total();
    });
    const auto st = detail::column_stats(buf, 1, 0);
    StatRecord row;
    row.label = scale.epsilon;
    row.a = scale.a_of_eps;
    row.speed = scale.speed();
    row.mean = st.mean;
    row.variance = st.variance;
    row.ci_half = st.ci_half;
    row.replicas = cfg.replicas;
    rep.rows.push_back(std::move(row));
  }

  std::vector<double> eps, means;
  bool all_zero = true;
  for (const auto& r : rep.rows) {
    eps.push_back(r.label);
    means.push_back(r.mean);
    if (r.mean != 0.0) all_zero = false;
  }
  detail::append_window_note(rep, cfg.eps_grid, cfg.gamma);

  if (all_zero) {
    rep.passed = true;
    rep.notes.push_back("all path errors vanish (silent noise); decay holds trivially");
  } else {
    const auto fit = detail::loglog_fit(eps, means);
    rep.slope = fit.slope;
    rep.slope_se = fit.se;
    rep.passed = true;
    rep.notes.push_back("fitted slope " + detail::fmt(fit.slope) + " (se " +
                        detail::fmt(fit.se) + ") over " + std::to_string(fit.used) +
                        " points");
    if (cfg.thresholds.check_slope) {
      const bool ok = std::isfinite(fit.slope) && fit.slope >= cfg.thresholds.slope_lo &&
                      fit.slope <= cfg.thresholds.slope_hi;
      rep.notes.push_back(std::string("slope band [") + detail::fmt(cfg.thresholds.slope_lo) +
                          ", " + detail::fmt(cfg.thresholds.slope_hi) +
                          "]: " + (ok ? "pass" : "FAIL"));
      rep.passed = rep.passed && ok;
    }
    if (cfg.thresholds.check_ratio) {
      bool monotone = true;
      for (std::size_t i = 1; i < means.size(); ++i)
        if (!(means[i] < means[i - 1])) monotone = false;
      const double ratio = means.back() / means.front();
      const bool ok = monotone && ratio <= cfg.thresholds.decay_ratio;
      rep.notes.push_back("decay ratio " + detail::fmt(ratio) + " (cap " +
                          detail::fmt(cfg.thresholds.decay_ratio) + "), monotone " +
                          (monotone ? "yes" : "no") + ": " + (ok ? "pass" : "FAIL"));
      rep.passed = rep.passed && ok;
    }
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// --------------------------------------------------------------------------
// MDP-1: skeleton continuity under phi_n = phi + sin(2 pi n t) rho(z); the
// perturbations converge to phi only weakly, yet Y^{phi_n} -> Y^phi strongly.

inline ExperimentReport run_mdp1(const ExperimentConfig& cfg, const Control& phi,
                                 const std::vector<std::size_t>& modes,
                                 const std::vector<double>& rho = {}) {
  validate_experiment_config(cfg, /*needs_eps=*/false);
  if (modes.empty()) throw InputError("mdp1: need at least one oscillation mode");
  detail::require_control_in_budget(phi, cfg.space, cfg.m_budget, "mdp1");
  std::vector<double> amp = rho;
  if (amp.empty()) amp.assign(cfg.space.size(), 1.0);
  if (amp.size() != cfg.space.size())
    throw InputError("mdp1: rho must assign one amplitude per mark");

  const auto t0 = std::chrono::steady_clock::now();
  const TimeGrid grid = make_time_grid(cfg.horizon, cfg.h);
  if (phi.time_grid != grid.times)
    throw InputError("mdp1: control must live on the experiment grid");
  const Trajectory u0_path = evolve_deterministic(cfg.model, cfg.u0, grid);
  const Trajectory base = solve_skeleton(cfg.model, cfg.g, cfg.space, phi, u0_path, grid);

  ExperimentReport rep;
  rep.experiment = "mdp1";
  rep.model_label = cfg.model.label;
  rep.master_seed = cfg.master_seed;
  rep.gamma = cfg.gamma;
  rep.config_echo = detail::echo_config(cfg);

  constexpr double two_pi = 6.283185307179586476925286766559;
  for (const std::size_t n : modes) {
    Control pn = phi;
    for (std::size_t j = 0; j < pn.n_steps(); ++j) {
      const double osc = std::sin(two_pi * static_cast<double>(n) * pn.time_grid[j]);
      for (std::size_t k = 0; k < pn.n_marks; ++k) pn.values[j * pn.n_marks + k] += osc * amp[k];
    }
    const Trajectory yn = solve_skeleton(cfg.model, cfg.g, cfg.space, pn, u0_path, grid);
    const PathGap gap = path_gap(yn, base, cfg.model);
    StatRecord row;
    row.label = static_cast<double>(n);
    row.mean = std::sqrt(gap.sup_sq) + std::sqrt(gap.l2v_sq);
    row.replicas = 1;
    row.extra.emplace_back("sup_h", std::sqrt(gap.sup_sq));
    row.extra.emplace_back("l2_v", std::sqrt(gap.l2v_sq));
    rep.rows.push_back(std::move(row));
  }

  std::vector<double> ns, es;
  bool all_zero = true;
  for (const auto& r : rep.rows) {
    ns.push_back(r.label);
    es.push_back(r.mean);
    if (r.mean != 0.0) all_zero = false;
  }
  if (all_zero) {
    rep.passed = true;
    rep.notes.push_back("perturbation is silent (rho = 0): e_n = 0 for all n");
  } else {
    const auto fit = detail::loglog_fit(ns, es);
    rep.slope = fit.slope;
    rep.slope_se = fit.se;
    bool monotone = true;
    for (std::size_t i = 1; i < es.size(); ++i)
      if (!(es[i] < es[i - 1])) monotone = false;
    const double ratio = es.back() / es.front();
    const bool ok = monotone && ratio <= cfg.thresholds.decay_ratio;
    rep.notes.push_back("e_n slope vs n: " + detail::fmt(fit.slope));
    rep.notes.push_back("final/initial " + detail::fmt(ratio) + " (cap " +
                        detail::fmt(cfg.thresholds.decay_ratio) + "), monotone " +
                        (monotone ? "yes" : "no") + ": " + (ok ? "pass" : "FAIL"));
    rep.passed = ok;
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// --------------------------------------------------------------------------
// MDP-2: Z^eps = M^{psi_eps} - Y^phi with psi_eps = 1 + a(eps) phi. The same
// replica index reuses the same stream across the eps grid (matched-seed
// coupling), which makes the decay of E[sup|Z|^2 + int |Z|_V^2] smooth in eps.

inline ExperimentReport run_mdp2(const ExperimentConfig& cfg, const Control& phi,
                                 double tilt_bound) {
  validate_experiment_config(cfg);
  detail::require_control_in_budget(phi, cfg.space, cfg.m_budget, "mdp2");
  const auto t0 = std::chrono::steady_clock::now();
  const TimeGrid grid = make_time_grid(cfg.horizon, cfg.h);
  if (phi.time_grid != grid.times)
    throw InputError("mdp2: control must live on the experiment grid");
  const Trajectory u0_path = evolve_deterministic(cfg.model, cfg.u0, grid);
  const Trajectory skel = solve_skeleton(cfg.model, cfg.g, cfg.space, phi, u0_path, grid);

  ExperimentReport rep;
  rep.experiment = "mdp2";
  rep.model_label = cfg.model.label;
  rep.master_seed = cfg.master_seed;
  rep.gamma = cfg.gamma;
  rep.config_echo = detail::echo_config(cfg);

  for (std::size_t ei = 0; ei < cfg.eps_grid.size(); ++ei) {
    const DeviationScale scale = make_power_scale(cfg.eps_grid[ei], cfg.gamma);
    const TiltBuildResult tb = tilt_from_control(phi, scale.a_of_eps, tilt_bound);
    if (tb.clip_fraction > 0.0)
      throw InputError("mdp2: psi = 1 + a phi escapes [1/n, n] at eps=" +
                       detail::fmt(scale.epsilon) + "; raise the bound or shrink phi");
    const AdmissibilityReport adm = check_admissible(tb.tilt, cfg.m_budget, scale, cfg.space);

    std::vector<double> buf(cfg.replicas * 2);
    detail::parallel_replicas(cfg.replicas, [&](std::size_t r) {
      RngStream rng(cfg.master_seed, r, "mdp2");  // shared across eps on purpose
      detail::GapAccumulator z_acc, m_acc;
      z_acc.model = &cfg.model;
      z_acc.ref = &skel;
      m_acc.model = &cfg.model;
      m_acc.ref = nullptr;
      integrate_controlled(cfg.model, cfg.g, cfg.space, scale, tb.tilt, u0_path, grid, rng,
                           [&](double t, const StateVector& m, bool) {
                             z_acc.observe(t, m);
                             m_acc.observe(t, m);
                           },
                           cfg.controls);
      buf[r * 2] = z_acc.total();
      buf[r * 2 + 1] = m_acc.total();
    });
    const auto zs = detail::column_stats(buf, 2, 0);
    const auto ms = detail::column_stats(buf, 2, 1);
    StatRecord row;
    row.label = scale.epsilon;
    row.a = scale.a_of_eps;
    row.speed = scale.speed();
    row.mean = zs.mean;
    row.variance = zs.variance;
    row.ci_half = zs.ci_half;
    row.replicas = cfg.replicas;
    row.extra.emplace_back("bound_stat", ms.mean);
    row.extra.emplace_back("bound_ci", ms.ci_half);
    row.extra.emplace_back("q_value", adm.q_value);
    row.extra.emplace_back("admissible", adm.admissible ? 1.0 : 0.0);
    rep.rows.push_back(std::move(row));
  }

  detail::append_window_note(rep, cfg.eps_grid, cfg.gamma);
  bool all_zero = true;
  for (const auto& r : rep.rows)
    if (r.mean != 0.0) all_zero = false;

  if (all_zero) {
    rep.passed = true;
    rep.notes.push_back("Z^eps vanishes identically (silent noise and flat control)");
  } else {
    bool monotone = true;
    for (std::size_t i = 1; i < rep.rows.size(); ++i) {
      const auto& prev = rep.rows[i - 1];
      const auto& curr = rep.rows[i];
      if (curr.mean - curr.ci_half > prev.mean + prev.ci_half) monotone = false;
    }
    const double ratio = rep.rows.back().mean / rep.rows.front().mean;
    const bool decay_ok = monotone && ratio <= cfg.thresholds.decay_ratio;
    rep.notes.push_back("Z-statistic final/initial " + detail::fmt(ratio) + " (cap " +
                        detail::fmt(cfg.thresholds.decay_ratio) + "), monotone within CI " +
                        (monotone ? "yes" : "no") + ": " + (decay_ok ? "pass" : "FAIL"));

    // Lemma-3.3-style diagnostic: the M-statistic must not grow as eps drops.
    std::vector<double> halvings, bound_stat;
    for (const auto& r : rep.rows) {
      halvings.push_back(std::log2(1.0 / r.label));
      bound_stat.push_back(r.extra_value("bound_stat"));
    }
    double avg = 0.0;
    for (double v : bound_stat) avg += v;
    avg /= static_cast<double>(bound_stat.size());
    double trend = 0.0;
    if (bound_stat.size() > 1 && avg > 0.0) {
      double mx = 0.0, my = 0.0;
      for (std::size_t i = 0; i < halvings.size(); ++i) {
        mx += halvings[i];
        my += bound_stat[i];
      }
      mx /= static_cast<double>(halvings.size());
      my /= static_cast<double>(halvings.size());
      double sxx = 0.0, sxy = 0.0;
      for (std::size_t i = 0; i < halvings.size(); ++i) {
        sxx += (halvings[i] - mx) * (halvings[i] - mx);
        sxy += (halvings[i] - mx) * (bound_stat[i] - my);
      }
      trend = sxy / sxx / avg;
    }
    const bool bounded = trend <= cfg.thresholds.bound_trend_tol;
    rep.notes.push_back("controlled-moment trend per halving " + detail::fmt(trend) +
                        " (tol " + detail::fmt(cfg.thresholds.bound_trend_tol) +
                        "): " + (bounded ? "pass" : "FAIL"));
    rep.notes.push_back("matched replica streams across the eps grid; all paths finite");
    rep.passed = decay_ok && bounded;
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// --------------------------------------------------------------------------
// Tail experiment: P(|M^eps(T) - x| <= delta) by naive MC and by importance
// sampling under the optimal tilt for the nearest ball point, with Girsanov
// reweighting; exponents r_eps = -(a^2/eps) log p compared against the
// Gramian ball rate. The ball rate uses the nearest-point-on-ray shortcut,
// exact for quadratic rates centered at the origin.

inline ExperimentReport run_tail(const ExperimentConfig& cfg, const StateVector& x,
                                 double delta) {
  validate_experiment_config(cfg);
  if (!(delta > 0.0)) throw InputError("tail: delta must be positive");
  if (x.size() != cfg.model.dim) throw InputError("tail: target dimension mismatch");
  const auto t0 = std::chrono::steady_clock::now();
  const TimeGrid grid = make_time_grid(cfg.horizon, cfg.h);
  const Trajectory u0_path = evolve_deterministic(cfg.model, cfg.u0, grid);

  const auto full = endpoint_rate(cfg.model, cfg.g, cfg.space, u0_path, x, grid);
  if (!full.reachable)
    throw InputError("tail: target is not reachable; its rate is infinite");

  const double xn = vec::norm2(x);
  StateVector x_ball(cfg.model.dim, 0.0);
  if (xn > delta) {
    x_ball = x;
    vec::scale(x_ball, 1.0 - delta / xn);
  }
  const auto ball = endpoint_rate(cfg.model, cfg.g, cfg.space, u0_path, x_ball, grid);
  const double rate_ball = ball.rate;

  ExperimentReport rep;
  rep.experiment = "tail";
  rep.model_label = cfg.model.label;
  rep.master_seed = cfg.master_seed;
  rep.gamma = cfg.gamma;
  rep.config_echo = detail::echo_config(cfg);
  rep.notes.push_back("rate at target " + detail::fmt(full.rate) + "; ball rate " +
                      detail::fmt(rate_ball) + " at radius " + detail::fmt(delta));

  const double bulk_radius = xn + delta;
  const Tilt unit = unit_tilt(grid.times, cfg.space.size());
  bool ci_checked = false, ci_ok = true;
  bool var_checked = false, var_ok = true;
  bool bulk_checked = false, bulk_ok = true;

  for (std::size_t ei = 0; ei < cfg.eps_grid.size(); ++ei) {
    const DeviationScale scale = make_power_scale(cfg.eps_grid[ei], cfg.gamma);
    const TiltBuildResult tb = optimal_tilt(ball.phi_star, scale, cfg.tilt_bound);
    if (tb.clip_fraction > 0.0)
      rep.notes.push_back("tilt clipped at eps=" + detail::fmt(scale.epsilon) +
                          " (fraction " + detail::fmt(tb.clip_fraction) + ")");

    const std::string tag_n = "tail-naive:" + std::to_string(ei);
    const std::string tag_i = "tail-is:" + std::to_string(ei);
    // columns: naive hit, naive bulk, is hit*w, is bulk*w, is raw hit, is weight
    std::vector<double> buf(cfg.replicas * 6);
    detail::parallel_replicas(cfg.replicas, [&](std::size_t r) {
      StateVector last(cfg.model.dim, 0.0), d(cfg.model.dim);
      const double T = grid.times.back();
      const auto probe = [&last, T](double t, const StateVector& m, bool) {
        if (t == T) last = m;
      };
      RngStream rng_n(cfg.master_seed, r, tag_n);
      integrate_controlled(cfg.model, cfg.g, cfg.space, scale, unit, u0_path, grid, rng_n,
                           probe, cfg.controls);
      d = last;
      vec::axpy(-1.0, x, d);
      buf[r * 6] = vec::norm2(d) <= delta ? 1.0 : 0.0;
      buf[r * 6 + 1] = vec::norm2(last) <= bulk_radius ? 1.0 : 0.0;

      RngStream rng_i(cfg.master_seed, r, tag_i);
      PointProcessSample pts;
      if (!cfg.g.is_zero())
        pts = sample_controlled_prm(cfg.space, scale.epsilon, tb.tilt, rng_i,
                                    cfg.controls.max_expected_points);
      const double w = std::exp(girsanov_log_weight(pts, tb.tilt, scale.epsilon, cfg.space,
                                                    grid.times.back()));
      integrate_controlled_with_points(cfg.model, cfg.g, cfg.space, scale, tb.tilt, u0_path,
                                       grid, pts, probe, cfg.controls);
      d = last;
      vec::axpy(-1.0, x, d);
      const double hit = vec::norm2(d) <= delta ? 1.0 : 0.0;
      buf[r * 6 + 2] = hit * w;
      buf[r * 6 + 3] = (vec::norm2(last) <= bulk_radius ? 1.0 : 0.0) * w;
      buf[r * 6 + 4] = hit;
      buf[r * 6 + 5] = w;
    });

    const auto naive = detail::column_stats(buf, 6, 0);
    const auto bulk_n = detail::column_stats(buf, 6, 1);
    const auto is = detail::column_stats(buf, 6, 2);
    const auto bulk_i = detail::column_stats(buf, 6, 3);
    const auto is_raw = detail::column_stats(buf, 6, 4);
    const auto weights = detail::column_stats(buf, 6, 5);
    const double naive_hits = naive.sum;
    const double is_hits = is_raw.sum;
    if (is_hits == 0.0)
      throw ConvergenceError("tail: importance sampling scored no hits at eps=" +
                             detail::fmt(scale.epsilon) +
                             "; enlarge delta or increase replicas");

    const double speed = scale.speed();
    const double r_naive = naive.mean > 0.0 ? -speed * std::log(naive.mean)
                                            : std::numeric_limits<double>::infinity();
    const double r_is = -speed * std::log(is.mean);

    StatRecord row;
    row.label = scale.epsilon;
    row.a = scale.a_of_eps;
    row.speed = speed;
    row.mean = is.mean;
    row.variance = is.variance;
    row.ci_half = is.ci_half;
    row.replicas = cfg.replicas;
    row.extra.emplace_back("p_naive", naive.mean);
    row.extra.emplace_back("var_naive", naive.variance);
    row.extra.emplace_back("ci_naive", naive.ci_half);
    row.extra.emplace_back("naive_hits", naive_hits);
    row.extra.emplace_back("is_hits", is_hits);
    row.extra.emplace_back("r_naive", r_naive);
    row.extra.emplace_back("r_is", r_is);
    row.extra.emplace_back("mean_weight", weights.mean);
    row.extra.emplace_back("bulk_naive", bulk_n.mean);
    row.extra.emplace_back("bulk_is", bulk_i.mean);
    rep.rows.push_back(std::move(row));

    if (naive_hits >= 50.0) {
      ci_checked = true;
      if (std::abs(is.mean - naive.mean) > naive.ci_half + is.ci_half) ci_ok = false;
      var_checked = true;
      if (is.variance > naive.variance) var_ok = false;
    }
    if (bulk_n.mean >= 0.2) {
      bulk_checked = true;
      const double se = std::sqrt(bulk_n.ci_half * bulk_n.ci_half +
                                  bulk_i.ci_half * bulk_i.ci_half) /
                        1.959963984540054;
      if (std::abs(bulk_i.mean - bulk_n.mean) > 3.0 * se) bulk_ok = false;
    }
  }

  detail::append_window_note(rep, cfg.eps_grid, cfg.gamma);
  rep.passed = true;
  if (ci_checked) {
    rep.notes.push_back(std::string("naive/IS 95% CIs overlap where naive has >= 50 hits: ") +
                        (ci_ok ? "pass" : "FAIL"));
    rep.passed = rep.passed && ci_ok;
  } else {
    rep.notes.push_back("naive MC never reached 50 hits; CI cross-check inactive");
  }
  if (var_checked) {
    rep.notes.push_back(std::string("IS variance <= naive variance at matched replicas: ") +
                        (var_ok ? "pass" : "FAIL"));
    rep.passed = rep.passed && var_ok;
  }
  if (bulk_checked) {
    rep.notes.push_back(std::string("bulk-event Girsanov cross-validation (3 SE): ") +
                        (bulk_ok ? "pass" : "FAIL"));
    rep.passed = rep.passed && bulk_ok;
  }
  const double r_last = rep.rows.back().extra_value("r_is");
  if (rate_ball > 0.0) {
    const double rel = std::abs(r_last - rate_ball) / rate_ball;
    const bool ok = rel <= cfg.thresholds.tail_rel_tol;
    rep.notes.push_back("exponent at smallest eps " + detail::fmt(r_last) + " vs ball rate " +
                        detail::fmt(rate_ball) + ", rel err " + detail::fmt(rel) + " (tol " +
                        detail::fmt(cfg.thresholds.tail_rel_tol) +
                        "): " + (ok ? "pass" : "FAIL"));
    rep.passed = rep.passed && ok;
  } else {
    const bool ok = r_last <= 0.05;
    rep.notes.push_back("ball rate is zero (typical event); exponent " + detail::fmt(r_last) +
                        " must vanish: " + (ok ? "pass" : "FAIL"));
    rep.passed = rep.passed && ok;
  }
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// --------------------------------------------------------------------------
// Serialization: JSONL rows plus one summary record, and a plot-ready CSV.
// Neither embeds wall-clock or timestamps, so reruns are byte-identical.

inline std::string report_to_jsonl(const ExperimentReport& rep) {
  std::ostringstream os;
  for (const auto& r : rep.rows) {
    os << "{\"experiment\":\"" << detail::json_escape(rep.experiment) << "\",\"model\":\""
       << detail::json_escape(rep.model_label) << "\",\"seed\":" << rep.master_seed
       << ",\"gamma\":" << detail::json_number(rep.gamma)
       << ",\"label\":" << detail::json_number(r.label)
       << ",\"a\":" << detail::json_number(r.a)
       << ",\"speed\":" << detail::json_number(r.speed)
       << ",\"mean\":" << detail::json_number(r.mean)
       << ",\"variance\":" << detail::json_number(r.variance)
       << ",\"ci_half\":" << detail::json_number(r.ci_half) << ",\"replicas\":" << r.replicas;
    for (const auto& kv : r.extra)
      os << ",\"" << detail::json_escape(kv.first) << "\":" << detail::json_number(kv.second);
    os << "}\n";
  }
  os << "{\"experiment\":\"" << detail::json_escape(rep.experiment)
     << "\",\"summary\":true,\"slope\":" << detail::json_number(rep.slope)
     << ",\"slope_se\":" << detail::json_number(rep.slope_se)
     << ",\"passed\":" << (rep.passed ? "true" : "false") << ",\"notes\":[";
  for (std::size_t i = 0; i < rep.notes.size(); ++i)
    os << (i ? "," : "") << "\"" << detail::json_escape(rep.notes[i]) << "\"";
  os << "],\"config\":\"" << detail::json_escape(rep.config_echo) << "\"}\n";
  return os.str();
}

inline std::string report_summary_csv(const ExperimentReport& rep) {
  std::ostringstream os;
  os << "label,a,speed,mean,variance,ci_half,replicas";
  if (!rep.rows.empty())
    for (const auto& kv : rep.rows.front().extra) os << "," << kv.first;
  os << "\n";
  for (const auto& r : rep.rows) {
    os << detail::fmt(r.label) << "," << detail::fmt(r.a) << "," << detail::fmt(r.speed)
       << "," << detail::fmt(r.mean) << "," << detail::fmt(r.variance) << ","
       << detail::fmt(r.ci_half) << "," << r.replicas;
    for (const auto& kv : r.extra) os << "," << detail::fmt(kv.second);
    os << "\n";
  }
  os << "# experiment=" << rep.experiment << " model=" << rep.model_label
     << " seed=" << rep.master_seed << " slope=" << detail::fmt(rep.slope)
     << " slope_se=" << detail::fmt(rep.slope_se) << " passed=" << (rep.passed ? 1 : 0)
     << "\n";
  for (const auto& n : rep.notes) os << "# note: " << n << "\n";
  return os.str();
}

}  // namespace mdplab
