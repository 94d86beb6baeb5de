#pragma once

// Finite-mark-space Poisson random measure engine: plain and tilted point
// process sampling, Girsanov log-weights, the entropy cost Q, and tilt
// admissibility. The mark measure is finite and discrete, so thinning is
// exact and every distributional oracle is available in closed form.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mdplab/core.hpp"
#include "mdplab/rng.hpp"

namespace mdplab {

// ---------------------------------------------------------------------------
// Mark space: K marks z_1..z_K with positive intensity weights nu(z_k).

struct MarkSpace {
  std::vector<std::string> marks;
  std::vector<double> weights;  // nu(z_k) > 0
  double total_mass = 0.0;
  std::vector<double> cdf;  // cumulative weights; cdf.back() == total_mass

  std::size_t size() const { return weights.size(); }
};

inline MarkSpace make_mark_space(std::vector<double> weights,
                                 std::vector<std::string> names = {}) {
  if (weights.empty()) throw InputError("mark space must contain at least one mark");
  MarkSpace s;
  s.weights = std::move(weights);
  s.cdf.reserve(s.weights.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < s.weights.size(); ++k) {
    const double w = s.weights[k];
    if (!(w > 0.0) || !std::isfinite(w))
      throw InputError("mark weight " + std::to_string(k) + " must be a positive finite real");
    acc += w;
    s.cdf.push_back(acc);
  }
  s.total_mass = acc;
  if (!std::isfinite(acc)) throw InputError("mark space total mass must be finite");
  if (names.empty()) {
    for (std::size_t k = 0; k < s.weights.size(); ++k)
      s.marks.push_back("z" + std::to_string(k + 1));
  } else {
    if (names.size() != s.weights.size())
      throw InputError("mark names and weights must have equal length");
    s.marks = std::move(names);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Jump coefficient G(t, u, z_k) with Lipschitz/growth envelopes
//   |G(t,u1,z) - G(t,u2,z)| <= L1(t,z) |u1 - u2|
//   |G(t,u,z)|             <= L2(t,z) + L3(t,z) |u|.
// A null evaluator means G == 0 structurally: steppers then skip sampling
// altogether, which is what makes the zero-noise reduction exact.

struct JumpCoefficient {
  std::function<void(double, const StateVector&, std::size_t, StateVector&)> g_eval;
  std::function<double(double, std::size_t)> L1, L2, L3;

  bool is_zero() const { return !g_eval; }

  StateVector eval(double t, const StateVector& u, std::size_t k) const {
    StateVector out(u.size(), 0.0);
    if (g_eval) g_eval(t, u, k, out);
    return out;
  }
};

inline JumpCoefficient make_zero_jump() {
  JumpCoefficient g;
  g.L1 = [](double, std::size_t) { return 0.0; };
  g.L2 = [](double, std::size_t) { return 0.0; };
  g.L3 = [](double, std::size_t) { return 0.0; };
  return g;
}

// Affine family: G(t, u, z_k) = alpha_k e_{k mod dim} + c_k u. The envelopes
// L1 = |c_k|, L2 = |alpha_k|, L3 = |c_k| are exact, not just bounds.
inline JumpCoefficient make_affine_jump(std::size_t dim, std::vector<double> alphas,
                                        std::vector<double> mults = {}) {
  if (dim == 0) throw InputError("affine jump family needs a positive state dimension");
  if (alphas.empty()) throw InputError("affine jump family needs one amplitude per mark");
  if (mults.empty()) mults.assign(alphas.size(), 0.0);
  if (mults.size() != alphas.size())
    throw InputError("affine jump family: amplitude and multiplier lists must match");
  for (double a : alphas)
    if (!std::isfinite(a)) throw InputError("affine jump amplitude must be finite");
  for (double c : mults)
    if (!std::isfinite(c)) throw InputError("affine jump multiplier must be finite");

  JumpCoefficient g;
  g.g_eval = [dim, alphas, mults](double, const StateVector& u, std::size_t k,
                                  StateVector& out) {
    const double c = mults[k];
    if (c != 0.0) {
      for (std::size_t i = 0; i < u.size(); ++i) out[i] = c * u[i];
    } else {
      std::fill(out.begin(), out.end(), 0.0);
    }
    out[k % dim] += alphas[k];
  };
  g.L1 = [mults](double, std::size_t k) { return std::abs(mults[k]); };
  g.L2 = [alphas](double, std::size_t k) { return std::abs(alphas[k]); };
  g.L3 = [mults](double, std::size_t k) { return std::abs(mults[k]); };
  return g;
}

// Spot-check the envelope inequalities on random inputs; returns the largest
// normalized violation (<= 0 means both hold on every sample).
inline double check_jump_envelopes(const JumpCoefficient& g, const MarkSpace& space,
                                   std::size_t dim, std::size_t n_samples,
                                   RngStream& rng) {
  if (g.is_zero()) return 0.0;
  double worst = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const double t = rng.uniform();
    const std::size_t k = s % space.size();
    StateVector u1(dim), u2(dim);
    for (double& x : u1) x = 2.0 * rng.normal();
    for (double& x : u2) x = 2.0 * rng.normal();
    const StateVector g1 = g.eval(t, u1, k);
    const StateVector g2 = g.eval(t, u2, k);
    StateVector diff_g = g1, diff_u = u1;
    vec::axpy(-1.0, g2, diff_g);
    vec::axpy(-1.0, u2, diff_u);
    const double lip = vec::norm2(diff_g) - g.L1(t, k) * vec::norm2(diff_u);
    const double grow = vec::norm2(g1) - (g.L2(t, k) + g.L3(t, k) * vec::norm2(u1));
    const double scale = std::max(1.0, vec::norm2(g1));
    worst = std::max(worst, std::max(lip, grow) / scale);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Controls and tilts, piecewise constant in time per mark. values is an
// M x K matrix stored row-major in time: values[j*K + k] on (t_j, t_{j+1}].

struct Control {
  std::vector<double> time_grid;  // M+1 nodes, 0 = t_0 < ... < t_M = T
  std::size_t n_marks = 0;
  std::vector<double> values;

  std::size_t n_steps() const { return time_grid.empty() ? 0 : time_grid.size() - 1; }
  double at(std::size_t j, std::size_t k) const { return values[j * n_marks + k]; }
  double& at(std::size_t j, std::size_t k) { return values[j * n_marks + k]; }
};

namespace detail {

inline void require_time_grid(const std::vector<double>& tg) {
  if (tg.size() < 2) throw InputError("time grid needs at least two nodes");
  if (tg.front() != 0.0) throw InputError("time grid must start at 0");
  for (std::size_t j = 1; j < tg.size(); ++j)
    if (!(tg[j] > tg[j - 1])) throw InputError("time grid must be strictly increasing");
}

// Cell index j with t in (t_j, t_{j+1}]; out-of-range t clamps to the ends.
inline std::size_t cell_of(const std::vector<double>& tg, double t) {
  const auto it = std::lower_bound(tg.begin(), tg.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - tg.begin());
  if (i == 0) return 0;
  if (i >= tg.size()) return tg.size() - 2;
  return i - 1;
}

}  // namespace detail

inline Control make_control(std::vector<double> time_grid, std::size_t n_marks,
                            double fill = 0.0) {
  detail::require_time_grid(time_grid);
  if (n_marks == 0) throw InputError("control needs at least one mark");
  Control c;
  c.n_marks = n_marks;
  c.values.assign((time_grid.size() - 1) * n_marks, fill);
  c.time_grid = std::move(time_grid);
  return c;
}

// Left-endpoint sampling of a continuous-time control (t, k) -> phi.
template <typename F>
Control control_from_function(std::vector<double> time_grid, std::size_t n_marks, F&& f) {
  Control c = make_control(std::move(time_grid), n_marks);
  for (std::size_t j = 0; j < c.n_steps(); ++j)
    for (std::size_t k = 0; k < n_marks; ++k) c.at(j, k) = f(c.time_grid[j], k);
  return c;
}

// ||phi||_2^2 = sum_{j,k} phi_{jk}^2 nu_k dt_j, the exact L2(nu_T) norm for
// piecewise-constant controls.
inline double l2_norm_sq(const Control& phi, const MarkSpace& space) {
  if (phi.n_marks != space.size())
    throw InputError("control and mark space disagree on the number of marks");
  double acc = 0.0;
  for (std::size_t j = 0; j < phi.n_steps(); ++j) {
    const double dt = phi.time_grid[j + 1] - phi.time_grid[j];
    for (std::size_t k = 0; k < phi.n_marks; ++k) {
      const double v = phi.at(j, k);
      acc += v * v * space.weights[k] * dt;
    }
  }
  return acc;
}

// beta-truncation mask: entries with |phi| > threshold are zeroed.
inline Control truncated(const Control& phi, double threshold) {
  if (!(threshold >= 0.0)) throw InputError("truncation threshold must be nonnegative");
  Control out = phi;
  for (double& v : out.values)
    if (std::abs(v) > threshold) v = 0.0;
  return out;
}

struct Tilt {
  std::vector<double> time_grid;
  std::size_t n_marks = 0;
  std::vector<double> values;  // psi >= 0, within [1/bound, bound]
  double bound = 1.0;          // the class index n

  std::size_t n_steps() const { return time_grid.empty() ? 0 : time_grid.size() - 1; }
  double at(std::size_t j, std::size_t k) const { return values[j * n_marks + k]; }
  double& at(std::size_t j, std::size_t k) { return values[j * n_marks + k]; }
};

inline void validate_tilt(const Tilt& psi) {
  detail::require_time_grid(psi.time_grid);
  if (psi.n_marks == 0) throw InputError("tilt needs at least one mark");
  if (psi.values.size() != psi.n_steps() * psi.n_marks)
    throw InputError("tilt value matrix has the wrong shape");
  if (!(psi.bound >= 1.0)) throw InputError("tilt bound must be >= 1");
  const double slack = 1e-12 * psi.bound;
  for (double v : psi.values) {
    if (!std::isfinite(v)) throw InputError("tilt entries must be finite");
    if (v < 1.0 / psi.bound - slack || v > psi.bound + slack)
      throw InputError("tilt entries must lie in [1/n, n]");
  }
}

inline Tilt make_tilt(std::vector<double> time_grid, std::size_t n_marks, double value,
                      double bound) {
  Tilt psi;
  psi.n_marks = n_marks;
  psi.values.assign((time_grid.size() < 2 ? 0 : time_grid.size() - 1) * n_marks, value);
  psi.time_grid = std::move(time_grid);
  psi.bound = bound;
  validate_tilt(psi);
  return psi;
}

inline Tilt unit_tilt(std::vector<double> time_grid, std::size_t n_marks) {
  return make_tilt(std::move(time_grid), n_marks, 1.0, 1.0);
}

struct TiltBuildResult {
  Tilt tilt;
  double clip_fraction = 0.0;  // fraction of cells clipped into [1/n, n]
};

// psi = 1 + a phi, clipped into [1/n, n]. Clipping is reported, never fatal.
inline TiltBuildResult tilt_from_control(const Control& phi, double a, double bound) {
  if (!(a > 0.0)) throw InputError("tilt construction needs a > 0");
  if (!(bound >= 1.0)) throw InputError("tilt bound must be >= 1");
  TiltBuildResult r;
  r.tilt.time_grid = phi.time_grid;
  r.tilt.n_marks = phi.n_marks;
  r.tilt.bound = bound;
  r.tilt.values.resize(phi.values.size());
  const double lo = 1.0 / bound, hi = bound;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < phi.values.size(); ++i) {
    double v = 1.0 + a * phi.values[i];
    if (v < lo) {
      v = lo;
      ++clipped;
    } else if (v > hi) {
      v = hi;
      ++clipped;
    }
    r.tilt.values[i] = v;
  }
  validate_tilt(r.tilt);
  r.clip_fraction =
      phi.values.empty() ? 0.0 : static_cast<double>(clipped) / phi.values.size();
  return r;
}

// ---------------------------------------------------------------------------
// Deviation scale: epsilon together with a(epsilon). The MDP window
// (a -> 0 and eps/a^2 -> 0) is a property of a whole epsilon grid and is
// checked by the experiments, not per instance.

struct DeviationScale {
  double epsilon = 0.0;
  double a_of_eps = 0.0;
  std::string description;

  double speed() const { return epsilon / (a_of_eps * a_of_eps); }
};

inline DeviationScale make_power_scale(double epsilon, double gamma) {
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  if (!(gamma > 0.0 && gamma < 0.5)) throw InputError("gamma must lie in (0, 0.5)");
  DeviationScale s;
  s.epsilon = epsilon;
  s.a_of_eps = std::pow(epsilon, gamma);
  s.description = "a(eps)=eps^" + std::to_string(gamma);
  return s;
}

// ---------------------------------------------------------------------------
// Point process sampling.

struct PointProcessSample {
  std::vector<double> times;        // sorted, in (0, T]
  std::vector<std::size_t> marks;   // parallel to times

  std::size_t count() const { return times.size(); }
};

namespace detail {

struct TimedPoint {
  double t;
  std::size_t k;
};

// Per-mark exponential gaps, merged stably (mark-major insertion order breaks
// the measure-zero ties). Both samplers below share this layout so a tilt
// psi == 1 with bound 1 consumes the exact same draws as the plain sampler.
inline PointProcessSample merge_points(std::vector<TimedPoint>& pts) {
  std::stable_sort(pts.begin(), pts.end(),
                   [](const TimedPoint& a, const TimedPoint& b) { return a.t < b.t; });
  PointProcessSample out;
  out.times.reserve(pts.size());
  out.marks.reserve(pts.size());
  for (const TimedPoint& p : pts) {
    out.times.push_back(p.t);
    out.marks.push_back(p.k);
  }
  return out;
}

inline void require_point_budget(double expected, double max_expected) {
  if (expected > max_expected)
    throw ResourceError("expected point count " + std::to_string(expected) +
                        " exceeds the memory budget " + std::to_string(max_expected));
}

}  // namespace detail

// Homogeneous PRM with intensity eps^{-1} nu_T: count ~ Poisson(eps^{-1} nu(Z) T),
// times uniform, marks proportional to nu.
inline PointProcessSample sample_prm(const MarkSpace& space, double epsilon, double T,
                                     RngStream& rng, double max_expected = 1e8) {
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  if (!(T > 0.0)) throw InputError("horizon must be positive");
  detail::require_point_budget(space.total_mass * T / epsilon, max_expected);
  std::vector<detail::TimedPoint> pts;
  for (std::size_t k = 0; k < space.size(); ++k) {
    const double rate = space.weights[k] / epsilon;
    for (double t = rng.exponential(rate); t <= T; t += rng.exponential(rate))
      pts.push_back({t, k});
  }
  return detail::merge_points(pts);
}

// Tilted PRM with intensity eps^{-1} psi(t,z) nu(dz) dt, by thinning: dominate
// at rate eps^{-1} n nu per mark, accept each point with probability psi/n.
// The acceptance draw is skipped when the probability is exactly 1, which
// keeps psi == 1 (bound 1) pathwise identical to sample_prm on matched seeds.
inline PointProcessSample sample_controlled_prm(const MarkSpace& space, double epsilon,
                                                const Tilt& psi, RngStream& rng,
                                                double max_expected = 1e8) {
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  validate_tilt(psi);
  if (psi.n_marks != space.size())
    throw InputError("tilt and mark space disagree on the number of marks");
  const double T = psi.time_grid.back();
  const double n = psi.bound;
  detail::require_point_budget(n * space.total_mass * T / epsilon, max_expected);
  std::vector<detail::TimedPoint> pts;
  for (std::size_t k = 0; k < space.size(); ++k) {
    const double rate = n * space.weights[k] / epsilon;
    for (double t = rng.exponential(rate); t <= T; t += rng.exponential(rate)) {
      const double p = psi.at(detail::cell_of(psi.time_grid, t), k) / n;
      if (p >= 1.0 || rng.uniform() < p) pts.push_back({t, k});
    }
  }
  return detail::merge_points(pts);
}

// ---------------------------------------------------------------------------
// Girsanov log-weight log(dP/dP^psi) on a sample drawn under the tilt:
//   -sum_points log psi(t, z) + eps^{-1} sum_{j,k} (psi_{jk} - 1) nu_k dt_j.
// Reweighting tilted samples by exp of this reproduces plain-measure means.

inline double girsanov_log_weight(const PointProcessSample& sample, const Tilt& psi,
                                  double epsilon, const MarkSpace& space, double T) {
  if (!(epsilon > 0.0)) throw InputError("epsilon must be positive");
  validate_tilt(psi);
  if (psi.n_marks != space.size())
    throw InputError("tilt and mark space disagree on the number of marks");
  if (std::abs(psi.time_grid.back() - T) > 1e-9 * std::max(1.0, T))
    throw InputError("girsanov horizon does not match the tilt grid");
  double w = 0.0;
  for (std::size_t i = 0; i < sample.count(); ++i) {
    const double v = psi.at(detail::cell_of(psi.time_grid, sample.times[i]), sample.marks[i]);
    w -= std::log(v);
  }
  double comp = 0.0;
  for (std::size_t j = 0; j < psi.n_steps(); ++j) {
    const double dt = psi.time_grid[j + 1] - psi.time_grid[j];
    for (std::size_t k = 0; k < psi.n_marks; ++k)
      comp += (psi.at(j, k) - 1.0) * space.weights[k] * dt;
  }
  return w + comp / epsilon;
}

// ---------------------------------------------------------------------------
// Entropy cost Q(psi) = sum_{j,k} l(psi_{jk}) nu_k dt_j with
// l(x) = x log x - x + 1 and l(0) = 1.

inline double entropy_ell(double x) {
  if (x < 0.0) throw InputError("q-functional entries must be nonnegative");
  if (x == 0.0) return 1.0;
  return x * std::log(x) - x + 1.0;
}

inline double q_functional(const std::vector<double>& time_grid, std::size_t n_marks,
                           const std::vector<double>& values, const MarkSpace& space) {
  detail::require_time_grid(time_grid);
  if (n_marks != space.size())
    throw InputError("q-functional: values and mark space disagree on marks");
  if (values.size() != (time_grid.size() - 1) * n_marks)
    throw InputError("q-functional value matrix has the wrong shape");
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < time_grid.size(); ++j) {
    const double dt = time_grid[j + 1] - time_grid[j];
    for (std::size_t k = 0; k < n_marks; ++k)
      acc += entropy_ell(values[j * n_marks + k]) * space.weights[k] * dt;
  }
  return acc;
}

inline double q_functional(const Tilt& psi, const MarkSpace& space) {
  return q_functional(psi.time_grid, psi.n_marks, psi.values, space);
}

// ---------------------------------------------------------------------------
// Admissibility: psi belongs to the budget-m class iff Q(psi) <= m a^2(eps).

struct AdmissibilityReport {
  bool admissible = false;
  double q_value = 0.0;
  double budget = 0.0;
  double phi_l2_norm = 0.0;  // ||(psi-1)/a||_2
};

inline AdmissibilityReport check_admissible(const Tilt& psi, double m,
                                            const DeviationScale& scale,
                                            const MarkSpace& space) {
  if (!(m > 0.0)) throw InputError("admissibility budget m must be positive");
  AdmissibilityReport rep;
  rep.q_value = q_functional(psi, space);
  rep.budget = m * scale.a_of_eps * scale.a_of_eps;
  rep.admissible = rep.q_value <= rep.budget;
  double acc = 0.0;
  const double a = scale.a_of_eps;
  for (std::size_t j = 0; j < psi.n_steps(); ++j) {
    const double dt = psi.time_grid[j + 1] - psi.time_grid[j];
    for (std::size_t k = 0; k < psi.n_marks; ++k) {
      const double phi = (psi.at(j, k) - 1.0) / a;
      acc += phi * phi * space.weights[k] * dt;
    }
  }
  rep.phi_l2_norm = std::sqrt(acc);
  return rep;
}

}  // namespace mdplab
