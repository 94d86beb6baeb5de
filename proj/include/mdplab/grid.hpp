#pragma once

// Time grids, cadlag trajectories, and the discrete path-space metrics.
// The path topology D([0,T];H) ∩ L2([0,T];V) is realized on grids as the
// pair (sup-node H-norm, left-endpoint L2-V quadrature); uniform-on-grid
// dominates Skorokhod for the convergence-to-zero checks we run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mdplab/core.hpp"
#include "mdplab/model.hpp"

namespace mdplab {

struct TimeGrid {
  double T = 0.0;
  double h = 0.0;
  std::vector<double> times;  // uniform base nodes t_j = j T / M

  std::size_t n_steps() const { return times.empty() ? 0 : times.size() - 1; }
};

inline TimeGrid make_time_grid(double T, double h) {
  if (!(T > 0.0)) throw InputError("horizon must be positive");
  if (!(h > 0.0)) throw InputError("base step must be positive");
  const double m_real = T / h;
  const auto M = static_cast<std::size_t>(std::llround(m_real));
  if (M < 1 || std::abs(static_cast<double>(M) - m_real) > 1e-8 * std::max(1.0, m_real))
    throw InputError("base step must divide the horizon");
  TimeGrid g;
  g.T = T;
  g.h = T / static_cast<double>(M);
  g.times.resize(M + 1);
  for (std::size_t j = 0; j <= M; ++j)
    g.times[j] = T * static_cast<double>(j) / static_cast<double>(M);
  return g;
}

// Node rows in time order. Jump nodes appear twice: the left limit first
// (post_jump = 0), then the post-jump value at the same time (post_jump = 1).
struct Trajectory {
  std::vector<double> times;
  std::vector<StateVector> states;
  std::vector<std::uint8_t> post_jump;
  std::string model_label;
  double epsilon = 0.0;       // 0 for deterministic / skeleton runs
  std::uint64_t seed = 0;     // filled by the orchestration layer
  double energy_defect = 0.0; // deterministic runs only
  std::size_t n_jumps = 0;

  std::size_t rows() const { return times.size(); }
  const StateVector& final_state() const { return states.back(); }
};

inline void append_row(Trajectory& tr, double t, const StateVector& u, bool jumped) {
  tr.times.push_back(t);
  tr.states.push_back(u);
  tr.post_jump.push_back(jumped ? 1 : 0);
}

// Piecewise-constant-left lookup: the value at the last node with time <= t.
// On doubled jump nodes this lands on the post-jump row, i.e. the cadlag value.
inline const StateVector& state_at_left(const Trajectory& tr, double t) {
  if (tr.times.empty()) throw InputError("lookup into an empty trajectory");
  const auto it = std::upper_bound(tr.times.begin(), tr.times.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - tr.times.begin());
  return tr.states[i == 0 ? 0 : i - 1];
}

// Piecewise-linear read, for continuous reference paths (deterministic flow,
// skeletons). A left-constant read of a smooth path is only first-order
// accurate and pollutes small gap statistics at off-grid query times; linear
// interpolation is second-order. Doubled nodes degrade to the cadlag value.
inline void state_interp(const Trajectory& tr, double t, StateVector& out) {
  if (tr.times.empty()) throw InputError("lookup into an empty trajectory");
  const auto it = std::upper_bound(tr.times.begin(), tr.times.end(), t);
  const std::size_t i = it == tr.times.begin()
                            ? 0
                            : static_cast<std::size_t>(it - tr.times.begin()) - 1;
  if (i + 1 >= tr.rows() || !(tr.times[i + 1] > tr.times[i]) || !(t > tr.times[i])) {
    out = tr.states[i];
    return;
  }
  const double w =
      std::min(1.0, (t - tr.times[i]) / (tr.times[i + 1] - tr.times[i]));
  out = tr.states[i];
  vec::scale(out, 1.0 - w);
  vec::axpy(w, tr.states[i + 1], out);
}

inline double sup_h_norm_sq(const Trajectory& tr) {
  double best = 0.0;
  for (const StateVector& u : tr.states) best = std::max(best, vec::norm2_sq(u));
  return best;
}

// Left-endpoint quadrature sum ||u(t_i)||_V^2 (t_{i+1} - t_i). Left-limit rows
// of doubled nodes contribute zero width; the post-jump row carries the cell.
inline double l2_v_norm_sq(const Trajectory& tr, const ModelSpec& model) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < tr.rows(); ++i)
    acc += v_norm_sq(model, tr.states[i]) * (tr.times[i + 1] - tr.times[i]);
  return acc;
}

// sup-H^2 and L2-V^2 components of a path (or of a difference against a
// reference looked up piecewise-constant-left on its own grid).
struct PathGap {
  double sup_sq = 0.0;
  double l2v_sq = 0.0;

  double total() const { return sup_sq + l2v_sq; }
};

inline PathGap path_seminorm(const Trajectory& tr, const ModelSpec& model) {
  PathGap g;
  g.sup_sq = sup_h_norm_sq(tr);
  g.l2v_sq = l2_v_norm_sq(tr, model);
  return g;
}

inline PathGap path_gap(const Trajectory& tr, const Trajectory& ref,
                        const ModelSpec& model) {
  PathGap g;
  StateVector diff;
  for (std::size_t i = 0; i < tr.rows(); ++i) {
    diff = tr.states[i];
    vec::axpy(-1.0, state_at_left(ref, tr.times[i]), diff);
    g.sup_sq = std::max(g.sup_sq, vec::norm2_sq(diff));
    if (i + 1 < tr.rows()) g.l2v_sq += v_norm_sq(model, diff) * (tr.times[i + 1] - tr.times[i]);
  }
  return g;
}

}  // namespace mdplab
