#pragma once

// Semi-implicit time integration of the four equations: the deterministic
// limit, the small-noise jump equation, the controlled skeleton, and the
// controlled moderate-deviation equation; plus the discrete adjoint of the
// linearized flow. The stiff diagonal part is implicit (a componentwise
// resolvent solve), B and the jump terms explicit at left endpoints.
//
// Integration cores are observer templates: obs(t, state, post_jump) fires at
// every node row in time order, jump rows twice (left limit, then post-jump
// value). evolve_* wrappers record full trajectories; the experiment layer
// passes streaming observers instead and never stores paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mdplab/core.hpp"
#include "mdplab/grid.hpp"
#include "mdplab/model.hpp"
#include "mdplab/noise.hpp"
#include "mdplab/rng.hpp"

namespace mdplab {

struct StepControls {
  double eps_ceiling = 0.5;        // no well-posedness claim above this
  double max_expected_points = 1e8;
};

namespace detail {

// out = (I + dt A)^{-1} (u + dt rhs), the semi-implicit update.
inline void resolvent_step(const ModelSpec& model, const StateVector& u,
                           const StateVector& rhs, double dt, StateVector& out) {
  out.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    out[i] = (u[i] + dt * rhs[i]) / (1.0 + dt * model.a_eigenvalues[i]);
}

// rhs += factor * sum_k G(t, u, z_k) nu_k  (the compensator/control drift)
inline void add_weighted_jump_sum(const JumpCoefficient& g, const MarkSpace& space,
                                  double t, const StateVector& u, double factor,
                                  StateVector& rhs, StateVector& scratch) {
  if (g.is_zero()) return;
  scratch.resize(u.size());
  for (std::size_t k = 0; k < space.size(); ++k) {
    g.g_eval(t, u, k, scratch);
    vec::axpy(factor * space.weights[k], scratch, rhs);
  }
}

inline void require_finite_state(const StateVector& u, double t, const char* what) {
  if (!vec::all_finite(u))
    throw SolverError(std::string(what) + " diverged (non-finite state) at t=" +
                      std::to_string(t));
}

inline void require_same_grid(const Trajectory& path, const TimeGrid& grid,
                              const char* what) {
  if (path.times != grid.times)
    throw InputError(std::string(what) + ": base path must live on the solver grid");
}

inline void require_initial_state(const ModelSpec& model, const StateVector& u0) {
  if (u0.size() != model.dim)
    throw InputError(model.label + ": initial state has wrong dimension");
  if (!vec::all_finite(u0))
    throw InputError(model.label + ": initial state must be finite");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Deterministic limit equation  du/dt + A u + B(u,u) = 0.
// Returns the energy defect max_j | |u_j|^2 + 2 sum_{l<j} ||u_{l+1}||^2 dt - |u_0|^2 |,
// the discrete residual of the energy inequality.

template <typename Obs>
double integrate_deterministic(const ModelSpec& model, const StateVector& u0,
                               const TimeGrid& grid, Obs&& obs) {
  detail::require_initial_state(model, u0);
  StateVector u = u0, next;
  obs(grid.times[0], static_cast<const StateVector&>(u), false);
  const double e0 = vec::norm2_sq(u0);
  double dissipated = 0.0, defect = 0.0;
  for (std::size_t j = 0; j < grid.n_steps(); ++j) {
    const double dt = grid.times[j + 1] - grid.times[j];
    StateVector rhs = model.bilinear_eval(u, u);
    for (double& r : rhs) r = -r;
    detail::resolvent_step(model, u, rhs, dt, next);
    detail::require_finite_state(next, grid.times[j + 1], "deterministic solver");
    dissipated += 2.0 * v_norm_sq(model, next) * dt;
    defect = std::max(defect, std::abs(vec::norm2_sq(next) + dissipated - e0));
    u.swap(next);
    obs(grid.times[j + 1], static_cast<const StateVector&>(u), false);
  }
  return defect;
}

inline Trajectory evolve_deterministic(const ModelSpec& model, const StateVector& u0,
                                       const TimeGrid& grid) {
  Trajectory tr;
  tr.model_label = model.label;
  tr.energy_defect = integrate_deterministic(
      model, u0, grid,
      [&tr](double t, const StateVector& u, bool pj) { append_row(tr, t, u, pj); });
  return tr;
}

// ---------------------------------------------------------------------------
// Small-noise jump equation
//   du + (A u + B(u,u)) dt = eps * integral G dN~^{eps^-1}.
// Jump-adapted: the point process is sampled up front, jump times become extra
// nodes, and the compensated integral splits into the drift -sum G nu between
// events plus eps-scaled jumps at events, both with G at left limits.

template <typename Obs>
std::size_t integrate_stochastic(const ModelSpec& model, const JumpCoefficient& g,
                                 const MarkSpace& space, const DeviationScale& scale,
                                 const StateVector& u0, const TimeGrid& grid,
                                 RngStream& rng, Obs&& obs,
                                 const StepControls& ctl = {}) {
  detail::require_initial_state(model, u0);
  if (!(scale.epsilon > 0.0) || scale.epsilon > ctl.eps_ceiling)
    throw InputError("epsilon must lie in (0, " + std::to_string(ctl.eps_ceiling) +
                     "]: no well-posedness claim beyond the ceiling");
  if (g.is_zero())  // structural zero noise: exactly the deterministic path
    return integrate_deterministic(model, u0, grid, std::forward<Obs>(obs)), 0;

  const PointProcessSample pts =
      sample_prm(space, scale.epsilon, grid.T, rng, ctl.max_expected_points);
  StateVector u = u0, next, rhs, gbuf;
  obs(grid.times[0], static_cast<const StateVector&>(u), false);

  const auto advance = [&](double t_from, double dt) {
    rhs = model.bilinear_eval(u, u);
    for (double& r : rhs) r = -r;
    detail::add_weighted_jump_sum(g, space, t_from, u, -1.0, rhs, gbuf);
    detail::resolvent_step(model, u, rhs, dt, next);
    u.swap(next);
    detail::require_finite_state(u, t_from + dt, "stochastic solver");
  };

  double cur = 0.0;
  std::size_t pi = 0;
  gbuf.resize(model.dim);
  for (std::size_t j = 0; j < grid.n_steps(); ++j) {
    const double t_end = grid.times[j + 1];
    while (pi < pts.count() && pts.times[pi] <= t_end) {
      const double tau = pts.times[pi];
      const std::size_t k = pts.marks[pi];
      if (tau > cur) advance(cur, tau - cur);
      obs(tau, static_cast<const StateVector&>(u), false);  // left limit
      g.g_eval(tau, u, k, gbuf);
      vec::axpy(scale.epsilon, gbuf, u);
      detail::require_finite_state(u, tau, "stochastic solver");
      obs(tau, static_cast<const StateVector&>(u), true);
      cur = tau;
      ++pi;
    }
    if (cur < t_end) {
      advance(cur, t_end - cur);
      obs(t_end, static_cast<const StateVector&>(u), false);
      cur = t_end;
    }
  }
  return pts.count();
}

inline Trajectory evolve_stochastic(const ModelSpec& model, const JumpCoefficient& g,
                                    const MarkSpace& space, const DeviationScale& scale,
                                    const StateVector& u0, const TimeGrid& grid,
                                    RngStream& rng, const StepControls& ctl = {}) {
  Trajectory tr;
  tr.model_label = model.label;
  tr.epsilon = scale.epsilon;
  tr.n_jumps = integrate_stochastic(
      model, g, space, scale, u0, grid, rng,
      [&tr](double t, const StateVector& u, bool pj) { append_row(tr, t, u, pj); }, ctl);
  return tr;
}

// ---------------------------------------------------------------------------
// Skeleton equation  dY/dt + A Y + B(Y,u0) + B(u0,Y) = sum_k G(t,u0,z_k) phi_k nu_k,
// Y(0) = 0, linear and nonautonomous along the precomputed base path u0.

template <typename Obs>
void integrate_skeleton(const ModelSpec& model, const JumpCoefficient& g,
                        const MarkSpace& space, const Control& phi,
                        const Trajectory& u0_path, const TimeGrid& grid, Obs&& obs) {
  detail::require_same_grid(u0_path, grid, "skeleton solver");
  if (phi.time_grid != grid.times)
    throw InputError("skeleton solver: control must live on the solver grid");
  if (phi.n_marks != space.size())
    throw InputError("skeleton solver: control and mark space disagree on marks");

  StateVector y(model.dim, 0.0), next, rhs(model.dim), gbuf(model.dim);
  obs(grid.times[0], static_cast<const StateVector&>(y), false);
  for (std::size_t j = 0; j < grid.n_steps(); ++j) {
    const double t = grid.times[j];
    const double dt = grid.times[j + 1] - t;
    const StateVector& base = u0_path.states[j];
    rhs = model.bilinear_eval(y, base);
    const StateVector b2 = model.bilinear_eval(base, y);
    for (std::size_t i = 0; i < model.dim; ++i) rhs[i] = -rhs[i] - b2[i];
    if (!g.is_zero()) {
      for (std::size_t k = 0; k < space.size(); ++k) {
        g.g_eval(t, base, k, gbuf);
        vec::axpy(phi.at(j, k) * space.weights[k], gbuf, rhs);
      }
    }
    detail::resolvent_step(model, y, rhs, dt, next);
    detail::require_finite_state(next, grid.times[j + 1], "skeleton solver");
    y.swap(next);
    obs(grid.times[j + 1], static_cast<const StateVector&>(y), false);
  }
}

inline Trajectory solve_skeleton(const ModelSpec& model, const JumpCoefficient& g,
                                 const MarkSpace& space, const Control& phi,
                                 const Trajectory& u0_path, const TimeGrid& grid) {
  Trajectory tr;
  tr.model_label = model.label;
  integrate_skeleton(model, g, space, phi, u0_path, grid,
                     [&tr](double t, const StateVector& y, bool pj) {
                       append_row(tr, t, y, pj);
                     });
  return tr;
}

inline StateVector skeleton_endpoint(const ModelSpec& model, const JumpCoefficient& g,
                                     const MarkSpace& space, const Control& phi,
                                     const Trajectory& u0_path, const TimeGrid& grid) {
  StateVector out;
  integrate_skeleton(model, g, space, phi, u0_path, grid,
                     [&out](double, const StateVector& y, bool) { out = y; });
  return out;
}

// ---------------------------------------------------------------------------
// Controlled moderate-deviation equation for M^{psi_eps}: between events the
// drift is -A M - [a B(M,M) + B(M,u0) + B(u0,M)] - (1/a) sum_k G(t, aM+u0, z_k) nu_k
// (compensator and control drift combined), with jumps (eps/a) G at the tilted
// intensity. u0 is looked up piecewise-constant-left on the base grid.

template <typename Obs>
std::size_t integrate_controlled_with_points(
    const ModelSpec& model, const JumpCoefficient& g, const MarkSpace& space,
    const DeviationScale& scale, const Tilt& psi, const Trajectory& u0_path,
    const TimeGrid& grid, const PointProcessSample& pts, Obs&& obs,
    const StepControls& ctl = {}) {
  detail::require_same_grid(u0_path, grid, "controlled solver");
  if (psi.time_grid != grid.times)
    throw InputError("controlled solver: tilt must live on the solver grid");
  if (!(scale.epsilon > 0.0) || scale.epsilon > ctl.eps_ceiling)
    throw InputError("epsilon must lie in (0, " + std::to_string(ctl.eps_ceiling) +
                     "]: no well-posedness claim beyond the ceiling");
  const double a = scale.a_of_eps;
  if (!(a > 0.0)) throw InputError("controlled solver: a(eps) must be positive");
  if (g.is_zero() && pts.count() > 0)
    throw InputError("controlled solver: jump points supplied with a null coefficient");

  StateVector m(model.dim, 0.0), next, rhs, gbuf(model.dim), w(model.dim);
  obs(grid.times[0], static_cast<const StateVector&>(m), false);

  std::size_t base_j = 0;
  const auto advance = [&](double t_from, double dt) {
    const StateVector& u0 = u0_path.states[base_j];
    rhs = model.bilinear_eval(m, m);
    const StateVector bmu = model.bilinear_eval(m, u0);
    const StateVector bum = model.bilinear_eval(u0, m);
    for (std::size_t i = 0; i < model.dim; ++i)
      rhs[i] = -a * rhs[i] - bmu[i] - bum[i];
    if (!g.is_zero()) {
      for (std::size_t i = 0; i < model.dim; ++i) w[i] = a * m[i] + u0[i];
      detail::add_weighted_jump_sum(g, space, t_from, w, -1.0 / a, rhs, gbuf);
    }
    detail::resolvent_step(model, m, rhs, dt, next);
    m.swap(next);
    detail::require_finite_state(m, t_from + dt, "controlled solver");
  };

  double cur = 0.0;
  std::size_t pi = 0;
  for (std::size_t j = 0; j < grid.n_steps(); ++j) {
    base_j = j;
    const double t_end = grid.times[j + 1];
    while (pi < pts.count() && pts.times[pi] <= t_end) {
      const double tau = pts.times[pi];
      const std::size_t k = pts.marks[pi];
      if (tau > cur) advance(cur, tau - cur);
      obs(tau, static_cast<const StateVector&>(m), false);
      const StateVector& u0 = u0_path.states[j];
      for (std::size_t i = 0; i < model.dim; ++i) w[i] = a * m[i] + u0[i];
      g.g_eval(tau, w, k, gbuf);
      vec::axpy(scale.epsilon / a, gbuf, m);
      detail::require_finite_state(m, tau, "controlled solver");
      obs(tau, static_cast<const StateVector&>(m), true);
      cur = tau;
      ++pi;
    }
    if (cur < t_end) {
      advance(cur, t_end - cur);
      obs(t_end, static_cast<const StateVector&>(m), false);
      cur = t_end;
    }
  }
  return pts.count();
}

template <typename Obs>
std::size_t integrate_controlled(const ModelSpec& model, const JumpCoefficient& g,
                                 const MarkSpace& space, const DeviationScale& scale,
                                 const Tilt& psi, const Trajectory& u0_path,
                                 const TimeGrid& grid, RngStream& rng, Obs&& obs,
                                 const StepControls& ctl = {}) {
  if (!(scale.epsilon > 0.0) || scale.epsilon > ctl.eps_ceiling)
    throw InputError("epsilon must lie in (0, " + std::to_string(ctl.eps_ceiling) +
                     "]: no well-posedness claim beyond the ceiling");
  PointProcessSample pts;
  if (!g.is_zero())
    pts = sample_controlled_prm(space, scale.epsilon, psi, rng, ctl.max_expected_points);
  return integrate_controlled_with_points(model, g, space, scale, psi, u0_path, grid,
                                          pts, obs, ctl);
}

inline Trajectory evolve_controlled_moderate(const ModelSpec& model,
                                             const JumpCoefficient& g,
                                             const MarkSpace& space,
                                             const DeviationScale& scale, const Tilt& psi,
                                             const Trajectory& u0_path,
                                             const TimeGrid& grid, RngStream& rng,
                                             const StepControls& ctl = {}) {
  Trajectory tr;
  tr.model_label = model.label;
  tr.epsilon = scale.epsilon;
  tr.n_jumps = integrate_controlled(
      model, g, space, scale, psi, u0_path, grid, rng,
      [&tr](double t, const StateVector& m, bool pj) { append_row(tr, t, m, pj); }, ctl);
  return tr;
}

// ---------------------------------------------------------------------------
// Discrete adjoint of the linearized skeleton flow. The forward step is
//   Y_{j+1} = S_j (Y_j - dt L_j Y_j + dt f_j),   S_j = (I + dt A)^{-1},
//   L_j Y   = B(Y, u0_j) + B(u0_j, Y),
// so the exact transpose runs r_j = S_j p_{j+1}, p_j = r_j - dt L_j^T r_j with
//   L_j^T r = first_slot_adjoint(u0_j, r) - B(u0_j, r)
// (the second term by skew-symmetry of the last two slots). step_fn(j, r_j, p_j)
// fires per step; <dt f_j, r_j> is the adjoint-side pairing the rate module
// assembles its induced controls from.

namespace detail {

inline StateVector apply_linearized_transpose(const ModelSpec& model,
                                              const StateVector& base,
                                              const StateVector& r) {
  StateVector out;
  if (model.first_slot_adjoint) {
    out = model.first_slot_adjoint(base, r);
  } else {
    out.assign(model.dim, 0.0);
    StateVector e(model.dim, 0.0);
    for (std::size_t i = 0; i < model.dim; ++i) {
      e[i] = 1.0;
      out[i] = vec::dot(model.bilinear_eval(e, base), r);
      e[i] = 0.0;
    }
  }
  const StateVector b = model.bilinear_eval(base, r);
  for (std::size_t i = 0; i < model.dim; ++i) out[i] -= b[i];
  return out;
}

}  // namespace detail

template <typename StepFn>
StateVector integrate_adjoint(const ModelSpec& model, const Trajectory& u0_path,
                              const StateVector& terminal, const TimeGrid& grid,
                              StepFn&& step_fn) {
  detail::require_same_grid(u0_path, grid, "adjoint solver");
  if (terminal.size() != model.dim)
    throw InputError("adjoint solver: terminal vector has wrong dimension");
  if (!vec::all_finite(terminal))
    throw InputError("adjoint solver: terminal vector must be finite");

  StateVector p = terminal, r(model.dim);
  for (std::size_t j = grid.n_steps(); j-- > 0;) {
    const double dt = grid.times[j + 1] - grid.times[j];
    for (std::size_t i = 0; i < model.dim; ++i)
      r[i] = p[i] / (1.0 + dt * model.a_eigenvalues[i]);
    const StateVector lt = detail::apply_linearized_transpose(model, u0_path.states[j], r);
    for (std::size_t i = 0; i < model.dim; ++i) p[i] = r[i] - dt * lt[i];
    detail::require_finite_state(p, grid.times[j], "adjoint solver");
    step_fn(j, static_cast<const StateVector&>(r), static_cast<const StateVector&>(p));
  }
  return p;
}

inline Trajectory linearized_adjoint_solve(const ModelSpec& model,
                                           const Trajectory& u0_path,
                                           const StateVector& terminal,
                                           const TimeGrid& grid) {
  Trajectory tr;
  tr.model_label = model.label;
  tr.times = grid.times;
  tr.post_jump.assign(grid.times.size(), 0);
  tr.states.assign(grid.times.size(), StateVector());
  tr.states.back() = terminal;
  integrate_adjoint(model, u0_path, terminal, grid,
                    [&tr](std::size_t j, const StateVector&, const StateVector& p) {
                      tr.states[j] = p;
                    });
  return tr;
}

// The adjoint-induced control chi_{jk} = <G(t_j, u0_j, z_k), r_j>: the L2(nu_T)
// representer of phi -> <Y^phi(T), terminal>, i.e. the column L* terminal.
inline Control adjoint_induced_control(const ModelSpec& model, const JumpCoefficient& g,
                                       const MarkSpace& space, const Trajectory& u0_path,
                                       const StateVector& terminal, const TimeGrid& grid) {
  Control chi = make_control(grid.times, space.size());
  if (g.is_zero()) return chi;
  StateVector gbuf(model.dim);
  integrate_adjoint(model, u0_path, terminal, grid,
                    [&](std::size_t j, const StateVector& r, const StateVector&) {
                      for (std::size_t k = 0; k < space.size(); ++k) {
                        g.g_eval(grid.times[j], u0_path.states[j], k, gbuf);
                        chi.at(j, k) = vec::dot(gbuf, r);
                      }
                    });
  return chi;
}

}  // namespace mdplab
