#include <catch2/catch_amalgamated.hpp>
using Catch::Approx;

#include <cmath>
#include <vector>

#include "mdplab/models/linear.hpp"
#include "mdplab/models/nse2d.hpp"
#include "mdplab/solvers.hpp"

using namespace mdplab;

namespace {

ModelSpec scalar_model() { return build_linear({1, {1.0}}); }

// One mark, nu = 1, G == e_0: the workhorse scalar noise setup.
struct ScalarNoise {
  MarkSpace space = make_mark_space({1.0});
  JumpCoefficient g = make_affine_jump(1, {1.0});
};

Control random_control(const TimeGrid& grid, std::size_t n_marks, RngStream& rng) {
  Control c = make_control(grid.times, n_marks);
  for (double& v : c.values) v = rng.normal();
  return c;
}

}  // namespace

TEST_CASE("time grid construction") {
  const TimeGrid g = make_time_grid(1.0, 1e-3);
  REQUIRE(g.n_steps() == 1000);
  REQUIRE(g.times.front() == 0.0);
  REQUIRE(g.times.back() == 1.0);
  REQUIRE(g.times[1] == Approx(1e-3).epsilon(1e-14));
  REQUIRE_THROWS_AS(make_time_grid(1.0, 0.3), InputError);
  REQUIRE_THROWS_AS(make_time_grid(0.0, 0.1), InputError);
  REQUIRE_THROWS_AS(make_time_grid(1.0, -0.1), InputError);
}

TEST_CASE("trajectory metrics and left lookup") {
  Trajectory tr;
  tr.model_label = "hand";
  append_row(tr, 0.0, {1.0}, false);
  append_row(tr, 0.5, {2.0}, false);   // left limit of a jump at 0.5
  append_row(tr, 0.5, {3.0}, true);    // post-jump value
  append_row(tr, 1.0, {0.5}, false);

  REQUIRE(sup_h_norm_sq(tr) == Approx(9.0));
  const ModelSpec m = build_linear({1, {2.0}});
  // left-endpoint quadrature: 1^2*0.5 + 2^2*0 + 3^2*0.5, each times lambda=2
  REQUIRE(l2_v_norm_sq(tr, m) == Approx(2.0 * (0.5 + 4.5)));

  REQUIRE(state_at_left(tr, 0.3)[0] == 1.0);
  REQUIRE(state_at_left(tr, 0.5)[0] == 3.0);  // cadlag value at the jump
  REQUIRE(state_at_left(tr, 0.7)[0] == 3.0);
  REQUIRE(state_at_left(tr, 1.0)[0] == 0.5);

  // Self-gap is exactly zero for jump-free paths (rows align with lookups).
  Trajectory smooth;
  append_row(smooth, 0.0, {1.0}, false);
  append_row(smooth, 0.5, {2.0}, false);
  append_row(smooth, 1.0, {0.5}, false);
  const PathGap self = path_gap(smooth, smooth, m);
  REQUIRE(self.sup_sq == 0.0);
  REQUIRE(self.l2v_sq == 0.0);

  // Against a constant reference the gap follows the cadlag lookup values.
  Trajectory flat;
  append_row(flat, 0.0, {1.0}, false);
  append_row(flat, 1.0, {1.0}, false);
  const PathGap gap = path_gap(tr, flat, m);
  REQUIRE(gap.sup_sq == Approx(4.0));  // |3 - 1|^2 at the post-jump row
  REQUIRE(gap.l2v_sq == Approx(2.0 * (0.0 * 0.5 + 1.0 * 0.0 + 4.0 * 0.5)));
}

TEST_CASE("deterministic solver matches the scalar exponential") {
  const ModelSpec m = scalar_model();
  const TimeGrid grid = make_time_grid(1.0, 1e-3);
  const Trajectory tr = evolve_deterministic(m, {1.0}, grid);
  REQUIRE(tr.rows() == 1001);
  REQUIRE(std::abs(tr.final_state()[0] - std::exp(-1.0)) <= 5e-4);
  // The discrete recursion itself is u_j = (1+h)^{-j}.
  REQUIRE(tr.final_state()[0] == Approx(std::pow(1.001, -1000)).epsilon(1e-12));
  REQUIRE(tr.energy_defect >= 0.0);
}

TEST_CASE("deterministic energy defect shrinks linearly in h") {
  const ModelSpec m = build_nse2d({4, 1.0});
  const StateVector u0 = nse2d_canonical_state(m, 1.0);
  const Trajectory coarse = evolve_deterministic(m, u0, make_time_grid(1.0, 2e-3));
  const Trajectory fine = evolve_deterministic(m, u0, make_time_grid(1.0, 1e-3));
  REQUIRE(coarse.energy_defect > 0.0);
  const double ratio = coarse.energy_defect / fine.energy_defect;
  REQUIRE(ratio >= 1.7);
  REQUIRE(ratio <= 2.3);
  // Energy inequality with the defect as the only slack.
  const double e0 = vec::norm2_sq(u0);
  REQUIRE(sup_h_norm_sq(fine) <= e0 + fine.energy_defect + 1e-15);
}

TEST_CASE("nse2d H-norm decays monotonically up to O(h^2) per step") {
  const ModelSpec m = build_nse2d({6, 1.0});
  RngStream rng(7321, 0, "decay");
  StateVector u0(m.dim);
  for (double& x : u0) x = rng.normal();
  vec::scale(u0, 1.0 / vec::norm2(u0));
  const double h = 1e-3;
  const Trajectory tr = evolve_deterministic(m, u0, make_time_grid(1.0, h));
  double prev = vec::norm2(tr.states[0]);
  double worst_rise = 0.0;
  for (std::size_t j = 1; j < tr.rows(); ++j) {
    const double cur = vec::norm2(tr.states[j]);
    worst_rise = std::max(worst_rise, cur - prev);
    prev = cur;
  }
  REQUIRE(worst_rise <= 100.0 * h * h);
  REQUIRE(vec::norm2(tr.final_state()) <= vec::norm2(u0));
}

TEST_CASE("zero jump coefficient reduces the stochastic solver exactly") {
  const ModelSpec m = build_nse2d({2, 1.0});
  const StateVector u0 = nse2d_canonical_state(m, 0.8);
  const TimeGrid grid = make_time_grid(1.0, 1e-2);
  const MarkSpace space = make_mark_space({2.0});
  RngStream rng(11, 0, "zero-noise");
  const Trajectory det = evolve_deterministic(m, u0, grid);
  const Trajectory sto = evolve_stochastic(m, make_zero_jump(), space,
                                           make_power_scale(0.25, 0.3), u0, grid, rng);
  REQUIRE(sto.times == det.times);
  REQUIRE(sto.states == det.states);
  REQUIRE(sto.n_jumps == 0);
}

TEST_CASE("stochastic solver rejects epsilon above the ceiling") {
  const ModelSpec m = scalar_model();
  ScalarNoise noise;
  const TimeGrid grid = make_time_grid(1.0, 1e-2);
  RngStream rng(12, 0, "ceiling");
  DeviationScale s;
  s.epsilon = 0.7;
  s.a_of_eps = std::pow(0.7, 0.3);
  REQUIRE_THROWS_AS(evolve_stochastic(m, noise.g, noise.space, s, {1.0}, grid, rng),
                    InputError);
}

TEST_CASE("jump bookkeeping: left limit plus increment equals the stored value") {
  const ModelSpec m = build_linear({2, {1.0, 3.0}});
  const MarkSpace space = make_mark_space({1.0, 0.5});
  const JumpCoefficient g = make_affine_jump(2, {0.7, -0.3}, {0.2, 0.1});
  const TimeGrid grid = make_time_grid(1.0, 1e-2);
  RngStream rng(13, 0, "bookkeeping");
  const DeviationScale scale = make_power_scale(0.1, 0.3);
  const Trajectory tr = evolve_stochastic(m, g, space, scale, {1.0, -0.5}, grid, rng);
  REQUIRE(tr.n_jumps > 0);
  std::size_t seen = 0;
  for (std::size_t i = 1; i < tr.rows(); ++i) {
    if (!tr.post_jump[i]) continue;
    ++seen;
    REQUIRE(tr.times[i] == tr.times[i - 1]);
    bool matched = false;
    for (std::size_t k = 0; k < space.size() && !matched; ++k) {
      const StateVector gv = g.eval(tr.times[i], tr.states[i - 1], k);
      bool same = true;
      for (std::size_t c = 0; c < m.dim; ++c)
        same = same && tr.states[i][c] == tr.states[i - 1][c] + scale.epsilon * gv[c];
      matched = same;
    }
    REQUIRE(matched);
  }
  REQUIRE(seen == tr.n_jumps);
}

TEST_CASE("ou with jumps matches the closed-form mean and variance") {
  // Linear model, constant G: u^eps(T) is an OU-with-jumps whose first two
  // moments are exact: E = deterministic flow, Var_i = eps sum_k nu_k g_i(z_k)^2
  // (1 - e^{-2 lam_i T}) / (2 lam_i).
  const ModelSpec m = build_linear({2, {1.0, 2.0}});
  const MarkSpace space = make_mark_space({1.0, 0.5, 0.25});
  const JumpCoefficient g = make_affine_jump(2, {0.6, -0.4, 0.8});
  const DeviationScale scale = make_power_scale(0.1, 0.3);
  const TimeGrid grid = make_time_grid(1.0, 1e-2);
  const StateVector u0 = {1.0, 0.5};
  const Trajectory det = evolve_deterministic(m, u0, grid);

  const std::size_t runs = 10000;
  std::vector<StateVector> finals(runs);
  for (std::uint64_t r = 0; r < runs; ++r) {
    RngStream rng(202, r, "ou-moments");
    StateVector last;
    integrate_stochastic(m, g, space, scale, u0, grid, rng,
                         [&last](double, const StateVector& u, bool) { last = u; });
    finals[r] = last;
  }

  for (std::size_t i = 0; i < 2; ++i) {
    const double lam = m.a_eigenvalues[i];
    double sum_g2 = 0.0;
    for (std::size_t k = 0; k < space.size(); ++k) {
      const StateVector gv = g.eval(0.0, u0, k);
      sum_g2 += space.weights[k] * gv[i] * gv[i];
    }
    const double exact_var =
        scale.epsilon * sum_g2 * (1.0 - std::exp(-2.0 * lam)) / (2.0 * lam);

    double mean = 0.0;
    for (const auto& f : finals) mean += f[i];
    mean /= runs;
    double var = 0.0, m4 = 0.0;
    for (const auto& f : finals) {
      const double d = f[i] - mean;
      var += d * d;
      m4 += d * d * d * d;
    }
    var /= (runs - 1);
    m4 /= runs;

    const double se_mean = std::sqrt(var / runs);
    REQUIRE(std::abs(mean - det.final_state()[i]) <= 3.0 * se_mean);
    const double se_var = std::sqrt(std::max(m4 - var * var, 0.0) / runs);
    REQUIRE(std::abs(var - exact_var) <= 3.0 * se_var);
  }
}

TEST_CASE("stochastic deviation from the limit scales linearly in epsilon") {
  const ModelSpec m = scalar_model();
  ScalarNoise noise;
  const TimeGrid grid = make_time_grid(1.0, 1e-2);
  const Trajectory det = evolve_deterministic(m, {1.0}, grid);

  std::vector<double> log_eps, log_err;
  for (int p = 4; p <= 10; p += 2) {
    const double eps = std::pow(2.0, -p);
    const DeviationScale scale = make_power_scale(eps, 0.3);
    const std::size_t runs = 300;
    double acc = 0.0;
    for (std::uint64_t r = 0; r < runs; ++r) {
      RngStream rng(303, r, "lln-slope-" + std::to_string(p));
      double sup_sq = 0.0;
      StateVector diff(1);
      integrate_stochastic(m, noise.g, noise.space, scale, {1.0}, grid, rng,
                           [&](double t, const StateVector& u, bool) {
                             diff = u;
                             vec::axpy(-1.0, state_at_left(det, t), diff);
                             sup_sq = std::max(sup_sq, vec::norm2_sq(diff));
                           });
      acc += sup_sq;
    }
    log_eps.push_back(std::log(eps));
    log_err.push_back(std::log(acc / runs));
  }
  // least-squares slope
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < log_eps.size(); ++i) {
    mx += log_eps[i];
    my += log_err[i];
  }
  mx /= log_eps.size();
  my /= log_err.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < log_eps.size(); ++i) {
    sxy += (log_eps[i] - mx) * (log_err[i] - my);
    sxx += (log_eps[i] - mx) * (log_eps[i] - mx);
  }
  const double slope = sxy / sxx;
  REQUIRE(slope >= 0.8);
  REQUIRE(slope <= 1.2);
}

TEST_CASE("skeleton with zero control is identically zero") {
  const ModelSpec m = build_nse2d({2, 1.0});
  const MarkSpace space = make_mark_space({1.0, 1.0});
  const JumpCoefficient g = make_affine_jump(m.dim, {0.5, -0.5});
  const TimeGrid grid = make_time_grid(1.0, 1e-2);
  const Trajectory u0 = evolve_deterministic(m, nse2d_canonical_state(m, 1.0), grid);
  const Control phi = make_control(grid.times, 2);
  const Trajectory y = solve_skeleton(m, g, space, phi, u0, grid);
  for (const auto& s : y.states)
    for (double v : s) REQUIRE(v == 0.0);
}

TEST_CASE("skeleton solver is exactly linear in the control") {
  const ModelSpec m = build_nse2d({2, 1.0});
  const MarkSpace space = make_mark_space({1.0, 0.5});
  const JumpCoefficient g = make_affine_jump(m.dim, {0.5, -0.8}, {0.3, 0.0});
  const TimeGrid grid = make_time_grid(1.0, 1e-2);
  const Trajectory u0 = evolve_deterministic(m, nse2d_canonical_state(m, 1.0), grid);
  RngStream rng(404, 0, "skeleton-linearity");
  const Control phi = random_control(grid, 2, rng);
  const Control chi = random_control(grid, 2, rng);
  const double al = 1.3, be = -0.6;
  Control mix = make_control(grid.times, 2);
  for (std::size_t i = 0; i < mix.values.size(); ++i)
    mix.values[i] = al * phi.values[i] + be * chi.values[i];

  const Trajectory ya = solve_skeleton(m, g, space, phi, u0, grid);
  const Trajectory yb = solve_skeleton(m, g, space, chi, u0, grid);
  const Trajectory ym = solve_skeleton(m, g, space, mix, u0, grid);
  for (std::size_t j = 0; j < ym.rows(); ++j) {
    StateVector combo = ya.states[j];
    vec::scale(combo, al);
    vec::axpy(be, yb.states[j], combo);
    const double scale = std::max(1e-30, vec::norm2(combo));
    vec::axpy(-1.0, ym.states[j], combo);
    REQUIRE(vec::norm2(combo) / scale <= 1e-12);
  }
}

TEST_CASE("skeleton scalar closed form") {
  // B = 0, lambda = 1, one mark nu = 1, G = 1, phi = 1: Y(T) = 1 - e^{-T}.
  const ModelSpec m = scalar_model();
  ScalarNoise noise;
  const TimeGrid grid = make_time_grid(1.0, 1e-3);
  const Trajectory u0 = evolve_deterministic(m, {0.0}, grid);
  const Control phi = make_control(grid.times, 1, 1.0);
  const Trajectory y = solve_skeleton(m, noise.g, noise.space, phi, u0, grid);
  REQUIRE(std::abs(y.final_state()[0] - (1.0 - std::exp(-1.0))) <= 5e-4);
}

TEST_CASE("skeleton rejects mismatched grids") {
  const ModelSpec m = scalar_model();
  ScalarNoise noise;
  const TimeGrid grid = make_time_grid(1.0, 1e-2);
  const TimeGrid other = make_time_grid(1.0, 2e-2);
  const Trajectory u0 = evolve_deterministic(m, {1.0}, grid);
  const Control phi = make_control(other.times, 1, 1.0);
  REQUIRE_THROWS_AS(solve_skeleton(m, noise.g, noise.space, phi, u0, grid), InputError);
  const Trajectory u0o = evolve_deterministic(m, {1.0}, other);
  const Control ok = make_control(grid.times, 1, 1.0);
  REQUIRE_THROWS_AS(solve_skeleton(m, noise.g, noise.space, ok, u0o, grid), InputError);
}

TEST_CASE("controlled equation with unit tilt and zero noise stays at zero") {
  const ModelSpec m = build_nse2d({2, 1.0});
  const MarkSpace space = make_mark_space({1.0});
  const TimeGrid grid = make_time_grid(1.0, 1e-2);
  const Trajectory u0 = evolve_deterministic(m, nse2d_canonical_state(m, 1.0), grid);
  const Tilt psi = unit_tilt(grid.times, 1);
  RngStream rng(505, 0, "controlled-zero");
  const Trajectory tr = evolve_controlled_moderate(m, make_zero_jump(), space,
                                                   make_power_scale(0.1, 0.3), psi, u0,
                                                   grid, rng);
  REQUIRE(tr.n_jumps == 0);
  for (const auto& s : tr.states)
    for (double v : s) REQUIRE(v == 0.0);
}

TEST_CASE("matched seeds couple the controlled equation to the stochastic one") {
  // With psi == 1 (bound 1) both solvers consume identical draws, so
  // a(eps) M + u0 must track u^eps nodewise up to the O(h) lookup error.
  const ModelSpec m = scalar_model();
  ScalarNoise noise;
  const TimeGrid grid = make_time_grid(1.0, 1e-3);
  const Trajectory u0 = evolve_deterministic(m, {1.0}, grid);
  const DeviationScale scale = make_power_scale(0.1, 0.3);
  const Tilt psi = unit_tilt(grid.times, 1);

  RngStream r1(606, 0, "coupling");
  RngStream r2(606, 0, "coupling");
  const Trajectory ue = evolve_stochastic(m, noise.g, noise.space, scale, {1.0}, grid, r1);
  const Trajectory mm = evolve_controlled_moderate(m, noise.g, noise.space, scale, psi,
                                                   u0, grid, r2);
  REQUIRE(ue.times == mm.times);
  REQUIRE(ue.n_jumps == mm.n_jumps);
  double worst = 0.0;
  for (std::size_t i = 0; i < ue.rows(); ++i) {
    const double rebuilt =
        scale.a_of_eps * mm.states[i][0] + state_at_left(u0, ue.times[i])[0];
    worst = std::max(worst, std::abs(rebuilt - ue.states[i][0]));
  }
  REQUIRE(worst <= 5e-3);
}

TEST_CASE("controlled second moment stays bounded along the epsilon grid") {
  const ModelSpec m = scalar_model();
  ScalarNoise noise;
  const TimeGrid grid = make_time_grid(1.0, 1e-2);
  const Trajectory u0 = evolve_deterministic(m, {1.0}, grid);
  const Control phi = make_control(grid.times, 1, 1.0);

  double prev_stat = -1.0;
  for (int p : {4, 6, 8}) {
    const DeviationScale scale = make_power_scale(std::pow(2.0, -p), 0.3);
    const Tilt psi = tilt_from_control(phi, scale.a_of_eps, 2.0).tilt;
    double acc = 0.0;
    const std::size_t runs = 100;
    for (std::uint64_t r = 0; r < runs; ++r) {
      RngStream rng(707, r, "bounded-" + std::to_string(p));
      const Trajectory tr = evolve_controlled_moderate(m, noise.g, noise.space, scale,
                                                       psi, u0, grid, rng);
      acc += sup_h_norm_sq(tr);
    }
    const double stat = acc / runs;
    REQUIRE(std::isfinite(stat));
    REQUIRE(stat <= 50.0);  // grid-wide bound, no growth as eps shrinks
    prev_stat = stat;
  }
  REQUIRE(prev_stat >= 0.0);
}

TEST_CASE("adjoint solver reproduces the diagonal backward flow") {
  const ModelSpec m = scalar_model();
  const TimeGrid grid = make_time_grid(1.0, 1e-3);
  const Trajectory u0 = evolve_deterministic(m, {0.7}, grid);
  const Trajectory p = linearized_adjoint_solve(m, u0, {1.0}, grid);
  REQUIRE(p.states.front()[0] == Approx(std::pow(1.001, -1000)).epsilon(1e-12));
  REQUIRE(std::abs(p.states.front()[0] - std::exp(-1.0)) <= 5e-4);
  REQUIRE(p.states.back()[0] == 1.0);
}

TEST_CASE("adjoint along a zero base path matches the pure diagonal flow") {
  const ModelSpec m = build_nse2d({2, 1.0});
  const TimeGrid grid = make_time_grid(0.5, 1e-2);
  Trajectory zero_path;
  for (double t : grid.times) append_row(zero_path, t, StateVector(m.dim, 0.0), false);
  RngStream rng(808, 0, "adjoint-zero");
  StateVector terminal(m.dim);
  for (double& x : terminal) x = rng.normal();
  const Trajectory p = linearized_adjoint_solve(m, zero_path, terminal, grid);
  for (std::size_t i = 0; i < m.dim; ++i) {
    double val = terminal[i];
    for (std::size_t j = grid.n_steps(); j-- > 0;)
      val /= (1.0 + grid.h * m.a_eigenvalues[i]);
    REQUIRE(p.states.front()[i] == Approx(val).epsilon(1e-13));
  }
}

TEST_CASE("forward-adjoint duality holds to rounding") {
  // <Y^phi(T), p_T> == <phi, chi>_{L2(nu_T)} with chi the adjoint-induced
  // control: the discrete transpose pair behind the Gramian machinery.
  const ModelSpec m = build_nse2d({3, 1.0});
  const MarkSpace space = make_mark_space({1.0, 0.5, 0.25});
  const JumpCoefficient g = make_affine_jump(m.dim, {0.8, -0.5, 0.3}, {0.1, 0.0, -0.2});
  const TimeGrid grid = make_time_grid(1.0, 1e-2);
  const Trajectory u0 = evolve_deterministic(m, nse2d_canonical_state(m, 1.2), grid);

  RngStream rng(909, 0, "duality");
  for (int trial = 0; trial < 5; ++trial) {
    const Control phi = random_control(grid, space.size(), rng);
    StateVector terminal(m.dim);
    for (double& x : terminal) x = rng.normal();

    const StateVector yT = skeleton_endpoint(m, g, space, phi, u0, grid);
    const double lhs = vec::dot(yT, terminal);

    const Control chi = adjoint_induced_control(m, g, space, u0, terminal, grid);
    double rhs = 0.0;
    for (std::size_t j = 0; j < phi.n_steps(); ++j) {
      const double dt = grid.times[j + 1] - grid.times[j];
      for (std::size_t k = 0; k < space.size(); ++k)
        rhs += phi.at(j, k) * chi.at(j, k) * space.weights[k] * dt;
    }
    REQUIRE(std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1e-30}) <=
            1e-10);
  }
}

TEST_CASE("solver aborts on non-finite states") {
  ModelSpec m;
  m.dim = 1;
  m.a_eigenvalues = {1.0};
  m.bilinear_eval = [](const StateVector& u, const StateVector& v) {
    return StateVector{-1e200 * u[0] * v[0]};
  };
  m.q_norm_eval = [](const StateVector& v) { return vec::norm2(v); };
  m.a0 = 1.0;
  m.label = "explosive";
  const TimeGrid grid = make_time_grid(1.0, 1e-2);
  REQUIRE_THROWS_AS(evolve_deterministic(m, {1.0}, grid), SolverError);
}
