#pragma once

// Rate-function computations: the L2 cost of a control, the endpoint rate
// I_T(x) = (1/2) <x, Gram^{-1} x> via matrix-free conjugate gradient on the
// controllability Gramian L L*, and the optimal importance-sampling tilt.
// L phi = Y^phi(T) is the (linear) skeleton endpoint map; L* is realized by
// the discrete adjoint, so the Gramian is symmetric by construction up to
// rounding.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "mdplab/core.hpp"
#include "mdplab/grid.hpp"
#include "mdplab/model.hpp"
#include "mdplab/noise.hpp"
#include "mdplab/rng.hpp"
#include "mdplab/solvers.hpp"

namespace mdplab {

inline double rate_of_control(const Control& phi, const MarkSpace& space) {
  return 0.5 * l2_norm_sq(phi, space);
}

struct RateOptions {
  std::size_t max_iterations = 0;  // 0 = max(64, 4 dim)
  std::size_t dense_limit = 200;   // dense Gramian cross-check cutoff
};

struct EndpointRateResult {
  StateVector target;
  double rate = 0.0;  // +infinity when x is not reachable
  Control phi_star;
  bool reachable = true;
  double gramian_condition = 0.0;
  double gramian_asymmetry = 0.0;  // dense path only; 0 otherwise
  double rayleigh = 0.0;           // <x, Gx> / <x, x>
  std::size_t cg_iterations = 0;
  double residual = 0.0;           // |G y - x| / |x| at exit
};

namespace detail {

// Eigenvalues of a symmetric matrix by cyclic Jacobi; a is row-major n x n
// and gets destroyed. Plenty for the n <= 200 cross-check sizes.
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n) {
  auto at = [&a, n](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
  double frob = 0.0;
  for (double v : a) frob += v * v;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
    if (off <= 1e-30 * std::max(frob, 1e-300)) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = at(i, p), aiq = at(i, q);
          at(i, p) = c * aip - s * aiq;
          at(i, q) = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double api = at(p, i), aqi = at(q, i);
          at(p, i) = c * api - s * aqi;
          at(q, i) = s * api + c * aqi;
        }
      }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = at(i, i);
  return eig;
}

}  // namespace detail

inline EndpointRateResult endpoint_rate(const ModelSpec& model, const JumpCoefficient& g,
                                        const MarkSpace& space, const Trajectory& u0_path,
                                        const StateVector& x, const TimeGrid& grid,
                                        double cg_tol = 1e-10,
                                        const RateOptions& opts = {}) {
  if (x.size() != model.dim)
    throw InputError("endpoint_rate: target has wrong dimension");
  if (!vec::all_finite(x)) throw InputError("endpoint_rate: target must be finite");
  if (!(cg_tol > 0.0)) throw InputError("endpoint_rate: cg tolerance must be positive");
  const std::size_t n = model.dim;

  const auto apply_gramian = [&](const StateVector& y) {
    return skeleton_endpoint(model, g, space,
                             adjoint_induced_control(model, g, space, u0_path, y, grid),
                             u0_path, grid);
  };

  EndpointRateResult res;
  res.target = x;
  res.phi_star = make_control(grid.times, space.size());

  // Dense cross-check: columns G e_i, symmetry defect, spectrum.
  double trace = 0.0;
  std::vector<double> dense;
  if (n <= opts.dense_limit) {
    dense.assign(n * n, 0.0);
    StateVector e(n, 0.0);
    double max_abs = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      e[i] = 1.0;
      const StateVector col = apply_gramian(e);
      e[i] = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        dense[r * n + i] = col[r];
        max_abs = std::max(max_abs, std::abs(col[r]));
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      trace += dense[i * n + i];
      for (std::size_t j = i + 1; j < n; ++j)
        res.gramian_asymmetry =
            std::max(res.gramian_asymmetry, std::abs(dense[i * n + j] - dense[j * n + i]) /
                                                std::max(max_abs, 1e-300));
    }
    std::vector<double> sym(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        sym[i * n + j] = 0.5 * (dense[i * n + j] + dense[j * n + i]);
    const std::vector<double> eig = detail::jacobi_eigenvalues(std::move(sym), n);
    const double lo = *std::min_element(eig.begin(), eig.end());
    const double hi = *std::max_element(eig.begin(), eig.end());
    res.gramian_condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  } else {
    // Matrix-free estimates: Hutchinson trace, power iterations for the
    // spectral interval (shifted for the bottom end).
    RngStream probe(0x6772616d, 0, "gramian-probe");
    const std::size_t n_probes = 8;
    for (std::size_t s = 0; s < n_probes; ++s) {
      StateVector z(n);
      for (double& v : z) v = probe.uniform() < 0.5 ? -1.0 : 1.0;
      trace += vec::dot(z, apply_gramian(z)) / static_cast<double>(n_probes);
    }
    // Rayleigh-quotient power iteration; the bottom eigenvalue comes from the
    // shifted operator hi*I - G, whose top end is hi - lo.
    const auto power_top = [&probe, n](auto&& apply) {
      StateVector v(n);
      for (double& q : v) q = probe.normal();
      double nv = vec::norm2(v);
      vec::scale(v, 1.0 / nv);
      double rho = 0.0;
      for (int it = 0; it < 512; ++it) {
        StateVector w = apply(v);
        const double next = vec::dot(v, w);
        const double nw = vec::norm2(w);
        if (nw <= 0.0) return 0.0;
        vec::scale(w, 1.0 / nw);
        v.swap(w);
        if (it > 4 && std::abs(next - rho) <= 1e-9 * std::abs(next)) return next;
        rho = next;
      }
      return rho;
    };
    const double hi = power_top(apply_gramian);
    const double shifted = power_top([&](const StateVector& v) {
      StateVector w = apply_gramian(v);
      for (std::size_t i = 0; i < n; ++i) w[i] = hi * v[i] - w[i];
      return w;
    });
    const double lo = hi - shifted;
    res.gramian_condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  }

  const double xn = vec::norm2(x);
  if (xn == 0.0) {
    res.rate = 0.0;  // inf over controls attained at phi = 0
    return res;
  }

  // Reachability: directions the Gramian cannot see get the inf convention.
  const StateVector gx =
      [&] {
        if (dense.empty()) return apply_gramian(x);
        StateVector out(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j) out[i] += dense[i * n + j] * x[j];
        return out;
      }();
  res.rayleigh = vec::dot(x, gx) / (xn * xn);
  if (res.rayleigh < 1e-12 * trace / static_cast<double>(n)) {
    res.reachable = false;
    res.rate = std::numeric_limits<double>::infinity();
    return res;
  }

  // Conjugate gradient on Gram y = x, matrix-free.
  const std::size_t max_iter =
      opts.max_iterations > 0 ? opts.max_iterations : std::max<std::size_t>(64, 4 * n);
  StateVector y(n, 0.0), r = x, p = x;
  double rs = vec::dot(r, r);
  bool converged = false;
  for (std::size_t it = 1; it <= max_iter; ++it) {
    const StateVector ap = apply_gramian(p);
    const double denom = vec::dot(p, ap);
    if (!(denom > 0.0))
      throw ConvergenceError("endpoint_rate: Gramian lost positive-definiteness in CG");
    const double alpha = rs / denom;
    vec::axpy(alpha, p, y);
    vec::axpy(-alpha, ap, r);
    const double rs_new = vec::dot(r, r);
    res.cg_iterations = it;
    res.residual = std::sqrt(rs_new) / xn;
    if (res.residual <= cg_tol) {
      converged = true;
      break;
    }
    const double beta = rs_new / rs;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rs = rs_new;
  }
  if (!converged)
    throw ConvergenceError("endpoint_rate: CG failed to reach tolerance " +
                           std::to_string(cg_tol) + " within " +
                           std::to_string(max_iter) + " iterations (residual " +
                           std::to_string(res.residual) + ")");

  res.phi_star = adjoint_induced_control(model, g, space, u0_path, y, grid);
  res.rate = rate_of_control(res.phi_star, space);
  return res;
}

// psi = 1 + a(eps) phi*, clipped into [1/n, n]; clipping is diagnosed upstream.
inline TiltBuildResult optimal_tilt(const Control& phi_star, const DeviationScale& scale,
                                    double bound) {
  return tilt_from_control(phi_star, scale.a_of_eps, bound);
}

}  // namespace mdplab
