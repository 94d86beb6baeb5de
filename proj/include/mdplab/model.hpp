#pragma once

// Abstract dissipative model with a skew-symmetric bilinear term, realized in a
// finite eigenbasis. The contract every concrete model must satisfy:
//
//   (B1)  <B(u,v), w> = -<B(u,w), v>   (hence <B(u,v), v> = 0)
//   (B2)  |v|_Q^2 <= a0 |v|_H ||v||_V
//   (B3)  |<B(u,v), w>| <= C |u|_Q ||v||_V |w|_Q  (C finite, reported only)
//
// |.|_H is Euclidean, ||v||_V^2 = sum_i lambda_i v_i^2, |.|_Q is model-chosen.
// verify_assumptions probes these on random tuples; it is the gate every model
// builder must pass before the solvers trust it.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mdplab/core.hpp"
#include "mdplab/rng.hpp"

namespace mdplab {

struct ModelSpec {
  std::size_t dim = 0;
  std::vector<double> a_eigenvalues;  // lambda_i > 0, one per coordinate
  std::function<StateVector(const StateVector&, const StateVector&)> bilinear_eval;
  std::function<double(const StateVector&)> q_norm_eval;
  double a0 = 0.0;  // declared interpolation constant for (B2)
  std::string label;

  // Optional fast path: component i of the result is <B(e_i, v), w>.
  // Used by the adjoint machinery; when absent it falls back to assembling
  // B(e_i, v) column by column.
  std::function<StateVector(const StateVector&, const StateVector&)> first_slot_adjoint;

  void validate() const {
    if (dim == 0) throw InputError(label + ": dim must be positive");
    if (a_eigenvalues.size() != dim)
      throw InputError(label + ": eigenvalue count does not match dim");
    for (double lam : a_eigenvalues)
      if (!(lam > 0.0) || !std::isfinite(lam))
        throw InputError(label + ": eigenvalues must be positive and finite");
    if (!bilinear_eval) throw InputError(label + ": bilinear_eval missing");
    if (!q_norm_eval) throw InputError(label + ": q_norm_eval missing");
    if (!(a0 > 0.0)) throw InputError(label + ": a0 must be positive");
  }
};

inline double h_norm(const StateVector& v) { return vec::norm2(v); }

inline double v_norm_sq(const ModelSpec& model, const StateVector& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += model.a_eigenvalues[i] * v[i] * v[i];
  return s;
}

inline double v_norm(const ModelSpec& model, const StateVector& v) {
  return std::sqrt(v_norm_sq(model, v));
}

// A u = (lambda_i u_i)
inline StateVector apply_A(const ModelSpec& model, const StateVector& u) {
  if (u.size() != model.dim) throw InputError("apply_A: state has wrong dimension");
  StateVector out(model.dim);
  for (std::size_t i = 0; i < model.dim; ++i)
    out[i] = model.a_eigenvalues[i] * u[i];
  return out;
}

// b(u,v,w) = <B(u,v), w>
inline double trilinear(const ModelSpec& model, const StateVector& u,
                        const StateVector& v, const StateVector& w) {
  if (u.size() != model.dim || v.size() != model.dim || w.size() != model.dim)
    throw InputError("trilinear: state has wrong dimension");
  return vec::dot(model.bilinear_eval(u, v), w);
}

struct AssumptionCheck {
  std::string name;
  std::size_t samples = 0;
  double max_defect = 0.0;      // relative
  double empirical_constant = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct AssumptionReport {
  std::string model_label;
  std::vector<AssumptionCheck> checks;
  bool all_pass = false;
};

namespace detail {

inline StateVector random_unit_state(const ModelSpec& model, RngStream& rng) {
  StateVector v(model.dim);
  for (double& x : v) x = rng.normal();
  const double n = vec::norm2(v);
  if (n > 0.0) vec::scale(v, 1.0 / n);
  return v;
}

}  // namespace detail

// Randomized audit of (B1)-(B3) plus bilinearity of B itself.
// Defects are normalized by the pre-cancellation magnitude of the terms, so a
// model with an exactly skew trilinear form lands at rounding level.
inline AssumptionReport verify_assumptions(const ModelSpec& model,
                                           std::size_t n_samples,
                                           std::uint64_t seed,
                                           double tol = 1e-10) {
  model.validate();
  if (n_samples == 0) throw InputError("verify_assumptions: n_samples must be positive");
  RngStream rng(seed, 0, "assumption-audit");

  AssumptionCheck bilin{"bilinearity", n_samples, 0.0, 0.0, tol, false};
  AssumptionCheck skew{"b1-skew-symmetry", n_samples, 0.0, 0.0, tol, false};
  AssumptionCheck diag{"b1-diagonal-null", n_samples, 0.0, 0.0, tol, false};
  AssumptionCheck interp{"b2-interpolation", n_samples, 0.0, 0.0, tol, false};
  AssumptionCheck growth{"b3-trilinear-bound", n_samples, 0.0, 0.0, 0.0, true};

  constexpr double kFloor = 1e-300;

  for (std::size_t s = 0; s < n_samples; ++s) {
    const StateVector u = detail::random_unit_state(model, rng);
    const StateVector v = detail::random_unit_state(model, rng);
    const StateVector w = detail::random_unit_state(model, rng);

    // bilinearity in both slots against fresh coefficients
    const double al = 2.0 * rng.uniform() - 1.0, be = 2.0 * rng.uniform() - 1.0;
    {
      StateVector uv(model.dim);
      for (std::size_t i = 0; i < model.dim; ++i) uv[i] = al * u[i] + be * v[i];
      StateVector lhs = model.bilinear_eval(uv, w);
      const StateVector b_uw = model.bilinear_eval(u, w);
      const StateVector b_vw = model.bilinear_eval(v, w);
      double scale = std::abs(al) * vec::norm2(b_uw) + std::abs(be) * vec::norm2(b_vw);
      vec::axpy(-al, b_uw, lhs);
      vec::axpy(-be, b_vw, lhs);
      bilin.max_defect = std::max(bilin.max_defect,
                                  vec::norm2(lhs) / std::max(scale, kFloor));

      for (std::size_t i = 0; i < model.dim; ++i) uv[i] = al * v[i] + be * w[i];
      StateVector lhs2 = model.bilinear_eval(u, uv);
      const StateVector b_uv = model.bilinear_eval(u, v);
      const StateVector b_uw2 = model.bilinear_eval(u, w);
      double scale2 = std::abs(al) * vec::norm2(b_uv) + std::abs(be) * vec::norm2(b_uw2);
      vec::axpy(-al, b_uv, lhs2);
      vec::axpy(-be, b_uw2, lhs2);
      bilin.max_defect = std::max(bilin.max_defect,
                                  vec::norm2(lhs2) / std::max(scale2, kFloor));
    }

    // (B1) in both forms
    const StateVector b_uv = model.bilinear_eval(u, v);
    const StateVector b_uw = model.bilinear_eval(u, w);
    {
      const double t1 = vec::dot(b_uv, w);
      const double t2 = vec::dot(b_uw, v);
      const double scale = vec::norm2(b_uv) + vec::norm2(b_uw);
      skew.max_defect = std::max(skew.max_defect,
                                 std::abs(t1 + t2) / std::max(scale, kFloor));

      const double d = vec::dot(b_uv, v);
      diag.max_defect = std::max(diag.max_defect,
                                 std::abs(d) / std::max(vec::norm2(b_uv), kFloor));
    }

    // (B2): ratio over a0 on H-unit samples (scale-invariant anyway)
    {
      const double q = model.q_norm_eval(v);
      const double ratio = q * q / std::max(h_norm(v) * v_norm(model, v), kFloor);
      interp.empirical_constant = std::max(interp.empirical_constant, ratio);
      interp.max_defect =
          std::max(interp.max_defect, std::max(0.0, ratio - model.a0) / model.a0);
    }

    // (B3): empirical constant only
    {
      const double denom = model.q_norm_eval(u) * v_norm(model, v) * model.q_norm_eval(w);
      const double b = vec::dot(b_uv, w);
      if (denom > kFloor)
        growth.empirical_constant =
            std::max(growth.empirical_constant, std::abs(b) / denom);
    }
  }

  bilin.pass = bilin.max_defect <= bilin.tolerance;
  skew.pass = skew.max_defect <= skew.tolerance;
  diag.pass = diag.max_defect <= diag.tolerance;
  interp.pass = interp.max_defect <= interp.tolerance;
  growth.pass = std::isfinite(growth.empirical_constant);

  AssumptionReport report;
  report.model_label = model.label;
  report.checks = {bilin, skew, diag, interp, growth};
  report.all_pass = true;
  for (const auto& c : report.checks) report.all_pass = report.all_pass && c.pass;
  return report;
}

}  // namespace mdplab
