#pragma once

// Diagonal linear model (B == 0). Every closed-form oracle in the test suite
// lives on this model: Ornstein-Uhlenbeck-with-jumps moments, explicit
// skeletons, explicit controllability Gramians.

#include <algorithm>
#include <string>

#include "mdplab/model.hpp"

namespace mdplab {

struct LinearConfig {
  std::size_t dim = 1;
  std::vector<double> eigenvalues;  // broadcast from `lambda` when size 1
};

inline ModelSpec build_linear(const LinearConfig& cfg) {
  if (cfg.dim == 0) throw InputError("linear-test: dim must be positive");
  std::vector<double> lam = cfg.eigenvalues;
  if (lam.empty()) lam.assign(cfg.dim, 1.0);
  if (lam.size() == 1 && cfg.dim > 1) lam.assign(cfg.dim, lam[0]);
  if (lam.size() != cfg.dim)
    throw InputError("linear-test: eigenvalue list does not match dim");

  ModelSpec m;
  m.dim = cfg.dim;
  m.a_eigenvalues = lam;
  m.bilinear_eval = [n = cfg.dim](const StateVector&, const StateVector&) {
    return StateVector(n, 0.0);
  };
  // |v|_Q = |v|_H; then |v|_Q^2 <= |v| ||v|| / sqrt(lambda_min) exactly.
  m.q_norm_eval = [](const StateVector& v) { return vec::norm2(v); };
  m.a0 = 1.0 / std::sqrt(*std::min_element(lam.begin(), lam.end()));
  m.label = "linear-" + std::to_string(cfg.dim);
  m.first_slot_adjoint = [n = cfg.dim](const StateVector&, const StateVector&) {
    return StateVector(n, 0.0);
  };
  m.validate();
  return m;
}

inline StateVector linear_canonical_state(const ModelSpec& model, double amplitude) {
  StateVector v(model.dim, 1.0 / std::sqrt(static_cast<double>(model.dim)));
  vec::scale(v, amplitude);
  return v;
}

}  // namespace mdplab
