#pragma once

// Small shared pieces: the state type, dense-vector helpers, error taxonomy.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mdplab {

// Finite Galerkin state: coordinates in the eigenbasis of the dissipative operator.
using StateVector = std::vector<double>;

// Error taxonomy used across modules.
struct InputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ResourceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConvergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace vec {

inline double dot(const StateVector& a, const StateVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2_sq(const StateVector& a) { return dot(a, a); }
inline double norm2(const StateVector& a) { return std::sqrt(norm2_sq(a)); }

// y += alpha * x
inline void axpy(double alpha, const StateVector& x, StateVector& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(StateVector& x, double alpha) {
  for (double& v : x) v *= alpha;
}

inline StateVector zeros(std::size_t n) { return StateVector(n, 0.0); }

inline bool all_finite(const StateVector& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

// Deterministic pairwise summation; order-independent of any thread schedule
// as long as the slot layout is fixed, which keeps reductions bit-stable.
inline double pairwise_sum(const double* x, std::size_t n) {
  if (n == 0) return 0.0;
  if (n <= 8) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

inline double pairwise_sum(const std::vector<double>& x) {
  return pairwise_sum(x.data(), x.size());
}

}  // namespace vec

}  // namespace mdplab
