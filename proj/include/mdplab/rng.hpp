#pragma once

// Reproducible random streams. Every consumer derives its stream from
// (master_seed, replica_index, purpose_tag); replicas never share state, so
// results are independent of scheduling and worker count.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. Samplers are hand-rolled on top of raw 64-bit draws because the
// stdlib distribution objects are implementation-defined and would break
// byte-identical reruns across toolchains.

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "mdplab/core.hpp"

namespace mdplab {

namespace detail {

// splitmix64; the usual seed-expansion mixer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t replica_index,
            std::string_view purpose_tag)
      : gen_(derive_seed(master_seed, replica_index, purpose_tag)) {}

  std::uint64_t raw() { return gen_(); }

  // Uniform on the open interval (0,1); never 0, so logs are safe.
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  // Box-Muller, no caching: two uniforms per draw keeps replay trivial.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Index into a cumulative weight table (strictly increasing, cdf.back() = total).
  std::size_t categorical(const std::vector<double>& cdf) {
    const double u = uniform() * cdf.back();
    std::size_t lo = 0, hi = cdf.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cdf[mid] <= u)
        lo = mid + 1;
      else
        hi = mid;
    }
    return lo;
  }

  static std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replica,
                                   std::string_view purpose) {
    std::uint64_t s = detail::mix64(master);
    s = detail::mix64(s ^ detail::mix64(replica + 0x51ed270b8a1c4f0dull));
    s = detail::mix64(s ^ detail::fnv1a64(purpose));
    return s;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace mdplab
