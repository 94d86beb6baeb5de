#include <catch2/catch_amalgamated.hpp>
using Catch::Approx;

#include <cmath>
#include <vector>

#include "mdplab/noise.hpp"

using namespace mdplab;

namespace {

std::vector<double> uniform_grid(double T, std::size_t cells) {
  std::vector<double> tg(cells + 1);
  for (std::size_t j = 0; j <= cells; ++j) tg[j] = T * static_cast<double>(j) / cells;
  return tg;
}

}  // namespace

TEST_CASE("mark space construction and validation") {
  const MarkSpace s = make_mark_space({0.5, 1.0, 1.5});
  REQUIRE(s.size() == 3);
  REQUIRE(s.total_mass == Approx(3.0));
  REQUIRE(s.cdf.back() == Approx(3.0));
  REQUIRE(s.marks[2] == "z3");

  REQUIRE_THROWS_AS(make_mark_space({}), InputError);
  REQUIRE_THROWS_AS(make_mark_space({1.0, 0.0}), InputError);
  REQUIRE_THROWS_AS(make_mark_space({1.0, -0.5}), InputError);
  REQUIRE_THROWS_AS(make_mark_space({1.0}, {"a", "b"}), InputError);
}

TEST_CASE("affine jump family evaluates exactly and satisfies its envelopes") {
  const JumpCoefficient g = make_affine_jump(3, {1.0, -2.0, 0.5}, {0.3, 0.0, -1.0});
  const StateVector u = {2.0, -1.0, 4.0};

  const StateVector g1 = g.eval(0.7, u, 1);  // direction e_1, no multiplier
  REQUIRE(g1[0] == 0.0);
  REQUIRE(g1[1] == -2.0);
  REQUIRE(g1[2] == 0.0);

  const StateVector g2 = g.eval(0.0, u, 2);  // -u + 0.5 e_2
  REQUIRE(g2[0] == Approx(-2.0));
  REQUIRE(g2[1] == Approx(1.0));
  REQUIRE(g2[2] == Approx(-4.0 + 0.5));

  const MarkSpace space = make_mark_space({1.0, 1.0, 1.0});
  RngStream rng(314, 0, "envelope-check");
  REQUIRE(check_jump_envelopes(g, space, 3, 500, rng) <= 1e-12);
}

TEST_CASE("zero jump coefficient is structurally zero") {
  const JumpCoefficient g = make_zero_jump();
  REQUIRE(g.is_zero());
  const StateVector out = g.eval(0.3, {1.0, 2.0}, 0);
  REQUIRE(out[0] == 0.0);
  REQUIRE(out[1] == 0.0);
  REQUIRE(g.L2(0.0, 5) == 0.0);
}

TEST_CASE("prm sampler hits the exact Poisson mean") {
  // eps = 0.1, nu(Z) = 2, T = 1: count ~ Poisson(20).
  const MarkSpace space = make_mark_space({0.8, 1.2});
  RngStream rng(1001, 0, "prm-mean");
  const std::size_t runs = 4000;
  double total = 0.0;
  for (std::size_t r = 0; r < runs; ++r) {
    const PointProcessSample s = sample_prm(space, 0.1, 1.0, rng);
    total += static_cast<double>(s.count());
    if (r == 0) {
      for (std::size_t i = 0; i < s.count(); ++i) {
        REQUIRE(s.times[i] > 0.0);
        REQUIRE(s.times[i] <= 1.0);
        if (i) REQUIRE(s.times[i] >= s.times[i - 1]);
      }
    }
  }
  const double mean = total / runs;
  const double sigma = std::sqrt(20.0 / runs);
  REQUIRE(std::abs(mean - 20.0) <= 4.0 * sigma);
}

TEST_CASE("prm mark frequencies match the exact multinomial law") {
  const MarkSpace space = make_mark_space({0.5, 1.0, 1.5});
  RngStream rng(1002, 0, "prm-marks");
  std::vector<double> counts(3, 0.0);
  double n_points = 0.0;
  for (std::size_t r = 0; r < 10000; ++r) {
    const PointProcessSample s = sample_prm(space, 0.5, 1.0, rng);
    for (std::size_t k : s.marks) counts[k] += 1.0;
    n_points += static_cast<double>(s.count());
  }
  // Conditional on the total, mark counts are exactly multinomial(N, nu/nu(Z)).
  for (std::size_t k = 0; k < 3; ++k) {
    const double p = space.weights[k] / space.total_mass;
    const double sigma = std::sqrt(n_points * p * (1.0 - p));
    REQUIRE(std::abs(counts[k] - n_points * p) <= 4.0 * sigma);
  }
}

TEST_CASE("prm with vanishing intensity produces empty samples") {
  const MarkSpace space = make_mark_space({1.0});
  RngStream rng(1003, 0, "prm-empty");
  for (int r = 0; r < 20; ++r)
    REQUIRE(sample_prm(space, 1e6, 1.0, rng).count() == 0);
}

TEST_CASE("prm enforces the expected-count budget") {
  const MarkSpace space = make_mark_space({1.0, 1.0});
  RngStream rng(1004, 0, "prm-budget");
  REQUIRE_THROWS_AS(sample_prm(space, 1e-12, 1.0, rng), ResourceError);
  Tilt psi = make_tilt(uniform_grid(1.0, 4), 2, 1.0, 2.0);
  REQUIRE_THROWS_AS(sample_controlled_prm(space, 1e-12, psi, rng), ResourceError);
}

TEST_CASE("unit tilt with bound 1 reproduces the plain sampler pathwise") {
  const MarkSpace space = make_mark_space({0.7, 1.3});
  const Tilt psi = unit_tilt(uniform_grid(1.0, 10), 2);
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    RngStream r1(777, rep, "match");
    RngStream r2(777, rep, "match");
    const PointProcessSample a = sample_prm(space, 0.25, 1.0, r1);
    const PointProcessSample b = sample_controlled_prm(space, 0.25, psi, r2);
    REQUIRE(a.times == b.times);
    REQUIRE(a.marks == b.marks);
  }
}

TEST_CASE("doubling the tilt on one mark doubles its cell counts") {
  const MarkSpace space = make_mark_space({1.0, 0.7});
  const auto tg = uniform_grid(1.0, 4);
  Tilt psi = make_tilt(tg, 2, 1.0, 2.0);
  for (std::size_t j = 0; j < psi.n_steps(); ++j) psi.at(j, 0) = 2.0;

  RngStream rng(2024, 0, "thin-double");
  const double eps = 0.2;
  const std::size_t runs = 10000;
  double c0 = 0.0, c1 = 0.0;
  for (std::size_t r = 0; r < runs; ++r) {
    const PointProcessSample s = sample_controlled_prm(space, eps, psi, rng);
    for (std::size_t k : s.marks) (k == 0 ? c0 : c1) += 1.0;
  }
  const double m0 = 2.0 * space.weights[0] / eps * runs;  // doubled mark
  const double m1 = 1.0 * space.weights[1] / eps * runs;  // untouched mark
  REQUIRE(std::abs(c0 - m0) <= 4.0 * std::sqrt(m0));
  REQUIRE(std::abs(c1 - m1) <= 4.0 * std::sqrt(m1));
}

TEST_CASE("floor tilt psi = 1/n scales the mean count down to 1/n") {
  const MarkSpace space = make_mark_space({1.0, 1.0});
  const Tilt psi = make_tilt(uniform_grid(1.0, 3), 2, 0.25, 4.0);
  RngStream rng(2025, 0, "thin-floor");
  const double eps = 0.5;
  const std::size_t runs = 10000;
  double total = 0.0;
  for (std::size_t r = 0; r < runs; ++r)
    total += static_cast<double>(sample_controlled_prm(space, eps, psi, rng).count());
  const double mean = 0.25 * space.total_mass / eps * runs;  // = 1 per run
  REQUIRE(std::abs(total - mean) <= 4.0 * std::sqrt(mean));
}

TEST_CASE("girsanov weight is identically zero for the unit tilt") {
  const MarkSpace space = make_mark_space({1.0, 2.0});
  const Tilt psi = unit_tilt(uniform_grid(1.0, 5), 2);
  RngStream rng(3001, 0, "girsanov-unit");
  const PointProcessSample s = sample_controlled_prm(space, 0.1, psi, rng);
  REQUIRE(girsanov_log_weight(s, psi, 0.1, space, 1.0) == 0.0);
}

TEST_CASE("girsanov reweighting is unbiased and recovers the plain mean count") {
  // Tilted sampling + exp(log-weight) must reproduce plain-measure statistics:
  // E^psi[e^W] = 1 and E^psi[count * e^W] = eps^{-1} nu(Z) T.
  const MarkSpace space = make_mark_space({1.0, 0.5});
  const double eps = 0.1, T = 1.0;
  const auto tg = uniform_grid(T, 5);
  Tilt psi = make_tilt(tg, 2, 1.0, 2.0);
  for (std::size_t j = 0; j < psi.n_steps(); ++j) {
    psi.at(j, 0) = (j % 2 == 0) ? 1.3 : 0.8;
    psi.at(j, 1) = 1.1;
  }

  const std::size_t runs = 10000;
  std::vector<double> w(runs), cw(runs);
  for (std::uint64_t r = 0; r < runs; ++r) {
    RngStream rng(999, r, "girsanov-unbiased");
    const PointProcessSample s = sample_controlled_prm(space, eps, psi, rng);
    w[r] = std::exp(girsanov_log_weight(s, psi, eps, space, T));
    cw[r] = static_cast<double>(s.count()) * w[r];
  }
  auto mean_se = [&](const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m += v;
    m /= x.size();
    double var = 0.0;
    for (double v : x) var += (v - m) * (v - m);
    var /= (x.size() - 1);
    return std::pair<double, double>(m, std::sqrt(var / x.size()));
  };
  const auto [mw, sw] = mean_se(w);
  REQUIRE(std::abs(mw - 1.0) <= 3.0 * sw);
  const auto [mc, sc] = mean_se(cw);
  const double plain_mean = space.total_mass * T / eps;  // 15
  REQUIRE(std::abs(mc - plain_mean) <= 3.0 * sc);
}

TEST_CASE("q-functional closed forms") {
  const MarkSpace space = make_mark_space({1.0, 2.0});  // nu(Z) = 3
  const auto tg = uniform_grid(1.0, 4);

  REQUIRE(q_functional(unit_tilt(tg, 2), space) == 0.0);

  // l(0) = 1 turns Q of the zero tilt into the full nu_T-mass.
  const std::vector<double> zeros(4 * 2, 0.0);
  REQUIRE(q_functional(tg, 2, zeros, space) == Approx(3.0));

  // psi = e on a single cell of nu_T-mass 1: contribution l(e) = 1.
  const MarkSpace one = make_mark_space({1.0});
  const std::vector<double> tg1 = {0.0, 1.0};
  const std::vector<double> ve = {std::exp(1.0)};
  REQUIRE(q_functional(tg1, 1, ve, one) == Approx(1.0).epsilon(1e-14));

  const std::vector<double> bad = {-0.1};
  REQUIRE_THROWS_AS(q_functional(tg1, 1, bad, one), InputError);
}

TEST_CASE("q-functional is positive away from the unit tilt") {
  const MarkSpace space = make_mark_space({0.5, 1.5});
  const auto tg = uniform_grid(2.0, 8);
  RngStream rng(42, 0, "q-positive");
  for (int trial = 0; trial < 50; ++trial) {
    Tilt psi = make_tilt(tg, 2, 1.0, 4.0);
    bool perturbed = false;
    for (double& v : psi.values)
      if (rng.uniform() < 0.4) {
        v = 0.25 + 3.5 * rng.uniform();
        perturbed = perturbed || std::abs(v - 1.0) > 1e-3;
      }
    const double q = q_functional(psi, space);
    REQUIRE(q >= 0.0);
    if (perturbed) REQUIRE(q > 0.0);
  }
}

TEST_CASE("q-functional Taylor expansion matches the half L2 norm") {
  // |Q(1 + a phi)/a^2 - ||phi||_2^2 / 2| small relative to the norm at a = 1e-3.
  const MarkSpace space = make_mark_space({1.0, 0.5, 2.0});
  const auto tg = uniform_grid(1.0, 50);
  const Control phi = control_from_function(tg, 3, [](double t, std::size_t k) {
    return 2.0 * std::sin(2.0 * 3.14159265358979323846 * t + static_cast<double>(k));
  });

  // Independent evaluation of the target norm.
  double half_norm = 0.0;
  for (std::size_t j = 0; j + 1 < tg.size(); ++j)
    for (std::size_t k = 0; k < 3; ++k) {
      const double v = phi.values[j * 3 + k];
      half_norm += 0.5 * v * v * space.weights[k] * (tg[j + 1] - tg[j]);
    }
  REQUIRE(l2_norm_sq(phi, space) == Approx(2.0 * half_norm).epsilon(1e-14));

  const double a = 1e-3;
  const TiltBuildResult built = tilt_from_control(phi, a, 2.0);
  REQUIRE(built.clip_fraction == 0.0);
  const double q = q_functional(built.tilt, space);
  REQUIRE(std::abs(q / (a * a) - half_norm) / half_norm <= 1e-2);
}

TEST_CASE("tilt construction clips into the admissible band and reports it") {
  const auto tg = uniform_grid(1.0, 3);
  const Control lo = make_control(tg, 2, -5.0);
  const TiltBuildResult clipped = tilt_from_control(lo, 1.0, 10.0);
  REQUIRE(clipped.clip_fraction == Approx(1.0));
  for (double v : clipped.tilt.values) REQUIRE(v == Approx(0.1));

  const Control mid = make_control(tg, 2, 2.0);
  const TiltBuildResult plain = tilt_from_control(mid, 0.1, 10.0);
  REQUIRE(plain.clip_fraction == 0.0);
  for (double v : plain.tilt.values) REQUIRE(v == Approx(1.2));
}

TEST_CASE("tilt validation rejects out-of-band and malformed values") {
  const auto tg = uniform_grid(1.0, 2);
  REQUIRE_THROWS_AS(make_tilt(tg, 2, 0.2, 2.0), InputError);   // below 1/n
  REQUIRE_THROWS_AS(make_tilt(tg, 2, 3.0, 2.0), InputError);   // above n
  REQUIRE_THROWS_AS(make_tilt(tg, 2, 1.0, 0.5), InputError);   // bound < 1
  Tilt psi = make_tilt(tg, 2, 1.0, 2.0);
  psi.values.pop_back();
  REQUIRE_THROWS_AS(validate_tilt(psi), InputError);
}

TEST_CASE("admissibility against the Q budget") {
  const MarkSpace space = make_mark_space({2.0, 1.0});  // nu(Z) = 3
  const auto tg = uniform_grid(1.0, 10);
  const DeviationScale scale = make_power_scale(1e-10, 0.3);  // a = 1e-3

  // Constant control with ||phi||_2^2 = 1: c^2 nu(Z) T = 1.
  const double c = 1.0 / std::sqrt(space.total_mass);
  const Control phi = make_control(tg, 2, c);
  const Tilt psi = tilt_from_control(phi, scale.a_of_eps, 2.0).tilt;
  const AdmissibilityReport rep = check_admissible(psi, 1.0, scale, space);
  REQUIRE(rep.admissible);
  REQUIRE(rep.phi_l2_norm == Approx(1.0).epsilon(1e-9));
  REQUIRE(rep.q_value == Approx(0.5 * scale.a_of_eps * scale.a_of_eps).epsilon(1e-2));

  const Tilt unit = unit_tilt(tg, 2);
  REQUIRE(check_admissible(unit, 1e-12, scale, space).admissible);

  // psi == 0 (valid for Q, outside the tilt band): Q = nu_T-mass beats any small m.
  Tilt zero;
  zero.time_grid = tg;
  zero.n_marks = 2;
  zero.values.assign(10 * 2, 0.0);
  zero.bound = 1.0;
  DeviationScale unit_scale;
  unit_scale.epsilon = 1.0;
  unit_scale.a_of_eps = 1.0;
  const AdmissibilityReport zrep = check_admissible(zero, 0.1, unit_scale, space);
  REQUIRE_FALSE(zrep.admissible);
  REQUIRE(zrep.q_value == Approx(3.0));
}

TEST_CASE("control truncation masks only oversized entries") {
  const auto tg = uniform_grid(1.0, 2);
  Control phi = make_control(tg, 2);
  phi.values = {0.5, -3.0, 2.0, -0.2};
  const Control cut = truncated(phi, 2.0);
  REQUIRE(cut.values == std::vector<double>{0.5, 0.0, 2.0, -0.2});
  REQUIRE_THROWS_AS(truncated(phi, -1.0), InputError);
}

TEST_CASE("deviation scale construction enforces the mdp window exponent") {
  const DeviationScale s = make_power_scale(0.01, 0.3);
  REQUIRE(s.a_of_eps == Approx(std::pow(0.01, 0.3)));
  REQUIRE(s.speed() == Approx(std::pow(0.01, 0.4)));
  REQUIRE_THROWS_AS(make_power_scale(0.01, 0.6), InputError);
  REQUIRE_THROWS_AS(make_power_scale(0.01, 0.0), InputError);
  REQUIRE_THROWS_AS(make_power_scale(-1.0, 0.3), InputError);
}
