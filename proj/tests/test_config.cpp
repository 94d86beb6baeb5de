#include <catch2/catch_amalgamated.hpp>
using Catch::Approx;

#include <string>

#include "mdplab/config.hpp"

using namespace mdplab;

TEST_CASE("minimal config parses with documented defaults") {
  const RunConfig cfg = parse_config_text("[model]\nkind = linear-test\n");
  REQUIRE(cfg.model.kind == "linear-test");
  REQUIRE(cfg.solver.h == 1e-3);
  REQUIRE(cfg.experiment.replicas == 10000);
  REQUIRE(cfg.scale.gamma == 0.3);
  REQUIRE(cfg.seed.master == 1);
  REQUIRE(cfg.output.dir == "out");
}

TEST_CASE("a fully specified config lands in the right fields") {
  const std::string text =
      "[model]\n"
      "kind = nse2d\n"
      "K = 3\n"
      "visc = 0.5\n"
      "amplitude = 1.2\n"
      "[noise]\n"
      "mark_weights = 1.0, 0.5\n"
      "g_amplitudes = 0.8, -0.4\n"
      "g_mults = 0.1, 0.0\n"
      "[scale]\n"
      "gamma = 0.25\n"
      "epsilon_grid = 0.25, 0.0625, 0.015625\n"
      "eps_ceiling = 0.5\n"
      "[solver]\n"
      "T = 2.0\n"
      "h = 0.01\n"
      "[experiment]\n"
      "name = mdp2\n"
      "replicas = 500\n"
      "m = 2.0\n"
      "tilt_bound = 6\n"
      "phi_const = 1.0\n"
      "[seed]\n"
      "master = 99\n"
      "[output]\n"
      "dir = results\n"
      "formats = jsonl\n";
  const RunConfig cfg = parse_config_text(text);
  REQUIRE(cfg.model.kind == "nse2d");
  REQUIRE(cfg.model.K == 3);
  REQUIRE(cfg.model.visc == 0.5);
  REQUIRE(cfg.noise.mark_weights == std::vector<double>{1.0, 0.5});
  REQUIRE(cfg.noise.g_mults == std::vector<double>{0.1, 0.0});
  REQUIRE(cfg.scale.gamma == 0.25);
  REQUIRE(cfg.scale.epsilon_grid.size() == 3);
  REQUIRE(cfg.solver.T == 2.0);
  REQUIRE(cfg.experiment.name == "mdp2");
  REQUIRE(cfg.experiment.replicas == 500);
  REQUIRE(cfg.seed.master == 99);
  REQUIRE(cfg.output.formats == std::vector<std::string>{"jsonl"});
}

TEST_CASE("out-of-window gamma is rejected with the canonical message") {
  REQUIRE_THROWS_WITH(parse_config_text("[scale]\ngamma = 0.6\n"),
                      Catch::Matchers::ContainsSubstring("gamma must lie in (0, 0.5)"));
  REQUIRE_THROWS_WITH(parse_config_text("[scale]\ngamma = 0.5\n"),
                      Catch::Matchers::ContainsSubstring("gamma must lie in (0, 0.5)"));
  REQUIRE_NOTHROW(parse_config_text("[scale]\ngamma = 0.49\n"));
}

TEST_CASE("duplicate keys are rejected with both line numbers") {
  const std::string text =
      "[solver]\n"
      "T = 1.0\n"
      "h = 0.01\n"
      "h = 0.02\n";
  REQUIRE_THROWS_WITH(parse_config_text(text),
                      Catch::Matchers::ContainsSubstring("line 4") &&
                          Catch::Matchers::ContainsSubstring("duplicate key 'solver.h'") &&
                          Catch::Matchers::ContainsSubstring("line 3"));
}

TEST_CASE("all violations are reported at once") {
  const std::string text =
      "[model]\n"
      "kind = heat-equation\n"
      "mystery = 1\n"
      "[scale]\n"
      "gamma = 0.9\n"
      "epsilon_grid = 0.1, 0.2\n";
  try {
    parse_config_text(text);
    FAIL("expected a throw");
  } catch (const InputError& e) {
    const std::string what = e.what();
    REQUIRE(what.find("unknown key 'model.mystery'") != std::string::npos);
    REQUIRE(what.find("line 3") != std::string::npos);
    REQUIRE(what.find("model.kind must be one of") != std::string::npos);
    REQUIRE(what.find("gamma must lie in (0, 0.5)") != std::string::npos);
    REQUIRE(what.find("strictly decreasing") != std::string::npos);
  }
}

TEST_CASE("type errors carry their line numbers") {
  REQUIRE_THROWS_WITH(parse_config_text("[solver]\nh = fast\n"),
                      Catch::Matchers::ContainsSubstring("line 2") &&
                          Catch::Matchers::ContainsSubstring("solver.h"));
  REQUIRE_THROWS_WITH(parse_config_text("[seed]\nmaster = -3\n"),
                      Catch::Matchers::ContainsSubstring("line 2"));
  REQUIRE_THROWS_WITH(parse_config_text("no equals sign here\n"),
                      Catch::Matchers::ContainsSubstring("line 1"));
  REQUIRE_THROWS_WITH(parse_config_text("[mystery]\nx = 1\n"),
                      Catch::Matchers::ContainsSubstring("unknown section 'mystery'"));
}

TEST_CASE("serialization round-trips exactly") {
  RunConfig cfg = parse_config_text(
      "[model]\nkind = linear-test\ndim = 3\neigenvalues = 1, 2.5, 0.125\n"
      "[noise]\nmark_weights = 1, 0.5, 0.25\ng_amplitudes = 0.3, -0.7, 1\n"
      "[scale]\ngamma = 0.3\nepsilon_grid = 0.125, 0.0625\n"
      "[experiment]\nname = tail\ntarget = 1, 0, 0\ndelta = 0.25\n"
      "[seed]\nmaster = 31415\n");
  const std::string text = serialize_config(cfg);
  const RunConfig back = parse_config_text(text);
  REQUIRE(back == cfg);
  REQUIRE(serialize_config(back) == text);  // serialization is idempotent

  // and a config with awkward floats survives the trip bit-for-bit
  cfg.solver.h = 0.1 + 0.2;  // 0.30000000000000004
  cfg.scale.gamma = 1.0 / 3.0;
  const RunConfig back2 = parse_config_text(serialize_config(cfg));
  REQUIRE(back2 == cfg);
}

TEST_CASE("run ids are content hashes of the config") {
  const RunConfig a = parse_config_text("[seed]\nmaster = 1\n");
  const RunConfig b = parse_config_text("[seed]\nmaster = 1\n");
  RunConfig c = a;
  c.seed.master = 2;
  REQUIRE(run_id(a) == run_id(b));
  REQUIRE(run_id(a) != run_id(c));
  REQUIRE(run_id(a).size() == 16);
  for (char ch : run_id(a)) REQUIRE(std::string("0123456789abcdef").find(ch) != std::string::npos);
}

TEST_CASE("missing config files are reported as such") {
  REQUIRE_THROWS_WITH(parse_config("/nonexistent/path/x.cfg"),
                      Catch::Matchers::ContainsSubstring("config file not found"));
}

TEST_CASE("config bridges build the configured objects") {
  const RunConfig cfg = parse_config_text(
      "[model]\nkind = linear-test\ndim = 2\neigenvalues = 1, 2\namplitude = 0.5\n"
      "[noise]\nmark_weights = 1, 0.5\ng_amplitudes = 0.7, -0.3\n"
      "[experiment]\nname = lln\nreplicas = 7\n");
  const ModelSpec m = model_from_config(cfg);
  REQUIRE(m.dim == 2);
  REQUIRE(m.a_eigenvalues == std::vector<double>{1.0, 2.0});
  const StateVector u0 = initial_state_from_config(m, cfg);
  REQUIRE(vec::norm2(u0) == Approx(0.5).epsilon(1e-12));
  const auto noise = noise_from_config(m, cfg);
  REQUIRE(noise.first.size() == 2);
  REQUIRE_FALSE(noise.second.is_zero());
  const ExperimentConfig ec = experiment_from_config(cfg);
  REQUIRE(ec.replicas == 7);
  REQUIRE(ec.model.dim == 2);
  REQUIRE(ec.u0.size() == 2);
  validate_experiment_config(ec);

  RunConfig sabra = cfg;
  sabra.model.kind = "sabra";
  sabra.model.N = 8;
  const ModelSpec ms = model_from_config(sabra);
  REQUIRE(ms.dim == 16);  // complex shells, two reals each

  RunConfig nse = cfg;
  nse.model.kind = "nse2d";
  nse.model.K = 1;
  REQUIRE(model_from_config(nse).dim == 4);
}
