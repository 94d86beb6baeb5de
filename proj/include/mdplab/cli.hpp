#pragma once

// Command-line surface: check / simulate / skeleton / rate / experiment.
// Every artifact embeds the run id (a content hash of the effective config,
// seed and output overrides included), so reruns with the same inputs are
// byte-identical; wall-clock timestamps exist only in registry.jsonl.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mdplab/config.hpp"

namespace mdplab {

namespace cli_detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << content;
}

inline std::string trajectory_csv(const Trajectory& tr, const std::string& id) {
  std::string out = "# run_id=" + id + "\n";
  out += "t,jump_flag";
  const std::size_t dim = tr.states.empty() ? 0 : tr.states.front().size();
  for (std::size_t i = 0; i < dim; ++i) out += ",x_" + std::to_string(i);
  out += "\n";
  for (std::size_t r = 0; r < tr.rows(); ++r) {
    out += detail::fmt(tr.times[r]);
    out += tr.post_jump[r] ? ",1" : ",0";
    for (double v : tr.states[r]) {
      out += ",";
      out += detail::fmt(v);
    }
    out += "\n";
  }
  return out;
}

// Registry entries are the one place timestamps are allowed.
inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void append_registry(const std::filesystem::path& dir, const std::string& id,
                            const std::vector<std::string>& artifacts) {
  nlohmann::json j;
  j["run_id"] = id;
  j["timestamp"] = utc_now();
  j["artifacts"] = artifacts;
  j["provenance"] = "mdplab-cli config-hash " + id;
  std::ofstream out(dir / "registry.jsonl", std::ios::app);
  if (out) out << j.dump() << "\n";
}

inline Control constant_control_on(const TimeGrid& grid, std::size_t n_marks, double value) {
  return make_control(grid.times, n_marks, value);
}

inline StateVector resolve_target(const RunConfig& rc, const std::vector<double>& cli_target,
                                  std::size_t dim) {
  std::vector<double> t = cli_target.empty() ? rc.experiment.target : cli_target;
  if (t.empty())
    throw InputError("no target: set experiment.target in the config or pass --target");
  if (t.size() != dim)
    throw InputError("target has " + std::to_string(t.size()) + " entries, model needs " +
                     std::to_string(dim));
  return t;
}

}  // namespace cli_detail

inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"moderate-deviation laboratory for dissipative equations with jump noise"};
  app.require_subcommand(1);

  std::string config_path, out_override;
  std::uint64_t seed_override = 0;
  bool quiet = false;
  std::vector<double> cli_target;

  CLI::App* sub_check = app.add_subcommand("check", "audit the structural assumptions");
  CLI::App* sub_sim = app.add_subcommand("simulate", "integrate one path, write CSV");
  CLI::App* sub_skel = app.add_subcommand("skeleton", "solve the controlled skeleton");
  CLI::App* sub_rate = app.add_subcommand("rate", "endpoint rate via the Gramian");
  CLI::App* sub_exp = app.add_subcommand("experiment", "run the configured experiment");
  bool seed_set = false, out_set = false;
  for (CLI::App* sub : {sub_check, sub_sim, sub_skel, sub_rate, sub_exp}) {
    sub->add_option("--config", config_path, "config file")->required();
    sub->add_option("--seed", seed_override, "master seed override")
        ->each([&seed_set](const std::string&) { seed_set = true; });
    sub->add_option("--out", out_override, "output directory override")
        ->each([&out_set](const std::string&) { out_set = true; });
    sub->add_flag("--quiet", quiet, "suppress stdout");
  }
  sub_rate->add_option("--target", cli_target, "endpoint target (overrides the config)")
      ->delimiter(',');

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig rc = parse_config(config_path);
    if (seed_set) rc.seed.master = seed_override;
    if (out_set) rc.output.dir = out_override;
    const std::string id = run_id(rc);
    const std::filesystem::path out_dir(rc.output.dir);
    std::filesystem::create_directories(out_dir);

    const ModelSpec model = model_from_config(rc);
    const StepControls controls{rc.scale.eps_ceiling};

    if (app.got_subcommand(sub_check)) {
      const AssumptionReport rep = verify_assumptions(model, 1000, rc.seed.master, 1e-10);
      nlohmann::json j;
      j["run_id"] = id;
      j["model"] = rep.model_label;
      j["all_pass"] = rep.all_pass;
      j["checks"] = nlohmann::json::array();
      for (const auto& c : rep.checks) {
        nlohmann::json cj;
        cj["name"] = c.name;
        cj["samples"] = c.samples;
        cj["max_defect"] = c.max_defect;
        cj["empirical_constant"] = c.empirical_constant;
        cj["tolerance"] = c.tolerance;
        cj["pass"] = c.pass;
        j["checks"].push_back(cj);
      }
      const std::string text = j.dump(2) + "\n";
      cli_detail::write_file(out_dir / "check.json", text);
      if (!quiet) std::cout << text;
      cli_detail::append_registry(out_dir, id, {(out_dir / "check.json").string()});
      return rep.all_pass ? 0 : 2;
    }

    const TimeGrid grid = make_time_grid(rc.solver.T, rc.solver.h);
    const StateVector u0 = initial_state_from_config(model, rc);
    const auto noise = noise_from_config(model, rc);
    const MarkSpace& space = noise.first;
    const JumpCoefficient& g = noise.second;

    if (app.got_subcommand(sub_sim)) {
      Trajectory tr;
      if (g.is_zero()) {
        tr = evolve_deterministic(model, u0, grid);
      } else {
        const DeviationScale scale =
            make_power_scale(rc.scale.epsilon_grid.front(), rc.scale.gamma);
        RngStream rng(rc.seed.master, 0, "simulate");
        tr = evolve_stochastic(model, g, space, scale, u0, grid, rng, controls);
      }
      cli_detail::write_file(out_dir / "trajectory.csv",
                             cli_detail::trajectory_csv(tr, id));
      if (!quiet)
        std::cout << "wrote " << (out_dir / "trajectory.csv").string() << " (" << tr.rows()
                  << " rows, " << tr.n_jumps << " jumps, energy defect "
                  << detail::fmt(tr.energy_defect) << ")\n";
      cli_detail::append_registry(out_dir, id, {(out_dir / "trajectory.csv").string()});
      return 0;
    }

    if (app.got_subcommand(sub_skel)) {
      const Trajectory u0_path = evolve_deterministic(model, u0, grid);
      const Control phi =
          cli_detail::constant_control_on(grid, space.size(), rc.experiment.phi_const);
      const Trajectory tr = solve_skeleton(model, g, space, phi, u0_path, grid);
      cli_detail::write_file(out_dir / "skeleton.csv", cli_detail::trajectory_csv(tr, id));
      if (!quiet)
        std::cout << "wrote " << (out_dir / "skeleton.csv").string() << " (|Y(T)| = "
                  << detail::fmt(vec::norm2(tr.final_state())) << ")\n";
      cli_detail::append_registry(out_dir, id, {(out_dir / "skeleton.csv").string()});
      return 0;
    }

    if (app.got_subcommand(sub_rate)) {
      const StateVector x = cli_detail::resolve_target(rc, cli_target, model.dim);
      const Trajectory u0_path = evolve_deterministic(model, u0, grid);
      const EndpointRateResult res = endpoint_rate(model, g, space, u0_path, x, grid);
      nlohmann::json j;
      j["run_id"] = id;
      j["model"] = model.label;
      j["target"] = x;
      j["reachable"] = res.reachable;
      if (res.reachable)
        j["rate"] = res.rate;
      else
        j["rate"] = nullptr;  // infinity: the target is outside the controllable span
      j["rayleigh"] = res.rayleigh;
      j["gramian_condition"] =
          std::isfinite(res.gramian_condition)
              ? nlohmann::json(res.gramian_condition)
              : nlohmann::json();
      j["gramian_asymmetry"] = res.gramian_asymmetry;
      j["cg_iterations"] = res.cg_iterations;
      j["residual"] = res.residual;
      const std::string text = j.dump(2) + "\n";
      cli_detail::write_file(out_dir / "rate.json", text);
      if (!quiet) std::cout << text;
      cli_detail::append_registry(out_dir, id, {(out_dir / "rate.json").string()});
      return 0;
    }

    // experiment
    ExperimentConfig ec = experiment_from_config(rc);
    ExperimentReport rep;
    if (rc.experiment.name == "lln") {
      rep = run_lln(ec);
    } else if (rc.experiment.name == "mdp1") {
      const Control phi =
          cli_detail::constant_control_on(grid, space.size(), rc.experiment.phi_const);
      rep = run_mdp1(ec, phi, rc.experiment.modes, rc.experiment.rho);
    } else if (rc.experiment.name == "mdp2") {
      const Control phi =
          cli_detail::constant_control_on(grid, space.size(), rc.experiment.phi_const);
      rep = run_mdp2(ec, phi, rc.experiment.tilt_bound);
    } else {
      const StateVector x = cli_detail::resolve_target(rc, {}, model.dim);
      rep = run_tail(ec, x, rc.experiment.delta);
    }

    std::vector<std::string> artifacts;
    for (const auto& fmt_name : rc.output.formats) {
      if (fmt_name == "jsonl") {
        const auto p = out_dir / (rc.experiment.name + ".jsonl");
        cli_detail::write_file(p, "{\"run_id\":\"" + id + "\"}\n" + report_to_jsonl(rep));
        artifacts.push_back(p.string());
      } else {
        const auto p = out_dir / (rc.experiment.name + ".csv");
        cli_detail::write_file(p, "# run_id=" + id + "\n" + report_summary_csv(rep));
        artifacts.push_back(p.string());
      }
    }
    cli_detail::append_registry(out_dir, id, artifacts);
    if (!quiet) {
      std::cout << rc.experiment.name << " [" << rep.model_label << "] "
                << (rep.passed ? "PASS" : "FAIL") << "\n";
      for (const auto& n : rep.notes) std::cout << "  " << n << "\n";
      std::cout << "  wall " << detail::fmt(rep.wall_seconds) << "s, artifacts in "
                << out_dir.string() << "\n";
    }
    return rep.passed ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mdplab
