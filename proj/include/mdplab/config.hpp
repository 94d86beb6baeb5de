#pragma once

// Flat-sectioned config files and the bridges from a parsed RunConfig to the
// library objects. The parser reports every schema violation at once, with
// line numbers; serialize_config is the exact inverse of parse_config_text,
// and the run id is a content hash of the serialized form, so identical ids
// mean identical configs.

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mdplab/experiments.hpp"
#include "mdplab/models/linear.hpp"
#include "mdplab/models/nse2d.hpp"
#include "mdplab/models/sabra.hpp"

namespace mdplab {

struct ModelSection {
  std::string kind = "linear-test";  // linear-test | nse2d | sabra
  std::size_t dim = 1;               // linear-test
  std::vector<double> eigenvalues = {1.0};
  int K = 4;        // nse2d Fourier cutoff
  int N = 16;       // sabra shell count
  double visc = 1.0;
  double amplitude = 1.0;  // canonical initial-state amplitude
  bool operator==(const ModelSection&) const = default;
};

struct NoiseSection {
  std::vector<double> mark_weights = {1.0};
  std::vector<double> g_amplitudes = {1.0};
  std::vector<double> g_mults;  // optional, defaults to zeros
  bool operator==(const NoiseSection&) const = default;
};

struct ScaleSection {
  double gamma = 0.3;
  std::vector<double> epsilon_grid = {0.0625};
  double eps_ceiling = 0.5;
  bool operator==(const ScaleSection&) const = default;
};

struct SolverSection {
  double T = 1.0;
  double h = 1e-3;
  bool operator==(const SolverSection&) const = default;
};

struct ExperimentSection {
  std::string name = "lln";  // lln | mdp1 | mdp2 | tail
  std::size_t replicas = 10000;
  double m = 1.0;
  double tilt_bound = 10.0;
  std::vector<double> target;  // tail / rate subcommand
  double delta = 0.25;
  double phi_const = 0.0;  // constant control level for mdp1/mdp2
  std::vector<std::size_t> modes = {1, 2, 4, 8, 16, 32, 64};
  std::vector<double> rho;  // mdp1 perturbation amplitudes, default ones
  bool check_slope = true;
  double slope_lo = 0.8;
  double slope_hi = 1.2;
  bool check_ratio = false;
  double decay_ratio = 0.1;
  double tail_rel_tol = 0.3;
  double bound_trend_tol = 0.05;
  bool operator==(const ExperimentSection&) const = default;
};

struct SeedSection {
  std::uint64_t master = 1;
  bool operator==(const SeedSection&) const = default;
};

struct OutputSection {
  std::string dir = "out";
  std::vector<std::string> formats = {"jsonl", "csv"};
  bool operator==(const OutputSection&) const = default;
};

struct RunConfig {
  ModelSection model;
  NoiseSection noise;
  ScaleSection scale;
  SolverSection solver;
  ExperimentSection experiment;
  SeedSection seed;
  OutputSection output;
  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool to_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end != nullptr && *end == '\0' && errno == 0 && std::isfinite(out);
}

inline bool to_u64(const std::string& s, std::uint64_t& out) {
  if (s.empty() || s[0] == '-') return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtoull(s.c_str(), &end, 10);
  return end != nullptr && *end == '\0' && errno == 0;
}

inline bool to_size(const std::string& s, std::size_t& out) {
  std::uint64_t v = 0;
  if (!to_u64(s, v)) return false;
  out = static_cast<std::size_t>(v);
  return true;
}

inline bool to_int(const std::string& s, int& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == nullptr || *end != '\0' || errno != 0) return false;
  out = static_cast<int>(v);
  return true;
}

inline bool to_bool(const std::string& s, bool& out) {
  if (s == "true" || s == "1") {
    out = true;
    return true;
  }
  if (s == "false" || s == "0") {
    out = false;
    return true;
  }
  return false;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  std::stringstream in(s);
  while (std::getline(in, cur, ',')) parts.push_back(trim(cur));
  return parts;
}

inline bool to_double_list(const std::string& s, std::vector<double>& out) {
  out.clear();
  for (const auto& p : split_list(s)) {
    double v = 0.0;
    if (!to_double(p, v)) return false;
    out.push_back(v);
  }
  return !out.empty();
}

inline bool to_size_list(const std::string& s, std::vector<std::size_t>& out) {
  out.clear();
  for (const auto& p : split_list(s)) {
    std::size_t v = 0;
    if (!to_size(p, v)) return false;
    out.push_back(v);
  }
  return !out.empty();
}

inline bool to_string_list(const std::string& s, std::vector<std::string>& out) {
  out.clear();
  for (const auto& p : split_list(s)) {
    if (p.empty()) return false;
    out.push_back(p);
  }
  return !out.empty();
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt(v[i]);
  }
  return out;
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

inline std::string join_strings(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::vector<std::string> issues;
  std::vector<std::pair<std::string, int>> seen;  // section.key -> first line

  const auto complain = [&issues](int line, const std::string& msg) {
    issues.push_back("line " + std::to_string(line) + ": " + msg);
  };

  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        complain(line_no, "malformed section header '" + line + "'");
        continue;
      }
      section = detail::trim(line.substr(1, line.size() - 2));
      const bool known = section == "model" || section == "noise" || section == "scale" ||
                         section == "solver" || section == "experiment" ||
                         section == "seed" || section == "output";
      if (!known) {
        complain(line_no, "unknown section '" + section + "'");
        section.clear();
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      complain(line_no, "expected 'key = value', got '" + line + "'");
      continue;
    }
    if (section.empty()) {
      complain(line_no, "key outside of any section");
      continue;
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const std::string path = section + "." + key;
    bool dup = false;
    for (const auto& s : seen)
      if (s.first == path) {
        complain(line_no, "duplicate key '" + path + "' (first set at line " +
                              std::to_string(s.second) + ")");
        dup = true;
      }
    if (dup) continue;
    seen.emplace_back(path, line_no);

    const auto bad = [&](const char* type) {
      complain(line_no, "key '" + path + "' expects " + type + ", got '" + value + "'");
    };
    bool known_key = true;
    if (section == "model") {
      if (key == "kind") {
        cfg.model.kind = value;
      } else if (key == "dim") {
        if (!detail::to_size(value, cfg.model.dim)) bad("a nonnegative integer");
      } else if (key == "eigenvalues") {
        if (!detail::to_double_list(value, cfg.model.eigenvalues)) bad("a list of reals");
      } else if (key == "K") {
        if (!detail::to_int(value, cfg.model.K)) bad("an integer");
      } else if (key == "N") {
        if (!detail::to_int(value, cfg.model.N)) bad("an integer");
      } else if (key == "visc") {
        if (!detail::to_double(value, cfg.model.visc)) bad("a real");
      } else if (key == "amplitude") {
        if (!detail::to_double(value, cfg.model.amplitude)) bad("a real");
      } else {
        known_key = false;
      }
    } else if (section == "noise") {
      if (key == "mark_weights") {
        if (!detail::to_double_list(value, cfg.noise.mark_weights)) bad("a list of reals");
      } else if (key == "g_amplitudes") {
        if (!detail::to_double_list(value, cfg.noise.g_amplitudes)) bad("a list of reals");
      } else if (key == "g_mults") {
        if (!detail::to_double_list(value, cfg.noise.g_mults)) bad("a list of reals");
      } else {
        known_key = false;
      }
    } else if (section == "scale") {
      if (key == "gamma") {
        if (!detail::to_double(value, cfg.scale.gamma)) bad("a real");
      } else if (key == "epsilon_grid") {
        if (!detail::to_double_list(value, cfg.scale.epsilon_grid)) bad("a list of reals");
      } else if (key == "eps_ceiling") {
        if (!detail::to_double(value, cfg.scale.eps_ceiling)) bad("a real");
      } else {
        known_key = false;
      }
    } else if (section == "solver") {
      if (key == "T") {
        if (!detail::to_double(value, cfg.solver.T)) bad("a real");
      } else if (key == "h") {
        if (!detail::to_double(value, cfg.solver.h)) bad("a real");
      } else {
        known_key = false;
      }
    } else if (section == "experiment") {
      if (key == "name") {
        cfg.experiment.name = value;
      } else if (key == "replicas") {
        if (!detail::to_size(value, cfg.experiment.replicas)) bad("a nonnegative integer");
      } else if (key == "m") {
        if (!detail::to_double(value, cfg.experiment.m)) bad("a real");
      } else if (key == "tilt_bound") {
        if (!detail::to_double(value, cfg.experiment.tilt_bound)) bad("a real");
      } else if (key == "target") {
        if (!detail::to_double_list(value, cfg.experiment.target)) bad("a list of reals");
      } else if (key == "delta") {
        if (!detail::to_double(value, cfg.experiment.delta)) bad("a real");
      } else if (key == "phi_const") {
        if (!detail::to_double(value, cfg.experiment.phi_const)) bad("a real");
      } else if (key == "modes") {
        if (!detail::to_size_list(value, cfg.experiment.modes)) bad("a list of integers");
      } else if (key == "rho") {
        if (!detail::to_double_list(value, cfg.experiment.rho)) bad("a list of reals");
      } else if (key == "check_slope") {
        if (!detail::to_bool(value, cfg.experiment.check_slope)) bad("true/false");
      } else if (key == "slope_lo") {
        if (!detail::to_double(value, cfg.experiment.slope_lo)) bad("a real");
      } else if (key == "slope_hi") {
        if (!detail::to_double(value, cfg.experiment.slope_hi)) bad("a real");
      } else if (key == "check_ratio") {
        if (!detail::to_bool(value, cfg.experiment.check_ratio)) bad("true/false");
      } else if (key == "decay_ratio") {
        if (!detail::to_double(value, cfg.experiment.decay_ratio)) bad("a real");
      } else if (key == "tail_rel_tol") {
        if (!detail::to_double(value, cfg.experiment.tail_rel_tol)) bad("a real");
      } else if (key == "bound_trend_tol") {
        if (!detail::to_double(value, cfg.experiment.bound_trend_tol)) bad("a real");
      } else {
        known_key = false;
      }
    } else if (section == "seed") {
      if (key == "master") {
        if (!detail::to_u64(value, cfg.seed.master)) bad("a nonnegative integer");
      } else {
        known_key = false;
      }
    } else if (section == "output") {
      if (key == "dir") {
        cfg.output.dir = value;
      } else if (key == "formats") {
        if (!detail::to_string_list(value, cfg.output.formats)) bad("a list of names");
      } else {
        known_key = false;
      }
    }
    if (!known_key) complain(line_no, "unknown key '" + path + "'");
  }

  // Semantic schema checks, collected alongside the syntactic ones.
  const auto check = [&issues](bool ok, const std::string& msg) {
    if (!ok) issues.push_back(msg);
  };
  check(cfg.model.kind == "linear-test" || cfg.model.kind == "nse2d" ||
            cfg.model.kind == "sabra",
        "model.kind must be one of linear-test, nse2d, sabra (got '" + cfg.model.kind +
            "')");
  check(cfg.model.dim >= 1, "model.dim must be at least 1");
  check(cfg.model.eigenvalues.size() == 1 || cfg.model.eigenvalues.size() == cfg.model.dim,
        "model.eigenvalues must have one entry or one per coordinate");
  for (double l : cfg.model.eigenvalues)
    check(l > 0.0, "model.eigenvalues must be positive");
  check(cfg.model.K >= 1, "model.K must be at least 1");
  check(cfg.model.N >= 2, "model.N must be at least 2");
  check(cfg.model.visc > 0.0, "model.visc must be positive");
  check(std::isfinite(cfg.model.amplitude), "model.amplitude must be finite");
  for (double w : cfg.noise.mark_weights)
    check(w > 0.0, "noise.mark_weights must be strictly positive");
  check(cfg.noise.g_amplitudes.size() == cfg.noise.mark_weights.size(),
        "noise.g_amplitudes must have one entry per mark");
  check(cfg.noise.g_mults.empty() ||
            cfg.noise.g_mults.size() == cfg.noise.mark_weights.size(),
        "noise.g_mults must be empty or have one entry per mark");
  check(cfg.scale.gamma > 0.0 && cfg.scale.gamma < 0.5, "gamma must lie in (0, 0.5)");
  check(cfg.scale.eps_ceiling > 0.0, "scale.eps_ceiling must be positive");
  check(!cfg.scale.epsilon_grid.empty(), "scale.epsilon_grid must not be empty");
  for (std::size_t i = 0; i < cfg.scale.epsilon_grid.size(); ++i) {
    const double e = cfg.scale.epsilon_grid[i];
    check(e > 0.0 && e <= cfg.scale.eps_ceiling,
          "scale.epsilon_grid entries must lie in (0, eps_ceiling]");
    if (i > 0)
      check(e < cfg.scale.epsilon_grid[i - 1],
            "scale.epsilon_grid must be strictly decreasing");
  }
  check(cfg.solver.T > 0.0, "solver.T must be positive");
  check(cfg.solver.h > 0.0 && cfg.solver.h <= cfg.solver.T,
        "solver.h must lie in (0, T]");
  check(cfg.experiment.name == "lln" || cfg.experiment.name == "mdp1" ||
            cfg.experiment.name == "mdp2" || cfg.experiment.name == "tail",
        "experiment.name must be one of lln, mdp1, mdp2, tail (got '" +
            cfg.experiment.name + "')");
  check(cfg.experiment.replicas >= 1, "experiment.replicas must be at least 1");
  check(cfg.experiment.m > 0.0, "experiment.m must be positive");
  check(cfg.experiment.tilt_bound > 1.0, "experiment.tilt_bound must exceed 1");
  check(cfg.experiment.delta > 0.0, "experiment.delta must be positive");
  check(!cfg.experiment.modes.empty(), "experiment.modes must not be empty");
  check(cfg.experiment.rho.empty() ||
            cfg.experiment.rho.size() == cfg.noise.mark_weights.size(),
        "experiment.rho must be empty or have one entry per mark");
  check(!cfg.output.dir.empty(), "output.dir must not be empty");
  for (const auto& f : cfg.output.formats)
    check(f == "jsonl" || f == "csv", "output.formats entries must be jsonl or csv");

  if (!issues.empty()) {
    std::string all = "invalid config (" + std::to_string(issues.size()) + " problem" +
                      (issues.size() == 1 ? "" : "s") + "):";
    for (const auto& i : issues) all += "\n  " + i;
    throw InputError(all);
  }
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("config file not found: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

inline std::string serialize_config(const RunConfig& cfg) {
  using detail::fmt;
  std::ostringstream os;
  os << "[model]\n";
  os << "kind = " << cfg.model.kind << "\n";
  os << "dim = " << cfg.model.dim << "\n";
  os << "eigenvalues = " << detail::join_doubles(cfg.model.eigenvalues) << "\n";
  os << "K = " << cfg.model.K << "\n";
  os << "N = " << cfg.model.N << "\n";
  os << "visc = " << fmt(cfg.model.visc) << "\n";
  os << "amplitude = " << fmt(cfg.model.amplitude) << "\n";
  os << "[noise]\n";
  os << "mark_weights = " << detail::join_doubles(cfg.noise.mark_weights) << "\n";
  os << "g_amplitudes = " << detail::join_doubles(cfg.noise.g_amplitudes) << "\n";
  if (!cfg.noise.g_mults.empty())
    os << "g_mults = " << detail::join_doubles(cfg.noise.g_mults) << "\n";
  os << "[scale]\n";
  os << "gamma = " << fmt(cfg.scale.gamma) << "\n";
  os << "epsilon_grid = " << detail::join_doubles(cfg.scale.epsilon_grid) << "\n";
  os << "eps_ceiling = " << fmt(cfg.scale.eps_ceiling) << "\n";
  os << "[solver]\n";
  os << "T = " << fmt(cfg.solver.T) << "\n";
  os << "h = " << fmt(cfg.solver.h) << "\n";
  os << "[experiment]\n";
  os << "name = " << cfg.experiment.name << "\n";
  os << "replicas = " << cfg.experiment.replicas << "\n";
  os << "m = " << fmt(cfg.experiment.m) << "\n";
  os << "tilt_bound = " << fmt(cfg.experiment.tilt_bound) << "\n";
  if (!cfg.experiment.target.empty())
    os << "target = " << detail::join_doubles(cfg.experiment.target) << "\n";
  os << "delta = " << fmt(cfg.experiment.delta) << "\n";
  os << "phi_const = " << fmt(cfg.experiment.phi_const) << "\n";
  os << "modes = " << detail::join_sizes(cfg.experiment.modes) << "\n";
  if (!cfg.experiment.rho.empty())
    os << "rho = " << detail::join_doubles(cfg.experiment.rho) << "\n";
  os << "check_slope = " << (cfg.experiment.check_slope ? "true" : "false") << "\n";
  os << "slope_lo = " << fmt(cfg.experiment.slope_lo) << "\n";
  os << "slope_hi = " << fmt(cfg.experiment.slope_hi) << "\n";
  os << "check_ratio = " << (cfg.experiment.check_ratio ? "true" : "false") << "\n";
  os << "decay_ratio = " << fmt(cfg.experiment.decay_ratio) << "\n";
  os << "tail_rel_tol = " << fmt(cfg.experiment.tail_rel_tol) << "\n";
  os << "bound_trend_tol = " << fmt(cfg.experiment.bound_trend_tol) << "\n";
  os << "[seed]\n";
  os << "master = " << cfg.seed.master << "\n";
  os << "[output]\n";
  os << "dir = " << cfg.output.dir << "\n";
  os << "formats = " << detail::join_strings(cfg.output.formats) << "\n";
  return os.str();
}

// Content hash of the serialized config: equal ids mean equal configs (FNV-1a
// over the canonical serialization; a collision would need adversarial input).
inline std::string run_id(const RunConfig& cfg) {
  const std::string s = serialize_config(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Bridges from the parsed sections to live library objects.

inline ModelSpec model_from_config(const RunConfig& cfg) {
  if (cfg.model.kind == "linear-test") {
    LinearConfig lc;
    lc.dim = cfg.model.dim;
    lc.eigenvalues = cfg.model.eigenvalues;
    return build_linear(lc);
  }
  if (cfg.model.kind == "nse2d") return build_nse2d({cfg.model.K, cfg.model.visc});
  if (cfg.model.kind == "sabra") {
    SabraConfig sc;
    sc.n_shells = static_cast<std::size_t>(cfg.model.N);
    sc.visc = cfg.model.visc;
    return build_sabra(sc);
  }
  throw InputError("unknown model kind: " + cfg.model.kind);
}

inline StateVector initial_state_from_config(const ModelSpec& model, const RunConfig& cfg) {
  if (cfg.model.kind == "linear-test")
    return linear_canonical_state(model, cfg.model.amplitude);
  if (cfg.model.kind == "nse2d") return nse2d_canonical_state(model, cfg.model.amplitude);
  return sabra_canonical_state(model, cfg.model.amplitude);
}

inline std::pair<MarkSpace, JumpCoefficient> noise_from_config(const ModelSpec& model,
                                                               const RunConfig& cfg) {
  MarkSpace space = make_mark_space(cfg.noise.mark_weights);
  // All-zero amplitudes and multipliers describe G == 0; hand back the null
  // coefficient so the solvers take the deterministic fast path.
  const auto zero = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  if (zero(cfg.noise.g_amplitudes) && zero(cfg.noise.g_mults))
    return {std::move(space), JumpCoefficient{}};
  JumpCoefficient g =
      make_affine_jump(model.dim, cfg.noise.g_amplitudes, cfg.noise.g_mults);
  return {std::move(space), std::move(g)};
}

inline ExperimentConfig experiment_from_config(const RunConfig& cfg) {
  ExperimentConfig ec;
  ec.name = cfg.experiment.name;
  ec.model = model_from_config(cfg);
  auto noise = noise_from_config(ec.model, cfg);
  ec.space = std::move(noise.first);
  ec.g = std::move(noise.second);
  ec.gamma = cfg.scale.gamma;
  ec.eps_grid = cfg.scale.epsilon_grid;
  ec.replicas = cfg.experiment.replicas;
  ec.horizon = cfg.solver.T;
  ec.h = cfg.solver.h;
  ec.m_budget = cfg.experiment.m;
  ec.tilt_bound = cfg.experiment.tilt_bound;
  ec.u0 = initial_state_from_config(ec.model, cfg);
  ec.master_seed = cfg.seed.master;
  ec.controls.eps_ceiling = cfg.scale.eps_ceiling;
  ec.thresholds.check_slope = cfg.experiment.check_slope;
  ec.thresholds.slope_lo = cfg.experiment.slope_lo;
  ec.thresholds.slope_hi = cfg.experiment.slope_hi;
  ec.thresholds.check_ratio = cfg.experiment.check_ratio;
  ec.thresholds.decay_ratio = cfg.experiment.decay_ratio;
  ec.thresholds.tail_rel_tol = cfg.experiment.tail_rel_tol;
  ec.thresholds.bound_trend_tol = cfg.experiment.bound_trend_tol;
  return ec;
}

}  // namespace mdplab
