#include "helfrich/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "helfrich/analysis.hpp"
#include "helfrich/errors.hpp"
#include "helfrich/sensitivity.hpp"

namespace helfrich::cli {

namespace {

using nlohmann::json;

constexpr int kSamples = 1001;
constexpr const char* kParameterNames[] = {"C0", "gamma", "u0"};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double parse_number(const std::string& key, const std::string& text) {
  std::string t = trim(text);
  double factor = 1.0;
  if (t.size() > 2 && t.compare(t.size() - 2, 2, "pi") == 0) {
    factor = M_PI;
    t = trim(t.substr(0, t.size() - 2));
    if (t.empty() || t == "*") t = "1";
    if (t.back() == '*') t.pop_back();
  }
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v)) {
    throw ConfigError("'" + key + "': expected a number, got '" + text + "'");
  }
  return v * factor;
}

int parse_int(const std::string& key, const std::string& text) {
  const double v = parse_number(key, text);
  if (v != std::floor(v) || std::abs(v) > 1e9) {
    throw ConfigError("'" + key + "': expected an integer, got '" + text + "'");
  }
  return static_cast<int>(v);
}

bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "on" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "off" || t == "0" || t == "no") return false;
  throw ConfigError("'" + key + "': expected true or false, got '" + text + "'");
}

std::string parse_choice(const std::string& key, const std::string& text,
                         std::initializer_list<const char*> allowed) {
  const std::string t = trim(text);
  std::string list;
  for (const char* a : allowed) {
    if (t == a) return t;
    list += list.empty() ? a : std::string(", ") + a;
  }
  throw ConfigError("'" + key + "': expected one of " + list + ", got '" + text + "'");
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"formulation",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.formulation = parse_choice(k, v, {"arc_length", "area"}) == "area"
                             ? FormulationKind::Area
                             : FormulationKind::ArcLength;
       }},
      {"curvature.kind",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto s = parse_choice(k, v, {"type1", "type2", "constant"});
         c.curvature = s == "type1"   ? CurvatureKind::TypeI
                       : s == "type2" ? CurvatureKind::TypeII
                                      : CurvatureKind::Constant;
       }},
      {"curvature.C0", [](RunConfig& c, const std::string& k,
                          const std::string& v) { c.c0 = parse_number(k, v); }},
      {"curvature.gamma", [](RunConfig& c, const std::string& k,
                             const std::string& v) { c.gamma = parse_number(k, v); }},
      {"curvature.u0", [](RunConfig& c, const std::string& k,
                          const std::string& v) { c.u0 = parse_number(k, v); }},
      {"curvature.R0", [](RunConfig& c, const std::string& k,
                          const std::string& v) { c.r0 = parse_number(k, v); }},
      {"curvature.value", [](RunConfig& c, const std::string& k,
                             const std::string& v) { c.const_value = parse_number(k, v); }},
      {"curvature.xi", [](RunConfig& c, const std::string& k,
                          const std::string& v) { c.xi = parse_number(k, v); }},
      {"curvature.s0", [](RunConfig& c, const std::string& k,
                          const std::string& v) { c.s0 = parse_number(k, v); }},
      {"curvature.a0", [](RunConfig& c, const std::string& k,
                          const std::string& v) { c.a0 = parse_number(k, v); }},
      {"bc.kind",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.bc = parse_choice(k, v, {"type1", "type2"}) == "type1" ? BoundaryKind::TypeI
                                                                   : BoundaryKind::TypeII;
       }},
      {"bc.theta", [](RunConfig& c, const std::string& k,
                      const std::string& v) { c.theta = parse_number(k, v); }},
      {"bc.lambda_tilde0", [](RunConfig& c, const std::string& k,
                              const std::string& v) { c.lambda_tilde0 = parse_number(k, v); }},
      {"bc.lambda0", [](RunConfig& c, const std::string& k,
                        const std::string& v) { c.lambda0 = parse_number(k, v); }},
      {"bc.epsilon", [](RunConfig& c, const std::string& k,
                        const std::string& v) { c.epsilon = parse_number(k, v); }},
      {"model.kappa_tilde", [](RunConfig& c, const std::string& k,
                               const std::string& v) { c.kappa_tilde = parse_number(k, v); }},
      {"model.kappa0", [](RunConfig& c, const std::string& k,
                          const std::string& v) { c.kappa0 = parse_number(k, v); }},
      {"domain.end", [](RunConfig& c, const std::string& k,
                        const std::string& v) { c.domain_end = parse_number(k, v); }},
      {"mesh.intervals", [](RunConfig& c, const std::string& k,
                            const std::string& v) { c.mesh_intervals = parse_int(k, v); }},
      {"solver.newton_tol", [](RunConfig& c, const std::string& k,
                               const std::string& v) { c.solver.newton_tol = parse_number(k, v); }},
      {"solver.max_newton_iters",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.solver.max_newton_iters = parse_int(k, v);
       }},
      {"solver.damping", [](RunConfig& c, const std::string& k,
                            const std::string& v) { c.solver.damping = parse_bool(k, v); }},
      {"solver.refine", [](RunConfig& c, const std::string& k,
                           const std::string& v) { c.solver.refine = parse_bool(k, v); }},
      {"solver.refine_tol", [](RunConfig& c, const std::string& k,
                               const std::string& v) { c.solver.refine_tol = parse_number(k, v); }},
      {"solver.max_mesh_points",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.solver.max_mesh_points = parse_int(k, v);
       }},
      {"continuation.steps", [](RunConfig& c, const std::string& k,
                                const std::string& v) { c.continuation_steps = parse_int(k, v); }},
      {"continuation.max_halvings", [](RunConfig& c, const std::string& k,
                                       const std::string& v) { c.max_halvings = parse_int(k, v); }},
      {"sweep.C0_min", [](RunConfig& c, const std::string& k,
                          const std::string& v) { c.sweep_c0_min = parse_number(k, v); }},
      {"sweep.C0_max", [](RunConfig& c, const std::string& k,
                          const std::string& v) { c.sweep_c0_max = parse_number(k, v); }},
      {"sweep.points", [](RunConfig& c, const std::string& k,
                          const std::string& v) { c.sweep_points = parse_int(k, v); }},
      {"sensitivity.parameter",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.sensitivity_parameter = parse_choice(k, v, {"C0", "gamma", "u0", "all", "1", "2", "3"});
       }},
      {"sensitivity.method",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.sensitivity_method = parse_choice(k, v, {"forward", "adjoint", "both"});
       }},
      {"sensitivity.experimental_adjoint",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.experimental_adjoint = parse_bool(k, v);
       }},
      {"check.which",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.check_which = parse_choice(k, v, {"scaling", "kappa0", "jacobians", "adjoint-bc"});
       }},
      {"check.eta",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         std::vector<double> etas;
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ',')) etas.push_back(parse_number(k, item));
         if (etas.empty()) throw ConfigError("'" + k + "': empty list");
         c.check_eta = std::move(etas);
       }},
      {"output.dir", [](RunConfig& c, const std::string&,
                        const std::string& v) { c.output_dir = trim(v); }},
      {"output.format",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.output_format = parse_choice(k, v, {"csv", "json"});
       }},
  };
  return table;
}

// --- output --------------------------------------------------------------------

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

void write_text(const RunConfig& cfg, const std::string& name, const std::string& text) {
  std::filesystem::create_directories(cfg.output_dir);
  const auto path = std::filesystem::path(cfg.output_dir) / name;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

void write_json(const RunConfig& cfg, const std::string& name, const json& j) {
  write_text(cfg, name, j.dump(2) + "\n");
}

void write_table(const RunConfig& cfg, const std::string& stem, const Table& table) {
  if (cfg.output_format == "csv") {
    write_text(cfg, stem + ".csv", format_csv(table));
    return;
  }
  json rows = json::array();
  for (const auto& r : table.rows) {
    json row = json::array();
    for (double v : r) row.push_back(number_or_null(v));
    rows.push_back(std::move(row));
  }
  write_json(cfg, stem + ".json", json{{"columns", table.header}, {"rows", rows}});
}

double sample_point(const CollocationSolution& sol, int i) {
  if (i == kSamples - 1) return sol.mesh().end();
  return sol.mesh().start() + (sol.mesh().end() - sol.mesh().start()) * i / (kSamples - 1);
}

Table solution_table(const BvpProblem& problem, const CollocationSolution& sol) {
  Table t;
  t.header = {"u", "x1", "x2", "x3", "x4", "x5", "x6", "c", "K"};
  for (int i = 0; i < kSamples; ++i) {
    const double u = sample_point(sol, i);
    const StateVector x = sol.state(u);
    std::vector<double> row{u};
    for (int k = 0; k < kStateSize; ++k) row.push_back(x(k));
    row.push_back(curvature_value(problem.profile, u));
    row.push_back(x(0) > 0.0 ? gaussian_curvature(x) : std::nan(""));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table component_table(const CollocationSolution& sol, const std::string& prefix) {
  Table t;
  t.header = {"u"};
  for (int k = 1; k <= kStateSize; ++k) t.header.push_back(prefix + std::to_string(k));
  for (int i = 0; i < kSamples; ++i) {
    const double u = sample_point(sol, i);
    const StateVector x = sol.state(u);
    std::vector<double> row{u};
    for (int k = 0; k < kStateSize; ++k) row.push_back(x(k));
    t.rows.push_back(std::move(row));
  }
  return t;
}

json shape_json(const ShapeDiagnostics& d) {
  return json{{"turning_points", d.turning_points},
              {"turning_point_count", d.turning_points.size()},
              {"neck_count", d.neck_count},
              {"self_intersects", d.self_intersects},
              {"pearled", d.pearled}};
}

// --- base solve ----------------------------------------------------------------------

struct BaseSolve {
  CollocationSolution solution;
  bool has_solution = false;
  std::string diagnostic;
};

BaseSolve solve_base(const RunConfig& cfg, const BvpProblem& problem) {
  BaseSolve out;
  if (!problem.profile.parametrised()) {
    try {
      out.solution = solve_bvp(problem, default_initial_guess(problem),
                               default_mesh(problem, cfg.mesh_intervals), cfg.solver);
      out.has_solution = true;
      if (!out.solution.converged) {
        out.diagnostic = "Newton iteration did not converge (final residual " +
                         std::to_string(out.solution.final_residual_norm) + ")";
      }
    } catch (const SingularSystemError& e) {
      out.diagnostic = std::string(e.what()) + " at Newton iteration " +
                       std::to_string(e.iteration());
    }
    return out;
  }

  BvpProblem start = problem;
  start.profile = problem.profile.with_c0(0.0);
  const auto steps = continuation_in_c0(start, 0.0, problem.profile.c0(),
                                        default_initial_guess(start),
                                        default_mesh(start, cfg.mesh_intervals), cfg.solver,
                                        ContinuationOptions{cfg.continuation_steps, cfg.max_halvings});
  out.solution = steps.back().solution;
  out.has_solution = out.solution.dimension() == kStateSize;
  if (!out.solution.converged) {
    double reached = std::nan("");
    for (const auto& s : steps) {
      if (s.solution.converged) reached = s.c0;
    }
    std::ostringstream msg;
    msg << "continuation in C0 failed before C0 = " << steps.back().c0;
    if (std::isfinite(reached)) {
      msg << " (last converged at C0 = " << reached << ")";
    } else {
      msg << " (no converged solution, not even at C0 = 0)";
    }
    msg << "; the Newton matrix was singular or the iteration did not converge";
    out.diagnostic = msg.str();
  }
  return out;
}

std::vector<Parameter> selected_parameters(const std::string& s) {
  if (s == "all") return {Parameter::C0, Parameter::Gamma, Parameter::U0};
  if (s == "C0" || s == "1") return {Parameter::C0};
  if (s == "gamma" || s == "2") return {Parameter::Gamma};
  if (s == "u0" || s == "3") return {Parameter::U0};
  throw ConfigError("unknown sensitivity parameter '" + s + "'");
}

// --- commands ------------------------------------------------------------------------

int cmd_solve(const RunConfig& cfg) {
  const BvpProblem problem = to_problem(cfg);
  const BaseSolve base = solve_base(cfg, problem);
  json summary{{"command", "solve"}, {"converged", base.solution.converged}};
  if (base.has_solution) {
    write_table(cfg, "solution", solution_table(problem, base.solution));
    summary["W"] = number_or_null(energy(problem, base.solution));
    summary["final_residual_norm"] = number_or_null(base.solution.final_residual_norm);
    summary["newton_iterations"] = base.solution.newton_iterations;
    summary["mesh_points"] = base.solution.mesh().intervals() + 1;
    if (base.solution.converged) summary["pearling"] = shape_json(classify_pearling(base.solution));
  }
  if (!base.diagnostic.empty()) summary["diagnostic"] = base.diagnostic;
  write_json(cfg, "summary.json", summary);
  if (!base.solution.converged) {
    std::cerr << "helfrich: " << base.diagnostic << "\n";
    return kExitNoConvergence;
  }
  return kExitOk;
}

int cmd_sensitivity(const RunConfig& cfg) {
  const BvpProblem problem = to_problem(cfg);
  if (!problem.profile.parametrised()) {
    throw ConfigError("sensitivities need a type1 or type2 curvature profile");
  }
  const auto params = selected_parameters(cfg.sensitivity_parameter);
  const bool forward = cfg.sensitivity_method != "adjoint";
  const bool adjoint = cfg.sensitivity_method != "forward";
  if (adjoint && problem.bc.kind() != BoundaryKind::TypeI && !cfg.experimental_adjoint) {
    throw ConfigError(
        "adjoint boundary conditions are established for bc.kind = type1 only; set "
        "sensitivity.experimental_adjoint = true to use them with type2");
  }

  const BaseSolve base = solve_base(cfg, problem);
  if (!base.solution.converged) {
    write_json(cfg, "energy_sensitivity.json",
               json{{"base_converged", false}, {"diagnostic", base.diagnostic}});
    std::cerr << "helfrich: " << base.diagnostic << "\n";
    return kExitNoConvergence;
  }

  int status = kExitOk;
  json report{{"base_converged", true},
              {"W", energy(problem, base.solution)},
              {"method", cfg.sensitivity_method}};
  json entries = json::object();

  std::optional<AdjointSolution> adj;
  if (adjoint) {
    AdjointOptions opts;
    opts.allow_experimental_bc = cfg.experimental_adjoint;
    try {
      adj = adjoint_solve(problem, base.solution, opts);
      write_table(cfg, "adjoint", component_table(adj->adjoint, "v"));
      if (!adj->converged) status = kExitNoConvergence;
    } catch (const SingularSystemError& e) {
      std::cerr << "helfrich: adjoint solve failed: " << e.what() << "\n";
      status = kExitNoConvergence;
    }
  }

  for (Parameter j : params) {
    const int idx = static_cast<int>(j);
    json entry{{"index", idx + 1}};
    double fwd_value = std::nan("");
    double adj_value = std::nan("");
    if (forward) {
      try {
        const auto fwd = forward_sensitivity(problem, base.solution, j, cfg.solver);
        write_table(cfg, "sensitivity_p" + std::to_string(idx + 1),
                    component_table(fwd.sensitivity, "s"));
        entry["forward_converged"] = fwd.converged;
        if (fwd.converged) {
          fwd_value = fwd.energy_sensitivity;
        } else {
          status = kExitNoConvergence;
        }
      } catch (const SingularSystemError& e) {
        std::cerr << "helfrich: forward sensitivity failed: " << e.what() << "\n";
        entry["forward_converged"] = false;
        status = kExitNoConvergence;
      }
      entry["forward"] = number_or_null(fwd_value);
    }
    if (adjoint) {
      if (adj && adj->converged) adj_value = energy_sensitivity_adjoint(problem, base.solution, *adj, j);
      entry["adjoint"] = number_or_null(adj_value);
    }
    if (forward && adjoint) {
      const double scale = std::max(std::abs(fwd_value), std::abs(adj_value));
      const double d = scale > 0.0 ? std::abs(fwd_value - adj_value) / scale : 0.0;
      entry["relative_discrepancy"] = number_or_null(d);
    }
    entries[kParameterNames[idx]] = entry;
  }
  report["parameters"] = entries;
  write_json(cfg, "energy_sensitivity.json", report);
  return status;
}

int cmd_sweep(const RunConfig& cfg) {
  const BvpProblem problem = to_problem(cfg);
  if (!problem.profile.parametrised()) {
    throw ConfigError("sweeps need a type1 or type2 curvature profile");
  }
  const auto grid = sweep_grid(cfg);
  SweepOptions opts;
  opts.settings = cfg.solver;
  opts.max_halvings = cfg.max_halvings;
  opts.seed_steps = cfg.continuation_steps;
  opts.mesh_intervals = cfg.mesh_intervals;
  const SweepResult result = sweep_energy_sensitivity(problem, grid, opts);

  Table t;
  t.header = {"C0", "converged", "W", "dW_dC0", "dW_dgamma", "dW_du0", "pearled", "turning_points"};
  int converged = 0;
  for (const auto& p : result.points) {
    converged += p.converged ? 1 : 0;
    t.rows.push_back({p.c0, p.converged ? 1.0 : 0.0, p.energy, p.energy_sensitivity[0],
                      p.energy_sensitivity[1], p.energy_sensitivity[2],
                      p.shape.pearled ? 1.0 : 0.0,
                      static_cast<double>(p.shape.turning_points.size())});
  }
  write_table(cfg, "sweep", t);

  json crossings = json::object();
  const auto valid = result.converged();
  for (int j = 0; j < kParameterCount; ++j) {
    json list = json::array();
    try {
      for (const auto& c : detect_zero_crossings(grid, result.sensitivity(static_cast<Parameter>(j)),
                                                 valid)) {
        list.push_back(json{{"lower", c.lower}, {"upper", c.upper}, {"exact", c.exact}});
      }
    } catch (const InsufficientDataError&) {
    }
    crossings[std::string("dW_d") + kParameterNames[j]] = list;
  }
  crossings["points"] = result.points.size();
  crossings["converged_points"] = converged;
  write_json(cfg, "crossings.json", crossings);

  if (5 * converged < 4 * static_cast<int>(result.points.size())) {
    std::cerr << "helfrich: only " << converged << " of " << result.points.size()
              << " sweep points converged\n";
    return kExitNoConvergence;
  }
  return kExitOk;
}

// Central-difference Jacobian audit along the base solution.
json audit_jacobians(const BvpProblem& problem, const CollocationSolution& sol, double& worst) {
  constexpr int kPoints = 201;
  double worst_state = 0.0, worst_params = 0.0;
  bool identity = true;
  for (int i = 0; i < kPoints; ++i) {
    const double u = sol.mesh().start() + (sol.mesh().end() - sol.mesh().start()) * i / (kPoints - 1);
    const StateVector x = sol.state(u);
    const StateVector r = sol.state_rate(u);
    if (!(x(0) > 0.0)) continue;
    identity = identity && jacobian_rate(problem, x, r, u) == Matrix6::Identity();

    const Matrix6 a = jacobian_state(problem, x, r, u);
    for (int k = 0; k < kStateSize; ++k) {
      const double step = 1e-7 * (1.0 + std::abs(x(k)));
      StateVector xp = x, xm = x;
      xp(k) += step;
      xm(k) -= step;
      if (!(xm(0) > 0.0)) continue;
      const StateVector fd = (residual(problem, xp, r, u) - residual(problem, xm, r, u)) / (2.0 * step);
      const double scale = std::max(fd.lpNorm<Eigen::Infinity>(), 1e-8);
      worst_state = std::max(worst_state, (a.col(k) - fd).lpNorm<Eigen::Infinity>() / scale);
    }

    if (!problem.profile.parametrised()) continue;
    const Matrix63 jp = jacobian_params(problem, x, r, u);
    const double noise = 1e-6 * std::max(1.0, residual(problem, x, r, u).lpNorm<Eigen::Infinity>());
    for (int k = 0; k < kParameterCount; ++k) {
      const auto param = static_cast<Parameter>(k);
      const auto& prof = problem.profile;
      const double v = prof.parameter(param);
      const double g = prof.gamma();
      const double h = k == 0   ? 1e-2 * std::max(std::abs(v), 1e-3)
                       : k == 1 ? 1e-2 * g / (1.0 + g * std::abs(u - prof.u0()))
                                : 1e-2 / g;
      auto f = [&](double d) {
        BvpProblem q = problem;
        q.profile = prof.with_parameter(param, v + d);
        return residual(q, x, r, u);
      };
      const StateVector fd = (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h);
      const double scale = std::max(fd.lpNorm<Eigen::Infinity>(), noise);
      worst_params = std::max(worst_params, (jp.col(k) - fd).lpNorm<Eigen::Infinity>() / scale);
    }
  }
  worst = std::max(worst_state, worst_params);
  if (!identity) worst = std::numeric_limits<double>::infinity();
  return json{{"points", kPoints},
              {"rate_jacobian_is_identity", identity},
              {"max_relative_defect_state", worst_state},
              {"max_relative_defect_params", worst_params}};
}

int cmd_check(const RunConfig& cfg) {
  const BvpProblem problem = to_problem(cfg);
  const std::string& which = cfg.check_which;
  if (which == "adjoint-bc") {
    if (!problem.profile.parametrised()) {
      throw ConfigError("the adjoint check needs a type1 or type2 curvature profile");
    }
    if (problem.bc.kind() != BoundaryKind::TypeI && !cfg.experimental_adjoint) {
      throw ConfigError("the adjoint check needs bc.kind = type1 or sensitivity.experimental_adjoint");
    }
  }
  const BaseSolve base = solve_base(cfg, problem);
  if (!base.solution.converged) {
    std::cerr << "helfrich: " << base.diagnostic << "\n";
    return kExitNoConvergence;
  }
  const CollocationSolution& sol = base.solution;
  const double tol = 10.0 * cfg.solver.newton_tol;
  json report{{"check", which}};
  bool passed = true;

  if (which == "jacobians") {
    double worst = 0.0;
    report["audit"] = audit_jacobians(problem, sol, worst);
    report["tolerance"] = 1e-5;
    passed = worst < 1e-5;
  } else if (which == "scaling") {
    report["tolerance"] = tol;
    report["base_defect"] = solution_defect(problem, sol);
    const ShapeDiagnostics shape = classify_pearling(sol);
    json results = json::array();
    for (double eta : cfg.check_eta) {
      const auto scaled = scaling_transform(problem, sol, eta);
      const double defect = solution_defect(scaled.problem, scaled.solution);
      const ShapeDiagnostics s = classify_pearling(scaled.solution);
      const bool same_shape = s.pearled == shape.pearled &&
                              s.turning_points.size() == shape.turning_points.size();
      const bool ok = defect < tol && same_shape;
      passed = passed && ok;
      results.push_back(json{{"eta", eta},
                             {"defect", number_or_null(defect)},
                             {"pearled", s.pearled},
                             {"pearling_preserved", same_shape},
                             {"passed", ok}});
    }
    report["pearled"] = shape.pearled;
    report["results"] = results;
  } else if (which == "kappa0") {
    report["tolerance"] = tol;
    json results = json::array();
    for (double eta : cfg.check_eta) {
      const auto k = kappa0_scaling_check(problem, sol, eta, cfg.solver);
      const bool ok = k.converged && k.discrepancy < tol;
      passed = passed && ok;
      results.push_back(json{{"eta", eta},
                             {"converged", k.converged},
                             {"discrepancy", number_or_null(k.discrepancy)},
                             {"passed", ok}});
    }
    report["results"] = results;
  } else {
    AdjointOptions opts;
    opts.allow_experimental_bc = cfg.experimental_adjoint;
    const auto adj = adjoint_solve(problem, sol, opts);
    if (!adj.converged) {
      std::cerr << "helfrich: adjoint solve did not converge\n";
      return kExitNoConvergence;
    }
    const StateVector v0 = adj.adjoint.state(sol.mesh().start());
    const StateVector v1 = adj.adjoint.state(sol.mesh().end());
    double worst_value = 0.0;
    for (int i : adjoint_vanishing_components(problem.bc, Endpoint::Start)) {
      worst_value = std::max(worst_value, std::abs(v0(i)));
    }
    for (int i : adjoint_vanishing_components(problem.bc, Endpoint::End)) {
      worst_value = std::max(worst_value, std::abs(v1(i)));
    }
    double worst_term = 0.0;
    for (int j = 0; j < kParameterCount; ++j) {
      const auto fwd = forward_sensitivity(problem, sol, static_cast<Parameter>(j), cfg.solver);
      if (!fwd.converged) {
        std::cerr << "helfrich: forward sensitivity did not converge\n";
        return kExitNoConvergence;
      }
      worst_term = std::max({worst_term, std::abs(v0.dot(fwd.sensitivity.state(sol.mesh().start()))),
                             std::abs(v1.dot(fwd.sensitivity.state(sol.mesh().end())))});
    }
    report["max_boundary_value"] = worst_value;
    report["max_boundary_term"] = worst_term;
    report["tolerance_value"] = 1e-12;
    report["tolerance_term"] = 1e-8;
    passed = worst_value < 1e-12 && worst_term < 1e-8;
  }

  report["passed"] = passed;
  write_json(cfg, "check_" + which + ".json", report);
  std::cout << "check " << which << ": " << (passed ? "pass" : "FAIL") << "\n";
  return passed ? kExitOk : kExitCheckFailed;
}

}  // namespace

RunConfig preset(const std::string& name) {
  RunConfig c;
  if (name == "table1") {
    c.formulation = FormulationKind::ArcLength;
    c.curvature = CurvatureKind::TypeI;
    c.c0 = 0.02;
    c.gamma = 20.0;
    c.u0 = 1.0;
    c.r0 = 80.0;
    c.bc = BoundaryKind::TypeI;
    c.lambda_tilde0 = 12.8;
    c.domain_end = 5.0;
    c.sweep_c0_max = 0.02;
  } else if (name == "table2") {
    c.formulation = FormulationKind::Area;
    c.curvature = CurvatureKind::TypeI;
    c.c0 = 0.02;
    c.gamma = 40.0;
    c.u0 = 1.0;
    c.r0 = 400.0 / std::sqrt(50.0);
    c.bc = BoundaryKind::TypeI;
    c.lambda_tilde0 = 6.4;
    c.domain_end = 15.0;
    c.sweep_c0_max = 0.02;
  } else if (name == "table3") {
    c.formulation = FormulationKind::ArcLength;
    c.curvature = CurvatureKind::TypeII;
    c.c0 = 4.5e-3;
    c.gamma = 30.0;
    c.u0 = 30.0;
    c.r0 = 200.0;
    c.bc = BoundaryKind::TypeII;
    c.theta = 0.9 * M_PI;
    c.lambda_tilde0 = 0.0;
    c.domain_end = 100.0;
    c.sweep_c0_max = 4.5e-3;
  } else if (name == "table4") {
    c.formulation = FormulationKind::Area;
    c.curvature = CurvatureKind::TypeII;
    c.c0 = 4e-3;
    c.gamma = 30.0;
    c.u0 = 30.0;
    c.r0 = 200.0;
    c.bc = BoundaryKind::TypeII;
    c.theta = 0.3 * M_PI;
    c.lambda_tilde0 = 0.0;
    c.domain_end = 200.0;
    c.sweep_c0_max = 4e-3;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected table1, table2, table3 or table4)");
  }
  return c;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  const auto& table = setters();
  const auto it = table.find(trim(key));
  if (it == table.end()) throw ConfigError("unknown configuration key '" + trim(key) + "'");
  it->second(config, it->first, value);
}

void apply_config_text(RunConfig& config, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(number) + ": expected 'key = value'");
    }
    apply_setting(config, t.substr(0, eq), t.substr(eq + 1));
  }
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  apply_config_text(config, buf.str());
}

BvpProblem to_problem(const RunConfig& c) {
  const bool area = c.formulation == FormulationKind::Area;
  if (!(c.r0 > 0.0)) throw ConfigError("curvature.R0 must be positive");
  if (c.mesh_intervals < 1) throw ConfigError("mesh.intervals must be at least 1");
  if (!(c.solver.newton_tol > 0.0)) throw ConfigError("solver.newton_tol must be positive");
  if (c.solver.max_newton_iters < 1) throw ConfigError("solver.max_newton_iters must be at least 1");
  if (!(c.solver.refine_tol > 0.0)) throw ConfigError("solver.refine_tol must be positive");
  if (c.continuation_steps < 1) throw ConfigError("continuation.steps must be at least 1");
  if (c.max_halvings < 0) throw ConfigError("continuation.max_halvings must be non-negative");
  for (double eta : c.check_eta) {
    if (!(eta > 0.0)) throw ConfigError("check.eta values must be positive");
  }

  double gamma = c.gamma;
  double u0 = c.u0;
  if (c.xi) gamma = area ? *c.xi * 2.0 * M_PI * c.r0 * c.r0 : *c.xi * c.r0;
  if (c.s0) {
    if (area) throw ConfigError("curvature.s0 applies to the arc_length formulation; use curvature.a0");
    u0 = *c.s0 / c.r0;
  }
  if (c.a0) {
    if (!area) throw ConfigError("curvature.a0 applies to the area formulation; use curvature.s0");
    u0 = *c.a0 / (2.0 * M_PI * c.r0 * c.r0);
  }
  double lambda_tilde = c.lambda_tilde0;
  if (c.lambda0.has_value() != c.kappa0.has_value()) {
    throw ConfigError("bc.lambda0 and model.kappa0 must be given together");
  }
  if (c.lambda0) {
    if (!(*c.kappa0 > 0.0)) throw ConfigError("model.kappa0 must be positive");
    lambda_tilde = *c.lambda0 * c.r0 * c.r0 / *c.kappa0;
  }

  BvpProblem p;
  p.formulation = c.formulation;
  p.domain_end = c.domain_end;
  p.kappa_tilde = c.kappa_tilde;
  try {
    switch (c.curvature) {
      case CurvatureKind::TypeI:
        p.profile = CurvatureProfile::type_one(c.c0, gamma, u0, c.r0);
        break;
      case CurvatureKind::TypeII:
        p.profile = CurvatureProfile::type_two(c.c0, gamma, u0, c.r0);
        break;
      case CurvatureKind::Constant:
        p.profile = CurvatureProfile::constant(c.const_value);
        break;
    }
    if (c.bc == BoundaryKind::TypeI) {
      if (!(c.epsilon > 0.0)) throw ConfigError("bc.epsilon must be positive");
      p.bc = BoundarySpec::type_one(lambda_tilde, c.epsilon);
    } else {
      if (!(std::sin(c.theta) > 0.0)) throw ConfigError("bc.theta must give sin(theta) > 0");
      p.bc = BoundarySpec::type_two(c.theta, lambda_tilde);
    }
    p.validate();
  } catch (const InvalidProfileError& e) {
    throw ConfigError(e.what());
  } catch (const InvalidProblemError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

std::vector<double> sweep_grid(const RunConfig& c) {
  if (c.sweep_points < 1) throw ConfigError("sweep.points must be at least 1");
  if (c.sweep_points > 1 && !(c.sweep_c0_max > c.sweep_c0_min)) {
    throw ConfigError("sweep.C0_max must exceed sweep.C0_min");
  }
  std::vector<double> grid(c.sweep_points);
  for (int i = 0; i < c.sweep_points; ++i) {
    grid[i] = c.sweep_points == 1 ? c.sweep_c0_min
                                  : c.sweep_c0_min + (c.sweep_c0_max - c.sweep_c0_min) * i /
                                                         (c.sweep_points - 1);
  }
  if (c.sweep_points > 1) grid.back() = c.sweep_c0_max;
  return grid;
}

std::string format_csv(const Table& table) {
  std::string out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out += ',';
    out += table.header[i];
  }
  out += '\n';
  char buf[40];
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

Table parse_csv(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty CSV");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size()) {
        throw ConfigError("malformed CSV cell '" + cell + "'");
      }
      row.push_back(v);
    }
    if (row.size() != t.header.size()) throw ConfigError("CSV row width differs from header");
    t.rows.push_back(std::move(row));
  }
  return t;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Axisymmetric Helfrich membrane shapes and their parameter sensitivities"};
  app.name("helfrich");
  app.require_subcommand(1);

  struct Common {
    std::string preset;
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    std::string format;
  } common;
  std::string param, method, which;
  std::vector<double> etas;
  bool experimental = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--preset", common.preset, "table1, table2, table3 or table4");
    sub->add_option("--config", common.config, "key = value configuration file");
    sub->add_option("--set", common.sets, "override one key, e.g. --set curvature.C0=0.01");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--format", common.format, "csv or json")
        ->check(CLI::IsMember({"csv", "json"}));
  };
  auto* solve = app.add_subcommand("solve", "solve the shape equations");
  auto* sens = app.add_subcommand("sensitivity", "solution and energy sensitivities");
  auto* sweep = app.add_subcommand("sweep", "energy sensitivities over a C0 grid");
  auto* check = app.add_subcommand("check", "verify symmetries, Jacobians or adjoint conditions");
  for (auto* sub : {solve, sens, sweep, check}) add_common(sub);
  sens->add_option("--param", param, "C0, gamma, u0 or all")
      ->check(CLI::IsMember({"C0", "gamma", "u0", "all", "1", "2", "3"}));
  sens->add_option("--method", method, "forward, adjoint or both")
      ->check(CLI::IsMember({"forward", "adjoint", "both"}));
  sens->add_flag("--experimental-adjoint", experimental,
                 "allow adjoint boundary conditions for bc.kind = type2");
  check->add_option("--which", which, "scaling, kappa0, jacobians or adjoint-bc")
      ->check(CLI::IsMember({"scaling", "kappa0", "jacobians", "adjoint-bc"}));
  check->add_option("--eta", etas, "scaling factors")->delimiter(',');
  check->add_flag("--experimental-adjoint", experimental,
                  "allow adjoint boundary conditions for bc.kind = type2");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  RunConfig cfg;
  try {
    cfg = preset(common.preset.empty() ? "table1" : common.preset);
    if (!common.config.empty()) apply_config_file(cfg, common.config);
    for (const auto& s : common.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      apply_setting(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    if (!common.out.empty()) cfg.output_dir = common.out;
    if (!common.format.empty()) cfg.output_format = common.format;
    if (!param.empty()) apply_setting(cfg, "sensitivity.parameter", param);
    if (!method.empty()) cfg.sensitivity_method = method;
    if (experimental) cfg.experimental_adjoint = true;
    if (!which.empty()) cfg.check_which = which;
    if (!etas.empty()) cfg.check_eta = etas;
  } catch (const ConfigError& e) {
    std::cerr << "helfrich: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (solve->parsed()) return cmd_solve(cfg);
    if (sens->parsed()) return cmd_sensitivity(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg);
    return cmd_check(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "helfrich: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UnsupportedProfileError& e) {
    std::cerr << "helfrich: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InvalidProblemError& e) {
    std::cerr << "helfrich: " << e.what() << "\n";
    return kExitConfig;
  } catch (const SingularSystemError& e) {
    std::cerr << "helfrich: " << e.what() << " (Newton iteration " << e.iteration() << ")\n";
    return kExitNoConvergence;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "helfrich: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace helfrich::cli
