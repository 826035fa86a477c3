#include "helfrich/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "helfrich/errors.hpp"

namespace helfrich {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kZeroBand = 1e-12;
constexpr int kSamplesPerInterval = 4;

// Nodes plus evenly spaced interior points of every subinterval.
std::vector<double> sample_points(const Mesh& mesh) {
  const auto& u = mesh.nodes();
  std::vector<double> out;
  out.reserve(u.size() * kSamplesPerInterval);
  for (int k = 0; k < mesh.intervals(); ++k) {
    for (int m = 0; m < kSamplesPerInterval; ++m) {
      out.push_back(u[k] + (u[k + 1] - u[k]) * m / kSamplesPerInterval);
    }
  }
  out.push_back(u.back());
  return out;
}

double orientation(double ax, double ay, double bx, double by, double cx, double cy) {
  return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
}

bool segments_cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                    const Eigen::Vector2d& d) {
  if (std::max(a.x(), b.x()) < std::min(c.x(), d.x()) ||
      std::max(c.x(), d.x()) < std::min(a.x(), b.x()) ||
      std::max(a.y(), b.y()) < std::min(c.y(), d.y()) ||
      std::max(c.y(), d.y()) < std::min(a.y(), b.y())) {
    return false;
  }
  const double o1 = orientation(a.x(), a.y(), b.x(), b.y(), c.x(), c.y());
  const double o2 = orientation(a.x(), a.y(), b.x(), b.y(), d.x(), d.y());
  const double o3 = orientation(c.x(), c.y(), d.x(), d.y(), a.x(), a.y());
  const double o4 = orientation(c.x(), c.y(), d.x(), d.y(), b.x(), b.y());
  return o1 * o2 < 0.0 && o3 * o4 < 0.0;
}

bool polyline_self_intersects(const std::vector<Eigen::Vector2d>& pts) {
  const std::size_t n = pts.size();
  if (n < 4) return false;
  // Segments sorted by left edge so each one is compared only with overlapping spans.
  std::vector<std::size_t> order(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) order[i] = i;
  auto left = [&](std::size_t i) { return std::min(pts[i].x(), pts[i + 1].x()); };
  auto right = [&](std::size_t i) { return std::max(pts[i].x(), pts[i + 1].x()); };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return left(a) < left(b); });
  for (std::size_t p = 0; p < order.size(); ++p) {
    const std::size_t i = order[p];
    for (std::size_t q = p + 1; q < order.size() && left(order[q]) <= right(i); ++q) {
      const std::size_t j = order[q];
      if (std::max(i, j) - std::min(i, j) < 2) continue;
      if (segments_cross(pts[i], pts[i + 1], pts[j], pts[j + 1])) return true;
    }
  }
  return false;
}

BvpProblem with_c0(const BvpProblem& problem, double c0) {
  BvpProblem p = problem;
  p.profile = problem.profile.with_c0(c0);
  return p;
}

std::array<double, 3> energy_gradient(const BvpProblem& problem, const CollocationSolution& sol,
                                      EnergyGradientMethod method, bool& ok) {
  std::array<double, 3> out{kNaN, kNaN, kNaN};
  ok = false;
  try {
    if (method == EnergyGradientMethod::Adjoint) {
      const auto adj = adjoint_solve(problem, sol);
      if (!adj.converged) return out;
      for (int j = 0; j < kParameterCount; ++j) {
        out[j] = energy_sensitivity_adjoint(problem, sol, adj, static_cast<Parameter>(j));
      }
    } else {
      for (int j = 0; j < kParameterCount; ++j) {
        const auto fwd = forward_sensitivity(problem, sol, static_cast<Parameter>(j));
        if (!fwd.converged) return out;
        out[j] = fwd.energy_sensitivity;
      }
    }
  } catch (const SingularSystemError&) {
    return out;
  }
  ok = true;
  return out;
}

int sign_of(double v) {
  if (std::abs(v) <= kZeroBand) return 0;
  return v > 0.0 ? 1 : -1;
}

}  // namespace

double gaussian_curvature(const StateVector& x) {
  if (!(x(0) > 0.0)) throw SingularStateError("Gaussian curvature needs x1 > 0");
  const double q = x(3) - std::sin(x(2)) / x(0);
  return x(3) * x(3) - q * q;
}

double gaussian_curvature(const CollocationSolution& solution, double u) {
  return gaussian_curvature(solution.state(u));
}

std::vector<double> detect_turning_points(const CollocationSolution& solution) {
  auto cos_psi = [&](double u) { return std::cos(solution.state(u)(2)); };
  const auto pts = sample_points(solution.mesh());
  std::vector<double> out;
  double prev = cos_psi(pts.front());
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double cur = cos_psi(pts[i]);
    if (prev * cur < 0.0) {
      double a = pts[i - 1], b = pts[i];
      double fa = prev;
      while (b - a > 1e-8) {
        const double m = 0.5 * (a + b);
        const double fm = cos_psi(m);
        if (fm == 0.0) {
          a = b = m;
          break;
        }
        if (fa * fm < 0.0) {
          b = m;
        } else {
          a = m;
          fa = fm;
        }
      }
      out.push_back(0.5 * (a + b));
    }
    if (cur != 0.0) prev = cur;
  }
  return out;
}

ShapeDiagnostics classify_pearling(const CollocationSolution& solution) {
  ShapeDiagnostics d;
  d.turning_points = detect_turning_points(solution);

  const auto pts = sample_points(solution.mesh());
  std::vector<Eigen::Vector2d> curve;
  curve.reserve(pts.size());
  for (double u : pts) {
    const StateVector x = solution.state(u);
    curve.emplace_back(x(0), x(1));
  }
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    const double x = curve[i].x();
    if (curve[i - 1].x() > x && x < curve[i + 1].x()) ++d.neck_count;
  }
  d.self_intersects = polyline_self_intersects(curve);
  d.pearled = d.turning_points.size() >= 3 && d.neck_count >= 2;
  return d;
}

std::vector<double> SweepResult::grid() const {
  std::vector<double> out;
  for (const auto& p : points) out.push_back(p.c0);
  return out;
}

std::vector<double> SweepResult::sensitivity(Parameter j) const {
  std::vector<double> out;
  for (const auto& p : points) out.push_back(p.energy_sensitivity[static_cast<int>(j)]);
  return out;
}

std::vector<bool> SweepResult::converged() const {
  std::vector<bool> out;
  for (const auto& p : points) out.push_back(p.converged);
  return out;
}

SweepResult sweep_energy_sensitivity(const BvpProblem& problem, std::span<const double> grid,
                                     const SweepOptions& options) {
  problem.validate();
  if (!problem.profile.parametrised()) {
    throw UnsupportedProfileError("sweeps need a TypeI or TypeII curvature profile");
  }
  if (grid.empty()) throw InvalidProblemError("sweep grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw InvalidProblemError("sweep grid must be strictly increasing");
  }
  EnergyGradientMethod method = options.method;
  if (method == EnergyGradientMethod::Auto) {
    method = problem.bc.kind() == BoundaryKind::TypeI ? EnergyGradientMethod::Adjoint
                                                      : EnergyGradientMethod::Forward;
  }
  if (method == EnergyGradientMethod::Adjoint && problem.bc.kind() != BoundaryKind::TypeI) {
    throw InvalidProblemError("adjoint sweeps are available for B.C. I only");
  }

  SweepResult result;
  std::optional<std::pair<double, CollocationSolution>> last;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double c0 = grid[i];
    const BvpProblem here = with_c0(problem, c0);
    CollocationSolution sol;
    if (i == 0 && options.seed) {
      sol = *options.seed;
    } else if (last) {
      auto steps = continuation_in_c0(with_c0(problem, last->first), last->first, c0,
                                      InitialGuess::from_solution(last->second),
                                      last->second.mesh(), options.settings,
                                      ContinuationOptions{1, options.max_halvings});
      sol = std::move(steps.back().solution);
    } else {
      sol = solve_by_continuation(here, options.settings,
                                  ContinuationOptions{options.seed_steps, options.max_halvings},
                                  options.mesh_intervals);
    }

    SweepPoint point;
    point.c0 = c0;
    point.energy_sensitivity = {kNaN, kNaN, kNaN};
    point.energy = kNaN;
    if (sol.converged) {
      point.energy = energy(here, sol);
      bool ok = false;
      point.energy_sensitivity = energy_gradient(here, sol, method, ok);
      point.converged = ok;
      point.shape = classify_pearling(sol);
      last.emplace(c0, sol);
    }
    point.solution = std::move(sol);
    result.points.push_back(std::move(point));
  }
  return result;
}

std::vector<ZeroCrossing> detect_zero_crossings(std::span<const double> grid,
                                                std::span<const double> values,
                                                const std::vector<bool>& valid) {
  if (grid.size() != values.size() || (!valid.empty() && valid.size() != values.size())) {
    throw InvalidProblemError("grid, values and validity flags must have equal length");
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if ((valid.empty() || valid[i]) && std::isfinite(values[i])) idx.push_back(i);
  }
  if (idx.size() < 2) throw InsufficientDataError("zero-crossing detection needs two valid points");

  std::vector<ZeroCrossing> out;
  std::size_t p = 0;
  // Skip leading zeros: a curve starting on the axis has not crossed it.
  while (p < idx.size() && sign_of(values[idx[p]]) == 0) ++p;
  while (p < idx.size()) {
    const int s = sign_of(values[idx[p]]);
    std::size_t q = p + 1;
    while (q < idx.size() && sign_of(values[idx[q]]) == 0) ++q;
    if (q == idx.size()) break;
    if (sign_of(values[idx[q]]) != s) {
      if (q == p + 1) {
        out.push_back({grid[idx[p]], grid[idx[q]], false});
      } else {
        out.push_back({grid[idx[p + 1]], grid[idx[q - 1]], true});
      }
    }
    p = q;
  }
  return out;
}

ScaledSolution scaling_transform(const BvpProblem& problem, const CollocationSolution& solution,
                                 double eta) {
  if (!(eta > 0.0)) throw InvalidProblemError("scaling factor must be positive");
  const bool area = problem.formulation == FormulationKind::Area;
  const double stretch = area ? eta * eta : eta;  // u_new = u / stretch
  const std::array<double, kStateSize> factor{1.0 / eta, 1.0 / eta, 1.0, eta, eta, eta * eta};

  ScaledSolution out;
  out.problem = problem;
  out.problem.domain_start = problem.domain_start / stretch;
  out.problem.domain_end = problem.domain_end / stretch;
  const auto& prof = problem.profile;
  switch (prof.kind()) {
    case CurvatureKind::TypeI:
      out.problem.profile = CurvatureProfile::type_one(prof.c0(), stretch * prof.gamma(),
                                                       prof.u0() / stretch, eta * prof.r0());
      break;
    case CurvatureKind::TypeII:
      out.problem.profile = CurvatureProfile::type_two(prof.c0(), stretch * prof.gamma(),
                                                       prof.u0() / stretch, eta * prof.r0());
      break;
    case CurvatureKind::Constant:
      out.problem.profile = CurvatureProfile::constant(eta * prof.const_value());
      break;
  }
  std::vector<DirichletCondition> conditions = problem.bc.conditions();
  for (auto& c : conditions) c.value *= factor[c.component];
  out.problem.bc = BoundarySpec::custom(std::move(conditions));

  std::vector<double> nodes = solution.mesh().nodes();
  for (double& u : nodes) u /= stretch;
  Eigen::MatrixXd values = solution.values();
  Eigen::MatrixXd rates = solution.rates();
  for (int i = 0; i < kStateSize; ++i) {
    values.row(i) *= factor[i];
    rates.row(i) *= factor[i] * stretch;
  }
  out.solution = CollocationSolution(Mesh(std::move(nodes)), std::move(values), std::move(rates));
  out.solution.converged = solution.converged;
  out.solution.final_residual_norm = solution.final_residual_norm;
  out.solution.newton_iterations = solution.newton_iterations;
  return out;
}

double solution_defect(const BvpProblem& problem, const CollocationSolution& solution) {
  const auto defects = collocation_defects(membrane_system(problem), solution);
  double worst = 0.0;
  for (double d : defects) worst = std::isfinite(d) ? std::max(worst, d) : d;
  const StateVector b = boundary_residual(problem.bc, solution.state(solution.mesh().start()),
                                          solution.state(solution.mesh().end()));
  return std::max(worst, b.lpNorm<Eigen::Infinity>());
}

Kappa0Check kappa0_scaling_check(const BvpProblem& problem, const CollocationSolution& solution,
                                 double eta, const SolverSettings& settings) {
  if (!(eta > 0.0)) throw InvalidProblemError("scaling factor must be positive");
  BvpProblem scaled = problem;
  scaled.kappa_tilde = eta * problem.kappa_tilde;
  switch (problem.bc.kind()) {
    case BoundaryKind::TypeI:
      scaled.bc = BoundarySpec::type_one(eta * problem.bc.lambda_tilde_end(), problem.bc.epsilon());
      break;
    case BoundaryKind::TypeII:
      scaled.bc = BoundarySpec::type_two(problem.bc.theta(), eta * problem.bc.lambda_tilde_end());
      break;
    case BoundaryKind::Custom: {
      auto conditions = problem.bc.conditions();
      bool pins_lambda = false;
      for (auto& c : conditions) {
        if (c.component == 5) {
          c.value *= eta;
          pins_lambda = true;
        }
      }
      if (!pins_lambda) throw InvalidProblemError("boundary conditions do not pin lambda~");
      scaled.bc = BoundarySpec::custom(std::move(conditions));
      break;
    }
  }

  SolverSettings fixed = settings;
  fixed.refine = false;
  Kappa0Check out;
  out.rescaled = solve_bvp(scaled, InitialGuess::from_solution(solution), solution.mesh(), fixed);
  out.converged = out.rescaled.converged;
  if (!out.converged) {
    out.discrepancy = std::numeric_limits<double>::infinity();
    return out;
  }
  Eigen::MatrixXd expected = solution.values();
  expected.row(5) *= eta;
  out.discrepancy = (out.rescaled.values() - expected).lpNorm<Eigen::Infinity>();
  return out;
}

}  // namespace helfrich
