#pragma once

// Shape diagnostics, C0 sweeps of the energy sensitivities and the scaling
// symmetries of the dimensionless equations.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "helfrich/collocation.hpp"
#include "helfrich/model.hpp"
#include "helfrich/sensitivity.hpp"

namespace helfrich {

/// K = h^2 - (h - sin(psi)/x1)^2. Throws SingularStateError when x1 <= 0.
double gaussian_curvature(const StateVector& state);
double gaussian_curvature(const CollocationSolution& solution, double u);

/// Interior points where cos(psi) changes sign, located by bisection to 1e-8.
std::vector<double> detect_turning_points(const CollocationSolution& solution);

struct ShapeDiagnostics {
  std::vector<double> turning_points;
  /// Interior local minima of x1.
  int neck_count = 0;
  /// Whether the sampled generating curve (x1, x2) crosses itself.
  bool self_intersects = false;
  /// At least three turning points and at least two necks.
  bool pearled = false;
};

ShapeDiagnostics classify_pearling(const CollocationSolution& solution);

struct SweepPoint {
  double c0 = 0.0;
  bool converged = false;
  double energy = 0.0;
  /// dW/dC0, dW/dgamma, dW/du0 (NaN when not converged).
  std::array<double, 3> energy_sensitivity{};
  ShapeDiagnostics shape;
  CollocationSolution solution;
};

struct SweepResult {
  std::vector<SweepPoint> points;

  std::vector<double> grid() const;
  /// Column j of the energy sensitivities.
  std::vector<double> sensitivity(Parameter j) const;
  std::vector<bool> converged() const;
};

enum class EnergyGradientMethod { Auto, Forward, Adjoint };

struct SweepOptions {
  SolverSettings settings;
  /// Halvings allowed between neighbouring grid points.
  int max_halvings = 12;
  /// Steps of the ramp from C0 = 0 to the first grid point.
  int seed_steps = 10;
  /// Base size of the default mesh for that ramp.
  int mesh_intervals = 200;
  /// Auto: adjoint for B.C. I, forward otherwise.
  EnergyGradientMethod method = EnergyGradientMethod::Auto;
  /// Converged solution at grid.front(); replaces the initial ramp.
  std::optional<CollocationSolution> seed;
};

/// Continuation along a strictly increasing C0 grid, recording W, the three
/// energy sensitivities and the shape diagnostics at every point. A point that
/// fails is recorded with converged = false and the next one restarts from the
/// last converged solution. Throws InvalidProblemError for an empty or
/// non-increasing grid and UnsupportedProfileError for a Constant profile.
SweepResult sweep_energy_sensitivity(const BvpProblem& problem, std::span<const double> grid,
                                     const SweepOptions& options = {});

struct ZeroCrossing {
  /// Grid values bracketing the sign change; equal when a grid value is zero.
  double lower;
  double upper;
  bool exact;
};

/// Sign changes of `values` over `grid`, skipping entries with valid[i] == false
/// (an empty `valid` marks everything valid). Values within 1e-12 of zero count
/// as zero; a run of zeros between opposite signs is one exact crossing, and a
/// zero at either end of the curve is not a crossing. Throws
/// InsufficientDataError with fewer than two valid points.
std::vector<ZeroCrossing> detect_zero_crossings(std::span<const double> grid,
                                                std::span<const double> values,
                                                const std::vector<bool>& valid = {});

struct ScaledSolution {
  BvpProblem problem;
  CollocationSolution solution;
};

/// Rescale lengths by 1/eta: components (x1, x2, x3, x4, x5, x6) map to
/// (x1/eta, x2/eta, x3, eta x4, eta x5, eta^2 x6) on the domain divided by eta
/// (arc length) or eta^2 (area), with R0 -> eta R0, gamma -> eta gamma (eta^2
/// gamma) and u0 -> u0/eta (u0/eta^2). Boundary values are carried over as a
/// custom boundary specification. Throws InvalidProblemError for eta <= 0.
ScaledSolution scaling_transform(const BvpProblem& problem, const CollocationSolution& solution,
                                 double eta);

/// Largest collocation or boundary defect of `solution` as a solution of `problem`.
double solution_defect(const BvpProblem& problem, const CollocationSolution& solution);

struct Kappa0Check {
  double discrepancy = 0.0;
  bool converged = false;
  CollocationSolution rescaled;
};

/// Re-solve with kappa~ and the boundary value of lambda~ both multiplied by
/// eta, starting from `solution` on its mesh, and compare: sup-norm over the
/// nodes of the change in (x1, .., x5) and of lambda~_new - eta lambda~_old.
/// Throws InvalidProblemError for eta <= 0 or a boundary kind that does not
/// pin lambda~.
Kappa0Check kappa0_scaling_check(const BvpProblem& problem, const CollocationSolution& solution,
                                 double eta, const SolverSettings& settings = {});

}  // namespace helfrich
