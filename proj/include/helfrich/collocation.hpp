#pragma once

// Piecewise-cubic collocation for first-order BVPs in implicit form
// F(x, xdot, u) = 0 with separated Dirichlet boundary conditions.
//
// Each subinterval carries a cubic Hermite interpolant of the nodal values and
// nodal rates. The equations are F at every node and at every subinterval
// midpoint (three-point Lobatto collocation), plus the boundary conditions,
// solved by damped Newton iteration on a sparse almost-block-diagonal system.

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "helfrich/model.hpp"

namespace helfrich {

class Mesh {
 public:
  /// Throws InvalidProblemError unless nodes are strictly increasing with at least two entries.
  explicit Mesh(std::vector<double> nodes);

  static Mesh uniform(double start, double end, int intervals);

  const std::vector<double>& nodes() const { return nodes_; }
  int intervals() const { return static_cast<int>(nodes_.size()) - 1; }
  double start() const { return nodes_.front(); }
  double end() const { return nodes_.back(); }
  /// Subinterval containing u (clamped to the last interval at the right end).
  int locate(double u) const;
  /// Split subinterval k into `pieces[k]` equal parts.
  Mesh subdivided(std::span<const int> pieces) const;

 private:
  std::vector<double> nodes_;
};

struct SolverSettings {
  double newton_tol = 1e-9;
  int max_newton_iters = 40;
  bool damping = true;
  int max_mesh_points = 20000;
  bool refine = false;
  /// Target for the per-interval error estimate h * |F(interpolant)| / (1 + |xdot|).
  double refine_tol = 1e-7;
  int max_refine_passes = 25;
};

/// Implicit first-order system of arbitrary dimension.
struct OdeSystem {
  int dimension = 0;
  std::function<void(double u, const Eigen::VectorXd& x, const Eigen::VectorXd& rate,
                     Eigen::VectorXd& f)>
      residual;
  std::function<void(double u, const Eigen::VectorXd& x, const Eigen::VectorXd& rate,
                     Eigen::MatrixXd& d_state, Eigen::MatrixXd& d_rate)>
      jacobian;
};

class CollocationSolution {
 public:
  CollocationSolution() = default;
  /// values and rates are dimension x node-count.
  CollocationSolution(Mesh mesh, Eigen::MatrixXd values, Eigen::MatrixXd rates);

  const Mesh& mesh() const { return mesh_; }
  const Eigen::MatrixXd& values() const { return values_; }
  const Eigen::MatrixXd& rates() const { return rates_; }
  int dimension() const { return static_cast<int>(values_.rows()); }

  /// Throws OutOfDomainError outside [mesh.start(), mesh.end()].
  Eigen::VectorXd evaluate(double u) const;
  Eigen::VectorXd evaluate_rate(double u) const;
  StateVector state(double u) const;
  StateVector state_rate(double u) const;

  /// Rows [first, first + count) as a standalone solution.
  CollocationSolution components(int first, int count) const;

  bool converged = false;
  double final_residual_norm = 0.0;
  int newton_iterations = 0;
  /// Euclidean defect norm of each accepted Newton iterate, starting with the guess.
  std::vector<double> residual_history;

 private:
  void check_domain(double u) const;

  Mesh mesh_{std::vector<double>{0.0, 1.0}};
  Eigen::MatrixXd values_;
  Eigen::MatrixXd rates_;
};

/// Initial guess: a value function plus an optional rate function. When the
/// rate is absent, nodal rates are taken from the ODE itself.
struct InitialGuess {
  std::function<Eigen::VectorXd(double)> value;
  std::function<Eigen::VectorXd(double)> rate;

  static InitialGuess from_solution(const CollocationSolution& solution);
};

/// Solve the generic system. Non-convergence is reported through
/// `converged`; a singular Newton matrix throws SingularSystemError.
CollocationSolution solve_collocation(const OdeSystem& system,
                                      std::span<const DirichletCondition> conditions,
                                      const InitialGuess& guess, const Mesh& mesh,
                                      const SolverSettings& settings);

/// Residual of the interpolant at every node and midpoint, as max-norm per subinterval.
std::vector<double> collocation_defects(const OdeSystem& system,
                                        const CollocationSolution& solution);

// --- membrane problems -----------------------------------------------------

OdeSystem membrane_system(const BvpProblem& problem);

/// Uniform mesh, 3x denser over [u0 - 6/gamma, u0 + 6/gamma] for sharp
/// profiles and geometrically graded near the start for the area
/// formulation with a near-zero x1(0+).
Mesh default_mesh(const BvpProblem& problem, int intervals = 200);

/// Smooth guess satisfying the B.C. I conditions exactly; a catenoid through
/// the prescribed start point for B.C. II.
InitialGuess default_initial_guess(const BvpProblem& problem);

CollocationSolution solve_bvp(const BvpProblem& problem, const InitialGuess& guess,
                              const Mesh& mesh, const SolverSettings& settings);

struct ContinuationStep {
  double c0;
  CollocationSolution solution;
};

struct ContinuationOptions {
  int steps = 10;
  /// Times a failed step may be halved before giving up.
  int max_halvings = 12;
};

/// Ramp C0 from the profile's start value (`c0_start`) to `c0_target`,
/// reusing each converged solution as the next guess. Stops at the first
/// step that cannot be completed; the last entry then has converged=false.
std::vector<ContinuationStep> continuation_in_c0(const BvpProblem& problem, double c0_start,
                                                 double c0_target, const InitialGuess& guess,
                                                 const Mesh& mesh, const SolverSettings& settings,
                                                 const ContinuationOptions& options = {});

/// Ramp C0 from 0 to problem.profile.c0() on default_mesh(problem, intervals)
/// from the default guess and return the last solution (converged=false if the
/// ramp broke down). Constant profiles are solved directly.
CollocationSolution solve_by_continuation(const BvpProblem& problem,
                                          const SolverSettings& settings,
                                          const ContinuationOptions& options = {},
                                          int intervals = 200);

}  // namespace helfrich
