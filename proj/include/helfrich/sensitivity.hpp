#pragma once

// Parametric sensitivities of the membrane BVP with respect to p = (C0, gamma, u0).
//
// Forward: append s_j = dx/dp_j and solve the 12-equation system
//   F(x, xdot, p) = 0,  sdot_j + D_xF s_j + dF/dp_j = 0,
// with s_j pinned to zero wherever x is pinned.
//
// Adjoint: solve vdot = (D_xF)^T v - (D_xw)^T along the base solution, with v
// vanishing on the components left free at each end, then
//   dW/dp_j = integral of (dw/dp_j - v^T dF/dp_j).

#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "helfrich/collocation.hpp"
#include "helfrich/model.hpp"

namespace helfrich {

enum class SensitivityMethod { Forward, Adjoint };

struct SensitivityResult {
  Parameter parameter = Parameter::C0;
  SensitivityMethod method = SensitivityMethod::Forward;
  /// s_j1..s_j6 on the base mesh (forward only).
  CollocationSolution sensitivity;
  /// The state block of the appended solve.
  CollocationSolution state;
  double energy_sensitivity = 0.0;
  bool converged = false;
};

struct AdjointSolution {
  CollocationSolution adjoint;
  bool converged = false;
};

struct AdjointOptions {
  /// Use the complement-of-pinned rule for boundary kinds other than B.C. I.
  bool allow_experimental_bc = false;
};

/// Bending energy W: integral of (x4 - c)^2 x1 (arc length) or (x4 - c)^2 (area),
/// by composite Simpson over nodes and midpoints.
double energy(const BvpProblem& problem, const CollocationSolution& solution);

/// Integrand pieces: D_x w and dw/dp at one point.
StateVector energy_state_gradient(const BvpProblem& problem, const StateVector& state, double u);
Eigen::Vector3d energy_param_gradient(const BvpProblem& problem, const StateVector& state,
                                      double u);

/// Throws UnsupportedProfileError for a Constant profile. The appended system is
/// solved on the base mesh without refinement.
SensitivityResult forward_sensitivity(const BvpProblem& problem, const CollocationSolution& base,
                                      Parameter j, const SolverSettings& settings = {});

/// Integral of dw/dp_j + D_x w s_j.
double energy_sensitivity_forward(const BvpProblem& problem, const CollocationSolution& base,
                                  const CollocationSolution& s_j, Parameter j);

/// Throws InvalidProblemError for boundary kinds other than B.C. I unless the
/// experimental flag is set; SingularSystemError if the linear BVP is singular.
AdjointSolution adjoint_solve(const BvpProblem& problem, const CollocationSolution& base,
                              const AdjointOptions& options = {});

double energy_sensitivity_adjoint(const BvpProblem& problem, const CollocationSolution& base,
                                  const AdjointSolution& adjoint, Parameter j);

/// Components of v that must vanish at `side` (those x leaves free there).
std::vector<int> adjoint_vanishing_components(const BoundarySpec& spec, Endpoint side);

/// Convert a dimensionless sensitivity to its dimensional counterpart.
/// Selectors: h_wrt_C0, h_wrt_gamma, h_wrt_u0. Throws UnknownSelectorError otherwise.
double rescale_sensitivity(double value, std::string_view which, double r0,
                           FormulationKind formulation = FormulationKind::ArcLength);
Eigen::VectorXd rescale_sensitivity(const Eigen::VectorXd& values, std::string_view which,
                                    double r0,
                                    FormulationKind formulation = FormulationKind::ArcLength);

}  // namespace helfrich
