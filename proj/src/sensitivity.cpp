#include "helfrich/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "helfrich/errors.hpp"

namespace helfrich {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Composite Simpson over every subinterval, using the interpolant at the midpoint.
template <class F>
double simpson(const Mesh& mesh, F&& integrand) {
  const auto& u = mesh.nodes();
  double total = 0.0;
  double left = integrand(u[0]);
  for (int k = 0; k < mesh.intervals(); ++k) {
    const double h = u[k + 1] - u[k];
    const double mid = integrand(0.5 * (u[k] + u[k + 1]));
    const double right = integrand(u[k + 1]);
    total += h / 6.0 * (left + 4.0 * mid + right);
    left = right;
  }
  return total;
}

void require_parametrised(const BvpProblem& problem) {
  if (!problem.profile.parametrised()) {
    throw UnsupportedProfileError("sensitivities need a TypeI or TypeII curvature profile");
  }
}

void require_converged(const CollocationSolution& base) {
  if (!base.converged) throw InvalidProblemError("base solution has not converged");
}

bool is_arc_length(const BvpProblem& problem) {
  return problem.formulation == FormulationKind::ArcLength;
}

}  // namespace

StateVector energy_state_gradient(const BvpProblem& problem, const StateVector& x, double u) {
  const double hc = x(3) - curvature_value(problem.profile, u);
  StateVector g = StateVector::Zero();
  if (is_arc_length(problem)) {
    g(0) = hc * hc;
    g(3) = 2.0 * hc * x(0);
  } else {
    g(3) = 2.0 * hc;
  }
  return g;
}

Eigen::Vector3d energy_param_gradient(const BvpProblem& problem, const StateVector& x, double u) {
  const auto partials = curvature_param_partials(problem.profile, u);
  const double hc = x(3) - curvature_value(problem.profile, u);
  const double weight = is_arc_length(problem) ? x(0) : 1.0;
  Eigen::Vector3d g;
  for (int j = 0; j < kParameterCount; ++j) g(j) = -2.0 * hc * weight * partials.value[j];
  return g;
}

double energy(const BvpProblem& problem, const CollocationSolution& solution) {
  const bool arc = is_arc_length(problem);
  return simpson(solution.mesh(), [&](double u) {
    const StateVector x = solution.state(u);
    const double hc = x(3) - curvature_value(problem.profile, u);
    return arc ? hc * hc * x(0) : hc * hc;
  });
}

double energy_sensitivity_forward(const BvpProblem& problem, const CollocationSolution& base,
                                  const CollocationSolution& s_j, Parameter j) {
  require_parametrised(problem);
  const int jj = static_cast<int>(j);
  return simpson(base.mesh(), [&](double u) {
    const StateVector x = base.state(u);
    const StateVector s = s_j.state(u);
    return energy_param_gradient(problem, x, u)(jj) + energy_state_gradient(problem, x, u).dot(s);
  });
}

SensitivityResult forward_sensitivity(const BvpProblem& problem, const CollocationSolution& base,
                                      Parameter j, const SolverSettings& settings) {
  require_parametrised(problem);
  require_converged(base);
  problem.validate();
  const int jj = static_cast<int>(j);

  // The s-block is solved for sigma = s / scale so that the Newton tolerance is
  // relative to the size of the sensitivity.
  auto solve_scaled = [&](double scale, const InitialGuess& guess) {
    auto forcing = [&problem, jj, scale](double u, const StateVector& x, const StateVector& rate,
                                         const StateVector& sigma) -> StateVector {
      return jacobian_state(problem, x, rate, u) * sigma +
             jacobian_params(problem, x, rate, u).col(jj) / scale;
    };

    OdeSystem sys;
    sys.dimension = 2 * kStateSize;
    sys.residual = [&problem, forcing](double u, const Eigen::VectorXd& z,
                                       const Eigen::VectorXd& zd, Eigen::VectorXd& f) {
      f.resize(2 * kStateSize);
      const StateVector x = z.head<kStateSize>();
      if (!(x(0) > 0.0)) {
        f.setConstant(kNaN);
        return;
      }
      const StateVector xd = zd.head<kStateSize>();
      f.head<kStateSize>() = residual(problem, x, xd, u);
      f.tail<kStateSize>() = zd.tail<kStateSize>() + forcing(u, x, xd, z.tail<kStateSize>());
    };
    sys.jacobian = [&problem, forcing](double u, const Eigen::VectorXd& z,
                                       const Eigen::VectorXd& zd, Eigen::MatrixXd& d_state,
                                       Eigen::MatrixXd& d_rate) {
      constexpr int n = kStateSize;
      d_rate = Eigen::MatrixXd::Identity(2 * n, 2 * n);
      const StateVector x = z.head<n>();
      if (!(x(0) > 0.0)) {
        d_state = Eigen::MatrixXd::Constant(2 * n, 2 * n, kNaN);
        return;
      }
      const StateVector xd = zd.head<n>();
      const StateVector sigma = z.tail<n>();
      const Matrix6 a = jacobian_state(problem, x, xd, u);
      d_state = Eigen::MatrixXd::Zero(2 * n, 2 * n);
      d_state.topLeftCorner(n, n) = a;
      d_state.bottomRightCorner(n, n) = a;
      // Second derivatives of F by differencing the analytic Jacobians.
      for (int i = 0; i < n; ++i) {
        const double step = 1e-7 * (1.0 + std::abs(x(i)));
        StateVector xp = x, xm = x;
        xp(i) += step;
        xm(i) -= step;
        double width = 2.0 * step;
        if (!(xm(0) > 0.0)) {
          xm = x;
          width = step;
        }
        d_state.block(n, i, n, 1) = (forcing(u, xp, xd, sigma) - forcing(u, xm, xd, sigma)) / width;
      }
    };

    std::vector<DirichletCondition> conditions = problem.bc.conditions();
    for (const auto& c : problem.bc.conditions()) {
      conditions.push_back({c.side, c.component + kStateSize, 0.0});
    }
    SolverSettings fixed_mesh = settings;
    fixed_mesh.refine = false;
    CollocationSolution joint = solve_collocation(sys, conditions, guess, base.mesh(), fixed_mesh);
    Eigen::MatrixXd values = joint.values();
    Eigen::MatrixXd rates = joint.rates();
    values.bottomRows(kStateSize) *= scale;
    rates.bottomRows(kStateSize) *= scale;
    CollocationSolution unscaled(joint.mesh(), std::move(values), std::move(rates));
    unscaled.converged = joint.converged;
    unscaled.final_residual_norm = joint.final_residual_norm;
    unscaled.newton_iterations = joint.newton_iterations;
    unscaled.residual_history = joint.residual_history;
    return unscaled;
  };

  InitialGuess warm{[&base](double u) {
                      Eigen::VectorXd z = Eigen::VectorXd::Zero(2 * kStateSize);
                      z.head<kStateSize>() = base.state(u);
                      return z;
                    },
                    [&base](double u) {
                      Eigen::VectorXd z = Eigen::VectorXd::Zero(2 * kStateSize);
                      z.head<kStateSize>() = base.state_rate(u);
                      return z;
                    }};
  CollocationSolution joint = solve_scaled(1.0, warm);
  const double magnitude = joint.values().bottomRows(kStateSize).lpNorm<Eigen::Infinity>();
  if (!joint.converged && std::isfinite(magnitude) && magnitude > 1.0) {
    const CollocationSolution first = joint;
    const InitialGuess rescaled{[&first, magnitude](double u) {
                                  Eigen::VectorXd z = first.evaluate(u);
                                  z.tail<kStateSize>() /= magnitude;
                                  return z;
                                },
                                [&first, magnitude](double u) {
                                  Eigen::VectorXd z = first.evaluate_rate(u);
                                  z.tail<kStateSize>() /= magnitude;
                                  return z;
                                }};
    joint = solve_scaled(magnitude, rescaled);
  }

  SensitivityResult out;
  out.parameter = j;
  out.method = SensitivityMethod::Forward;
  out.state = joint.components(0, kStateSize);
  out.sensitivity = joint.components(kStateSize, kStateSize);
  out.converged = joint.converged;
  out.energy_sensitivity = energy_sensitivity_forward(problem, base, out.sensitivity, j);
  return out;
}

std::vector<int> adjoint_vanishing_components(const BoundarySpec& spec, Endpoint side) {
  const auto pinned = spec.pinned(side);
  std::vector<int> out;
  for (int i = 0; i < kStateSize; ++i) {
    if (std::find(pinned.begin(), pinned.end(), i) == pinned.end()) out.push_back(i);
  }
  return out;
}

AdjointSolution adjoint_solve(const BvpProblem& problem, const CollocationSolution& base,
                              const AdjointOptions& options) {
  require_converged(base);
  problem.validate();
  if (problem.bc.kind() != BoundaryKind::TypeI && !options.allow_experimental_bc) {
    throw InvalidProblemError(
        "adjoint boundary conditions are established for B.C. I only; "
        "set the experimental flag to use them for other boundary kinds");
  }

  OdeSystem sys;
  sys.dimension = kStateSize;
  sys.residual = [&problem, &base](double u, const Eigen::VectorXd& v, const Eigen::VectorXd& vd,
                                   Eigen::VectorXd& f) {
    const StateVector x = base.state(u);
    const Matrix6 a = jacobian_state(problem, x, base.state_rate(u), u);
    f = vd - a.transpose() * v + energy_state_gradient(problem, x, u);
  };
  sys.jacobian = [&problem, &base](double u, const Eigen::VectorXd&, const Eigen::VectorXd&,
                                   Eigen::MatrixXd& d_state, Eigen::MatrixXd& d_rate) {
    const StateVector x = base.state(u);
    d_state = -jacobian_state(problem, x, base.state_rate(u), u).transpose();
    d_rate = Eigen::MatrixXd::Identity(kStateSize, kStateSize);
  };

  std::vector<DirichletCondition> conditions;
  for (Endpoint side : {Endpoint::Start, Endpoint::End}) {
    for (int i : adjoint_vanishing_components(problem.bc, side)) {
      conditions.push_back({side, i, 0.0});
    }
  }
  const InitialGuess zero{[](double) { return Eigen::VectorXd::Zero(kStateSize).eval(); },
                          [](double) { return Eigen::VectorXd::Zero(kStateSize).eval(); }};
  SolverSettings settings;
  settings.refine = false;
  AdjointSolution out;
  out.adjoint = solve_collocation(sys, conditions, zero, base.mesh(), settings);
  out.converged = out.adjoint.converged;
  return out;
}

double energy_sensitivity_adjoint(const BvpProblem& problem, const CollocationSolution& base,
                                  const AdjointSolution& adjoint, Parameter j) {
  require_parametrised(problem);
  const int jj = static_cast<int>(j);
  return simpson(base.mesh(), [&](double u) {
    const StateVector x = base.state(u);
    const StateVector xd = base.state_rate(u);
    const StateVector v = adjoint.adjoint.state(u);
    return energy_param_gradient(problem, x, u)(jj) -
           v.dot(jacobian_params(problem, x, xd, u).col(jj));
  });
}

double rescale_sensitivity(double value, std::string_view which, double r0,
                           FormulationKind formulation) {
  const bool arc = formulation == FormulationKind::ArcLength;
  const double two_pi = 2.0 * M_PI;
  if (which == "h_wrt_C0") return value / r0;
  if (which == "h_wrt_gamma") return arc ? value : value * two_pi * r0;
  if (which == "h_wrt_u0") return arc ? value / (r0 * r0) : value / (two_pi * r0 * r0 * r0);
  throw UnknownSelectorError("unknown sensitivity selector '" + std::string(which) +
                             "' (expected h_wrt_C0, h_wrt_gamma or h_wrt_u0)");
}

Eigen::VectorXd rescale_sensitivity(const Eigen::VectorXd& values, std::string_view which,
                                    double r0, FormulationKind formulation) {
  const double factor = rescale_sensitivity(1.0, which, r0, formulation);
  return values * factor;
}

}  // namespace helfrich
