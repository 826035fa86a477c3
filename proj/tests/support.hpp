#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "helfrich/collocation.hpp"
#include "helfrich/model.hpp"

namespace helfrich::testing {

inline BvpProblem table1_problem(double c0 = 0.02, double gamma = 20.0) {
  BvpProblem p;
  p.formulation = FormulationKind::ArcLength;
  p.profile = CurvatureProfile::type_one(c0, gamma, 1.0, 80.0);
  p.bc = BoundarySpec::type_one(12.8);
  p.domain_end = 5.0;
  return p;
}

inline BvpProblem table2_problem(double c0 = 0.02) {
  BvpProblem p;
  p.formulation = FormulationKind::Area;
  p.profile = CurvatureProfile::type_one(c0, 40.0, 1.0, 400.0 / std::sqrt(50.0));
  p.bc = BoundarySpec::type_one(6.4);
  p.domain_end = 15.0;
  return p;
}

inline BvpProblem table3_problem(double c0 = 0.0044, double gamma = 30.0) {
  BvpProblem p;
  p.formulation = FormulationKind::ArcLength;
  p.profile = CurvatureProfile::type_two(c0, gamma, 30.0, 200.0);
  p.bc = BoundarySpec::type_two(0.9 * M_PI, 0.0);
  p.domain_end = 100.0;
  return p;
}

inline BvpProblem table4_problem(double c0 = 0.004) {
  BvpProblem p;
  p.formulation = FormulationKind::Area;
  p.profile = CurvatureProfile::type_two(c0, 30.0, 30.0, 200.0);
  p.bc = BoundarySpec::type_two(0.3 * M_PI, 0.0);
  p.domain_end = 200.0;
  return p;
}

/// Max over columns of |a - b|_inf / max(|b|_inf, floor).
inline double column_relative_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                    double floor = 1e-8) {
  double worst = 0.0;
  for (int j = 0; j < a.cols(); ++j) {
    const double scale = std::max(b.col(j).lpNorm<Eigen::Infinity>(), floor);
    worst = std::max(worst, (a.col(j) - b.col(j)).lpNorm<Eigen::Infinity>() / scale);
  }
  return worst;
}

/// Central-difference D_x F.
inline Matrix6 fd_jacobian_state(const BvpProblem& p, const StateVector& x, const StateVector& r,
                                 double u) {
  Matrix6 j;
  for (int i = 0; i < kStateSize; ++i) {
    const double step = 1e-7 * (1.0 + std::abs(x(i)));
    StateVector xp = x, xm = x;
    xp(i) += step;
    xm(i) -= step;
    j.col(i) = (residual(p, xp, r, u) - residual(p, xm, r, u)) / (2.0 * step);
  }
  return j;
}

/// Step for differencing over parameter k at u, scaled to the tanh transition width.
inline double parameter_step(const CurvatureProfile& prof, int k, double u, double rel) {
  const double g = prof.gamma();
  const double d = std::abs(u - prof.u0());
  switch (k) {
    case 0:
      return rel * std::max(std::abs(prof.c0()), 1e-3);
    case 1:
      return rel * g / (1.0 + g * d);
    default:
      return rel / g;
  }
}

/// Fourth-order central difference of a vector-valued function of one scalar.
template <class F>
auto central5(F&& f, double h) {
  return ((8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)).eval();
}

/// Central-difference dF/dp (five-point stencil).
inline Matrix63 fd_jacobian_params(const BvpProblem& p, const StateVector& x, const StateVector& r,
                                   double u) {
  Matrix63 j;
  for (int k = 0; k < kParameterCount; ++k) {
    const auto param = static_cast<Parameter>(k);
    const double v = p.profile.parameter(param);
    j.col(k) = central5(
        [&](double d) {
          BvpProblem q = p;
          q.profile = p.profile.with_parameter(param, v + d);
          return residual(q, x, r, u);
        },
        parameter_step(p.profile, k, u, 1e-2));
  }
  return j;
}

/// Random state with x1 in [0.2, 3] and moderate other entries.
inline StateVector random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0.2, 3.0);
  std::uniform_real_distribution<double> any(-2.0, 2.0);
  StateVector x;
  x << pos(rng), any(rng), any(rng), any(rng), any(rng), any(rng);
  return x;
}

/// Adaptive refinement, for comparisons that need mesh-converged solutions.
inline SolverSettings refined_settings(double tol = 1e-7) {
  SolverSettings s;
  s.refine = true;
  s.refine_tol = tol;
  return s;
}

/// Central-difference solution sensitivity dx/dp_j at the base mesh nodes, from two
/// warm-started solves with p_j shifted by +-delta (delta = rel * |p_j|, or rel if p_j = 0).
inline Eigen::MatrixXd fd_solution_sensitivity(const BvpProblem& p, const CollocationSolution& base,
                                               Parameter j, double rel = 1e-5,
                                               bool* converged = nullptr) {
  const double v = p.profile.parameter(j);
  const double delta = v != 0.0 ? rel * std::abs(v) : rel;
  SolverSettings fixed;
  BvpProblem plus = p, minus = p;
  plus.profile = p.profile.with_parameter(j, v + delta);
  minus.profile = p.profile.with_parameter(j, v - delta);
  const auto sp = solve_bvp(plus, InitialGuess::from_solution(base), base.mesh(), fixed);
  const auto sm = solve_bvp(minus, InitialGuess::from_solution(base), base.mesh(), fixed);
  if (converged) *converged = sp.converged && sm.converged;
  return (sp.values() - sm.values()) / (2.0 * delta);
}

/// Worst per-component relative sup-norm error, skipping components whose
/// magnitude is below mask * max|s| over all components.
inline double masked_relative_error(const Eigen::MatrixXd& s, const Eigen::MatrixXd& reference,
                                    double mask = 1e-6) {
  const double global = s.cwiseAbs().maxCoeff();
  double worst = 0.0;
  for (int i = 0; i < s.rows(); ++i) {
    const double size = s.row(i).cwiseAbs().maxCoeff();
    if (size <= mask * global) continue;
    worst = std::max(worst, (s.row(i) - reference.row(i)).cwiseAbs().maxCoeff() / size);
  }
  return worst;
}

}  // namespace helfrich::testing
