#pragma once

// Axisymmetric Helfrich shape equations in dimensionless form.
//
// Unknowns are x = (x1, x2, x3, x4, x5, x6) = (x, y, psi, h, l, lambda~),
// written as an implicit first-order system F(x, xdot, u) = 0 over either
// the arc-length coordinate t or the area coordinate alpha.

#include <array>
#include <vector>

#include <Eigen/Dense>

namespace helfrich {

using StateVector = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Matrix63 = Eigen::Matrix<double, 6, 3>;

inline constexpr int kStateSize = 6;
inline constexpr int kParameterCount = 3;

enum class FormulationKind { ArcLength, Area };

enum class CurvatureKind { TypeI, TypeII, Constant };

/// Index of the sensitivity parameters p = (C0, gamma, u0).
enum class Parameter { C0 = 0, Gamma = 1, U0 = 2 };

/// Spontaneous curvature family c(u).
///
/// TypeI:    c(u) = 0.5 R0 C0 [1 - tanh(gamma (u - u0))]
/// TypeII:   c(u) = -0.5 R0 C0 (u - u0)/u0 [1 - tanh(gamma (u - u0))]
/// Constant: c(u) = const_value
class CurvatureProfile {
 public:
  static CurvatureProfile type_one(double c0, double gamma, double u0, double r0);
  /// Throws InvalidProfileError when u0 <= 0.
  static CurvatureProfile type_two(double c0, double gamma, double u0, double r0);
  static CurvatureProfile constant(double value);

  CurvatureKind kind() const { return kind_; }
  double c0() const { return c0_; }
  double gamma() const { return gamma_; }
  double u0() const { return u0_; }
  double r0() const { return r0_; }
  double const_value() const { return const_value_; }
  bool parametrised() const { return kind_ != CurvatureKind::Constant; }

  /// Copy with one of (C0, gamma, u0) replaced.
  CurvatureProfile with_parameter(Parameter p, double value) const;
  CurvatureProfile with_c0(double c0) const { return with_parameter(Parameter::C0, c0); }
  CurvatureProfile with_r0(double r0) const;
  double parameter(Parameter p) const;

 private:
  CurvatureProfile(CurvatureKind kind, double c0, double gamma, double u0, double r0, double value);

  CurvatureKind kind_;
  double c0_;
  double gamma_;
  double u0_;
  double r0_;
  double const_value_;
};

struct CurvaturePartials {
  std::array<double, 3> value;  // dc/dp_j
  std::array<double, 3> rate;   // d(cdot)/dp_j
};

enum class Endpoint { Start, End };

struct DirichletCondition {
  Endpoint side;
  int component;  // 0-based state index
  double value;
};

enum class BoundaryKind { TypeI, TypeII, Custom };

/// Boundary condition families.
///
/// TypeI pins {x1 = eps, x3 = 0, x5 = 0} at the start and
/// {x2 = 0, x3 = 0, x6 = lambda0} at the end. TypeII pins
/// {x1 = sin(theta), x3 = theta} at the start and
/// {x2 = 0, x3 = 0, x5 = 0, x6 = lambda0} at the end.
class BoundarySpec {
 public:
  static constexpr double kDefaultEpsilon = 1e-4;

  static BoundarySpec type_one(double lambda_tilde_end, double epsilon = kDefaultEpsilon);
  static BoundarySpec type_two(double theta, double lambda_tilde_end);
  /// Throws InvalidProblemError unless exactly six distinct conditions are given.
  static BoundarySpec custom(std::vector<DirichletCondition> conditions);

  BoundaryKind kind() const { return kind_; }
  double theta() const { return theta_; }
  double lambda_tilde_end() const { return lambda_tilde_end_; }
  double epsilon() const { return epsilon_; }

  /// All six pinned conditions, start side first.
  const std::vector<DirichletCondition>& conditions() const { return conditions_; }
  /// Component indices pinned at `side`, ascending.
  std::vector<int> pinned(Endpoint side) const;
  /// Value of the condition on `component` at `side`, if pinned.
  bool pinned_value(Endpoint side, int component, double& value) const;

 private:
  BoundarySpec(BoundaryKind kind, double theta, double lambda_end, double epsilon,
               std::vector<DirichletCondition> conditions);

  BoundaryKind kind_;
  double theta_;
  double lambda_tilde_end_;
  double epsilon_;
  std::vector<DirichletCondition> conditions_;
};

struct BvpProblem {
  FormulationKind formulation = FormulationKind::ArcLength;
  CurvatureProfile profile = CurvatureProfile::constant(0.0);
  BoundarySpec bc = BoundarySpec::type_one(0.0);
  double domain_end = 1.0;
  double kappa_tilde = 1.0;
  double domain_start = 0.0;

  /// Throws InvalidProblemError on domain_end <= domain_start or kappa_tilde <= 0.
  void validate() const;
};

double curvature_value(const CurvatureProfile& profile, double u);
double curvature_rate(const CurvatureProfile& profile, double u);
/// Throws UnsupportedProfileError for the Constant kind.
CurvaturePartials curvature_param_partials(const CurvatureProfile& profile, double u);

/// F(x, xdot, u). Throws SingularStateError when x1 <= 0.
StateVector residual(const BvpProblem& problem, const StateVector& state, const StateVector& rate,
                     double u);
/// D_x F. Throws SingularStateError when x1 <= 0.
Matrix6 jacobian_state(const BvpProblem& problem, const StateVector& state,
                       const StateVector& rate, double u);
/// D_xdot F, the identity for both formulations.
Matrix6 jacobian_rate(const BvpProblem& problem, const StateVector& state,
                      const StateVector& rate, double u);
/// Columns dF/dp_j for p = (C0, gamma, u0).
Matrix63 jacobian_params(const BvpProblem& problem, const StateVector& state,
                         const StateVector& rate, double u);

/// Six boundary defects, ordered as BoundarySpec::conditions().
StateVector boundary_residual(const BoundarySpec& spec, const StateVector& state_start,
                              const StateVector& state_end);

/// gamma * u0 < 3. Throws UnsupportedProfileError for the Constant kind.
bool is_mollifying(const CurvatureProfile& profile);

}  // namespace helfrich
