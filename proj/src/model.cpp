#include "helfrich/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <utility>

#include "helfrich/errors.hpp"

namespace helfrich {

namespace {

// 1 - tanh(z) and sech^2(z), evaluated without cancellation for large |z|.
struct TanhTerms {
  double one_minus_tanh;
  double tanh;
  double sech2;
};

TanhTerms tanh_terms(double z) {
  const double e = std::exp(-2.0 * std::abs(z));
  const double denom = 1.0 + e;
  TanhTerms t{};
  t.sech2 = 4.0 * e / (denom * denom);
  if (z >= 0.0) {
    t.one_minus_tanh = 2.0 * e / denom;
    t.tanh = (1.0 - e) / denom;
  } else {
    t.tanh = -(1.0 - e) / denom;
    t.one_minus_tanh = 1.0 + (1.0 - e) / denom;
  }
  return t;
}

void require_positive_x1(const StateVector& state) {
  if (!(state(0) > 0.0)) {
    throw SingularStateError("x1 must be positive, got " + std::to_string(state(0)));
  }
}

}  // namespace

CurvatureProfile::CurvatureProfile(CurvatureKind kind, double c0, double gamma, double u0,
                                   double r0, double value)
    : kind_(kind), c0_(c0), gamma_(gamma), u0_(u0), r0_(r0), const_value_(value) {}

CurvatureProfile CurvatureProfile::type_one(double c0, double gamma, double u0, double r0) {
  return CurvatureProfile(CurvatureKind::TypeI, c0, gamma, u0, r0, 0.0);
}

CurvatureProfile CurvatureProfile::type_two(double c0, double gamma, double u0, double r0) {
  if (!(u0 > 0.0)) {
    throw InvalidProfileError("TypeII curvature requires u0 > 0, got " + std::to_string(u0));
  }
  return CurvatureProfile(CurvatureKind::TypeII, c0, gamma, u0, r0, 0.0);
}

CurvatureProfile CurvatureProfile::constant(double value) {
  return CurvatureProfile(CurvatureKind::Constant, 0.0, 0.0, 0.0, 1.0, value);
}

double CurvatureProfile::parameter(Parameter p) const {
  switch (p) {
    case Parameter::C0:
      return c0_;
    case Parameter::Gamma:
      return gamma_;
    case Parameter::U0:
      return u0_;
  }
  return 0.0;
}

CurvatureProfile CurvatureProfile::with_parameter(Parameter p, double value) const {
  if (!parametrised()) {
    throw UnsupportedProfileError("constant curvature has no (C0, gamma, u0) parameters");
  }
  double c0 = c0_, gamma = gamma_, u0 = u0_;
  switch (p) {
    case Parameter::C0:
      c0 = value;
      break;
    case Parameter::Gamma:
      gamma = value;
      break;
    case Parameter::U0:
      u0 = value;
      break;
  }
  return kind_ == CurvatureKind::TypeI ? type_one(c0, gamma, u0, r0_)
                                       : type_two(c0, gamma, u0, r0_);
}

CurvatureProfile CurvatureProfile::with_r0(double r0) const {
  CurvatureProfile copy = *this;
  copy.r0_ = r0;
  return copy;
}

BoundarySpec::BoundarySpec(BoundaryKind kind, double theta, double lambda_end, double epsilon,
                           std::vector<DirichletCondition> conditions)
    : kind_(kind),
      theta_(theta),
      lambda_tilde_end_(lambda_end),
      epsilon_(epsilon),
      conditions_(std::move(conditions)) {}

BoundarySpec BoundarySpec::type_one(double lambda_tilde_end, double epsilon) {
  if (!(epsilon > 0.0)) {
    throw InvalidProblemError("x1(0+) regularisation epsilon must be positive");
  }
  std::vector<DirichletCondition> c = {
      {Endpoint::Start, 0, epsilon}, {Endpoint::Start, 2, 0.0}, {Endpoint::Start, 4, 0.0},
      {Endpoint::End, 1, 0.0},       {Endpoint::End, 2, 0.0},   {Endpoint::End, 5, lambda_tilde_end},
  };
  return BoundarySpec(BoundaryKind::TypeI, 0.0, lambda_tilde_end, epsilon, std::move(c));
}

BoundarySpec BoundarySpec::type_two(double theta, double lambda_tilde_end) {
  std::vector<DirichletCondition> c = {
      {Endpoint::Start, 0, std::sin(theta)}, {Endpoint::Start, 2, theta},
      {Endpoint::End, 1, 0.0},               {Endpoint::End, 2, 0.0},
      {Endpoint::End, 4, 0.0},               {Endpoint::End, 5, lambda_tilde_end},
  };
  return BoundarySpec(BoundaryKind::TypeII, theta, lambda_tilde_end, 0.0, std::move(c));
}

BoundarySpec BoundarySpec::custom(std::vector<DirichletCondition> conditions) {
  if (conditions.size() != kStateSize) {
    throw InvalidProblemError("custom boundary spec needs exactly 6 conditions, got " +
                              std::to_string(conditions.size()));
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& c : conditions) {
    if (c.component < 0 || c.component >= kStateSize) {
      throw InvalidProblemError("boundary component out of range: " + std::to_string(c.component));
    }
    if (!seen.emplace(static_cast<int>(c.side), c.component).second) {
      throw InvalidProblemError("duplicate boundary condition on component " +
                                std::to_string(c.component));
    }
  }
  std::stable_sort(conditions.begin(), conditions.end(), [](const auto& a, const auto& b) {
    return static_cast<int>(a.side) < static_cast<int>(b.side);
  });
  return BoundarySpec(BoundaryKind::Custom, 0.0, 0.0, 0.0, std::move(conditions));
}

std::vector<int> BoundarySpec::pinned(Endpoint side) const {
  std::vector<int> out;
  for (const auto& c : conditions_) {
    if (c.side == side) out.push_back(c.component);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool BoundarySpec::pinned_value(Endpoint side, int component, double& value) const {
  for (const auto& c : conditions_) {
    if (c.side == side && c.component == component) {
      value = c.value;
      return true;
    }
  }
  return false;
}

void BvpProblem::validate() const {
  if (!(domain_end > domain_start)) {
    throw InvalidProblemError("domain_end must exceed domain_start");
  }
  if (!(kappa_tilde > 0.0)) {
    throw InvalidProblemError("kappa_tilde must be positive");
  }
}

double curvature_value(const CurvatureProfile& profile, double u) {
  switch (profile.kind()) {
    case CurvatureKind::Constant:
      return profile.const_value();
    case CurvatureKind::TypeI: {
      const auto t = tanh_terms(profile.gamma() * (u - profile.u0()));
      return 0.5 * profile.r0() * profile.c0() * t.one_minus_tanh;
    }
    case CurvatureKind::TypeII: {
      const double d = u - profile.u0();
      const auto t = tanh_terms(profile.gamma() * d);
      return -0.5 * profile.r0() * profile.c0() / profile.u0() * d * t.one_minus_tanh;
    }
  }
  return 0.0;
}

double curvature_rate(const CurvatureProfile& profile, double u) {
  switch (profile.kind()) {
    case CurvatureKind::Constant:
      return 0.0;
    case CurvatureKind::TypeI: {
      const auto t = tanh_terms(profile.gamma() * (u - profile.u0()));
      return -0.5 * profile.r0() * profile.c0() * profile.gamma() * t.sech2;
    }
    case CurvatureKind::TypeII: {
      const double d = u - profile.u0();
      const auto t = tanh_terms(profile.gamma() * d);
      const double b = -0.5 * profile.r0() * profile.c0() / profile.u0();
      return b * t.one_minus_tanh - b * profile.gamma() * d * t.sech2;
    }
  }
  return 0.0;
}

CurvaturePartials curvature_param_partials(const CurvatureProfile& profile, double u) {
  if (!profile.parametrised()) {
    throw UnsupportedProfileError("constant curvature has no parameter partials");
  }
  const double r0 = profile.r0();
  const double c0 = profile.c0();
  const double g = profile.gamma();
  const double u0 = profile.u0();
  const double d = u - u0;
  const auto t = tanh_terms(g * d);
  const double omt = t.one_minus_tanh;
  const double s2 = t.sech2;
  CurvaturePartials p{};

  if (profile.kind() == CurvatureKind::TypeI) {
    const double a = 0.5 * r0 * c0;
    p.value = {0.5 * r0 * omt, -a * d * s2, a * g * s2};
    p.rate = {-0.5 * r0 * g * s2,
              -a * s2 + 2.0 * a * g * d * s2 * t.tanh,
              -2.0 * a * g * g * s2 * t.tanh};
    return p;
  }

  // TypeII with b = -R0 C0 / (2 u0), db/du0 = -b/u0.
  const double b = -0.5 * r0 * c0 / u0;
  const double b_per_c0 = -0.5 * r0 / u0;
  p.value = {b_per_c0 * d * omt,
             -b * d * d * s2,
             -(b / u0) * d * omt - b * omt + b * g * d * s2};
  p.rate = {b_per_c0 * omt - b_per_c0 * g * d * s2,
            -2.0 * b * d * s2 + 2.0 * b * g * d * d * s2 * t.tanh,
            -(b / u0) * omt + 2.0 * b * g * s2 + (b / u0) * g * d * s2 -
                2.0 * b * g * g * d * s2 * t.tanh};
  return p;
}

StateVector residual(const BvpProblem& problem, const StateVector& x, const StateVector& rate,
                     double u) {
  require_positive_x1(x);
  const double c = curvature_value(problem.profile, u);
  const double cdot = curvature_rate(problem.profile, u);
  const double kappa = problem.kappa_tilde;
  const double sn = std::sin(x(2));
  const double cs = std::cos(x(2));
  const double hc = x(3) - c;
  const double q = x(3) - sn / x(0);
  const double bracket_tension = hc * hc + x(5) / kappa;
  const double bracket_curv = x(3) * x(3) + q * q;

  StateVector f;
  if (problem.formulation == FormulationKind::ArcLength) {
    f(0) = rate(0) - cs;
    f(1) = rate(1) - sn;
    f(2) = rate(2) - 2.0 * x(3) + sn / x(0);
    f(3) = rate(3) - x(4) / x(0) - cdot;
    f(4) = rate(4) - 2.0 * x(0) * x(3) * bracket_tension + 2.0 * x(0) * hc * bracket_curv;
  } else {
    const double x1sq = x(0) * x(0);
    f(0) = rate(0) - cs / x(0);
    f(1) = rate(1) - sn / x(0);
    f(2) = rate(2) - 2.0 * x(3) / x(0) + sn / x1sq;
    f(3) = rate(3) - x(4) / x1sq - cdot;
    f(4) = rate(4) - 2.0 * x(3) * bracket_tension + 2.0 * hc * bracket_curv;
  }
  f(5) = rate(5) - 2.0 * kappa * cdot * x(3) + 2.0 * kappa * c * cdot;
  return f;
}

Matrix6 jacobian_state(const BvpProblem& problem, const StateVector& x, const StateVector&,
                       double u) {
  require_positive_x1(x);
  const double c = curvature_value(problem.profile, u);
  const double cdot = curvature_rate(problem.profile, u);
  const double kappa = problem.kappa_tilde;
  const double x1 = x(0);
  const double sn = std::sin(x(2));
  const double cs = std::cos(x(2));
  const double hc = x(3) - c;
  const double q = x(3) - sn / x1;
  const double df5_dx4_core =
      -2.0 * hc * hc - 2.0 * x(5) / kappa + 2.0 * x(3) * x(3) + 2.0 * q * q + 4.0 * hc * q;

  Matrix6 j = Matrix6::Zero();
  if (problem.formulation == FormulationKind::ArcLength) {
    j(0, 2) = sn;
    j(1, 2) = -cs;
    j(2, 0) = -sn / (x1 * x1);
    j(2, 2) = cs / x1;
    j(2, 3) = -2.0;
    j(3, 0) = x(4) / (x1 * x1);
    j(3, 4) = -1.0 / x1;
    j(4, 0) = -2.0 * x(3) * (hc * hc + x(5) / kappa) + 2.0 * hc * x(3) * x(3) +
              2.0 * hc * q * q + 4.0 * x1 * hc * (sn / (x1 * x1)) * q;
    j(4, 2) = 4.0 * x1 * hc * (-cs / x1) * q;
    j(4, 3) = x1 * df5_dx4_core;
    j(4, 5) = -2.0 * x1 * x(3) / kappa;
  } else {
    const double x1sq = x1 * x1;
    j(0, 0) = cs / x1sq;
    j(0, 2) = sn / x1;
    j(1, 0) = sn / x1sq;
    j(1, 2) = -cs / x1;
    j(2, 0) = 2.0 * x(3) / x1sq - 2.0 * sn / (x1sq * x1);
    j(2, 2) = cs / x1sq;
    j(2, 3) = -2.0 / x1;
    j(3, 0) = 2.0 * x(4) / (x1sq * x1);
    j(3, 4) = -1.0 / x1sq;
    j(4, 0) = 4.0 * hc * (sn / x1sq) * q;
    j(4, 2) = 4.0 * hc * (-cs / x1) * q;
    j(4, 3) = df5_dx4_core;
    j(4, 5) = -2.0 * x(3) / kappa;
  }
  j(5, 3) = -2.0 * kappa * cdot;
  return j;
}

Matrix6 jacobian_rate(const BvpProblem&, const StateVector&, const StateVector&, double) {
  return Matrix6::Identity();
}

Matrix63 jacobian_params(const BvpProblem& problem, const StateVector& x, const StateVector&,
                         double u) {
  const auto partials = curvature_param_partials(problem.profile, u);
  require_positive_x1(x);
  const double c = curvature_value(problem.profile, u);
  const double cdot = curvature_rate(problem.profile, u);
  const double kappa = problem.kappa_tilde;
  const double hc = x(3) - c;
  const double q = x(3) - std::sin(x(2)) / x(0);
  const double weight = problem.formulation == FormulationKind::ArcLength ? x(0) : 1.0;

  Matrix63 j = Matrix63::Zero();
  for (int p = 0; p < kParameterCount; ++p) {
    const double dc = partials.value[p];
    const double dcdot = partials.rate[p];
    j(3, p) = -dcdot;
    j(4, p) = weight * (4.0 * x(3) * hc * dc - 2.0 * (x(3) * x(3) + q * q) * dc);
    j(5, p) = -2.0 * kappa * x(3) * dcdot + 2.0 * kappa * (dc * cdot + c * dcdot);
  }
  return j;
}

StateVector boundary_residual(const BoundarySpec& spec, const StateVector& state_start,
                              const StateVector& state_end) {
  StateVector r;
  const auto& conds = spec.conditions();
  for (int i = 0; i < kStateSize; ++i) {
    const auto& c = conds[i];
    const StateVector& s = c.side == Endpoint::Start ? state_start : state_end;
    r(i) = s(c.component) - c.value;
  }
  return r;
}

bool is_mollifying(const CurvatureProfile& profile) {
  if (!profile.parametrised()) {
    throw UnsupportedProfileError("mollification is defined for TypeI/TypeII profiles only");
  }
  return profile.gamma() * profile.u0() < 3.0;
}

}  // namespace helfrich
