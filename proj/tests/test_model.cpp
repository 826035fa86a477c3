#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "helfrich/errors.hpp"
#include "helfrich/model.hpp"
#include "support.hpp"

using namespace helfrich;
using namespace helfrich::testing;
using Catch::Approx;

namespace {

// Independent transcription of the area-coordinate residual.
StateVector area_residual_oracle(const StateVector& x, const StateVector& xd, double c,
                                 double cd, double kappa) {
  StateVector f;
  f(0) = xd(0) - std::cos(x(2)) / x(0);
  f(1) = xd(1) - std::sin(x(2)) / x(0);
  f(2) = xd(2) - 2.0 * x(3) / x(0) + std::sin(x(2)) / (x(0) * x(0));
  f(3) = xd(3) - x(4) / (x(0) * x(0)) - cd;
  const double t1 = (x(3) - c) * (x(3) - c) + x(5) / kappa;
  const double m = x(3) - std::sin(x(2)) / x(0);
  f(4) = xd(4) - 2.0 * x(3) * t1 + 2.0 * (x(3) - c) * (x(3) * x(3) + m * m);
  f(5) = xd(5) - 2.0 * kappa * cd * x(3) + 2.0 * kappa * c * cd;
  return f;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("type I curvature closed-form values", "[model]") {
  const auto prof = CurvatureProfile::type_one(0.02, 20.0, 1.0, 80.0);
  CHECK(curvature_value(prof, 1.0) == Approx(0.8).epsilon(1e-15));
  CHECK(curvature_value(prof, 0.0) == Approx(1.6).epsilon(1e-12));
  CHECK(curvature_rate(prof, 1.0) == Approx(-16.0).epsilon(1e-15));
  const auto parts = curvature_param_partials(prof, 1.0);
  CHECK(parts.value[0] == Approx(40.0).epsilon(1e-15));
  CHECK(parts.value[1] == 0.0);
}

TEST_CASE("type I curvature is non-increasing with the expected limits", "[model]") {
  const auto prof = CurvatureProfile::type_one(0.02, 20.0, 1.0, 80.0);
  double prev = curvature_value(prof, -2.0);
  for (int i = 1; i <= 400; ++i) {
    const double c = curvature_value(prof, -2.0 + 0.02 * i);
    CHECK(c <= prev);
    prev = c;
  }
  CHECK(std::abs(curvature_value(prof, 1.0 - 10.0 / 20.0) - 1.6) < 1e-8);
  CHECK(std::abs(curvature_value(prof, 1.0 + 10.0 / 20.0)) < 1e-8);
}

TEST_CASE("type II curvature vanishes at u0 and rejects u0 <= 0", "[model]") {
  const auto prof = CurvatureProfile::type_two(0.0044, 30.0, 30.0, 200.0);
  CHECK(curvature_value(prof, 30.0) == 0.0);
  CHECK_THROWS_AS(CurvatureProfile::type_two(0.001, 1.0, 0.0, 1.0), InvalidProfileError);
  CHECK_THROWS_AS(CurvatureProfile::type_two(0.001, 1.0, -1.0, 1.0), InvalidProfileError);
}

TEST_CASE("constant curvature has zero rate and no parameters", "[model]") {
  const auto prof = CurvatureProfile::constant(0.7);
  CHECK(curvature_value(prof, 3.0) == 0.7);
  CHECK(curvature_rate(prof, 3.0) == 0.0);
  CHECK_THROWS_AS(curvature_param_partials(prof, 1.0), UnsupportedProfileError);
  CHECK_THROWS_AS(is_mollifying(prof), UnsupportedProfileError);
}

TEST_CASE("curvature rate and parameter partials agree with finite differences", "[model]") {
  const std::vector<CurvatureProfile> profiles = {
      CurvatureProfile::type_one(0.02, 20.0, 1.0, 80.0),
      CurvatureProfile::type_one(0.02, 2.5, 1.0, 80.0),
      CurvatureProfile::type_two(0.0044, 30.0, 30.0, 200.0),
      CurvatureProfile::type_two(0.0044, 0.08, 30.0, 200.0),
  };
  auto scalar = [](double v) { return Eigen::Matrix<double, 1, 1>::Constant(v); };
  for (const auto& prof : profiles) {
    const double lo = std::max(0.0, prof.u0() - 4.0 / prof.gamma());
    const double hi = prof.u0() + 4.0 / prof.gamma();
    const double cmax = std::abs(curvature_value(prof, lo)) + std::abs(curvature_value(prof, hi));
    for (int i = 0; i < 100; ++i) {
      const double u = lo + (hi - lo) * (i + 0.37) / 100.0;
      const double fd =
          central5([&](double d) { return scalar(curvature_value(prof, u + d)); }, 1e-3 / prof.gamma())(0);
      const double an = curvature_rate(prof, u);
      CHECK(std::abs(an - fd) <= 1e-6 * std::max(std::abs(an), 1e-6 * cmax));

      const auto parts = curvature_param_partials(prof, u);
      for (int k = 0; k < 3; ++k) {
        const auto param = static_cast<Parameter>(k);
        const double v = prof.parameter(param);
        const double h = parameter_step(prof, k, u, 1e-3);
        const double fdv = central5(
            [&](double d) { return scalar(curvature_value(prof.with_parameter(param, v + d), u)); },
            h)(0);
        const double fdr = central5(
            [&](double d) { return scalar(curvature_rate(prof.with_parameter(param, v + d), u)); },
            h)(0);
        INFO("k = " << k << ", u = " << u);
        CHECK(std::abs(parts.value[k] - fdv) <= 1e-6 * std::max(std::abs(parts.value[k]), 1e-9));
        CHECK(std::abs(parts.rate[k] - fdr) <= 1e-6 * std::max(std::abs(parts.rate[k]), 1e-9));
      }
    }
  }
}

TEST_CASE("type II rate matches a central difference at u = 35", "[model]") {
  const auto prof = CurvatureProfile::type_two(0.0044, 30.0, 30.0, 200.0);
  const double h = 1e-6;
  const double fd = (curvature_value(prof, 35.0 + h) - curvature_value(prof, 35.0 - h)) / (2 * h);
  CHECK(rel(curvature_rate(prof, 35.0), fd) < 1e-8);
}

TEST_CASE("flat disk is an exact solution", "[model]") {
  BvpProblem p;
  p.profile = CurvatureProfile::constant(0.0);
  p.bc = BoundarySpec::type_one(12.8);
  p.domain_end = 5.0;
  StateVector rate = StateVector::Zero();
  rate(0) = 1.0;
  for (double t : {1e-4, 0.3, 2.0, 4.9}) {
    StateVector x;
    x << t, 0, 0, 0, 0, 12.8;
    CHECK(residual(p, x, rate, t).lpNorm<Eigen::Infinity>() < 1e-13);
  }
  StateVector x;
  x << 1.0, 0, 0, 0, 0, 12.8;
  const Matrix6 j = jacobian_state(p, x, rate, 1.0);
  CHECK(j.row(0).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("sphere is an exact solution for any kappa", "[model]") {
  for (double rho : {0.5, 1.0, 3.0}) {
    for (double kappa : {0.3, 1.0, 7.0}) {
      BvpProblem p;
      p.profile = CurvatureProfile::constant(1.0 / rho);
      p.kappa_tilde = kappa;
      p.domain_end = 2.0;
      for (double t : {0.05, 0.7, 1.3}) {
        StateVector x, r;
        x << rho * std::sin(t / rho), 0.4, t / rho, 1.0 / rho, 0.0, 0.0;
        r << std::cos(t / rho), std::sin(t / rho), 1.0 / rho, 0, 0, 0;
        CHECK(residual(p, x, r, t).lpNorm<Eigen::Infinity>() < 1e-13);
      }
    }
  }
}

TEST_CASE("area residual matches an independent transcription", "[model]") {
  const auto p = table2_problem();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> coord(0.0, 15.0);
  for (int i = 0; i < 200; ++i) {
    const StateVector x = random_state(rng);
    const StateVector r = random_state(rng);
    const double u = coord(rng);
    const StateVector expected = area_residual_oracle(
        x, r, curvature_value(p.profile, u), curvature_rate(p.profile, u), p.kappa_tilde);
    const StateVector got = residual(p, x, r, u);
    CHECK((got - expected).lpNorm<Eigen::Infinity>() <=
          1e-14 * std::max(1.0, expected.lpNorm<Eigen::Infinity>()));
  }
}

TEST_CASE("residual rejects non-positive x1", "[model]") {
  const auto p = table1_problem();
  StateVector x = StateVector::Zero();
  const StateVector r = StateVector::Zero();
  CHECK_THROWS_AS(residual(p, x, r, 1.0), SingularStateError);
  x(0) = -1.0;
  CHECK_THROWS_AS(jacobian_state(p, x, r, 1.0), SingularStateError);
  CHECK_THROWS_AS(jacobian_params(p, x, r, 1.0), SingularStateError);
}

TEST_CASE("jacobian_rate is the identity", "[model]") {
  std::mt19937_64 rng(5);
  for (const auto& p : {table1_problem(), table2_problem()}) {
    const StateVector x = random_state(rng);
    const Matrix6 j = jacobian_rate(p, x, x, 1.0);
    CHECK(j == Matrix6::Identity());
    CHECK(j.trace() == 6.0);
  }
}

TEST_CASE("state and parameter Jacobians agree with central differences", "[model]") {
  std::mt19937_64 rng(2024);
  for (const auto& p : {table1_problem(), table2_problem(), table3_problem(), table4_problem()}) {
    std::uniform_real_distribution<double> coord(0.0, p.domain_end);
    for (int i = 0; i < 100; ++i) {
      const StateVector x = random_state(rng);
      const StateVector r = random_state(rng);
      // Sample near the transition as often as elsewhere.
      const double u = (i % 2) ? coord(rng)
                               : p.profile.u0() + (coord(rng) / p.domain_end - 0.5) * 6.0 /
                                                      p.profile.gamma();
      CHECK(column_relative_error(jacobian_state(p, x, r, u), fd_jacobian_state(p, x, r, u)) <
            1e-5);
      // Columns below the differencing noise of F itself are compared absolutely.
      const double noise = 1e-6 * std::max(1.0, residual(p, x, r, u).lpNorm<Eigen::Infinity>());
      CHECK(column_relative_error(jacobian_params(p, x, r, u), fd_jacobian_params(p, x, r, u),
                                  noise) < 1e-5);
    }
  }
}

TEST_CASE("parameter Jacobian structure", "[model]") {
  const auto p = table1_problem();
  StateVector x, r = StateVector::Zero();
  const double u = 1.02;
  const double c = curvature_value(p.profile, u);
  x << 0.9, 0.1, 0.4, c, 0.2, 12.0;
  const Matrix63 j = jacobian_params(p, x, r, u);
  CHECK(j.topRows(3).lpNorm<Eigen::Infinity>() == 0.0);
  const auto parts = curvature_param_partials(p.profile, u);
  const double q = x(3) - std::sin(x(2)) / x(0);
  for (int k = 0; k < 3; ++k) {
    const double expected = -2.0 * x(0) * (x(3) * x(3) + q * q) * parts.value[k];
    CHECK(j(4, k) == Approx(expected).epsilon(1e-13));
  }
  CHECK_THROWS_AS(jacobian_params(BvpProblem{}, x, r, u), UnsupportedProfileError);
}

TEST_CASE("area Jacobian (5,6) entry", "[model]") {
  auto p = table2_problem();
  p.kappa_tilde = 2.0;
  StateVector x, r = StateVector::Zero();
  x << 0.8, 0.0, 0.3, 1.0, 0.0, 0.0;
  CHECK(jacobian_state(p, x, r, 2.0)(4, 5) == Approx(-2.0 * x(3) / 2.0));
}

TEST_CASE("boundary residuals", "[model]") {
  const auto b1 = BoundarySpec::type_one(12.8, 1e-4);
  StateVector s = StateVector::Zero(), e = StateVector::Zero();
  s(0) = 1e-4;
  e(5) = 12.8;
  CHECK(boundary_residual(b1, s, e).lpNorm<Eigen::Infinity>() == 0.0);
  e(5) = 12.9;
  CHECK(boundary_residual(b1, s, e)(5) == Approx(0.1).epsilon(1e-12));

  const double theta = 0.9 * M_PI;
  const auto b2 = BoundarySpec::type_two(theta, 0.0);
  s = StateVector::Zero();
  s(0) = std::sin(theta);
  s(2) = theta;
  e = StateVector::Zero();
  CHECK(boundary_residual(b2, s, e).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(b2.pinned(Endpoint::Start) == std::vector<int>{0, 2});
  CHECK(b2.pinned(Endpoint::End) == std::vector<int>{1, 2, 4, 5});
}

TEST_CASE("custom boundary spec validation", "[model]") {
  CHECK_THROWS_AS(BoundarySpec::custom({{Endpoint::Start, 0, 1.0}}), InvalidProblemError);
  std::vector<DirichletCondition> dup(6, DirichletCondition{Endpoint::End, 1, 0.0});
  CHECK_THROWS_AS(BoundarySpec::custom(dup), InvalidProblemError);
  const auto ok = BoundarySpec::custom({{Endpoint::End, 1, 0.0},
                                        {Endpoint::Start, 0, 0.1},
                                        {Endpoint::End, 2, 0.0},
                                        {Endpoint::Start, 2, 0.0},
                                        {Endpoint::End, 5, 0.0},
                                        {Endpoint::Start, 4, 0.0}});
  CHECK(ok.conditions().front().side == Endpoint::Start);
  CHECK(ok.conditions()[2].side == Endpoint::Start);
  CHECK(ok.conditions()[3].side == Endpoint::End);
}

TEST_CASE("mollifying criterion", "[model]") {
  CHECK_FALSE(is_mollifying(CurvatureProfile::type_one(0.02, 20.0, 1.0, 80.0)));
  CHECK(is_mollifying(CurvatureProfile::type_one(0.02, 2.5, 1.0, 80.0)));
  CHECK(is_mollifying(CurvatureProfile::type_two(0.0044, 0.08, 30.0, 200.0)));
}

TEST_CASE("problem validation", "[model]") {
  BvpProblem p;
  p.domain_end = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidProblemError);
  p.domain_end = 1.0;
  p.kappa_tilde = 0.0;
  CHECK_THROWS_AS(p.validate(), InvalidProblemError);
}
