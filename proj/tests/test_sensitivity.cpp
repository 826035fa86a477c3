#include <catch_amalgamated.hpp>

#include <cmath>

#include "helfrich/collocation.hpp"
#include "helfrich/errors.hpp"
#include "helfrich/sensitivity.hpp"
#include "support.hpp"

using namespace helfrich;
using namespace helfrich::testing;

namespace {

constexpr Parameter kAll[] = {Parameter::C0, Parameter::Gamma, Parameter::U0};

const CollocationSolution& table1_base() {
  static const CollocationSolution base = solve_by_continuation(table1_problem(), refined_settings());
  return base;
}

const CollocationSolution& table2_base() {
  static const CollocationSolution base = solve_by_continuation(table2_problem(), refined_settings());
  return base;
}

// Sphere of radius 1 carried by a TypeI profile whose transition lies far past the domain,
// so c == 1 to rounding and the parameters are still defined.
BvpProblem parametrised_sphere() {
  BvpProblem p;
  p.profile = CurvatureProfile::type_one(1.0, 1.0, 100.0, 1.0);
  p.domain_start = 0.01;
  p.domain_end = 2.0;
  auto exact = [](double t) {
    StateVector x;
    x << std::sin(t), std::cos(2.0) - std::cos(t), t, 1.0, 0.0, 0.0;
    return x;
  };
  p.bc = BoundarySpec::custom({{Endpoint::Start, 0, exact(0.01)(0)},
                               {Endpoint::Start, 2, exact(0.01)(2)},
                               {Endpoint::Start, 4, 0.0},
                               {Endpoint::End, 1, 0.0},
                               {Endpoint::End, 2, 2.0},
                               {Endpoint::End, 5, 0.0}});
  return p;
}

// Richardson-extrapolated trapezoid on the solution mesh split 10x and 20x.
double energy_trapezoid(const BvpProblem& p, const CollocationSolution& sol) {
  auto integrand = [&](double u) {
    const StateVector x = sol.state(u);
    const double d = x(3) - curvature_value(p.profile, u);
    return p.formulation == FormulationKind::ArcLength ? d * d * x(0) : d * d;
  };
  auto trapezoid = [&](int split) {
    const auto& nodes = sol.mesh().nodes();
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
      const double h = (nodes[k + 1] - nodes[k]) / split;
      for (int m = 0; m < split; ++m) {
        const double a = nodes[k] + m * h;
        const double b = m + 1 == split ? nodes[k + 1] : a + h;
        total += 0.5 * (b - a) * (integrand(a) + integrand(b));
      }
    }
    return total;
  };
  const double coarse = trapezoid(10);
  const double fine = trapezoid(20);
  return (4.0 * fine - coarse) / 3.0;
}

double relative(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("energy vanishes on the exact sphere and the flat disk", "[sensitivity]") {
  const auto sphere = parametrised_sphere();
  const auto sol = solve_bvp(sphere, default_initial_guess(sphere), Mesh::uniform(0.01, 2.0, 100),
                             SolverSettings{});
  REQUIRE(sol.converged);
  CHECK(energy(sphere, sol) < 1e-14);

  const auto flat = table1_problem(0.0);
  const auto disk = solve_bvp(flat, default_initial_guess(flat), default_mesh(flat), {});
  REQUIRE(disk.converged);
  CHECK(energy(flat, disk) == 0.0);
}

TEST_CASE("energy matches an independent Richardson trapezoid rule", "[sensitivity]") {
  const auto& base = table1_base();
  REQUIRE(base.converged);
  const auto p = table1_problem();
  const double w = energy(p, base);
  CHECK(w > 0.0);
  CHECK(relative(w, energy_trapezoid(p, base)) < 1e-6);

  const auto p2 = table2_problem();
  CHECK(relative(energy(p2, table2_base()), energy_trapezoid(p2, table2_base())) < 1e-6);
}

TEST_CASE("forward sensitivities at C0 = 0 match finite differences", "[sensitivity]") {
  const auto p = table1_problem(0.0);
  const auto base = solve_bvp(p, default_initial_guess(p), default_mesh(p), {});
  REQUIRE(base.converged);
  const auto fwd = forward_sensitivity(p, base, Parameter::C0);
  REQUIRE(fwd.converged);
  bool fd_ok = false;
  const Eigen::MatrixXd fd = fd_solution_sensitivity(p, base, Parameter::C0, 1e-5, &fd_ok);
  REQUIRE(fd_ok);
  CHECK(masked_relative_error(fwd.sensitivity.values(), fd) < 1e-3);
  // y responds at first order.
  CHECK(fwd.sensitivity.values().row(1).cwiseAbs().maxCoeff() > 0.0);

  // Both factors of w vanish at first order, so dW/dC0 = 0 and W(delta) = O(delta^2).
  CHECK(std::abs(fwd.energy_sensitivity) < 1e-12);
  auto quotient = [&](double delta) {
    BvpProblem q = p;
    q.profile = p.profile.with_c0(delta);
    const auto s = solve_bvp(q, InitialGuess::from_solution(base), base.mesh(), {});
    REQUIRE(s.converged);
    return energy(q, s) / delta;
  };
  const double q3 = quotient(1e-3);
  const double q4 = quotient(1e-4);
  CHECK(q4 < q3);
  CHECK(q3 / q4 == Catch::Approx(10.0).epsilon(0.05));
}

TEST_CASE("forward sensitivities match finite differences on the B.C. I tables",
          "[sensitivity][slow]") {
  struct Case {
    BvpProblem problem;
    const CollocationSolution* base;
  };
  for (const auto& c : {Case{table1_problem(), &table1_base()}, Case{table2_problem(), &table2_base()}}) {
    REQUIRE(c.base->converged);
    for (Parameter j : kAll) {
      const auto fwd = forward_sensitivity(c.problem, *c.base, j);
      REQUIRE(fwd.converged);
      bool fd_ok = false;
      const Eigen::MatrixXd fd = fd_solution_sensitivity(c.problem, *c.base, j, 1e-5, &fd_ok);
      REQUIRE(fd_ok);
      INFO("parameter " << static_cast<int>(j));
      CHECK(masked_relative_error(fwd.sensitivity.values(), fd) < 1e-3);
    }
  }
}

TEST_CASE("sensitivities vanish at pinned components and the state block reproduces the base",
          "[sensitivity]") {
  const auto p = table1_problem();
  const auto& base = table1_base();
  for (Parameter j : kAll) {
    const auto fwd = forward_sensitivity(p, base, j);
    REQUIRE(fwd.converged);
    const Eigen::MatrixXd& s = fwd.sensitivity.values();
    for (const auto& c : p.bc.conditions()) {
      const int col = c.side == Endpoint::Start ? 0 : static_cast<int>(s.cols()) - 1;
      CHECK(std::abs(s(c.component, col)) < 1e-12);
    }
    CHECK((fwd.state.values() - base.values()).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("forward and adjoint energy sensitivities agree on B.C. I", "[sensitivity][slow]") {
  struct Case {
    BvpProblem problem;
    const CollocationSolution* base;
  };
  for (const auto& c : {Case{table1_problem(), &table1_base()}, Case{table2_problem(), &table2_base()}}) {
    const auto adj = adjoint_solve(c.problem, *c.base);
    REQUIRE(adj.converged);
    for (Parameter j : kAll) {
      const auto fwd = forward_sensitivity(c.problem, *c.base, j);
      REQUIRE(fwd.converged);
      const double a = energy_sensitivity_adjoint(c.problem, *c.base, adj, j);
      INFO("parameter " << static_cast<int>(j) << " forward " << fwd.energy_sensitivity
                        << " adjoint " << a);
      CHECK(relative(a, fwd.energy_sensitivity) < 1e-4);
    }
  }
}

TEST_CASE("adjoint dW/du0 matches a finite difference of W on table 2", "[sensitivity]") {
  const auto p = table2_problem();
  const auto& base = table2_base();
  const auto adj = adjoint_solve(p, base);
  REQUIRE(adj.converged);
  const double delta = 1e-4;
  auto w_at = [&](double u0) {
    BvpProblem q = p;
    q.profile = p.profile.with_parameter(Parameter::U0, u0);
    const auto s = solve_bvp(q, InitialGuess::from_solution(base), base.mesh(), {});
    REQUIRE(s.converged);
    return energy(q, s);
  };
  const double u0 = p.profile.u0();
  const double fd = (w_at(u0 + delta) - w_at(u0 - delta)) / (2.0 * delta);
  CHECK(relative(energy_sensitivity_adjoint(p, base, adj, Parameter::U0), fd) < 1e-3);
}

TEST_CASE("adjoint boundary values and boundary terms vanish", "[sensitivity]") {
  const auto p = table2_problem();
  const auto& base = table2_base();
  const auto adj = adjoint_solve(p, base);
  REQUIRE(adj.converged);
  CHECK(adjoint_vanishing_components(p.bc, Endpoint::Start) == std::vector<int>{1, 3, 5});
  CHECK(adjoint_vanishing_components(p.bc, Endpoint::End) == std::vector<int>{0, 3, 4});

  const StateVector v0 = adj.adjoint.state(p.domain_start);
  const StateVector v1 = adj.adjoint.state(p.domain_end);
  for (int i : {1, 3, 5}) CHECK(std::abs(v0(i)) < 1e-12);
  for (int i : {0, 3, 4}) CHECK(std::abs(v1(i)) < 1e-12);

  for (Parameter j : kAll) {
    const auto fwd = forward_sensitivity(p, base, j);
    REQUIRE(fwd.converged);
    // D_xdot F is the identity, so the boundary term is v . s_j.
    CHECK(std::abs(v0.dot(fwd.sensitivity.state(p.domain_start))) < 1e-8);
    CHECK(std::abs(v1.dot(fwd.sensitivity.state(p.domain_end))) < 1e-8);
  }
}

TEST_CASE("adjoint is identically zero on the sphere", "[sensitivity]") {
  const auto p = parametrised_sphere();
  const auto base = solve_bvp(p, default_initial_guess(p), Mesh::uniform(0.01, 2.0, 100), {});
  REQUIRE(base.converged);
  CHECK_THROWS_AS(adjoint_solve(p, base), InvalidProblemError);
  AdjointOptions opts;
  opts.allow_experimental_bc = true;
  const auto adj = adjoint_solve(p, base, opts);
  REQUIRE(adj.converged);
  CHECK(adj.adjoint.values().lpNorm<Eigen::Infinity>() < 1e-12);
    // Only the solver's residual in h - c remains.
  for (Parameter j : kAll) CHECK(std::abs(energy_sensitivity_adjoint(p, base, adj, j)) < 1e-8);
}

TEST_CASE("experimental B.C. II adjoint agrees with the forward method on table 3",
          "[sensitivity][slow]") {
  const auto p = table3_problem();
  const auto base = solve_by_continuation(p, refined_settings(1e-6), ContinuationOptions{20, 12});
  REQUIRE(base.converged);
  CHECK_THROWS_AS(adjoint_solve(p, base), InvalidProblemError);
  AdjointOptions opts;
  opts.allow_experimental_bc = true;
  const auto adj = adjoint_solve(p, base, opts);
  REQUIRE(adj.converged);
  const auto fwd = forward_sensitivity(p, base, Parameter::C0);
  REQUIRE(fwd.converged);
  CHECK(relative(energy_sensitivity_adjoint(p, base, adj, Parameter::C0), fwd.energy_sensitivity) <
        1e-4);
}

TEST_CASE("curvature sensitivity peaks at the transition", "[sensitivity]") {
  const auto p = table1_problem();
  const auto fwd = forward_sensitivity(p, table1_base(), Parameter::C0);
  REQUIRE(fwd.converged);
  double best = -1.0, where = 0.0;
  for (int i = 0; i <= 5000; ++i) {
    const double u = p.domain_end * i / 5000.0;
    const double v = std::abs(fwd.sensitivity.state(u)(3));
    if (v > best) {
      best = v;
      where = u;
    }
  }
  const double u0 = p.profile.u0(), g = p.profile.gamma();
  CHECK(where >= u0 - 3.0 / g);
  CHECK(where <= u0 + 3.0 / g);
}

TEST_CASE("a mollifying profile smooths the curvature sensitivity", "[sensitivity]") {
  auto steepness = [](double gamma) {
    const auto p = table1_problem(0.02, gamma);
    const auto base = solve_by_continuation(p, SolverSettings{});
    REQUIRE(base.converged);
    const auto fwd = forward_sensitivity(p, base, Parameter::C0);
    REQUIRE(fwd.converged);
    return fwd.sensitivity.rates().row(3).cwiseAbs().maxCoeff();
  };
  CHECK(steepness(2.5) < steepness(20.0));
}

TEST_CASE("energy is non-negative along a continuation", "[sensitivity]") {
  const auto p = table1_problem(0.0);
  const auto steps = continuation_in_c0(p, 0.0, 0.02, default_initial_guess(p), default_mesh(p),
                                        SolverSettings{}, ContinuationOptions{5, 12});
  for (const auto& st : steps) {
    BvpProblem q = p;
    q.profile = p.profile.with_c0(st.c0);
    CHECK(energy(q, st.solution) >= 0.0);
  }
}

TEST_CASE("sensitivities reject constant profiles and unconverged bases", "[sensitivity]") {
  BvpProblem p = table1_problem(0.0);
  const auto base = solve_bvp(p, default_initial_guess(p), default_mesh(p), {});
  BvpProblem constant = p;
  constant.profile = CurvatureProfile::constant(0.0);
  CHECK_THROWS_AS(forward_sensitivity(constant, base, Parameter::C0), UnsupportedProfileError);
  CHECK_THROWS_AS(energy_sensitivity_forward(constant, base, base, Parameter::C0),
                  UnsupportedProfileError);
  CollocationSolution stale = base;
  stale.converged = false;
  CHECK_THROWS_AS(forward_sensitivity(p, stale, Parameter::C0), InvalidProblemError);
  CHECK_THROWS_AS(adjoint_solve(p, stale), InvalidProblemError);
}

TEST_CASE("dimensional rescaling of sensitivities", "[sensitivity]") {
  CHECK(rescale_sensitivity(0.37, "h_wrt_gamma", 80.0) == 0.37);
  CHECK(rescale_sensitivity(6400.0, "h_wrt_u0", 80.0) == Catch::Approx(1.0));
  CHECK(rescale_sensitivity(0.37, "h_wrt_C0", 1.0) == 0.37);
  CHECK(rescale_sensitivity(80.0, "h_wrt_C0", 80.0) == Catch::Approx(1.0));

  const double r0 = 400.0 / std::sqrt(50.0);
  CHECK(rescale_sensitivity(1.0, "h_wrt_gamma", r0, FormulationKind::Area) ==
        Catch::Approx(2.0 * M_PI * r0));
  CHECK(rescale_sensitivity(1.0, "h_wrt_u0", r0, FormulationKind::Area) ==
        Catch::Approx(1.0 / (2.0 * M_PI * r0 * r0 * r0)));

  Eigen::VectorXd v(3);
  v << 6400.0, -12800.0, 0.0;
  const Eigen::VectorXd out = rescale_sensitivity(v, "h_wrt_u0", 80.0);
  CHECK(out(0) == Catch::Approx(1.0));
  CHECK(out(1) == Catch::Approx(-2.0));
  CHECK(out(2) == 0.0);

  CHECK_THROWS_AS(rescale_sensitivity(1.0, "x_wrt_C0", 80.0), UnknownSelectorError);
}
