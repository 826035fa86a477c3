#include "helfrich/collocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "helfrich/errors.hpp"

namespace helfrich {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Cubic Hermite basis on one subinterval, s in [0, 1].
struct Hermite {
  double v0, m0, v1, m1;  // value weights (m weights already scaled by h)
  double d0, e0, d1, e1;  // derivative weights
};

Hermite hermite(double s, double h) {
  const double s2 = s * s;
  const double s3 = s2 * s;
  Hermite w{};
  w.v0 = 2.0 * s3 - 3.0 * s2 + 1.0;
  w.m0 = h * (s3 - 2.0 * s2 + s);
  w.v1 = -2.0 * s3 + 3.0 * s2;
  w.m1 = h * (s3 - s2);
  w.d0 = (6.0 * s2 - 6.0 * s) / h;
  w.e0 = 3.0 * s2 - 4.0 * s + 1.0;
  w.d1 = (-6.0 * s2 + 6.0 * s) / h;
  w.e1 = 3.0 * s2 - 2.0 * s;
  return w;
}

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

// Rate z with F(x, z, u) = 0, by Newton on the rate alone.
Eigen::VectorXd consistent_rate(const OdeSystem& sys, double u, const Eigen::VectorXd& x) {
  const int n = sys.dimension;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd f(n);
  Eigen::MatrixXd a(n, n), b(n, n);
  for (int it = 0; it < 5; ++it) {
    sys.residual(u, x, z, f);
    if (!all_finite(f)) return Eigen::VectorXd::Constant(n, kNaN);
    if (f.lpNorm<Eigen::Infinity>() < 1e-14 * (1.0 + z.lpNorm<Eigen::Infinity>())) break;
    sys.jacobian(u, x, z, a, b);
    z -= b.partialPivLu().solve(f);
  }
  return z;
}

class NewtonAssembler {
 public:
  NewtonAssembler(const OdeSystem& sys, std::span<const DirichletCondition> conditions,
                  const Mesh& mesh)
      : sys_(sys), mesh_(mesh), n_(sys.dimension), nodes_(mesh.intervals() + 1) {
    for (const auto& c : conditions) {
      (c.side == Endpoint::Start ? start_ : end_).push_back(c);
    }
    if (static_cast<int>(start_.size() + end_.size()) != n_) {
      throw InvalidProblemError("need exactly " + std::to_string(n_) +
                                " boundary conditions, got " +
                                std::to_string(start_.size() + end_.size()));
    }
  }

  int unknowns() const { return 2 * n_ * nodes_; }

  int value_index(int k, int i) const { return 2 * n_ * k + i; }
  int rate_index(int k, int i) const { return 2 * n_ * k + n_ + i; }
  int node_row(int k) const { return static_cast<int>(start_.size()) + 2 * n_ * k; }
  int mid_row(int k) const { return node_row(k) + n_; }
  int end_row() const { return static_cast<int>(start_.size()) + 2 * n_ * (nodes_ - 1) + n_; }

  // Residual; when `triplets` is non-null the Jacobian entries are appended.
  Eigen::VectorXd evaluate(const Eigen::VectorXd& z,
                           std::vector<Eigen::Triplet<double>>* triplets) const {
    Eigen::VectorXd r(unknowns());
    const auto& u = mesh_.nodes();
    Eigen::VectorXd f(n_);
    Eigen::MatrixXd a(n_, n_), b(n_, n_);

    for (std::size_t i = 0; i < start_.size(); ++i) {
      const auto& c = start_[i];
      r(static_cast<int>(i)) = z(value_index(0, c.component)) - c.value;
      if (triplets) triplets->emplace_back(static_cast<int>(i), value_index(0, c.component), 1.0);
    }
    for (std::size_t i = 0; i < end_.size(); ++i) {
      const auto& c = end_[i];
      const int row = end_row() + static_cast<int>(i);
      r(row) = z(value_index(nodes_ - 1, c.component)) - c.value;
      if (triplets) triplets->emplace_back(row, value_index(nodes_ - 1, c.component), 1.0);
    }

    for (int k = 0; k < nodes_; ++k) {
      const Eigen::VectorXd x = z.segment(value_index(k, 0), n_);
      const Eigen::VectorXd m = z.segment(rate_index(k, 0), n_);
      sys_.residual(u[k], x, m, f);
      r.segment(node_row(k), n_) = f;
      if (triplets) {
        sys_.jacobian(u[k], x, m, a, b);
        append_block(*triplets, node_row(k), value_index(k, 0), a, 1.0);
        append_block(*triplets, node_row(k), rate_index(k, 0), b, 1.0);
      }
    }

    for (int k = 0; k + 1 < nodes_; ++k) {
      const double h = u[k + 1] - u[k];
      const double um = 0.5 * (u[k] + u[k + 1]);
      const Eigen::VectorXd y0 = z.segment(value_index(k, 0), n_);
      const Eigen::VectorXd m0 = z.segment(rate_index(k, 0), n_);
      const Eigen::VectorXd y1 = z.segment(value_index(k + 1, 0), n_);
      const Eigen::VectorXd m1 = z.segment(rate_index(k + 1, 0), n_);
      const Eigen::VectorXd xm = 0.5 * (y0 + y1) + (h / 8.0) * (m0 - m1);
      const Eigen::VectorXd dm = (1.5 / h) * (y1 - y0) - 0.25 * (m0 + m1);
      sys_.residual(um, xm, dm, f);
      r.segment(mid_row(k), n_) = f;
      if (triplets) {
        sys_.jacobian(um, xm, dm, a, b);
        const int row = mid_row(k);
        append_combo(*triplets, row, value_index(k, 0), a, 0.5, b, -1.5 / h);
        append_combo(*triplets, row, rate_index(k, 0), a, h / 8.0, b, -0.25);
        append_combo(*triplets, row, value_index(k + 1, 0), a, 0.5, b, 1.5 / h);
        append_combo(*triplets, row, rate_index(k + 1, 0), a, -h / 8.0, b, -0.25);
      }
    }
    return r;
  }

 private:
  void append_block(std::vector<Eigen::Triplet<double>>& t, int row, int col,
                    const Eigen::MatrixXd& m, double scale) const {
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) t.emplace_back(row + i, col + j, scale * m(i, j));
  }

  void append_combo(std::vector<Eigen::Triplet<double>>& t, int row, int col,
                    const Eigen::MatrixXd& a, double sa, const Eigen::MatrixXd& b,
                    double sb) const {
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) t.emplace_back(row + i, col + j, sa * a(i, j) + sb * b(i, j));
  }

  const OdeSystem& sys_;
  const Mesh& mesh_;
  int n_;
  int nodes_;
  std::vector<DirichletCondition> start_;
  std::vector<DirichletCondition> end_;
};

CollocationSolution newton_solve(const OdeSystem& sys,
                                 std::span<const DirichletCondition> conditions,
                                 const InitialGuess& guess, const Mesh& mesh,
                                 const SolverSettings& settings) {
  const int n = sys.dimension;
  const int nodes = mesh.intervals() + 1;
  NewtonAssembler assembler(sys, conditions, mesh);

  Eigen::VectorXd z(assembler.unknowns());
  for (int k = 0; k < nodes; ++k) {
    const double u = mesh.nodes()[k];
    const Eigen::VectorXd x = guess.value(u);
    Eigen::VectorXd m = guess.rate ? guess.rate(u) : consistent_rate(sys, u, x);
    if (!all_finite(m)) {
      // Central difference of the guess as a fallback.
      const double du = 1e-6 * std::max(1.0, std::abs(u));
      const double lo = std::max(mesh.start(), u - du);
      const double hi = std::min(mesh.end(), u + du);
      m = (guess.value(hi) - guess.value(lo)) / (hi - lo);
    }
    z.segment(assembler.value_index(k, 0), n) = x;
    z.segment(assembler.rate_index(k, 0), n) = m;
  }

  std::vector<double> history;
  auto pack = [&](const Eigen::VectorXd& zz, double res_inf, int iters, bool ok) {
    Eigen::MatrixXd values(n, nodes), rates(n, nodes);
    for (int k = 0; k < nodes; ++k) {
      values.col(k) = zz.segment(assembler.value_index(k, 0), n);
      rates.col(k) = zz.segment(assembler.rate_index(k, 0), n);
    }
    CollocationSolution sol(mesh, std::move(values), std::move(rates));
    sol.converged = ok;
    sol.final_residual_norm = res_inf;
    sol.newton_iterations = iters;
    sol.residual_history = history;
    return sol;
  };

  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::SparseMatrix<double> jac(assembler.unknowns(), assembler.unknowns());
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  bool pattern_ready = false;

  triplets.clear();
  Eigen::VectorXd r = assembler.evaluate(z, &triplets);
  if (!all_finite(r)) return pack(z, std::numeric_limits<double>::infinity(), 0, false);
  double norm2 = r.norm();
  history.push_back(norm2);

  int crawling = 0;
  for (int iter = 0; iter < settings.max_newton_iters; ++iter) {
    const double inf_norm = r.lpNorm<Eigen::Infinity>();
    if (inf_norm < settings.newton_tol) return pack(z, inf_norm, iter, true);

    // Row equilibration keeps the LU accurate on strongly graded meshes.
    Eigen::VectorXd row_scale = Eigen::VectorXd::Zero(assembler.unknowns());
    for (const auto& t : triplets) {
      if (!std::isfinite(t.value())) return pack(z, inf_norm, iter, false);
      row_scale(t.row()) = std::max(row_scale(t.row()), std::abs(t.value()));
    }
    for (Eigen::Index i = 0; i < row_scale.size(); ++i) {
      row_scale(i) = row_scale(i) > 0.0 ? 1.0 / row_scale(i) : 1.0;
    }
    jac.setFromTriplets(triplets.begin(), triplets.end());
    jac = row_scale.asDiagonal() * jac;
    Eigen::VectorXd col_scale = Eigen::VectorXd::Zero(assembler.unknowns());
    for (int k = 0; k < jac.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(jac, k); it; ++it) {
        col_scale(it.col()) = std::max(col_scale(it.col()), std::abs(it.value()));
      }
    }
    for (Eigen::Index i = 0; i < col_scale.size(); ++i) {
      col_scale(i) = col_scale(i) > 0.0 ? 1.0 / col_scale(i) : 1.0;
    }
    jac = jac * col_scale.asDiagonal();
    if (!pattern_ready) {
      lu.analyzePattern(jac);
      pattern_ready = true;
    }
    lu.factorize(jac);
    if (lu.info() != Eigen::Success) {
      throw SingularSystemError(iter, "singular collocation Jacobian: " + lu.lastErrorMessage());
    }
    const Eigen::VectorXd scaled_r = row_scale.asDiagonal() * r;
    Eigen::VectorXd scaled_step = lu.solve(scaled_r);
    if (lu.info() != Eigen::Success || !all_finite(scaled_step)) {
      throw SingularSystemError(iter, "collocation Jacobian solve failed");
    }
    // One pass of iterative refinement.
    const Eigen::VectorXd correction = lu.solve(scaled_r - jac * scaled_step);
    if (all_finite(correction)) scaled_step += correction;
    const Eigen::VectorXd step = col_scale.asDiagonal() * scaled_step;

    double lambda = 1.0;
    bool accepted = false;
    Eigen::VectorXd z_trial;
    Eigen::VectorXd r_trial;
    const int max_halvings = settings.damping ? 30 : 0;
    for (int halving = 0; halving <= max_halvings; ++halving) {
      z_trial = z - lambda * step;
      r_trial = assembler.evaluate(z_trial, nullptr);
      const double trial_norm = all_finite(r_trial) ? r_trial.norm()
                                                    : std::numeric_limits<double>::infinity();
      if (!settings.damping || trial_norm < norm2) {
        accepted = std::isfinite(trial_norm);
        norm2 = trial_norm;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) return pack(z, inf_norm, iter + 1, false);
    // Repeated tiny steps mean Newton is stuck far from a root.
    crawling = lambda < 1e-3 ? crawling + 1 : 0;
    if (crawling >= 5) return pack(z_trial, r_trial.lpNorm<Eigen::Infinity>(), iter + 1, false);
    history.push_back(norm2);
    z = std::move(z_trial);
    triplets.clear();
    r = assembler.evaluate(z, &triplets);
  }
  const double inf_norm = r.lpNorm<Eigen::Infinity>();
  return pack(z, inf_norm, settings.max_newton_iters, inf_norm < settings.newton_tol);
}

std::vector<double> interval_error_estimates(const OdeSystem& sys,
                                             const CollocationSolution& sol) {
  const auto& u = sol.mesh().nodes();
  const int n = sys.dimension;
  std::vector<double> err(sol.mesh().intervals(), 0.0);
  Eigen::VectorXd f(n);
  for (int k = 0; k < sol.mesh().intervals(); ++k) {
    const double h = u[k + 1] - u[k];
    double worst = 0.0;
    for (double s : {0.25, 0.75}) {
      const double uu = u[k] + s * h;
      const Eigen::VectorXd x = sol.evaluate(uu);
      const Eigen::VectorXd d = sol.evaluate_rate(uu);
      sys.residual(uu, x, d, f);
      for (int i = 0; i < n; ++i) {
        const double e = std::abs(f(i)) / (1.0 + std::abs(d(i)));
        worst = std::isfinite(e) ? std::max(worst, e) : std::numeric_limits<double>::infinity();
      }
    }
    err[k] = h * worst;
  }
  return err;
}

}  // namespace

Mesh::Mesh(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) throw InvalidProblemError("mesh needs at least two nodes");
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    if (!(nodes_[i] > nodes_[i - 1])) {
      throw InvalidProblemError("mesh nodes must be strictly increasing");
    }
  }
}

Mesh Mesh::uniform(double start, double end, int intervals) {
  if (intervals < 1) throw InvalidProblemError("mesh needs at least one interval");
  std::vector<double> nodes(intervals + 1);
  for (int k = 0; k <= intervals; ++k) {
    nodes[k] = start + (end - start) * static_cast<double>(k) / intervals;
  }
  nodes.back() = end;
  return Mesh(std::move(nodes));
}

int Mesh::locate(double u) const {
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), u);
  int k = static_cast<int>(it - nodes_.begin()) - 1;
  return std::clamp(k, 0, intervals() - 1);
}

Mesh Mesh::subdivided(std::span<const int> pieces) const {
  std::vector<double> out;
  out.reserve(nodes_.size() * 2);
  for (int k = 0; k < intervals(); ++k) {
    const int m = std::max(1, pieces[k]);
    const double a = nodes_[k];
    const double h = nodes_[k + 1] - a;
    for (int j = 0; j < m; ++j) out.push_back(a + h * static_cast<double>(j) / m);
  }
  out.push_back(nodes_.back());
  return Mesh(std::move(out));
}

CollocationSolution::CollocationSolution(Mesh mesh, Eigen::MatrixXd values, Eigen::MatrixXd rates)
    : mesh_(std::move(mesh)), values_(std::move(values)), rates_(std::move(rates)) {}

void CollocationSolution::check_domain(double u) const {
  const double tol = 1e-12 * std::max(1.0, std::abs(mesh_.end()));
  if (!(u >= mesh_.start() - tol && u <= mesh_.end() + tol)) {
    throw OutOfDomainError("u = " + std::to_string(u) + " outside solution domain [" +
                           std::to_string(mesh_.start()) + ", " + std::to_string(mesh_.end()) +
                           "]");
  }
}

Eigen::VectorXd CollocationSolution::evaluate(double u) const {
  check_domain(u);
  const int k = mesh_.locate(u);
  const double a = mesh_.nodes()[k];
  const double h = mesh_.nodes()[k + 1] - a;
  const double s = (u - a) / h;
  if (s == 0.0) return values_.col(k);
  if (s == 1.0) return values_.col(k + 1);
  const auto w = hermite(s, h);
  return w.v0 * values_.col(k) + w.m0 * rates_.col(k) + w.v1 * values_.col(k + 1) +
         w.m1 * rates_.col(k + 1);
}

Eigen::VectorXd CollocationSolution::evaluate_rate(double u) const {
  check_domain(u);
  const int k = mesh_.locate(u);
  const double a = mesh_.nodes()[k];
  const double h = mesh_.nodes()[k + 1] - a;
  const double s = (u - a) / h;
  if (s == 0.0) return rates_.col(k);
  if (s == 1.0) return rates_.col(k + 1);
  const auto w = hermite(s, h);
  return w.d0 * values_.col(k) + w.e0 * rates_.col(k) + w.d1 * values_.col(k + 1) +
         w.e1 * rates_.col(k + 1);
}

StateVector CollocationSolution::state(double u) const { return evaluate(u).head<kStateSize>(); }

StateVector CollocationSolution::state_rate(double u) const {
  return evaluate_rate(u).head<kStateSize>();
}

CollocationSolution CollocationSolution::components(int first, int count) const {
  CollocationSolution out(mesh_, values_.middleRows(first, count), rates_.middleRows(first, count));
  out.converged = converged;
  out.final_residual_norm = final_residual_norm;
  out.newton_iterations = newton_iterations;
  out.residual_history = residual_history;
  return out;
}

InitialGuess InitialGuess::from_solution(const CollocationSolution& solution) {
  return InitialGuess{[solution](double u) { return solution.evaluate(u); },
                      [solution](double u) { return solution.evaluate_rate(u); }};
}

CollocationSolution solve_collocation(const OdeSystem& system,
                                      std::span<const DirichletCondition> conditions,
                                      const InitialGuess& guess, const Mesh& mesh,
                                      const SolverSettings& settings) {
  CollocationSolution sol = newton_solve(system, conditions, guess, mesh, settings);
  if (!settings.refine) return sol;

  for (int pass = 0; pass < settings.max_refine_passes && sol.converged; ++pass) {
    const auto err = interval_error_estimates(system, sol);
    std::vector<int> pieces(err.size(), 1);
    int added = 0;
    for (std::size_t k = 0; k < err.size(); ++k) {
      if (err[k] > settings.refine_tol) {
        const double ratio = std::isfinite(err[k]) ? err[k] / settings.refine_tol : 1e8;
        pieces[k] = std::clamp(static_cast<int>(std::ceil(std::pow(ratio, 0.25))), 2, 4);
        added += pieces[k] - 1;
      }
    }
    if (added == 0) break;
    if (sol.mesh().intervals() + 1 + added > settings.max_mesh_points) break;
    const Mesh finer = sol.mesh().subdivided(pieces);
    CollocationSolution next =
        newton_solve(system, conditions, InitialGuess::from_solution(sol), finer, settings);
    if (!next.converged) break;
    sol = std::move(next);
  }
  return sol;
}

std::vector<double> collocation_defects(const OdeSystem& system,
                                        const CollocationSolution& solution) {
  const auto& u = solution.mesh().nodes();
  const int n = system.dimension;
  Eigen::VectorXd f(n);
  std::vector<double> out(solution.mesh().intervals(), 0.0);
  for (int k = 0; k < solution.mesh().intervals(); ++k) {
    double worst = 0.0;
    for (double uu : {u[k], 0.5 * (u[k] + u[k + 1]), u[k + 1]}) {
      system.residual(uu, solution.evaluate(uu), solution.evaluate_rate(uu), f);
      worst = std::max(worst, f.lpNorm<Eigen::Infinity>());
    }
    out[k] = worst;
  }
  return out;
}

// --- membrane problems -----------------------------------------------------

OdeSystem membrane_system(const BvpProblem& problem) {
  OdeSystem sys;
  sys.dimension = kStateSize;
  sys.residual = [problem](double u, const Eigen::VectorXd& x, const Eigen::VectorXd& rate,
                           Eigen::VectorXd& f) {
    if (!(x(0) > 0.0)) {
      f = Eigen::VectorXd::Constant(kStateSize, kNaN);
      return;
    }
    f = residual(problem, x, rate, u);
  };
  sys.jacobian = [problem](double u, const Eigen::VectorXd& x, const Eigen::VectorXd& rate,
                           Eigen::MatrixXd& d_state, Eigen::MatrixXd& d_rate) {
    if (!(x(0) > 0.0)) {
      d_state = Eigen::MatrixXd::Constant(kStateSize, kStateSize, kNaN);
      d_rate = Eigen::MatrixXd::Identity(kStateSize, kStateSize);
      return;
    }
    d_state = jacobian_state(problem, x, rate, u);
    d_rate = jacobian_rate(problem, x, rate, u);
  };
  return sys;
}

Mesh default_mesh(const BvpProblem& problem, int intervals) {
  problem.validate();
  const double a = problem.domain_start;
  const double b = problem.domain_end;
  Mesh mesh = Mesh::uniform(a, b, intervals);

  const auto& profile = problem.profile;
  if (profile.parametrised() && profile.gamma() * profile.u0() > 3.0) {
    const double lo = profile.u0() - 6.0 / profile.gamma();
    const double hi = profile.u0() + 6.0 / profile.gamma();
    std::vector<int> pieces(mesh.intervals(), 1);
    for (int k = 0; k < mesh.intervals(); ++k) {
      if (mesh.nodes()[k + 1] > lo && mesh.nodes()[k] < hi) pieces[k] = 3;
    }
    mesh = mesh.subdivided(pieces);
  }

  // Grade towards a near-zero x1(0+): the pole layer has width ~eps in t and ~eps^2/2 in alpha.
  double x_start = 0.0;
  if (problem.bc.pinned_value(Endpoint::Start, 0, x_start) && x_start > 0.0 && x_start < 0.05) {
    // Below ~1e-6 the midpoint rate formula loses the tolerance to rounding in O(1) components.
    const double layer = problem.formulation == FormulationKind::Area
                             ? std::max(0.5 * x_start * x_start, 1e-6)
                             : x_start;
    std::vector<double> nodes;
    nodes.push_back(a);
    const double first = mesh.nodes()[1];
    for (double d = layer; a + d < first; d *= 2.0) {
      if (a + d > nodes.back()) nodes.push_back(a + d);
    }
    nodes.insert(nodes.end(), mesh.nodes().begin() + 1, mesh.nodes().end());
    mesh = Mesh(std::move(nodes));
  }
  return mesh;
}

InitialGuess default_initial_guess(const BvpProblem& problem) {
  problem.validate();
  const auto& bc = problem.bc;
  const double a = problem.domain_start;
  const double b = problem.domain_end;
  const bool area = problem.formulation == FormulationKind::Area;
  const CurvatureProfile profile = problem.profile;

  double lambda_end = 0.0;
  bc.pinned_value(Endpoint::End, 5, lambda_end);

  if (bc.kind() == BoundaryKind::TypeII) {
    // Catenoid x sin(psi) = const through (sin theta, theta), parametrised by the
    // signed arc length sigma from its neck.
    const double theta = bc.theta();
    const double x0 = std::sin(theta);
    const double neck = x0 * x0;
    const double sigma0 = x0 * std::cos(theta);
    auto area_of = [neck](double sigma) {
      const double x = std::hypot(neck, sigma);
      return 0.5 * (sigma * x + neck * neck * std::asinh(sigma / neck));
    };
    const double area0 = area_of(sigma0);
    auto sigma_at = [=](double u) {
      const double s = u - a;
      if (!area) return sigma0 + s;
      double sigma = sigma0 + std::sqrt(2.0 * s + 1e-300);
      for (int it = 0; it < 60; ++it) {
        const double g = area_of(sigma) - area0 - s;
        const double step = g / std::hypot(neck, sigma);
        sigma -= step;
        if (std::abs(step) < 1e-14 * (1.0 + std::abs(sigma))) break;
      }
      return sigma;
    };
    const double sigma_end = sigma_at(b);
    const double psi_end = std::atan2(neck, sigma_end);
    const double y_end = neck * std::asinh(sigma_end / neck);
    return InitialGuess{[=](double u) {
                          const double sigma = sigma_at(u);
                          Eigen::VectorXd x(kStateSize);
                          x(0) = std::hypot(neck, sigma);
                          x(1) = neck * std::asinh(sigma / neck) - y_end;
                          x(2) = std::atan2(neck, sigma) - psi_end * (u - a) / (b - a);
                          x(3) = 0.5 * curvature_value(profile, u);
                          x(4) = 0.0;
                          x(5) = lambda_end;
                          return x;
                        },
                        {}};
  }

  // Flat-disk family, with any other pinned components interpolated.
  double x_start = BoundarySpec::kDefaultEpsilon;
  bc.pinned_value(Endpoint::Start, 0, x_start);
  std::array<double, kStateSize> lo{}, hi{};
  std::array<bool, kStateSize> has_lo{}, has_hi{};
  for (int i = 0; i < kStateSize; ++i) {
    has_lo[i] = bc.pinned_value(Endpoint::Start, i, lo[i]);
    has_hi[i] = bc.pinned_value(Endpoint::End, i, hi[i]);
  }
  return InitialGuess{[=](double u) {
                        const double s = u - a;
                        const double w = s / (b - a);
                        Eigen::VectorXd x(kStateSize);
                        x(0) = area ? std::sqrt(x_start * x_start + 2.0 * s) : x_start + s;
                        x(1) = 0.0;
                        x(2) = 0.0;
                        x(3) = 0.5 * curvature_value(profile, u);
                        x(4) = 0.0;
                        x(5) = lambda_end;
                        for (int i = 1; i < kStateSize; ++i) {
                          if (has_lo[i] && has_hi[i]) {
                            x(i) = (1.0 - w) * lo[i] + w * hi[i];
                          } else if (has_lo[i]) {
                            x(i) = lo[i];
                          } else if (has_hi[i]) {
                            x(i) = hi[i];
                          }
                        }
                        return x;
                      },
                      {}};
}

CollocationSolution solve_bvp(const BvpProblem& problem, const InitialGuess& guess,
                              const Mesh& mesh, const SolverSettings& settings) {
  problem.validate();
  const auto sys = membrane_system(problem);
  return solve_collocation(sys, problem.bc.conditions(), guess, mesh, settings);
}

std::vector<ContinuationStep> continuation_in_c0(const BvpProblem& problem, double c0_start,
                                                 double c0_target, const InitialGuess& guess,
                                                 const Mesh& mesh, const SolverSettings& settings,
                                                 const ContinuationOptions& options) {
  std::vector<ContinuationStep> out;
  auto solve_at = [&](double c0, const InitialGuess& g, const Mesh& m) {
    BvpProblem p = problem;
    p.profile = problem.profile.with_c0(c0);
    try {
      return solve_bvp(p, g, m, settings);
    } catch (const SingularSystemError&) {
      return CollocationSolution{};
    }
  };

  CollocationSolution current = solve_at(c0_start, guess, mesh);
  out.push_back({c0_start, current});
  if (!current.converged) return out;

  const int steps = std::max(1, options.steps);
  double c0_current = c0_start;
  for (int i = 1; i <= steps; ++i) {
    const double c0_next = c0_start + (c0_target - c0_start) * static_cast<double>(i) / steps;
    double increment = c0_next - c0_current;
    int halvings = 0;
    while (c0_current != c0_next) {
      const double trial_c0 =
          std::abs(c0_next - c0_current) <= std::abs(increment) ? c0_next : c0_current + increment;
      CollocationSolution trial =
          solve_at(trial_c0, InitialGuess::from_solution(current), current.mesh());
      if (trial.converged) {
        current = std::move(trial);
        c0_current = trial_c0;
        continue;
      }
      if (++halvings > options.max_halvings) {
        out.push_back({c0_next, std::move(trial)});
        return out;
      }
      increment *= 0.5;
    }
    out.push_back({c0_next, current});
  }
  return out;
}

CollocationSolution solve_by_continuation(const BvpProblem& problem,
                                          const SolverSettings& settings,
                                          const ContinuationOptions& options,
                                          int intervals) {
  problem.validate();
  if (!problem.profile.parametrised()) {
    return solve_bvp(problem, default_initial_guess(problem), default_mesh(problem, intervals),
                     settings);
  }
  const BvpProblem start{problem.formulation, problem.profile.with_c0(0.0), problem.bc,
                         problem.domain_end, problem.kappa_tilde, problem.domain_start};
  auto steps = continuation_in_c0(start, 0.0, problem.profile.c0(), default_initial_guess(start),
                                  default_mesh(start, intervals), settings, options);
  return std::move(steps.back().solution);
}

}  // namespace helfrich
