#pragma once

// Command-line front end: run configurations, presets and the four commands.
//
// Exit statuses: 0 success, 1 configuration error, 2 numerical
// non-convergence, 3 failed verification.

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "helfrich/collocation.hpp"
#include "helfrich/model.hpp"

namespace helfrich::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNoConvergence = 2;
inline constexpr int kExitCheckFailed = 3;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every field is addressable as a dotted key (see apply_setting).
struct RunConfig {
  FormulationKind formulation = FormulationKind::ArcLength;
  CurvatureKind curvature = CurvatureKind::TypeI;
  double c0 = 0.0;
  double gamma = 1.0;
  double u0 = 1.0;
  double r0 = 1.0;
  double const_value = 0.0;
  // Dimensional alternatives, converted in to_problem().
  std::optional<double> xi;
  std::optional<double> s0;
  std::optional<double> a0;
  std::optional<double> lambda0;
  std::optional<double> kappa0;

  BoundaryKind bc = BoundaryKind::TypeI;
  double theta = 0.0;
  double lambda_tilde0 = 0.0;
  double epsilon = BoundarySpec::kDefaultEpsilon;
  double kappa_tilde = 1.0;
  double domain_end = 1.0;

  int mesh_intervals = 200;
  SolverSettings solver = [] {
    SolverSettings s;
    s.refine = true;
    s.refine_tol = 1e-6;
    return s;
  }();
  int continuation_steps = 20;
  int max_halvings = 12;

  double sweep_c0_min = 0.0;
  double sweep_c0_max = 0.0;
  int sweep_points = 21;

  std::string sensitivity_parameter = "all";
  std::string sensitivity_method = "both";
  bool experimental_adjoint = false;

  std::string check_which = "jacobians";
  std::vector<double> check_eta{0.5, 2.0, 5.0};

  std::string output_dir = ".";
  std::string output_format = "csv";
};

/// Names: table1, table2, table3, table4. Throws ConfigError otherwise.
RunConfig preset(const std::string& name);

/// Set one dotted key from its text value. Throws ConfigError on an unknown
/// key or a malformed value.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// `key = value` lines; blank lines and lines starting with '#' are skipped.
void apply_config_text(RunConfig& config, const std::string& text);
void apply_config_file(RunConfig& config, const std::string& path);

/// Validate and build the problem. Throws ConfigError.
BvpProblem to_problem(const RunConfig& config);

/// C0 grid of the sweep: sweep_points values from sweep_c0_min to sweep_c0_max.
std::vector<double> sweep_grid(const RunConfig& config);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Comma-separated, 17 significant digits, '\n' line ends.
std::string format_csv(const Table& table);
/// Throws ConfigError on a malformed file.
Table parse_csv(const std::string& text);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv);

}  // namespace helfrich::cli
