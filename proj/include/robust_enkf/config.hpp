#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "robust_enkf/common.hpp"
#include "robust_enkf/controller.hpp"
#include "robust_enkf/dual_enkf.hpp"
#include "robust_enkf/pde_sim.hpp"

namespace robust_enkf {

enum class PdeKind { heat, burgers };
enum class ModelPath { full, dmdc };
enum class DisturbanceKind { none, constant, sinusoidal };
enum class RobustMetric {
  euclidean,  // disturbance bound in the Euclidean norm of the grid vector
  l2,         // disturbance bound in the L2 norm of the grid function
};
enum class OutputForm {
  state,        // h(x) = sqrt(q) x, so c(x) = q |x|^2
  scalar_cost,  // h(x) = [q |x|^2]
};

struct DisturbanceSpec {
  DisturbanceKind kind = DisturbanceKind::none;
  double d0 = 0.0;
  std::vector<double> profile;  // per-channel weights; empty means all ones
};

struct EnkfSettings {
  int particles = 1000;
  double horizon = 0.0;         // 0: use the simulation horizon
  double dt = 0.0;              // 0: derived from the stiffness of the design model
  double terminal_scale = 1.0;  // S_T = terminal_scale * G^-1
  Innovation innovation = Innovation::averaged;
  OutputForm output = OutputForm::state;
  // Amplitude scale of the nonlinear ensemble. 0 starts at the largest power
  // of ten (from 1) for which the particle system stays finite and shrinks it
  // tenfold until successive gains agree within scale_tolerance (relative
  // Frobenius distance).
  double scale = 0.0;
  double scale_tolerance = 0.15;
};

struct DmdcSettings {
  int rank = 10;
  int trajectories = 20;
  int steps = 1000;
  double amplitude = 0.5;
  int hold = 1;
};

struct GridStudy {
  std::vector<double> d0_list{0.0, 0.05, 0.1, 0.2};
  std::vector<double> lambda_list{0.0, 0.1, 0.2, 0.4};
  std::vector<DisturbanceKind> kinds{DisturbanceKind::sinusoidal,
                                     DisturbanceKind::constant};
};

struct ExperimentConfig {
  PdeKind pde = PdeKind::heat;
  ModelPath model = ModelPath::full;
  double nu = 0.002;
  int points = 100;
  double length = 1.0;
  int controls = 8;
  Boundary boundary = Boundary::periodic;

  double q = 1.0;  // Q = q I
  double r_weight = 1.0;  // R = r_weight I
  double g = 1.0;  // G = g I

  double lambda = 0.2;
  double r_reg = 0.002;
  InputAccess input_access = InputAccess::simulator_only;
  RobustMetric robust_metric = RobustMetric::l2;

  EnkfSettings enkf;
  DmdcSettings dmdc;
  DisturbanceSpec disturbance{DisturbanceKind::constant, 0.1, {}};
  GridStudy grid;

  double horizon = 0.1;  // T_sim
  double dt = 1e-3;      // dt_sim
  int trials = 100;
  std::uint64_t seed = 1;

  void validate() const;
};

// Default experiment settings for each PDE.
ExperimentConfig default_config(PdeKind pde);

// Strict "[section]" / "key = value" parser; unknown keys are errors. The
// experiment.pde key, when present, selects the defaults the remaining keys
// override.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Every key, fully resolved; parse_config(to_config_text(c)) reproduces c.
std::string to_config_text(const ExperimentConfig& cfg);

// Single-key override used by the CLI, e.g. set_option(cfg, "robust.lambda", "0.2").
void set_option(ExperimentConfig& cfg, const std::string& section_key,
                const std::string& value);

std::string to_string(PdeKind v);
std::string to_string(ModelPath v);
std::string to_string(DisturbanceKind v);
DisturbanceKind parse_disturbance_kind(const std::string& s);

std::string format_double(double v);

}  // namespace robust_enkf
