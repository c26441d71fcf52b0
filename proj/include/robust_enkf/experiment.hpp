#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "robust_enkf/config.hpp"
#include "robust_enkf/controller.hpp"
#include "robust_enkf/dual_enkf.hpp"
#include "robust_enkf/pde_sim.hpp"
#include "robust_enkf/reduced_model.hpp"

namespace robust_enkf {

/// The discretised PDE the experiments control.
struct Plant {
  GridSpec grid;
  ControlBasis basis;
  Simulator sim;  // input matrix disclosed
};

Plant make_plant(const ExperimentConfig& cfg);

// Jacobian of S(., 0) at x by central differences.
Mat linearize_drift(const Simulator& sim, const Vec& x, double step = 1e-6);

// B of the linearisation at x: S(x, e_j) - S(x, 0) (exact for affine systems).
Mat linearize_input(const Simulator& sim, const Vec& x);

// EnKF step: dt_sim divided into enough substeps that dt * rho(A) <= 1/2.
double auto_enkf_dt(double dt_sim, const Mat& A);

// S_eps(x, u) = S(eps x, eps u) / eps. The linear part is unchanged and the
// quadratic part shrinks by eps.
Simulator amplitude_scaled(const Simulator& sim, double eps);

struct TrainingReport {
  GainApprox gain;
  std::optional<ReducedModel> reduction;  // continuous-time model, dmdc path only
  double enkf_dt = 0.0;
  double enkf_horizon = 0.0;
  double scale = 1.0;  // amplitude scale used by the nonlinear ensemble
};

// Snapshots of the plant under random inputs, DMDc fit of rank cfg.dmdc.rank,
// converted to continuous time.
ReducedModel fit_reduced_model(const ExperimentConfig& cfg, const Plant& plant);

/// Runs the dual EnKF for the configured model path.
///
/// heat/full: linear filter on the linearisation read off the simulator.
/// burgers/full: nonlinear filter on the amplitude-scaled simulator.
/// dmdc: linear filter on `reduction` (fitted here when absent).
TrainingReport train_gain(const ExperimentConfig& cfg, const Plant& plant,
                          std::optional<ReducedModel> reduction = std::nullopt);

ControlLaw make_control_law(const ExperimentConfig& cfg, const GainApprox& gain,
                            const std::optional<ReducedModel>& reduction, double lambda);

// The simulator the law queries: the reduced model's or the plant's, with the
// input matrix hidden for simulator-only access.
Simulator design_simulator(const ControlLaw& law, const Plant& plant);

using DisturbanceFn = std::function<Vec(double t)>;

// d0 sin(t) 1, d0 1 or 0, scaled channel-wise by disturbance.profile when given.
DisturbanceFn make_disturbance(const DisturbanceSpec& disturbance, Eigen::Index m);

struct TrialResult {
  std::vector<double> l2;  // l2[k] at t = k dt_sim
  double terminal_ratio = 0.0;
  bool failed = false;
};

/// Closed loop with U(t) = u(t_k) + d(t) on [t_k, t_k + dt). A null law gives
/// the uncontrolled system. Non-finite states end the trial with an infinite
/// ratio.
TrialResult simulate_closed_loop(const ExperimentConfig& cfg, const Plant& plant,
                                 const ControlLaw* law, const DisturbanceFn& d,
                                 const Vec& z0);

Vec trial_initial_condition(const ExperimentConfig& cfg, const GridSpec& grid, int trial);

struct BatchResult {
  std::string policy;  // uncontrolled, optimal or robust
  DisturbanceKind kind = DisturbanceKind::none;
  double d0 = 0.0;
  double lambda = 0.0;
  std::vector<double> times;
  std::vector<double> mean;      // over finished trials
  std::vector<double> variance;  // population variance over finished trials
  std::vector<double> ratios;    // per trial, infinite for failures
  int failures = 0;

  double mean_terminal_ratio() const;
  // Time average of `mean` over t < t_end.
  double transient_mean(double t_end) const;
};

// cfg.trials closed loops from trial_initial_condition under cfg.disturbance.
BatchResult run_trial_batch(const ExperimentConfig& cfg, const Plant& plant,
                            const ControlLaw* law, const std::string& policy);

// Uncontrolled, optimal (lambda = 0) and robust (lambda = cfg.lambda) batches.
std::vector<BatchResult> run_comparison(const ExperimentConfig& cfg, const Plant& plant,
                                        const TrainingReport& trained);

// One batch per (kind, d0, lambda), all sharing the trained gain.
std::vector<BatchResult> run_grid(const ExperimentConfig& cfg, const Plant& plant,
                                  const TrainingReport& trained);

struct Results {
  std::vector<BatchResult> series;  // timeseries.csv, summary.csv
  std::vector<BatchResult> cells;   // heatmap.csv
  std::string config_text;          // config.echo
};

// Writes timeseries.csv, heatmap.csv, summary.csv and config.echo, plus
// trials.csv when dump_trials is set. Throws IoError.
void emit_results(const Results& results, const std::filesystem::path& out_dir,
                  bool dump_trials);

}  // namespace robust_enkf
