#include "robust_enkf/experiment.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <exception>
#include <fstream>
#include <limits>

#include "robust_enkf/rng.hpp"

namespace robust_enkf {

namespace {

constexpr std::uint64_t kTrialStream = std::uint64_t{1} << 40;

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t salt) {
  return detail::splitmix_finalize(seed ^ detail::splitmix_finalize(salt));
}

double spectral_radius(const Mat& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

long step_count(double horizon, double dt) {
  return std::max(1L, std::lround(horizon / dt));
}

Mat weight(double w, Eigen::Index n) { return w * Mat::Identity(n, n); }

}  // namespace

Plant make_plant(const ExperimentConfig& cfg) {
  cfg.validate();
  GridSpec grid(cfg.points, cfg.length);
  ControlBasis basis = build_control_matrix(grid, cfg.controls);
  Simulator sim = cfg.pde == PdeKind::heat
                      ? make_heat_simulator(grid, cfg.nu, basis, cfg.boundary)
                      : make_burgers_simulator(grid, cfg.nu, basis, cfg.boundary);
  return {grid, basis, sim};
}

Mat linearize_drift(const Simulator& sim, const Vec& x, double step) {
  const Eigen::Index n = sim.state_dim();
  require_dim(x.size(), n, "state");
  const Vec u = Vec::Zero(sim.control_dim());
  Mat A(n, n);
  Vec e = x;
  for (Eigen::Index j = 0; j < n; ++j) {
    e[j] = x[j] + step;
    const Vec plus = sim(e, u);
    e[j] = x[j] - step;
    A.col(j) = (plus - sim(e, u)) / (2.0 * step);
    e[j] = x[j];
  }
  return A;
}

Mat linearize_input(const Simulator& sim, const Vec& x) {
  return estimate_b(sim, x, sim.control_dim());
}

double auto_enkf_dt(double dt_sim, const Mat& A) {
  if (!(dt_sim > 0.0)) throw InvalidArgument("dt must be positive");
  const double substeps = std::ceil(dt_sim * spectral_radius(A) / 0.5);
  return dt_sim / std::max(1.0, substeps);
}

Simulator amplitude_scaled(const Simulator& sim, double eps) {
  if (!(eps > 0.0)) throw InvalidArgument("amplitude scale must be positive");
  if (eps == 1.0) return sim.simulator_only();
  return Simulator(sim.state_dim(), sim.control_dim(),
                   [sim, eps](const Vec& x, const Vec& u) -> Vec {
                     return sim(eps * x, eps * u) / eps;
                   });
}

ReducedModel fit_reduced_model(const ExperimentConfig& cfg, const Plant& plant) {
  const GridSpec grid = plant.grid;
  const InitialStateSampler sampler = [grid](StreamRng& rng) {
    return sample_initial_condition(rng, grid);
  };
  const SnapshotData data = collect_snapshots(
      plant.sim, sampler, cfg.dmdc.trajectories, cfg.dmdc.steps, cfg.dt,
      {cfg.dmdc.amplitude, cfg.dmdc.hold}, derived_seed(cfg.seed, 0xD3Dc));
  return to_continuous(fit_dmdc(data, cfg.dmdc.rank));
}

TrainingReport train_gain(const ExperimentConfig& cfg, const Plant& plant,
                          std::optional<ReducedModel> reduction) {
  cfg.validate();
  TrainingReport report;
  report.enkf_horizon = cfg.enkf.horizon > 0.0 ? cfg.enkf.horizon : cfg.horizon;
  const Eigen::Index m = plant.basis.m();
  const Mat R = weight(cfg.r_weight, m);

  EnkfConfig ec;
  ec.N = cfg.enkf.particles;
  ec.T = report.enkf_horizon;
  ec.seed = cfg.seed;

  auto run_linear = [&](const Mat& A, const Mat& B) {
    const Eigen::Index n = A.rows();
    report.enkf_dt = cfg.enkf.dt > 0.0 ? cfg.enkf.dt : auto_enkf_dt(cfg.dt, A);
    ec.dt = report.enkf_dt;
    ec.S_T = (cfg.enkf.terminal_scale / cfg.g) * Mat::Identity(n, n);
    LinearDynamics model{A, B, std::sqrt(cfg.q) * Mat::Identity(n, n), R};
    report.gain = run_dual_enkf_linear(model, ec);
  };

  if (cfg.model == ModelPath::dmdc) {
    if (!reduction) reduction = fit_reduced_model(cfg, plant);
    if (reduction->discrete) reduction = to_continuous(*reduction);
    require_dim(reduction->full_dim(), plant.sim.state_dim(), "reduced model lift");
    require_dim(reduction->m(), m, "reduced model inputs");
    run_linear(reduction->A, reduction->B);
    report.reduction = reduction;
    return report;
  }

  const Eigen::Index p = plant.sim.state_dim();
  const Vec origin = Vec::Zero(p);
  const Simulator black_box = plant.sim.simulator_only();
  const Mat A = linearize_drift(black_box, origin);

  if (cfg.pde == PdeKind::heat) {
    run_linear(A, linearize_input(black_box, origin));
    return report;
  }

  report.enkf_dt = cfg.enkf.dt > 0.0 ? cfg.enkf.dt : auto_enkf_dt(cfg.dt, A);
  ec.dt = report.enkf_dt;
  ec.S_T = (cfg.enkf.terminal_scale / cfg.g) * Mat::Identity(p, p);
  const double q = cfg.q;
  const OutputMap h = cfg.enkf.output == OutputForm::state
                          ? OutputMap([q](const Vec& x) -> Vec { return std::sqrt(q) * x; })
                          : scalar_cost_output([q](const Vec& x) { return q * x.squaredNorm(); });
  NonlinearOptions options{cfg.enkf.innovation};

  auto attempt = [&](double eps) {
    report.scale = eps;
    report.gain = run_dual_enkf_nonlinear(amplitude_scaled(black_box, eps), h, R, ec, options);
  };
  if (cfg.enkf.scale > 0.0) {
    attempt(cfg.enkf.scale);
    return report;
  }
  constexpr int kSmallestExponent = -8;
  std::optional<Mat> previous;
  for (int k = 0; k >= kSmallestExponent; --k) {
    try {
      attempt(std::pow(10.0, k));
    } catch (const BlowUpError&) {
      if (previous || k == kSmallestExponent) throw;
      continue;
    } catch (const RankError&) {
      if (previous || k == kSmallestExponent) throw;
      continue;
    }
    if (previous &&
        (report.gain.P - *previous).norm() <= cfg.enkf.scale_tolerance * previous->norm()) {
      return report;
    }
    previous = report.gain.P;
  }
  throw Error("no-convergence",
              "nonlinear ensemble gain did not settle for any amplitude scale down to 1e" +
                  std::to_string(kSmallestExponent));
}

ControlLaw make_control_law(const ExperimentConfig& cfg, const GainApprox& gain,
                            const std::optional<ReducedModel>& reduction, double lambda) {
  const Eigen::Index n = gain.dim();
  ControlLaw law;
  law.gain = gain;
  law.weights = OptimalControlWeights::quadratic(weight(cfg.q, n),
                                                 weight(cfg.r_weight, cfg.controls),
                                                 weight(cfg.g, n));
  const double w = cfg.robust_metric == RobustMetric::l2 ? cfg.length / cfg.points : 1.0;
  law.robust = RobustConfig::constant(lambda, cfg.r_reg, w);
  law.input_access = cfg.input_access;
  law.reduction = reduction;
  law.validate();
  return law;
}

Simulator design_simulator(const ControlLaw& law, const Plant& plant) {
  Simulator sim = law.reduction ? reduced_simulator(*law.reduction) : plant.sim;
  return law.input_access == InputAccess::known ? sim : sim.simulator_only();
}

DisturbanceFn make_disturbance(const DisturbanceSpec& disturbance, Eigen::Index m) {
  if (!(disturbance.d0 >= 0.0)) throw InvalidArgument("disturbance amplitude must be nonnegative");
  Vec shape = Vec::Ones(m);
  if (!disturbance.profile.empty()) {
    require_dim(static_cast<Eigen::Index>(disturbance.profile.size()), m, "disturbance profile");
    shape = Eigen::Map<const Vec>(disturbance.profile.data(), m);
  }
  const Vec base = disturbance.d0 * shape;
  switch (disturbance.kind) {
    case DisturbanceKind::none:
      return [m](double) -> Vec { return Vec::Zero(m); };
    case DisturbanceKind::constant:
      return [base](double) -> Vec { return base; };
    case DisturbanceKind::sinusoidal:
      return [base](double t) -> Vec { return std::sin(t) * base; };
  }
  throw InvalidArgument("unknown disturbance kind");
}

TrialResult simulate_closed_loop(const ExperimentConfig& cfg, const Plant& plant,
                                 const ControlLaw* law, const DisturbanceFn& d,
                                 const Vec& z0) {
  require_dim(z0.size(), plant.sim.state_dim(), "initial state");
  const long steps = step_count(cfg.horizon, cfg.dt);
  const double dt = cfg.dt;
  const std::optional<Simulator> design =
      law ? std::optional<Simulator>(design_simulator(*law, plant)) : std::nullopt;
  const Vec zero_u = Vec::Zero(plant.basis.m());

  TrialResult out;
  out.l2.reserve(steps + 1);
  out.l2.push_back(l2_norm(z0, plant.grid));
  Vec z = z0;
  for (long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const Vec u = design ? robust_control(*law, t, z, *design) : zero_u;
    auto f = [&](double s, const Vec& x) { return plant.sim(x, u + d(s)); };
    const Vec k1 = f(t, z);
    const Vec k2 = f(t + 0.5 * dt, z + 0.5 * dt * k1);
    const Vec k3 = f(t + 0.5 * dt, z + 0.5 * dt * k2);
    const Vec k4 = f(t + dt, z + dt * k3);
    z += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!z.allFinite()) {
      out.failed = true;
      out.terminal_ratio = std::numeric_limits<double>::infinity();
      return out;
    }
    out.l2.push_back(l2_norm(z, plant.grid));
  }
  out.terminal_ratio = out.l2.back() / out.l2.front();
  return out;
}

Vec trial_initial_condition(const ExperimentConfig& cfg, const GridSpec& grid, int trial) {
  StreamRng rng(cfg.seed, kTrialStream, static_cast<std::uint64_t>(trial));
  return sample_initial_condition(rng, grid);
}

double BatchResult::mean_terminal_ratio() const {
  if (ratios.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double r : ratios) s += r;
  return s / static_cast<double>(ratios.size());
}

double BatchResult::transient_mean(double t_end) const {
  double s = 0.0;
  long count = 0;
  for (std::size_t k = 0; k < times.size() && k < mean.size(); ++k) {
    if (times[k] < t_end) {
      s += mean[k];
      ++count;
    }
  }
  return count ? s / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

BatchResult run_trial_batch(const ExperimentConfig& cfg, const Plant& plant,
                            const ControlLaw* law, const std::string& policy) {
  if (cfg.trials < 1) throw InvalidArgument("trial count must be at least 1");
  const DisturbanceFn d = make_disturbance(cfg.disturbance, plant.basis.m());
  std::vector<TrialResult> trials(cfg.trials);
  std::exception_ptr error;

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < cfg.trials; ++i) {
    try {
      trials[i] = simulate_closed_loop(cfg, plant, law, d,
                                       trial_initial_condition(cfg, plant.grid, i));
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  BatchResult out;
  out.policy = policy;
  out.kind = cfg.disturbance.kind;
  out.d0 = cfg.disturbance.d0;
  out.lambda = law ? law->robust.lambda(0.0, Vec()) : 0.0;
  const long steps = step_count(cfg.horizon, cfg.dt);
  out.times.resize(steps + 1);
  for (long k = 0; k <= steps; ++k) out.times[k] = static_cast<double>(k) * cfg.dt;

  std::vector<double> sum(steps + 1, 0.0), sq(steps + 1, 0.0);
  int finished = 0;
  for (const auto& tr : trials) {
    out.ratios.push_back(tr.terminal_ratio);
    if (tr.failed) {
      ++out.failures;
      continue;
    }
    ++finished;
    for (long k = 0; k <= steps; ++k) sum[k] += tr.l2[k];
  }
  out.mean.assign(steps + 1, std::numeric_limits<double>::quiet_NaN());
  out.variance = out.mean;
  if (finished == 0) return out;
  for (long k = 0; k <= steps; ++k) out.mean[k] = sum[k] / finished;
  for (const auto& tr : trials) {
    if (tr.failed) continue;
    for (long k = 0; k <= steps; ++k) {
      const double dev = tr.l2[k] - out.mean[k];
      sq[k] += dev * dev;
    }
  }
  for (long k = 0; k <= steps; ++k) out.variance[k] = sq[k] / finished;
  return out;
}

std::vector<BatchResult> run_comparison(const ExperimentConfig& cfg, const Plant& plant,
                                        const TrainingReport& trained) {
  const ControlLaw optimal = make_control_law(cfg, trained.gain, trained.reduction, 0.0);
  const ControlLaw robust = make_control_law(cfg, trained.gain, trained.reduction, cfg.lambda);
  std::vector<BatchResult> out;
  out.push_back(run_trial_batch(cfg, plant, nullptr, "uncontrolled"));
  out.push_back(run_trial_batch(cfg, plant, &optimal, "optimal"));
  out.push_back(run_trial_batch(cfg, plant, &robust, "robust"));
  return out;
}

std::vector<BatchResult> run_grid(const ExperimentConfig& cfg, const Plant& plant,
                                  const TrainingReport& trained) {
  if (cfg.grid.kinds.empty() || cfg.grid.d0_list.empty() || cfg.grid.lambda_list.empty()) {
    throw InvalidArgument("grid lists must be nonempty");
  }
  std::vector<BatchResult> out;
  for (DisturbanceKind kind : cfg.grid.kinds) {
    for (double d0 : cfg.grid.d0_list) {
      ExperimentConfig cell = cfg;
      cell.disturbance.kind = kind;
      cell.disturbance.d0 = d0;
      for (double lambda : cfg.grid.lambda_list) {
        const ControlLaw law = make_control_law(cell, trained.gain, trained.reduction, lambda);
        out.push_back(run_trial_batch(cell, plant, &law, lambda == 0.0 ? "optimal" : "robust"));
      }
    }
  }
  return out;
}

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void emit_results(const Results& results, const std::filesystem::path& out_dir,
                  bool dump_trials) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  {
    const auto path = out_dir / "timeseries.csv";
    auto out = open_output(path);
    out << "policy,t,mean,variance\n";
    for (const auto& b : results.series) {
      for (std::size_t k = 0; k < b.times.size(); ++k) {
        out << b.policy << ',' << format_double(b.times[k]) << ','
            << format_double(b.mean[k]) << ',' << format_double(b.variance[k]) << '\n';
      }
    }
    finish(out, path);
  }
  {
    const auto path = out_dir / "summary.csv";
    auto out = open_output(path);
    out << "policy,kind,d0,lambda,mean_terminal_ratio,failures\n";
    for (const auto& b : results.series) {
      out << b.policy << ',' << to_string(b.kind) << ',' << format_double(b.d0) << ','
          << format_double(b.lambda) << ',' << format_double(b.mean_terminal_ratio()) << ','
          << b.failures << '\n';
    }
    finish(out, path);
  }
  {
    const auto path = out_dir / "heatmap.csv";
    auto out = open_output(path);
    out << "kind,d0,lambda,mean_terminal_ratio\n";
    for (const auto& b : results.cells) {
      out << to_string(b.kind) << ',' << format_double(b.d0) << ','
          << format_double(b.lambda) << ',' << format_double(b.mean_terminal_ratio()) << '\n';
    }
    finish(out, path);
  }
  {
    const auto path = out_dir / "config.echo";
    auto out = open_output(path);
    out << results.config_text;
    finish(out, path);
  }
  if (dump_trials) {
    const auto path = out_dir / "trials.csv";
    auto out = open_output(path);
    out << "table,policy,kind,d0,lambda,trial,terminal_ratio\n";
    auto dump = [&](const char* table, const std::vector<BatchResult>& batches) {
      for (const auto& b : batches) {
        for (std::size_t i = 0; i < b.ratios.size(); ++i) {
          out << table << ',' << b.policy << ',' << to_string(b.kind) << ','
              << format_double(b.d0) << ',' << format_double(b.lambda) << ',' << i << ','
              << format_double(b.ratios[i]) << '\n';
        }
      }
    };
    dump("summary", results.series);
    dump("heatmap", results.cells);
    finish(out, path);
  }
}

}  // namespace robust_enkf
