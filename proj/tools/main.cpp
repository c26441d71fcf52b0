#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "robust_enkf/bundle.hpp"
#include "robust_enkf/config.hpp"
#include "robust_enkf/experiment.hpp"
#include "robust_enkf/riccati.hpp"

using namespace robust_enkf;

namespace {

struct Options {
  std::string config_file;
  std::string pde;
  std::string model;
  std::optional<double> nu, lambda, d0;
  std::string disturbance;
  std::optional<int> trials;
  std::optional<long> seed;
  std::string out = "out";
  bool dump_trials = false;
  std::string gain_file;
  std::string model_file;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_file, "configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--pde", o.pde, "heat or burgers")
      ->check(CLI::IsMember({"heat", "burgers"}));
  cmd->add_option("--model", o.model, "full or dmdc")->check(CLI::IsMember({"full", "dmdc"}));
  cmd->add_option("--nu", o.nu, "viscosity");
  cmd->add_option("--lambda", o.lambda, "robust gain bound");
  cmd->add_option("--d0", o.d0, "disturbance amplitude");
  cmd->add_option("--disturbance", o.disturbance, "sin, const or none")
      ->check(CLI::IsMember({"sin", "const", "none"}));
  cmd->add_option("--trials", o.trials, "number of trials");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_flag("--dump-trials", o.dump_trials, "also write per-trial terminal ratios");
  cmd->add_option("--gain-file", o.gain_file, "reuse a saved gain instead of training")
      ->check(CLI::ExistingFile);
  cmd->add_option("--model-file", o.model_file, "reuse a saved reduced model")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", o.overrides, "section.key=value override (repeatable)");
}

ExperimentConfig resolve(const Options& o) {
  ExperimentConfig cfg;
  if (!o.config_file.empty()) {
    cfg = load_config(o.config_file);
    if (!o.pde.empty()) set_option(cfg, "experiment.pde", o.pde);
  } else {
    cfg = default_config(o.pde == "burgers" ? PdeKind::burgers : PdeKind::heat);
  }
  if (!o.model.empty()) set_option(cfg, "experiment.model", o.model);
  if (o.nu) cfg.nu = *o.nu;
  if (o.lambda) cfg.lambda = *o.lambda;
  if (o.d0) cfg.disturbance.d0 = *o.d0;
  if (!o.disturbance.empty()) cfg.disturbance.kind = parse_disturbance_kind(o.disturbance);
  if (o.trials) cfg.trials = *o.trials;
  if (o.seed) {
    if (*o.seed < 0) throw ConfigError("--seed must be nonnegative");
    cfg.seed = static_cast<std::uint64_t>(*o.seed);
  }
  for (const auto& item : o.overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value");
    set_option(cfg, item.substr(0, eq), item.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

std::optional<ReducedModel> load_model(const Options& o) {
  if (o.model_file.empty()) return std::nullopt;
  return reduced_model_from_bundle(read_bundle(o.model_file));
}

TrainingReport obtain_gain(const ExperimentConfig& cfg, const Plant& plant, const Options& o) {
  auto model = load_model(o);
  if (!o.gain_file.empty()) {
    TrainingReport report;
    report.gain = gain_from_bundle(read_bundle(o.gain_file));
    if (cfg.model == ModelPath::dmdc) {
      if (!model) throw ConfigError("--gain-file with --model dmdc also needs --model-file");
      report.reduction = model->discrete ? to_continuous(*model) : *model;
    }
    return report;
  }
  std::cerr << "training dual EnKF (" << to_string(cfg.pde) << ", " << to_string(cfg.model)
            << ", N = " << cfg.enkf.particles << ")\n";
  TrainingReport report = train_gain(cfg, plant, model);
  std::cerr << "trained: dim " << report.gain.dim() << ", enkf dt "
            << format_double(report.enkf_dt) << ", scale " << format_double(report.scale)
            << '\n';
  return report;
}

std::filesystem::path prepare_out(const Options& o) {
  std::filesystem::path dir(o.out);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_echo(const std::filesystem::path& dir, const ExperimentConfig& cfg) {
  const auto path = dir / "config.echo";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << to_config_text(cfg);
  if (!out.flush()) throw IoError("write failed: " + path.string());
}

int cmd_train(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const Plant plant = make_plant(cfg);
  const TrainingReport report = obtain_gain(cfg, plant, o);
  const auto dir = prepare_out(o);
  write_bundle(dir / "gain.bundle", to_bundle(report.gain));
  if (report.reduction) write_bundle(dir / "model.bundle", to_bundle(*report.reduction));
  write_echo(dir, cfg);
  std::cout << "gain written to " << (dir / "gain.bundle").string() << '\n';
  return 0;
}

int cmd_fit_dmdc(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const Plant plant = make_plant(cfg);
  const ReducedModel model = fit_reduced_model(cfg, plant);
  const auto dir = prepare_out(o);
  write_bundle(dir / "model.bundle", to_bundle(model));
  write_echo(dir, cfg);
  std::cout << "reduced model (n = " << model.n() << ", m = " << model.m()
            << ", max Re eig " << format_double(max_real_eigenvalue(model.A))
            << ") written to " << (dir / "model.bundle").string() << '\n';
  return 0;
}

void report_summary(const std::vector<BatchResult>& batches) {
  for (const auto& b : batches) {
    std::cout << b.policy << " kind=" << to_string(b.kind) << " d0=" << format_double(b.d0)
              << " lambda=" << format_double(b.lambda)
              << " mean_terminal_ratio=" << format_double(b.mean_terminal_ratio())
              << " failures=" << b.failures << '\n';
  }
}

int cmd_batch(const Options& o, bool single) {
  ExperimentConfig cfg = resolve(o);
  if (single) cfg.trials = 1;
  const Plant plant = make_plant(cfg);
  const TrainingReport trained = obtain_gain(cfg, plant, o);
  Results results;
  results.config_text = to_config_text(cfg);
  results.series = run_comparison(cfg, plant, trained);
  results.cells.push_back(results.series[1]);
  if (cfg.lambda != 0.0) results.cells.push_back(results.series[2]);
  emit_results(results, prepare_out(o), o.dump_trials);
  report_summary(results.series);
  return 0;
}

int cmd_grid(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const Plant plant = make_plant(cfg);
  const TrainingReport trained = obtain_gain(cfg, plant, o);
  Results results;
  results.config_text = to_config_text(cfg);
  results.cells = run_grid(cfg, plant, trained);
  emit_results(results, prepare_out(o), o.dump_trials);
  report_summary(results.cells);
  return 0;
}

int cmd_oracle(const Options& o) {
  const ExperimentConfig cfg = resolve(o);
  const Plant plant = make_plant(cfg);
  LtiSystem sys;
  if (cfg.model == ModelPath::dmdc) {
    auto model = load_model(o);
    if (!model) model = fit_reduced_model(cfg, plant);
    if (model->discrete) model = to_continuous(*model);
    sys.A = model->A;
    sys.B = model->B;
  } else {
    const Vec origin = Vec::Zero(plant.sim.state_dim());
    sys.A = linearize_drift(plant.sim, origin);
    sys.B = linearize_input(plant.sim, origin);
  }
  const Eigen::Index n = sys.A.rows();
  sys.C = std::sqrt(cfg.q) * Mat::Identity(n, n);
  sys.R = cfg.r_weight * Mat::Identity(cfg.controls, cfg.controls);
  sys.G = cfg.g * Mat::Identity(n, n);
  const double T = cfg.enkf.horizon > 0.0 ? cfg.enkf.horizon : cfg.horizon;

  Bundle b;
  b.kind = "riccati";
  b.matrices["P_dre"] = solve_dre(sys, T, std::min(cfg.dt, 1e-3));
  b.scalars["horizon"] = T;
  std::cout << "dre trace " << format_double(b.matrices["P_dre"].trace()) << '\n';
  try {
    b.matrices["P_are"] = solve_are(sys);
    std::cout << "are trace " << format_double(b.matrices["P_are"].trace()) << " residual "
              << format_double(are_residual(sys, b.matrices["P_are"])) << '\n';
  } catch (const Error& e) {
    std::cout << "are unavailable: " << e.code() << ": " << e.what() << '\n';
  }
  if (!o.gain_file.empty()) {
    const GainApprox gain = gain_from_bundle(read_bundle(o.gain_file));
    require_dim(gain.dim(), n, "gain file");
    const Mat& P = b.matrices["P_dre"];
    std::cout << "gain relative error vs dre " << format_double((gain.P - P).norm() / P.norm())
              << '\n';
  }
  const auto dir = prepare_out(o);
  write_bundle(dir / "riccati.bundle", b);
  write_echo(dir, cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust stabilisation of discretised PDEs with the dual ensemble Kalman filter"};
  app.require_subcommand(1);
  Options o;
  auto* train = app.add_subcommand("train", "run the dual EnKF and save the gain");
  auto* fit = app.add_subcommand("fit-dmdc", "fit and save a DMDc reduced model");
  auto* simulate = app.add_subcommand("simulate", "one closed-loop trajectory per policy");
  auto* batch = app.add_subcommand("batch", "trial batch for the three policies");
  auto* grid = app.add_subcommand("grid", "mean terminal ratio over the d0 x lambda grid");
  auto* oracle = app.add_subcommand("oracle", "Riccati reference solutions");
  for (auto* cmd : {train, fit, simulate, batch, grid, oracle}) add_common(cmd, o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << '\n';
    return 2;
  }

  try {
    if (train->parsed()) return cmd_train(o);
    if (fit->parsed()) return cmd_fit_dmdc(o);
    if (simulate->parsed()) return cmd_batch(o, true);
    if (batch->parsed()) return cmd_batch(o, false);
    if (grid->parsed()) return cmd_grid(o);
    if (oracle->parsed()) return cmd_oracle(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.code() << ": " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
