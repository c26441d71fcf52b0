#include "robust_enkf/dual_enkf.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

#include "robust_enkf/rng.hpp"

namespace robust_enkf {

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr double kJitter = 1e-10;

Mat cholesky_factor(const Mat& M, const char* what) {
  Eigen::LLT<Mat> llt(0.5 * (M + M.transpose()));
  if (llt.info() != Eigen::Success) {
    throw ConfigError(std::string(what) + " is not symmetric positive definite");
  }
  return llt.matrixL();
}

// Column i holds particle i's increment, N(0, cov dt) with cov = L L'.
Mat brownian_increments(const Mat& L, Eigen::Index N, double dt,
                        std::uint64_t seed, std::uint64_t step) {
  const Eigen::Index m = L.rows();
  Mat xi(m, N);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < N; ++i) {
    StreamRng rng(seed, step + 1, static_cast<std::uint64_t>(i));
    for (Eigen::Index k = 0; k < m; ++k) xi(k, i) = rng.normal();
  }
  return std::sqrt(dt) * (L * xi);
}

void check_finite(const Ensemble& e) {
  if (!e.Y.allFinite()) {
    throw BlowUpError("dual EnKF particle diverged at t = " + std::to_string(e.t), e.t);
  }
}

}  // namespace

void EnkfConfig::validate(Eigen::Index n) const {
  if (N < 2) throw ConfigError("EnKF needs N >= 2 particles");
  if (!(T > 0.0)) throw ConfigError("EnKF horizon must be positive");
  if (!(dt > 0.0 && dt < T)) throw ConfigError("EnKF step must satisfy 0 < dt < T");
  if (S_T.rows() != n || S_T.cols() != n) {
    throw ConfigError("terminal covariance must be " + std::to_string(n) + "x" +
                      std::to_string(n));
  }
  if ((S_T - S_T.transpose()).norm() > 1e-12 * std::max(1.0, S_T.norm())) {
    throw ConfigError("terminal covariance is not symmetric");
  }
  cholesky_factor(S_T, "terminal covariance");
}

Ensemble init_ensemble(const EnkfConfig& cfg, Eigen::Index n) {
  cfg.validate(n);
  const Mat L = cholesky_factor(cfg.S_T, "terminal covariance");
  Mat xi(n, cfg.N);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < cfg.N; ++i) {
    StreamRng rng(cfg.seed, kInitStream, static_cast<std::uint64_t>(i));
    for (Eigen::Index k = 0; k < n; ++k) xi(k, i) = rng.normal();
  }
  return {L * xi, cfg.T, 0};
}

EnsembleStats empirical_stats(const Ensemble& e) {
  const auto N = static_cast<double>(e.size());
  EnsembleStats s;
  s.mean = e.Y.rowwise().mean();
  const Mat dev = e.Y.colwise() - s.mean;
  s.covariance = (dev * dev.transpose()) / N;
  return s;
}

Ensemble step_linear(const Ensemble& e, const LinearDynamics& model, double dt,
                     std::uint64_t seed) {
  const Eigen::Index n = e.dim();
  require_dim(model.A.rows(), n, "A rows");
  require_dim(model.A.cols(), n, "A cols");
  require_dim(model.B.rows(), n, "B rows");
  require_dim(model.C.cols(), n, "C cols");
  require_dim(model.R.rows(), model.B.cols(), "R rows");
  if (e.t - dt < -1e-12 * std::max(1.0, e.t)) {
    throw InvalidArgument("step_linear would step past t = 0");
  }

  const EnsembleStats stats = empirical_stats(e);
  const Mat gain = stats.covariance * (model.C.transpose() * model.C);

  Ensemble next;
  next.Y = e.Y - dt * (model.A * e.Y) -
           (0.5 * dt) * (gain * (e.Y.colwise() + stats.mean));
  if (model.B.cols() > 0) {
    const Mat L = cholesky_factor(model.R.inverse(), "R^-1");
    next.Y += model.B * brownian_increments(L, e.size(), dt, seed, e.step);
  }
  next.t = e.t - dt;
  next.step = e.step + 1;
  check_finite(next);
  return next;
}

OutputMap scalar_cost_output(std::function<double(const Vec&)> cost) {
  return [cost = std::move(cost)](const Vec& x) {
    Vec out(1);
    out[0] = cost(x);
    return out;
  };
}

Ensemble step_nonlinear(const Ensemble& e, const Simulator& sim,
                        const OutputMap& h, const Mat& R, double dt,
                        std::uint64_t seed, const NonlinearOptions& options) {
  const Eigen::Index n = e.dim();
  const Eigen::Index N = e.size();
  const Eigen::Index m = sim.control_dim();
  require_dim(sim.state_dim(), n, "simulator state");
  require_dim(R.rows(), m, "R rows");
  if (e.t - dt < -1e-12 * std::max(1.0, e.t)) {
    throw InvalidArgument("step_nonlinear would step past t = 0");
  }

  // Phase 1: frozen statistics of the current ensemble.
  const Vec mean = e.Y.rowwise().mean();
  const Eigen::Index n1 = h(e.Y.col(0)).size();
  Mat H(n1, N);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < N; ++i) H.col(i) = h(e.Y.col(i));
  const Vec h_mean = H.rowwise().mean();
  const Mat K = ((e.Y.colwise() - mean) * (H.colwise() - h_mean).transpose()) /
                static_cast<double>(N - 1);
  const double innovation_scale = options.innovation == Innovation::averaged ? 0.5 : 1.0;
  const Mat coupling = K * (innovation_scale * (H.colwise() + h_mean));

  Mat dW = Mat::Zero(m, N);
  if (m > 0) {
    const Mat L = cholesky_factor(R.inverse(), "R^-1");
    dW = brownian_increments(L, N, dt, seed, e.step);
  }

  // Phase 2: independent particle updates.
  Ensemble next;
  next.Y.resize(n, N);
  const Vec zero_u = Vec::Zero(m);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < N; ++i) {
    const Vec y = e.Y.col(i);
    const Vec drift = sim(y, zero_u);
    Vec diffusion = Vec::Zero(n);
    if (m > 0) diffusion = sim(y, dW.col(i)) - drift;
    next.Y.col(i) = y - dt * drift + diffusion - dt * coupling.col(i);
  }
  next.t = e.t - dt;
  next.step = e.step + 1;
  check_finite(next);
  return next;
}

GainApprox gain_from_covariance(const Mat& S0, GainMode mode) {
  const Mat S = 0.5 * (S0 + S0.transpose());
  const Eigen::Index n = S.rows();
  Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(hi > 0.0) || !(lo > 1e-12 * hi)) {
    const auto rank = (es.eigenvalues().array() > 1e-12 * std::max(hi, 0.0)).count();
    throw RankError("ensemble covariance at t = 0 is singular (numerical rank " +
                        std::to_string(rank) + " of " + std::to_string(n) +
                        "); increase N or the jitter",
                    rank);
  }
  const Mat regularized = S + kJitter * Mat::Identity(n, n);
  Eigen::LLT<Mat> llt(regularized);
  if (llt.info() != Eigen::Success) {
    throw RankError("ensemble covariance is not positive definite", 0);
  }
  Mat P = llt.solve(Mat::Identity(n, n));
  P = 0.5 * (P + P.transpose());
  return {S, P, mode};
}

namespace {

template <typename Step>
GainApprox run_backward(Ensemble e, const EnkfConfig& cfg, GainMode mode, Step&& step,
                        const StepObserver& observer) {
  const auto N = static_cast<Eigen::Index>(cfg.N);
  if (N - 1 < e.dim()) {
    throw RankError("N = " + std::to_string(N) + " particles cannot span " +
                        std::to_string(e.dim()) + " dimensions; increase N",
                    N - 1);
  }
  const auto steps = static_cast<long>(std::ceil(cfg.T / cfg.dt - 1e-9));
  if (observer) observer(e);
  for (long k = 1; k <= steps; ++k) {
    const double t_next = k == steps ? 0.0 : cfg.T - static_cast<double>(k) * cfg.dt;
    e = step(e, e.t - t_next);
    e.t = t_next;
    if (observer) observer(e);
  }
  return gain_from_covariance(empirical_stats(e).covariance, mode);
}

}  // namespace

GainApprox run_dual_enkf_linear(const LinearDynamics& model, const EnkfConfig& cfg,
                                const StepObserver& observer) {
  Ensemble e = init_ensemble(cfg, model.A.rows());
  return run_backward(
      std::move(e), cfg, GainMode::linear,
      [&](const Ensemble& cur, double h) { return step_linear(cur, model, h, cfg.seed); },
      observer);
}

GainApprox run_dual_enkf_nonlinear(const Simulator& sim, const OutputMap& h,
                                   const Mat& R, const EnkfConfig& cfg,
                                   const NonlinearOptions& options,
                                   const StepObserver& observer) {
  Ensemble e = init_ensemble(cfg, sim.state_dim());
  return run_backward(
      std::move(e), cfg, GainMode::nonlinear,
      [&](const Ensemble& cur, double step) {
        return step_nonlinear(cur, sim, h, R, step, cfg.seed, options);
      },
      observer);
}

}  // namespace robust_enkf
