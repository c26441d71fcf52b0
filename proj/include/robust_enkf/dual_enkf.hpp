#pragma once

#include <cstdint>
#include <functional>

#include "robust_enkf/common.hpp"
#include "robust_enkf/simulator.hpp"

namespace robust_enkf {

// Dual ensemble Kalman filter: N interacting copies of the system are run
// backward in time from t = T to t = 0. The ensemble covariance at t = 0,
// inverted, approximates the Riccati solution (linear case) or the Hessian
// of the value function in x -> S0^-1 x (nonlinear case).

struct EnkfConfig {
  int N = 1000;         // particle count
  double T = 1.0;       // horizon
  double dt = 1e-3;     // Euler-Maruyama step
  Mat S_T;              // terminal covariance, symmetric positive definite
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate(Eigen::Index n) const;
};

/// Particle states at one time. Column i of Y is particle i.
struct Ensemble {
  Mat Y;
  double t = 0.0;
  std::uint64_t step = 0;  // steps taken since initialisation

  Eigen::Index size() const { return Y.cols(); }
  Eigen::Index dim() const { return Y.rows(); }
};

struct EnsembleStats {
  Vec mean;
  Mat covariance;  // (1/N) sum (Y - mean)(Y - mean)'
};

// N draws from N(0, S_T) via the Cholesky factor of S_T, at t = T.
Ensemble init_ensemble(const EnkfConfig& cfg, Eigen::Index n);

EnsembleStats empirical_stats(const Ensemble& e);

struct LinearDynamics {
  Mat A;  // n x n
  Mat B;  // n x m
  Mat C;  // n1 x n
  Mat R;  // m x m
};

// One backward Euler-Maruyama step of
//   dY = A Y dt + B d(eta) + S C' (C Y + C mean) / 2 dt,
// with eta Brownian with covariance R^-1, taken on the reversed clock.
Ensemble step_linear(const Ensemble& e, const LinearDynamics& model, double dt,
                     std::uint64_t seed);

/// Output map h of the running cost c(x) = |h(x)|^2. For the linear problem
/// h(x) = C x.
using OutputMap = std::function<Vec(const Vec&)>;

// Wraps a scalar running cost as a one-dimensional output, h(x) = [c(x)].
OutputMap scalar_cost_output(std::function<double(const Vec&)> cost);

enum class Innovation {
  averaged,  // (h(Y^i) + mean h) / 2, matching the linear filter
  literal,   // (h(Y^i) + mean h), no averaging factor
};

struct NonlinearOptions {
  Innovation innovation = Innovation::averaged;
};

// One backward step of the particle system driven by S(x,u) = a(x) + b(x)u,
// with cross-covariance gain K = sum_j (Y^j - mean)(h(Y^j) - mean h)' / (N-1).
// a(Y) = S(Y,0) and b(Y) dW = S(Y,dW) - S(Y,0): two simulator calls per particle.
Ensemble step_nonlinear(const Ensemble& e, const Simulator& sim,
                        const OutputMap& h, const Mat& R, double dt,
                        std::uint64_t seed, const NonlinearOptions& options = {});

enum class GainMode { linear, nonlinear };

/// Learned gain: P = S0^-1. In linear mode P approximates the Riccati
/// solution; in nonlinear mode gradient(x) = P x approximates grad phi.
struct GainApprox {
  Mat S0;
  Mat P;
  GainMode mode = GainMode::linear;

  Eigen::Index dim() const { return P.rows(); }
  Vec gradient(const Vec& x) const { return P * x; }
};

// Symmetrise, add 1e-10 I and invert. Throws RankError when S0 is singular.
GainApprox gain_from_covariance(const Mat& S0, GainMode mode);

using StepObserver = std::function<void(const Ensemble&)>;

GainApprox run_dual_enkf_linear(const LinearDynamics& model, const EnkfConfig& cfg,
                                const StepObserver& observer = {});

GainApprox run_dual_enkf_nonlinear(const Simulator& sim, const OutputMap& h,
                                   const Mat& R, const EnkfConfig& cfg,
                                   const NonlinearOptions& options = {},
                                   const StepObserver& observer = {});

}  // namespace robust_enkf
