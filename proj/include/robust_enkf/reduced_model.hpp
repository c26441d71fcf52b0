#pragma once

#include <cstdint>
#include <functional>

#include "robust_enkf/common.hpp"
#include "robust_enkf/rng.hpp"
#include "robust_enkf/simulator.hpp"

namespace robust_enkf {

/// Snapshot triples (x_k, x_{k+1}, u_k), one per column, sampled dt apart.
struct SnapshotData {
  Mat X;
  Mat Xnext;
  Mat U;
  double dt = 0.0;

  Eigen::Index count() const { return X.cols(); }
};

// Zero-mean uniform piecewise-constant inputs in [-amplitude, amplitude].
struct ExcitationPolicy {
  double amplitude = 0.5;
  int hold_steps = 1;
};

using InitialStateSampler = std::function<Vec(StreamRng&)>;

// n_traj trajectories of `steps` RK4 steps each. Trajectory k draws its
// initial state and inputs from StreamRng(seed, k).
SnapshotData collect_snapshots(const Simulator& sim,
                               const InitialStateSampler& initial_state,
                               int n_traj, int steps, double dt,
                               const ExcitationPolicy& excitation,
                               std::uint64_t seed);

/// Linear reduced-order model x' = A x + B u (or x+ = A x + B u when
/// `discrete`), with x = Phi z and z ~ Phi' x. Phi has orthonormal rows.
struct ReducedModel {
  Mat A;
  Mat B;
  Mat Phi;
  double dt_fit = 0.0;
  bool discrete = false;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }
  Eigen::Index full_dim() const { return Phi.cols(); }
};

// DMDc with input-space truncation rank min(n + m, rank [X; U]) and output
// truncation rank n. Returns the discrete-time model.
ReducedModel fit_dmdc(const SnapshotData& data, Eigen::Index n);

// Principal matrix logarithm for A, and B from B_d = (int_0^dt e^{As} ds) B.
ReducedModel to_continuous(const ReducedModel& model);

// Exact zero-order-hold discretisation.
ReducedModel to_discrete(const ReducedModel& model, double dt);

Vec reduce(const ReducedModel& model, const Vec& z);
Vec lift(const ReducedModel& model, const Vec& x);

// Simulator of the continuous-time reduced model, B disclosed.
Simulator reduced_simulator(const ReducedModel& model);

// max |Xnext - (Phi' A_d Phi X + Phi' B_d U)| column norm, relative to
// max |Xnext| column norm.
double one_step_prediction_error(const ReducedModel& discrete_model,
                                 const SnapshotData& data);

}  // namespace robust_enkf
