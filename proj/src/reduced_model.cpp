#include "robust_enkf/reduced_model.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>


namespace robust_enkf {

SnapshotData collect_snapshots(const Simulator& sim,
                               const InitialStateSampler& initial_state,
                               int n_traj, int steps, double dt,
                               const ExcitationPolicy& excitation,
                               std::uint64_t seed) {
  if (!(dt > 0.0)) throw InvalidArgument("collect_snapshots: dt must be positive");
  if (n_traj < 1 || steps < 1) {
    throw InvalidArgument("collect_snapshots: need at least one trajectory and step");
  }
  if (excitation.hold_steps < 1) throw InvalidArgument("hold_steps must be >= 1");
  const Eigen::Index n = sim.state_dim();
  const Eigen::Index m = sim.control_dim();
  const Eigen::Index K = static_cast<Eigen::Index>(n_traj) * steps;

  SnapshotData data{Mat(n, K), Mat(n, K), Mat(m, K), dt};
  std::atomic<bool> failed{false};
  std::atomic<int> failed_traj{-1};

#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < n_traj; ++k) {
    if (failed.load()) continue;
    StreamRng rng(seed, static_cast<std::uint64_t>(k));
    Vec x = initial_state(rng);
    Vec u = Vec::Zero(m);
    for (int s = 0; s < steps; ++s) {
      if (s % excitation.hold_steps == 0) {
        for (Eigen::Index j = 0; j < m; ++j) {
          u[j] = excitation.amplitude > 0.0
                     ? rng.uniform(-excitation.amplitude, excitation.amplitude)
                     : 0.0;
        }
      }
      const Vec next = rk4_step(sim, x, u, dt);
      if (!next.allFinite()) {
        failed = true;
        failed_traj = k;
        break;
      }
      const Eigen::Index col = static_cast<Eigen::Index>(k) * steps + s;
      data.X.col(col) = x;
      data.Xnext.col(col) = next;
      data.U.col(col) = u;
      x = next;
    }
  }
  if (failed) {
    throw BlowUpError("snapshot trajectory " + std::to_string(failed_traj.load()) +
                          " became non-finite",
                      0.0);
  }
  return data;
}

namespace {

Eigen::Index numerical_rank(const Eigen::VectorXd& singular_values) {
  if (singular_values.size() == 0 || singular_values[0] <= 0.0) return 0;
  const double tol = 1e-10 * singular_values[0];
  return (singular_values.array() > tol).count();
}

}  // namespace

ReducedModel fit_dmdc(const SnapshotData& data, Eigen::Index n) {
  const Eigen::Index p = data.X.rows();
  const Eigen::Index m = data.U.rows();
  const Eigen::Index K = data.count();
  require_dim(data.Xnext.cols(), K, "Xnext columns");
  require_dim(data.U.cols(), K, "U columns");
  require_dim(data.Xnext.rows(), p, "Xnext rows");
  if (n < 1 || n > p) throw InvalidArgument("reduced dimension must be in [1, p]");

  Mat omega(p + m, K);
  omega.topRows(p) = data.X;
  omega.bottomRows(m) = data.U;

  Eigen::BDCSVD<Mat> svd_in(omega, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::Index rank_in = numerical_rank(svd_in.singularValues());
  if (rank_in < n) {
    throw RankError("stacked snapshot data [X; U] has rank " +
                        std::to_string(rank_in) + " < n = " + std::to_string(n),
                    rank_in);
  }
  const Eigen::Index r = std::min(n + m, rank_in);

  Eigen::BDCSVD<Mat> svd_out(data.Xnext, Eigen::ComputeThinU);
  const Eigen::Index rank_out = numerical_rank(svd_out.singularValues());
  if (rank_out < n) {
    throw RankError("successor snapshots have rank " + std::to_string(rank_out) +
                        " < n = " + std::to_string(n),
                    rank_out);
  }

  const Mat Ut = svd_in.matrixU().leftCols(r);
  const Vec sigma = svd_in.singularValues().head(r);
  const Mat Vt = svd_in.matrixV().leftCols(r);
  const Mat Uhat = svd_out.matrixU().leftCols(n);

  // Xnext V Sigma^-1, shared by both blocks.
  const Mat core = data.Xnext * Vt * sigma.cwiseInverse().asDiagonal();

  ReducedModel model;
  model.Phi = Uhat.transpose();
  model.A = Uhat.transpose() * core * Ut.topRows(p).transpose() * Uhat;
  model.B = Uhat.transpose() * core * Ut.bottomRows(m).transpose();
  model.dt_fit = data.dt;
  model.discrete = true;
  return model;
}

namespace {

// int_0^dt e^{As} ds, the top-right block of exp([[A, I], [0, 0]] dt).
Mat exp_integral(const Mat& A, double dt) {
  const Eigen::Index n = A.rows();
  Mat aug = Mat::Zero(2 * n, 2 * n);
  aug.topLeftCorner(n, n) = A * dt;
  aug.topRightCorner(n, n) = Mat::Identity(n, n) * dt;
  const Mat e = aug.exp();
  return e.topRightCorner(n, n);
}

}  // namespace

ReducedModel to_continuous(const ReducedModel& model) {
  if (!model.discrete) throw InvalidArgument("to_continuous expects a discrete model");
  if (!(model.dt_fit > 0.0)) throw InvalidArgument("model has no sampling step");
  Eigen::EigenSolver<Mat> es(model.A, false);
  for (const auto& lambda : es.eigenvalues()) {
    if (lambda.real() <= 0.0 && std::abs(lambda.imag()) <= 1e-12 * std::abs(lambda)) {
      throw Error("conversion",
                  "discrete dynamics have an eigenvalue on the closed negative real "
                  "axis; no principal logarithm, refit with a smaller dt");
    }
  }
  ReducedModel out = model;
  out.A = model.A.log() / model.dt_fit;
  const Mat W = exp_integral(out.A, model.dt_fit);
  Eigen::FullPivLU<Mat> lu(W);
  if (!lu.isInvertible()) {
    throw Error("conversion", "input integral is singular; refit with a smaller dt");
  }
  out.B = lu.solve(model.B);
  out.discrete = false;
  return out;
}

ReducedModel to_discrete(const ReducedModel& model, double dt) {
  if (model.discrete) throw InvalidArgument("to_discrete expects a continuous model");
  if (!(dt > 0.0)) throw InvalidArgument("to_discrete: dt must be positive");
  ReducedModel out = model;
  out.A = (model.A * dt).exp();
  out.B = exp_integral(model.A, dt) * model.B;
  out.dt_fit = dt;
  out.discrete = true;
  return out;
}

Vec reduce(const ReducedModel& model, const Vec& z) {
  require_dim(z.size(), model.full_dim(), "full state");
  return model.Phi * z;
}

Vec lift(const ReducedModel& model, const Vec& x) {
  require_dim(x.size(), model.n(), "reduced state");
  return model.Phi.transpose() * x;
}

Simulator reduced_simulator(const ReducedModel& model) {
  if (model.discrete) throw InvalidArgument("reduced_simulator needs a continuous model");
  return make_linear_simulator(model.A, model.B);
}

double one_step_prediction_error(const ReducedModel& discrete_model,
                                 const SnapshotData& data) {
  if (!discrete_model.discrete) throw InvalidArgument("expects a discrete model");
  const Mat& Phi = discrete_model.Phi;
  const Mat predicted =
      Phi.transpose() * (discrete_model.A * (Phi * data.X) + discrete_model.B * data.U);
  const double scale = data.Xnext.colwise().norm().maxCoeff();
  const double err = (data.Xnext - predicted).colwise().norm().maxCoeff();
  return scale > 0.0 ? err / scale : err;
}

}  // namespace robust_enkf
