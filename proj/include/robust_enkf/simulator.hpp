#pragma once

#include <functional>
#include <vector>

#include "robust_enkf/common.hpp"

namespace robust_enkf {

/// Black-box evaluator of an affine-in-control vector field
/// S(x, u) = a(x) + b(x) u.
///
/// Callers that are allowed to see b(x) get it through input_matrix(); a
/// simulator-only view hides it, leaving function evaluations as the sole
/// access path.
class Simulator {
 public:
  using Rhs = std::function<Vec(const Vec& x, const Vec& u)>;
  using InputMatrix = std::function<Mat(const Vec& x)>;

  Simulator(Eigen::Index state_dim, Eigen::Index control_dim, Rhs rhs,
            InputMatrix input_matrix = {});

  Vec operator()(const Vec& x, const Vec& u) const;

  Eigen::Index state_dim() const { return n_; }
  Eigen::Index control_dim() const { return m_; }

  bool discloses_input_matrix() const { return static_cast<bool>(input_matrix_); }
  Mat input_matrix(const Vec& x) const;

  // Same dynamics, b(x) withheld.
  Simulator simulator_only() const;

 private:
  Eigen::Index n_;
  Eigen::Index m_;
  Rhs rhs_;
  InputMatrix input_matrix_;
};

// x' = A x + B u with B disclosed.
Simulator make_linear_simulator(Mat A, Mat B);

enum class Direction { forward, backward };

struct TrajectoryPoint {
  double t;
  Vec x;
};
using Trajectory = std::vector<TrajectoryPoint>;

// One classical RK4 step of length h (h may be negative) with u held fixed.
Vec rk4_step(const Simulator& sim, const Vec& x, const Vec& u, double h);

/// RK4 integration of x' = S(x, u(t)) from t0 to t1.
///
/// Forward requires t1 > t0, backward requires t1 < t0; dt is the positive
/// step magnitude. The last step is shortened so the trajectory ends exactly
/// at t1. Throws BlowUpError when a state stops being finite.
Trajectory integrate(const Simulator& sim, const Vec& x0,
                     const std::function<Vec(double)>& u_fn, double t0,
                     double t1, double dt, Direction direction);

}  // namespace robust_enkf
