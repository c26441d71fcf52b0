#pragma once

#include <functional>
#include <optional>

#include "robust_enkf/common.hpp"
#include "robust_enkf/dual_enkf.hpp"
#include "robust_enkf/reduced_model.hpp"
#include "robust_enkf/simulator.hpp"

namespace robust_enkf {

/// Running cost c(x) + u'Ru and terminal weight G.
struct OptimalControlWeights {
  std::function<double(const Vec&)> running_cost;
  Mat R;
  Mat G;

  // c(x) = x'Qx.
  static OptimalControlWeights quadratic(const Mat& Q, const Mat& R, const Mat& G);

  void validate() const;
};

using DisturbanceBound = std::function<double(double t, const Vec& x)>;

/// lambda bounds the matched disturbance in the state norm |x|_w = sqrt(w x'x).
/// w = 1 is the Euclidean norm; w = dy makes |x|_w the L2 norm of a grid
/// function, and the gradient and its norm are then taken in that inner product.
struct RobustConfig {
  DisturbanceBound lambda;
  double r = 0.002;  // floor on |g|_w in the robust direction
  double norm_weight = 1.0;

  static RobustConfig constant(double lambda, double r, double norm_weight = 1.0);
  void validate() const;
};

enum class InputAccess { known, simulator_only };

/// u = u_bar + u_d, built from a learned gain. With a reduction attached the
/// law acts on x = Phi z and the design simulator is the reduced model's.
struct ControlLaw {
  GainApprox gain;
  OptimalControlWeights weights;
  RobustConfig robust;
  InputAccess input_access = InputAccess::simulator_only;
  std::optional<ReducedModel> reduction;

  void validate() const;
};

// g' S(x,u) + (c(x) + u'Ru) / 2 with g = P x; one simulator call.
double hamiltonian(const ControlLaw& law, const Vec& x, const Vec& u,
                   const Simulator& sim);

/// Minimiser of u -> H(x, u).
///
/// Known input matrix: -R^-1 b(x)' g. Simulator only: coordinate i is
/// -(H(x, R^-1 e_i) - H(x, 0) - (R^-1)_ii / 2), m + 1 Hamiltonian calls.
/// The two agree exactly because H is quadratic in u.
Vec minimize_hamiltonian(const ControlLaw& law, const Vec& x, const Simulator& sim);

// Column j is S(x, e_j) - S(x, 0): m + 1 simulator calls.
Mat estimate_b(const Simulator& sim, const Vec& x, Eigen::Index m);

// -lambda * argmin_v |b v - g_w / max(|g_w|_w, r)| with g_w = g / w. Throws
// RankError when b does not have full column rank.
Vec robust_term(const ControlLaw& law, double t, const Vec& x, const Simulator& sim);

// Full-state entry point: reduces z when the law carries a reduction.
Vec robust_control(const ControlLaw& law, double t, const Vec& z,
                   const Simulator& sim);

}  // namespace robust_enkf
