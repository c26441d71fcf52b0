#pragma once

#include "robust_enkf/common.hpp"
#include "robust_enkf/rng.hpp"
#include "robust_enkf/simulator.hpp"

namespace robust_enkf {

/// Uniform grid of p cell-centred points y_i = (i + 1/2) dy on [0, L].
class GridSpec {
 public:
  GridSpec(int p, double L);

  int p() const { return p_; }
  double length() const { return L_; }
  double dy() const { return L_ / p_; }
  double point(int i) const { return (i + 0.5) * dy(); }
  Vec points() const;

 private:
  int p_;
  double L_;
};

enum class Boundary { periodic, dirichlet };

/// p x m matrix of discretised indicator functions. Column j is the indicator
/// of the half-open cell [j L/m, (j+1) L/m).
struct ControlBasis {
  Mat B;
  Eigen::Index m() const { return B.cols(); }
};

ControlBasis build_control_matrix(const GridSpec& grid, int m);

// nu * D2 z + B u
Vec heat_rhs(const Vec& z, const Vec& u, double nu, const GridSpec& grid,
             const ControlBasis& basis, Boundary bc = Boundary::periodic);

// -z .* D1 z + nu * D2 z + B u, with central differences.
Vec burgers_rhs(const Vec& z, const Vec& u, double nu, const GridSpec& grid,
                const ControlBasis& basis, Boundary bc = Boundary::periodic);

Simulator make_heat_simulator(const GridSpec& grid, double nu,
                              const ControlBasis& basis,
                              Boundary bc = Boundary::periodic);
Simulator make_burgers_simulator(const GridSpec& grid, double nu,
                                 const ControlBasis& basis,
                                 Boundary bc = Boundary::periodic);

// alpha * sech((y - 1/(2L)) / beta) sampled on the grid.
Vec sech_profile(const GridSpec& grid, double alpha, double beta);

// Random bump with alpha ~ U(0.9, 1.1), beta ~ U(0.04, 0.06). Requires L = 1.
Vec sample_initial_condition(StreamRng& rng, const GridSpec& grid);

// Rectangle-rule L2 norm: sqrt(sum z_i^2 dy).
double l2_norm(const Vec& z, const GridSpec& grid);

}  // namespace robust_enkf
