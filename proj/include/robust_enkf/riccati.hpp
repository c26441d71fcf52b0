#pragma once

#include "robust_enkf/common.hpp"

namespace robust_enkf {

// Reference Riccati solvers. These are the exact oracles the particle
// approximations are measured against.

/// x' = A x + B u with running cost |Cx|^2 + u'Ru and terminal weight G.
struct LtiSystem {
  Mat A;  // n x n
  Mat B;  // n x m
  Mat C;  // n1 x n
  Mat R;  // m x m
  Mat G;  // n x n

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index m() const { return B.cols(); }
  Mat Q() const { return C.transpose() * C; }

  // Shapes only; throws DimensionMismatch.
  void check_dims() const;
};

struct StructureReport {
  Eigen::Index controllability_rank = 0;
  Eigen::Index observability_rank = 0;
  bool controllable = false;
  bool observable = false;
};

// Kalman rank tests with SVD tolerance 1e-9 * largest singular value.
StructureReport check_structure(const LtiSystem& sys);

// Throws InvalidArgument unless (A,B) controllable, (A,C) observable and
// R, G positive definite.
void validate(const LtiSystem& sys);

// P(0) of -P' = A'P + PA - P B R^-1 B' P + Q, P(T) = G, by backward RK4.
Mat solve_dre(const LtiSystem& sys, double T, double dt);

struct AreOptions {
  double step_tolerance = 1e-10;
  double max_horizon = 1e5;
  double residual_tolerance = 1e-8;  // relative to |Q|_F
};

// Long-horizon DRE integration followed by Newton-Kleinman refinement.
Mat solve_are(const LtiSystem& sys, const AreOptions& options = {});

// |A'P + PA - P B R^-1 B' P + Q|_F
double are_residual(const LtiSystem& sys, const Mat& P);

// R^-1 B' P. Throws Error("oracle-failure") if A - BK is not Hurwitz.
Mat lqr_gain(const LtiSystem& sys, const Mat& P);

double max_real_eigenvalue(const Mat& M);

// Solves A X + X B = C through complex Schur forms of A and B.
Mat solve_sylvester(const Mat& A, const Mat& B, const Mat& C);

}  // namespace robust_enkf
