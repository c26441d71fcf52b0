#include "robust_enkf/riccati.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

namespace robust_enkf {

void LtiSystem::check_dims() const {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || n == 0) throw DimensionMismatch("A must be square and non-empty");
  require_dim(B.rows(), n, "B rows");
  require_dim(C.cols(), n, "C cols");
  require_dim(R.rows(), B.cols(), "R rows");
  require_dim(R.cols(), B.cols(), "R cols");
  require_dim(G.rows(), n, "G rows");
  require_dim(G.cols(), n, "G cols");
}

namespace {

Eigen::Index numerical_rank(const Mat& M) {
  if (M.size() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(M);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  const double tol = 1e-9 * s[0];
  return (s.array() > tol).count();
}

bool is_positive_definite(const Mat& M) {
  if (M.rows() != M.cols()) return false;
  if (!M.isApprox(M.transpose(), 1e-10) && (M - M.transpose()).norm() > 1e-12) {
    return false;
  }
  Eigen::LLT<Mat> llt(0.5 * (M + M.transpose()));
  return llt.info() == Eigen::Success;
}

Mat input_weight(const LtiSystem& sys) {
  // B R^-1 B'
  return sys.B * sys.R.ldlt().solve(sys.B.transpose());
}

Mat riccati_rate(const Mat& A, const Mat& S, const Mat& Q, const Mat& P) {
  return A.transpose() * P + P * A - P * S * P + Q;
}

Mat symmetrize(const Mat& P) { return 0.5 * (P + P.transpose()); }

}  // namespace

StructureReport check_structure(const LtiSystem& sys) {
  sys.check_dims();
  const Eigen::Index n = sys.n();
  Mat ctrb(n, n * sys.m());
  Mat obsv(n * sys.C.rows(), n);
  Mat AkB = sys.B;
  Mat CAk = sys.C;
  for (Eigen::Index k = 0; k < n; ++k) {
    ctrb.middleCols(k * sys.m(), sys.m()) = AkB;
    obsv.middleRows(k * sys.C.rows(), sys.C.rows()) = CAk;
    AkB = sys.A * AkB;
    CAk = CAk * sys.A;
  }
  StructureReport report;
  report.controllability_rank = numerical_rank(ctrb);
  report.observability_rank = numerical_rank(obsv);
  report.controllable = report.controllability_rank == n;
  report.observable = report.observability_rank == n;
  return report;
}

void validate(const LtiSystem& sys) {
  const auto report = check_structure(sys);
  if (!report.controllable) {
    throw InvalidArgument("(A,B) is not controllable: Kalman rank " +
                          std::to_string(report.controllability_rank) + " < " +
                          std::to_string(sys.n()));
  }
  if (!report.observable) {
    throw InvalidArgument("(A,C) is not observable: Kalman rank " +
                          std::to_string(report.observability_rank) + " < " +
                          std::to_string(sys.n()));
  }
  if (!is_positive_definite(sys.R)) throw InvalidArgument("R is not positive definite");
  if (!is_positive_definite(sys.G)) throw InvalidArgument("G is not positive definite");
}

Mat solve_dre(const LtiSystem& sys, double T, double dt) {
  sys.check_dims();
  if (!(dt > 0.0)) throw InvalidArgument("solve_dre: dt must be positive");
  if (!(T >= 0.0)) throw InvalidArgument("solve_dre: horizon must be nonnegative");
  const Mat S = input_weight(sys);
  const Mat Q = sys.Q();
  const auto steps = static_cast<long>(std::ceil(T / dt - 1e-9));
  Mat P = sys.G;
  double tau = 0.0;  // time to go
  for (long k = 1; k <= steps; ++k) {
    const double tau_next = k == steps ? T : static_cast<double>(k) * dt;
    const double h = tau_next - tau;
    const Mat k1 = riccati_rate(sys.A, S, Q, P);
    const Mat k2 = riccati_rate(sys.A, S, Q, P + 0.5 * h * k1);
    const Mat k3 = riccati_rate(sys.A, S, Q, P + 0.5 * h * k2);
    const Mat k4 = riccati_rate(sys.A, S, Q, P + h * k3);
    P = symmetrize(P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    if (!P.allFinite()) {
      throw BlowUpError("Riccati solution escaped at t = " + std::to_string(T - tau),
                        T - tau);
    }
    tau = tau_next;
  }
  return P;
}

double are_residual(const LtiSystem& sys, const Mat& P) {
  return riccati_rate(sys.A, input_weight(sys), sys.Q(), P).norm();
}

Mat solve_are(const LtiSystem& sys, const AreOptions& options) {
  sys.check_dims();
  validate(sys);
  const Mat S = input_weight(sys);
  const Mat Q = sys.Q();
  const double a_norm = sys.A.norm();
  const double s_norm = S.norm();

  Mat P = sys.G;
  double tau = 0.0;
  bool converged = false;
  while (tau < options.max_horizon) {
    // Keep h times the spectral radius of the linearised flow inside the
    // RK4 stability region.
    const double rate = 2.0 * (a_norm + s_norm * P.norm()) + 1e-12;
    const double h = std::min(0.1, 1.0 / rate);
    const Mat k1 = riccati_rate(sys.A, S, Q, P);
    const Mat k2 = riccati_rate(sys.A, S, Q, P + 0.5 * h * k1);
    const Mat k3 = riccati_rate(sys.A, S, Q, P + 0.5 * h * k2);
    const Mat k4 = riccati_rate(sys.A, S, Q, P + h * k3);
    const Mat next = symmetrize(P + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    if (!next.allFinite()) {
      throw BlowUpError("ARE integration diverged", tau);
    }
    const double change = (next - P).norm();
    P = next;
    tau += h;
    if (change < options.step_tolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw Error("non-convergence", "ARE integration did not settle within horizon " +
                                       std::to_string(options.max_horizon));
  }

  // Newton-Kleinman: (A - BK)'P + P(A - BK) + Q + K'RK = 0.
  const double tol = options.residual_tolerance * std::max(Q.norm(), 1e-300);
  for (int iter = 0; iter < 5; ++iter) {
    const Mat K = sys.R.llt().solve(sys.B.transpose() * P);
    const Mat Ac = sys.A - sys.B * K;
    const Mat rhs = -(Q + K.transpose() * sys.R * K);
    const Mat refined = symmetrize(solve_sylvester(Ac.transpose(), Ac, rhs));
    const bool better = are_residual(sys, refined) <= are_residual(sys, P);
    if (better) P = refined;
    if (!better || are_residual(sys, P) <= tol) break;
  }
  if (are_residual(sys, P) > tol) {
    throw Error("non-convergence", "ARE residual " +
                                       std::to_string(are_residual(sys, P)) +
                                       " above tolerance");
  }
  return P;
}

double max_real_eigenvalue(const Mat& M) {
  Eigen::EigenSolver<Mat> es(M, false);
  return es.eigenvalues().real().maxCoeff();
}

Mat lqr_gain(const LtiSystem& sys, const Mat& P) {
  sys.check_dims();
  require_dim(P.rows(), sys.n(), "P rows");
  require_dim(P.cols(), sys.n(), "P cols");
  Mat K = sys.R.llt().solve(sys.B.transpose() * P);
  const double spectral_abscissa = max_real_eigenvalue(sys.A - sys.B * K);
  if (!(spectral_abscissa < 0.0)) {
    throw Error("oracle-failure",
                "closed loop A - BK is not Hurwitz (max Re eig = " +
                    std::to_string(spectral_abscissa) + ")");
  }
  return K;
}

Mat solve_sylvester(const Mat& A, const Mat& B, const Mat& C) {
  using CMat = Eigen::MatrixXcd;
  using CVec = Eigen::VectorXcd;
  if (A.rows() != A.cols() || B.rows() != B.cols()) {
    throw DimensionMismatch("Sylvester coefficients must be square");
  }
  require_dim(C.rows(), A.rows(), "Sylvester rhs rows");
  require_dim(C.cols(), B.rows(), "Sylvester rhs cols");

  Eigen::ComplexSchur<CMat> schur_a(A.cast<std::complex<double>>());
  Eigen::ComplexSchur<CMat> schur_b(B.cast<std::complex<double>>());
  const CMat& Ua = schur_a.matrixU();
  const CMat& Ta = schur_a.matrixT();
  const CMat& Ub = schur_b.matrixU();
  const CMat& Tb = schur_b.matrixT();

  const CMat F = Ua.adjoint() * C.cast<std::complex<double>>() * Ub;
  CMat Y(A.rows(), B.rows());
  for (Eigen::Index j = 0; j < B.rows(); ++j) {
    CVec rhs = F.col(j);
    for (Eigen::Index k = 0; k < j; ++k) rhs -= Tb(k, j) * Y.col(k);
    CMat shifted = Ta;
    shifted.diagonal().array() += Tb(j, j);
    Y.col(j) = shifted.triangularView<Eigen::Upper>().solve(rhs);
  }
  return (Ua * Y * Ub.adjoint()).real();
}

}  // namespace robust_enkf
