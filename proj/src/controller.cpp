#include "robust_enkf/controller.hpp"

#include <cmath>
#include <sstream>
#include <string>

namespace robust_enkf {

OptimalControlWeights OptimalControlWeights::quadratic(const Mat& Q, const Mat& R,
                                                       const Mat& G) {
  return {[Q](const Vec& x) { return x.dot(Q * x); }, R, G};
}

void OptimalControlWeights::validate() const {
  if (!running_cost) throw InvalidArgument("running cost is missing");
  if (R.rows() != R.cols()) throw DimensionMismatch("R must be square");
  Eigen::LLT<Mat> llt(R);
  if ((R - R.transpose()).norm() > 1e-12 * std::max(1.0, R.norm()) ||
      llt.info() != Eigen::Success) {
    throw InvalidArgument("R must be symmetric positive definite");
  }
}

RobustConfig RobustConfig::constant(double lambda, double r, double norm_weight) {
  return {[lambda](double, const Vec&) { return lambda; }, r, norm_weight};
}

void RobustConfig::validate() const {
  if (!lambda) throw InvalidArgument("disturbance bound is missing");
  if (!(r > 0.0)) throw InvalidArgument("regularisation r must be positive");
  if (!(norm_weight > 0.0)) throw InvalidArgument("norm weight must be positive");
}

void ControlLaw::validate() const {
  weights.validate();
  robust.validate();
  require_dim(gain.P.cols(), gain.P.rows(), "gain");
  if (reduction) require_dim(gain.dim(), reduction->n(), "gain vs reduced dimension");
}

namespace {

double hamiltonian_at(const ControlLaw& law, const Vec& g, const Vec& x, const Vec& u,
                      const Simulator& sim) {
  return g.dot(sim(x, u)) + 0.5 * (law.weights.running_cost(x) + u.dot(law.weights.R * u));
}

}  // namespace

double hamiltonian(const ControlLaw& law, const Vec& x, const Vec& u,
                   const Simulator& sim) {
  require_dim(x.size(), law.gain.dim(), "state");
  return hamiltonian_at(law, law.gain.gradient(x), x, u, sim);
}

Vec minimize_hamiltonian(const ControlLaw& law, const Vec& x, const Simulator& sim) {
  require_dim(x.size(), law.gain.dim(), "state");
  const Eigen::Index m = sim.control_dim();
  require_dim(law.weights.R.rows(), m, "R");
  const Vec g = law.gain.gradient(x);
  const Mat R_inv = law.weights.R.llt().solve(Mat::Identity(m, m));

  if (law.input_access == InputAccess::known) {
    return -R_inv * (sim.input_matrix(x).transpose() * g);
  }

  const double h0 = hamiltonian_at(law, g, x, Vec::Zero(m), sim);
  Vec u(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double hi = hamiltonian_at(law, g, x, R_inv.col(i), sim);
    // The forward difference recovers +(R^-1 b' g)_i; the minimiser is its negative.
    u[i] = -(hi - h0 - 0.5 * R_inv(i, i));
  }
  return u;
}

Mat estimate_b(const Simulator& sim, const Vec& x, Eigen::Index m) {
  require_dim(m, sim.control_dim(), "control dimension");
  Mat b(sim.state_dim(), m);
  if (m == 0) return b;
  const Vec base = sim(x, Vec::Zero(m));
  Vec e = Vec::Zero(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    e[j] = 1.0;
    b.col(j) = sim(x, e) - base;
    e[j] = 0.0;
  }
  return b;
}

namespace {

[[noreturn]] void throw_rank_deficient(const Eigen::ColPivHouseholderQR<Mat>& qr) {
  std::ostringstream msg;
  msg << "input matrix is rank deficient (rank " << qr.rank() << " of " << qr.cols()
      << "); dependent columns:";
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index k = qr.rank(); k < qr.cols(); ++k) msg << ' ' << perm[k];
  throw RankError(msg.str(), qr.rank());
}

}  // namespace

Vec robust_term(const ControlLaw& law, double t, const Vec& x, const Simulator& sim) {
  require_dim(x.size(), law.gain.dim(), "state");
  const Eigen::Index m = sim.control_dim();
  const double lambda = law.robust.lambda(t, x);
  if (!(lambda >= 0.0)) throw InvalidArgument("disturbance bound must be nonnegative");
  if (lambda == 0.0 || m == 0) return Vec::Zero(m);

  const double w = law.robust.norm_weight;
  const Vec g = law.gain.gradient(x) / w;
  const double r1 = std::max(std::sqrt(w) * g.norm(), law.robust.r);
  const Vec target = g / r1;

  Vec v;
  if (law.input_access == InputAccess::known) {
    const Mat b = sim.input_matrix(x);
    Eigen::ColPivHouseholderQR<Mat> qr(b);
    if (qr.rank() < m) throw_rank_deficient(qr);
    // b^+ = (b'b)^-1 b'
    v = (b.transpose() * b).ldlt().solve(b.transpose() * target);
  } else {
    const Mat b = estimate_b(sim, x, m);
    Eigen::ColPivHouseholderQR<Mat> qr(b);
    if (qr.rank() < m) throw_rank_deficient(qr);
    v = qr.solve(target);
  }
  return -lambda * v;
}

Vec robust_control(const ControlLaw& law, double t, const Vec& z, const Simulator& sim) {
  const Vec x = law.reduction ? reduce(*law.reduction, z) : z;
  return minimize_hamiltonian(law, x, sim) + robust_term(law, t, x, sim);
}

}  // namespace robust_enkf
