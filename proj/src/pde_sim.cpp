#include "robust_enkf/pde_sim.hpp"

#include <cmath>
#include <string>

namespace robust_enkf {

Simulator::Simulator(Eigen::Index state_dim, Eigen::Index control_dim, Rhs rhs,
                     InputMatrix input_matrix)
    : n_(state_dim),
      m_(control_dim),
      rhs_(std::move(rhs)),
      input_matrix_(std::move(input_matrix)) {
  if (n_ <= 0 || m_ < 0) {
    throw InvalidArgument("simulator dimensions must be n > 0, m >= 0");
  }
  if (!rhs_) throw InvalidArgument("simulator needs a right-hand side");
}

Vec Simulator::operator()(const Vec& x, const Vec& u) const {
  require_dim(x.size(), n_, "simulator state");
  require_dim(u.size(), m_, "simulator control");
  return rhs_(x, u);
}

Mat Simulator::input_matrix(const Vec& x) const {
  if (!input_matrix_) {
    throw InvalidArgument("input matrix is not disclosed by this simulator");
  }
  return input_matrix_(x);
}

Simulator Simulator::simulator_only() const {
  return Simulator(n_, m_, rhs_);
}

Simulator make_linear_simulator(Mat A, Mat B) {
  if (A.rows() != A.cols()) throw DimensionMismatch("A must be square");
  require_dim(B.rows(), A.rows(), "B rows");
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  auto rhs = [A, B](const Vec& x, const Vec& u) -> Vec { return A * x + B * u; };
  auto input = [B](const Vec&) -> Mat { return B; };
  return Simulator(n, m, rhs, input);
}

namespace {

Vec rk4_step_tv(const Simulator& sim, const Vec& x,
                const std::function<Vec(double)>& u_fn, double t, double h) {
  const Vec u0 = u_fn(t);
  const Vec uh = u_fn(t + 0.5 * h);
  const Vec u1 = u_fn(t + h);
  const Vec k1 = sim(x, u0);
  const Vec k2 = sim(x + 0.5 * h * k1, uh);
  const Vec k3 = sim(x + 0.5 * h * k2, uh);
  const Vec k4 = sim(x + h * k3, u1);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

Vec rk4_step(const Simulator& sim, const Vec& x, const Vec& u, double h) {
  const Vec k1 = sim(x, u);
  const Vec k2 = sim(x + 0.5 * h * k1, u);
  const Vec k3 = sim(x + 0.5 * h * k2, u);
  const Vec k4 = sim(x + h * k3, u);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Trajectory integrate(const Simulator& sim, const Vec& x0,
                     const std::function<Vec(double)>& u_fn, double t0,
                     double t1, double dt, Direction direction) {
  if (!(dt > 0.0)) throw InvalidArgument("integrate: dt must be positive");
  const double sign = direction == Direction::forward ? 1.0 : -1.0;
  if (!((t1 - t0) * sign > 0.0)) {
    throw InvalidArgument(
        "integrate: forward needs t1 > t0, backward needs t1 < t0");
  }
  require_dim(x0.size(), sim.state_dim(), "integrate initial state");
  if (!x0.allFinite()) throw BlowUpError("initial state is not finite", t0);

  const double span = std::abs(t1 - t0);
  const auto steps = static_cast<long>(std::ceil(span / dt - 1e-9));

  Trajectory traj;
  traj.reserve(static_cast<std::size_t>(steps) + 1);
  traj.push_back({t0, x0});
  Vec x = x0;
  double t = t0;
  for (long k = 1; k <= steps; ++k) {
    const double t_next = k == steps ? t1 : t0 + sign * static_cast<double>(k) * dt;
    x = rk4_step_tv(sim, x, u_fn, t, t_next - t);
    if (!x.allFinite()) {
      throw BlowUpError("state became non-finite after t = " + std::to_string(t), t);
    }
    t = t_next;
    traj.push_back({t, x});
  }
  return traj;
}

GridSpec::GridSpec(int p, double L) : p_(p), L_(L) {
  if (p < 3) throw InvalidArgument("grid needs at least 3 points");
  if (!(L > 0.0) || !std::isfinite(L)) {
    throw InvalidArgument("grid length must be positive");
  }
}

Vec GridSpec::points() const {
  Vec y(p_);
  for (int i = 0; i < p_; ++i) y[i] = point(i);
  return y;
}

ControlBasis build_control_matrix(const GridSpec& grid, int m) {
  if (m < 1 || m > grid.p()) {
    throw InvalidArgument("invalid basis: need 1 <= m <= p, got m = " +
                          std::to_string(m));
  }
  const double cell = grid.length() / m;
  Mat B = Mat::Zero(grid.p(), m);
  for (int i = 0; i < grid.p(); ++i) {
    auto j = static_cast<int>(std::floor(grid.point(i) / cell));
    j = std::min(std::max(j, 0), m - 1);
    B(i, j) = 1.0;
  }
  return {std::move(B)};
}

namespace {

void check_pde_args(const Vec& z, const Vec& u, const GridSpec& grid,
                    const ControlBasis& basis) {
  require_dim(z.size(), grid.p(), "PDE state");
  require_dim(basis.B.rows(), grid.p(), "control basis rows");
  require_dim(u.size(), basis.m(), "control");
}

inline double left(const Vec& z, int i, int p, Boundary bc) {
  if (i > 0) return z[i - 1];
  return bc == Boundary::periodic ? z[p - 1] : 0.0;
}

inline double right(const Vec& z, int i, int p, Boundary bc) {
  if (i < p - 1) return z[i + 1];
  return bc == Boundary::periodic ? z[0] : 0.0;
}

}  // namespace

Vec heat_rhs(const Vec& z, const Vec& u, double nu, const GridSpec& grid,
             const ControlBasis& basis, Boundary bc) {
  check_pde_args(z, u, grid, basis);
  const int p = grid.p();
  const double diff = nu / (grid.dy() * grid.dy());
  Vec out = basis.B * u;
  for (int i = 0; i < p; ++i) {
    out[i] += diff * (left(z, i, p, bc) - 2.0 * z[i] + right(z, i, p, bc));
  }
  return out;
}

Vec burgers_rhs(const Vec& z, const Vec& u, double nu, const GridSpec& grid,
                const ControlBasis& basis, Boundary bc) {
  check_pde_args(z, u, grid, basis);
  const int p = grid.p();
  const double dy = grid.dy();
  const double diff = nu / (dy * dy);
  const double adv = 1.0 / (2.0 * dy);
  Vec out = basis.B * u;
  for (int i = 0; i < p; ++i) {
    const double zl = left(z, i, p, bc);
    const double zr = right(z, i, p, bc);
    out[i] += -z[i] * adv * (zr - zl) + diff * (zl - 2.0 * z[i] + zr);
  }
  return out;
}

namespace {

Simulator make_pde_simulator(const GridSpec& grid, const ControlBasis& basis,
                             Simulator::Rhs rhs) {
  require_dim(basis.B.rows(), grid.p(), "control basis rows");
  auto input = [B = basis.B](const Vec&) -> Mat { return B; };
  return Simulator(grid.p(), basis.m(), std::move(rhs), input);
}

}  // namespace

Simulator make_heat_simulator(const GridSpec& grid, double nu,
                              const ControlBasis& basis, Boundary bc) {
  if (!(nu > 0.0)) throw InvalidArgument("heat equation needs nu > 0");
  return make_pde_simulator(
      grid, basis, [grid, nu, basis, bc](const Vec& z, const Vec& u) {
        return heat_rhs(z, u, nu, grid, basis, bc);
      });
}

Simulator make_burgers_simulator(const GridSpec& grid, double nu,
                                 const ControlBasis& basis, Boundary bc) {
  if (!(nu >= 0.0)) throw InvalidArgument("Burgers equation needs nu >= 0");
  return make_pde_simulator(
      grid, basis, [grid, nu, basis, bc](const Vec& z, const Vec& u) {
        return burgers_rhs(z, u, nu, grid, basis, bc);
      });
}

Vec sech_profile(const GridSpec& grid, double alpha, double beta) {
  const double centre = 1.0 / (2.0 * grid.length());
  Vec z(grid.p());
  for (int i = 0; i < grid.p(); ++i) {
    z[i] = alpha / std::cosh((grid.point(i) - centre) / beta);
  }
  return z;
}

Vec sample_initial_condition(StreamRng& rng, const GridSpec& grid) {
  if (grid.length() != 1.0) {
    throw InvalidArgument("initial-condition sampler assumes L = 1");
  }
  const double alpha = rng.uniform(0.9, 1.1);
  const double beta = rng.uniform(0.04, 0.06);
  return sech_profile(grid, alpha, beta);
}

double l2_norm(const Vec& z, const GridSpec& grid) {
  require_dim(z.size(), grid.p(), "PDE state");
  return std::sqrt(z.squaredNorm() * grid.dy());
}

}  // namespace robust_enkf
