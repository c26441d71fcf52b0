#include <doctest.h>

#include <cmath>
#include <numbers>

#include "robust_enkf/pde_sim.hpp"

using namespace robust_enkf;

namespace {

Vec sampled(const GridSpec& grid, double (*f)(double)) {
  Vec v(grid.p());
  for (int i = 0; i < grid.p(); ++i) v[i] = f(grid.point(i));
  return v;
}

}  // namespace

TEST_CASE("control matrix on a four point grid splits into halves") {
  const auto basis = build_control_matrix(GridSpec(4, 1.0), 2);
  Mat expected(4, 2);
  expected << 1, 0, 1, 0, 0, 1, 0, 1;
  CHECK(basis.B == expected);
}

TEST_CASE("single control channel is the all-ones column") {
  const auto basis = build_control_matrix(GridSpec(100, 1.0), 1);
  CHECK(basis.B == Mat::Ones(100, 1));
}

TEST_CASE("p = 128, m = 10 supports are disjoint and covering") {
  const GridSpec grid(128, 1.0);
  const auto B = build_control_matrix(grid, 10).B;
  // Enumerated from y_i = (i + 1/2) / 128 against the cell bounds j / 10.
  const int sizes[10] = {13, 13, 12, 13, 13, 13, 13, 12, 13, 13};
  for (int j = 0; j < 10; ++j) CHECK(B.col(j).sum() == sizes[j]);
  CHECK(B.rowwise().sum() == Vec::Ones(128));
  CHECK(((B.array() == 0.0) || (B.array() == 1.0)).all());
}

TEST_CASE("more controls than grid points is rejected") {
  CHECK_THROWS_AS(build_control_matrix(GridSpec(4, 1.0), 5), InvalidArgument);
  CHECK_THROWS_AS(build_control_matrix(GridSpec(4, 1.0), 0), InvalidArgument);
}

TEST_CASE("heat right-hand side") {
  const GridSpec grid(16, 1.0);
  const auto basis = build_control_matrix(grid, 4);
  const Vec u0 = Vec::Zero(4);

  SUBCASE("zero state") { CHECK(heat_rhs(Vec::Zero(16), u0, 0.1, grid, basis).norm() == 0.0); }

  SUBCASE("constants are in the kernel") {
    CHECK(heat_rhs(Vec::Constant(16, 2.5), u0, 0.1, grid, basis).cwiseAbs().maxCoeff() <
          1e-10);
  }

  SUBCASE("grid delta gives the three point stencil, wrapping at the ends") {
    const double scale = 1.0 / (grid.dy() * grid.dy());
    for (int k : {0, 7, 15}) {
      Vec e = Vec::Zero(16);
      e[k] = 1.0;
      Vec want = Vec::Zero(16);
      want[k] = -2.0 * scale;
      want[(k + 15) % 16] += scale;
      want[(k + 1) % 16] += scale;
      CHECK((heat_rhs(e, u0, 1.0, grid, basis) - want).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  SUBCASE("control enters through B") {
    Vec u(4);
    u << 1, 2, 3, 4;
    CHECK((heat_rhs(Vec::Zero(16), u, 0.1, grid, basis) - basis.B * u).norm() < 1e-15);
  }

  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(heat_rhs(Vec::Zero(15), u0, 0.1, grid, basis), DimensionMismatch);
    CHECK_THROWS_AS(heat_rhs(Vec::Zero(16), Vec::Zero(3), 0.1, grid, basis),
                    DimensionMismatch);
  }
}

TEST_CASE("Burgers right-hand side") {
  SUBCASE("zero and constant states are fixed points") {
    const GridSpec grid(32, 1.0);
    const auto basis = build_control_matrix(grid, 4);
    CHECK(burgers_rhs(Vec::Zero(32), Vec::Zero(4), 0.01, grid, basis).norm() == 0.0);
    CHECK(burgers_rhs(Vec::Constant(32, -0.7), Vec::Zero(4), 0.01, grid, basis)
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }

  SUBCASE("sine wave matches the analytic right-hand side to second order") {
    const double nu = 0.01;
    const double k = 2.0 * std::numbers::pi;
    double err[2];
    int idx = 0;
    for (int p : {128, 256}) {
      const GridSpec grid(p, 1.0);
      const auto basis = build_control_matrix(grid, 4);
      const Vec z = sampled(grid, [](double y) { return std::sin(2.0 * std::numbers::pi * y); });
      Vec want(p);
      for (int i = 0; i < p; ++i) {
        const double y = grid.point(i);
        want[i] = -std::sin(k * y) * k * std::cos(k * y) - nu * k * k * std::sin(k * y);
      }
      err[idx++] = (burgers_rhs(z, Vec::Zero(4), nu, grid, basis) - want).cwiseAbs().maxCoeff();
    }
    // Truncation bound k^3 dy^2 / 6 * max|z| + nu k^4 dy^2 / 12 at p = 256.
    const double dy = 1.0 / 256;
    CHECK(err[1] < (std::pow(k, 3) / 6 + nu * std::pow(k, 4) / 12) * dy * dy);
    CHECK(err[0] / err[1] == doctest::Approx(4.0).epsilon(0.05));
  }
}

TEST_CASE("integrate") {
  SUBCASE("zero vector field keeps the state") {
    Simulator sim(2, 1, [](const Vec& x, const Vec&) { return Vec(Vec::Zero(x.size())); });
    Vec x0(2);
    x0 << 1.5, -2;
    const auto traj = integrate(sim, x0, [](double) { return Vec(Vec::Zero(1)); }, 0, 1, 0.1,
                                Direction::forward);
    for (const auto& pt : traj) CHECK(pt.x == x0);
    CHECK(traj.back().t == 1.0);
  }

  SUBCASE("exponential decay") {
    Simulator sim(1, 0, [](const Vec& x, const Vec&) { return Vec(-x); });
    const auto traj = integrate(sim, Vec::Ones(1), [](double) { return Vec(); }, 0, 1, 1e-3,
                                Direction::forward);
    CHECK(std::abs(traj.back().x[0] - std::exp(-1.0)) < 1e-8);
    CHECK(traj.back().t == 1.0);
    CHECK(traj.size() == 1001);
  }

  SUBCASE("last step is shortened to land on t1") {
    Simulator sim(1, 0, [](const Vec& x, const Vec&) { return Vec(-x); });
    const auto traj = integrate(sim, Vec::Ones(1), [](double) { return Vec(); }, 0, 0.25, 0.1,
                                Direction::forward);
    CHECK(traj.size() == 4);
    CHECK(traj.back().t == 0.25);
    CHECK(std::abs(traj.back().x[0] - std::exp(-0.25)) < 1e-6);
  }

  SUBCASE("heat backward then forward returns the state") {
    const GridSpec grid(100, 1.0);
    const auto basis = build_control_matrix(grid, 8);
    const auto sim = make_heat_simulator(grid, 0.002, basis);
    const Vec x0 = sech_profile(grid, 1.0, 0.05);
    auto u = [](double) { return Vec(Vec::Zero(8)); };
    const auto back = integrate(sim, x0, u, 0.1, 0.0, 1e-3, Direction::backward);
    CHECK(back.back().t == 0.0);
    const auto fwd = integrate(sim, back.back().x, u, 0.0, 0.1, 1e-3, Direction::forward);
    CHECK((fwd.back().x - x0).cwiseAbs().maxCoeff() < 1e-6);
  }

  SUBCASE("finite escape is reported with the last valid time") {
    Simulator sim(1, 0, [](const Vec& x, const Vec&) { return Vec(x.array().square()); });
    try {
      integrate(sim, Vec::Ones(1), [](double) { return Vec(); }, 0, 2, 1e-3, Direction::forward);
      FAIL("expected blow-up");
    } catch (const BlowUpError& e) {
      CHECK(e.code() == "blow-up");
      // Exact escape at t = 1; the discrete solution overflows a few steps later.
      CHECK(e.last_valid_time() > 0.99);
      CHECK(e.last_valid_time() < 1.01);
    }
  }

  SUBCASE("direction must match the interval") {
    Simulator sim(1, 0, [](const Vec& x, const Vec&) { return Vec(-x); });
    auto u = [](double) { return Vec(); };
    CHECK_THROWS_AS(integrate(sim, Vec::Ones(1), u, 0, 1, 0.1, Direction::backward),
                    InvalidArgument);
    CHECK_THROWS_AS(integrate(sim, Vec::Ones(1), u, 1, 0, 0.1, Direction::forward),
                    InvalidArgument);
  }
}

TEST_CASE("initial conditions") {
  SUBCASE("alpha = 1 peaks at 1 on the point at y = 1/2") {
    const GridSpec grid(101, 1.0);
    const Vec z = sech_profile(grid, 1.0, 0.05);
    CHECK(grid.point(50) == doctest::Approx(0.5));
    CHECK(z[50] == doctest::Approx(1.0).epsilon(1e-15));
    Eigen::Index arg;
    z.maxCoeff(&arg);
    CHECK(arg == 50);
  }

  SUBCASE("draws are positive, bounded by 1.1 and symmetric") {
    const GridSpec grid(128, 1.0);
    for (std::uint64_t s = 0; s < 100; ++s) {
      StreamRng rng(7, s);
      const Vec z = sample_initial_condition(rng, grid);
      CHECK(z.minCoeff() > 0.0);
      CHECK(z.maxCoeff() <= 1.1);
      CHECK((z - z.reverse()).cwiseAbs().maxCoeff() < 1e-14);
    }
  }

  SUBCASE("same seed gives the same state") {
    const GridSpec grid(128, 1.0);
    StreamRng a(3, 1), b(3, 1);
    CHECK(sample_initial_condition(a, grid) == sample_initial_condition(b, grid));
  }
}

TEST_CASE("L2 norm") {
  const GridSpec unit(64, 1.0);
  CHECK(l2_norm(Vec::Zero(64), unit) == 0.0);
  CHECK(l2_norm(Vec::Ones(64), unit) == doctest::Approx(1.0));
  const GridSpec fine(256, 1.0);
  const Vec s = sampled(fine, [](double y) { return std::sin(2.0 * std::numbers::pi * y); });
  CHECK(std::abs(l2_norm(s, fine) - std::sqrt(0.5)) < 1e-3);
}
