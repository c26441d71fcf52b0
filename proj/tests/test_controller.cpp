#include <doctest.h>

#include <cmath>

#include "robust_enkf/controller.hpp"
#include "robust_enkf/pde_sim.hpp"
#include "robust_enkf/riccati.hpp"
#include "robust_enkf/rng.hpp"

using namespace robust_enkf;

namespace {

Mat gaussian(Eigen::Index r, Eigen::Index c, StreamRng& rng) {
  Mat M(r, c);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = rng.normal();
  return M;
}

Mat spd(Eigen::Index n, StreamRng& rng) {
  const Mat M = gaussian(n, n, rng);
  return M * M.transpose() + Mat::Identity(n, n);
}

ControlLaw law_for(const Mat& P, const Mat& R, double lambda, double r,
                   InputAccess access) {
  const Eigen::Index n = P.rows();
  ControlLaw law;
  law.gain = {P.inverse(), P, GainMode::linear};
  law.weights = OptimalControlWeights::quadratic(Mat::Identity(n, n), R, Mat::Identity(n, n));
  law.robust = RobustConfig::constant(lambda, r);
  law.input_access = access;
  return law;
}

ControlLaw scalar_law() {
  return law_for(Mat::Ones(1, 1), Mat::Ones(1, 1), 0.0, 0.01, InputAccess::known);
}

Simulator scalar_sim() { return make_linear_simulator(Mat::Zero(1, 1), Mat::Ones(1, 1)); }

}  // namespace

TEST_CASE("hamiltonian") {
  const auto law = scalar_law();
  const auto sim = scalar_sim();
  CHECK(hamiltonian(law, Vec::Zero(1), Vec::Zero(1), sim) == 0.0);
  for (double u : {-2.0, -1.0, 0.0, 0.5, 3.0}) {
    CHECK(hamiltonian(law, Vec::Ones(1), Vec::Constant(1, u), sim) ==
          doctest::Approx(u + 0.5 * (1.0 + u * u)));
  }

  StreamRng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat A = gaussian(5, 5, rng), B = gaussian(5, 3, rng), R = spd(3, rng);
    const auto l = law_for(spd(5, rng), R, 0.0, 0.01, InputAccess::known);
    const auto s = make_linear_simulator(A, B);
    const Vec x = gaussian(5, 1, rng), u = gaussian(3, 1, rng), h = gaussian(3, 1, rng);
    const double second = hamiltonian(l, x, u + h, s) + hamiltonian(l, x, u - h, s) -
                          2.0 * hamiltonian(l, x, u, s);
    CHECK(second == doctest::Approx(h.dot(R * h)).epsilon(1e-9));
  }
}

TEST_CASE("minimize_hamiltonian") {
  const auto sim = scalar_sim();
  auto law = scalar_law();
  CHECK(minimize_hamiltonian(law, Vec::Ones(1), sim)[0] == doctest::Approx(-1.0));
  CHECK(minimize_hamiltonian(law, Vec::Zero(1), sim)[0] == 0.0);
  law.input_access = InputAccess::simulator_only;
  CHECK(minimize_hamiltonian(law, Vec::Ones(1), sim.simulator_only())[0] ==
        doctest::Approx(-1.0));

  StreamRng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Mat A = gaussian(5, 5, rng), B = gaussian(5, 2, rng), R = spd(2, rng);
    const auto s = make_linear_simulator(A, B);
    auto known = law_for(spd(5, rng), R, 0.0, 0.01, InputAccess::known);
    auto blind = known;
    blind.input_access = InputAccess::simulator_only;
    const Vec x = gaussian(5, 1, rng);
    const Vec a = minimize_hamiltonian(known, x, s);
    const Vec b = minimize_hamiltonian(blind, x, s.simulator_only());
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
    const Vec analytic = -R.llt().solve(B.transpose() * known.gain.P * x);
    CHECK((a - analytic).cwiseAbs().maxCoeff() < 1e-10);
    // Global minimum of the quadratic.
    const double best = hamiltonian(known, x, a, s);
    CHECK(best <= hamiltonian(known, x, gaussian(2, 1, rng), s) + 1e-12);
  }
}

TEST_CASE("estimate_b") {
  StreamRng rng(3);
  const Mat A = gaussian(4, 4, rng), B = gaussian(4, 2, rng);
  const auto sim = make_linear_simulator(A, B).simulator_only();
  CHECK((estimate_b(sim, Vec::Zero(4), 2) - B).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((estimate_b(sim, gaussian(4, 1, rng), 2) - B).cwiseAbs().maxCoeff() < 1e-12);

  const GridSpec grid(128, 1.0);
  const auto basis = build_control_matrix(grid, 10);
  const auto burgers = make_burgers_simulator(grid, 0.02, basis).simulator_only();
  StreamRng ic(4);
  CHECK((estimate_b(burgers, sample_initial_condition(ic, grid), 10) - basis.B)
            .cwiseAbs()
            .maxCoeff() < 1e-12);

  Simulator no_input(3, 0, [](const Vec& x, const Vec&) { return Vec(-x); });
  const Mat empty = estimate_b(no_input, Vec::Ones(3), 0);
  CHECK(empty.rows() == 3);
  CHECK(empty.cols() == 0);
}

TEST_CASE("robust_term") {
  const auto sim = make_linear_simulator(Mat::Zero(2, 2), Mat::Identity(2, 2));
  Vec x(2);
  x << 3, 4;

  SUBCASE("unit direction scaled by -lambda, both access modes") {
    for (auto access : {InputAccess::known, InputAccess::simulator_only}) {
      const auto law = law_for(Mat::Identity(2, 2), Mat::Identity(2, 2), 1.0, 0.01, access);
      const Simulator s = access == InputAccess::known ? sim : sim.simulator_only();
      const Vec ud = robust_term(law, 0.0, x, s);
      CHECK(ud[0] == doctest::Approx(-0.6).epsilon(1e-14));
      CHECK(ud[1] == doctest::Approx(-0.8).epsilon(1e-14));
    }
  }

  SUBCASE("zero gradient gives zero") {
    const auto law = law_for(Mat::Identity(2, 2), Mat::Identity(2, 2), 1.0, 0.01, InputAccess::known);
    CHECK(robust_term(law, 0.0, Vec::Zero(2), sim).norm() == 0.0);
  }

  SUBCASE("small gradients are divided by r") {
    const auto law = law_for(Mat::Identity(2, 2), Mat::Identity(2, 2), 1.0, 0.01, InputAccess::known);
    const Vec tiny = 1e-3 * x;
    CHECK((robust_term(law, 0.0, tiny, sim) + tiny / 0.01).norm() < 1e-14);
  }

  SUBCASE("lambda = 0 gives zero") {
    const auto law = law_for(Mat::Identity(2, 2), Mat::Identity(2, 2), 0.0, 0.01, InputAccess::known);
    CHECK(robust_term(law, 0.0, x, sim).norm() == 0.0);
  }

  SUBCASE("norm weight measures the gradient in the weighted inner product") {
    auto law = law_for(Mat::Identity(2, 2), Mat::Identity(2, 2), 1.0, 0.01, InputAccess::known);
    law.robust.norm_weight = 0.25;
    // g_w = g / w, |g_w|_w = |g| / sqrt(w) = 10, so u_d = -(12, 16) / 10.
    const Vec ud = robust_term(law, 0.0, x, sim);
    CHECK(ud[0] == doctest::Approx(-1.2));
    CHECK(ud[1] == doctest::Approx(-1.6));
    // |B u_d|_w = sqrt(w) |B u_d| = lambda.
    CHECK(std::sqrt(0.25) * ud.norm() == doctest::Approx(1.0));
  }

  SUBCASE("rank-deficient input matrix names the dependent column") {
    Mat B(3, 2);
    B << 1, 2, 0, 0, 0, 0;
    const auto s = make_linear_simulator(Mat::Zero(3, 3), B);
    for (auto access : {InputAccess::known, InputAccess::simulator_only}) {
      const auto law = law_for(Mat::Identity(3, 3), Mat::Identity(2, 2), 1.0, 0.01, access);
      try {
        robust_term(law, 0.0, Vec::Ones(3), access == InputAccess::known ? s : s.simulator_only());
        FAIL("expected rank error");
      } catch (const RankError& e) {
        CHECK(e.achievable_rank() == 1);
        CHECK(std::string(e.what()).find("dependent columns: 0") != std::string::npos);
      }
    }
  }

  SUBCASE("projection bound over random tall systems") {
    StreamRng rng(5);
    for (int trial = 0; trial < 1000; ++trial) {
      const Eigen::Index n = 3 + trial % 4, m = 1 + trial % 2;
      const Mat B = gaussian(n, m, rng);
      const auto s = make_linear_simulator(Mat::Zero(n, n), B);
      const double lambda = 0.1 + rng.uniform(0.0, 2.0);
      const auto law = law_for(spd(n, rng), Mat::Identity(m, m), lambda, 0.01,
                               trial % 2 ? InputAccess::known : InputAccess::simulator_only);
      const Vec ud = robust_term(law, 0.0, gaussian(n, 1, rng),
                                 trial % 2 ? s : s.simulator_only());
      CHECK((B * ud).norm() <= lambda * (1.0 + 1e-12));
    }
  }

  SUBCASE("gradient in the span of B is cancelled exactly") {
    StreamRng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
      const Mat B = gaussian(5, 2, rng);
      const auto s = make_linear_simulator(Mat::Zero(5, 5), B);
      const Vec g = B * gaussian(2, 1, rng);
      // P = I so g = x.
      const auto law = law_for(Mat::Identity(5, 5), Mat::Identity(2, 2), 0.7, 0.01,
                               InputAccess::simulator_only);
      const Vec ud = robust_term(law, 0.0, g, s.simulator_only());
      CHECK((B * ud + 0.7 * g / g.norm()).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("robust_control") {
  StreamRng rng(7);
  const Mat A = gaussian(4, 4, rng) - 3.0 * Mat::Identity(4, 4);
  const Mat B = gaussian(4, 4, rng);
  LtiSystem sys{A, B, Mat::Identity(4, 4), Mat::Identity(4, 4), Mat::Identity(4, 4)};
  const Mat P = solve_are(sys);
  const auto sim = make_linear_simulator(A, B);

  SUBCASE("zero state gives zero control") {
    const auto law = law_for(P, Mat::Identity(4, 4), 0.5, 0.01, InputAccess::known);
    CHECK(robust_control(law, 0.0, Vec::Zero(4), sim).norm() == 0.0);
  }

  SUBCASE("access mode does not change the control") {
    auto known = law_for(P, Mat::Identity(4, 4), 0.5, 0.01, InputAccess::known);
    auto blind = known;
    blind.input_access = InputAccess::simulator_only;
    for (int trial = 0; trial < 50; ++trial) {
      const Vec z = gaussian(4, 1, rng);
      CHECK((robust_control(known, 0.0, z, sim) -
             robust_control(blind, 0.0, z, sim.simulator_only()))
                .cwiseAbs()
                .maxCoeff() < 1e-10);
    }
  }

  SUBCASE("optimal control alone stabilises the linear benchmark") {
    const auto law = law_for(P, Mat::Identity(4, 4), 0.0, 0.01, InputAccess::simulator_only);
    const auto blind = sim.simulator_only();
    Vec x = gaussian(4, 1, rng);
    const double start = x.norm();
    for (int k = 0; k < 5000; ++k) x = rk4_step(sim, x, robust_control(law, 0.0, x, blind), 1e-3);
    CHECK(x.norm() < 1e-2 * start);
  }

  SUBCASE("with a reduction the law acts on Phi z") {
    ReducedModel red;
    red.A = A;
    red.B = B;
    red.Phi = Mat::Zero(4, 6);
    red.Phi.leftCols(4) = Mat::Identity(4, 4);
    auto law = law_for(P, Mat::Identity(4, 4), 0.0, 0.01, InputAccess::known);
    law.reduction = red;
    const Vec z = gaussian(6, 1, rng);
    const Vec x = z.head(4);
    auto plain = law;
    plain.reduction.reset();
    CHECK((robust_control(law, 0.0, z, sim) - robust_control(plain, 0.0, x, sim)).norm() < 1e-14);
  }
}
