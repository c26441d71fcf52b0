#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

#include "robust_enkf/pde_sim.hpp"
#include "robust_enkf/reduced_model.hpp"

using namespace robust_enkf;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  StreamRng rng(seed, 99);
  Mat M(r, c);
  for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = rng.normal();
  return M;
}

Mat stable_matrix(Eigen::Index n, std::uint64_t seed) {
  Mat A = random_mat(n, n, seed);
  Eigen::EigenSolver<Mat> es(A, false);
  const double shift = es.eigenvalues().real().maxCoeff() + 0.5;
  return A - shift * Mat::Identity(n, n);
}

SnapshotData lti_data(const Mat& Ad, const Mat& Bd, int K, std::uint64_t seed, bool inputs) {
  SnapshotData d;
  d.X = random_mat(Ad.rows(), K, seed);
  d.U = inputs ? random_mat(Bd.cols(), K, seed + 1) : Mat::Zero(Bd.cols(), K);
  d.Xnext = Ad * d.X + Bd * d.U;
  d.dt = 0.1;
  return d;
}

InitialStateSampler gaussian_state(Eigen::Index n) {
  return [n](StreamRng& rng) {
    Vec x(n);
    for (Eigen::Index i = 0; i < n; ++i) x[i] = rng.normal();
    return x;
  };
}

}  // namespace

TEST_CASE("collect_snapshots") {
  const Mat A = stable_matrix(3, 1);
  const Mat B = random_mat(3, 2, 2);
  const Simulator sim = make_linear_simulator(A, B);

  SUBCASE("one trajectory of five steps gives five columns") {
    const auto d = collect_snapshots(sim, gaussian_state(3), 1, 5, 0.01, {}, 4);
    CHECK(d.count() == 5);
    CHECK(d.U.rows() == 2);
    CHECK(d.dt == 0.01);
    CHECK(d.Xnext.leftCols(4) == d.X.rightCols(4));
  }

  SUBCASE("without excitation the successor is the matrix exponential map") {
    const double dt = 0.01;
    const auto d = collect_snapshots(sim, gaussian_state(3), 3, 20, dt, {0.0, 1}, 4);
    CHECK(d.U.cwiseAbs().maxCoeff() == 0.0);
    const Mat E = (A * dt).exp();
    CHECK((d.Xnext - E * d.X).cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("inputs are bounded and held") {
    const auto d = collect_snapshots(sim, gaussian_state(3), 1, 12, 0.01, {0.5, 4}, 4);
    CHECK(d.U.cwiseAbs().maxCoeff() <= 0.5);
    CHECK(d.U.col(0) == d.U.col(3));
    CHECK(d.U.col(4) == d.U.col(7));
  }

  SUBCASE("same seed, same data") {
    const auto a = collect_snapshots(sim, gaussian_state(3), 4, 10, 0.01, {}, 8);
    const auto b = collect_snapshots(sim, gaussian_state(3), 4, 10, 0.01, {}, 8);
    CHECK(a.X == b.X);
    CHECK(a.U == b.U);
    CHECK(a.Xnext == b.Xnext);
  }

  SUBCASE("escaping trajectories are reported") {
    Simulator cubic(1, 1, [](const Vec& x, const Vec& u) { return Vec(x.array().cube() + u.array()); });
    auto big = [](StreamRng&) { return Vec(Vec::Constant(1, 10.0)); };
    CHECK_THROWS_AS(collect_snapshots(cubic, big, 1, 200, 0.01, {}, 1), BlowUpError);
  }
}

TEST_CASE("fit_dmdc") {
  const Mat Ad = 0.5 * random_mat(3, 3, 10);
  const Mat Bd = random_mat(3, 2, 11);

  SUBCASE("recovers an exact three state discrete system") {
    const auto model = fit_dmdc(lti_data(Ad, Bd, 40, 12, true), 3);
    CHECK(model.discrete);
    CHECK(model.dt_fit == 0.1);
    const Mat A_full = model.Phi.transpose() * model.A * model.Phi;
    const Mat B_full = model.Phi.transpose() * model.B;
    CHECK((A_full - Ad).norm() < 1e-8);
    CHECK((B_full - Bd).norm() < 1e-8);
  }

  SUBCASE("full rank: orthogonal projection and exact prediction") {
    const auto data = lti_data(Ad, Bd, 40, 13, true);
    const auto model = fit_dmdc(data, 3);
    CHECK((model.Phi * model.Phi.transpose() - Mat::Identity(3, 3)).norm() < 1e-12);
    CHECK((model.Phi.transpose() * model.Phi - Mat::Identity(3, 3)).norm() < 1e-12);
    const Mat pred = model.Phi.transpose() * (model.A * model.Phi * data.X + model.B * data.U);
    CHECK((data.Xnext - pred).norm() < 1e-8);
    CHECK(one_step_prediction_error(model, data) < 1e-10);
  }

  SUBCASE("input-free data reduces to plain DMD") {
    const auto model = fit_dmdc(lti_data(Ad, Bd, 40, 14, false), 3);
    CHECK(model.B.cwiseAbs().maxCoeff() <= 1e-8);
    CHECK((model.Phi.transpose() * model.A * model.Phi - Ad).norm() < 1e-8);
  }

  SUBCASE("rank deficiency reports the achievable rank") {
    auto data = lti_data(Ad, Bd, 40, 15, true);
    data.X.row(2) = data.X.row(0);
    data.Xnext = Ad * data.X + Bd * data.U;
    data.Xnext.row(2).setZero();
    data.Xnext.row(1).setZero();
    try {
      fit_dmdc(data, 3);
      FAIL("expected rank error");
    } catch (const RankError& e) {
      CHECK(e.code() == "rank-deficient");
      CHECK(e.achievable_rank() < 3);
    }
  }
}

TEST_CASE("to_continuous") {
  SUBCASE("identity dynamics") {
    ReducedModel d;
    d.A = Mat::Identity(2, 2);
    d.B = random_mat(2, 1, 20);
    d.Phi = Mat::Identity(2, 2);
    d.dt_fit = 0.05;
    d.discrete = true;
    const auto c = to_continuous(d);
    CHECK_FALSE(c.discrete);
    CHECK(c.A.norm() < 1e-14);
    CHECK((c.B - d.B / 0.05).norm() < 1e-12);
  }

  SUBCASE("scalar exponential") {
    for (double a : {-2.0, -0.3, 0.7}) {
      ReducedModel d;
      d.A = Mat::Constant(1, 1, std::exp(a * 0.1));
      d.B = Mat::Ones(1, 1);
      d.Phi = Mat::Ones(1, 1);
      d.dt_fit = 0.1;
      d.discrete = true;
      const auto c = to_continuous(d);
      CHECK(std::abs(c.A(0, 0) - a) < 1e-10);
      // B_d = (e^{a dt} - 1) / a * B
      CHECK(c.B(0, 0) == doctest::Approx(a / (std::exp(a * 0.1) - 1.0)).epsilon(1e-10));
    }
  }

  SUBCASE("round trip on a random stable system") {
    ReducedModel c;
    c.A = stable_matrix(5, 21);
    c.B = random_mat(5, 2, 22);
    c.Phi = Mat::Identity(5, 5);
    const auto d = to_discrete(c, 0.01);
    CHECK(d.discrete);
    const auto back = to_continuous(d);
    CHECK((back.A - c.A).norm() < 1e-8);
    CHECK((back.B - c.B).norm() < 1e-8);
  }

  SUBCASE("eigenvalue on the negative real axis is a conversion error") {
    ReducedModel d;
    d.A = Mat::Constant(1, 1, -0.5);
    d.B = Mat::Ones(1, 1);
    d.Phi = Mat::Ones(1, 1);
    d.dt_fit = 0.1;
    d.discrete = true;
    try {
      to_continuous(d);
      FAIL("expected conversion error");
    } catch (const Error& e) {
      CHECK(e.code() == "conversion");
      CHECK(std::string(e.what()).find("dt") != std::string::npos);
    }
  }
}

TEST_CASE("reduce and lift") {
  // Orthonormal rows from a QR factor.
  const Mat Q = Eigen::HouseholderQR<Mat>(random_mat(6, 6, 30)).householderQ();
  ReducedModel model;
  model.Phi = Q.leftCols(2).transpose();
  model.A = Mat::Zero(2, 2);
  model.B = Mat::Zero(2, 1);

  const Vec in_span = model.Phi.transpose() * random_mat(2, 1, 31);
  CHECK((lift(model, reduce(model, in_span)) - in_span).norm() < 1e-10);

  const Vec orthogonal = Q.col(4);
  CHECK(reduce(model, orthogonal).norm() < 1e-12);

  for (std::uint64_t s = 0; s < 20; ++s) {
    const Vec z = random_mat(6, 1, 100 + s);
    CHECK(lift(model, reduce(model, z)).norm() <= z.norm() + 1e-12);
  }

  CHECK_THROWS_AS(reduce(model, Vec::Zero(5)), DimensionMismatch);
  CHECK_THROWS_AS(lift(model, Vec::Zero(3)), DimensionMismatch);
}
