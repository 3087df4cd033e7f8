#include <cmath>

#include "doctest.h"
#include "factmle/data_io.hpp"
#include "factmle/errors.hpp"
#include "factmle/objective.hpp"
#include "oracles.hpp"

using namespace factmle;

namespace {

UniquenessPrecision feasible(Eigen::VectorXd phi, double eps = 1e-7) {
  return UniquenessPrecision{std::move(phi), eps};
}

}  // namespace

TEST_SUITE("objective") {

TEST_CASE("identity covariance: f1 = p, f2 = 0") {
  const CovarianceInput cov =
      CovarianceInput::from_covariance(Eigen::MatrixXd::Identity(3, 3));
  const ObjectiveValue v = objective(cov, feasible(Eigen::VectorXd::Ones(3)), 1);
  CHECK(v.f1 == doctest::Approx(3.0));
  CHECK(v.f2 == doctest::Approx(0.0));
  CHECK(v.f == doctest::Approx(3.0));
}

TEST_CASE("diagonal closed form") {
  Eigen::MatrixXd s(2, 2);
  s << 2, 0, 0, 1;
  const CovarianceInput cov = CovarianceInput::from_covariance(s);
  const ObjectiveValue v = objective(cov, feasible(Eigen::VectorXd::Ones(2)), 1);
  CHECK(v.f1 == doctest::Approx(3.0));
  CHECK(v.f2 == doctest::Approx(1.0 - std::log(2.0)));
  CHECK(v.f == doctest::Approx(2.0 + std::log(2.0)));
}

TEST_CASE("matches the dense oracle on random instances") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd s = oracle::random_spd(5, rng);
    const Eigen::VectorXd phi = oracle::random_loguniform(5, 0.05, 20.0, rng);
    const CovarianceInput cov = CovarianceInput::from_covariance(s);
    const ObjectiveValue v = objective(cov, feasible(phi), 2);
    const double ref = oracle::objective_dense(s, phi, 2);
    CHECK(v.f == doctest::Approx(ref).epsilon(1e-10));
    CHECK(v.f == doctest::Approx(v.f1 - v.f2));
    CHECK(v.f2 >= 0.0);
  }
}

TEST_CASE("infeasible phi is rejected") {
  const CovarianceInput cov =
      CovarianceInput::from_covariance(Eigen::MatrixXd::Identity(3, 3));
  Eigen::VectorXd phi = Eigen::VectorXd::Ones(3);
  phi[1] = -1.0;
  CHECK_THROWS_AS(objective(cov, feasible(phi), 1), DomainError);
  phi[1] = 1e9;  // above 1/eps
  CHECK_THROWS_AS(objective(cov, feasible(phi, 1e-7), 1), DomainError);
}

TEST_CASE("full-rank objective equals f - log det S") {
  SUBCASE("identity") {
    const CovarianceInput cov =
        CovarianceInput::from_covariance(Eigen::MatrixXd::Identity(2, 2));
    CHECK(full_rank_objective(cov, feasible(Eigen::VectorXd::Ones(2)), 1) ==
          doctest::Approx(2.0));
  }
  SUBCASE("diagonal") {
    Eigen::MatrixXd s(2, 2);
    s << 2, 0, 0, 1;
    const CovarianceInput cov = CovarianceInput::from_covariance(s);
    CHECK(full_rank_objective(cov, feasible(Eigen::VectorXd::Ones(2)), 1) ==
          doctest::Approx(2.0));
  }
  SUBCASE("random") {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::MatrixXd s = oracle::random_spd(4, rng);
      const Eigen::VectorXd phi = oracle::random_loguniform(4, 0.1, 10.0, rng);
      const CovarianceInput cov = CovarianceInput::from_covariance(s);
      const double fbar = full_rank_objective(cov, feasible(phi), 2);
      const double f = objective(cov, feasible(phi), 2).f;
      const double logdet = std::log(s.determinant());
      CHECK(std::abs(fbar - (f - logdet)) <= 1e-9 * std::max(1.0, std::abs(fbar)));
    }
  }
  SUBCASE("singular covariance is rejected") {
    Eigen::MatrixXd s(2, 2);
    s << 1, 1, 1, 1;
    s.diagonal().array() += 1e-14;
    const CovarianceInput cov = CovarianceInput::from_covariance(s);
    CHECK_THROWS_AS(full_rank_objective(cov, feasible(Eigen::VectorXd::Ones(2)), 1),
                    DomainError);
  }
}

TEST_CASE("subgradient: identity gives zero, diagonal gives closed form") {
  {
    const CovarianceInput cov =
        CovarianceInput::from_covariance(Eigen::MatrixXd::Identity(4, 4));
    const UniquenessPrecision u = feasible(Eigen::VectorXd::Ones(4));
    const auto sp = eig_top(cov, u.phi, 2);
    const SubgradientWorkspace g = subgradient_f2(cov, u, 2, sp);
    CHECK(g.grad.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.delta.cwiseAbs().maxCoeff() == 0.0);
  }
  {
    Eigen::MatrixXd s(2, 2);
    s << 4, 0, 0, 1;
    const CovarianceInput cov = CovarianceInput::from_covariance(s);
    const UniquenessPrecision u = feasible(Eigen::VectorXd::Ones(2));
    const auto sp = eig_top(cov, u.phi, 1);
    const SubgradientWorkspace g = subgradient_f2(cov, u, 1, sp);
    CHECK(g.delta[0] == doctest::Approx(0.75));
    CHECK(g.grad[0] == doctest::Approx(3.0));
    CHECK(g.grad[1] == doctest::Approx(0.0));
  }
}

TEST_CASE("subgradient matches central finite differences") {
  Rng rng(41);
  int tested = 0;
  while (tested < 8) {
    const Eigen::MatrixXd s = oracle::random_spd(6, rng);
    const Eigen::VectorXd phi = oracle::random_loguniform(6, 0.3, 3.0, rng);
    const Eigen::VectorXd lambda = oracle::scaled_eigenvalues(s, phi);
    const int r = 2;
    // Differentiability: no tie at the cut and no eigenvalue at the kink.
    if (std::abs(lambda[r - 1] - lambda[r]) < 1e-3 * lambda[0]) continue;
    if ((lambda.head(r + 1).array() - 1.0).abs().minCoeff() < 1e-3) continue;

    const CovarianceInput cov = CovarianceInput::from_covariance(s);
    const UniquenessPrecision u = feasible(phi);
    const SubgradientWorkspace g = subgradient_f2(cov, u, r, eig_top(cov, phi, r));
    const Eigen::VectorXd fd = oracle::fd_subgradient(s, phi, r, 1e-6);
    const double scale = std::max(1.0, fd.cwiseAbs().maxCoeff());
    CHECK((g.grad - fd).cwiseAbs().maxCoeff() <= 1e-5 * scale);
    ++tested;
  }
}

TEST_CASE("subgradient properties on random instances") {
  Rng rng(59);
  for (int trial = 0; trial < 12; ++trial) {
    const int p = 7;
    const int r = 1 + trial % 3;
    const Eigen::MatrixXd s = oracle::random_spd(p, rng);
    const CovarianceInput cov = CovarianceInput::from_covariance(s);
    const Eigen::VectorXd x = oracle::random_loguniform(p, 0.1, 8.0, rng);
    const Eigen::VectorXd y = oracle::random_loguniform(p, 0.1, 8.0, rng);

    // Convexity of f2 along a random chord.
    const double alpha = rng.uniform();
    const Eigen::VectorXd mid = alpha * x + (1.0 - alpha) * y;
    CHECK(oracle::f2_dense(s, mid, r) <= alpha * oracle::f2_dense(s, x, r) +
                                             (1.0 - alpha) * oracle::f2_dense(s, y, r) +
                                             1e-10);

    // Subgradient inequality (valid at nondifferentiable points too).
    const UniquenessPrecision ux = feasible(x);
    const SubgradientWorkspace g = subgradient_f2(cov, ux, r, eig_top(cov, x, r));
    CHECK(oracle::f2_dense(s, y, r) >=
          oracle::f2_dense(s, x, r) + g.grad.dot(y - x) - 1e-9);

    // Spectral part grows with r.
    CHECK(oracle::f2_dense(s, x, r + 1) >= oracle::f2_dense(s, x, r) - 1e-12);
    const double f2_r = objective(cov, ux, r).f2;
    const double f2_r1 = objective(cov, ux, r + 1).f2;
    CHECK(f2_r1 >= f2_r - 1e-12);

    // diag(S) dominates the subgradient (PSD structure of the update).
    CHECK(((s.diagonal() - g.grad).array() >= -1e-8).all());
    CHECK((g.grad.array() >= -1e-12).all());
  }
}

TEST_CASE("tie between lambda_r and lambda_{r+1} is flagged") {
  const CovarianceInput cov =
      CovarianceInput::from_covariance(Eigen::MatrixXd::Identity(4, 4));
  const UniquenessPrecision u = feasible((2.0 * Eigen::VectorXd::Ones(4)).eval());
  const auto sp = eig_top(cov, u.phi, 1);
  const SubgradientWorkspace g = subgradient_f2(cov, u, 1, sp);
  CHECK(g.tie_flag);

  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(4, 4);
  s(0, 0) = 9.0;
  const CovarianceInput cov2 = CovarianceInput::from_covariance(s);
  const auto sp2 = eig_top(cov2, u.phi, 1);
  CHECK_FALSE(subgradient_f2(cov2, u, 1, sp2).tie_flag);
}

}  // TEST_SUITE
