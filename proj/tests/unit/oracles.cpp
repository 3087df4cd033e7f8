#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <thread>
#include <vector>

namespace oracle {

Eigen::MatrixXd random_spd(int p, factmle::Rng& rng) {
  const int k = std::max(2, p / 2 + 1);
  Eigen::MatrixXd a(p, k);
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < k; ++j) a(i, j) = rng.normal();
  }
  Eigen::MatrixXd s = a * a.transpose() / static_cast<double>(k);
  for (int i = 0; i < p; ++i) s(i, i) += 0.5 + rng.uniform();
  return 0.5 * (s + s.transpose());
}

Eigen::VectorXd random_loguniform(int p, double lo, double hi, factmle::Rng& rng) {
  Eigen::VectorXd v(p);
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < p; ++i) v[i] = std::exp(llo + (lhi - llo) * rng.uniform());
  return v;
}

Eigen::VectorXd scaled_eigenvalues(const Eigen::MatrixXd& s, const Eigen::VectorXd& phi) {
  const Eigen::VectorXd d = phi.cwiseSqrt();
  const Eigen::MatrixXd s_star = d.asDiagonal() * s * d.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s_star, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().reverse();
}

double f2_dense(const Eigen::MatrixXd& s, const Eigen::VectorXd& phi, int r) {
  const Eigen::VectorXd lambda = scaled_eigenvalues(s, phi);
  double h = 0.0;
  for (int i = 0; i < r && i < lambda.size(); ++i) {
    const double m = std::max(1.0, lambda[i]);
    h += std::log(m) - m + 1.0;
  }
  return -h;
}

double objective_dense(const Eigen::MatrixXd& s, const Eigen::VectorXd& phi, int r) {
  double f1 = 0.0;
  for (Eigen::Index i = 0; i < phi.size(); ++i) {
    f1 += -std::log(phi[i]) + s(i, i) * phi[i];
  }
  return f1 - f2_dense(s, phi, r);
}

double neg_loglik_dense(const Eigen::MatrixXd& s, const Eigen::VectorXd& psi,
                        const Eigen::MatrixXd& loadings) {
  Eigen::MatrixXd sigma = loadings * loadings.transpose();
  sigma.diagonal() += psi;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(sigma);
  const double logdet = std::log(std::abs(lu.determinant()));
  const double tr = (lu.solve(s)).trace();
  return logdet + tr;
}

Eigen::VectorXd fd_subgradient(const Eigen::MatrixXd& s, const Eigen::VectorXd& phi,
                               int r, double step) {
  Eigen::VectorXd grad(phi.size());
  for (Eigen::Index i = 0; i < phi.size(); ++i) {
    Eigen::VectorXd hi = phi, lo = phi;
    hi[i] += step;
    lo[i] -= step;
    grad[i] = (f2_dense(s, hi, r) - f2_dense(s, lo, r)) / (2.0 * step);
  }
  return grad;
}

double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      int iters) {
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - gr * (b - a);
  double d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  for (int k = 0; k < iters && b - a > 1e-14 * std::max(1.0, std::abs(a)); ++k) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

double lambda_max_3x3(double a11, double a22, double a33, double a12, double a13,
                      double a23) {
  const double p1 = a12 * a12 + a13 * a13 + a23 * a23;
  const double q = (a11 + a22 + a33) / 3.0;
  const double d1 = a11 - q, d2 = a22 - q, d3 = a33 - q;
  const double p2 = d1 * d1 + d2 * d2 + d3 * d3 + 2.0 * p1;
  if (p2 <= 0.0) return q;
  const double p = std::sqrt(p2 / 6.0);
  // det((A - qI)/p) / 2
  const double det = d1 * (d2 * d3 - a23 * a23) - a12 * (a12 * d3 - a23 * a13) +
                     a13 * (a12 * a23 - d2 * a13);
  double rdet = det / (2.0 * p * p * p);
  rdet = std::clamp(rdet, -1.0, 1.0);
  const double theta = std::acos(rdet) / 3.0;
  return q + 2.0 * p * std::cos(theta);
}

double grid_min_p3(const Eigen::Matrix3d& s, double eps, int n, int threads) {
  std::vector<double> phis(static_cast<size_t>(n)), logs(static_cast<size_t>(n));
  const double llo = std::log(eps), lhi = std::log(1.0 / eps);
  for (int i = 0; i < n; ++i) {
    phis[static_cast<size_t>(i)] =
        std::exp(llo + (lhi - llo) * static_cast<double>(i) / (n - 1));
    logs[static_cast<size_t>(i)] = std::log(phis[static_cast<size_t>(i)]);
  }
  const double s11 = s(0, 0), s22 = s(1, 1), s33 = s(2, 2);
  const double s12sq = s(0, 1) * s(0, 1), s13sq = s(0, 2) * s(0, 2),
               s23sq = s(1, 2) * s(1, 2);
  const double cross_coef = 2.0 * s(0, 1) * s(0, 2) * s(1, 2);

  const auto chunk_min = [&](int i_begin, int i_end) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = i_begin; i < i_end; ++i) {
      const double phi1 = phis[static_cast<size_t>(i)];
      const double f1_1 = -logs[static_cast<size_t>(i)] + s11 * phi1;
      const double a11 = s11 * phi1;
      for (int j = 0; j < n; ++j) {
        const double phi2 = phis[static_cast<size_t>(j)];
        const double f1_12 = f1_1 - logs[static_cast<size_t>(j)] + s22 * phi2;
        const double a22 = s22 * phi2;
        const double a12sq = s12sq * phi1 * phi2;
        const double c13 = s13sq * phi1;
        const double c23 = s23sq * phi2;
        const double ccross = cross_coef * phi1 * phi2;
        for (int k = 0; k < n; ++k) {
          const double phi3 = phis[static_cast<size_t>(k)];
          const double a33 = s33 * phi3;
          const double a13sq = c13 * phi3;
          const double a23sq = c23 * phi3;
          const double cross = ccross * phi3;
          // Same trigonometric closed form as lambda_max_3x3, written in
          // terms of the squared off-diagonals.
          const double p1 = a12sq + a13sq + a23sq;
          const double q = (a11 + a22 + a33) / 3.0;
          const double d1 = a11 - q, d2 = a22 - q, d3 = a33 - q;
          const double p2 = d1 * d1 + d2 * d2 + d3 * d3 + 2.0 * p1;
          double lmax = q;
          if (p2 > 0.0) {
            const double p = std::sqrt(p2 / 6.0);
            const double det = d1 * (d2 * d3 - a23sq) - a12sq * d3 + cross - a13sq * d2;
            const double rdet = std::clamp(det / (2.0 * p * p * p), -1.0, 1.0);
            lmax = q + 2.0 * p * std::cos(std::acos(rdet) / 3.0);
          }
          double f = f1_12 - logs[static_cast<size_t>(k)] + a33;
          if (lmax > 1.0) f += std::log(lmax) - lmax + 1.0;
          if (f < best) best = f;
        }
      }
    }
    return best;
  };

  threads = std::max(1, threads);
  std::vector<double> results(static_cast<size_t>(threads));
  std::vector<std::thread> pool;
  const int per = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int b = t * per, e = std::min(n, b + per);
    pool.emplace_back([&, t, b, e] { results[static_cast<size_t>(t)] = chunk_min(b, e); });
  }
  for (auto& th : pool) th.join();
  return *std::min_element(results.begin(), results.end());
}

}  // namespace oracle
