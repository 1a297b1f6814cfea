#pragma once

// Reference computations written independently of the library: dense matrix
// algebra and brute-force enumeration only.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msae/survey.hpp"

namespace oracle {

/// Design covariance of the Hájek mean vector of one region in matrix form,
/// V = Z' M' H M Z, where Z holds weighted linearized residuals, M sums
/// records into clusters and H applies the per-stratum centering with the
/// n_h / (n_h - 1) factor. Each cell uses the records observing both outcomes.
inline Eigen::MatrixXd design_covariance(const msae::SurveyDataset& data, int region) {
  const int C = data.n_outcomes();
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(C, C);
  for (int a = 0; a < C; ++a)
    for (int b = 0; b < C; ++b) {
      std::vector<const msae::IndividualRecord*> recs;
      for (const auto& rec : data.records())
        if (rec.region == region && rec.observed(a) && rec.observed(b)) recs.push_back(&rec);
      if (recs.empty()) continue;
      const auto n = static_cast<Eigen::Index>(recs.size());
      Eigen::VectorXd w(n);
      Eigen::MatrixXd Y(n, 2);
      for (Eigen::Index i = 0; i < n; ++i) {
        w(i) = recs[i]->weight;
        Y(i, 0) = recs[i]->outcomes[a];
        Y(i, 1) = recs[i]->outcomes[b];
      }
      const Eigen::VectorXd wn = w / w.sum();
      const Eigen::RowVector2d mean = wn.transpose() * Y;
      const Eigen::MatrixXd Z = wn.asDiagonal() * (Y.rowwise() - mean);

      std::map<std::string, int> cluster_id;
      std::map<std::string, std::vector<int>> strata;
      for (const auto* r : recs)
        if (!cluster_id.count(r->cluster)) {
          const int k = static_cast<int>(cluster_id.size());
          cluster_id[r->cluster] = k;
          strata[r->stratum].push_back(k);
        }
      const auto K = static_cast<Eigen::Index>(cluster_id.size());
      Eigen::MatrixXd M = Eigen::MatrixXd::Zero(K, n);
      for (Eigen::Index i = 0; i < n; ++i) M(cluster_id[recs[i]->cluster], i) = 1.0;
      Eigen::MatrixXd H = Eigen::MatrixXd::Zero(K, K);
      for (const auto& [s, ks] : strata) {
        const double nh = static_cast<double>(ks.size());
        for (int i : ks)
          for (int j : ks) H(i, j) = nh / (nh - 1.0) * ((i == j ? 1.0 : 0.0) - 1.0 / nh);
      }
      const Eigen::MatrixXd T = Z.transpose() * M.transpose() * H * M * Z;
      V(a, b) = T(0, 1);
    }
  return V;
}

/// Dense graph Laplacian.
inline Eigen::MatrixXd laplacian(const msae::AdjacencyGraph& g) {
  const int n = g.size();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [i, j] : g.edges()) {
    Q(i, j) -= 1.0;
    Q(j, i) -= 1.0;
    Q(i, i) += 1.0;
    Q(j, j) += 1.0;
  }
  return Q;
}

/// Moore-Penrose pseudo-inverse through a full SVD.
inline Eigen::MatrixXd pinv(const Eigen::MatrixXd& A) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  Eigen::VectorXd inv(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) inv(i) = s(i) > 1e-9 * s(0) ? 1.0 / s(i) : 0.0;
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Geometric mean of diag(pinv(Q)) for a connected graph.
inline double geometric_mean_pinv_diag(const Eigen::MatrixXd& Q) {
  const Eigen::VectorXd d = pinv(Q).diagonal();
  return std::exp(d.array().log().mean());
}

/// Posterior of the bivariate non-shared IID area model with flat fixed
/// effects, integrated over a (sigma_1, sigma_2) grid under exponential (PC)
/// priors. Given sigma the model is Gaussian: prior mu_rc = beta_c + s_rc,
/// s_rc ~ N(0, sigma_c^2); likelihood y_r ~ N_2(mu_r, V_r).
struct GridOptions {
  double sigma_max = 3.0;
  int grid = 400;
  int held_out = -1;               ///< region without a likelihood term
  double fixed_sigma2 = std::nan("");  ///< hold sigma_2 at this value (1-D grid)
};

struct GridPosterior {
  Eigen::MatrixXd mean;  ///< R x 2
  Eigen::MatrixXd sd;
  double sigma1_mean = 0.0;
  double predictive_density = 0.0;  ///< of the held-out y_r, when one is held out
};

inline GridPosterior iid_grid_posterior(const Eigen::MatrixXd& y, const std::vector<Eigen::Matrix2d>& V,
                                        double pc_rate, const GridOptions& opt = {}) {
  const auto R = y.rows();
  const Eigen::Index N = 2 * R;  // mu ordered (r, c) -> 2r + c
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(N, 2);
  for (Eigen::Index r = 0; r < R; ++r) X(2 * r, 0) = X(2 * r + 1, 1) = 1.0;
  Eigen::MatrixXd Vinv = Eigen::MatrixXd::Zero(N, N);
  Eigen::VectorXd yv = Eigen::VectorXd::Zero(N);
  for (Eigen::Index r = 0; r < R; ++r) {
    if (r == opt.held_out) continue;
    Vinv.block(2 * r, 2 * r, 2, 2) = V[static_cast<std::size_t>(r)].inverse();
    yv.segment(2 * r, 2) = y.row(r).transpose();
  }

  const double h = opt.sigma_max / opt.grid;
  const bool one_d = !std::isnan(opt.fixed_sigma2);
  std::vector<double> logw, sig1;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covs;
  for (int i = 0; i < opt.grid; ++i)
    for (int j = 0; j < (one_d ? 1 : opt.grid); ++j) {
      const double s1 = (i + 0.5) * h, s2 = one_d ? opt.fixed_sigma2 : (j + 0.5) * h;
      Eigen::VectorXd sprec(N);
      for (Eigen::Index r = 0; r < R; ++r) {
        sprec(2 * r) = 1.0 / (s1 * s1);
        sprec(2 * r + 1) = 1.0 / (s2 * s2);
      }
      // Joint precision over (beta, mu).
      Eigen::MatrixXd P = Eigen::MatrixXd::Zero(N + 2, N + 2);
      P.topLeftCorner(2, 2) = X.transpose() * sprec.asDiagonal() * X;
      P.topRightCorner(2, N) = -X.transpose() * sprec.asDiagonal();
      P.bottomLeftCorner(N, 2) = P.topRightCorner(2, N).transpose();
      P.bottomRightCorner(N, N) = Eigen::MatrixXd(sprec.asDiagonal()) + Vinv;
      Eigen::VectorXd b = Eigen::VectorXd::Zero(N + 2);
      b.tail(N) = Vinv * yv;
      const Eigen::MatrixXd cov = P.inverse();
      const Eigen::VectorXd m = cov * b;
      // log p(y | sigma) up to a constant, from the Gaussian integral over (beta, mu).
      Eigen::LDLT<Eigen::MatrixXd> ldlt(P);
      const double ll = 0.5 * sprec.array().log().sum() - 0.5 * ldlt.vectorD().array().log().sum() + 0.5 * b.dot(m);
      logw.push_back(ll - pc_rate * s1 - (one_d ? 0.0 : pc_rate * s2));
      sig1.push_back(s1);
      means.push_back(m.tail(N));
      covs.push_back(cov.bottomRightCorner(N, N));
    }
  const double mx = *std::max_element(logw.begin(), logw.end());
  double total = 0.0;
  for (double& l : logw) total += (l = std::exp(l - mx));
  GridPosterior out;
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(N), m2 = Eigen::VectorXd::Zero(N);
  for (std::size_t g = 0; g < logw.size(); ++g) {
    const double w = logw[g] / total;
    m1 += w * means[g];
    m2 += w * (covs[g].diagonal() + means[g].cwiseAbs2());
    out.sigma1_mean += w * sig1[g];
    if (opt.held_out >= 0) {
      const auto k = 2 * opt.held_out;
      const Eigen::Matrix2d S = covs[g].block(k, k, 2, 2) + V[static_cast<std::size_t>(opt.held_out)];
      const Eigen::Vector2d d = y.row(opt.held_out).transpose() - means[g].segment(k, 2);
      out.predictive_density += w * std::exp(-0.5 * d.dot(S.inverse() * d)) / (2.0 * M_PI * std::sqrt(S.determinant()));
    }
  }
  out.mean.resize(R, 2);
  out.sd.resize(R, 2);
  for (Eigen::Index r = 0; r < R; ++r)
    for (int c = 0; c < 2; ++c) {
      out.mean(r, c) = m1(2 * r + c);
      out.sd(r, c) = std::sqrt(m2(2 * r + c) - m1(2 * r + c) * m1(2 * r + c));
    }
  return out;
}

/// Gaussian linear model with a partly flat prior: theta has prior precision
/// `prior` (zero rows for flat components), observations y = A theta + e with
/// e ~ N(0, noise). Returns the posterior mean and covariance of L theta.
struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline Moments gaussian_posterior(const Eigen::MatrixXd& prior, const Eigen::MatrixXd& A, const Eigen::MatrixXd& noise,
                                  const Eigen::VectorXd& y, const Eigen::MatrixXd& L) {
  const Eigen::MatrixXd Ninv = noise.inverse();
  const Eigen::MatrixXd P = prior + A.transpose() * Ninv * A;
  const Eigen::MatrixXd cov = P.inverse();
  const Eigen::VectorXd m = cov * (A.transpose() * Ninv * y);
  return {L * m, L * cov * L.transpose()};
}

/// Weighted least squares slope of r on x with weights w, through QR of the
/// square-root-weighted design.
inline double wls_slope(const Eigen::VectorXd& r, const Eigen::VectorXd& x, const Eigen::VectorXd& w) {
  const Eigen::VectorXd sw = w.cwiseSqrt();
  Eigen::MatrixXd A = (sw.cwiseProduct(x));
  return A.colPivHouseholderQr().solve(sw.cwiseProduct(r))(0);
}

/// Two-sided Kolmogorov-Smirnov statistic of draws against U(0, 1).
inline double ks_uniform(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    d = std::max({d, (i + 1) / n - x[i], x[i] - i / n});
  return d;
}

}  // namespace oracle
