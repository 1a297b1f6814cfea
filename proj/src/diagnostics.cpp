#include <cmath>
#include <limits>

#include "msae/mcmc.hpp"

namespace msae {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Autocovariance of x at `lag` with the biased (1/n) normalization.
double autocov(const Eigen::VectorXd& x, int lag) {
  const auto n = x.size();
  double s = 0.0;
  for (Eigen::Index t = 0; t + lag < n; ++t) s += x(t) * x(t + lag);
  return s / static_cast<double>(n);
}

}  // namespace

ParameterDiagnostics diagnose(const std::string& name, const Eigen::VectorXd& draws, int chains) {
  ParameterDiagnostics out;
  out.name = name;
  const auto per_chain = static_cast<int>(draws.size() / chains);
  const int half = per_chain / 2;
  if (half < 2) {
    out.ess = static_cast<double>(draws.size());
    out.rhat = kNaN;
    return out;
  }

  // Split every chain in two halves (dropping a middle draw if odd).
  const int m = 2 * chains;
  std::vector<Eigen::VectorXd> pieces;
  for (int c = 0; c < chains; ++c) {
    const Eigen::Index start = static_cast<Eigen::Index>(c) * per_chain;
    pieces.push_back(draws.segment(start, half));
    pieces.push_back(draws.segment(start + per_chain - half, half));
  }
  const int n = half;
  Eigen::VectorXd means(m), vars(m);
  for (int j = 0; j < m; ++j) {
    means(j) = pieces[static_cast<std::size_t>(j)].mean();
    vars(j) = (pieces[static_cast<std::size_t>(j)].array() - means(j)).square().sum() / (n - 1);
  }
  const double W = vars.mean();
  const double B = n * (means.array() - means.mean()).square().sum() / (m - 1);
  const double var_plus = (n - 1.0) / n * W + B / n;

  // Constant chains: W is zero up to rounding of the piece means.
  if (W <= 1e-28 * (1.0 + means.squaredNorm() / m)) {
    out.ess = 1.0;
    out.rhat = chains > 1 ? (B > 0.0 ? std::numeric_limits<double>::infinity() : 1.0) : kNaN;
    return out;
  }
  out.rhat = chains > 1 ? std::sqrt(var_plus / W) : kNaN;

  // Geyer's initial monotone sequence on the combined autocorrelation.
  std::vector<Eigen::VectorXd> centered;
  for (int j = 0; j < m; ++j) centered.push_back(pieces[static_cast<std::size_t>(j)].array() - means(j));
  auto rho = [&](int lag) {
    double acov = 0.0;
    for (const auto& x : centered) acov += autocov(x, lag);
    acov /= m;
    return 1.0 - (W - acov) / var_plus;
  };
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (int t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    tau += 2.0 * pair;
    prev_pair = pair;
  }
  tau = std::max(tau, 1.0 / std::log10(static_cast<double>(m) * n));
  out.ess = static_cast<double>(m) * n / tau;
  return out;
}

Diagnostics compute_diagnostics(const ModelFit& fit, const std::vector<std::string>& names) {
  Diagnostics d;
  d.max_rhat = fit.chain_count > 1 ? 0.0 : kNaN;
  for (const auto& name : names) {
    auto p = diagnose(name, fit.column(name), fit.chain_count);
    if (fit.chain_count > 1) {
      if (!(p.rhat <= 1.05)) d.healthy = false;
      d.max_rhat = std::max(d.max_rhat, p.rhat);
    }
    d.parameters.push_back(std::move(p));
  }
  return d;
}

}  // namespace msae
