#include "msae/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "msae/error.hpp"
#include "msae/parallel.hpp"
#include "msae/rng.hpp"

namespace msae {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Standard normal quantile (Acklam's rational approximation refined by one
// Halley step); only used for Wald intervals.
double normal_quantile(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01, -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  double x;
  if (p < 0.02425) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p > 1 - 0.02425) {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

void finish(LogScoreReport& rep) {
  rep.scored = 0;
  double sum = 0.0;
  for (Eigen::Index r = 0; r < rep.log_lhat.size(); ++r) {
    const double v = rep.log_lhat(r);
    if (std::isnan(v)) continue;
    if (std::isinf(v)) rep.underflow = true;
    sum += v;
    ++rep.scored;
  }
  rep.logscore_sum = -sum;
  rep.logscore_mean = rep.scored > 0 ? rep.logscore_sum / rep.scored : kNaN;
}

FitConfig refit_config(const LooConfig& cfg, const ModelFit& full, int region) {
  FitConfig rc = cfg.fit;
  rc.chains = 1;
  rc.threads = 1;
  rc.warmup = cfg.refit_warmup;
  rc.draws = cfg.samples;
  rc.seed = derive_seed(cfg.fit.seed, 7919, static_cast<std::uint64_t>(region));
  rc.record_components = false;
  rc.record_cluster_effects = false;
  rc.warm_start.reset();
  if (cfg.warm_start && !full.chain_ends.empty()) rc.warm_start = full.chain_ends.front();
  return rc;
}

// Scores region r of `target` using the mu draws of a refit.
double score_region(const ModelFit& refit, const DirectEstimateSet& target, int r) {
  const auto have = target.available_outcomes(r);
  const int m = static_cast<int>(have.size());
  const Eigen::MatrixXd mu = refit.mu_draws(r);
  Eigen::MatrixXd sub(mu.rows(), m);
  Eigen::VectorXd y(m);
  Eigen::MatrixXd V(m, m);
  for (int a = 0; a < m; ++a) {
    const int ca = have[static_cast<std::size_t>(a)];
    sub.col(a) = mu.col(ca);
    y(a) = target.y_hat(r, ca);
    for (int b = 0; b < m; ++b) V(a, b) = target.V_hat[static_cast<std::size_t>(r)](ca, have[static_cast<std::size_t>(b)]);
  }
  return log_predictive_density(sub, y, V);
}

}  // namespace

double log_predictive_density(const Eigen::MatrixXd& mu_draws, const Eigen::VectorXd& y, const Eigen::MatrixXd& V) {
  const auto m = y.size();
  if (mu_draws.cols() != m || V.rows() != m || V.cols() != m) throw ValidationError("dimension mismatch in predictive density");
  Eigen::MatrixXd Vf = V;
  for (Eigen::Index a = 0; a < m; ++a) Vf(a, a) = std::max(Vf(a, a), 1e-10);
  Eigen::LLT<Eigen::MatrixXd> llt(Vf);
  if (llt.info() != Eigen::Success) throw NumericalError("held-out Stage-1 covariance is not positive definite");
  double log_det = 0.0;
  for (Eigen::Index a = 0; a < m; ++a) log_det += 2.0 * std::log(llt.matrixLLT()(a, a));
  const double norm = -0.5 * (static_cast<double>(m) * std::log(2.0 * std::numbers::pi) + log_det);

  const auto S = mu_draws.rows();
  std::vector<double> lp(static_cast<std::size_t>(S));
  double peak = -std::numeric_limits<double>::infinity();
  for (Eigen::Index s = 0; s < S; ++s) {
    const Eigen::VectorXd d = llt.matrixL().solve(y - mu_draws.row(s).transpose());
    lp[static_cast<std::size_t>(s)] = norm - 0.5 * d.squaredNorm();
    peak = std::max(peak, lp[static_cast<std::size_t>(s)]);
  }
  if (!std::isfinite(peak)) return -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (double v : lp) acc += std::exp(v - peak);
  return peak + std::log(acc / static_cast<double>(S));
}

LogScoreReport loo_logscore_area(const AreaModelSpec& spec, const DirectEstimateSet& est, const AdjacencyGraph& graph,
                                 const LooConfig& cfg) {
  if (spec.family == AreaFamily::Direct)
    throw ValidationError("the direct family has no predictive distribution for a held-out region");
  const int R = est.regions();
  LogScoreReport rep;
  rep.model_id = family_name(spec.family);
  rep.log_lhat = Eigen::VectorXd::Constant(R, kNaN);
  rep.region_notes.assign(static_cast<std::size_t>(R), "");

  const ModelFit full = fit_area(spec, est, graph, cfg.fit);
  parallel_for(static_cast<std::size_t>(R), cfg.threads, [&](std::size_t ri) {
    const int r = static_cast<int>(ri);
    if (!est.any_available(r)) {
      rep.region_notes[ri] = "no direct estimate to score";
      return;
    }
    try {
      const ModelFit refit = fit_area(spec, est.without_region(r), graph, refit_config(cfg, full, r));
      rep.log_lhat(r) = score_region(refit, est, r);
      if (std::isinf(rep.log_lhat(r))) rep.region_notes[ri] = "predictive density underflowed";
    } catch (const Error& e) {
      rep.region_notes[ri] = std::string("refit failed: ") + e.what();
    }
  });
  finish(rep);
  return rep;
}

LogScoreReport loo_logscore_unit(const UnitModelSpec& spec, const SurveyDataset& data, const AdjacencyGraph& graph,
                                 const RuralFractions& q, const LooConfig& cfg, LonelyPsuPolicy policy) {
  const int R = graph.size();
  LogScoreReport rep;
  rep.model_id = family_name(spec.family);
  rep.log_lhat = Eigen::VectorXd::Constant(R, kNaN);
  rep.region_notes.assign(static_cast<std::size_t>(R), "");

  const DirectEstimateSet target = direct_estimates(data, policy);
  const ModelFit full = fit_unit(spec, data, graph, q, cfg.fit);
  parallel_for(static_cast<std::size_t>(R), cfg.threads, [&](std::size_t ri) {
    const int r = static_cast<int>(ri);
    if (!target.any_available(r)) {
      rep.region_notes[ri] = "held-out region lacks a Stage-1 estimate: " + target.notes[ri];
      return;
    }
    try {
      const ModelFit refit = fit_unit(spec, data.without_region(r), graph, q, refit_config(cfg, full, r));
      rep.log_lhat(r) = score_region(refit, target, r);
      if (std::isinf(rep.log_lhat(r))) rep.region_notes[ri] = "predictive density underflowed";
    } catch (const Error& e) {
      rep.region_notes[ri] = std::string("refit failed: ") + e.what();
    }
  });
  finish(rep);
  return rep;
}

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) return kNaN;
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

PosteriorSummary summarize_fit(const ModelFit& fit, double level) {
  const double tail = (1.0 - level) / 2.0;
  PosteriorSummary out;
  out.median = Eigen::MatrixXd::Constant(fit.regions, fit.outcomes, kNaN);
  out.lower = out.median;
  out.upper = out.median;
  for (int c = 0; c < fit.outcomes; ++c)
    for (int r = 0; r < fit.regions; ++r) {
      const Eigen::VectorXd col = fit.column(mu_column(c, r));
      if (!col.allFinite()) continue;
      std::vector<double> v(col.data(), col.data() + col.size());
      out.median(r, c) = quantile(v, 0.5);
      out.lower(r, c) = quantile(v, tail);
      out.upper(r, c) = quantile(v, 1.0 - tail);
    }
  return out;
}

PosteriorSummary summarize_direct(const DirectEstimateSet& est, double level) {
  const double z = normal_quantile(1.0 - (1.0 - level) / 2.0);
  PosteriorSummary out;
  out.median = Eigen::MatrixXd::Constant(est.regions(), est.outcomes(), kNaN);
  out.lower = out.median;
  out.upper = out.median;
  for (int r = 0; r < est.regions(); ++r)
    for (int c = 0; c < est.outcomes(); ++c) {
      if (!est.available(r, c)) continue;
      const double sd = std::sqrt(std::max(0.0, est.V_hat[static_cast<std::size_t>(r)](c, c)));
      out.median(r, c) = est.y_hat(r, c);
      out.lower(r, c) = est.y_hat(r, c) - z * sd;
      out.upper(r, c) = est.y_hat(r, c) + z * sd;
    }
  return out;
}

const MetricsRow* MetricsReport::find(const std::string& model, int outcome, int region) const {
  for (const auto& row : rows)
    if (row.model == model && row.outcome == outcome && row.region == region) return &row;
  return nullptr;
}

void MetricsReport::append(const MetricsReport& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }

MetricsReport simulation_metrics(const std::string& scenario, const std::string& model,
                                 const std::vector<Eigen::MatrixXd>& truths,
                                 const std::vector<std::optional<PosteriorSummary>>& fits) {
  if (truths.size() != fits.size())
    throw ValidationError("metrics need one fit per replicate: " + std::to_string(truths.size()) + " truths, " +
                          std::to_string(fits.size()) + " fits");
  MetricsReport rep;
  if (truths.empty()) return rep;
  const auto R = truths.front().rows();
  const auto C = truths.front().cols();
  int failures = 0;
  for (const auto& f : fits) failures += f ? 0 : 1;

  for (Eigen::Index c = 0; c < C; ++c) {
    Metrics avg;
    int regions_used = 0;
    int min_reps = std::numeric_limits<int>::max();
    for (Eigen::Index r = 0; r < R; ++r) {
      std::vector<double> errs;
      double covered = 0.0, width = 0.0;
      for (std::size_t k = 0; k < fits.size(); ++k) {
        if (!fits[k]) continue;
        const double est = fits[k]->median(r, c);
        if (!std::isfinite(est)) continue;
        const double truth = truths[k](r, c);
        errs.push_back(est - truth);
        const double lo = fits[k]->lower(r, c), hi = fits[k]->upper(r, c);
        covered += (lo <= truth && truth <= hi) ? 1.0 : 0.0;
        width += hi - lo;
      }
      const int n = static_cast<int>(errs.size());
      MetricsRow row;
      row.scenario = scenario;
      row.model = model;
      row.outcome = static_cast<int>(c);
      row.region = static_cast<int>(r);
      row.replicates = n;
      row.failures = failures;
      if (n > 0) {
        auto& m = row.metrics;
        double sum = 0.0, sum2 = 0.0, var = 0.0;
        for (double e : errs) {
          sum += e;
          sum2 += e * e;
        }
        m.bias = sum / n;
        for (double e : errs) var += (e - m.bias) * (e - m.bias);
        m.abs_bias = std::abs(m.bias);
        m.mse = sum2 / n;
        m.variance = var / n;
        m.coverage = covered / n;
        m.width = width / n;
        avg.bias += m.bias;
        avg.abs_bias += m.abs_bias;
        avg.variance += m.variance;
        avg.mse += m.mse;
        avg.coverage += m.coverage;
        avg.width += m.width;
        ++regions_used;
        min_reps = std::min(min_reps, n);
      } else {
        row.metrics = Metrics{kNaN, kNaN, kNaN, kNaN, kNaN, kNaN};
      }
      rep.rows.push_back(row);
    }
    MetricsRow total;
    total.scenario = scenario;
    total.model = model;
    total.outcome = static_cast<int>(c);
    total.region = -1;
    total.failures = failures;
    total.replicates = regions_used > 0 ? min_reps : 0;
    if (regions_used > 0) {
      const double n = regions_used;
      total.metrics = Metrics{avg.bias / n, avg.abs_bias / n, avg.variance / n, avg.mse / n, avg.coverage / n, avg.width / n};
    } else {
      total.metrics = Metrics{kNaN, kNaN, kNaN, kNaN, kNaN, kNaN};
    }
    rep.rows.push_back(total);
  }
  return rep;
}

}  // namespace msae
