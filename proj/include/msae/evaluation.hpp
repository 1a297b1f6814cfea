#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msae/direct.hpp"
#include "msae/mcmc.hpp"
#include "msae/models.hpp"

namespace msae {

/// Leave-one-out log predictive scores. Lower LogScore is better.
struct LogScoreReport {
  std::string model_id;
  Eigen::VectorXd log_lhat;               ///< per region; NaN when not scored
  std::vector<std::string> region_notes;  ///< why a region was skipped or flagged
  double logscore_sum = 0.0;              ///< -sum of scored log_lhat
  double logscore_mean = 0.0;             ///< logscore_sum / number scored
  int scored = 0;
  bool underflow = false;                 ///< some region's density underflowed to 0
};

struct LooConfig {
  FitConfig fit;           ///< full-data fit; refits reuse its priors and seed
  int refit_warmup = 250;  ///< warmup of each held-out refit
  int samples = 1000;      ///< posterior draws S per held-out region
  bool warm_start = true;  ///< start refits at the full fit's tuned end state
  unsigned threads = 1;    ///< concurrent refits
};

/// log of (1/S) sum_s N(y; mu_s, V), accumulated with log-sum-exp.
double log_predictive_density(const Eigen::MatrixXd& mu_draws, const Eigen::VectorXd& y, const Eigen::MatrixXd& V);

LogScoreReport loo_logscore_area(const AreaModelSpec& spec, const DirectEstimateSet& estimates,
                                 const AdjacencyGraph& graph, const LooConfig& config);

/// Held-out regions are scored against their Stage-1 estimates computed
/// from the full survey under `policy`.
LogScoreReport loo_logscore_unit(const UnitModelSpec& spec, const SurveyDataset& data, const AdjacencyGraph& graph,
                                 const RuralFractions& q, const LooConfig& config,
                                 LonelyPsuPolicy policy = LonelyPsuPolicy::Error);

/// Type-7 (linear interpolation) sample quantile.
double quantile(std::vector<double> values, double prob);

/// Posterior point estimate and equal-tailed interval per region and outcome.
struct PosteriorSummary {
  Eigen::MatrixXd median;  ///< R x C; NaN where no estimate exists
  Eigen::MatrixXd lower;
  Eigen::MatrixXd upper;
};

PosteriorSummary summarize_fit(const ModelFit& fit, double level = 0.95);

/// Direct estimates as a model: y_hat with Wald intervals from diag(V_hat).
PosteriorSummary summarize_direct(const DirectEstimateSet& estimates, double level = 0.95);

struct Metrics {
  double bias = 0.0;
  double abs_bias = 0.0;
  double variance = 0.0;
  double mse = 0.0;
  double coverage = 0.0;
  double width = 0.0;
};

/// One row of a metrics table; region -1 is the average over regions.
struct MetricsRow {
  std::string scenario;
  std::string model;
  int outcome = 0;  ///< 0-based
  int region = -1;  ///< 0-based, or -1
  Metrics metrics;
  int replicates = 0;  ///< replicates contributing
  int failures = 0;    ///< replicates whose fit failed
};

struct MetricsReport {
  std::vector<MetricsRow> rows;

  const MetricsRow* find(const std::string& model, int outcome, int region = -1) const;
  void append(const MetricsReport& other);
};

/// Per region: bias = mean(est - truth), variance = population variance of
/// (est - truth), MSE = mean squared error (so MSE = bias^2 + variance),
/// coverage = share of closed intervals containing the truth, width = mean
/// interval width. abs_bias is |bias|. Averages over regions are appended as
/// region -1. Missing fits (nullopt) count as failures.
MetricsReport simulation_metrics(const std::string& scenario, const std::string& model,
                                 const std::vector<Eigen::MatrixXd>& truths,
                                 const std::vector<std::optional<PosteriorSummary>>& fits);

}  // namespace msae
