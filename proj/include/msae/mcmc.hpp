#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msae/direct.hpp"
#include "msae/models.hpp"
#include "msae/survey.hpp"

namespace msae {

/// Where a chain ended: transformed hyperparameter coordinates, tuned
/// proposal scales and the Gibbs-updated scalars. Used to warm-start refits
/// of the same model (leave-one-out).
struct ChainEnd {
  std::vector<double> coords;
  std::vector<double> step;
  double lambda = 0.0;
  std::vector<double> log_omega;
};

struct FitConfig {
  int chains = 4;
  int warmup = 2000;
  int draws = 2000;  ///< kept draws per chain
  std::uint64_t seed = 1;
  unsigned threads = 1;

  /// Overrides every initial random-walk scale when set; 0 freezes the
  /// coordinates at their starting values.
  std::optional<double> initial_proposal_sd;
  bool adapt = true;

  /// Hyperparameters held at a value: "sigma.1", "rho.2", "lambda",
  /// "sigma_eps.1", "omega.2" (1-based outcome index).
  std::map<std::string, double> fixed;

  /// Sample from the prior: no likelihood, fixed effects held at 0.
  bool prior_only = false;

  /// Area level only: express the Stage-1 likelihood as univariate
  /// observations plus a per-region bivariate random effect with the
  /// Stage-1 covariance (the formulation used with INLA).
  bool augmented_likelihood = false;

  bool record_components = true;       ///< v_star / u_star columns
  bool record_cluster_effects = false; ///< eps columns (unit level)

  std::optional<ChainEnd> warm_start;  ///< start every chain here
};

struct ParameterDiagnostics {
  std::string name;
  double ess = 0.0;
  double rhat = 0.0;  ///< NaN with a single chain
};

struct Diagnostics {
  std::vector<ParameterDiagnostics> parameters;
  double max_rhat = 0.0;  ///< NaN with a single chain
  bool healthy = true;    ///< false if any split-R-hat exceeds 1.05
  std::vector<double> acceptance;        ///< per hyperparameter coordinate, post-warmup
  std::vector<std::string> acceptance_names;
};

/// Posterior draws of one model. Rows of `draws` are iterations, chain after
/// chain; columns are named symbols such as `beta.1`, `rho.2`, `lambda`,
/// `mu.1.12` (outcome 1, region 12), `u_star.2.5`.
struct ModelFit {
  ModelSpec spec;
  std::vector<std::string> columns;
  Eigen::MatrixXd draws;
  int chain_count = 0;
  int draws_per_chain = 0;
  std::uint64_t seed = 0;
  int regions = 0;
  int outcomes = 0;
  Diagnostics diagnostics;
  std::vector<std::string> notes;  ///< variance floors, island handling, ...
  std::vector<ChainEnd> chain_ends;

  int column_index(const std::string& name) const;  ///< -1 when absent
  bool has_column(const std::string& name) const { return column_index(name) >= 0; }
  Eigen::VectorXd column(const std::string& name) const;
  Eigen::VectorXd chain_column(const std::string& name, int chain) const;

  /// Draws of mu for one region: rows are draws, columns outcomes.
  Eigen::MatrixXd mu_draws(int region) const;

  /// `count` row indices evenly spread over all kept draws.
  std::vector<int> thinned_rows(int count) const;
};

std::string mu_column(int outcome, int region);  // 0-based arguments

/// Stage-2 fit to direct estimates. Regions without estimates get
/// predictions but no likelihood term. The direct family returns draws of
/// mu from N(y_hat_r, V_hat_r).
ModelFit fit_area(const AreaModelSpec& spec, const DirectEstimateSet& estimates, const AdjacencyGraph& graph,
                  const FitConfig& config);

/// Unit-level fit to individual records; mu columns hold the urban/rural
/// aggregate region means under `q`.
ModelFit fit_unit(const UnitModelSpec& spec, const SurveyDataset& data, const AdjacencyGraph& graph,
                  const RuralFractions& q, const FitConfig& config);

/// Split-R-hat and rank-free (Geyer initial monotone sequence) effective
/// sample size per scalar; `draws` rows are chain-major.
ParameterDiagnostics diagnose(const std::string& name, const Eigen::VectorXd& draws, int chains);

/// Diagnostics over the named columns of a fit.
Diagnostics compute_diagnostics(const ModelFit& fit, const std::vector<std::string>& names);

/// Full conditional of the shared coefficient given everything else, for a
/// Gaussian data term -0.5 z'Pz + b'z in which the latent vector moves as
/// z0 + lambda d.
struct LambdaConditional {
  double mean = 0.0;
  double precision = 0.0;  ///< 0 when the conditional is flat
};
LambdaConditional lambda_full_conditional(const Eigen::MatrixXd& P_data, const Eigen::VectorXd& b,
                                          const Eigen::VectorXd& z0, const Eigen::VectorXd& d,
                                          const LambdaPrior& prior);

}  // namespace msae
