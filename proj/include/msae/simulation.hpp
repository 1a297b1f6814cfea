#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "msae/direct.hpp"
#include "msae/evaluation.hpp"
#include "msae/gmrf.hpp"
#include "msae/mcmc.hpp"
#include "msae/models.hpp"
#include "msae/survey.hpp"

namespace msae {

enum class Level { Area, Unit };

/// Sampling layout of a simulated survey: every region has this many
/// urban and rural clusters, each with `individuals` respondents.
struct UnitLayout {
  int urban_clusters = 4;
  int rural_clusters = 4;
  int individuals = 15;
  double population = 1000.0;  ///< per-region population used to set design weights
};

struct ScenarioConfig {
  Level level = Level::Area;
  int scenario_id = 1;  ///< 1-9 (area) or 1-7 (unit)
  AdjacencyGraph graph = AdjacencyGraph::lattice47();
  int replicate_count = 100;
  std::uint64_t seed = 1;
  /// Keys: beta.c, sigma.c, rho.c, lambda, gamma.c, omega.c, sigma_eps.c,
  /// stage1_sd_min, stage1_sd_max, stage1_corr_min, stage1_corr_max.
  std::map<std::string, double> overrides;
  /// Redraw region effects in every replicate instead of holding them fixed.
  bool redraw_effects = false;
  UnitLayout layout;
  std::optional<RuralFractions> q;

  std::string label() const;  ///< e.g. "area:6"
  void validate() const;
};

/// Parses "area:6" / "unit:7".
std::optional<std::pair<Level, int>> parse_scenario_id(std::string_view text);

/// `{"level": "area", "scenario": 6, "replicates": 100, "seed": 1,
///   "overrides": {...}, "redraw_effects": false, "layout": {...}}`
ScenarioConfig scenario_config_from_json(const nlohmann::json& doc);

/// Generating values after applying the scenario and any overrides.
struct ScenarioParameters {
  bool shared = false;
  bool bym = false;
  Eigen::Vector2d beta, sigma, rho, gamma, omega, sigma_eps;
  double lambda = 0.0;
  int shared_source = 1;
  // Area level: Stage-1 covariance regime.
  bool stage1_correlated = true;
  Eigen::Vector2d stage1_variance_scale{1.0, 1.0};
  std::optional<double> stage1_fixed_corr;
  double sd_min = 0.05, sd_max = 0.15, corr_min = 0.35, corr_max = 0.95;
};

ScenarioParameters scenario_parameters(const ScenarioConfig& config);

struct AreaReplicate {
  Eigen::MatrixXd truth;  ///< R x 2 true region means
  DirectEstimateSet estimates;
};

struct UnitReplicate {
  Eigen::MatrixXd truth;
  SurveyDataset data;
};

/// Study-level draws (Stage-1 covariances, fixed effects, rural fractions)
/// come from the stream (seed, 0); replicate k uses (seed, k + 1) only, so
/// replicates can be generated in any order.
class AreaScenario {
 public:
  explicit AreaScenario(ScenarioConfig config);
  AreaReplicate replicate(int k) const;
  const ScenarioParameters& parameters() const { return params_; }
  const std::vector<Eigen::Matrix2d>& stage1_covariances() const { return V_; }
  const ScenarioConfig& config() const { return config_; }

 private:
  ScenarioConfig config_;
  ScenarioParameters params_;
  IcarStructure icar_;
  std::vector<Eigen::Matrix2d> V_;
  Eigen::MatrixXd fixed_truth_;
};

class UnitScenario {
 public:
  explicit UnitScenario(ScenarioConfig config);
  UnitReplicate replicate(int k) const;
  const ScenarioParameters& parameters() const { return params_; }
  const RuralFractions& q() const { return q_; }
  const ScenarioConfig& config() const { return config_; }

 private:
  ScenarioConfig config_;
  ScenarioParameters params_;
  IcarStructure icar_;
  RuralFractions q_;
  Eigen::MatrixXd fixed_s_;  // R x 2 own effects
};

AreaReplicate generate_area_scenario(const ScenarioConfig& config, int replicate);
UnitReplicate generate_unit_scenario(const ScenarioConfig& config, int replicate);

struct StudyOptions {
  FitConfig fit;
  unsigned threads = 1;  ///< concurrent replicates
  std::optional<std::filesystem::path> archive;
  LonelyPsuPolicy lonely_psu = LonelyPsuPolicy::Centered;  ///< Stage-1 estimates of simulated surveys
};

struct StudyResult {
  MetricsReport metrics;
  std::map<std::string, int> failures;  ///< per model
  std::vector<std::string> failure_messages;
};

/// Generates every replicate, fits every model, and accumulates metrics.
/// The direct family is summarized by its estimates and Wald intervals.
StudyResult run_simulation_study(const ScenarioConfig& config, const std::vector<ModelSpec>& models,
                                 const StudyOptions& options);

void write_metrics_csv(const MetricsReport& report, const AdjacencyGraph& graph, const std::filesystem::path& path);

}  // namespace msae
