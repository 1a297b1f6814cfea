#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "msae/evaluation.hpp"
#include "msae/mcmc.hpp"
#include "msae/survey.hpp"

namespace msae {

std::string tool_version();

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  std::vector<std::string> args;
  std::map<std::string, std::filesystem::path> inputs;  ///< role -> file
  std::uint64_t seed = 0;

  /// Digests every input. The timestamp is SOURCE_DATE_EPOCH when set,
  /// otherwise the current time.
  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;
};

/// Draw table: `chain,draw,<column>...`, one row per kept draw.
void write_samples_csv(const ModelFit& fit, const std::filesystem::path& path);

struct SampleTable {
  std::vector<std::string> columns;  ///< excluding chain and draw
  Eigen::MatrixXd draws;
  std::vector<int> chain;

  int column_index(const std::string& name) const;  ///< -1 when absent
};

SampleTable read_samples_csv(const std::filesystem::path& path);

/// One row per region and outcome:
/// `region,outcome,median,q025,q10,q90,q975,mean,sd,status`.
/// `mu[r]` holds draws (rows) by outcome (columns) for region r.
void write_region_summary_csv(const std::vector<Eigen::MatrixXd>& mu, const AdjacencyGraph& graph, bool healthy,
                              const std::filesystem::path& path);

void write_fit_summary_csv(const ModelFit& fit, const AdjacencyGraph& graph, const std::filesystem::path& path);

nlohmann::json diagnostics_json(const ModelFit& fit);
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);

/// `model,region,log_lhat` and `model,logscore_sum,logscore_mean,scored`,
/// the latter ranked by logscore_mean (best first, ties in input order).
void write_logscore_csvs(const std::vector<LogScoreReport>& reports, const AdjacencyGraph& graph,
                         const std::filesystem::path& per_region, const std::filesystem::path& summary);

/// Copies a GeoJSON FeatureCollection, adding `<stem>_<outcome>_median`,
/// `_q025` and `_q975` properties to every feature whose `key` property
/// equals a region label.
void merge_geojson(const std::filesystem::path& in, const std::filesystem::path& out, const std::string& key,
                   const std::string& stem, const std::vector<Eigen::MatrixXd>& mu, const AdjacencyGraph& graph);

/// Area means under `q` from the draws of a unit-level fit: beta, gamma,
/// sigma, rho, lambda and the v_star / u_star columns are required.
std::vector<Eigen::MatrixXd> aggregate_samples(const SampleTable& table, const UnitModelSpec& spec,
                                               const AdjacencyGraph& graph, const RuralFractions& q);

/// Per-region mu draws of a fit, indexed by region.
std::vector<Eigen::MatrixXd> fit_mu_draws(const ModelFit& fit);

}  // namespace msae
