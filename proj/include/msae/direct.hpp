#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "msae/survey.hpp"

namespace msae {

enum class LonelyPsuPolicy {
  Error,     ///< throw LonelyPsuError naming the stratum
  Centered,  ///< deviate the lonely cluster total from the regional grand mean
};

std::optional<LonelyPsuPolicy> parse_lonely_psu_policy(std::string_view name);

/// Stage-1 output: per-region weighted means and their design covariance.
struct DirectEstimateSet {
  Eigen::MatrixXd y_hat;               ///< R x C; NaN where unavailable
  std::vector<Eigen::MatrixXd> V_hat;  ///< R matrices, C x C; NaN rows/cols where unavailable
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> available;  ///< R x C
  std::vector<bool> psd_projected;     ///< covariance was clipped to the PSD cone
  std::vector<std::string> notes;      ///< why a region (or cell) is unavailable

  int regions() const { return static_cast<int>(y_hat.rows()); }
  int outcomes() const { return static_cast<int>(y_hat.cols()); }

  /// Outcome indices with an estimate in `region`.
  std::vector<int> available_outcomes(int region) const;
  bool any_available(int region) const { return available.row(region).any(); }

  /// Copy with every cell of `region` marked unavailable.
  DirectEstimateSet without_region(int region) const;

  /// Empty set of the given shape, every cell unavailable.
  static DirectEstimateSet empty(int regions, int outcomes);
};

/// Hájek weighted mean of one outcome in one region over the records that
/// observe it; nullopt when none do.
std::optional<double> hajek_mean(const SurveyDataset& data, int region, int outcome);

/// Stratified with-replacement ultimate-cluster linearization covariance of
/// the region's Hájek mean vector. Each (c, c') cell uses the records that
/// observe both outcomes, with weights renormalized over that subset; cells
/// without such records are 0. `projected`, when given, reports whether the
/// assembled matrix had to be clipped to the PSD cone.
Eigen::MatrixXd design_covariance(const SurveyDataset& data, int region,
                                  LonelyPsuPolicy policy = LonelyPsuPolicy::Error,
                                  bool* projected = nullptr);

/// Region-by-region Stage-1 estimates. Failures become unavailable cells
/// with a note; under the `error` policy a lonely stratum makes the whole
/// region unavailable.
DirectEstimateSet direct_estimates(const SurveyDataset& data,
                                   LonelyPsuPolicy policy = LonelyPsuPolicy::Error);

/// Strata of `region` holding exactly one cluster among records that observe any outcome.
std::vector<std::string> lonely_strata(const SurveyDataset& data, int region);

/// `region,y1..yC,v_1_1,v_1_2,...,v_C_C,avail1..availC`; the covariance
/// block is the upper triangle in row-major order. Unavailable entries are
/// empty fields.
void write_direct_estimates_csv(const DirectEstimateSet& est, const AdjacencyGraph& graph,
                                const std::filesystem::path& path);

/// Reads the format above. Rows are matched to graph nodes by label; nodes
/// without a row are unavailable.
DirectEstimateSet read_direct_estimates_csv(const std::filesystem::path& path,
                                            const AdjacencyGraph& graph);

}  // namespace msae
