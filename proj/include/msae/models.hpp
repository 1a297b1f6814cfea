#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "msae/survey.hpp"

namespace msae {

enum class AreaFamily { Direct, UniIID, UniBYM, BivNonsharedIID, BivNonsharedBYM, BivSharedIID, BivSharedBYM };
enum class UnitFamily { IIDNonshared, BYMNonshared, IIDShared, BYMShared };

/// How much of the Stage-1 covariance a Stage-2 model consumes. Fixed by the
/// family; there is deliberately no way to override it.
enum class CovarianceMode { Full, Diagonal };

CovarianceMode stage1_covariance_mode(AreaFamily family);
bool is_shared(AreaFamily family);
bool is_shared(UnitFamily family);
bool is_bym(AreaFamily family);
bool is_bym(UnitFamily family);

std::string family_name(AreaFamily family);
std::string family_name(UnitFamily family);
std::optional<AreaFamily> parse_area_family(std::string_view name);
std::optional<UnitFamily> parse_unit_family(std::string_view name);

/// Gaussian N(mean, sd^2) or improper flat prior on the shared coefficient.
struct LambdaPrior {
  enum class Kind { Gaussian, Flat } kind = Kind::Gaussian;
  double mean = 0.0;
  double sd = 31.62;
};

struct PriorConfig {
  double sd_pc_u = 1.0;       ///< PC prior: P(sd > U) = alpha
  double sd_pc_alpha = 0.01;
  double rho_a = 1.0;         ///< Beta(a, b) on every mixing proportion
  double rho_b = 1.0;
  LambdaPrior lambda;

  double pc_rate() const;
  void validate() const;
};

struct AreaModelSpec {
  AreaFamily family = AreaFamily::BivSharedBYM;
  int shared_source = 1;  ///< 0-based outcome whose effect also enters the other outcome
  PriorConfig priors;

  CovarianceMode covariance_mode() const { return stage1_covariance_mode(family); }
  bool shared() const { return is_shared(family); }
  int shared_target() const { return 1 - shared_source; }
};

struct UnitModelSpec {
  UnitFamily family = UnitFamily::BYMShared;
  bool per_region_likelihood_variance = false;
  int shared_source = 1;
  PriorConfig priors;

  bool shared() const { return is_shared(family); }
  int shared_target() const { return 1 - shared_source; }
};

using ModelSpec = std::variant<AreaModelSpec, UnitModelSpec>;

std::string model_name(const ModelSpec& spec);

/// Values of the latent symbols at one point of parameter space. `s` holds
/// each outcome's own effect per region (R x C); unit models add `gamma` and
/// the cluster effects `eps` (one row per cluster).
struct LatentState {
  Eigen::VectorXd beta;
  Eigen::MatrixXd s;
  std::optional<Eigen::VectorXd> gamma;
  std::optional<double> lambda;
  std::optional<Eigen::MatrixXd> eps;
};

/// Total (shared-inclusive) effect g_r of every outcome: s_r, with lambda *
/// s_r,source added to the target outcome for shared families.
Eigen::VectorXd region_effect(bool shared, int shared_source, const LatentState& latent, int region);

Eigen::VectorXd area_linear_predictor(const AreaModelSpec& spec, const LatentState& latent, int region);

/// `cluster` indexes the rows of latent.eps.
Eigen::VectorXd unit_linear_predictor(const UnitModelSpec& spec, const LatentState& latent, int region,
                                      int cluster, bool rural);

/// (1 - q_r)(beta + g_r) + q_r (beta + gamma + g_r); cluster effects excluded.
Eigen::VectorXd aggregate_region_mean(const UnitModelSpec& spec, const LatentState& latent,
                                      const RuralFractions& q, int region);

/// log of the exponential density with rate -ln(alpha) / U at `sd`.
double pc_prior_log_density(double sd, double U, double alpha);

/// Moves the shared coefficient to the other outcome's effect.
AreaModelSpec reparameterize_shared_direction(const AreaModelSpec& spec);
UnitModelSpec reparameterize_shared_direction(const UnitModelSpec& spec);

/// `{"level": "area"|"unit", "family": "...", "shared_direction": 2, "priors": {...}}`;
/// unit specs may add `"per_region_likelihood_variance": true`.
ModelSpec model_spec_from_json(const nlohmann::json& doc);
nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec load_model_spec(const std::filesystem::path& path);

}  // namespace msae
