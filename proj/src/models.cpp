#include "msae/models.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "msae/error.hpp"

namespace msae {

using json = nlohmann::json;

namespace {

struct AreaName {
  AreaFamily family;
  const char* name;
};
constexpr AreaName kAreaNames[] = {
    {AreaFamily::Direct, "direct"},
    {AreaFamily::UniIID, "uni_iid"},
    {AreaFamily::UniBYM, "uni_bym"},
    {AreaFamily::BivNonsharedIID, "biv_nonshared_iid"},
    {AreaFamily::BivNonsharedBYM, "biv_nonshared_bym"},
    {AreaFamily::BivSharedIID, "biv_shared_iid"},
    {AreaFamily::BivSharedBYM, "biv_shared_bym"},
};

struct UnitName {
  UnitFamily family;
  const char* name;
};
constexpr UnitName kUnitNames[] = {
    {UnitFamily::IIDNonshared, "iid_nonshared"},
    {UnitFamily::BYMNonshared, "bym_nonshared"},
    {UnitFamily::IIDShared, "iid_shared"},
    {UnitFamily::BYMShared, "bym_shared"},
};

void require(bool present, const char* block) {
  if (!present) throw ValidationError(std::string("latent state lacks the '") + block + "' block");
}

}  // namespace

CovarianceMode stage1_covariance_mode(AreaFamily family) {
  return family == AreaFamily::UniIID || family == AreaFamily::UniBYM ? CovarianceMode::Diagonal
                                                                      : CovarianceMode::Full;
}

bool is_shared(AreaFamily f) { return f == AreaFamily::BivSharedIID || f == AreaFamily::BivSharedBYM; }
bool is_shared(UnitFamily f) { return f == UnitFamily::IIDShared || f == UnitFamily::BYMShared; }
bool is_bym(AreaFamily f) {
  return f == AreaFamily::UniBYM || f == AreaFamily::BivNonsharedBYM || f == AreaFamily::BivSharedBYM;
}
bool is_bym(UnitFamily f) { return f == UnitFamily::BYMNonshared || f == UnitFamily::BYMShared; }

std::string family_name(AreaFamily family) {
  for (const auto& n : kAreaNames)
    if (n.family == family) return n.name;
  return "?";
}

std::string family_name(UnitFamily family) {
  for (const auto& n : kUnitNames)
    if (n.family == family) return n.name;
  return "?";
}

std::optional<AreaFamily> parse_area_family(std::string_view name) {
  for (const auto& n : kAreaNames)
    if (name == n.name) return n.family;
  return std::nullopt;
}

std::optional<UnitFamily> parse_unit_family(std::string_view name) {
  for (const auto& n : kUnitNames)
    if (name == n.name) return n.family;
  return std::nullopt;
}

std::string model_name(const ModelSpec& spec) {
  return std::visit([](const auto& s) { return family_name(s.family); }, spec);
}

double PriorConfig::pc_rate() const { return -std::log(sd_pc_alpha) / sd_pc_u; }

void PriorConfig::validate() const {
  if (!(sd_pc_u > 0.0)) throw ValidationError("PC prior threshold U must be positive");
  if (!(sd_pc_alpha > 0.0 && sd_pc_alpha < 1.0)) throw ValidationError("PC prior alpha must lie in (0, 1)");
  if (!(rho_a > 0.0 && rho_b > 0.0)) throw ValidationError("Beta prior parameters must be positive");
  if (lambda.kind == LambdaPrior::Kind::Gaussian && !(lambda.sd > 0.0))
    throw ValidationError("lambda prior sd must be positive");
}

Eigen::VectorXd region_effect(bool shared, int shared_source, const LatentState& latent, int region) {
  Eigen::VectorXd g = latent.s.row(region).transpose();
  if (shared) {
    require(latent.lambda.has_value(), "lambda");
    g(1 - shared_source) += *latent.lambda * latent.s(region, shared_source);
  }
  return g;
}

Eigen::VectorXd area_linear_predictor(const AreaModelSpec& spec, const LatentState& latent, int region) {
  if (spec.family == AreaFamily::Direct)
    throw ValidationError("the direct family has no Stage-2 linear predictor");
  require(latent.beta.size() == 2, "beta");
  require(latent.s.cols() == 2 && region < latent.s.rows(), "s");
  return latent.beta + region_effect(spec.shared(), spec.shared_source, latent, region);
}

Eigen::VectorXd unit_linear_predictor(const UnitModelSpec& spec, const LatentState& latent, int region,
                                      int cluster, bool rural) {
  require(latent.beta.size() == 2, "beta");
  require(latent.gamma.has_value(), "gamma");
  require(latent.eps.has_value() && cluster < latent.eps->rows(), "eps");
  Eigen::VectorXd mu = latent.beta + region_effect(spec.shared(), spec.shared_source, latent, region);
  if (rural) mu += *latent.gamma;
  return mu + latent.eps->row(cluster).transpose();
}

Eigen::VectorXd aggregate_region_mean(const UnitModelSpec& spec, const LatentState& latent,
                                      const RuralFractions& q, int region) {
  require(latent.gamma.has_value(), "gamma");
  if (region >= static_cast<int>(q.q.size()))
    throw ValidationError("no rural fraction for region " + std::to_string(region + 1));
  const double qr = q.q[static_cast<std::size_t>(region)];
  const Eigen::VectorXd g = region_effect(spec.shared(), spec.shared_source, latent, region);
  return (1.0 - qr) * (latent.beta + g) + qr * (latent.beta + *latent.gamma + g);
}

double pc_prior_log_density(double sd, double U, double alpha) {
  const double rate = -std::log(alpha) / U;
  if (sd < 0.0) return -INFINITY;
  return std::log(rate) - rate * sd;
}

AreaModelSpec reparameterize_shared_direction(const AreaModelSpec& spec) {
  if (!spec.shared()) throw ValidationError(family_name(spec.family) + " has no shared component to flip");
  AreaModelSpec out = spec;
  out.shared_source = 1 - spec.shared_source;
  return out;
}

UnitModelSpec reparameterize_shared_direction(const UnitModelSpec& spec) {
  if (!spec.shared()) throw ValidationError(family_name(spec.family) + " has no shared component to flip");
  UnitModelSpec out = spec;
  out.shared_source = 1 - spec.shared_source;
  return out;
}

namespace {

PriorConfig priors_from_json(const json& doc) {
  PriorConfig p;
  if (doc.is_null()) return p;
  if (!doc.is_object()) throw ParseError("'priors' must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "sd_pc_u") {
      p.sd_pc_u = value.get<double>();
    } else if (key == "sd_pc_alpha") {
      p.sd_pc_alpha = value.get<double>();
    } else if (key == "rho_beta") {
      if (!value.is_array() || value.size() != 2) throw ParseError("'rho_beta' must be [a, b]");
      p.rho_a = value[0].get<double>();
      p.rho_b = value[1].get<double>();
    } else if (key == "lambda_prior") {
      const std::string kind = value.is_string() ? value.get<std::string>() : value.value("kind", "gaussian");
      if (kind == "flat") {
        p.lambda.kind = LambdaPrior::Kind::Flat;
      } else if (kind == "gaussian") {
        p.lambda.kind = LambdaPrior::Kind::Gaussian;
        if (value.is_object()) {
          p.lambda.mean = value.value("mean", 0.0);
          p.lambda.sd = value.value("sd", p.lambda.sd);
        }
      } else {
        throw ParseError("lambda_prior kind must be 'gaussian' or 'flat'");
      }
    } else if (key == "fixed_effect_prior") {
      if (value != "flat") throw ParseError("only the flat fixed-effect prior is supported");
    } else {
      throw ParseError("unknown prior setting '" + key + "'");
    }
  }
  p.validate();
  return p;
}

json priors_to_json(const PriorConfig& p) {
  json lambda = p.lambda.kind == LambdaPrior::Kind::Flat
                    ? json{{"kind", "flat"}}
                    : json{{"kind", "gaussian"}, {"mean", p.lambda.mean}, {"sd", p.lambda.sd}};
  return json{{"sd_pc_u", p.sd_pc_u},
              {"sd_pc_alpha", p.sd_pc_alpha},
              {"rho_beta", {p.rho_a, p.rho_b}},
              {"lambda_prior", lambda},
              {"fixed_effect_prior", "flat"}};
}

int shared_source_from_json(const json& doc) {
  const int dir = doc.value("shared_direction", 2);
  if (dir != 1 && dir != 2) throw ParseError("'shared_direction' must be 1 or 2");
  return dir - 1;
}

}  // namespace

ModelSpec model_spec_from_json(const json& doc) {
  try {
    if (!doc.is_object()) throw ParseError("model spec must be a JSON object");
    const std::string level = doc.value("level", "area");
    const std::string family = doc.at("family").get<std::string>();
    if (level == "area") {
      auto f = parse_area_family(family);
      if (!f)
        throw ParseError("unknown area family '" + family +
                         "' (expected direct, uni_iid, uni_bym, biv_nonshared_iid, biv_nonshared_bym, "
                         "biv_shared_iid, biv_shared_bym)");
      AreaModelSpec spec;
      spec.family = *f;
      spec.shared_source = shared_source_from_json(doc);
      spec.priors = priors_from_json(doc.value("priors", json()));
      return spec;
    }
    if (level == "unit") {
      auto f = parse_unit_family(family);
      if (!f)
        throw ParseError("unknown unit family '" + family +
                         "' (expected iid_nonshared, bym_nonshared, iid_shared, bym_shared)");
      UnitModelSpec spec;
      spec.family = *f;
      spec.shared_source = shared_source_from_json(doc);
      spec.per_region_likelihood_variance = doc.value("per_region_likelihood_variance", false);
      spec.priors = priors_from_json(doc.value("priors", json()));
      return spec;
    }
    throw ParseError("'level' must be 'area' or 'unit'");
  } catch (const json::exception& e) {
    throw ParseError(std::string("model spec: ") + e.what());
  }
}

json model_spec_to_json(const ModelSpec& spec) {
  if (const auto* a = std::get_if<AreaModelSpec>(&spec)) {
    return json{{"level", "area"},
                {"family", family_name(a->family)},
                {"shared_direction", a->shared_source + 1},
                {"priors", priors_to_json(a->priors)}};
  }
  const auto& u = std::get<UnitModelSpec>(spec);
  return json{{"level", "unit"},
              {"family", family_name(u.family)},
              {"shared_direction", u.shared_source + 1},
              {"per_region_likelihood_variance", u.per_region_likelihood_variance},
              {"priors", priors_to_json(u.priors)}};
}

ModelSpec load_model_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model spec " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("model spec " + path.string() + ": " + e.what());
  }
  return model_spec_from_json(doc);
}

}  // namespace msae
