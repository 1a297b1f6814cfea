#include "msae/simulation.hpp"

#include <cmath>
#include <fstream>
#include <mutex>

#include <nlohmann/json.hpp>

#include "msae/csv.hpp"
#include "msae/error.hpp"
#include "msae/gmrf.hpp"
#include "msae/parallel.hpp"
#include "msae/rng.hpp"

namespace msae {

using json = nlohmann::json;

namespace {

std::string idx(int i) { return std::to_string(i + 1); }

// Own effect s_c of one outcome per the generating family.
Eigen::VectorXd draw_effect(const ScenarioParameters& p, const IcarStructure& icar, int c, Rng& rng) {
  const int R = icar.size();
  Bym2Effect e;
  e.sigma = p.sigma(c);
  e.rho = p.bym ? p.rho(c) : 0.0;
  e.v_star.resize(R);
  for (int r = 0; r < R; ++r) e.v_star(r) = rng.normal();
  e.u_star = p.bym ? sample_constrained_icar(icar, rng) : Eigen::VectorXd::Zero(R);
  return realize_bym2(e, &icar);
}

Eigen::MatrixXd draw_effects(const ScenarioParameters& p, const IcarStructure& icar, Rng& rng) {
  Eigen::MatrixXd s(icar.size(), 2);
  for (int c = 0; c < 2; ++c) s.col(c) = draw_effect(p, icar, c, rng);
  return s;
}

LatentState latent_for(const ScenarioParameters& p, const Eigen::MatrixXd& s) {
  LatentState st;
  st.beta = p.beta;
  st.s = s;
  st.gamma = p.gamma;
  if (p.shared) st.lambda = p.lambda;
  return st;
}

void write_truth(const Eigen::MatrixXd& truth, const AdjacencyGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "region";
  for (Eigen::Index c = 0; c < truth.cols(); ++c) out << ",mu" << c + 1;
  out << '\n';
  for (Eigen::Index r = 0; r < truth.rows(); ++r) {
    out << csv::quote(graph.label(static_cast<int>(r)));
    for (Eigen::Index c = 0; c < truth.cols(); ++c) out << ',' << csv::format(truth(r, c));
    out << '\n';
  }
}

void write_summary(const PosteriorSummary& s, const AdjacencyGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "region,outcome,median,q025,q975\n";
  for (Eigen::Index r = 0; r < s.median.rows(); ++r)
    for (Eigen::Index c = 0; c < s.median.cols(); ++c)
      out << csv::quote(graph.label(static_cast<int>(r))) << ',' << c + 1 << ',' << csv::format(s.median(r, c)) << ','
          << csv::format(s.lower(r, c)) << ',' << csv::format(s.upper(r, c)) << '\n';
}

}  // namespace

std::string ScenarioConfig::label() const {
  return std::string(level == Level::Area ? "area:" : "unit:") + std::to_string(scenario_id);
}

void ScenarioConfig::validate() const {
  const int max_id = level == Level::Area ? 9 : 7;
  if (scenario_id < 1 || scenario_id > max_id)
    throw ValidationError(std::string(level == Level::Area ? "area" : "unit") + " scenarios are numbered 1-" +
                          std::to_string(max_id) + ", got " + std::to_string(scenario_id));
  if (replicate_count < 1) throw ValidationError("replicate count must be at least 1");
  if (graph.size() < 1) throw ValidationError("scenario graph is empty");
  if (level == Level::Unit) {
    if (layout.urban_clusters < 1 || layout.rural_clusters < 1 || layout.individuals < 1)
      throw ValidationError("unit layout needs at least one urban and one rural cluster with respondents");
    if (q) q->validate(graph.size());
  }
}

std::optional<std::pair<Level, int>> parse_scenario_id(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  const auto level = text.substr(0, colon);
  Level lv;
  if (level == "area")
    lv = Level::Area;
  else if (level == "unit")
    lv = Level::Unit;
  else
    return std::nullopt;
  try {
    const long long id = csv::parse_int(text.substr(colon + 1), 0);
    return std::make_pair(lv, static_cast<int>(id));
  } catch (const ParseError&) {
    return std::nullopt;
  }
}

ScenarioConfig scenario_config_from_json(const json& doc) {
  ScenarioConfig cfg;
  try {
    const std::string level = doc.value("level", "area");
    if (level != "area" && level != "unit") throw ParseError("scenario 'level' must be 'area' or 'unit'");
    cfg.level = level == "area" ? Level::Area : Level::Unit;
    cfg.scenario_id = doc.value("scenario", 1);
    cfg.replicate_count = doc.value("replicates", cfg.replicate_count);
    cfg.seed = doc.value("seed", cfg.seed);
    cfg.redraw_effects = doc.value("redraw_effects", false);
    if (doc.contains("overrides"))
      for (const auto& [k, v] : doc.at("overrides").items()) cfg.overrides[k] = v.get<double>();
    if (doc.contains("layout")) {
      const auto& l = doc.at("layout");
      cfg.layout.urban_clusters = l.value("urban_clusters", cfg.layout.urban_clusters);
      cfg.layout.rural_clusters = l.value("rural_clusters", cfg.layout.rural_clusters);
      cfg.layout.individuals = l.value("individuals", cfg.layout.individuals);
      cfg.layout.population = l.value("population", cfg.layout.population);
    }
    if (doc.contains("q")) cfg.q = RuralFractions{doc.at("q").get<std::vector<double>>()};
  } catch (const json::exception& e) {
    throw ParseError(std::string("scenario config: ") + e.what());
  }
  return cfg;
}

ScenarioParameters scenario_parameters(const ScenarioConfig& cfg) {
  cfg.validate();
  ScenarioParameters p;
  const int id = cfg.scenario_id;
  if (cfg.level == Level::Area) {
    p.beta = {-0.98, -0.87};
    p.sigma = {0.19, 0.25};
    p.rho = {0.79, 0.92};
    p.lambda = 0.75;
    p.gamma = {0.0, 0.0};
    p.omega = {0.0, 0.0};
    p.sigma_eps = {0.0, 0.0};
    p.bym = id == 2 || id == 4 || id >= 6;
    p.shared = id >= 5;
    p.stage1_correlated = id >= 3;
    if (id == 7) p.stage1_variance_scale = {10.0, 10.0};
    if (id == 8) p.stage1_variance_scale = {0.1, 0.1};
    if (id == 9) {
      p.stage1_variance_scale = {10.0, 0.1};
      p.stage1_fixed_corr = 0.5;
    }
  } else {
    p.beta = {-0.77, -0.66};
    p.sigma = {0.13, 0.19};
    p.rho = {0.71, 0.67};
    p.lambda = 0.72;
    p.gamma = {-0.29, -0.29};
    p.omega = {1.31, 1.14};
    p.sigma_eps = {0.36, 0.33};
    p.bym = id == 2 || id >= 4;
    p.shared = id >= 3;
    Eigen::Vector2d mult{1.0, 1.0};
    if (id == 5) mult = {2.0, 2.0};
    if (id == 6) mult = {0.5, 0.5};
    if (id == 7) mult = {2.0, 0.5};
    p.omega = p.omega.cwiseProduct(mult);
    p.sigma_eps = p.sigma_eps.cwiseProduct(mult);
  }
  if (!p.shared) p.lambda = 0.0;

  for (const auto& [key, value] : cfg.overrides) {
    auto vec = [&](const char* stem, Eigen::Vector2d& target) {
      for (int c = 0; c < 2; ++c)
        if (key == std::string(stem) + "." + idx(c)) {
          target(c) = value;
          return true;
        }
      return false;
    };
    if (vec("beta", p.beta) || vec("sigma", p.sigma) || vec("rho", p.rho) || vec("gamma", p.gamma) ||
        vec("omega", p.omega) || vec("sigma_eps", p.sigma_eps))
      continue;
    if (key == "lambda")
      p.lambda = value;
    else if (key == "stage1_sd_min")
      p.sd_min = value;
    else if (key == "stage1_sd_max")
      p.sd_max = value;
    else if (key == "stage1_corr_min")
      p.corr_min = value;
    else if (key == "stage1_corr_max")
      p.corr_max = value;
    else
      throw ValidationError("unknown scenario override '" + key + "'");
  }
  for (int c = 0; c < 2; ++c) {
    if (p.sigma(c) < 0.0 || p.omega(c) < 0.0 || p.sigma_eps(c) < 0.0)
      throw ValidationError("scenario standard deviations must be nonnegative");
    if (p.rho(c) < 0.0 || p.rho(c) > 1.0) throw ValidationError("scenario rho must lie in [0, 1]");
  }
  return p;
}

// ---------------------------------------------------------------------------

AreaScenario::AreaScenario(ScenarioConfig config) : config_(std::move(config)) {
  if (config_.level != Level::Area) throw ValidationError("not an area-level scenario");
  params_ = scenario_parameters(config_);
  icar_ = scaled_icar(config_.graph);
  Rng rng(derive_seed(config_.seed, 0));
  const int R = config_.graph.size();
  V_.resize(static_cast<std::size_t>(R));
  for (int r = 0; r < R; ++r) {
    Eigen::Vector2d sd;
    for (int c = 0; c < 2; ++c) sd(c) = params_.sd_min + (params_.sd_max - params_.sd_min) * rng.uniform();
    double corr = params_.corr_min + (params_.corr_max - params_.corr_min) * rng.uniform();
    if (!params_.stage1_correlated) corr = 0.0;
    if (params_.stage1_fixed_corr) corr = *params_.stage1_fixed_corr;
    sd = sd.cwiseProduct(params_.stage1_variance_scale.cwiseSqrt());
    Eigen::Matrix2d V;
    V << sd(0) * sd(0), corr * sd(0) * sd(1), corr * sd(0) * sd(1), sd(1) * sd(1);
    V_[static_cast<std::size_t>(r)] = V;
  }
  const Eigen::MatrixXd s = draw_effects(params_, icar_, rng);
  fixed_truth_.resize(R, 2);
  AreaModelSpec spec;
  spec.family = params_.shared ? AreaFamily::BivSharedBYM : AreaFamily::BivNonsharedBYM;
  spec.shared_source = params_.shared_source;
  const LatentState st = latent_for(params_, s);
  for (int r = 0; r < R; ++r) fixed_truth_.row(r) = area_linear_predictor(spec, st, r).transpose();
}

AreaReplicate AreaScenario::replicate(int k) const {
  Rng rng(derive_seed(config_.seed, static_cast<std::uint64_t>(k) + 1));
  const int R = config_.graph.size();
  AreaReplicate out;
  out.truth = fixed_truth_;
  if (config_.redraw_effects) {
    AreaModelSpec spec;
    spec.family = params_.shared ? AreaFamily::BivSharedBYM : AreaFamily::BivNonsharedBYM;
    spec.shared_source = params_.shared_source;
    const LatentState st = latent_for(params_, draw_effects(params_, icar_, rng));
    for (int r = 0; r < R; ++r) out.truth.row(r) = area_linear_predictor(spec, st, r).transpose();
  }
  out.estimates = DirectEstimateSet::empty(R, 2);
  for (int r = 0; r < R; ++r) {
    const auto& V = V_[static_cast<std::size_t>(r)];
    const Eigen::Matrix2d L = V.llt().matrixL();
    const Eigen::Vector2d xi{rng.normal(), rng.normal()};
    out.estimates.y_hat.row(r) = (out.truth.row(r).transpose() + L * xi).transpose();
    out.estimates.V_hat[static_cast<std::size_t>(r)] = V;
    out.estimates.available.row(r).setConstant(true);
    out.estimates.notes[static_cast<std::size_t>(r)].clear();
  }
  return out;
}

UnitScenario::UnitScenario(ScenarioConfig config) : config_(std::move(config)) {
  if (config_.level != Level::Unit) throw ValidationError("not a unit-level scenario");
  params_ = scenario_parameters(config_);
  icar_ = scaled_icar(config_.graph);
  Rng rng(derive_seed(config_.seed, 0));
  const int R = config_.graph.size();
  if (config_.q) {
    q_ = *config_.q;
  } else {
    q_.q.resize(static_cast<std::size_t>(R));
    for (auto& v : q_.q) v = 0.4 + 0.55 * rng.uniform();
  }
  fixed_s_ = draw_effects(params_, icar_, rng);
}

UnitReplicate UnitScenario::replicate(int k) const {
  Rng rng(derive_seed(config_.seed, static_cast<std::uint64_t>(k) + 1));
  const int R = config_.graph.size();
  const Eigen::MatrixXd s = config_.redraw_effects ? draw_effects(params_, icar_, rng) : fixed_s_;
  UnitModelSpec spec;
  spec.family = params_.shared ? UnitFamily::BYMShared : UnitFamily::BYMNonshared;
  spec.shared_source = params_.shared_source;
  LatentState st = latent_for(params_, s);

  UnitReplicate out;
  out.truth.resize(R, 2);
  for (int r = 0; r < R; ++r) out.truth.row(r) = aggregate_region_mean(spec, st, q_, r).transpose();

  const auto& L = config_.layout;
  std::vector<IndividualRecord> records;
  for (int r = 0; r < R; ++r) {
    const double qr = q_.q[static_cast<std::size_t>(r)];
    const Eigen::VectorXd g = region_effect(params_.shared, params_.shared_source, st, r);
    for (int rural = 0; rural < 2; ++rural) {
      const double share = rural ? qr : 1.0 - qr;
      const int clusters = rural ? L.rural_clusters : L.urban_clusters;
      if (share <= 0.0) continue;
      const double weight = share * L.population / (clusters * L.individuals);
      const std::string stratum = config_.graph.label(r) + (rural ? "_rural" : "_urban");
      for (int j = 0; j < clusters; ++j) {
        const std::string cluster = stratum + "_" + std::to_string(j + 1);
        Eigen::Vector2d mu = params_.beta + g;
        if (rural) mu += params_.gamma;
        for (int c = 0; c < 2; ++c) mu(c) += params_.sigma_eps(c) * rng.normal();
        for (int i = 0; i < L.individuals; ++i) {
          IndividualRecord rec;
          rec.region = r;
          rec.stratum = stratum;
          rec.cluster = cluster;
          rec.weight = weight;
          rec.rural = rural == 1;
          rec.outcomes = {mu(0) + params_.omega(0) * rng.normal(), mu(1) + params_.omega(1) * rng.normal()};
          records.push_back(std::move(rec));
        }
      }
    }
  }
  out.data = SurveyDataset(std::move(records), 2, R);
  return out;
}

AreaReplicate generate_area_scenario(const ScenarioConfig& config, int replicate) {
  return AreaScenario(config).replicate(replicate);
}

UnitReplicate generate_unit_scenario(const ScenarioConfig& config, int replicate) {
  return UnitScenario(config).replicate(replicate);
}

// ---------------------------------------------------------------------------

StudyResult run_simulation_study(const ScenarioConfig& config, const std::vector<ModelSpec>& models,
                                 const StudyOptions& options) {
  config.validate();
  for (const auto& m : models)
    if (config.level == Level::Area && std::holds_alternative<UnitModelSpec>(m))
      throw ValidationError("unit-level model " + model_name(m) + " cannot be fit to an area-level scenario");

  std::optional<AreaScenario> area;
  std::optional<UnitScenario> unit;
  if (config.level == Level::Area)
    area.emplace(config);
  else
    unit.emplace(config);

  const auto n_rep = static_cast<std::size_t>(config.replicate_count);
  const std::size_t M = models.size();
  std::vector<Eigen::MatrixXd> truths(n_rep);
  std::vector<std::vector<std::optional<PosteriorSummary>>> summaries(M, std::vector<std::optional<PosteriorSummary>>(n_rep));
  std::vector<std::vector<std::string>> messages(n_rep);

  parallel_for(n_rep, options.threads, [&](std::size_t k) {
    const int rep = static_cast<int>(k);
    DirectEstimateSet est;
    std::optional<SurveyDataset> data;
    if (area) {
      auto r = area->replicate(rep);
      truths[k] = r.truth;
      est = std::move(r.estimates);
    } else {
      auto r = unit->replicate(rep);
      truths[k] = r.truth;
      est = direct_estimates(r.data, options.lonely_psu);
      data = std::move(r.data);
    }
    std::optional<std::filesystem::path> dir;
    if (options.archive) {
      dir = *options.archive / ("scenario_" + std::to_string(config.scenario_id)) / ("replicate_" + std::to_string(rep + 1));
      std::filesystem::create_directories(*dir);
      if (data)
        write_survey_csv(*data, *dir / "data.csv", &config.graph);
      else
        write_direct_estimates_csv(est, config.graph, *dir / "data.csv");
      write_truth(truths[k], config.graph, *dir / "truth.csv");
    }
    for (std::size_t m = 0; m < M; ++m) {
      FitConfig fc = options.fit;
      fc.threads = 1;
      fc.seed = derive_seed(options.fit.seed, 100003 + k, m);
      fc.record_components = false;
      fc.record_cluster_effects = false;
      try {
        PosteriorSummary s;
        if (const auto* a = std::get_if<AreaModelSpec>(&models[m])) {
          s = a->family == AreaFamily::Direct ? summarize_direct(est) : summarize_fit(fit_area(*a, est, config.graph, fc));
        } else {
          s = summarize_fit(fit_unit(std::get<UnitModelSpec>(models[m]), *data, config.graph, unit->q(), fc));
        }
        if (dir) write_summary(s, config.graph, *dir / ("fit_" + model_name(models[m]) + ".csv"));
        summaries[m][k] = std::move(s);
      } catch (const Error& e) {
        messages[k].push_back("replicate " + std::to_string(rep + 1) + ", " + model_name(models[m]) + ": " + e.what());
      }
    }
  });

  StudyResult result;
  for (std::size_t m = 0; m < M; ++m) {
    const std::string name = model_name(models[m]);
    result.metrics.append(simulation_metrics(config.label(), name, truths, summaries[m]));
    int fails = 0;
    for (const auto& s : summaries[m]) fails += s ? 0 : 1;
    result.failures[name] = fails;
  }
  for (auto& msgs : messages)
    for (auto& msg : msgs) result.failure_messages.push_back(std::move(msg));
  return result;
}

void write_metrics_csv(const MetricsReport& report, const AdjacencyGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "scenario,model,outcome,region,bias,abs_bias,variance,mse,coverage,width,replicates,failures\n";
  for (const auto& row : report.rows) {
    const auto& m = row.metrics;
    out << csv::quote(row.scenario) << ',' << csv::quote(row.model) << ',' << row.outcome + 1 << ','
        << (row.region < 0 ? std::string("all") : csv::quote(graph.label(row.region))) << ',' << csv::format(m.bias)
        << ',' << csv::format(m.abs_bias) << ',' << csv::format(m.variance) << ',' << csv::format(m.mse) << ','
        << csv::format(m.coverage) << ',' << csv::format(m.width) << ',' << row.replicates << ',' << row.failures
        << '\n';
  }
}

}  // namespace msae
