#include <doctest.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "msae/error.hpp"
#include "msae/evaluation.hpp"
#include "msae/simulation.hpp"

using namespace msae;

namespace {

ScenarioConfig area(int id, const AdjacencyGraph& g = AdjacencyGraph::lattice(4, 4)) {
  ScenarioConfig sc;
  sc.scenario_id = id;
  sc.graph = g;
  return sc;
}

ScenarioConfig unit(int id, const AdjacencyGraph& g = AdjacencyGraph::lattice(3, 3)) {
  ScenarioConfig sc;
  sc.level = Level::Unit;
  sc.scenario_id = id;
  sc.graph = g;
  return sc;
}

double sample_cov(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0, s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / (n - 1.0);
}

}  // namespace

TEST_CASE("scenario ids") {
  CHECK(parse_scenario_id("area:6") == std::make_pair(Level::Area, 6));
  CHECK(parse_scenario_id("unit:7") == std::make_pair(Level::Unit, 7));
  CHECK_FALSE(parse_scenario_id("region:2"));
  CHECK_FALSE(parse_scenario_id("area"));
  CHECK_FALSE(parse_scenario_id("area:x"));
  CHECK_THROWS_AS(scenario_parameters(unit(8)), ValidationError);
  CHECK_THROWS_AS(scenario_parameters(area(0)), ValidationError);
  CHECK_THROWS_AS(scenario_parameters(area(10)), ValidationError);
  auto sc = area(3);
  sc.overrides["kappa"] = 1.0;
  CHECK_THROWS_AS(scenario_parameters(sc), ValidationError);
}

TEST_CASE("default parameters per scenario") {
  const auto a6 = scenario_parameters(area(6));
  CHECK(a6.shared);
  CHECK(a6.bym);
  CHECK(a6.beta == Eigen::Vector2d(-0.98, -0.87));
  CHECK(a6.lambda == 0.75);
  const auto a3 = scenario_parameters(area(3));
  CHECK_FALSE(a3.shared);
  CHECK_FALSE(a3.bym);
  CHECK(a3.lambda == 0.0);
  const auto u7 = scenario_parameters(unit(7));
  CHECK(u7.omega(0) == doctest::Approx(2.0 * 1.31));
  CHECK(u7.omega(1) == doctest::Approx(0.5 * 1.14));
  CHECK(u7.sigma_eps(0) == doctest::Approx(2.0 * 0.36));
  CHECK(u7.sigma_eps(1) == doctest::Approx(0.5 * 0.33));
  CHECK(scenario_parameters(unit(1)).lambda == 0.0);
}

TEST_CASE("scenario config json") {
  const auto sc = scenario_config_from_json(nlohmann::json::parse(
      R"({"level": "unit", "scenario": 5, "replicates": 3, "seed": 9, "overrides": {"lambda": 0.5},
          "layout": {"urban_clusters": 2, "individuals": 4}})"));
  CHECK(sc.level == Level::Unit);
  CHECK(sc.scenario_id == 5);
  CHECK(sc.replicate_count == 3);
  CHECK(sc.seed == 9);
  CHECK(sc.overrides.at("lambda") == 0.5);
  CHECK(sc.layout.urban_clusters == 2);
  CHECK(sc.layout.rural_clusters == 4);
  CHECK(sc.label() == "unit:5");
  CHECK_THROWS_AS(scenario_config_from_json(nlohmann::json::parse(R"({"level": "county"})")), ParseError);
}

TEST_CASE("scenario 1 with zero effect sds has constant truth") {
  auto sc = area(1);
  sc.overrides = {{"sigma.1", 0.0}, {"sigma.2", 0.0}};
  const AreaScenario scen(sc);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(16, 2);
  const int K = 400;
  for (int k = 0; k < K; ++k) {
    const auto rep = scen.replicate(k);
    for (int r = 0; r < 16; ++r) CHECK(rep.truth.row(r) == Eigen::RowVector2d(-0.98, -0.87));
    sum += rep.estimates.y_hat / K;
  }
  for (int r = 0; r < 16; ++r) {
    const auto& V = scen.stage1_covariances()[r];
    CHECK(V(0, 1) == 0.0);  // univariate scenarios use independent Stage-1 errors
    for (int c = 0; c < 2; ++c) CHECK(std::abs(sum(r, c) - (c == 0 ? -0.98 : -0.87)) < 4.0 * std::sqrt(V(c, c) / K));
  }
}

TEST_CASE("shared scenario induces positive covariance of the true means") {
  auto sc = area(6);
  sc.redraw_effects = true;
  const AreaScenario scen(sc);
  std::vector<std::vector<double>> a(16), b(16);
  for (int k = 0; k < 1000; ++k) {
    const auto rep = scen.replicate(k);
    for (int r = 0; r < 16; ++r) {
      a[r].push_back(rep.truth(r, 0));
      b[r].push_back(rep.truth(r, 1));
    }
  }
  double mean_cov = 0.0;
  for (int r = 0; r < 16; ++r) mean_cov += sample_cov(a[r], b[r]) / 16.0;
  // Expected lambda * sigma_1^2 = 0.75 * 0.0361.
  CHECK(mean_cov > 0.0);
  CHECK(mean_cov == doctest::Approx(0.75 * 0.19 * 0.19).epsilon(0.25));
}

TEST_CASE("stage-1 variance regimes") {
  const auto base = AreaScenario(area(6));
  const auto big = AreaScenario(area(7));
  const auto small = AreaScenario(area(8));
  const auto mixed = AreaScenario(area(9));
  for (int r = 0; r < 16; ++r) {
    const auto& V = base.stage1_covariances()[r];
    CHECK(std::sqrt(V(0, 0)) >= 0.05);
    CHECK(std::sqrt(V(0, 0)) <= 0.15);
    // Same seed: the regimes rescale the same base draw.
    CHECK(big.stage1_covariances()[r](0, 0) == doctest::Approx(10.0 * V(0, 0)));
    CHECK(small.stage1_covariances()[r](1, 1) == doctest::Approx(0.1 * V(1, 1)));
    const auto& M = mixed.stage1_covariances()[r];
    CHECK(M(0, 0) == doctest::Approx(10.0 * V(0, 0)));
    CHECK(M(1, 1) == doctest::Approx(0.1 * V(1, 1)));
    CHECK(M(0, 1) == doctest::Approx(0.5 * std::sqrt(M(0, 0) * M(1, 1))));
    CHECK(M(0, 1) != 0.0);
  }
}

TEST_CASE("unit scenario 1 without random effects") {
  auto sc = unit(1);
  sc.overrides = {{"sigma.1", 0.0}, {"sigma.2", 0.0}, {"sigma_eps.1", 0.0}, {"sigma_eps.2", 0.0}};
  sc.layout.individuals = 40;
  const auto rep = generate_unit_scenario(sc, 0);
  const auto p = scenario_parameters(sc);
  for (int c = 0; c < 2; ++c)
    for (bool rural : {false, true}) {
      double sum = 0.0;
      int n = 0;
      for (const auto& rec : rep.data.records())
        if (rec.rural == rural) {
          sum += rec.outcomes[c];
          ++n;
        }
      const double expected = p.beta(c) + (rural ? p.gamma(c) : 0.0);
      CHECK(std::abs(sum / n - expected) < 4.0 * p.omega(c) / std::sqrt(n));
    }
  // Truth is the urban/rural mixture of the fixed effects.
  const UnitScenario scen(sc);
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 2; ++c)
      CHECK(rep.truth(r, c) == doctest::Approx(p.beta(c) + scen.q().q[r] * p.gamma(c)).epsilon(1e-14));
}

TEST_CASE("unit scenario 7 within-cluster variances") {
  auto sc = unit(7, AdjacencyGraph::lattice(5, 5));
  sc.layout.individuals = 50;
  const auto rep = generate_unit_scenario(sc, 0);
  const auto p = scenario_parameters(sc);
  for (int c = 0; c < 2; ++c) {
    double ss = 0.0, df = 0.0;
    for (const auto& [id, rows] : rep.data.cluster_index()) {
      double m = 0.0;
      for (auto i : rows) m += rep.data.records()[i].outcomes[c] / rows.size();
      for (auto i : rows) ss += std::pow(rep.data.records()[i].outcomes[c] - m, 2);
      df += rows.size() - 1.0;
    }
    REQUIRE(df >= 9000.0);
    const double target = p.omega(c) * p.omega(c);
    // sd of a variance estimate with df degrees of freedom is target * sqrt(2 / df).
    CHECK(std::abs(ss / df - target) < 4.0 * target * std::sqrt(2.0 / df));
  }
}

TEST_CASE("unit layout, strata and weights") {
  auto sc = unit(4);
  sc.q = RuralFractions{std::vector<double>(9, 0.25)};
  const auto rep = generate_unit_scenario(sc, 2);
  CHECK(rep.data.records().size() == 9u * 8u * 15u);
  CHECK(rep.data.cluster_index().size() == 72u);
  for (int r = 0; r < 9; ++r) CHECK(lonely_strata(rep.data, r).empty());
  double urban = 0.0, rural = 0.0;
  for (const auto& rec : rep.data.records())
    if (rec.region == 0) (rec.rural ? rural : urban) += rec.weight;
  CHECK(rural / (rural + urban) == doctest::Approx(0.25));
}

TEST_CASE("replicates depend only on seed and index") {
  auto sc = area(6);
  const AreaScenario a(sc);
  const auto r3 = a.replicate(3);
  const auto r1 = a.replicate(1);
  CHECK(a.replicate(3).estimates.y_hat == r3.estimates.y_hat);
  CHECK(generate_area_scenario(sc, 1).estimates.y_hat == r1.estimates.y_hat);
  CHECK(r1.estimates.y_hat != r3.estimates.y_hat);
  sc.seed = 2;
  CHECK(generate_area_scenario(sc, 1).estimates.y_hat != r1.estimates.y_hat);

  auto su = unit(3);
  const auto u = generate_unit_scenario(su, 4);
  const auto v = generate_unit_scenario(su, 4);
  REQUIRE(u.data.records().size() == v.data.records().size());
  for (std::size_t i = 0; i < u.data.records().size(); ++i)
    CHECK(u.data.records()[i].outcomes == v.data.records()[i].outcomes);
}

TEST_CASE("one replicate, one model study") {
  auto sc = area(1);
  sc.replicate_count = 1;
  StudyOptions opt;
  opt.fit.chains = 2;
  opt.fit.warmup = 200;
  opt.fit.draws = 200;
  opt.archive = fixture::scratch("study_archive");
  std::filesystem::remove_all(*opt.archive);
  AreaModelSpec spec;
  spec.family = AreaFamily::UniIID;
  const auto res = run_simulation_study(sc, {spec}, opt);
  int totals = 0;
  for (const auto& row : res.metrics.rows) {
    CHECK(row.scenario == "area:1");
    CHECK(row.model == "uni_iid");
    totals += row.region < 0;
  }
  CHECK(totals == 2);
  CHECK(res.metrics.rows.size() == 2u * 17u);
  const auto dir = *opt.archive / "scenario_1" / "replicate_1";
  CHECK(std::filesystem::exists(dir / "data.csv"));
  CHECK(std::filesystem::exists(dir / "truth.csv"));
  CHECK(std::filesystem::exists(dir / "fit_uni_iid.csv"));
}

TEST_CASE("study results do not depend on the worker count") {
  auto sc = area(5);
  sc.replicate_count = 4;
  StudyOptions opt;
  opt.fit.chains = 1;
  opt.fit.warmup = 150;
  opt.fit.draws = 150;
  AreaModelSpec a, d;
  a.family = AreaFamily::BivSharedIID;
  d.family = AreaFamily::Direct;
  const auto one = run_simulation_study(sc, {a, d}, opt);
  opt.threads = 3;
  const auto three = run_simulation_study(sc, {a, d}, opt);
  REQUIRE(one.metrics.rows.size() == three.metrics.rows.size());
  for (std::size_t i = 0; i < one.metrics.rows.size(); ++i) {
    CHECK(one.metrics.rows[i].metrics.mse == three.metrics.rows[i].metrics.mse);
    CHECK(one.metrics.rows[i].metrics.coverage == three.metrics.rows[i].metrics.coverage);
  }
}

TEST_CASE("correct model recovers generating hyperparameters") {
  // Medians over replicates bracket the generating value.
  auto sc = area(6, AdjacencyGraph::lattice47());
  sc.redraw_effects = true;
  const AreaScenario scen(sc);
  AreaModelSpec spec;
  spec.family = AreaFamily::BivSharedBYM;
  FitConfig fc;
  fc.chains = 1;
  fc.warmup = 400;
  fc.draws = 400;
  fc.record_components = false;
  std::map<std::string, std::vector<double>> medians;
  const std::vector<std::string> names = {"beta.1", "beta.2", "sigma.1", "sigma.2", "lambda"};
  for (int k = 0; k < 100; ++k) {
    fc.seed = 1000 + k;
    const auto fit = fit_area(spec, scen.replicate(k).estimates, sc.graph, fc);
    for (const auto& n : names) {
      const Eigen::VectorXd x = fit.column(n);
      medians[n].push_back(quantile(std::vector<double>(x.data(), x.data() + x.size()), 0.5));
    }
  }
  const std::map<std::string, double> truth = {
      {"beta.1", -0.98}, {"beta.2", -0.87}, {"sigma.1", 0.19}, {"sigma.2", 0.25}, {"lambda", 0.75}};
  for (const auto& n : names) {
    INFO(n);
    CHECK(quantile(medians[n], 0.05) <= truth.at(n));
    CHECK(quantile(medians[n], 0.95) >= truth.at(n));
  }
}
