#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "msae/direct.hpp"
#include "msae/error.hpp"
#include "msae/io.hpp"
#include "msae/simulation.hpp"

using namespace msae;
using json = nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Compares a freshly written file with its frozen copy; MSAE_UPDATE_GOLDEN=1
// rewrites the frozen copy instead.
void check_golden(const std::filesystem::path& produced, const std::string& name) {
  const auto golden = std::filesystem::path(MSAE_GOLDEN_DIR) / name;
  if (std::getenv("MSAE_UPDATE_GOLDEN")) {
    std::filesystem::copy_file(produced, golden, std::filesystem::copy_options::overwrite_existing);
    return;
  }
  REQUIRE(std::filesystem::exists(golden));
  CHECK(slurp(produced) == slurp(golden));
}

ModelFit small_fit() {
  ModelFit fit;
  AreaModelSpec spec;
  spec.family = AreaFamily::UniIID;
  fit.spec = spec;
  fit.columns = {"beta.1", "sigma.1", "mu.1.1", "mu.1.2"};
  fit.draws.resize(4, 4);
  fit.draws << -0.9, 0.2, -1.0, -0.5,  //
      -0.8, 0.25, -0.95, -0.45,        //
      -1.1, 0.15, -1.2, NAN,           //
      -0.7, 0.3, -0.6, -0.4;
  fit.chain_count = 2;
  fit.draws_per_chain = 2;
  fit.regions = 2;
  fit.outcomes = 1;
  return fit;
}

}  // namespace

TEST_CASE("direct estimates csv is frozen") {
  const auto g = load_adjacency(fixture::dir() / "tiny_graph.json");
  const auto d = load_survey_csv(fixture::dir() / "tiny_survey.csv", 2, g);
  const auto out = fixture::scratch("golden_direct.csv");
  write_direct_estimates_csv(direct_estimates(d, LonelyPsuPolicy::Centered), g, out);
  check_golden(out, "direct_estimates.csv");
}

TEST_CASE("region summary csv is frozen") {
  const auto g = AdjacencyGraph::path(2);
  std::vector<Eigen::MatrixXd> mu(2, Eigen::MatrixXd(5, 2));
  mu[0] << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;
  mu[1] << -0.5, 0.25, -0.75, 0.5, -1.0, 0.0, -0.25, 1.0, 0.0, 0.125;
  const auto out = fixture::scratch("golden_summary.csv");
  write_region_summary_csv(mu, g, false, out);
  check_golden(out, "region_summary.csv");
}

TEST_CASE("logscore csvs are frozen and ranked by mean") {
  const auto g = AdjacencyGraph::path(3);
  LogScoreReport a, b;
  a.model_id = "biv_shared_bym";
  a.log_lhat = Eigen::Vector3d(-0.5, 0.25, NAN);
  a.logscore_sum = 0.25;
  a.logscore_mean = 0.125;
  a.scored = 2;
  b.model_id = "uni_iid";
  b.log_lhat = Eigen::Vector3d(-1.0, -0.5, -std::numeric_limits<double>::infinity());
  b.logscore_sum = std::numeric_limits<double>::infinity();
  b.logscore_mean = std::numeric_limits<double>::infinity();
  b.scored = 3;
  b.underflow = true;
  const auto per = fixture::scratch("golden_loo.csv"), sum = fixture::scratch("golden_loo_summary.csv");
  write_logscore_csvs({b, a}, g, per, sum);
  check_golden(per, "logscore.csv");
  check_golden(sum, "logscore_summary.csv");
  CHECK(slurp(sum).find("biv_shared_bym") < slurp(sum).find("uni_iid"));
}

TEST_CASE("metrics csv is frozen") {
  MetricsReport rep;
  MetricsRow row;
  row.scenario = "area:6";
  row.model = "direct";
  row.outcome = 1;
  row.region = 0;
  row.metrics = {0.01, 0.01, 0.04, 0.0401, 0.95, 0.8};
  row.replicates = 100;
  rep.rows.push_back(row);
  row.region = -1;
  row.failures = 2;
  rep.rows.push_back(row);
  const auto out = fixture::scratch("golden_metrics.csv");
  write_metrics_csv(rep, AdjacencyGraph::path(2), out);
  check_golden(out, "metrics.csv");
}

TEST_CASE("samples csv is frozen and round trips") {
  const auto fit = small_fit();
  const auto out = fixture::scratch("golden_samples.csv");
  write_samples_csv(fit, out);
  check_golden(out, "samples.csv");
  const auto t = read_samples_csv(out);
  CHECK(t.columns == fit.columns);
  CHECK(t.chain == std::vector<int>{1, 1, 2, 2});
  for (Eigen::Index i = 0; i < 4; ++i)
    for (Eigen::Index j = 0; j < 4; ++j) {
      if (std::isnan(fit.draws(i, j)))
        CHECK(std::isnan(t.draws(i, j)));
      else
        CHECK(t.draws(i, j) == fit.draws(i, j));
    }
}

TEST_CASE("diagnostics json") {
  auto fit = small_fit();
  fit.diagnostics.parameters = {{"sigma.1", 123.5, 1.01}};
  fit.diagnostics.max_rhat = 1.01;
  fit.diagnostics.acceptance = {0.4};
  fit.diagnostics.acceptance_names = {"sigma.1"};
  fit.notes = {"a note"};
  const auto doc = diagnostics_json(fit);
  CHECK(doc["model"] == "uni_iid");
  CHECK(doc["healthy"] == true);
  CHECK(doc["parameters"][0]["ess"] == 123.5);
  CHECK(doc["acceptance"]["sigma.1"] == 0.4);
  CHECK(doc["notes"][0] == "a note");
  fit.diagnostics.max_rhat = NAN;
  CHECK(diagnostics_json(fit)["max_rhat"].is_null());
}

TEST_CASE("manifest digests inputs and honours SOURCE_DATE_EPOCH") {
  const auto in = fixture::scratch("manifest_input.txt");
  {
    std::ofstream f(in);
    f << "abc";
  }
  RunManifest m;
  m.command = "direct";
  m.args = {"--data", in.string()};
  m.inputs["data"] = in;
  m.seed = 7;
  setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  const auto doc = m.to_json();
  unsetenv("SOURCE_DATE_EPOCH");
  CHECK(doc["inputs"]["data"]["sha256"] == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(doc["timestamp"] == 1700000000);
  CHECK(doc["seed"] == 7);
  CHECK(doc["tool_version"] == tool_version());
  CHECK(doc["command"] == "direct");
}

TEST_CASE("geojson merge adds summaries to matching features") {
  const auto g = AdjacencyGraph::path(2);
  const auto in = fixture::scratch("in.geojson"), out = fixture::scratch("out.geojson");
  {
    std::ofstream f(in);
    f << R"({"type": "FeatureCollection", "features": [
      {"type": "Feature", "properties": {"name": "2"}, "geometry": null},
      {"type": "Feature", "properties": {"name": "zz"}, "geometry": null}]})";
  }
  std::vector<Eigen::MatrixXd> mu(2, Eigen::MatrixXd(3, 1));
  mu[0] << 1, 2, 3;
  mu[1] << 4, 5, 6;
  merge_geojson(in, out, "name", "bym", mu, g);
  std::ifstream f(out);
  const auto doc = json::parse(f);
  CHECK(doc["features"][0]["properties"]["bym_1_median"] == 5.0);
  CHECK(doc["features"][0]["properties"]["bym_1_q025"] == doctest::Approx(4.05));
  CHECK_FALSE(doc["features"][1]["properties"].contains("bym_1_median"));
}

TEST_CASE("re-aggregating unit samples under the same q reproduces mu") {
  ScenarioConfig sc;
  sc.level = Level::Unit;
  sc.scenario_id = 4;
  sc.graph = AdjacencyGraph(5, {{0, 1}, {1, 2}, {3, 4}});
  sc.layout.individuals = 6;
  const UnitScenario scen(sc);
  const auto rep = scen.replicate(0);
  UnitModelSpec spec;
  spec.family = UnitFamily::BYMShared;
  FitConfig fc;
  fc.chains = 2;
  fc.warmup = 100;
  fc.draws = 50;
  const auto fit = fit_unit(spec, rep.data, sc.graph, scen.q(), fc);
  const auto path = fixture::scratch("unit_samples.csv");
  write_samples_csv(fit, path);
  const auto table = read_samples_csv(path);
  const auto mu = aggregate_samples(table, spec, sc.graph, scen.q());
  for (int r = 0; r < 5; ++r) CHECK((mu[r] - fit.mu_draws(r)).cwiseAbs().maxCoeff() < 1e-12);

  // A different q moves each region mean by (q' - q) gamma.
  RuralFractions q2 = scen.q();
  for (auto& v : q2.q) v = 1.0 - v;
  const auto mu2 = aggregate_samples(table, spec, sc.graph, q2);
  const Eigen::VectorXd g1 = fit.column("gamma.1");
  for (int r = 0; r < 5; ++r) {
    const Eigen::VectorXd expected = fit.mu_draws(r).col(0) + (q2.q[r] - scen.q().q[r]) * g1;
    CHECK((mu2[r].col(0) - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("missing component columns are named") {
    auto cut = table;
    cut.columns[cut.column_index("u_star.1.1")] = "renamed";
    CHECK_THROWS_WITH_AS(aggregate_samples(cut, spec, sc.graph, scen.q()), doctest::Contains("u_star.1.1"),
                         ValidationError);
  }
}
