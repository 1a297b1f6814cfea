// sae: command-line front end for direct estimation, model fitting, LOO
// scoring, simulation studies and post-hoc aggregation.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msae/direct.hpp"
#include "msae/error.hpp"
#include "msae/evaluation.hpp"
#include "msae/io.hpp"
#include "msae/mcmc.hpp"
#include "msae/models.hpp"
#include "msae/simulation.hpp"
#include "msae/survey.hpp"

namespace fs = std::filesystem;
using namespace msae;

namespace {

enum Exit { kOk = 0, kFailure = 1, kValidation = 2, kNumerical = 3, kUsage = 4 };

struct Global {
  std::uint64_t seed = 1;
  unsigned threads = 1;
  fs::path out_dir = ".";
  std::vector<std::string> argv;
};

struct SamplerFlags {
  int chains = 4;
  int warmup = 2000;
  int draws = 2000;

  void add(CLI::App* app) {
    app->add_option("--chains", chains, "MCMC chains")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--warmup", warmup, "Warmup iterations per chain")->check(CLI::NonNegativeNumber)->capture_default_str();
    app->add_option("--draws", draws, "Kept draws per chain")->check(CLI::PositiveNumber)->capture_default_str();
  }

  FitConfig config(const Global& g) const {
    FitConfig fc;
    fc.chains = chains;
    fc.warmup = warmup;
    fc.draws = draws;
    fc.seed = g.seed;
    fc.threads = g.threads;
    return fc;
  }
};

LonelyPsuPolicy policy_from(const std::string& name) {
  const auto p = parse_lonely_psu_policy(name);
  if (!p) throw CLI::ValidationError("--lonely-psu", "expected 'error' or 'centered', got '" + name + "'");
  return *p;
}

fs::path in_out(const Global& g, const std::string& name) {
  fs::create_directories(g.out_dir);
  return g.out_dir / name;
}

void write_manifest(const Global& g, const std::string& command, const std::map<std::string, fs::path>& inputs,
                    const std::string& name) {
  RunManifest m;
  m.command = command;
  m.args = g.argv;
  m.seed = g.seed;
  for (const auto& [role, path] : inputs)
    if (!path.empty()) m.inputs[role] = path;
  m.write(in_out(g, name));
}

// Stage-1 estimates for area-level commands: read them, or compute them
// from a survey file.
DirectEstimateSet area_inputs(const fs::path& estimates, const fs::path& data, int outcomes, LonelyPsuPolicy policy,
                              const AdjacencyGraph& graph) {
  if (!estimates.empty()) return read_direct_estimates_csv(estimates, graph);
  if (data.empty()) throw CLI::RequiredError("--estimates or --data");
  return direct_estimates(load_survey_csv(data, outcomes, graph), policy);
}

void print_notes(const std::vector<std::string>& notes) {
  for (const auto& n : notes) std::cerr << "note: " << n << '\n';
}

// ---------------------------------------------------------------------------

struct DirectCmd {
  fs::path data, graph, out = "direct_estimates.csv";
  int outcomes = 0;
  std::string lonely = "error";

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("direct", "Stage-1 weighted means and design covariances");
    c->add_option("--data", data, "Survey CSV")->required()->check(CLI::ExistingFile);
    c->add_option("--graph", graph, "Graph JSON or edge list")->required()->check(CLI::ExistingFile);
    c->add_option("--outcomes", outcomes, "Outcome count (default: from the header)");
    c->add_option("--lonely-psu", lonely, "Single-cluster strata: error or centered")->capture_default_str();
    c->add_option("--out", out, "Output file, relative to --out-dir")->capture_default_str();
  }

  int run(const Global& g) const {
    const auto policy = policy_from(lonely);
    const auto graph_ = load_adjacency(graph);
    const auto d = load_survey_csv(data, outcomes, graph_);
    const auto report = validate_dataset(d, graph_);
    if (!report.empty()) std::cerr << report.to_string(&graph_);
    if (policy == LonelyPsuPolicy::Error && !report.lonely_strata.empty()) {
      std::cerr << "error: strata with a single cluster under --lonely-psu error:";
      for (const auto& s : report.lonely_strata) std::cerr << ' ' << s;
      std::cerr << "\nhint: rerun with --lonely-psu centered\n";
      return kValidation;
    }
    const auto est = direct_estimates(d, policy);
    write_direct_estimates_csv(est, graph_, in_out(g, out.string()));
    write_manifest(g, "direct", {{"data", data}, {"graph", graph}}, out.stem().string() + ".manifest.json");
    return kOk;
  }
};

struct FitCmd {
  fs::path model, estimates, data, graph, q, geojson;
  std::string geojson_key = "name", name, lonely = "error";
  int outcomes = 0;
  bool augmented = false, flip = false;
  SamplerFlags sampler;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("fit", "Fit one model and write draws, summaries and diagnostics");
    c->add_option("--model", model, "Model spec JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--graph", graph, "Graph JSON or edge list")->required()->check(CLI::ExistingFile);
    c->add_option("--estimates", estimates, "Direct estimates CSV (area level)")->check(CLI::ExistingFile);
    c->add_option("--data", data, "Survey CSV")->check(CLI::ExistingFile);
    c->add_option("--q", q, "Rural fractions JSON (unit level)")->check(CLI::ExistingFile);
    c->add_option("--outcomes", outcomes, "Outcome count (default: from the header)");
    c->add_option("--lonely-psu", lonely, "Single-cluster strata: error or centered")->capture_default_str();
    c->add_option("--name", name, "Output file prefix (default: the family name)");
    c->add_flag("--augmented", augmented, "Area level: augmented Stage-1 likelihood");
    c->add_flag("--flip-shared", flip, "Swap the shared direction of a shared model");
    c->add_option("--geojson", geojson, "GeoJSON to copy with summaries merged in")->check(CLI::ExistingFile);
    c->add_option("--geojson-key", geojson_key, "Feature property holding the region label")->capture_default_str();
    sampler.add(c);
  }

  int run(const Global& g) const {
    auto spec = load_model_spec(model);
    if (flip) std::visit([](auto& s) { s = reparameterize_shared_direction(s); }, spec);
    const auto graph_ = load_adjacency(graph);
    FitConfig fc = sampler.config(g);
    ModelFit fit;
    if (const auto* a = std::get_if<AreaModelSpec>(&spec)) {
      fc.augmented_likelihood = augmented;
      fit = fit_area(*a, area_inputs(estimates, data, outcomes, policy_from(lonely), graph_), graph_, fc);
    } else {
      if (q.empty()) throw CLI::RequiredError("--q (unit-level models)");
      if (data.empty()) throw CLI::RequiredError("--data (unit-level models)");
      fit = fit_unit(std::get<UnitModelSpec>(spec), load_survey_csv(data, outcomes, graph_), graph_,
                     load_rural_fractions(q), fc);
    }
    const std::string stem = name.empty() ? model_name(spec) : name;
    write_samples_csv(fit, in_out(g, stem + "_samples.csv"));
    write_fit_summary_csv(fit, graph_, in_out(g, stem + "_summary.csv"));
    write_json(diagnostics_json(fit), in_out(g, stem + "_diagnostics.json"));
    if (!geojson.empty()) merge_geojson(geojson, in_out(g, stem + ".geojson"), geojson_key, stem, fit_mu_draws(fit), graph_);
    write_manifest(g, "fit", {{"model", model}, {"graph", graph}, {"estimates", estimates}, {"data", data}, {"q", q},
                              {"geojson", geojson}},
                   stem + "_manifest.json");
    print_notes(fit.notes);
    if (!fit.diagnostics.healthy)
      std::cerr << "warning: split R-hat " << fit.diagnostics.max_rhat
                << " exceeds 1.05; summary stamped UNHEALTHY (run longer chains)\n";
    return kOk;
  }
};

struct LooCmd {
  std::vector<fs::path> models;
  fs::path estimates, data, graph, q;
  std::string lonely = "error";
  int outcomes = 0, samples = 1000, refit_warmup = 250;
  bool cold = false;
  SamplerFlags sampler;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("loo", "Leave-one-region-out LogScore for a list of models");
    c->add_option("--models", models, "Model spec JSON files")->required()->check(CLI::ExistingFile);
    c->add_option("--graph", graph, "Graph JSON or edge list")->required()->check(CLI::ExistingFile);
    c->add_option("--estimates", estimates, "Direct estimates CSV (area level)")->check(CLI::ExistingFile);
    c->add_option("--data", data, "Survey CSV")->check(CLI::ExistingFile);
    c->add_option("--q", q, "Rural fractions JSON (unit level)")->check(CLI::ExistingFile);
    c->add_option("--outcomes", outcomes, "Outcome count (default: from the header)");
    c->add_option("--lonely-psu", lonely, "Single-cluster strata: error or centered")->capture_default_str();
    c->add_option("--samples", samples, "Posterior draws per held-out region")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--refit-warmup", refit_warmup, "Warmup of each held-out refit")->capture_default_str();
    c->add_flag("--cold-start", cold, "Start refits from scratch instead of the full fit's end state");
    sampler.add(c);
  }

  int run(const Global& g) const {
    const auto graph_ = load_adjacency(graph);
    const auto policy = policy_from(lonely);
    LooConfig cfg;
    cfg.fit = sampler.config(g);
    cfg.fit.threads = 1;
    cfg.threads = g.threads;
    cfg.samples = samples;
    cfg.refit_warmup = refit_warmup;
    cfg.warm_start = !cold;

    std::optional<DirectEstimateSet> est;
    std::optional<SurveyDataset> survey;
    std::vector<LogScoreReport> reports;
    for (const auto& path : models) {
      const auto spec = load_model_spec(path);
      LogScoreReport rep;
      if (const auto* a = std::get_if<AreaModelSpec>(&spec)) {
        if (!est) est = area_inputs(estimates, data, outcomes, policy, graph_);
        rep = loo_logscore_area(*a, *est, graph_, cfg);
      } else {
        if (q.empty()) throw CLI::RequiredError("--q (unit-level models)");
        if (data.empty()) throw CLI::RequiredError("--data (unit-level models)");
        if (!survey) survey = load_survey_csv(data, outcomes, graph_);
        rep = loo_logscore_unit(std::get<UnitModelSpec>(spec), *survey, graph_, load_rural_fractions(q), cfg, policy);
      }
      rep.model_id = path.stem().string();
      for (std::size_t r = 0; r < rep.region_notes.size(); ++r)
        if (!rep.region_notes[r].empty())
          std::cerr << "note: " << rep.model_id << ", region " << graph_.label(static_cast<int>(r)) << ": "
                    << rep.region_notes[r] << '\n';
      reports.push_back(std::move(rep));
    }
    write_logscore_csvs(reports, graph_, in_out(g, "logscore.csv"), in_out(g, "logscore_summary.csv"));
    std::map<std::string, fs::path> inputs = {{"graph", graph}, {"estimates", estimates}, {"data", data}, {"q", q}};
    for (std::size_t i = 0; i < models.size(); ++i) inputs["model_" + std::to_string(i + 1)] = models[i];
    write_manifest(g, "loo", inputs, "logscore_manifest.json");

    for (const auto& rep : reports)
      if (rep.scored < 0.9 * graph_.size()) {
        std::cerr << "error: model " << rep.model_id << " scored only " << rep.scored << " of " << graph_.size()
                  << " regions\n";
        return kNumerical;
      }
    return kOk;
  }
};

std::vector<ModelSpec> parse_model_list(const std::vector<std::string>& names, Level level) {
  std::vector<ModelSpec> out;
  auto all_area = {AreaFamily::Direct,          AreaFamily::UniIID,       AreaFamily::UniBYM,
                   AreaFamily::BivNonsharedIID, AreaFamily::BivNonsharedBYM, AreaFamily::BivSharedIID,
                   AreaFamily::BivSharedBYM};
  auto all_unit = {UnitFamily::IIDNonshared, UnitFamily::BYMNonshared, UnitFamily::IIDShared, UnitFamily::BYMShared};
  for (const auto& n : names) {
    if (n == "all") {
      if (level == Level::Area)
        for (auto f : all_area) out.push_back(AreaModelSpec{f});
      else
        for (auto f : all_unit) out.push_back(UnitModelSpec{f});
      continue;
    }
    if (level == Level::Area) {
      const auto f = parse_area_family(n);
      if (!f) throw ValidationError("unknown area-level family '" + n + "'; valid: direct, uni_iid, uni_bym, "
                                    "biv_nonshared_iid, biv_nonshared_bym, biv_shared_iid, biv_shared_bym, all");
      out.push_back(AreaModelSpec{*f});
    } else {
      const auto f = parse_unit_family(n);
      if (!f) throw ValidationError("unknown unit-level family '" + n + "'; valid: iid_nonshared, bym_nonshared, "
                                    "iid_shared, bym_shared, all");
      out.push_back(UnitModelSpec{*f});
    }
  }
  return out;
}

struct SimulateCmd {
  std::string scenario;
  fs::path config, graph;
  std::vector<std::string> models{"all"};
  int replicates = 0;
  bool archive = false;
  SamplerFlags sampler;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("simulate", "Run a simulation study and write its metrics");
    auto* s = c->add_option("--scenario", scenario, "Scenario id such as area:6 or unit:7");
    auto* f = c->add_option("--config", config, "Scenario config JSON")->check(CLI::ExistingFile);
    s->excludes(f);
    c->add_option("--graph", graph, "Graph (default: the 47-node lattice)")->check(CLI::ExistingFile);
    c->add_option("--models", models, "Family names, or 'all'")->delimiter(',')->capture_default_str();
    c->add_option("--replicates", replicates, "Replicate count (overrides the config)");
    c->add_flag("--archive", archive, "Keep per-replicate data and fits under <out-dir>/archive");
    sampler.add(c);
  }

  int run(const Global& g) const {
    ScenarioConfig sc;
    if (!config.empty()) {
      std::ifstream in(config);
      try {
        sc = scenario_config_from_json(nlohmann::json::parse(in));
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scenario config: ") + e.what());
      }
    } else if (!scenario.empty()) {
      const auto id = parse_scenario_id(scenario);
      if (!id) throw ValidationError("scenario must look like area:<1-9> or unit:<1-7>, got '" + scenario + "'");
      sc.level = id->first;
      sc.scenario_id = id->second;
      sc.seed = g.seed;
    } else {
      throw CLI::RequiredError("--scenario or --config");
    }
    if (!graph.empty()) sc.graph = load_adjacency(graph);
    if (replicates > 0) sc.replicate_count = replicates;
    sc.validate();

    StudyOptions opt;
    opt.fit = sampler.config(g);
    opt.fit.threads = 1;
    opt.threads = g.threads;
    if (archive) opt.archive = in_out(g, "archive");
    const auto res = run_simulation_study(sc, parse_model_list(models, sc.level), opt);
    write_metrics_csv(res.metrics, sc.graph, in_out(g, "metrics.csv"));
    for (const auto& m : res.failure_messages) std::cerr << "fit failed: " << m << '\n';
    write_manifest(g, "simulate", {{"config", config}, {"graph", graph}}, "metrics_manifest.json");
    return kOk;
  }
};

struct AggregateCmd {
  fs::path samples, model, graph, q, out = "aggregate_summary.csv";

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("aggregate", "Re-aggregate unit-level draws to area means under new rural fractions");
    c->add_option("--samples", samples, "Samples CSV of a unit-level fit")->required()->check(CLI::ExistingFile);
    c->add_option("--model", model, "Model spec JSON used for the fit")->required()->check(CLI::ExistingFile);
    c->add_option("--graph", graph, "Graph JSON or edge list")->required()->check(CLI::ExistingFile);
    c->add_option("--q", q, "Rural fractions JSON")->required()->check(CLI::ExistingFile);
    c->add_option("--out", out, "Output file, relative to --out-dir")->capture_default_str();
  }

  int run(const Global& g) const {
    const auto spec = load_model_spec(model);
    const auto* u = std::get_if<UnitModelSpec>(&spec);
    if (!u) throw ValidationError("aggregate needs a unit-level model spec");
    const auto graph_ = load_adjacency(graph);
    const auto mu = aggregate_samples(read_samples_csv(samples), *u, graph_, load_rural_fractions(q));
    write_region_summary_csv(mu, graph_, true, in_out(g, out.string()));
    write_manifest(g, "aggregate", {{"samples", samples}, {"model", model}, {"graph", graph}, {"q", q}},
                   out.stem().string() + ".manifest.json");
    return kOk;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multivariate shared-component small area estimation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version());
  Global g;
  for (int i = 1; i < argc; ++i) g.argv.emplace_back(argv[i]);
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Directory for every output")->capture_default_str();
  app.fallthrough();

  DirectCmd direct;
  FitCmd fit;
  LooCmd loo;
  SimulateCmd simulate;
  AggregateCmd aggregate;
  direct.add(app);
  fit.add(app);
  loo.add(app);
  simulate.add(app);
  aggregate.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (app.got_subcommand("direct")) return direct.run(g);
    if (app.got_subcommand("fit")) return fit.run(g);
    if (app.got_subcommand("loo")) return loo.run(g);
    if (app.got_subcommand("simulate")) return simulate.run(g);
    if (app.got_subcommand("aggregate")) return aggregate.run(g);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\nrun 'sae " << (app.get_subcommands().empty() ? "" : app.get_subcommands()[0]->get_name())
              << " --help' for usage\n";
    return kUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const ParseError& e) {
    std::cerr << "input error: " << e.what() << "\nsee docs/formats.md for the expected formats\n";
    return kValidation;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kValidation;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
