#include <doctest.h>

#include "fixtures.hpp"
#include "msae/error.hpp"
#include "msae/gmrf.hpp"
#include "msae/mcmc.hpp"
#include "msae/simulation.hpp"
#include "oracles.hpp"

using namespace msae;

namespace {

// The 3-region grid-integrable fixture.
struct Three {
  Eigen::MatrixXd y{3, 2};
  std::vector<Eigen::Matrix2d> V;
  AdjacencyGraph graph = AdjacencyGraph::path(3);

  Three() {
    y << -0.8, -1.0, -1.3, -0.6, -0.4, -0.9;
    const double sd[3][2] = {{0.2, 0.25}, {0.3, 0.15}, {0.25, 0.3}};
    const double corr[3] = {0.5, -0.3, 0.7};
    for (int r = 0; r < 3; ++r) {
      Eigen::Matrix2d m;
      m << sd[r][0] * sd[r][0], corr[r] * sd[r][0] * sd[r][1], corr[r] * sd[r][0] * sd[r][1], sd[r][1] * sd[r][1];
      V.push_back(m);
    }
  }

  DirectEstimateSet estimates() const {
    auto est = DirectEstimateSet::empty(3, 2);
    est.y_hat = y;
    for (int r = 0; r < 3; ++r) est.V_hat[r] = V[r];
    est.available.setConstant(true);
    return est;
  }
};

struct McStat {
  double mean, sd, mcse_mean, mcse_sd;
};

McStat mc(const ModelFit& fit, const std::string& name) {
  const Eigen::VectorXd x = fit.column(name);
  const double m = x.mean();
  const double sd = std::sqrt((x.array() - m).square().sum() / (x.size() - 1.0));
  const double ess = diagnose(name, x, fit.chain_count).ess;
  return {m, sd, sd / std::sqrt(ess), sd / std::sqrt(2.0 * ess)};
}

FitConfig config(int chains, int warmup, int draws, std::uint64_t seed) {
  FitConfig fc;
  fc.chains = chains;
  fc.warmup = warmup;
  fc.draws = draws;
  fc.seed = seed;
  return fc;
}

}  // namespace

TEST_CASE("grid-quadrature oracle for the 3-region fixture") {
  const Three t;
  AreaModelSpec spec;
  spec.family = AreaFamily::BivNonsharedIID;
  const auto fit = fit_area(spec, t.estimates(), t.graph, config(4, 2000, 6000, 17));
  const auto oracle = oracle::iid_grid_posterior(t.y, t.V, spec.priors.pc_rate());
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 2; ++c) {
      const auto s = mc(fit, mu_column(c, r));
      INFO("region " << r << " outcome " << c);
      CHECK(std::abs(s.mean - oracle.mean(r, c)) < 3.0 * s.mcse_mean);
      CHECK(std::abs(s.sd - oracle.sd(r, c)) < 3.0 * s.mcse_sd);
    }
}

TEST_CASE("1-D quadrature for a single free standard deviation") {
  const Three t;
  AreaModelSpec spec;
  spec.family = AreaFamily::UniIID;
  auto fc = config(4, 1000, 5000, 23);
  fc.fixed["sigma.2"] = 0.3;
  const auto fit = fit_area(spec, t.estimates(), t.graph, fc);
  std::vector<Eigen::Matrix2d> diag;
  for (const auto& v : t.V) diag.push_back(Eigen::Matrix2d(v.diagonal().asDiagonal()));
  oracle::GridOptions opt;
  opt.grid = 20000;
  opt.fixed_sigma2 = 0.3;
  const auto o = oracle::iid_grid_posterior(t.y, diag, spec.priors.pc_rate(), opt);
  const auto s = mc(fit, "sigma.1");
  CHECK(std::abs(s.mean - o.sigma1_mean) < 3.0 * s.mcse_mean);
  CHECK(fit.column("sigma.2").cwiseEqual(0.3).all());
}

TEST_CASE("conjugate fixed-effect posterior with sigma known") {
  const Three t;
  AreaModelSpec spec;
  spec.family = AreaFamily::BivNonsharedIID;
  auto fc = config(2, 200, 4000, 5);
  fc.fixed = {{"sigma.1", 0.3}, {"sigma.2", 0.2}};
  const auto fit = fit_area(spec, t.estimates(), t.graph, fc);

  // theta = (beta_1, beta_2, s_11, s_12, s_21, ...); y_r = beta + s_r + e_r.
  Eigen::MatrixXd prior = Eigen::MatrixXd::Zero(8, 8);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(6, 8);
  Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(6, 6);
  Eigen::VectorXd y(6);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 2; ++c) {
      prior(2 + 2 * r + c, 2 + 2 * r + c) = 1.0 / (c == 0 ? 0.09 : 0.04);
      A(2 * r + c, c) = 1.0;
      A(2 * r + c, 2 + 2 * r + c) = 1.0;
      y(2 * r + c) = t.y(r, c);
    }
  for (int r = 0; r < 3; ++r) noise.block(2 * r, 2 * r, 2, 2) = t.V[r];
  const auto post = oracle::gaussian_posterior(prior, A, noise, y, Eigen::MatrixXd::Identity(8, 8));
  for (int c = 0; c < 2; ++c) {
    const auto s = mc(fit, "beta." + std::to_string(c + 1));
    CHECK(std::abs(s.mean - post.mean(c)) < 3.0 * s.mcse_mean);
    CHECK(std::abs(s.sd - std::sqrt(post.cov(c, c))) < 3.0 * s.mcse_sd);
  }
}

TEST_CASE("conjugate shared BYM posterior with every hyperparameter fixed") {
  const Three t;
  AreaModelSpec spec;
  spec.family = AreaFamily::BivSharedBYM;
  auto fc = config(2, 200, 5000, 9);
  fc.fixed = {{"sigma.1", 0.3}, {"sigma.2", 0.4}, {"rho.1", 0.6}, {"rho.2", 0.8}, {"lambda", 0.7}};
  const auto fit = fit_area(spec, t.estimates(), t.graph, fc);

  // Covariance of s_c: sigma^2 ((1 - rho) I + rho Q^+) with the scaled Q.
  const auto icar = scaled_icar(t.graph);
  const Eigen::MatrixXd Qp = oracle::pinv(Eigen::MatrixXd(icar.precision));
  auto cov_s = [&](double s, double rho) {
    return Eigen::MatrixXd(s * s * ((1 - rho) * Eigen::MatrixXd::Identity(3, 3) + rho * Qp));
  };
  // theta = (beta_1, beta_2, s_1 (3), s_2 (3)); mu_r1 = beta_1 + s_r1 + lambda s_r2, mu_r2 = beta_2 + s_r2.
  Eigen::MatrixXd prior = Eigen::MatrixXd::Zero(8, 8);
  prior.block(2, 2, 3, 3) = cov_s(0.3, 0.6).inverse();
  prior.block(5, 5, 3, 3) = cov_s(0.4, 0.8).inverse();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(6, 8);
  for (int r = 0; r < 3; ++r) {
    L(2 * r, 0) = 1.0;
    L(2 * r, 2 + r) = 1.0;
    L(2 * r, 5 + r) = 0.7;
    L(2 * r + 1, 1) = 1.0;
    L(2 * r + 1, 5 + r) = 1.0;
  }
  Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(6, 6);
  Eigen::VectorXd y(6);
  for (int r = 0; r < 3; ++r) {
    noise.block(2 * r, 2 * r, 2, 2) = t.V[r];
    y.segment(2 * r, 2) = t.y.row(r).transpose();
  }
  const auto post = oracle::gaussian_posterior(prior, L, noise, y, L);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 2; ++c) {
      const auto s = mc(fit, mu_column(c, r));
      CHECK(std::abs(s.mean - post.mean(2 * r + c)) < 3.0 * s.mcse_mean);
      CHECK(std::abs(s.sd - std::sqrt(post.cov(2 * r + c, 2 * r + c))) < 3.0 * s.mcse_sd);
    }
}

TEST_CASE("unit-level conjugate posterior with every hyperparameter fixed") {
  // Two regions on a path, two urban and two rural clusters each.
  const auto data = generate_unit_scenario(
      [] {
        ScenarioConfig c;
        c.level = Level::Unit;
        c.scenario_id = 4;
        c.graph = AdjacencyGraph::path(3);
        c.layout = {2, 2, 6, 100.0};
        c.q = RuralFractions{{0.3, 0.6, 0.8}};
        return c;
      }(),
      0).data;
  const RuralFractions q{{0.3, 0.6, 0.8}};
  const auto graph = AdjacencyGraph::path(3);
  UnitModelSpec spec;
  spec.family = UnitFamily::BYMShared;
  auto fc = config(2, 200, 5000, 4);
  fc.fixed = {{"sigma.1", 0.3},     {"sigma.2", 0.5},     {"rho.1", 0.5}, {"rho.2", 0.7},   {"lambda", 0.6},
              {"sigma_eps.1", 0.4}, {"sigma_eps.2", 0.2}, {"omega.1", 1.1}, {"omega.2", 0.8}};
  const auto fit = fit_unit(spec, data, graph, q, fc);

  const int R = 3;
  const auto K = static_cast<int>(data.cluster_index().size());
  std::map<std::string, int> cid;
  for (const auto& [name, rows] : data.cluster_index()) cid.emplace(name, static_cast<int>(cid.size()));
  // theta = (beta (2), gamma (2), s_1 (R), s_2 (R), eps_1 (K), eps_2 (K)).
  const int P = 4 + 2 * R + 2 * K;
  const auto icar = scaled_icar(graph);
  const Eigen::MatrixXd Qp = oracle::pinv(Eigen::MatrixXd(icar.precision));
  auto cov_s = [&](double s, double rho) {
    return Eigen::MatrixXd(s * s * ((1 - rho) * Eigen::MatrixXd::Identity(R, R) + rho * Qp));
  };
  Eigen::MatrixXd prior = Eigen::MatrixXd::Zero(P, P);
  prior.block(4, 4, R, R) = cov_s(0.3, 0.5).inverse();
  prior.block(4 + R, 4 + R, R, R) = cov_s(0.5, 0.7).inverse();
  for (int k = 0; k < K; ++k) {
    prior(4 + 2 * R + k, 4 + 2 * R + k) = 1.0 / 0.16;
    prior(4 + 2 * R + K + k, 4 + 2 * R + K + k) = 1.0 / 0.04;
  }
  const auto& recs = data.records();
  const auto n = static_cast<Eigen::Index>(recs.size());
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * n, P);
  Eigen::VectorXd y(2 * n), nv(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& rec = recs[static_cast<std::size_t>(i)];
    const int k = cid.at(rec.cluster);
    for (int c = 0; c < 2; ++c) {
      const auto row = 2 * i + c;
      A(row, c) = 1.0;
      if (rec.rural) A(row, 2 + c) = 1.0;
      A(row, 4 + c * R + rec.region) = 1.0;
      if (c == 0) A(row, 4 + R + rec.region) = 0.6;
      A(row, 4 + 2 * R + c * K + k) = 1.0;
      y(row) = rec.outcomes[static_cast<std::size_t>(c)];
      nv(row) = c == 0 ? 1.21 : 0.64;
    }
  }
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(2 * R, P);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < 2; ++c) {
      L(2 * r + c, c) = 1.0;
      L(2 * r + c, 2 + c) = q.q[r];
      L(2 * r + c, 4 + c * R + r) = 1.0;
      if (c == 0) L(2 * r, 4 + R + r) = 0.6;
    }
  const auto post = oracle::gaussian_posterior(prior, A, Eigen::MatrixXd(nv.asDiagonal()), y, L);
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < 2; ++c) {
      const auto s = mc(fit, mu_column(c, r));
      INFO("region " << r << " outcome " << c);
      CHECK(std::abs(s.mean - post.mean(2 * r + c)) < 3.0 * s.mcse_mean);
      CHECK(std::abs(s.sd - std::sqrt(post.cov(2 * r + c, 2 * r + c))) < 3.0 * s.mcse_sd);
    }
}

TEST_CASE("prior recovery") {
  const Three t;
  AreaModelSpec spec;
  spec.family = AreaFamily::BivNonsharedBYM;
  auto fc = config(4, 1000, 25000, 31);
  fc.prior_only = true;
  fc.record_components = false;
  const auto fit = fit_area(spec, t.estimates(), t.graph, fc);
  const Eigen::VectorXd sigma = fit.column("sigma.1");
  const double tail = (sigma.array() > 1.0).cast<double>().mean();
  CHECK(std::abs(tail - 0.01) < 0.005);
  const Eigen::VectorXd rho = fit.column("rho.1");
  const double ess = diagnose("rho.1", rho, fit.chain_count).ess;
  const int stride = std::max(1, static_cast<int>(rho.size() / ess));
  std::vector<double> thin;
  for (Eigen::Index i = 0; i < rho.size(); i += stride) thin.push_back(rho(i));
  CHECK(oracle::ks_uniform(thin) < 1.628 / std::sqrt(static_cast<double>(thin.size())));
  CHECK((rho.array() >= 0.0).all());
  CHECK((rho.array() <= 1.0).all());
}

TEST_CASE("lambda full conditional is the weighted least squares slope") {
  const Eigen::Vector3d w(2.0, 0.5, 1.5);
  const Eigen::Vector3d y(0.3, -0.1, 0.8);
  const Eigen::Vector3d z0(0.1, 0.05, -0.2);
  const Eigen::Vector3d d(0.4, -0.3, 0.9);
  const Eigen::MatrixXd P = w.asDiagonal();
  LambdaPrior flat;
  flat.kind = LambdaPrior::Kind::Flat;
  const auto cond = lambda_full_conditional(P, P * y, z0, d, flat);
  CHECK(cond.mean == doctest::Approx(oracle::wls_slope(y - z0, d, w)).epsilon(1e-12));
  CHECK(cond.precision == doctest::Approx(d.dot(P * d)));

  SUBCASE("noiseless residuals identify lambda") {
    const Eigen::MatrixXd big = 1e12 * Eigen::MatrixXd::Identity(3, 3);
    const auto c = lambda_full_conditional(big, big * (z0 + 0.75 * d), z0, d, LambdaPrior{});
    CHECK(c.mean == doctest::Approx(0.75).epsilon(1e-9));
    CHECK(1.0 / std::sqrt(c.precision) < 1e-5);
  }
  SUBCASE("tight prior collapses to its mean") {
    LambdaPrior tight;
    tight.sd = 1e-8;
    CHECK(std::abs(lambda_full_conditional(P, P * y, z0, d, tight).mean) < 1e-10);
  }
  SUBCASE("zero direction reverts to the prior") {
    const auto c = lambda_full_conditional(P, P * y, z0, Eigen::Vector3d::Zero(), LambdaPrior{});
    CHECK(c.mean == 0.0);
    CHECK(c.precision == doctest::Approx(1.0 / (31.62 * 31.62)));
  }
}

TEST_CASE("augmented likelihood formulation matches the bivariate likelihood") {
  ScenarioConfig sc;
  sc.scenario_id = 6;
  sc.graph = AdjacencyGraph::lattice(4, 4);
  const auto rep = generate_area_scenario(sc, 0);
  AreaModelSpec spec;
  spec.family = AreaFamily::BivSharedBYM;
  auto fc = config(4, 1000, 3000, 12);
  const auto direct = fit_area(spec, rep.estimates, sc.graph, fc);
  fc.augmented_likelihood = true;
  fc.seed = 13;
  const auto aug = fit_area(spec, rep.estimates, sc.graph, fc);
  for (int r = 0; r < 16; r += 3)
    for (int c = 0; c < 2; ++c) {
      const auto a = mc(direct, mu_column(c, r)), b = mc(aug, mu_column(c, r));
      CHECK(std::abs(a.mean - b.mean) < 4.0 * std::hypot(a.mcse_mean, b.mcse_mean));
    }
}

TEST_CASE("sampler invariants") {
  ScenarioConfig sc;
  sc.scenario_id = 6;
  sc.graph = AdjacencyGraph(6, {{0, 1}, {1, 2}, {3, 4}});  // path, pair, island
  const auto rep = generate_area_scenario(sc, 2);
  AreaModelSpec spec;
  spec.family = AreaFamily::BivSharedBYM;
  const auto fc = config(2, 300, 400, 77);
  const auto fit = fit_area(spec, rep.estimates, sc.graph, fc);

  SUBCASE("u* sums to zero per component") {
    for (int c = 1; c <= 2; ++c)
      for (Eigen::Index i = 0; i < fit.draws.rows(); ++i) {
        const auto u = [&](int r) { return fit.draws(i, fit.column_index("u_star." + std::to_string(c) + "." + std::to_string(r))); };
        CHECK(std::abs(u(1) + u(2) + u(3)) < 1e-10);
        CHECK(std::abs(u(4) + u(5)) < 1e-10);
        CHECK(u(6) == 0.0);
      }
  }
  SUBCASE("sd and rho ranges") {
    for (const char* name : {"sigma.1", "sigma.2"}) CHECK((fit.column(name).array() >= 0.0).all());
    for (const char* name : {"rho.1", "rho.2"}) {
      CHECK((fit.column(name).array() >= 0.0).all());
      CHECK((fit.column(name).array() <= 1.0).all());
    }
  }
  SUBCASE("same seed gives identical draws regardless of threads") {
    auto fc2 = fc;
    fc2.threads = 2;
    const auto again = fit_area(spec, rep.estimates, sc.graph, fc2);
    CHECK(again.columns == fit.columns);
    CHECK((again.draws.array() == fit.draws.array()).all());
  }
  SUBCASE("island note") {
    bool noted = false;
    for (const auto& n : fit.notes) noted = noted || n.find("island") != std::string::npos;
    CHECK(noted);
  }
}

TEST_CASE("zero proposal scale freezes the hyperparameters") {
  const Three t;
  AreaModelSpec spec;
  spec.family = AreaFamily::UniBYM;
  auto fc = config(2, 100, 300, 3);
  fc.initial_proposal_sd = 0.0;
  const auto fit = fit_area(spec, t.estimates(), t.graph, fc);
  const Eigen::VectorXd s = fit.column("sigma.1");
  for (int ch = 0; ch < 2; ++ch) {
    const Eigen::VectorXd x = fit.chain_column("sigma.1", ch);
    CHECK((x.array() == x(0)).all());
  }
  CHECK(diagnose("sigma.1", s, 2).ess == doctest::Approx(1.0));
}

TEST_CASE("regions without estimates are predicted") {
  const Three t;
  AreaModelSpec spec;
  spec.family = AreaFamily::BivSharedBYM;
  const auto fit = fit_area(spec, t.estimates().without_region(1), t.graph, config(2, 300, 500, 8));
  CHECK(fit.mu_draws(1).allFinite());
  const Eigen::VectorXd mu = fit.column(mu_column(0, 1));
  CHECK(mu.array().abs().maxCoeff() > 0.0);
}

TEST_CASE("input errors") {
  const Three t;
  AreaModelSpec spec;
  spec.family = AreaFamily::BivSharedBYM;
  SUBCASE("indefinite covariance asks for projection") {
    auto est = t.estimates();
    est.V_hat[0] << 0.04, 0.1, 0.1, 0.04;
    try {
      fit_area(spec, est, t.graph, config(1, 10, 10, 1));
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("project") != std::string::npos);
    }
  }
  SUBCASE("outcome without data") {
    auto est = t.estimates();
    est.available.col(1).setConstant(false);
    CHECK_THROWS_AS(fit_area(spec, est, t.graph, config(1, 10, 10, 1)), ValidationError);
  }
  SUBCASE("graph size mismatch") {
    CHECK_THROWS_AS(fit_area(spec, t.estimates(), AdjacencyGraph::path(4), config(1, 10, 10, 1)), ValidationError);
  }
  SUBCASE("unknown fixed symbol") {
    auto fc = config(1, 10, 10, 1);
    fc.fixed["sigma.9"] = 1.0;
    CHECK_THROWS_AS(fit_area(spec, t.estimates(), t.graph, fc), ValidationError);
  }
}

TEST_CASE("direct family draws from the Stage-1 distribution") {
  const Three t;
  AreaModelSpec spec;
  spec.family = AreaFamily::Direct;
  const auto fit = fit_area(spec, t.estimates(), t.graph, config(1, 0, 20000, 2));
  const Eigen::MatrixXd d = fit.mu_draws(2);
  const Eigen::RowVector2d m = d.colwise().mean();
  CHECK((m - t.y.row(2)).cwiseAbs().maxCoeff() < 0.01);
  const Eigen::MatrixXd centered = d.rowwise() - m;
  const Eigen::Matrix2d cov = centered.transpose() * centered / (d.rows() - 1.0);
  CHECK((cov - t.V[2]).cwiseAbs().maxCoeff() < 0.005);
}

TEST_CASE("diagnostics on known chains") {
  Rng rng(99);
  const int n = 4000;
  Eigen::VectorXd iid(n);
  for (int i = 0; i < n; ++i) iid(i) = rng.normal();
  const auto d = diagnose("x", iid, 4);
  CHECK(std::abs(d.rhat - 1.0) < 0.02);
  CHECK(std::abs(d.ess - n) < 0.1 * n);

  const auto c = diagnose("c", Eigen::VectorXd::Constant(n, 2.0), 4);
  CHECK(c.ess == doctest::Approx(1.0));

  Eigen::VectorXd two(n);
  two.head(n / 2).setConstant(0.0);
  two.tail(n / 2).setConstant(1.0);
  CHECK(diagnose("t", two, 2).rhat > 2.0);

  CHECK(std::isnan(diagnose("x", iid, 1).rhat));
}
