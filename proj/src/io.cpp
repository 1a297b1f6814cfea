#include "msae/io.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "msae/csv.hpp"
#include "msae/error.hpp"
#include "msae/gmrf.hpp"

#ifndef MSAE_VERSION
#define MSAE_VERSION "0.0.0"
#endif

namespace msae {

using json = nlohmann::json;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string idx(int i) { return std::to_string(i + 1); }

// NaN-safe JSON number.
json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

}  // namespace

std::string tool_version() { return MSAE_VERSION; }

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

json RunManifest::to_json() const {
  json inputs_json = json::object();
  for (const auto& [role, path] : inputs)
    inputs_json[role] = {{"path", path.string()}, {"sha256", sha256_file(path)}};
  std::int64_t stamp = 0;
  if (const char* env = std::getenv("SOURCE_DATE_EPOCH"))
    stamp = std::strtoll(env, nullptr, 10);
  else
    stamp = std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count();
  return {{"command", command}, {"args", args},       {"inputs", inputs_json},
          {"seed", seed},       {"tool_version", tool_version()}, {"timestamp", stamp}};
}

void RunManifest::write(const std::filesystem::path& path) const { write_json(to_json(), path); }

void write_json(const json& doc, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

void write_samples_csv(const ModelFit& fit, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "chain,draw";
  for (const auto& c : fit.columns) out << ',' << csv::quote(c);
  out << '\n';
  for (Eigen::Index i = 0; i < fit.draws.rows(); ++i) {
    const auto per = std::max(1, fit.draws_per_chain);
    out << i / per + 1 << ',' << i % per + 1;
    for (Eigen::Index j = 0; j < fit.draws.cols(); ++j) out << ',' << csv::format(fit.draws(i, j));
    out << '\n';
  }
}

int SampleTable::column_index(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

SampleTable read_samples_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!csv::next_record(in, line, line_no)) throw ParseError("empty samples file", 1);
  auto header = csv::split(line);
  if (header.size() < 2 || header[0] != "chain" || header[1] != "draw")
    throw ParseError("samples header must start with chain,draw", line_no);
  SampleTable t;
  t.columns.assign(header.begin() + 2, header.end());
  std::vector<std::vector<double>> rows;
  while (csv::next_record(in, line, line_no)) {
    auto f = csv::split(line);
    if (f.size() != header.size()) throw ParseError("expected " + std::to_string(header.size()) + " fields", line_no);
    t.chain.push_back(static_cast<int>(csv::parse_int(f[0], line_no)));
    std::vector<double> row(t.columns.size());
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = csv::parse_optional(f[j + 2], line_no).value_or(std::numeric_limits<double>::quiet_NaN());
    rows.push_back(std::move(row));
  }
  t.draws.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.columns.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.draws(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return t;
}

// ---------------------------------------------------------------------------

void write_region_summary_csv(const std::vector<Eigen::MatrixXd>& mu, const AdjacencyGraph& graph, bool healthy,
                              const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "region,outcome,median,q025,q10,q90,q975,mean,sd,status\n";
  const char* status = healthy ? "HEALTHY" : "UNHEALTHY";
  for (std::size_t r = 0; r < mu.size(); ++r) {
    for (Eigen::Index c = 0; c < mu[r].cols(); ++c) {
      const Eigen::VectorXd x = mu[r].col(c);
      std::vector<double> v(x.data(), x.data() + x.size());
      const double mean = x.mean();
      const double sd = x.size() > 1 ? std::sqrt((x.array() - mean).square().sum() / (x.size() - 1.0)) : 0.0;
      out << csv::quote(graph.label(static_cast<int>(r))) << ',' << c + 1;
      for (double p : {0.5, 0.025, 0.10, 0.90, 0.975}) out << ',' << csv::format(quantile(v, p));
      out << ',' << csv::format(mean) << ',' << csv::format(sd) << ',' << status << '\n';
    }
  }
}

std::vector<Eigen::MatrixXd> fit_mu_draws(const ModelFit& fit) {
  std::vector<Eigen::MatrixXd> mu;
  for (int r = 0; r < fit.regions; ++r) mu.push_back(fit.mu_draws(r));
  return mu;
}

void write_fit_summary_csv(const ModelFit& fit, const AdjacencyGraph& graph, const std::filesystem::path& path) {
  write_region_summary_csv(fit_mu_draws(fit), graph, fit.diagnostics.healthy, path);
}

json diagnostics_json(const ModelFit& fit) {
  json params = json::array();
  for (const auto& p : fit.diagnostics.parameters)
    params.push_back({{"name", p.name}, {"ess", num(p.ess)}, {"rhat", num(p.rhat)}});
  json acc = json::object();
  for (std::size_t i = 0; i < fit.diagnostics.acceptance.size(); ++i)
    acc[fit.diagnostics.acceptance_names.at(i)] = num(fit.diagnostics.acceptance[i]);
  return {{"model", model_name(fit.spec)},
          {"chains", fit.chain_count},
          {"draws_per_chain", fit.draws_per_chain},
          {"seed", fit.seed},
          {"healthy", fit.diagnostics.healthy},
          {"max_rhat", num(fit.diagnostics.max_rhat)},
          {"parameters", params},
          {"acceptance", acc},
          {"notes", fit.notes}};
}

void write_logscore_csvs(const std::vector<LogScoreReport>& reports, const AdjacencyGraph& graph,
                         const std::filesystem::path& per_region, const std::filesystem::path& summary) {
  {
    auto out = open_out(per_region);
    out << "model,region,log_lhat\n";
    for (const auto& rep : reports)
      for (Eigen::Index r = 0; r < rep.log_lhat.size(); ++r) {
        const double v = rep.log_lhat(r);
        out << csv::quote(rep.model_id) << ',' << csv::quote(graph.label(static_cast<int>(r))) << ',';
        if (std::isnan(v))
          out << "";
        else if (std::isinf(v))
          out << (v < 0 ? "-inf" : "inf");
        else
          out << csv::format(v);
        out << '\n';
      }
  }
  std::vector<std::size_t> order(reports.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return reports[a].logscore_mean < reports[b].logscore_mean;
  });
  auto out = open_out(summary);
  out << "model,logscore_sum,logscore_mean,scored\n";
  for (std::size_t i : order) {
    const auto& rep = reports[i];
    auto fmt = [](double x) { return std::isinf(x) ? std::string(x < 0 ? "-inf" : "inf") : csv::format(x); };
    out << csv::quote(rep.model_id) << ',' << fmt(rep.logscore_sum) << ',' << fmt(rep.logscore_mean) << ','
        << rep.scored << '\n';
  }
}

void merge_geojson(const std::filesystem::path& in, const std::filesystem::path& out, const std::string& key,
                   const std::string& stem, const std::vector<Eigen::MatrixXd>& mu, const AdjacencyGraph& graph) {
  std::ifstream f(in);
  if (!f) throw Error("cannot read " + in.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw ParseError(std::string("GeoJSON: ") + e.what());
  }
  if (!doc.contains("features") || !doc["features"].is_array()) throw ParseError("GeoJSON has no features array");
  for (auto& feat : doc["features"]) {
    auto& props = feat["properties"];
    if (!props.is_object() || !props.contains(key)) continue;
    const auto& v = props[key];
    const std::string label = v.is_string() ? v.get<std::string>() : v.dump();
    const auto found = graph.index_of(label);
    if (!found) continue;
    const int r = *found;
    for (Eigen::Index c = 0; c < mu[static_cast<std::size_t>(r)].cols(); ++c) {
      const Eigen::VectorXd x = mu[static_cast<std::size_t>(r)].col(c);
      std::vector<double> d(x.data(), x.data() + x.size());
      const std::string p = stem + "_" + idx(static_cast<int>(c));
      props[p + "_median"] = num(quantile(d, 0.5));
      props[p + "_q025"] = num(quantile(d, 0.025));
      props[p + "_q975"] = num(quantile(d, 0.975));
    }
  }
  write_json(doc, out);
}

std::vector<Eigen::MatrixXd> aggregate_samples(const SampleTable& table, const UnitModelSpec& spec,
                                               const AdjacencyGraph& graph, const RuralFractions& q) {
  const int R = graph.size();
  q.validate(R);
  int C = 0;
  while (table.column_index("beta." + idx(C)) >= 0) ++C;
  if (C == 0) throw ValidationError("samples file has no beta columns");
  auto col = [&](const std::string& name) {
    const int j = table.column_index(name);
    if (j < 0) throw ValidationError("samples file lacks column '" + name + "' (refit with components recorded)");
    return j;
  };
  const bool bym = is_bym(spec.family);
  const IcarStructure icar = scaled_icar(graph);
  const auto S = table.draws.rows();
  std::vector<Eigen::MatrixXd> mu(static_cast<std::size_t>(R), Eigen::MatrixXd(S, C));
  for (Eigen::Index s = 0; s < S; ++s) {
    const auto row = table.draws.row(s);
    LatentState st;
    st.beta.resize(C);
    st.gamma = Eigen::VectorXd(C);
    st.s.resize(R, C);
    for (int c = 0; c < C; ++c) {
      st.beta(c) = row(col("beta." + idx(c)));
      (*st.gamma)(c) = row(col("gamma." + idx(c)));
      Bym2Effect e;
      e.sigma = row(col("sigma." + idx(c)));
      e.rho = bym ? row(col("rho." + idx(c))) : 0.0;
      e.v_star.resize(R);
      e.u_star = Eigen::VectorXd::Zero(R);
      for (int r = 0; r < R; ++r) {
        e.v_star(r) = row(col("v_star." + idx(c) + "." + idx(r)));
        if (bym) e.u_star(r) = row(col("u_star." + idx(c) + "." + idx(r)));
      }
      // Recorded u* is centred to rounding; re-centre per component before the strict check.
      for (const auto& comp : icar.components) {
        if (comp.size() < 2) continue;
        double m = 0.0;
        for (int i : comp) m += e.u_star(i);
        m /= static_cast<double>(comp.size());
        for (int i : comp) e.u_star(i) -= m;
      }
      st.s.col(c) = realize_bym2(e, &icar);
    }
    if (spec.shared()) st.lambda = row(col("lambda"));
    for (int r = 0; r < R; ++r) mu[static_cast<std::size_t>(r)].row(s) = aggregate_region_mean(spec, st, q, r).transpose();
  }
  return mu;
}

}  // namespace msae
