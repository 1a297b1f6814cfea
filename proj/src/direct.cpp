#include "msae/direct.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "msae/csv.hpp"
#include "msae/error.hpp"

namespace msae {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Clip negative eigenvalues if the matrix is meaningfully indefinite.
bool project_psd(Eigen::MatrixXd& V) {
  if (V.rows() == 0) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(V);
  const double scale = std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  if (eig.eigenvalues().minCoeff() >= -1e-12 * scale) return false;
  Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(0.0);
  V = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
  V = 0.5 * (V + V.transpose()).eval();
  return true;
}

}  // namespace

std::optional<LonelyPsuPolicy> parse_lonely_psu_policy(std::string_view name) {
  if (name == "error") return LonelyPsuPolicy::Error;
  if (name == "centered") return LonelyPsuPolicy::Centered;
  return std::nullopt;
}

std::vector<int> DirectEstimateSet::available_outcomes(int region) const {
  std::vector<int> out;
  for (int c = 0; c < outcomes(); ++c)
    if (available(region, c)) out.push_back(c);
  return out;
}

DirectEstimateSet DirectEstimateSet::without_region(int region) const {
  DirectEstimateSet out = *this;
  out.available.row(region).setConstant(false);
  out.y_hat.row(region).setConstant(kNaN);
  out.V_hat[static_cast<std::size_t>(region)].setConstant(kNaN);
  out.notes[static_cast<std::size_t>(region)] = "held out";
  return out;
}

DirectEstimateSet DirectEstimateSet::empty(int regions, int outcomes) {
  DirectEstimateSet out;
  out.y_hat = Eigen::MatrixXd::Constant(regions, outcomes, kNaN);
  out.V_hat.assign(static_cast<std::size_t>(regions), Eigen::MatrixXd::Constant(outcomes, outcomes, kNaN));
  out.available.setConstant(regions, outcomes, false);
  out.psd_projected.assign(static_cast<std::size_t>(regions), false);
  out.notes.assign(static_cast<std::size_t>(regions), "");
  return out;
}

std::optional<double> hajek_mean(const SurveyDataset& data, int region, int outcome) {
  double sw = 0.0, swy = 0.0;
  for (std::size_t i : data.records_in_region(region)) {
    const auto& rec = data.records()[i];
    if (!rec.observed(outcome)) continue;
    sw += rec.weight;
    swy += rec.weight * rec.outcomes[static_cast<std::size_t>(outcome)];
  }
  if (sw <= 0.0) return std::nullopt;
  return swy / sw;
}

std::vector<std::string> lonely_strata(const SurveyDataset& data, int region) {
  std::map<std::string, std::set<std::string>> clusters;
  for (std::size_t i : data.records_in_region(region)) {
    const auto& rec = data.records()[i];
    bool any = false;
    for (int c = 0; c < data.n_outcomes(); ++c) any = any || rec.observed(c);
    if (any) clusters[rec.stratum].insert(rec.cluster);
  }
  std::vector<std::string> out;
  for (const auto& [stratum, members] : clusters)
    if (members.size() == 1) out.push_back(stratum);
  return out;
}

Eigen::MatrixXd design_covariance(const SurveyDataset& data, int region, LonelyPsuPolicy policy,
                                  bool* projected) {
  const int C = data.n_outcomes();
  const auto rows = data.records_in_region(region);
  const auto& recs = data.records();
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(C, C);

  for (int a = 0; a < C; ++a) {
    for (int b = a; b < C; ++b) {
      // Records observing both outcomes, normalized weights over that subset.
      double sw = 0.0, swa = 0.0, swb = 0.0;
      for (std::size_t i : rows) {
        const auto& rec = recs[i];
        if (!rec.observed(a) || !rec.observed(b)) continue;
        sw += rec.weight;
        swa += rec.weight * rec.outcomes[static_cast<std::size_t>(a)];
        swb += rec.weight * rec.outcomes[static_cast<std::size_t>(b)];
      }
      if (sw <= 0.0) continue;
      const double ma = swa / sw, mb = swb / sw;

      // Cluster totals of linearized residuals, grouped by stratum.
      std::map<std::string, std::map<std::string, std::pair<double, double>>> totals;
      for (std::size_t i : rows) {
        const auto& rec = recs[i];
        if (!rec.observed(a) || !rec.observed(b)) continue;
        const double w = rec.weight / sw;
        auto& t = totals[rec.stratum][rec.cluster];
        t.first += w * (rec.outcomes[static_cast<std::size_t>(a)] - ma);
        t.second += w * (rec.outcomes[static_cast<std::size_t>(b)] - mb);
      }

      double grand_a = 0.0, grand_b = 0.0;
      int n_clusters = 0;
      std::vector<std::string> lonely;
      for (const auto& [stratum, clusters] : totals) {
        if (clusters.size() == 1) lonely.push_back(stratum);
        for (const auto& [id, t] : clusters) {
          grand_a += t.first;
          grand_b += t.second;
          ++n_clusters;
        }
      }
      if (!lonely.empty() && policy == LonelyPsuPolicy::Error) {
        std::string names;
        for (const auto& s : lonely) names += (names.empty() ? "" : ", ") + s;
        throw LonelyPsuError("region " + std::to_string(region + 1) +
                             ": stratum with a single cluster (lonely PSU): " + names);
      }
      grand_a /= n_clusters;
      grand_b /= n_clusters;

      double v = 0.0;
      for (const auto& [stratum, clusters] : totals) {
        const double n_h = static_cast<double>(clusters.size());
        if (clusters.size() == 1) {
          const auto& t = clusters.begin()->second;
          v += (t.first - grand_a) * (t.second - grand_b);
          continue;
        }
        double mean_a = 0.0, mean_b = 0.0;
        for (const auto& [id, t] : clusters) {
          mean_a += t.first;
          mean_b += t.second;
        }
        mean_a /= n_h;
        mean_b /= n_h;
        double s = 0.0;
        for (const auto& [id, t] : clusters) s += (t.first - mean_a) * (t.second - mean_b);
        v += n_h / (n_h - 1.0) * s;
      }
      V(a, b) = v;
      V(b, a) = v;
    }
  }

  const bool clipped = project_psd(V);
  if (projected) *projected = clipped;
  return V;
}

DirectEstimateSet direct_estimates(const SurveyDataset& data, LonelyPsuPolicy policy) {
  const int R = data.region_count();
  const int C = data.n_outcomes();
  DirectEstimateSet out = DirectEstimateSet::empty(R, C);

  for (int r = 0; r < R; ++r) {
    auto& note = out.notes[static_cast<std::size_t>(r)];
    if (data.records_per_region(r) == 0) {
      note = "no sampled clusters";
      continue;
    }
    Eigen::MatrixXd V;
    bool projected = false;
    try {
      V = design_covariance(data, r, policy, &projected);
    } catch (const LonelyPsuError& e) {
      note = e.what();
      continue;
    }
    std::vector<int> have;
    for (int c = 0; c < C; ++c) {
      if (auto m = hajek_mean(data, r, c)) {
        out.y_hat(r, c) = *m;
        out.available(r, c) = true;
        have.push_back(c);
      }
    }
    if (have.size() < static_cast<std::size_t>(C)) note = "outcome not observed in region";
    for (int a : have)
      for (int b : have) out.V_hat[static_cast<std::size_t>(r)](a, b) = V(a, b);
    out.psd_projected[static_cast<std::size_t>(r)] = projected;
  }
  return out;
}

void write_direct_estimates_csv(const DirectEstimateSet& est, const AdjacencyGraph& graph,
                                const std::filesystem::path& path) {
  if (est.regions() != graph.size())
    throw ValidationError("estimates cover " + std::to_string(est.regions()) + " regions, graph has " +
                          std::to_string(graph.size()));
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const int C = est.outcomes();
  out << "region";
  for (int c = 1; c <= C; ++c) out << ",y" << c;
  for (int a = 1; a <= C; ++a)
    for (int b = a; b <= C; ++b) out << ",v_" << a << '_' << b;
  for (int c = 1; c <= C; ++c) out << ",avail" << c;
  out << '\n';
  for (int r = 0; r < est.regions(); ++r) {
    out << csv::quote(graph.label(r));
    for (int c = 0; c < C; ++c) out << ',' << (est.available(r, c) ? csv::format(est.y_hat(r, c)) : "");
    const auto& V = est.V_hat[static_cast<std::size_t>(r)];
    for (int a = 0; a < C; ++a)
      for (int b = a; b < C; ++b)
        out << ',' << (est.available(r, a) && est.available(r, b) ? csv::format(V(a, b)) : "");
    for (int c = 0; c < C; ++c) out << ',' << (est.available(r, c) ? 1 : 0);
    out << '\n';
  }
}

DirectEstimateSet read_direct_estimates_csv(const std::filesystem::path& path, const AdjacencyGraph& graph) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open direct estimates file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!csv::next_record(in, line, line_no)) throw ParseError("direct estimates file is empty", 1);
  const auto header = csv::split(line);
  int C = 0;
  while (static_cast<std::size_t>(C + 1) < header.size() && header[static_cast<std::size_t>(C + 1)] ==
                                                                  "y" + std::to_string(C + 1))
    ++C;
  const std::size_t n_cov = static_cast<std::size_t>(C * (C + 1) / 2);
  const std::size_t width = 1 + static_cast<std::size_t>(C) + n_cov + static_cast<std::size_t>(C);
  if (C == 0 || header.size() != width || header[0] != "region")
    throw ParseError("header must be region,y1..yC,v_i_j...,avail1..availC", line_no);

  DirectEstimateSet est = DirectEstimateSet::empty(graph.size(), C);
  for (auto& note : est.notes) note = "no row in estimates file";
  std::vector<bool> seen(static_cast<std::size_t>(graph.size()), false);
  while (csv::next_record(in, line, line_no)) {
    const auto f = csv::split(line);
    if (f.size() != width)
      throw ParseError("expected " + std::to_string(width) + " fields, found " + std::to_string(f.size()), line_no);
    auto idx = graph.index_of(f[0]);
    if (!idx) throw ValidationError("line " + std::to_string(line_no) + ": region '" + f[0] +
                                    "' is not a node of the adjacency graph");
    const int r = *idx;
    if (seen[static_cast<std::size_t>(r)])
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate region '" + f[0] + "'");
    seen[static_cast<std::size_t>(r)] = true;
    est.notes[static_cast<std::size_t>(r)].clear();

    std::size_t pos = 1 + static_cast<std::size_t>(C) + n_cov;
    for (int c = 0; c < C; ++c, ++pos) {
      const long long flag = csv::parse_int(f[pos], line_no);
      if (flag != 0 && flag != 1) throw ParseError("availability flags must be 0 or 1", line_no);
      est.available(r, c) = flag == 1;
    }
    for (int c = 0; c < C; ++c) {
      auto y = csv::parse_optional(f[1 + static_cast<std::size_t>(c)], line_no);
      if (est.available(r, c)) {
        if (!y) throw ParseError("available estimate y" + std::to_string(c + 1) + " is empty", line_no);
        est.y_hat(r, c) = *y;
      }
    }
    pos = 1 + static_cast<std::size_t>(C);
    auto& V = est.V_hat[static_cast<std::size_t>(r)];
    for (int a = 0; a < C; ++a)
      for (int b = a; b < C; ++b, ++pos) {
        auto v = csv::parse_optional(f[pos], line_no);
        if (est.available(r, a) && est.available(r, b)) {
          if (!v) throw ParseError("covariance v_" + std::to_string(a + 1) + "_" + std::to_string(b + 1) +
                                       " is empty for available outcomes",
                                   line_no);
          V(a, b) = V(b, a) = *v;
        }
      }
    if (!est.available.row(r).all()) est.notes[static_cast<std::size_t>(r)] = "unavailable in input";
  }
  return est;
}

}  // namespace msae
