#include "msae/survey.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "msae/csv.hpp"
#include "msae/error.hpp"

namespace msae {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// AdjacencyGraph

AdjacencyGraph::AdjacencyGraph(int n_nodes, const std::vector<std::pair<int, int>>& edges,
                               std::vector<std::string> labels)
    : n_(n_nodes), labels_(std::move(labels)) {
  if (n_nodes < 0) throw ValidationError("graph node count must be nonnegative");
  std::set<std::pair<int, int>> unique;
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n_nodes || b >= n_nodes)
      throw ValidationError("edge (" + std::to_string(a + 1) + ", " + std::to_string(b + 1) +
                            ") references a node outside 1.." + std::to_string(n_nodes));
    if (a == b) throw ValidationError("self-loop on node " + std::to_string(a + 1));
    unique.insert({std::min(a, b), std::max(a, b)});
  }
  edges_.assign(unique.begin(), unique.end());
  neighbors_.assign(static_cast<std::size_t>(n_), {});
  for (auto [a, b] : edges_) {
    neighbors_[static_cast<std::size_t>(a)].push_back(b);
    neighbors_[static_cast<std::size_t>(b)].push_back(a);
  }

  if (labels_.empty()) {
    for (int i = 0; i < n_; ++i) labels_.push_back(std::to_string(i + 1));
  }
  if (static_cast<int>(labels_.size()) != n_)
    throw ValidationError("graph has " + std::to_string(n_) + " nodes but " +
                          std::to_string(labels_.size()) + " labels");
  for (int i = 0; i < n_; ++i) {
    auto [it, fresh] = label_index_.emplace(labels_[static_cast<std::size_t>(i)], i);
    if (!fresh) throw ValidationError("duplicate node label '" + it->first + "'");
  }

  component_of_.assign(static_cast<std::size_t>(n_), -1);
  for (int start = 0; start < n_; ++start) {
    if (component_of_[static_cast<std::size_t>(start)] >= 0) continue;
    const int id = static_cast<int>(components_.size());
    std::vector<int> members{start};
    component_of_[static_cast<std::size_t>(start)] = id;
    for (std::size_t head = 0; head < members.size(); ++head) {
      for (int nb : neighbors_[static_cast<std::size_t>(members[head])]) {
        if (component_of_[static_cast<std::size_t>(nb)] < 0) {
          component_of_[static_cast<std::size_t>(nb)] = id;
          members.push_back(nb);
        }
      }
    }
    std::sort(members.begin(), members.end());
    components_.push_back(std::move(members));
  }
}

std::optional<int> AdjacencyGraph::index_of(std::string_view label) const {
  auto it = label_index_.find(label);
  if (it == label_index_.end()) return std::nullopt;
  return it->second;
}

AdjacencyGraph AdjacencyGraph::lattice(int rows, int cols) {
  std::vector<std::pair<int, int>> edges;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int id = r * cols + c;
      if (c + 1 < cols) edges.emplace_back(id, id + 1);
      if (r + 1 < rows) edges.emplace_back(id, id + cols);
    }
  return AdjacencyGraph(rows * cols, edges);
}

AdjacencyGraph AdjacencyGraph::lattice47() {
  constexpr int side = 7;
  // Drop the top-left and bottom-right cells of a 7x7 grid.
  std::vector<int> id(side * side, -1);
  int next = 0;
  for (int cell = 0; cell < side * side; ++cell) {
    if (cell == 0 || cell == side * side - 1) continue;
    id[static_cast<std::size_t>(cell)] = next++;
  }
  std::vector<std::pair<int, int>> edges;
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      const int a = id[static_cast<std::size_t>(r * side + c)];
      if (a < 0) continue;
      if (c + 1 < side) {
        const int b = id[static_cast<std::size_t>(r * side + c + 1)];
        if (b >= 0) edges.emplace_back(a, b);
      }
      if (r + 1 < side) {
        const int b = id[static_cast<std::size_t>((r + 1) * side + c)];
        if (b >= 0) edges.emplace_back(a, b);
      }
    }
  return AdjacencyGraph(next, edges);
}

AdjacencyGraph AdjacencyGraph::path(int n) {
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return AdjacencyGraph(n, edges);
}

// ---------------------------------------------------------------------------
// RuralFractions

void RuralFractions::validate(int regions) const {
  if (regions >= 0 && static_cast<int>(q.size()) != regions)
    throw ValidationError("rural fractions hold " + std::to_string(q.size()) + " entries for " +
                          std::to_string(regions) + " regions");
  for (std::size_t r = 0; r < q.size(); ++r)
    if (!(q[r] >= 0.0 && q[r] <= 1.0))
      throw ValidationError("rural fraction for region " + std::to_string(r + 1) +
                            " is outside [0, 1]");
}

// ---------------------------------------------------------------------------
// SurveyDataset

SurveyDataset::SurveyDataset(std::vector<IndividualRecord> records, int n_outcomes, int region_count)
    : records_(std::move(records)), n_outcomes_(n_outcomes), region_count_(region_count) {
  if (n_outcomes_ < 1) throw ValidationError("a survey needs at least one outcome");
  if (region_count_ < 0) throw ValidationError("region count must be nonnegative");
  by_region_.assign(static_cast<std::size_t>(region_count_), {});

  struct ClusterInfo {
    std::string stratum;
    int region;
    bool rural;
  };
  std::map<std::string, ClusterInfo> clusters;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& rec = records_[i];
    const std::string row = "row " + std::to_string(i + 1);
    if (!(rec.weight > 0.0) || !std::isfinite(rec.weight))
      throw ValidationError(row + ": weight must be positive and finite");
    if (rec.region < 0 || rec.region >= region_count_)
      throw ValidationError(row + ": region index " + std::to_string(rec.region + 1) +
                            " is outside 1.." + std::to_string(region_count_));
    if (static_cast<int>(rec.outcomes.size()) != n_outcomes_)
      throw ValidationError(row + ": expected " + std::to_string(n_outcomes_) + " outcomes, found " +
                            std::to_string(rec.outcomes.size()));
    for (double y : rec.outcomes)
      if (std::isinf(y)) throw ValidationError(row + ": outcome is infinite");

    auto [it, fresh] = clusters.emplace(rec.cluster, ClusterInfo{rec.stratum, rec.region, rec.rural});
    if (!fresh) {
      const auto& info = it->second;
      if (info.stratum != rec.stratum)
        throw ValidationError("cluster '" + rec.cluster + "' appears in strata '" + info.stratum +
                              "' and '" + rec.stratum + "' (" + row + ")");
      if (info.region != rec.region)
        throw ValidationError("cluster '" + rec.cluster + "' spans two regions (" + row + ")");
      if (info.rural != rec.rural)
        throw ValidationError("cluster '" + rec.cluster + "' mixes urban and rural records (" + row + ")");
    }
    cluster_index_[rec.cluster].push_back(i);
    by_region_[static_cast<std::size_t>(rec.region)].push_back(i);
    if (std::all_of(rec.outcomes.begin(), rec.outcomes.end(), [](double y) { return std::isnan(y); }))
      all_missing_.push_back(i);
  }
  for (const auto& [cluster, info] : clusters) stratum_index_[info.stratum].push_back(cluster);
}

std::vector<std::size_t> SurveyDataset::records_in_region(int region) const {
  return by_region_.at(static_cast<std::size_t>(region));
}

int SurveyDataset::records_per_region(int region) const {
  return static_cast<int>(by_region_.at(static_cast<std::size_t>(region)).size());
}

int SurveyDataset::clusters_per_region(int region) const {
  std::set<std::string_view> seen;
  for (std::size_t i : by_region_.at(static_cast<std::size_t>(region))) seen.insert(records_[i].cluster);
  return static_cast<int>(seen.size());
}

SurveyDataset SurveyDataset::without_region(int region) const {
  std::vector<IndividualRecord> kept;
  kept.reserve(records_.size());
  for (const auto& rec : records_)
    if (rec.region != region) kept.push_back(rec);
  return SurveyDataset(std::move(kept), n_outcomes_, region_count_);
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

bool parse_rural(std::string_view field, std::size_t line) {
  if (field == "1" || field == "true" || field == "TRUE" || field == "rural") return true;
  if (field == "0" || field == "false" || field == "FALSE" || field == "urban") return false;
  throw ParseError("rural flag must be 0/1, got '" + std::string(field) + "'", line);
}

template <class RegionResolver>
SurveyDataset read_survey(const std::filesystem::path& path, int n_outcomes, int region_count,
                          RegionResolver&& resolve_region, bool infer_regions) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open survey file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  if (!csv::next_record(in, line, line_no)) throw ParseError("survey file is empty", 1);

  const auto header = csv::split(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
  for (const char* name : {"region", "stratum", "cluster", "weight", "rural"})
    if (!column.count(name)) throw ParseError(std::string("header lacks column '") + name + "'", line_no);
  if (n_outcomes <= 0) {
    n_outcomes = 0;
    while (column.count("y" + std::to_string(n_outcomes + 1))) ++n_outcomes;
    if (n_outcomes == 0) throw ParseError("header has no outcome columns y1..yC", line_no);
  }
  std::vector<std::size_t> outcome_col;
  for (int c = 1; c <= n_outcomes; ++c) {
    auto it = column.find("y" + std::to_string(c));
    if (it == column.end()) throw ParseError("header lacks column 'y" + std::to_string(c) + "'", line_no);
    outcome_col.push_back(it->second);
  }

  std::vector<IndividualRecord> records;
  int max_region = region_count;
  while (csv::next_record(in, line, line_no)) {
    const auto fields = csv::split(line);
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    IndividualRecord rec;
    rec.region = resolve_region(fields[column["region"]], line_no);
    rec.stratum = fields[column["stratum"]];
    rec.cluster = fields[column["cluster"]];
    rec.weight = csv::parse_double(fields[column["weight"]], line_no);
    rec.rural = parse_rural(fields[column["rural"]], line_no);
    for (std::size_t col : outcome_col) {
      auto v = csv::parse_optional(fields[col], line_no);
      rec.outcomes.push_back(v ? *v : std::numeric_limits<double>::quiet_NaN());
    }
    if (!(rec.weight > 0.0) || !std::isfinite(rec.weight))
      throw ValidationError("line " + std::to_string(line_no) + " (row " + std::to_string(records.size() + 1) +
                            "): weight must be positive and finite");
    max_region = std::max(max_region, rec.region + 1);
    records.push_back(std::move(rec));
  }
  return SurveyDataset(std::move(records), n_outcomes, infer_regions ? max_region : region_count);
}

}  // namespace

SurveyDataset load_survey_csv(const std::filesystem::path& path, int n_outcomes,
                              const AdjacencyGraph& graph) {
  return read_survey(
      path, n_outcomes, graph.size(),
      [&](const std::string& field, std::size_t line) {
        auto idx = graph.index_of(field);
        if (!idx) throw ValidationError("line " + std::to_string(line) + ": region '" + field +
                                        "' is not a node of the adjacency graph");
        return *idx;
      },
      false);
}

SurveyDataset load_survey_csv(const std::filesystem::path& path, int n_outcomes) {
  return read_survey(
      path, n_outcomes, 0,
      [](const std::string& field, std::size_t line) {
        const long long id = csv::parse_int(field, line);
        if (id < 1) throw ValidationError("line " + std::to_string(line) + ": region ids start at 1");
        return static_cast<int>(id - 1);
      },
      true);
}

void write_survey_csv(const SurveyDataset& data, const std::filesystem::path& path,
                      const AdjacencyGraph* graph) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "region,stratum,cluster,weight,rural";
  for (int c = 1; c <= data.n_outcomes(); ++c) out << ",y" << c;
  out << '\n';
  for (const auto& rec : data.records()) {
    out << csv::quote(graph ? graph->label(rec.region) : std::to_string(rec.region + 1)) << ','
        << csv::quote(rec.stratum) << ',' << csv::quote(rec.cluster) << ',' << csv::format(rec.weight)
        << ',' << (rec.rural ? 1 : 0);
    for (double y : rec.outcomes) out << ',' << csv::format(y);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Graph and rural-fraction files

AdjacencyGraph load_adjacency(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open graph file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw ParseError("graph file is empty");

  std::vector<std::pair<int, int>> edges;
  auto add_edge = [&](long long i, long long j, long long n, std::size_t line) {
    if (i < 1 || j < 1 || i > n || j > n)
      throw ValidationError((line ? "line " + std::to_string(line) + ": " : std::string()) + "edge (" +
                            std::to_string(i) + ", " + std::to_string(j) + ") outside 1.." +
                            std::to_string(n));
    edges.emplace_back(static_cast<int>(i - 1), static_cast<int>(j - 1));
  };

  if (text[first] == '{') {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw ParseError(std::string("graph JSON: ") + e.what());
    }
    if (!doc.contains("n")) throw ParseError("graph JSON lacks 'n'");
    const long long n = doc.at("n").get<long long>();
    std::vector<std::string> labels;
    if (doc.contains("labels") && !doc.at("labels").is_null()) {
      for (const auto& l : doc.at("labels"))
        labels.push_back(l.is_string() ? l.get<std::string>() : l.dump());
    }
    if (doc.contains("edges")) {
      for (const auto& e : doc.at("edges")) {
        if (!e.is_array() || e.size() != 2) throw ParseError("graph JSON edges must be [i, j] pairs");
        add_edge(e[0].get<long long>(), e[1].get<long long>(), n, 0);
      }
    }
    return AdjacencyGraph(static_cast<int>(n), edges, std::move(labels));
  }

  std::istringstream lines(text);
  std::string line;
  std::size_t line_no = 0;
  csv::next_record(lines, line, line_no);
  const long long n = csv::parse_int(line, line_no);
  while (csv::next_record(lines, line, line_no)) {
    std::istringstream pair(line);
    std::string a, b, extra;
    if (!(pair >> a >> b) || (pair >> extra)) throw ParseError("expected 'i j' node pair", line_no);
    add_edge(csv::parse_int(a, line_no), csv::parse_int(b, line_no), n, line_no);
  }
  return AdjacencyGraph(static_cast<int>(n), edges);
}

void write_adjacency_json(const AdjacencyGraph& graph, const std::filesystem::path& path) {
  json doc;
  doc["n"] = graph.size();
  doc["labels"] = graph.labels();
  json edges = json::array();
  for (auto [a, b] : graph.edges()) edges.push_back({a + 1, b + 1});
  doc["edges"] = edges;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump() << '\n';
}

RuralFractions load_rural_fractions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open rural fraction file " + path.string());
  RuralFractions q;
  try {
    const json doc = json::parse(in);
    q.q = doc.at("q").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("rural fraction JSON: ") + e.what());
  }
  q.validate();
  return q;
}

void write_rural_fractions(const RuralFractions& q, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << json{{"q", q.q}}.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Validation report

ValidationReport validate_dataset(const SurveyDataset& data, const AdjacencyGraph& graph,
                                  const RuralFractions* q) {
  ValidationReport report;
  if (data.region_count() != graph.size())
    report.problems.push_back("dataset has " + std::to_string(data.region_count()) +
                              " regions but the graph has " + std::to_string(graph.size()));
  if (q && static_cast<int>(q->q.size()) != graph.size())
    report.problems.push_back("rural fractions hold " + std::to_string(q->q.size()) + " entries for " +
                              std::to_string(graph.size()) + " regions");

  for (int r = 0; r < data.region_count(); ++r) {
    if (data.clusters_per_region(r) == 0) {
      report.regions_without_clusters.push_back(r);
      continue;
    }
    std::vector<int> counts(static_cast<std::size_t>(data.n_outcomes()), 0);
    for (std::size_t i : data.records_in_region(r))
      for (int c = 0; c < data.n_outcomes(); ++c)
        if (data.records()[i].observed(c)) ++counts[static_cast<std::size_t>(c)];
    for (int c = 0; c < data.n_outcomes(); ++c)
      if (counts[static_cast<std::size_t>(c)] < 2) report.sparse_cells.emplace_back(r, c);
  }

  // A stratum is lonely within a region when it has exactly one cluster there.
  std::map<std::pair<std::string, int>, std::set<std::string>> clusters_by_stratum;
  for (const auto& rec : data.records()) clusters_by_stratum[{rec.stratum, rec.region}].insert(rec.cluster);
  for (const auto& [key, clusters] : clusters_by_stratum)
    if (clusters.size() == 1) report.lonely_strata.push_back(key.first);
  return report;
}

std::string ValidationReport::to_string(const AdjacencyGraph* graph) const {
  auto name = [&](int r) { return graph ? graph->label(r) : std::to_string(r + 1); };
  std::ostringstream out;
  for (const auto& p : problems) out << "problem: " << p << '\n';
  for (int r : regions_without_clusters) out << "region without sampled clusters: " << name(r) << '\n';
  for (const auto& s : lonely_strata) out << "stratum with a single cluster (lonely PSU): " << s << '\n';
  for (auto [r, c] : sparse_cells)
    out << "region " << name(r) << " has fewer than 2 observations of outcome y" << (c + 1) << '\n';
  return out.str();
}

}  // namespace msae
