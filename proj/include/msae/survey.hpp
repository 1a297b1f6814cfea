#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace msae {

/// One sampled individual. `region` is the 0-based node index of the
/// adjacency graph; files use the graph's node labels instead.
struct IndividualRecord {
  int region = 0;
  std::string stratum;
  std::string cluster;
  double weight = 1.0;  ///< design weight, inverse inclusion probability
  bool rural = false;
  std::vector<double> outcomes;  ///< NaN marks a missing entry

  bool observed(int c) const { return !std::isnan(outcomes[static_cast<std::size_t>(c)]); }
};

/// Undirected neighbourhood structure over R regions.
class AdjacencyGraph {
 public:
  AdjacencyGraph() = default;

  /// `edges` use 0-based node ids. Duplicates and reversed pairs collapse to
  /// one edge; self-loops and out-of-range ids throw ValidationError.
  AdjacencyGraph(int n_nodes, const std::vector<std::pair<int, int>>& edges,
                 std::vector<std::string> labels = {});

  int size() const { return n_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::vector<std::vector<int>>& neighbors() const { return neighbors_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& label(int node) const { return labels_[static_cast<std::size_t>(node)]; }
  std::optional<int> index_of(std::string_view label) const;

  int component_count() const { return static_cast<int>(components_.size()); }
  const std::vector<std::vector<int>>& components() const { return components_; }
  int component_of(int node) const { return component_of_[static_cast<std::size_t>(node)]; }
  int degree(int node) const { return static_cast<int>(neighbors_[static_cast<std::size_t>(node)].size()); }

  /// Rook-adjacency grid; nodes in row-major order.
  static AdjacencyGraph lattice(int rows, int cols);
  /// 7x7 rook grid with two opposite corners removed: a connected planar
  /// stand-in for a 47-region geography.
  static AdjacencyGraph lattice47();
  static AdjacencyGraph path(int n);

 private:
  int n_ = 0;
  std::vector<std::pair<int, int>> edges_;  // sorted, first < second
  std::vector<std::vector<int>> neighbors_;
  std::vector<std::string> labels_;
  std::map<std::string, int, std::less<>> label_index_;
  std::vector<std::vector<int>> components_;
  std::vector<int> component_of_;
};

/// Proportion of each region's target population that is rural.
struct RuralFractions {
  std::vector<double> q;

  /// Throws ValidationError unless every entry lies in [0, 1] (and, when
  /// `regions` >= 0, there is exactly one entry per region).
  void validate(int regions = -1) const;
};

/// Validated collection of survey records with derived design indices.
class SurveyDataset {
 public:
  SurveyDataset() = default;

  /// Checks every invariant and throws ValidationError naming the offending
  /// row (1-based position in `records`) or cluster.
  SurveyDataset(std::vector<IndividualRecord> records, int n_outcomes, int region_count);

  const std::vector<IndividualRecord>& records() const { return records_; }
  int n_outcomes() const { return n_outcomes_; }
  int region_count() const { return region_count_; }

  const std::map<std::string, std::vector<std::size_t>>& cluster_index() const { return cluster_index_; }
  const std::map<std::string, std::vector<std::string>>& stratum_index() const { return stratum_index_; }

  std::vector<std::size_t> records_in_region(int region) const;
  int records_per_region(int region) const;
  int clusters_per_region(int region) const;

  /// Row positions (0-based) whose outcomes are all missing; such rows are kept.
  const std::vector<std::size_t>& all_missing_rows() const { return all_missing_; }

  /// Same dataset with every record of `region` removed (region count unchanged).
  SurveyDataset without_region(int region) const;

 private:
  std::vector<IndividualRecord> records_;
  int n_outcomes_ = 0;
  int region_count_ = 0;
  std::map<std::string, std::vector<std::size_t>> cluster_index_;
  std::map<std::string, std::vector<std::string>> stratum_index_;
  std::vector<std::vector<std::size_t>> by_region_;
  std::vector<std::size_t> all_missing_;
};

/// Reads `region,stratum,cluster,weight,rural,y1,...,yC`. Region fields are
/// node labels of `graph`. `n_outcomes` <= 0 infers C from the header.
SurveyDataset load_survey_csv(const std::filesystem::path& path, int n_outcomes,
                              const AdjacencyGraph& graph);

/// Variant without a graph: region fields are 1-based integers and R is the largest id.
SurveyDataset load_survey_csv(const std::filesystem::path& path, int n_outcomes);

/// Writes the CSV format read by load_survey_csv; weights and outcomes are
/// printed in shortest round-trip form. Regions are labelled by `graph` when
/// given, else by their 1-based index.
void write_survey_csv(const SurveyDataset& data, const std::filesystem::path& path,
                      const AdjacencyGraph* graph = nullptr);

/// Accepts the JSON form `{"n": R, "labels": [...], "edges": [[i, j], ...]}`
/// (1-based ids) or a plain edge list: a first line holding R, then one
/// `i j` pair per line.
AdjacencyGraph load_adjacency(const std::filesystem::path& path);
void write_adjacency_json(const AdjacencyGraph& graph, const std::filesystem::path& path);

RuralFractions load_rural_fractions(const std::filesystem::path& path);
void write_rural_fractions(const RuralFractions& q, const std::filesystem::path& path);

/// Conditions that prevent full Stage-1 estimation. Empty when none apply.
struct ValidationReport {
  std::vector<int> regions_without_clusters;             // 0-based
  std::vector<std::string> lonely_strata;                // strata holding one cluster
  std::vector<std::pair<int, int>> sparse_cells;         // (region, outcome) with < 2 observations
  std::vector<std::string> problems;                     // other mismatches (q length, R)

  bool empty() const {
    return regions_without_clusters.empty() && lonely_strata.empty() && sparse_cells.empty() &&
           problems.empty();
  }
  std::string to_string(const AdjacencyGraph* graph = nullptr) const;
};

ValidationReport validate_dataset(const SurveyDataset& data, const AdjacencyGraph& graph,
                                  const RuralFractions* q = nullptr);

}  // namespace msae
