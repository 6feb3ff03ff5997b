#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dse/network.hpp"
#include "dse/pmu.hpp"
#include "dse/psmodel.hpp"

namespace dse {

/// Graph of the structured pair (E4 augmented with zero rows, C2). Vertices
/// 0..2n-1 are the real/imaginary vertices of the n buses (E4 rows and
/// columns); vertices 2n.. are measurement rows (sinks). An edge j -> i
/// exists iff entry (i, j) is structurally nonzero.
struct StructuredPairGraph {
  std::vector<int> bus_ids;
  std::vector<bool> unknown;                    ///< per bus position
  std::vector<std::vector<int>> bus_adjacency;  ///< bus positions
  std::vector<Pmu> pmus;
  std::vector<std::string> measurement_labels;  ///< per C2 row
  std::vector<std::vector<int>> out_edges;      ///< per column vertex
  /// Per PMU, bus positions it may be assigned to; the configured one first.
  std::vector<std::vector<int>> assignment_options;

  int bus_count() const { return static_cast<int>(bus_ids.size()); }
  int column_count() const { return 2 * bus_count(); }
  int row_count() const {
    return column_count() + static_cast<int>(measurement_labels.size());
  }
  std::string vertex_name(int vertex) const;
};

/// Builds the graph from a constructed estimation model.
StructuredPairGraph build_structured_pair(const PowerSystemModel& model);

/// Builds the graph from topology alone. `device_buses` carry known device
/// models (their diagonal blocks are structurally full). Throws
/// std::invalid_argument for PMU assignments that break the assignment rule.
StructuredPairGraph build_structured_pair(const NetworkModel& network,
                                          const std::vector<int>& unknown_buses,
                                          const std::vector<int>& device_buses,
                                          const std::vector<Pmu>& pmus);

/// Dense 0/1 pattern of [E4; C2] described by the graph.
Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> structured_pattern(
    const StructuredPairGraph& graph);

struct BipartiteMatching {
  int size = 0;
  std::vector<int> match_left;   ///< left -> right or -1
  std::vector<int> match_right;  ///< right -> left or -1
};

/// Maximum cardinality matching; adjacency lists left -> right.
BipartiteMatching hopcroft_karp(int left_count, int right_count,
                                const std::vector<std::vector<int>>& adjacency);

/// Bus-level path from an unknown injector to a bus holding an assigned PMU.
struct DisjointPath {
  int injector = 0;          ///< bus id
  std::vector<int> buses;    ///< bus ids, injector first, terminal last
  int pmu = -1;              ///< index of the terminating PMU
};

struct EstimabilityCertificate {
  bool estimable = false;
  int structural_rank = 0;
  int columns = 0;
  std::vector<int> column_match;       ///< column vertex -> row vertex or -1
  std::vector<int> unmatched_columns;  ///< deficiency witness
  bool paths_found = false;
  std::vector<DisjointPath> paths;
  std::vector<int> assignment;         ///< bus id per PMU used for the paths
};

/// Vertex-disjoint paths along branches, one per unknown injector, each
/// ending at a distinct bus that holds an assigned PMU; paths do not pass
/// through other injectors. `assignment` gives a bus position per PMU.
std::optional<std::vector<DisjointPath>> find_disjoint_paths(
    const StructuredPairGraph& graph, const std::vector<int>& assignment);

/// Checks a proposed path set against the rules of find_disjoint_paths.
/// `assignment` is a bus id per PMU.
bool verify_disjoint_paths(const StructuredPairGraph& graph,
                           const std::vector<DisjointPath>& paths,
                           const std::vector<int>& assignment);

/// Decision by structural column rank of [E4; C2]. Disjoint paths are
/// searched with the configured assignment first, then with every
/// assignment combination.
EstimabilityCertificate check_topological_estimability(
    const StructuredPairGraph& graph);

/// True iff some random instantiation of the pattern (magnitudes in
/// [0.5, 1.5], random signs) has full column rank, tolerance 1e-8 sigma_max.
bool check_numeric_rank(const StructuredPairGraph& graph, int trials,
                        std::uint64_t seed);

/// Column rank by SVD with tolerance rel_tol * sigma_max.
int numeric_column_rank(const Matrix& m, double rel_tol = 1e-8);

/// Human-readable certificate.
std::string render_certificate(const StructuredPairGraph& graph,
                               const EstimabilityCertificate& cert);

}  // namespace dse
