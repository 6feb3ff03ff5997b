#include "dse/estimability.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <Eigen/SVD>

namespace dse {
namespace {

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Unit-capacity max flow (augmenting paths by DFS). Small graphs only.
class UnitFlow {
 public:
  explicit UnitFlow(int nodes) : adj_(nodes) {}

  void add_edge(int from, int to) {
    adj_[from].push_back(static_cast<int>(edges_.size()));
    edges_.push_back({to, 1});
    adj_[to].push_back(static_cast<int>(edges_.size()));
    edges_.push_back({from, 0});
  }

  int run(int source, int sink) {
    int flow = 0;
    for (;;) {
      std::vector<bool> seen(adj_.size(), false);
      if (!augment(source, sink, seen)) return flow;
      ++flow;
    }
  }

  /// Heads of saturated forward edges leaving `node`.
  std::vector<int> flow_targets(int node) const {
    std::vector<int> out;
    for (int e : adj_[node]) {
      if (e % 2 == 0 && edges_[e].cap == 0) out.push_back(edges_[e].to);
    }
    return out;
  }

 private:
  struct Edge {
    int to;
    int cap;
  };

  bool augment(int u, int sink, std::vector<bool>& seen) {
    if (u == sink) return true;
    seen[u] = true;
    for (int e : adj_[u]) {
      Edge& ed = edges_[e];
      if (ed.cap > 0 && !seen[ed.to] && augment(ed.to, sink, seen)) {
        ed.cap -= 1;
        edges_[e ^ 1].cap += 1;
        return true;
      }
    }
    return false;
  }

  std::vector<std::vector<int>> adj_;
  std::vector<Edge> edges_;
};

}  // namespace

std::string StructuredPairGraph::vertex_name(int vertex) const {
  if (vertex < column_count()) {
    return "V" + std::to_string(bus_ids[vertex / 2]) + (vertex % 2 ? ".im" : ".re");
  }
  return "z:" + measurement_labels.at(vertex - column_count());
}

StructuredPairGraph build_structured_pair(const NetworkModel& network,
                                          const std::vector<int>& unknown_buses,
                                          const std::vector<int>& device_buses,
                                          const std::vector<Pmu>& pmus) {
  const int n = network.bus_count();
  StructuredPairGraph g;
  g.unknown.assign(n, false);
  for (const Bus& b : network.buses()) g.bus_ids.push_back(b.id);
  for (int id : unknown_buses) g.unknown[network.index_of(id)] = true;
  std::vector<bool> device(n, false);
  for (int id : device_buses) device[network.index_of(id)] = true;
  g.bus_adjacency = network.adjacency();
  for (auto& a : g.bus_adjacency) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  g.pmus = pmus;

  const ComplexMatrix y = network.admittance_dense();
  BoolMatrix e4 = BoolMatrix::Constant(2 * n, 2 * n, false);
  for (int i = 0; i < n; ++i) {
    if (g.unknown[i]) continue;
    for (int j = 0; j < n; ++j) {
      if (i == j) {
        if (!g.bus_adjacency[i].empty() || device[i] ||
            y(i, i) != Complex(0.0, 0.0)) {
          e4.block(2 * i, 2 * i, 2, 2).setConstant(true);
        }
        continue;
      }
      if (y(i, j).real() != 0.0) {
        e4(2 * i, 2 * j) = e4(2 * i + 1, 2 * j + 1) = true;
      }
      if (y(i, j).imag() != 0.0) {
        e4(2 * i, 2 * j + 1) = e4(2 * i + 1, 2 * j) = true;
      }
    }
  }

  const Matrix c2 = measurement_matrix(network, pmus);
  for (const Pmu& p : pmus) {
    g.measurement_labels.push_back(p.label() + ".re");
    g.measurement_labels.push_back(p.label() + ".im");
  }
  g.out_edges.assign(2 * n, {});
  for (int j = 0; j < 2 * n; ++j) {
    for (int i = 0; i < 2 * n; ++i) {
      if (e4(i, j)) g.out_edges[j].push_back(i);
    }
    for (Eigen::Index r = 0; r < c2.rows(); ++r) {
      if (c2(r, j) != 0.0) g.out_edges[j].push_back(2 * n + static_cast<int>(r));
    }
  }

  for (const Pmu& p : pmus) {
    const int own = network.index_of(p.bus);
    std::vector<int> allowed;
    switch (p.kind) {
      case PmuKind::kVoltage: allowed = {own}; break;
      case PmuKind::kBranchCurrent: allowed = {own, network.index_of(p.other)}; break;
      case PmuKind::kInjectionCurrent:
        allowed = {own};
        for (int nb : g.bus_adjacency[own]) allowed.push_back(nb);
        break;
    }
    const int chosen = network.index_of(p.assigned_bus());
    if (std::find(allowed.begin(), allowed.end(), chosen) == allowed.end()) {
      throw std::invalid_argument("PMU " + p.label() + " cannot be assigned to bus " +
                                  std::to_string(p.assigned_bus()));
    }
    std::vector<int> options{chosen};
    for (int a : allowed) {
      if (a != chosen) options.push_back(a);
    }
    g.assignment_options.push_back(std::move(options));
  }
  return g;
}

StructuredPairGraph build_structured_pair(const PowerSystemModel& model) {
  std::vector<int> device_ids;
  for (int p : model.device_bus_positions()) {
    device_ids.push_back(model.network().buses()[p].id);
  }
  return build_structured_pair(model.network(), model.unknown_buses(), device_ids,
                               model.pmus());
}

BoolMatrix structured_pattern(const StructuredPairGraph& graph) {
  BoolMatrix pat = BoolMatrix::Constant(graph.row_count(), graph.column_count(), false);
  for (int j = 0; j < graph.column_count(); ++j) {
    for (int i : graph.out_edges[j]) pat(i, j) = true;
  }
  return pat;
}

BipartiteMatching hopcroft_karp(int left_count, int right_count,
                                const std::vector<std::vector<int>>& adjacency) {
  constexpr int kInf = std::numeric_limits<int>::max();
  BipartiteMatching m;
  m.match_left.assign(left_count, -1);
  m.match_right.assign(right_count, -1);
  std::vector<int> dist(left_count);

  auto bfs = [&] {
    std::queue<int> q;
    bool found = false;
    for (int u = 0; u < left_count; ++u) {
      if (m.match_left[u] < 0) {
        dist[u] = 0;
        q.push(u);
      } else {
        dist[u] = kInf;
      }
    }
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (int r : adjacency[u]) {
        const int w = m.match_right[r];
        if (w < 0) {
          found = true;
        } else if (dist[w] == kInf) {
          dist[w] = dist[u] + 1;
          q.push(w);
        }
      }
    }
    return found;
  };

  std::function<bool(int)> dfs = [&](int u) {
    for (int r : adjacency[u]) {
      const int w = m.match_right[r];
      if (w < 0 || (dist[w] == dist[u] + 1 && dfs(w))) {
        m.match_left[u] = r;
        m.match_right[r] = u;
        return true;
      }
    }
    dist[u] = kInf;
    return false;
  };

  while (bfs()) {
    for (int u = 0; u < left_count; ++u) {
      if (m.match_left[u] < 0 && dfs(u)) ++m.size;
    }
  }
  return m;
}

std::optional<std::vector<DisjointPath>> find_disjoint_paths(
    const StructuredPairGraph& graph, const std::vector<int>& assignment) {
  const int n = graph.bus_count();
  const int np = static_cast<int>(graph.pmus.size());
  if (static_cast<int>(assignment.size()) != np) {
    throw std::invalid_argument("assignment size does not match PMU count");
  }
  // Nodes: bus in 2p, bus out 2p+1, PMU 2n+k, source, sink.
  const int source = 2 * n + np;
  const int sink = source + 1;
  UnitFlow flow(sink + 1);
  int injectors = 0;
  for (int p = 0; p < n; ++p) {
    flow.add_edge(2 * p, 2 * p + 1);
    if (graph.unknown[p]) {
      flow.add_edge(source, 2 * p);
      ++injectors;
    }
  }
  for (int k = 0; k < np; ++k) {
    flow.add_edge(2 * assignment[k] + 1, 2 * n + k);
    flow.add_edge(2 * n + k, sink);
  }
  for (int p = 0; p < n; ++p) {
    for (int q : graph.bus_adjacency[p]) {
      if (!graph.unknown[q]) flow.add_edge(2 * p + 1, 2 * q);
    }
  }
  if (flow.run(source, sink) != injectors) return std::nullopt;

  std::vector<DisjointPath> paths;
  for (int p = 0; p < n; ++p) {
    if (!graph.unknown[p]) continue;
    DisjointPath path;
    path.injector = graph.bus_ids[p];
    int node = 2 * p + 1;
    path.buses.push_back(graph.bus_ids[p]);
    for (;;) {
      const std::vector<int> next = flow.flow_targets(node);
      if (next.empty()) return std::nullopt;  // unreachable for a valid flow
      const int t = next.front();
      if (t >= 2 * n) {
        path.pmu = t - 2 * n;
        break;
      }
      path.buses.push_back(graph.bus_ids[t / 2]);
      node = t + 1;
    }
    paths.push_back(std::move(path));
  }
  return paths;
}

bool verify_disjoint_paths(const StructuredPairGraph& graph,
                           const std::vector<DisjointPath>& paths,
                           const std::vector<int>& assignment) {
  const int n = graph.bus_count();
  auto pos = [&](int id) {
    const auto it = std::find(graph.bus_ids.begin(), graph.bus_ids.end(), id);
    return it == graph.bus_ids.end() ? -1 : static_cast<int>(it - graph.bus_ids.begin());
  };
  if (assignment.size() != graph.pmus.size()) return false;
  std::set<int> injectors;
  for (int p = 0; p < n; ++p) {
    if (graph.unknown[p]) injectors.insert(p);
  }
  std::set<int> used_buses, used_pmus, covered;
  for (const DisjointPath& path : paths) {
    if (path.buses.empty() || path.buses.front() != path.injector) return false;
    const int start = pos(path.injector);
    if (start < 0 || !graph.unknown[start] || !covered.insert(start).second) return false;
    for (std::size_t i = 0; i < path.buses.size(); ++i) {
      const int p = pos(path.buses[i]);
      if (p < 0 || !used_buses.insert(p).second) return false;
      if (i > 0) {
        if (graph.unknown[p]) return false;
        const auto& adj = graph.bus_adjacency[pos(path.buses[i - 1])];
        if (std::find(adj.begin(), adj.end(), p) == adj.end()) return false;
      }
    }
    if (path.pmu < 0 || path.pmu >= static_cast<int>(graph.pmus.size())) return false;
    if (!used_pmus.insert(path.pmu).second) return false;
    const int a = assignment[path.pmu];
    const auto& options = graph.assignment_options[path.pmu];
    if (std::find(options.begin(), options.end(), pos(a)) == options.end()) return false;
    if (a != path.buses.back()) return false;
  }
  return covered == injectors;
}

EstimabilityCertificate check_topological_estimability(
    const StructuredPairGraph& graph) {
  EstimabilityCertificate cert;
  cert.columns = graph.column_count();
  const BipartiteMatching m =
      hopcroft_karp(graph.column_count(), graph.row_count(), graph.out_edges);
  cert.structural_rank = m.size;
  cert.column_match = m.match_left;
  for (int j = 0; j < cert.columns; ++j) {
    if (m.match_left[j] < 0) cert.unmatched_columns.push_back(j);
  }
  cert.estimable = cert.unmatched_columns.empty();

  // Path search over assignment combinations, configured choice first.
  const std::size_t np = graph.pmus.size();
  std::vector<std::size_t> choice(np, 0);
  constexpr long kMaxCombinations = 1L << 16;
  for (long tried = 0; tried < kMaxCombinations; ++tried) {
    std::vector<int> assignment(np);
    for (std::size_t k = 0; k < np; ++k) {
      assignment[k] = graph.assignment_options[k][choice[k]];
    }
    if (auto paths = find_disjoint_paths(graph, assignment)) {
      cert.paths_found = true;
      cert.paths = std::move(*paths);
      for (int a : assignment) cert.assignment.push_back(graph.bus_ids[a]);
      break;
    }
    std::size_t k = 0;
    for (; k < np; ++k) {
      if (++choice[k] < graph.assignment_options[k].size()) break;
      choice[k] = 0;
    }
    if (k == np) break;
  }
  return cert;
}

int numeric_column_rank(const Matrix& m, double rel_tol) {
  if (m.cols() == 0) return 0;
  if (m.rows() == 0) return 0;
  Eigen::JacobiSVD<Matrix> svd(m);
  const Vector s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  const double tol = rel_tol * s[0];
  return static_cast<int>((s.array() > tol).count());
}

bool check_numeric_rank(const StructuredPairGraph& graph, int trials,
                        std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  const BoolMatrix pat = structured_pattern(graph);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.5, 1.5);
  std::bernoulli_distribution sign(0.5);
  for (int t = 0; t < trials; ++t) {
    Matrix m = Matrix::Zero(pat.rows(), pat.cols());
    for (Eigen::Index j = 0; j < pat.cols(); ++j) {
      for (Eigen::Index i = 0; i < pat.rows(); ++i) {
        if (pat(i, j)) m(i, j) = (sign(rng) ? -1.0 : 1.0) * mag(rng);
      }
    }
    if (numeric_column_rank(m) == m.cols()) return true;
  }
  return false;
}

std::string render_certificate(const StructuredPairGraph& graph,
                               const EstimabilityCertificate& cert) {
  std::ostringstream out;
  out << (cert.estimable ? "estimable" : "NOT estimable") << ": structural rank "
      << cert.structural_rank << " of " << cert.columns << " columns\n";
  if (cert.paths_found) {
    out << "disjoint paths (" << cert.paths.size() << "):\n";
    for (const DisjointPath& p : cert.paths) {
      out << "  injector " << p.injector << ": ";
      for (std::size_t i = 0; i < p.buses.size(); ++i) {
        out << (i ? " -> " : "") << p.buses[i];
      }
      out << "  [" << graph.pmus[p.pmu].label() << "]\n";
    }
  } else {
    out << "no disjoint path set found for any PMU assignment\n";
  }
  if (!cert.unmatched_columns.empty()) {
    out << "unmatched columns:";
    for (int c : cert.unmatched_columns) out << ' ' << graph.vertex_name(c);
    out << '\n';
  }
  return out.str();
}

}  // namespace dse
