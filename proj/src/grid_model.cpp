#include "gridcert/grid_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <unordered_map>

#include <Eigen/SparseCholesky>

#include "gridcert/errors.hpp"

namespace gridcert {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

std::vector<bool> link_mask(std::size_t link_count, const LinkSet& links) {
  std::vector<bool> mask(link_count, false);
  for (LinkIndex e : links) mask.at(e) = true;
  return mask;
}

// Compact copy of a subgraph with local node numbering, used by the cut
// routines so that repeated bridge searches stay cheap.
struct LocalGraph {
  std::vector<NodeIndex> global_node;
  std::vector<LinkIndex> global_link;
  std::vector<std::pair<std::size_t, std::size_t>> ends;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj;  // (neighbour, local edge)
};

LocalGraph make_local(const GridTopology& topology, const Subgraph& area) {
  LocalGraph g;
  g.global_node = area.nodes;
  g.global_link = area.links;
  std::unordered_map<NodeIndex, std::size_t> local;
  for (std::size_t i = 0; i < area.nodes.size(); ++i) local.emplace(area.nodes[i], i);
  g.adj.resize(area.nodes.size());
  for (std::size_t k = 0; k < area.links.size(); ++k) {
    const Link& l = topology.link(area.links[k]);
    auto s = local.find(l.source);
    auto t = local.find(l.target);
    if (s == local.end() || t == local.end()) {
      throw InvalidTopology("subgraph link " + std::to_string(area.links[k]) + " leaves the node set");
    }
    g.ends.emplace_back(s->second, t->second);
    g.adj[s->second].emplace_back(t->second, k);
    g.adj[t->second].emplace_back(s->second, k);
  }
  return g;
}

// Bridges of g with the edges flagged in `skip` deleted. Iterative lowlink DFS.
std::vector<bool> local_bridges(const LocalGraph& g, const std::vector<bool>& skip) {
  const std::size_t n = g.adj.size();
  std::vector<std::size_t> tin(n, kNone), low(n, 0);
  std::vector<bool> is_bridge(g.ends.size(), false);
  std::size_t timer = 0;

  struct Frame {
    std::size_t node;
    std::size_t parent_edge;
    std::size_t next;
  };
  std::vector<Frame> stack;
  for (std::size_t root = 0; root < n; ++root) {
    if (tin[root] != kNone) continue;
    tin[root] = low[root] = timer++;
    stack.push_back({root, kNone, 0});
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < g.adj[f.node].size()) {
        auto [to, edge] = g.adj[f.node][f.next++];
        if (skip[edge] || edge == f.parent_edge) continue;
        if (tin[to] == kNone) {
          tin[to] = low[to] = timer++;
          stack.push_back({to, edge, 0});
        } else {
          low[f.node] = std::min(low[f.node], tin[to]);
        }
      } else {
        const std::size_t v = f.node;
        const std::size_t pe = f.parent_edge;
        stack.pop_back();
        if (!stack.empty()) {
          const std::size_t parent = stack.back().node;
          low[parent] = std::min(low[parent], low[v]);
          if (low[v] > tin[parent]) is_bridge[pe] = true;
        }
      }
    }
  }
  return is_bridge;
}

// Component label per local node with the flagged edges deleted.
std::vector<std::size_t> local_components(const LocalGraph& g, const std::vector<bool>& skip) {
  std::vector<std::size_t> label(g.adj.size(), kNone);
  std::size_t next = 0;
  for (std::size_t s = 0; s < g.adj.size(); ++s) {
    if (label[s] != kNone) continue;
    std::queue<std::size_t> q;
    q.push(s);
    label[s] = next;
    while (!q.empty()) {
      std::size_t v = q.front();
      q.pop();
      for (auto [to, edge] : g.adj[v]) {
        if (skip[edge] || label[to] != kNone) continue;
        label[to] = next;
        q.push(to);
      }
    }
    ++next;
  }
  return label;
}

}  // namespace

GridTopology::GridTopology(std::vector<Node> nodes, std::vector<Link> links, std::string case_id)
    : nodes_(std::move(nodes)), links_(std::move(links)), case_id_(std::move(case_id)) {
  adjacency_.resize(nodes_.size());
  std::map<std::pair<NodeIndex, NodeIndex>, LinkIndex> seen;
  for (LinkIndex e = 0; e < links_.size(); ++e) {
    const Link& l = links_[e];
    if (l.source >= nodes_.size() || l.target >= nodes_.size()) {
      throw InvalidTopology("link " + std::to_string(e) + " references a missing node");
    }
    if (l.source == l.target) throw InvalidTopology("link " + std::to_string(e) + " is a self-loop");
    if (!(l.reactance > 0.0) || !std::isfinite(l.reactance)) {
      throw InvalidTopology("link " + std::to_string(e) + " has non-positive reactance");
    }
    auto key = std::minmax(l.source, l.target);
    if (!seen.emplace(key, e).second) {
      throw InvalidTopology("links " + std::to_string(seen[key]) + " and " + std::to_string(e) + " are parallel");
    }
    adjacency_[l.source].push_back(e);
    adjacency_[l.target].push_back(e);
  }
}

Eigen::VectorXd GridTopology::injections() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(nodes_.size()));
  for (std::size_t v = 0; v < nodes_.size(); ++v) p[static_cast<Eigen::Index>(v)] = nodes_[v].injection;
  return p;
}

bool Subgraph::contains_node(NodeIndex v) const { return std::binary_search(nodes.begin(), nodes.end(), v); }

bool Subgraph::contains_link(LinkIndex e) const { return std::binary_search(links.begin(), links.end(), e); }

Subgraph induced_subgraph(const GridTopology& topology, NodeSet nodes) {
  std::sort(nodes.begin(), nodes.end());
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  std::vector<bool> inside(topology.node_count(), false);
  for (NodeIndex v : nodes) inside.at(v) = true;
  Subgraph h{std::move(nodes), {}};
  for (LinkIndex e = 0; e < topology.link_count(); ++e) {
    const Link& l = topology.link(e);
    if (inside[l.source] && inside[l.target]) h.links.push_back(e);
  }
  return h;
}

LinkSet boundary_links(const GridTopology& topology, const Subgraph& area, const NodeSet& hyper_node) {
  LinkSet out;
  for (LinkIndex e : area.links) {
    const Link& l = topology.link(e);
    const bool s = std::binary_search(hyper_node.begin(), hyper_node.end(), l.source);
    const bool t = std::binary_search(hyper_node.begin(), hyper_node.end(), l.target);
    if (s != t) out.push_back(e);
  }
  return out;
}

Eigen::SparseMatrix<double> build_admittance(const GridTopology& topology, const LinkSet& removed) {
  const auto n = static_cast<Eigen::Index>(topology.node_count());
  const std::vector<bool> skip = link_mask(topology.link_count(), removed);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(4 * topology.link_count());
  for (LinkIndex e = 0; e < topology.link_count(); ++e) {
    if (skip[e]) continue;
    const Link& l = topology.link(e);
    const double y = 1.0 / l.reactance;
    const auto s = static_cast<Eigen::Index>(l.source);
    const auto t = static_cast<Eigen::Index>(l.target);
    triplets.emplace_back(s, s, y);
    triplets.emplace_back(t, t, y);
    triplets.emplace_back(s, t, -y);
    triplets.emplace_back(t, s, -y);
  }
  Eigen::SparseMatrix<double> b(n, n);
  b.setFromTriplets(triplets.begin(), triplets.end());
  return b;
}

Eigen::SparseMatrix<double> build_incidence(const GridTopology& topology) {
  std::vector<Eigen::Triplet<double>> triplets;
  for (LinkIndex e = 0; e < topology.link_count(); ++e) {
    const Link& l = topology.link(e);
    triplets.emplace_back(static_cast<Eigen::Index>(l.source), static_cast<Eigen::Index>(e), 1.0);
    triplets.emplace_back(static_cast<Eigen::Index>(l.target), static_cast<Eigen::Index>(e), -1.0);
  }
  Eigen::SparseMatrix<double> d(static_cast<Eigen::Index>(topology.node_count()),
                                static_cast<Eigen::Index>(topology.link_count()));
  d.setFromTriplets(triplets.begin(), triplets.end());
  return d;
}

Eigen::VectorXd link_susceptances(const GridTopology& topology) {
  Eigen::VectorXd gamma(static_cast<Eigen::Index>(topology.link_count()));
  for (LinkIndex e = 0; e < topology.link_count(); ++e) {
    gamma[static_cast<Eigen::Index>(e)] = 1.0 / topology.link(e).reactance;
  }
  return gamma;
}

std::vector<NodeSet> islands(const GridTopology& topology, const LinkSet& removed) {
  const std::vector<bool> skip = link_mask(topology.link_count(), removed);
  std::vector<bool> seen(topology.node_count(), false);
  std::vector<NodeSet> out;
  for (NodeIndex s = 0; s < topology.node_count(); ++s) {
    if (seen[s]) continue;
    NodeSet comp;
    std::queue<NodeIndex> q;
    q.push(s);
    seen[s] = true;
    while (!q.empty()) {
      NodeIndex v = q.front();
      q.pop();
      comp.push_back(v);
      for (LinkIndex e : topology.incident(v)) {
        if (skip[e]) continue;
        NodeIndex w = topology.link(e).other(v);
        if (!seen[w]) {
          seen[w] = true;
          q.push(w);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

PhaseState solve_dc_power_flow(const GridTopology& topology, const Eigen::VectorXd& injections,
                               const LinkSet& removed) {
  const auto n = static_cast<Eigen::Index>(topology.node_count());
  if (injections.size() != n) throw InvalidTopology("injection vector has the wrong length");
  const double scale = std::max(1.0, injections.lpNorm<Eigen::Infinity>());
  const std::vector<bool> skip = link_mask(topology.link_count(), removed);

  PhaseState state{Eigen::VectorXd::Zero(n)};
  std::vector<std::size_t> local(topology.node_count(), kNone);

  for (const NodeSet& island : islands(topology, removed)) {
    double sum = 0.0;
    double peak = 0.0;
    for (NodeIndex v : island) {
      sum += injections[static_cast<Eigen::Index>(v)];
      peak = std::max(peak, std::abs(injections[static_cast<Eigen::Index>(v)]));
    }
    if (std::abs(sum) > 1e-9 * scale) {
      throw UnbalancedInjection("island starting at node " + std::to_string(island.front()) +
                                " has net injection " + std::to_string(sum));
    }
    if (peak <= 1e-12 * scale || island.size() == 1) continue;  // theta stays 0

    // Reduced Laplacian without the reference (lowest) node.
    for (std::size_t i = 1; i < island.size(); ++i) local[island[i]] = i - 1;
    const auto m = static_cast<Eigen::Index>(island.size() - 1);
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::VectorXd rhs(m);
    for (std::size_t i = 1; i < island.size(); ++i) {
      const NodeIndex v = island[i];
      const auto row = static_cast<Eigen::Index>(local[v]);
      rhs[row] = injections[static_cast<Eigen::Index>(v)];
      for (LinkIndex e : topology.incident(v)) {
        if (skip[e]) continue;
        const Link& l = topology.link(e);
        const double y = 1.0 / l.reactance;
        triplets.emplace_back(row, row, y);
        const NodeIndex w = l.other(v);
        if (w != island.front()) triplets.emplace_back(row, static_cast<Eigen::Index>(local[w]), -y);
      }
    }
    Eigen::SparseMatrix<double> reduced(m, m);
    reduced.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(reduced);
    if (ldlt.info() != Eigen::Success) throw SingularSystem("factorization failed");
    Eigen::VectorXd theta = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success || !theta.allFinite()) throw SingularSystem("solve failed");
    for (std::size_t i = 1; i < island.size(); ++i) {
      state.theta[static_cast<Eigen::Index>(island[i])] = theta[static_cast<Eigen::Index>(i - 1)];
    }
    for (NodeIndex v : island) local[v] = kNone;
  }

  const Eigen::VectorXd residual = build_admittance(topology, removed) * state.theta - injections;
  // Zero-injection islands may have been skipped with tiny noise; judge on the rest.
  if (residual.lpNorm<Eigen::Infinity>() > 1e-8 * scale) {
    throw SingularSystem("DC power flow residual " + std::to_string(residual.lpNorm<Eigen::Infinity>()));
  }
  return state;
}

Eigen::VectorXd link_flows(const GridTopology& topology, const PhaseState& state) {
  Eigen::VectorXd flows(static_cast<Eigen::Index>(topology.link_count()));
  for (LinkIndex e = 0; e < topology.link_count(); ++e) {
    const Link& l = topology.link(e);
    flows[static_cast<Eigen::Index>(e)] =
        (state.theta[static_cast<Eigen::Index>(l.source)] - state.theta[static_cast<Eigen::Index>(l.target)]) /
        l.reactance;
  }
  return flows;
}

CutCatalog enumerate_cuts(const GridTopology& topology, const Subgraph& area) {
  const LocalGraph g = make_local(topology, area);
  const std::size_t m = g.ends.size();
  std::vector<bool> skip(m, false);
  const std::vector<bool> bridge = local_bridges(g, skip);

  CutCatalog catalog;
  for (std::size_t k = 0; k < m; ++k) {
    if (bridge[k]) catalog.bridges.push_back(g.global_link[k]);
  }
  for (std::size_t k = 0; k < m; ++k) {
    if (bridge[k]) continue;
    skip[k] = true;
    const std::vector<bool> second = local_bridges(g, skip);
    skip[k] = false;
    for (std::size_t j = k + 1; j < m; ++j) {
      if (second[j] && !bridge[j]) catalog.two_edge_cuts.emplace_back(g.global_link[k], g.global_link[j]);
    }
  }
  std::sort(catalog.bridges.begin(), catalog.bridges.end());
  for (auto& pair : catalog.two_edge_cuts) {
    if (pair.first > pair.second) std::swap(pair.first, pair.second);
  }
  std::sort(catalog.two_edge_cuts.begin(), catalog.two_edge_cuts.end());
  return catalog;
}

CutSides hyper_nodes_for_cut(const GridTopology& topology, const Subgraph& area, const LinkSet& cut) {
  if (cut.empty()) throw NotACut("empty cut");
  const LocalGraph g = make_local(topology, area);
  std::vector<bool> skip(g.ends.size(), false);
  for (LinkIndex e : cut) {
    auto it = std::lower_bound(area.links.begin(), area.links.end(), e);
    if (it == area.links.end() || *it != e) throw NotACut("link " + std::to_string(e) + " is not in the area");
    skip[static_cast<std::size_t>(it - area.links.begin())] = true;
  }
  const std::vector<std::size_t> label = local_components(g, skip);

  const Link& first_link = topology.link(cut.front());
  auto local_of = [&](NodeIndex v) {
    return static_cast<std::size_t>(std::lower_bound(area.nodes.begin(), area.nodes.end(), v) - area.nodes.begin());
  };
  const std::size_t a = label[local_of(first_link.source)];
  const std::size_t b = label[local_of(first_link.target)];
  if (a == b) throw NotACut("removing the cut leaves its endpoints connected");

  CutSides sides;
  for (std::size_t i = 0; i < g.global_node.size(); ++i) {
    if (label[i] == a) sides.first.push_back(g.global_node[i]);
    if (label[i] == b) sides.second.push_back(g.global_node[i]);
  }
  LinkSet sorted_cut = cut;
  std::sort(sorted_cut.begin(), sorted_cut.end());
  if (boundary_links(topology, area, sides.first) != sorted_cut ||
      boundary_links(topology, area, sides.second) != sorted_cut) {
    throw NotACut("cut sides do not have the cut as their boundary");
  }
  return sides;
}

}  // namespace gridcert
