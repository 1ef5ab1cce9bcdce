#pragma once

// Graph and linear-algebra substrate for DC power-flow analysis: topology,
// admittance/incidence matrices, per-island DC solves, island detection and
// small-cut enumeration inside an attacked area.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace gridcert {

using NodeIndex = std::size_t;
using LinkIndex = std::size_t;

/// Sorted, duplicate-free index sets.
using NodeSet = std::vector<NodeIndex>;
using LinkSet = std::vector<LinkIndex>;

enum class NodeType { Generator, Load };

struct Node {
  long long bus_id = 0;  ///< external identifier (MATPOWER bus number)
  double injection = 0;  ///< active power injection p_v, MW

  /// Zero-injection buses count as loads.
  NodeType type() const { return injection > 0.0 ? NodeType::Generator : NodeType::Load; }
};

struct Link {
  NodeIndex source = 0;  ///< orientation s -> t is fixed and arbitrary
  NodeIndex target = 0;
  double reactance = 1;  ///< per unit, strictly positive

  NodeIndex other(NodeIndex v) const { return v == source ? target : source; }
};

/// Undirected grid G = (V, E). Nodes are kept in ascending bus-id order so the
/// node index doubles as the "lowest id" ordering used throughout.
class GridTopology {
 public:
  GridTopology() = default;

  /// Throws InvalidTopology on non-positive reactance, bad endpoints,
  /// self-loops or parallel links.
  GridTopology(std::vector<Node> nodes, std::vector<Link> links, std::string case_id = {});

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t link_count() const { return links_.size(); }

  const Node& node(NodeIndex v) const { return nodes_.at(v); }
  const Link& link(LinkIndex e) const { return links_.at(e); }
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }

  /// Links incident to v, ascending.
  std::span<const LinkIndex> incident(NodeIndex v) const { return adjacency_.at(v); }

  /// Pre-attack injection vector p.
  Eigen::VectorXd injections() const;

  const std::string& case_id() const { return case_id_; }

 private:
  std::vector<Node> nodes_;
  std::vector<Link> links_;
  std::vector<std::vector<LinkIndex>> adjacency_;
  std::string case_id_;
};

/// Node-induced subgraph (e.g. the attacked area H).
struct Subgraph {
  NodeSet nodes;
  LinkSet links;

  bool contains_node(NodeIndex v) const;
  bool contains_link(LinkIndex e) const;
};

/// Subgraph induced by `nodes`: every link with both endpoints inside.
Subgraph induced_subgraph(const GridTopology& topology, NodeSet nodes);

/// Links of `area` with exactly one endpoint in `hyper_node` (the set E_U).
LinkSet boundary_links(const GridTopology& topology, const Subgraph& area, const NodeSet& hyper_node);

struct PhaseState {
  Eigen::VectorXd theta;
};

/// Admittance matrix B of (V, E \ removed).
Eigen::SparseMatrix<double> build_admittance(const GridTopology& topology, const LinkSet& removed = {});

/// Incidence matrix D with +1 at the source and -1 at the target of each link.
Eigen::SparseMatrix<double> build_incidence(const GridTopology& topology);

/// Diagonal of Gamma = diag{1 / r_e}.
Eigen::VectorXd link_susceptances(const GridTopology& topology);

/// Solves B theta = p on (V, E \ removed), island by island. The lowest node
/// of each island is the angle reference; islands whose injections are all
/// zero get theta = 0.
///
/// Throws UnbalancedInjection if an island's injections do not sum to zero and
/// SingularSystem if a factorization or residual check fails.
PhaseState solve_dc_power_flow(const GridTopology& topology, const Eigen::VectorXd& injections,
                               const LinkSet& removed = {});

/// Flow over each link along its orientation, (theta_s - theta_t) / r.
Eigen::VectorXd link_flows(const GridTopology& topology, const PhaseState& state);

/// Connected components of (V, E \ removed), each sorted, ordered by smallest node.
std::vector<NodeSet> islands(const GridTopology& topology, const LinkSet& removed = {});

struct CutCatalog {
  LinkSet bridges;                                         ///< 1-edge cuts (E_a)
  std::vector<std::pair<LinkIndex, LinkIndex>> two_edge_cuts;  ///< pairs with first < second, sorted
};

/// Bridges of H, plus all pairs of non-bridges whose joint removal disconnects
/// a component of H.
CutCatalog enumerate_cuts(const GridTopology& topology, const Subgraph& area);

/// The two sides of a cut, each a hyper-node whose boundary is exactly `cut`.
struct CutSides {
  NodeSet first;   ///< side holding the source endpoint of cut[0]
  NodeSet second;
};

/// Splits the component of H holding `cut` by removing the cut links.
/// Throws NotACut if the removal leaves that component connected.
CutSides hyper_nodes_for_cut(const GridTopology& topology, const Subgraph& area, const LinkSet& cut);

}  // namespace gridcert
