#pragma once

// Attack simulation: BFS-grown attacked areas, random failure sets, the
// proportional load-shedding / generation-reduction policy and the resulting
// post-attack state.

#include <cstdint>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "gridcert/grid_model.hpp"

namespace gridcert {

/// Policy revision recorded in scenario files.
inline constexpr int kPolicyVersion = 1;

struct AttackScenario {
  std::uint64_t seed = 0;  ///< seed of the last random step that produced it
  Subgraph area;           ///< H = (V_H, E_H), E_H induced by V_H
  LinkSet failed;          ///< F, a subset of E_H
};

struct PostAttackState {
  Eigen::VectorXd theta_post;             ///< theta'
  Eigen::VectorXd p_post;                 ///< p'
  Eigen::VectorXd delta;                  ///< Delta = p - p'
  std::vector<NodeSet> island_partition;  ///< components of G' = (V, E \ F)
  Eigen::VectorXd hypothetical_flow;      ///< (theta'_s - theta'_t) / r_e for every link in E
  Eigen::SparseMatrix<double> d_tilde;    ///< D Gamma diag{D' theta'}, |V| x |E|

  bool connected() const { return island_partition.size() == 1; }
};

/// First `target_size` nodes of a BFS from a uniformly random start node.
/// Neighbours are enqueued in ascending node order. F is left empty.
AttackScenario generate_attack_area(const GridTopology& topology, std::size_t target_size, std::uint64_t seed);

/// Uniform k-subset of E_H as the failed set. Throws InsufficientLinks if k > |E_H|.
AttackScenario sample_failures(const AttackScenario& scenario, std::size_t k, std::uint64_t seed);

/// Post-attack injections of one island under the proportional policy; the
/// deficient side is scaled uniformly so the island balances. Returns values
/// aligned with `island`.
Eigen::VectorXd apply_policy(const NodeSet& island, const Eigen::VectorXd& injections);

/// Islands of G', policy per island, DC solve on G', Delta and D~ on the full link set.
PostAttackState compute_post_attack(const GridTopology& topology, const AttackScenario& scenario);

struct IdentifiabilityReport {
  LinkSet identifiable;      ///< links of E_H with theta'_s != theta'_t
  LinkSet non_identifiable;  ///< |theta'_s - theta'_t| <= 1e-9
};

IdentifiabilityReport filter_identifiable(const GridTopology& topology, const AttackScenario& scenario,
                                          const PostAttackState& post);

}  // namespace gridcert
