#include "gridcert/attack_sim.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "gridcert/errors.hpp"
#include "gridcert/rng.hpp"

namespace gridcert {

AttackScenario generate_attack_area(const GridTopology& topology, std::size_t target_size, std::uint64_t seed) {
  if (target_size == 0 || target_size > topology.node_count()) {
    throw PreconditionViolation("attack area size must be in [1, |V|]");
  }
  Rng rng(seed);
  const NodeIndex start = rng.uniform_index(topology.node_count());

  NodeSet picked;
  std::vector<bool> queued(topology.node_count(), false);
  std::queue<NodeIndex> q;
  q.push(start);
  queued[start] = true;
  while (!q.empty() && picked.size() < target_size) {
    const NodeIndex v = q.front();
    q.pop();
    picked.push_back(v);
    NodeSet next;
    for (LinkIndex e : topology.incident(v)) {
      const NodeIndex w = topology.link(e).other(v);
      if (!queued[w]) next.push_back(w);
    }
    std::sort(next.begin(), next.end());
    for (NodeIndex w : next) {
      queued[w] = true;
      q.push(w);
    }
  }
  return AttackScenario{seed, induced_subgraph(topology, std::move(picked)), {}};
}

AttackScenario sample_failures(const AttackScenario& scenario, std::size_t k, std::uint64_t seed) {
  const LinkSet& pool = scenario.area.links;
  if (k > pool.size()) {
    throw InsufficientLinks("cannot fail " + std::to_string(k) + " of " + std::to_string(pool.size()) + " links");
  }
  // Partial Fisher-Yates over E_H.
  Rng rng(seed);
  LinkSet shuffled = pool;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_index(shuffled.size() - i);
    std::swap(shuffled[i], shuffled[j]);
  }
  AttackScenario out = scenario;
  out.seed = seed;
  out.failed.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(out.failed.begin(), out.failed.end());
  return out;
}

Eigen::VectorXd apply_policy(const NodeSet& island, const Eigen::VectorXd& injections) {
  double generation = 0.0;
  double load = 0.0;
  Eigen::VectorXd out(static_cast<Eigen::Index>(island.size()));
  for (std::size_t i = 0; i < island.size(); ++i) {
    const double p = injections[static_cast<Eigen::Index>(island[i])];
    out[static_cast<Eigen::Index>(i)] = p;
    if (p > 0.0) {
      generation += p;
    } else {
      load -= p;
    }
  }
  if (generation == 0.0 || load == 0.0) return Eigen::VectorXd::Zero(out.size());
  if (std::abs(generation - load) <= 1e-12 * (generation + load)) return out;

  const bool shed_load = generation < load;
  const double ratio = shed_load ? generation / load : load / generation;
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    const bool is_generator = out[i] > 0.0;
    if (is_generator != shed_load) out[i] *= ratio;
  }
  return out;
}

PostAttackState compute_post_attack(const GridTopology& topology, const AttackScenario& scenario) {
  for (LinkIndex e : scenario.failed) {
    if (!scenario.area.contains_link(e)) throw PreconditionViolation("failed link outside the attacked area");
  }
  PostAttackState post;
  const Eigen::VectorXd p = topology.injections();
  post.island_partition = islands(topology, scenario.failed);
  post.p_post = Eigen::VectorXd::Zero(p.size());
  for (const NodeSet& island : post.island_partition) {
    const Eigen::VectorXd shed = apply_policy(island, p);
    for (std::size_t i = 0; i < island.size(); ++i) {
      post.p_post[static_cast<Eigen::Index>(island[i])] = shed[static_cast<Eigen::Index>(i)];
    }
  }
  post.delta = p - post.p_post;
  post.theta_post = solve_dc_power_flow(topology, post.p_post, scenario.failed).theta;
  post.hypothetical_flow = link_flows(topology, PhaseState{post.theta_post});

  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * topology.link_count());
  for (LinkIndex e = 0; e < topology.link_count(); ++e) {
    const Link& l = topology.link(e);
    const double f = post.hypothetical_flow[static_cast<Eigen::Index>(e)];
    triplets.emplace_back(static_cast<Eigen::Index>(l.source), static_cast<Eigen::Index>(e), f);
    triplets.emplace_back(static_cast<Eigen::Index>(l.target), static_cast<Eigen::Index>(e), -f);
  }
  post.d_tilde.resize(static_cast<Eigen::Index>(topology.node_count()),
                      static_cast<Eigen::Index>(topology.link_count()));
  post.d_tilde.setFromTriplets(triplets.begin(), triplets.end());
  return post;
}

IdentifiabilityReport filter_identifiable(const GridTopology& topology, const AttackScenario& scenario,
                                          const PostAttackState& post) {
  IdentifiabilityReport report;
  for (LinkIndex e : scenario.area.links) {
    const Link& l = topology.link(e);
    const double diff = post.theta_post[static_cast<Eigen::Index>(l.source)] -
                        post.theta_post[static_cast<Eigen::Index>(l.target)];
    (std::abs(diff) <= 1e-9 ? report.non_identifiable : report.identifiable).push_back(e);
  }
  return report;
}

}  // namespace gridcert
