#pragma once

// Failed-link detection: the L1-relaxed estimator over (x_H, Delta_H) and its
// variant for grids known to stay connected.

#include <memory>

#include <Eigen/Core>

#include "gridcert/attack_sim.hpp"
#include "gridcert/grid_model.hpp"
#include "gridcert/lp.hpp"

namespace gridcert {

enum class GridMode { General, ConnectedKnown };

/// What an operator can observe during the attack: pre-attack state,
/// post-attack angles everywhere, and injection changes outside H.
struct Observables {
  std::shared_ptr<const GridTopology> topology;
  Subgraph area;
  Eigen::VectorXd theta_pre;
  Eigen::VectorXd theta_post;
  Eigen::VectorXd injections;     ///< pre-attack p
  Eigen::VectorXd delta_outside;  ///< Delta on V \ V_H, NaN on V_H

  /// D~_{v,e}: +/- the post-attack (hypothetical) flow of e at its endpoints.
  double d_tilde(NodeIndex v, LinkIndex e) const;

  /// (theta'_s - theta'_t) / r_e.
  double hypothetical_flow(LinkIndex e) const;
};

/// Strips the simulator state down to the observable fields.
Observables make_observables(std::shared_ptr<const GridTopology> topology, const AttackScenario& scenario,
                             const PostAttackState& post);

/// Same, reusing an already solved pre-attack angle vector.
Observables make_observables(std::shared_ptr<const GridTopology> topology, const AttackScenario& scenario,
                             const PostAttackState& post, const Eigen::VectorXd& theta_pre);

struct EstimationResult {
  Eigen::VectorXd x;      ///< fractional failure indicators, aligned with area.links
  Eigen::VectorXd delta;  ///< estimated Delta, aligned with area.nodes
  LinkSet f_hat;          ///< links with x_e >= eta
  double eta = 0.5;
  double objective = 0;
  GridMode mode = GridMode::General;

  bool estimated_failed(LinkIndex e) const;
};

/// The estimator LP. Variables are x_H (in area.links order) followed by
/// Delta_H (in area.nodes order); one equality row per attacked node.
/// ConnectedKnown pins Delta_H to zero.
lp::LinearProgram build_p1(const Observables& obs, GridMode mode = GridMode::General);

/// B_{H|G}(theta - theta'), the constant side of the equality rows.
Eigen::VectorXd p1_constant(const Observables& obs);

/// Throws InfeasibleModel if the observations admit no feasible point.
EstimationResult estimate(const Observables& obs, double eta = 0.5);
EstimationResult estimate_connected(const Observables& obs, double eta = 0.5);
EstimationResult estimate(const Observables& obs, double eta, GridMode mode);

/// max-norm violation of the equality rows at (x, Delta_H).
double p1_residual(const Observables& obs, const Eigen::VectorXd& x, const Eigen::VectorXd& delta_h);

}  // namespace gridcert
