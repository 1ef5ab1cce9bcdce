#include "gridcert/fld.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gridcert/errors.hpp"

namespace gridcert {

double Observables::hypothetical_flow(LinkIndex e) const {
  const Link& l = topology->link(e);
  return (theta_post[static_cast<Eigen::Index>(l.source)] - theta_post[static_cast<Eigen::Index>(l.target)]) /
         l.reactance;
}

double Observables::d_tilde(NodeIndex v, LinkIndex e) const {
  const Link& l = topology->link(e);
  if (v == l.source) return hypothetical_flow(e);
  if (v == l.target) return -hypothetical_flow(e);
  return 0.0;
}

Observables make_observables(std::shared_ptr<const GridTopology> topology, const AttackScenario& scenario,
                             const PostAttackState& post) {
  const Eigen::VectorXd theta_pre = solve_dc_power_flow(*topology, topology->injections()).theta;
  return make_observables(std::move(topology), scenario, post, theta_pre);
}

Observables make_observables(std::shared_ptr<const GridTopology> topology, const AttackScenario& scenario,
                             const PostAttackState& post, const Eigen::VectorXd& theta_pre) {
  Observables obs;
  obs.area = scenario.area;
  obs.injections = topology->injections();
  obs.theta_pre = theta_pre;
  obs.theta_post = post.theta_post;
  obs.delta_outside = post.delta;
  for (NodeIndex v : scenario.area.nodes) {
    obs.delta_outside[static_cast<Eigen::Index>(v)] = std::numeric_limits<double>::quiet_NaN();
  }
  obs.topology = std::move(topology);
  return obs;
}

bool EstimationResult::estimated_failed(LinkIndex e) const {
  return std::binary_search(f_hat.begin(), f_hat.end(), e);
}

Eigen::VectorXd p1_constant(const Observables& obs) {
  const GridTopology& t = *obs.topology;
  const Eigen::VectorXd diff = obs.theta_pre - obs.theta_post;
  Eigen::VectorXd c(static_cast<Eigen::Index>(obs.area.nodes.size()));
  for (std::size_t i = 0; i < obs.area.nodes.size(); ++i) {
    const NodeIndex v = obs.area.nodes[i];
    // Row v of B times (theta - theta') over all pre-attack links.
    double sum = 0.0;
    for (LinkIndex e : t.incident(v)) {
      const Link& l = t.link(e);
      sum += (diff[static_cast<Eigen::Index>(v)] - diff[static_cast<Eigen::Index>(l.other(v))]) / l.reactance;
    }
    c[static_cast<Eigen::Index>(i)] = sum;
  }
  return c;
}

lp::LinearProgram build_p1(const Observables& obs, GridMode mode) {
  const Eigen::Index n_links = static_cast<Eigen::Index>(obs.area.links.size());
  const Eigen::Index n_nodes = static_cast<Eigen::Index>(obs.area.nodes.size());
  lp::LinearProgram program(n_links + n_nodes);
  program.objective.head(n_links).setOnes();
  program.upper.head(n_links).setOnes();

  program.eq_matrix = Eigen::MatrixXd::Zero(n_nodes, n_links + n_nodes);
  program.eq_rhs = p1_constant(obs);
  for (Eigen::Index i = 0; i < n_nodes; ++i) {
    const NodeIndex v = obs.area.nodes[static_cast<std::size_t>(i)];
    program.eq_matrix(i, n_links + i) = 1.0;
    for (Eigen::Index k = 0; k < n_links; ++k) {
      program.eq_matrix(i, k) = -obs.d_tilde(v, obs.area.links[static_cast<std::size_t>(k)]);
    }
    const double p = obs.injections[static_cast<Eigen::Index>(v)];
    if (mode == GridMode::ConnectedKnown) {
      program.lower[n_links + i] = 0.0;
      program.upper[n_links + i] = 0.0;
    } else if (p > 0.0) {
      program.lower[n_links + i] = 0.0;
      program.upper[n_links + i] = p;
    } else {
      program.lower[n_links + i] = p;
      program.upper[n_links + i] = 0.0;
    }
  }
  return program;
}

EstimationResult estimate(const Observables& obs, double eta, GridMode mode) {
  if (!(eta > 0.0 && eta < 1.0)) throw PreconditionViolation("eta must lie in (0, 1)");
  const lp::LpOutcome out = lp::solve(build_p1(obs, mode));
  if (out.status != lp::LpStatus::Optimal) {
    throw InfeasibleModel(mode == GridMode::ConnectedKnown
                              ? "observations are inconsistent with a connected post-attack grid"
                              : "observations admit no feasible failure pattern");
  }
  const Eigen::Index n_links = static_cast<Eigen::Index>(obs.area.links.size());
  EstimationResult r;
  r.x = out.solution.head(n_links);
  r.delta = out.solution.tail(out.solution.size() - n_links);
  r.eta = eta;
  r.objective = out.objective_value;
  r.mode = mode;
  for (Eigen::Index k = 0; k < n_links; ++k) {
    if (r.x[k] >= eta) r.f_hat.push_back(obs.area.links[static_cast<std::size_t>(k)]);
  }
  std::sort(r.f_hat.begin(), r.f_hat.end());
  return r;
}

EstimationResult estimate(const Observables& obs, double eta) { return estimate(obs, eta, GridMode::General); }

EstimationResult estimate_connected(const Observables& obs, double eta) {
  return estimate(obs, eta, GridMode::ConnectedKnown);
}

double p1_residual(const Observables& obs, const Eigen::VectorXd& x, const Eigen::VectorXd& delta_h) {
  const lp::LinearProgram program = build_p1(obs);
  Eigen::VectorXd z(x.size() + delta_h.size());
  z << x, delta_h;
  if (program.eq_matrix.rows() == 0) return 0.0;
  return (program.eq_matrix * z - program.eq_rhs).lpNorm<Eigen::Infinity>();
}

}  // namespace gridcert
