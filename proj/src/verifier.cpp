#include "gridcert/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>

#include "gridcert/errors.hpp"
#include "gridcert/lp.hpp"

namespace gridcert {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_generator(double p) { return p > 0.0; }

double abs_max(std::initializer_list<double> values) {
  double m = 0.0;
  for (double v : values) m = std::max(m, std::abs(v));
  return m;
}

// value < 0 with a margin scaled to the magnitude of the terms involved.
bool strictly_negative(double value, double magnitude) { return value < -certificate_epsilon(magnitude); }

// Delta_v implied by a neighbour u in the same island whose Delta is known.
std::optional<double> infer_from(double p_v, double p_u, double delta_u) {
  if (is_generator(p_v) == is_generator(p_u)) {
    if (p_u != 0.0) return p_v * delta_u / p_u;
    return std::nullopt;
  }
  if (delta_u != 0.0) return 0.0;
  return std::nullopt;
}

// Branch sums selected when the link with aggregated flow d is assumed
// operational (a false alarm is being ruled out) or failed (a miss is).
double false_alarm_branch(double d, double plus, double minus) { return d > 0.0 ? plus : minus; }
double miss_branch(double d, double plus, double minus) { return d < 0.0 ? plus : minus; }

void mark(VerificationLedger& ledger, LinkIndex e, Method method) {
  LinkVerdict& r = ledger.at(e);
  r.verified = true;
  r.method = method;
}

}  // namespace

std::string_view method_tag(Method m) {
  switch (m) {
    case Method::None: return "none";
    case Method::Cut1: return "cut1";
    case Method::Cut2Thm3: return "cut2-thm3";
    case Method::Cut2Thm4: return "cut2-thm4";
    case Method::Cut2Thm5: return "cut2-thm5";
    case Method::Alg2Lp: return "alg2-lp";
    case Method::CorollaryConnected: return "corollary-connected";
  }
  return "none";
}

Method parse_method_tag(std::string_view tag) {
  for (Method m : {Method::None, Method::Cut1, Method::Cut2Thm3, Method::Cut2Thm4, Method::Cut2Thm5, Method::Alg2Lp,
                   Method::CorollaryConnected}) {
    if (method_tag(m) == tag) return m;
  }
  throw SchemaError("unknown verification method tag '" + std::string(tag) + "'");
}

bool DeltaKnowledge::known(NodeIndex v) const { return !std::isnan(delta[static_cast<Eigen::Index>(v)]); }

NodeSet DeltaKnowledge::recovered(const Subgraph& area) const {
  NodeSet out;
  for (NodeIndex v : area.nodes) {
    if (known(v)) out.push_back(v);
  }
  return out;
}

LinkSet VerificationLedger::verified_links() const {
  LinkSet out;
  for (const LinkVerdict& r : records) {
    if (r.verified) out.push_back(r.link);
  }
  return out;
}

const LinkVerdict& VerificationLedger::at(LinkIndex e) const {
  auto it = std::lower_bound(records.begin(), records.end(), e,
                             [](const LinkVerdict& r, LinkIndex key) { return r.link < key; });
  if (it == records.end() || it->link != e) throw PreconditionViolation("link is not in the attacked area");
  return *it;
}

LinkVerdict& VerificationLedger::at(LinkIndex e) {
  return const_cast<LinkVerdict&>(static_cast<const VerificationLedger&>(*this).at(e));
}

VerificationLedger initial_ledger(const Observables& obs, const EstimationResult& est) {
  VerificationLedger ledger;
  ledger.records.reserve(obs.area.links.size());
  for (LinkIndex e : obs.area.links) {
    LinkVerdict r;
    r.link = e;
    r.estimated = est.estimated_failed(e) ? LinkState::Failed : LinkState::Operational;
    ledger.records.push_back(std::move(r));
  }
  ledger.knowledge.delta = obs.delta_outside;
  return ledger;
}

DeltaKnowledge recover_delta(const Observables& obs) {
  const GridTopology& t = *obs.topology;
  DeltaKnowledge k{obs.delta_outside};
  for (NodeIndex v : obs.area.nodes) {
    const double p_v = obs.injections[static_cast<Eigen::Index>(v)];
    std::optional<double> same_type;
    std::optional<double> other_type;
    for (LinkIndex e : t.incident(v)) {
      const NodeIndex u = t.link(e).other(v);
      if (obs.area.contains_node(u)) continue;
      const double p_u = obs.injections[static_cast<Eigen::Index>(u)];
      const double d_u = obs.delta_outside[static_cast<Eigen::Index>(u)];
      const std::optional<double> guess = infer_from(p_v, p_u, d_u);
      if (!guess) continue;
      if (is_generator(p_v) == is_generator(p_u)) {
        if (!same_type) same_type = guess;
      } else if (!other_type) {
        other_type = guess;
      }
    }
    if (same_type) {
      k.delta[static_cast<Eigen::Index>(v)] = *same_type;
    } else if (other_type) {
      k.delta[static_cast<Eigen::Index>(v)] = *other_type;
    }
  }
  return k;
}

bool extend_recovery(const Observables& obs, const VerificationLedger& ledger, DeltaKnowledge& knowledge) {
  const GridTopology& t = *obs.topology;
  bool grew = false;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const LinkVerdict& r : ledger.records) {
      if (!r.verified || r.estimated != LinkState::Operational) continue;
      const Link& l = t.link(r.link);
      for (auto [v, u] : {std::pair{l.source, l.target}, std::pair{l.target, l.source}}) {
        if (knowledge.known(v) || !knowledge.known(u)) continue;
        const std::optional<double> guess =
            infer_from(obs.injections[static_cast<Eigen::Index>(v)], obs.injections[static_cast<Eigen::Index>(u)],
                       knowledge.delta[static_cast<Eigen::Index>(u)]);
        if (guess) {
          knowledge.delta[static_cast<Eigen::Index>(v)] = *guess;
          changed = grew = true;
        }
      }
    }
  }
  return grew;
}

NodeGValues true_node_g(double p, double delta) {
  const double p_post = p - delta;
  if (is_generator(p)) return {p_post, delta, true};
  return {-delta, -p_post, true};
}

NodeGValues node_g(NodeIndex u, const DeltaKnowledge& knowledge, const Eigen::VectorXd& injections) {
  const double p = injections[static_cast<Eigen::Index>(u)];
  if (knowledge.known(u)) return true_node_g(p, knowledge.delta[static_cast<Eigen::Index>(u)]);
  return {std::abs(p), std::abs(p), false};
}

double HyperNode::flow(LinkIndex e) const {
  auto it = std::lower_bound(boundary.begin(), boundary.end(), e);
  if (it == boundary.end() || *it != e) return 0.0;
  return flows[static_cast<std::size_t>(it - boundary.begin())];
}

HyperNode make_hyper_node(const Observables& obs, const DeltaKnowledge& knowledge, NodeSet nodes, GridMode mode) {
  HyperNode h;
  h.nodes = std::move(nodes);
  h.boundary = boundary_links(*obs.topology, obs.area, h.nodes);
  for (LinkIndex e : h.boundary) {
    const Link& l = obs.topology->link(e);
    const NodeIndex inside = std::binary_search(h.nodes.begin(), h.nodes.end(), l.source) ? l.source : l.target;
    h.flows.push_back(obs.d_tilde(inside, e));
  }
  if (mode == GridMode::General) {
    for (NodeIndex u : h.nodes) {
      const NodeGValues g = node_g(u, knowledge, obs.injections);
      h.plus += g.g_plus;
      h.minus += g.g_minus;
    }
  }
  return h;
}

double f_hat(const HyperNode& u, LinkIndex tested, LinkState assumed) {
  const double d = u.flow(tested);
  return assumed == LinkState::Operational ? false_alarm_branch(d, u.plus, u.minus) : miss_branch(d, u.plus, u.minus);
}

double certificate_epsilon(double magnitude) { return 1e-9 * std::max(1.0, magnitude); }

bool one_cut_condition(LinkState estimated, double d, double plus, double minus, double eta) {
  const double a = std::abs(d);
  if (estimated == LinkState::Failed) {
    const double f = false_alarm_branch(d, plus, minus);
    return strictly_negative(f - eta * a, abs_max({f, a}));
  }
  const double f = miss_branch(d, plus, minus);
  return strictly_negative(f + (eta - 1.0) * a, abs_max({f, a}));
}

TwoCutVerdict two_cut_conditions(LinkState s1, LinkState s2, double d1, double d2, double plus, double minus,
                                 double eta) {
  TwoCutVerdict v;
  if (d1 == 0.0 || d2 == 0.0) return v;
  if (s1 == LinkState::Operational && s2 == LinkState::Failed) {
    const TwoCutVerdict swapped = two_cut_conditions(s2, s1, d2, d1, plus, minus, eta);
    return {swapped.second, swapped.first, swapped.method};
  }
  const double a1 = std::abs(d1);
  const double a2 = std::abs(d2);
  const bool same_sign = d1 * d2 > 0.0;
  // Every inequality below has the form f + (coefficient terms) < 0 where f
  // is the branch sum matching the mistake being ruled out.
  const auto neg = [&](double f, double rest) { return strictly_negative(f + rest, abs_max({f, a1, a2})); };
  const double fm1 = miss_branch(d1, plus, minus);
  const double fm2 = miss_branch(d2, plus, minus);
  const double ff1 = false_alarm_branch(d1, plus, minus);
  const double ff2 = false_alarm_branch(d2, plus, minus);

  if (s1 == LinkState::Operational) {
    v.method = Method::Cut2Thm3;
    if (same_sign) {
      v.first = neg(fm1, a2 + (eta - 1.0) * a1);
      v.second = neg(fm2, a1 + (eta - 1.0) * a2);
    } else {
      const bool single = neg(fm1, (eta - 1.0) * a1) && neg(fm2, (eta - 1.0) * a2);
      const bool joint = neg(fm2, a1 + (eta - 1.0) * a2) || neg(fm1, a2 + (eta - 1.0) * a1);
      v.first = v.second = single && joint;
    }
  } else if (s2 == LinkState::Operational) {
    v.method = Method::Cut2Thm4;
    if (same_sign) {
      const bool both = neg(ff1, -eta * a1) && neg(fm2, (eta - 1.0) * a2) &&
                        (neg(ff1, a2 - eta * a1) || neg(fm2, a1 + (eta - 1.0) * a2));
      v.first = v.second = both;
    } else {
      v.first = neg(ff1, a2 - eta * a1);
      v.second = neg(fm2, a1 + (eta - 1.0) * a2);
    }
  } else {
    v.method = Method::Cut2Thm5;
    v.first = neg(ff1, a2 - eta * a1);
    v.second = neg(ff2, a1 - eta * a2);
  }
  return v;
}

bool verify_1cut(LinkIndex e, const EstimationResult& est, const HyperNode& u1, const HyperNode& u2, double eta) {
  const LinkState s = est.estimated_failed(e) ? LinkState::Failed : LinkState::Operational;
  for (const HyperNode* u : {&u1, &u2}) {
    if (one_cut_condition(s, u->flow(e), u->plus, u->minus, eta)) return true;
  }
  return false;
}

TwoCutVerdict verify_2cut(LinkIndex e1, LinkIndex e2, const EstimationResult& est, const HyperNode& u1,
                          const HyperNode& u2, double eta) {
  const LinkState s1 = est.estimated_failed(e1) ? LinkState::Failed : LinkState::Operational;
  const LinkState s2 = est.estimated_failed(e2) ? LinkState::Failed : LinkState::Operational;
  TwoCutVerdict out;
  for (const HyperNode* u : {&u1, &u2}) {
    const TwoCutVerdict v = two_cut_conditions(s1, s2, u->flow(e1), u->flow(e2), u->plus, u->minus, eta);
    out.first = out.first || v.first;
    out.second = out.second || v.second;
    if (v.method != Method::None) out.method = v.method;
  }
  return out;
}

VerificationLedger algorithm1(const Observables& obs, const EstimationResult& est, const CutCatalog& catalog,
                              double eta) {
  const GridTopology& t = *obs.topology;
  const GridMode mode = est.mode;
  VerificationLedger ledger = initial_ledger(obs, est);
  ledger.knowledge = recover_delta(obs);

  const Method bridge_method = mode == GridMode::ConnectedKnown ? Method::CorollaryConnected : Method::Cut1;
  for (LinkIndex e : catalog.bridges) {
    const CutSides sides = hyper_nodes_for_cut(t, obs.area, {e});
    const HyperNode u1 = make_hyper_node(obs, ledger.knowledge, sides.first, mode);
    const HyperNode u2 = make_hyper_node(obs, ledger.knowledge, sides.second, mode);
    if (!verify_1cut(e, est, u1, u2, eta)) continue;
    mark(ledger, e, bridge_method);
    if (ledger.at(e).estimated == LinkState::Operational) extend_recovery(obs, ledger, ledger.knowledge);
  }

  for (const auto& [e1, e2] : catalog.two_edge_cuts) {
    if (ledger.at(e1).verified && ledger.at(e2).verified) continue;
    const CutSides sides = hyper_nodes_for_cut(t, obs.area, {e1, e2});
    const HyperNode u1 = make_hyper_node(obs, ledger.knowledge, sides.first, mode);
    const HyperNode u2 = make_hyper_node(obs, ledger.knowledge, sides.second, mode);
    const TwoCutVerdict v = verify_2cut(e1, e2, est, u1, u2, eta);
    bool new_operational = false;
    for (auto [link, ok] : {std::pair{e1, v.first}, std::pair{e2, v.second}}) {
      if (!ok || ledger.at(link).verified) continue;
      mark(ledger, link, v.method);
      new_operational = new_operational || ledger.at(link).estimated == LinkState::Operational;
    }
    if (new_operational) extend_recovery(obs, ledger, ledger.knowledge);
  }
  return ledger;
}

namespace {

struct NodeBlocks {
  NodeSet loads;
  NodeSet generators;
};

NodeBlocks split_nodes(const Observables& obs) {
  NodeBlocks b;
  for (NodeIndex v : obs.area.nodes) {
    (is_generator(obs.injections[static_cast<Eigen::Index>(v)]) ? b.generators : b.loads).push_back(v);
  }
  return b;
}

// Shared column layout; g_d(u) supplies (g_{D,u}, g_{D,-u}) and x_cost(k)
// supplies (g for the -I column, g for the +I column) of the k-th link.
template <typename GD, typename XCost>
GaleSystem assemble_gale(LinkIndex l, Hypothesis hypothesis, const Observables& obs, double eta, GridMode mode,
                         GD g_d, XCost x_cost) {
  const auto& links = obs.area.links;
  const Eigen::Index rows = static_cast<Eigen::Index>(links.size());
  const Eigen::Index nv = static_cast<Eigen::Index>(obs.area.nodes.size());
  const Eigen::Index cols = 2 * nv + 2 * rows + 2;
  GaleSystem s;
  s.link = l;
  s.hypothesis = hypothesis;
  s.m = Eigen::MatrixXd::Zero(rows, cols);
  s.g = Eigen::VectorXd::Zero(cols);

  Eigen::Index col = 0;
  auto add_node_column = [&](NodeIndex u, double sign, double g) {
    for (LinkIndex e : obs.topology->incident(u)) {
      auto it = std::lower_bound(links.begin(), links.end(), e);
      if (it == links.end() || *it != e) continue;
      s.m(it - links.begin(), col) = sign * obs.d_tilde(u, e);
    }
    s.g[col++] = g;
  };

  if (mode == GridMode::ConnectedKnown) {
    for (NodeIndex u : obs.area.nodes) add_node_column(u, 1.0, 0.0);
    for (NodeIndex u : obs.area.nodes) add_node_column(u, -1.0, 0.0);
  } else {
    const NodeBlocks b = split_nodes(obs);
    for (NodeIndex u : b.loads) add_node_column(u, 1.0, g_d(u).g_plus);
    for (NodeIndex u : b.loads) add_node_column(u, -1.0, g_d(u).g_minus);
    for (NodeIndex u : b.generators) add_node_column(u, -1.0, g_d(u).g_minus);
    for (NodeIndex u : b.generators) add_node_column(u, 1.0, g_d(u).g_plus);
  }
  for (Eigen::Index k = 0; k < rows; ++k) {
    s.m(k, col + k) = -1.0;
    s.m(k, col + rows + k) = 1.0;
    const auto [minus_cost, plus_cost] = x_cost(k);
    s.g[col + k] = minus_cost;
    s.g[col + rows + k] = plus_cost;
  }
  col += 2 * rows;

  const Eigen::Index row_l = std::lower_bound(links.begin(), links.end(), l) - links.begin();
  if (row_l >= rows || links[static_cast<std::size_t>(row_l)] != l) {
    throw PreconditionViolation("tested link is not in the attacked area");
  }
  if (hypothesis == Hypothesis::VerifyFailed) {
    s.m(row_l, col) = -1.0;
    s.g[col] = -eta;
  } else {
    s.m(row_l, col) = 1.0;
    s.g[col] = eta - 1.0;
  }
  ++col;
  s.m.col(col).setOnes();
  s.g[col] = 0.0;
  return s;
}

}  // namespace

GaleSystem build_gale(LinkIndex l, Hypothesis hypothesis, const Observables& obs, const VerificationLedger& ledger,
                      double eta, GridMode mode) {
  if (ledger.at(l).verified) throw PreconditionViolation("link is already verified");
  const auto g_d = [&](NodeIndex u) { return node_g(u, ledger.knowledge, obs.injections); };
  const auto x_cost = [&](Eigen::Index k) {
    const LinkVerdict& r = ledger.records[static_cast<std::size_t>(k)];
    if (!r.verified) return std::pair{1.0, 1.0};
    const double x = r.estimated == LinkState::Failed ? 1.0 : 0.0;
    return std::pair{x, 1.0 - x};
  };
  return assemble_gale(l, hypothesis, obs, eta, mode, g_d, x_cost);
}

VerificationLedger algorithm2(const Observables& obs, const EstimationResult& est, VerificationLedger ledger,
                              double eta) {
  std::set<LinkIndex> numeric_trouble;
  while (true) {
    std::vector<std::pair<LinkIndex, Eigen::VectorXd>> additions;
    for (const LinkVerdict& r : ledger.records) {
      if (r.verified) continue;
      const Hypothesis h = r.estimated == LinkState::Failed ? Hypothesis::VerifyFailed : Hypothesis::VerifyOperational;
      const GaleSystem sys = build_gale(r.link, h, obs, ledger, eta, est.mode);
      try {
        lp::HomogeneousCertificate cert = lp::strict_homogeneous_feasible(sys.m, sys.g);
        if (cert.feasible) additions.emplace_back(r.link, std::move(cert.witness));
      } catch (const NumericalFailure&) {
        numeric_trouble.insert(r.link);
      }
    }
    if (additions.empty()) break;
    for (auto& [link, witness] : additions) {
      LinkVerdict& r = ledger.at(link);
      r.verified = true;
      r.method = Method::Alg2Lp;
      r.witness = std::move(witness);
    }
  }
  for (LinkIndex e : numeric_trouble) {
    if (!ledger.at(e).verified) ++ledger.numerical_failures;
  }
  return ledger;
}

bool GroundTruth::is_failed(LinkIndex e) const { return std::binary_search(failed.begin(), failed.end(), e); }

GroundTruth make_ground_truth(const AttackScenario& scenario, const PostAttackState& post) {
  return GroundTruth{scenario.failed, post.delta, post.p_post};
}

GaleSystem build_true_gale(LinkIndex l, const GroundTruth& truth, const Observables& obs, double eta, GridMode mode) {
  const auto g_d = [&](NodeIndex u) {
    return true_node_g(obs.injections[static_cast<Eigen::Index>(u)], truth.delta[static_cast<Eigen::Index>(u)]);
  };
  const auto x_cost = [&](Eigen::Index k) {
    const double x = truth.is_failed(obs.area.links[static_cast<std::size_t>(k)]) ? 1.0 : 0.0;
    return std::pair{x, 1.0 - x};
  };
  // A failed link can only be missed, an operational one only falsely detected.
  const Hypothesis h = truth.is_failed(l) ? Hypothesis::VerifyOperational : Hypothesis::VerifyFailed;
  return assemble_gale(l, h, obs, eta, mode, g_d, x_cost);
}

bool guaranteed_by_gale(LinkIndex l, const GroundTruth& truth, const Observables& obs, double eta, GridMode mode) {
  const GaleSystem sys = build_true_gale(l, truth, obs, eta, mode);
  return lp::strict_homogeneous_feasible(sys.m, sys.g).feasible;
}

namespace {

struct ExactHyperNode {
  LinkSet boundary;
  std::vector<double> flows;
  double plus = 0;
  double minus = 0;
};

ExactHyperNode exact_hyper_node(const GroundTruth& truth, const Observables& obs, const NodeSet& u, GridMode mode) {
  ExactHyperNode h;
  const HyperNode shape = make_hyper_node(obs, DeltaKnowledge{obs.delta_outside}, u, GridMode::ConnectedKnown);
  h.boundary = shape.boundary;
  h.flows = shape.flows;
  if (mode == GridMode::General) {
    for (NodeIndex v : u) {
      const NodeGValues g =
          true_node_g(obs.injections[static_cast<Eigen::Index>(v)], truth.delta[static_cast<Eigen::Index>(v)]);
      h.plus += g.g_plus;
      h.minus += g.g_minus;
    }
  }
  return h;
}

double exact_f_of(const ExactHyperNode& h, const GroundTruth& truth) {
  bool any_failed = false;
  bool failed_negative = false;
  bool operational_positive = false;
  for (std::size_t i = 0; i < h.boundary.size(); ++i) {
    if (truth.is_failed(h.boundary[i])) {
      any_failed = true;
      failed_negative = failed_negative || h.flows[i] < 0.0;
    } else {
      operational_positive = operational_positive || h.flows[i] > 0.0;
    }
  }
  if (any_failed) return failed_negative ? h.plus : h.minus;
  return operational_positive ? h.plus : h.minus;
}

}  // namespace

double exact_f(const GroundTruth& truth, const Observables& obs, const NodeSet& u, GridMode mode) {
  return exact_f_of(exact_hyper_node(truth, obs, u, mode), truth);
}

bool guaranteed_by_hypernode(LinkIndex l, const GroundTruth& truth, const Observables& obs, const NodeSet& u,
                             double eta, GridMode mode) {
  const ExactHyperNode h = exact_hyper_node(truth, obs, u, mode);
  auto it = std::lower_bound(h.boundary.begin(), h.boundary.end(), l);
  if (it == h.boundary.end() || *it != l) throw PreconditionViolation("link is not on the hyper-node boundary");
  const double d_l = h.flows[static_cast<std::size_t>(it - h.boundary.begin())];
  if (d_l == 0.0) return false;

  bool any_failed = false;
  bool same_sign_failed = true;       // every failed boundary link agrees in sign with l
  bool same_sign_operational = true;  // every operational boundary link agrees in sign with l
  for (std::size_t i = 0; i < h.boundary.size(); ++i) {
    const bool failed = truth.is_failed(h.boundary[i]);
    any_failed = any_failed || failed;
    const bool agrees = h.flows[i] * d_l > 0.0;
    (failed ? same_sign_failed : same_sign_operational) &= agrees;
  }
  // S_U: operational boundary links sharing a sign with some failed one.
  bool s_u_empty = true;
  for (std::size_t i = 0; i < h.boundary.size(); ++i) {
    if (truth.is_failed(h.boundary[i])) continue;
    for (std::size_t j = 0; j < h.boundary.size(); ++j) {
      if (truth.is_failed(h.boundary[j]) && h.flows[i] * h.flows[j] > 0.0) s_u_empty = false;
    }
  }
  const double f = exact_f_of(h, truth);
  const double a = std::abs(d_l);
  if (truth.is_failed(l)) {
    return same_sign_failed && s_u_empty && strictly_negative(f + (eta - 1.0) * a, abs_max({f, a}));
  }
  return same_sign_operational && (!any_failed || s_u_empty) && strictly_negative(f - eta * a, abs_max({f, a}));
}

}  // namespace gridcert
