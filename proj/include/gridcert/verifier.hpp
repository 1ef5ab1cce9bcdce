#pragma once

// Certification of estimated link states from observables only.
//
// Closed-form cut conditions (bridges and 2-edge cuts of H) run first; the
// remaining links are then tested through a homogeneous alternative system
// whose feasibility rules out the corresponding estimation mistake. The
// ground-truth checkers at the bottom are for evaluation only.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gridcert/attack_sim.hpp"
#include "gridcert/fld.hpp"
#include "gridcert/grid_model.hpp"

namespace gridcert {

enum class LinkState { Failed, Operational };

/// Which condition certified a link. Tags are stable and appear in ledgers.
enum class Method { None, Cut1, Cut2Thm3, Cut2Thm4, Cut2Thm5, Alg2Lp, CorollaryConnected };

std::string_view method_tag(Method m);
/// Throws SchemaError on an unknown tag.
Method parse_method_tag(std::string_view tag);

/// Known injection changes: one entry per node of G, NaN where unknown.
/// Nodes outside H start known; nodes of H become known through recovery.
struct DeltaKnowledge {
  Eigen::VectorXd delta;

  bool known(NodeIndex v) const;
  /// U_B: attacked nodes whose Delta is known.
  NodeSet recovered(const Subgraph& area) const;
};

struct LinkVerdict {
  LinkIndex link = 0;
  LinkState estimated = LinkState::Operational;
  bool verified = false;
  Method method = Method::None;
  Eigen::VectorXd witness;  ///< Gale certificate, set for alg2-lp verdicts

  bool operator==(const LinkVerdict&) const = default;
};

struct VerificationLedger {
  std::vector<LinkVerdict> records;  ///< one per link of E_H, in E_H order
  DeltaKnowledge knowledge;
  std::size_t numerical_failures = 0;

  /// E_v.
  LinkSet verified_links() const;
  const LinkVerdict& at(LinkIndex e) const;
  LinkVerdict& at(LinkIndex e);
};

/// Empty ledger carrying FLD's estimate for every link of E_H.
VerificationLedger initial_ledger(const Observables& obs, const EstimationResult& est);

/// Delta on V_H recovered from unattacked neighbours under the proportional
/// policy: a same-type neighbour u with p_u != 0 gives Delta_v = p_v Delta_u / p_u;
/// otherwise a different-type neighbour with Delta_u != 0 gives Delta_v = 0.
DeltaKnowledge recover_delta(const Observables& obs);

/// Repeats the recovery using verified-operational links of E_H as extra
/// neighbour edges until nothing new is learned. Returns true if U_B grew.
bool extend_recovery(const Observables& obs, const VerificationLedger& ledger, DeltaKnowledge& knowledge);

/// (g_{D,u}, g_{D,-u}) of a node: exact when Delta_u is known, (|p_u|, |p_u|) otherwise.
struct NodeGValues {
  double g_plus = 0;
  double g_minus = 0;
  bool known = false;
};

NodeGValues node_g(NodeIndex u, const DeltaKnowledge& knowledge, const Eigen::VectorXd& injections);

/// Exact (g_{D,u}, g_{D,-u}) from the true Delta.
NodeGValues true_node_g(double p, double delta);

/// A connected node set U inside H with its boundary E_U and aggregated flows.
/// The two branch sums bound the injection slack f_{U,g}: `plus` bounds the
/// sum of g_{D,u} over U and `minus` the sum of g_{D,-u}.
struct HyperNode {
  NodeSet nodes;
  LinkSet boundary;              ///< E_U, ascending
  std::vector<double> flows;     ///< D~_{U,e}, aligned with boundary
  double plus = 0;
  double minus = 0;

  /// D~_{U,e}; zero for links outside E_U.
  double flow(LinkIndex e) const;
};

/// Builds U's boundary and flows and its branch bounds from the current
/// knowledge. ConnectedKnown forces both bounds to zero.
HyperNode make_hyper_node(const Observables& obs, const DeltaKnowledge& knowledge, NodeSet nodes,
                          GridMode mode = GridMode::General);

/// Observable bound on f_{U,g} when `tested` is assumed to be in state
/// `assumed` (the opposite of the state being certified). The assumed state
/// and the sign of D~_{U,tested} select which branch sum applies.
double f_hat(const HyperNode& u, LinkIndex tested, LinkState assumed);

/// Strictness margin for a certificate inequality whose terms have the given magnitude.
double certificate_epsilon(double magnitude);

/// Single-cut condition on numbers: `d` is D~_{U,e} (signed), `plus`/`minus`
/// the hyper-node branch sums.
bool one_cut_condition(LinkState estimated, double d, double plus, double minus, double eta);

struct TwoCutVerdict {
  bool first = false;
  bool second = false;
  Method method = Method::None;
};

/// Two-cut case table on numbers. d1, d2 are the signed aggregated flows of
/// the pair at one hyper-node.
TwoCutVerdict two_cut_conditions(LinkState s1, LinkState s2, double d1, double d2, double plus, double minus,
                                 double eta);

/// Bridge e with hyper-nodes on each side; true if e's estimate is certified
/// at U1 or U2.
bool verify_1cut(LinkIndex e, const EstimationResult& est, const HyperNode& u1, const HyperNode& u2, double eta);

TwoCutVerdict verify_2cut(LinkIndex e1, LinkIndex e2, const EstimationResult& est, const HyperNode& u1,
                          const HyperNode& u2, double eta);

/// Cut-based verification: bridges in id order (growing U_B after every
/// link certified operational), then catalogued pairs in order.
VerificationLedger algorithm1(const Observables& obs, const EstimationResult& est, const CutCatalog& catalog,
                              double eta);

enum class Hypothesis { VerifyFailed, VerifyOperational };

/// Homogeneous alternative system for one link. Columns, in order:
/// loads (+D~_u), loads (-D~_u), generators (-D~_u), generators (+D~_u),
/// x- block (-I), x+ block (+I), the w column, the all-ones column.
/// ConnectedKnown uses the two-block (+D~_u, -D~_u) layout with g_D = 0.
struct GaleSystem {
  Eigen::MatrixXd m;
  Eigen::VectorXd g;
  LinkIndex link = 0;
  Hypothesis hypothesis = Hypothesis::VerifyFailed;
};

/// Observable system used to certify l. Throws PreconditionViolation if l is already verified.
GaleSystem build_gale(LinkIndex l, Hypothesis hypothesis, const Observables& obs, const VerificationLedger& ledger,
                      double eta, GridMode mode = GridMode::General);

/// Certifies the remaining links by LP until a full pass adds nothing.
VerificationLedger algorithm2(const Observables& obs, const EstimationResult& est, VerificationLedger ledger,
                              double eta);

/// Simulator ground truth needed by the evaluation-only checks.
struct GroundTruth {
  LinkSet failed;
  Eigen::VectorXd delta;   ///< true Delta on V
  Eigen::VectorXd p_post;  ///< true p' on V

  bool is_failed(LinkIndex e) const;
};

GroundTruth make_ground_truth(const AttackScenario& scenario, const PostAttackState& post);

/// Single-mistake alternative system built from the true g vectors.
GaleSystem build_true_gale(LinkIndex l, const GroundTruth& truth, const Observables& obs, double eta,
                           GridMode mode = GridMode::General);

/// True if the single-mistake system for l is feasible, i.e. FLD cannot get l wrong.
bool guaranteed_by_gale(LinkIndex l, const GroundTruth& truth, const Observables& obs, double eta,
                        GridMode mode = GridMode::General);

/// Exact hyper-node recovery conditions for l at U (l must be in E_U).
bool guaranteed_by_hypernode(LinkIndex l, const GroundTruth& truth, const Observables& obs, const NodeSet& u,
                             double eta, GridMode mode = GridMode::General);

/// Exact f_{U,g} from ground truth.
double exact_f(const GroundTruth& truth, const Observables& obs, const NodeSet& u, GridMode mode = GridMode::General);

}  // namespace gridcert
