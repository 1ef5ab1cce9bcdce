#include <doctest.h>

#include <map>
#include <optional>

#include <Eigen/Dense>

#include "gridcert/attack_sim.hpp"
#include "gridcert/case_io.hpp"
#include "gridcert/errors.hpp"
#include "oracles.hpp"

using namespace gridcert;
using gridcert::testing::make_grid;

namespace {

// g(+1) - a(0) - l(-1).
GridTopology load_path() { return make_grid({1, 0, -1}, {{0, 1, 1.0}, {1, 2, 1.0}}); }

GridTopology triangle() { return make_grid({2, -1, -1}, {{0, 1, 1.0}, {1, 2, 1.0}, {0, 2, 1.0}}); }

AttackScenario scenario(const GridTopology& t, LinkSet failed) {
  AttackScenario s;
  s.area = testing::whole(t);
  s.failed = std::move(failed);
  return s;
}

}  // namespace

TEST_SUITE("attack_sim") {
  TEST_CASE("proportional shedding of the deficient side") {
    const Eigen::Vector3d p(5, -2, -4);
    const Eigen::VectorXd post = apply_policy({0, 1, 2}, p);
    CHECK(post[0] == doctest::Approx(5.0));
    CHECK(post[1] == doctest::Approx(-5.0 / 3.0));
    CHECK(post[2] == doctest::Approx(-10.0 / 3.0));
    const Eigen::Vector3d delta = p - post;
    CHECK(delta[1] == doctest::Approx(-1.0 / 3.0));
    CHECK(delta[2] == doctest::Approx(-2.0 / 3.0));
  }

  TEST_CASE("balanced and one-sided islands") {
    const Eigen::Vector3d balanced(3, -1, -2);
    CHECK(apply_policy({0, 1, 2}, balanced).isApprox(balanced));
    const Eigen::VectorXd lone = apply_policy({0}, Eigen::VectorXd::Constant(1, -3.0));
    CHECK(lone[0] == 0.0);
    // Excess generation: generators scale down, loads stay.
    const Eigen::VectorXd gens = apply_policy({0, 1, 2}, Eigen::Vector3d(4, 4, -2));
    CHECK(gens.isApprox(Eigen::Vector3d(1, 1, -2)));
  }

  TEST_CASE("areas of one node and of the whole grid") {
    const GridTopology t = triangle();
    const AttackScenario one = generate_attack_area(t, 1, 5);
    CHECK(one.area.nodes.size() == 1);
    CHECK(one.area.links.empty());
    const AttackScenario all = generate_attack_area(t, 3, 5);
    CHECK(all.area.nodes == NodeSet{0, 1, 2});
    CHECK(all.area.links == LinkSet{0, 1, 2});
    CHECK_THROWS_AS(generate_attack_area(t, 0, 5), PreconditionViolation);
    CHECK_THROWS_AS(generate_attack_area(t, 4, 5), PreconditionViolation);
  }

  TEST_CASE("seeded area and failure set on the 300-bus case") {
    const GridTopology t = load_case(std::string(GRIDCERT_DATA_DIR) + "/case300.m");
    const AttackScenario a = generate_attack_area(t, 20, 12345);
    const AttackScenario b = generate_attack_area(t, 20, 12345);
    CHECK(a.area.nodes == b.area.nodes);
    std::vector<long long> buses;
    for (NodeIndex v : a.area.nodes) buses.push_back(t.node(v).bus_id);
    CHECK(buses == std::vector<long long>{190, 191, 192, 219, 221, 222, 223, 224, 225, 226, 227, 228, 229, 231,
                                          232, 233, 234, 237, 240, 241});
    CHECK(a.area.links.size() == 22);
    CHECK(a.area.links == induced_subgraph(t, a.area.nodes).links);

    const AttackScenario f = sample_failures(a, 4, 777);
    CHECK(f.failed == sample_failures(a, 4, 777).failed);
    CHECK(f.failed == LinkSet{298, 306, 310, 314});
  }

  TEST_CASE("failure sampling edge cases") {
    const GridTopology t = triangle();
    const AttackScenario area = generate_attack_area(t, 3, 1);
    CHECK(sample_failures(area, 0, 9).failed.empty());
    CHECK(sample_failures(area, 3, 9).failed == area.area.links);
    CHECK_THROWS_AS(sample_failures(area, 4, 9), InsufficientLinks);
  }

  TEST_CASE("failure sets are uniform over k-subsets") {
    const GridTopology t = make_grid({1, -1, 0, 0}, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
    const AttackScenario area = generate_attack_area(t, 4, 1);
    std::map<LinkSet, int> counts;
    const int draws = 6000;
    for (int i = 0; i < draws; ++i) ++counts[sample_failures(area, 2, derive_seed(3, i)).failed];
    CHECK(counts.size() == 6);
    for (const auto& [set, n] : counts) CHECK(std::abs(n - draws / 6) < 150);
  }

  TEST_CASE("no failures leaves the grid untouched") {
    const GridTopology t = triangle();
    const PostAttackState post = compute_post_attack(t, scenario(t, {}));
    const PhaseState pre = solve_dc_power_flow(t, t.injections());
    CHECK(post.theta_post.isApprox(pre.theta));
    CHECK(post.delta.isZero());
    CHECK(post.hypothetical_flow.isApprox(link_flows(t, pre)));
  }

  TEST_CASE("islanding a pure load zeroes the whole grid") {
    const GridTopology t = load_path();
    const PostAttackState post = compute_post_attack(t, scenario(t, {1}));
    CHECK(post.island_partition == std::vector<NodeSet>{{0, 1}, {2}});
    CHECK(post.p_post.isZero());
    CHECK(post.theta_post.isZero());
    CHECK(post.delta.isApprox(Eigen::Vector3d(1, 0, -1)));
    CHECK(post.hypothetical_flow[1] == 0.0);

    const IdentifiabilityReport r = filter_identifiable(t, scenario(t, {1}), post);
    CHECK(r.non_identifiable == LinkSet{0, 1});
    CHECK(r.identifiable.empty());
  }

  TEST_CASE("triangle with one failed link keeps a hypothetical flow") {
    const GridTopology t = triangle();
    const PostAttackState post = compute_post_attack(t, scenario(t, {0}));
    CHECK(post.connected());
    CHECK(post.delta.isZero());
    CHECK(post.hypothetical_flow[2] == doctest::Approx(2.0));   // a -> c
    CHECK(post.hypothetical_flow[1] == doctest::Approx(-1.0));  // b -> c carries c -> b = 1
    CHECK(post.hypothetical_flow[0] == doctest::Approx(3.0));   // theta'_a - theta'_b
    CHECK(post.d_tilde.coeff(0, 0) == doctest::Approx(3.0));
    CHECK(post.d_tilde.coeff(1, 0) == doctest::Approx(-3.0));
    CHECK(post.d_tilde.coeff(2, 0) == 0.0);
    CHECK(filter_identifiable(t, scenario(t, {0}), post).non_identifiable.empty());
  }

  TEST_CASE("post-attack invariants on random scenarios") {
    Rng rng(31);
    int disconnected = 0;
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t n = 3 + rng.uniform_index(8);
      const GridTopology t = testing::random_grid(rng, n, n - 1 + rng.uniform_index(n + 2));
      const AttackScenario area = generate_attack_area(t, 2 + rng.uniform_index(n - 1), rng.next());
      const AttackScenario s = sample_failures(area, rng.uniform_index(area.area.links.size() + 1), rng.next());
      const PostAttackState post = compute_post_attack(t, s);
      const Eigen::VectorXd p = t.injections();

      for (Eigen::Index v = 0; v < p.size(); ++v) {
        const double d = post.delta[v];
        if (p[v] > 0) {
          CHECK(d >= -1e-12);
          CHECK(d <= p[v] + 1e-12);
        } else {
          CHECK(d <= 1e-12);
          CHECK(d >= p[v] - 1e-12);
        }
      }
      if (post.connected()) {
        CHECK(post.delta.isZero());
      } else {
        ++disconnected;
      }
      for (const NodeSet& island : post.island_partition) {
        // One ratio per side, and at most one side differs from 1.
        std::optional<double> gen_ratio, load_ratio;
        double sum = 0;
        for (NodeIndex v : island) {
          const auto i = static_cast<Eigen::Index>(v);
          sum += post.p_post[i];
          if (p[i] == 0.0) continue;
          std::optional<double>& slot = p[i] > 0 ? gen_ratio : load_ratio;
          const double ratio = post.p_post[i] / p[i];
          if (slot) CHECK(ratio == doctest::Approx(*slot));
          slot = ratio;
        }
        CHECK(std::abs(sum) <= 1e-9);
        const bool gen_cut = gen_ratio && std::abs(*gen_ratio - 1.0) > 1e-12;
        const bool load_cut = load_ratio && std::abs(*load_ratio - 1.0) > 1e-12;
        CHECK_FALSE((gen_cut && load_cut));
      }
      // D~ columns carry +/- the hypothetical flow at the two endpoints only.
      const Eigen::MatrixXd dt(post.d_tilde);
      for (LinkIndex e = 0; e < t.link_count(); ++e) {
        const Link& l = t.link(e);
        const auto c = static_cast<Eigen::Index>(e);
        const double flow = (post.theta_post[static_cast<Eigen::Index>(l.source)] -
                             post.theta_post[static_cast<Eigen::Index>(l.target)]) /
                            l.reactance;
        CHECK(dt(static_cast<Eigen::Index>(l.source), c) == doctest::Approx(flow));
        CHECK(dt(static_cast<Eigen::Index>(l.target), c) == doctest::Approx(-flow));
        CHECK(dt.col(c).cwiseAbs().sum() == doctest::Approx(2 * std::abs(flow)));
      }
    }
    CHECK(disconnected > 0);
  }
}
