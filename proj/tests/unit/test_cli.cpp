#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <string>

#include "gridcert/campaign.hpp"
#include "gridcert/case_io.hpp"
#include "gridcert/errors.hpp"

using namespace gridcert;
namespace fs = std::filesystem;

namespace {

const std::string kCase = std::string(GRIDCERT_DATA_DIR) + "/case300.m";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "gridcert-cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GRIDCERT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

RunConfig small_config() {
  RunConfig c;
  c.case_path = kCase;
  c.failures = {2, 4};
  c.trials_h = 2;
  c.trials_f = 3;
  return c;
}

std::shared_ptr<const GridTopology> case300() {
  static const auto topo = std::make_shared<const GridTopology>(load_case(kCase));
  return topo;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("nearest-rank percentiles") {
    CHECK(percentile({1, 2, 3, 4, 5, 6, 7, 8}, 25) == 2.0);
    CHECK(percentile({1, 2, 3, 4, 5, 6, 7, 8}, 75) == 6.0);
    CHECK(percentile({8, 3, 1, 6, 2, 7, 5, 4}, 75) == 6.0);
    CHECK(percentile({8, 3, 1, 6, 2, 7, 5, 4}, 100) == 8.0);
    CHECK(percentile({4}, 25) == 4.0);
    CHECK(percentile({4}, 75) == 4.0);
  }

  TEST_CASE("summaries of one trial and of nothing") {
    MetricsRow r;
    r.failures = 2;
    r.evaluated = true;
    r.connected = true;
    r.failed_links = 4;
    r.verified_failed = 3;
    r.operational_links = 10;
    r.verified_operational = 5;
    const std::vector<SummaryRow> s = summarize({r});
    REQUIRE_FALSE(s.empty());
    for (const SummaryRow& row : s) {
      // No testable links, so the among-testable ratios have no denominator.
      CHECK(row.samples == (row.metric.find("among_testable") == std::string::npos ? 1u : 0u));
      CHECK(row.mean == row.p25);
      CHECK(row.mean == row.p75);
      if (row.metric == "verified_failed") CHECK(row.mean == doctest::Approx(0.75));
      if (row.metric == "verified_operational") CHECK(row.mean == doctest::Approx(0.5));
      if (row.metric == "connected") CHECK(row.mean == 1.0);
    }

    CHECK(summarize({}).empty());
    CHECK(summary_to_csv({}) == "mode,failures,metric,samples,mean,p25,p75\n");
    const fs::path dir = scratch("empty");
    write_metrics({}, dir / "metrics.csv");
    CHECK(report(dir / "metrics.csv", dir).empty());
    CHECK(read_text_file(dir / "summary.csv") == "mode,failures,metric,samples,mean,p25,p75\n");
  }

  TEST_CASE("trials with an empty denominator are left out") {
    MetricsRow none;
    none.evaluated = true;
    none.operational_links = 3;
    for (const SummaryRow& row : summarize({none})) {
      if (row.metric == "verified_failed") CHECK(row.samples == 0);
      if (row.metric == "verified_operational") CHECK(row.samples == 1);
    }
  }

  TEST_CASE("configuration checks") {
    RunConfig c = small_config();
    CHECK_NOTHROW(c.validate());
    c.eta = 1.0;
    CHECK_THROWS_AS(c.validate(), PreconditionViolation);
    c = small_config();
    c.trials_h = 0;
    CHECK_THROWS_AS(c.validate(), PreconditionViolation);
    CHECK(parse_mode("connected-known") == GridMode::ConnectedKnown);
    CHECK(mode_name(parse_mode("general")) == "general");
    CHECK_THROWS_AS(parse_mode("islanded"), PreconditionViolation);
  }

  TEST_CASE("areas are shared across failure counts") {
    CHECK(area_seed(1, 0) != area_seed(1, 1));
    CHECK(area_seed(1, 0) != area_seed(2, 0));
    CHECK(failure_seed(1, 2, 0, 0) != failure_seed(1, 4, 0, 0));
    RunConfig c = small_config();
    const Eigen::VectorXd theta = solve_dc_power_flow(*case300(), case300()->injections()).theta;
    const TrialOutcome a = run_trial(case300(), theta, c, 2, 1, 0);
    const TrialOutcome b = run_trial(case300(), theta, c, 4, 1, 2);
    CHECK(a.scenario.area.nodes == b.scenario.area.nodes);
    CHECK(a.row.failures == 2);
    CHECK(b.scenario.failed.size() == 4);
  }

  TEST_CASE("campaigns are deterministic and thread-count independent") {
    RunConfig c = small_config();
    c.threads = 1;
    const CampaignResult one = run_campaign(c, case300());
    c.threads = 4;
    const CampaignResult four = run_campaign(c, case300());
    REQUIRE(one.rows.size() == 12);
    CHECK(one.errors == 0);
    CHECK(metrics_to_csv(one.rows) == metrics_to_csv(four.rows));
    for (const MetricsRow& r : one.rows) {
      CHECK(r.violations == 0);
      CHECK(r.identity_residual <= 1e-6);
      CHECK(r.area_nodes == 20);
    }
  }

  TEST_CASE("campaign output files fold into the same summary") {
    RunConfig c = small_config();
    c.out_dir = scratch("fold");
    c.write_ledgers = true;
    const CampaignResult result = run_campaign(c, case300());
    CHECK(read_text_file(c.out_dir / "metrics.csv") == metrics_to_csv(result.rows));
    CHECK(read_text_file(c.out_dir / "summary.csv") == summary_to_csv(summarize(result.rows)));
    const fs::path again = scratch("fold-report");
    report(c.out_dir / "metrics.csv", again);
    CHECK(read_text_file(again / "summary.csv") == read_text_file(c.out_dir / "summary.csv"));
    CHECK(fs::exists(c.out_dir / "ledgers"));
    CHECK_FALSE(fs::is_empty(c.out_dir / "ledgers"));
  }

  TEST_CASE("a campaign without failures") {
    RunConfig c = small_config();
    c.failures = {0};
    c.trials_h = 1;
    c.trials_f = 1;
    const CampaignResult result = run_campaign(c, case300());
    REQUIRE(result.rows.size() == 1);
    const MetricsRow& r = result.rows.front();
    CHECK_FALSE(r.error);
    CHECK(r.connected);
    CHECK(r.failed_links == 0);
    CHECK(r.estimated_failed == 0);
    CHECK(r.violations == 0);
    for (const SummaryRow& s : summarize(result.rows)) {
      if (s.metric == "verified_failed") CHECK(s.samples == 0);
    }
  }

  TEST_CASE("connected-known mode skips split grids") {
    RunConfig c = small_config();
    c.mode = GridMode::ConnectedKnown;
    c.failures = {8};
    const CampaignResult result = run_campaign(c, case300());
    for (const MetricsRow& r : result.rows) {
      CHECK(r.mode == "connected-known");
      CHECK(r.evaluated == r.connected);
      CHECK(r.bridge_exact == r.bridge_identifiable);
    }
  }

  TEST_CASE("command-line exit codes") {
    const fs::path dir = scratch("exit");
    const std::string out = (dir / "run").string();
    CHECK(run_cli("campaign --case " + kCase + " --failures 2,4 --trials-h 1 --trials-f 2 --out " + out) == 0);
    CHECK(fs::exists(dir / "run" / "metrics.csv"));
    CHECK(read_metrics(dir / "run" / "metrics.csv").size() == 4);
    CHECK(run_cli("report --metrics " + out + "/metrics.csv --out " + (dir / "rep").string()) == 0);
    CHECK(fs::exists(dir / "rep" / "summary.csv"));

    const std::string scenario = (dir / "scenario.json").string();
    CHECK(run_cli("simulate --case " + kCase + " --failures 4 --seed 9 --out " + scenario) == 0);
    CHECK(run_cli("estimate --case " + kCase + " --scenario " + scenario + " --out " + (dir / "est.json").string()) ==
          0);
    CHECK(run_cli("verify --case " + kCase + " --scenario " + scenario + " --out " + (dir / "ledger.jsonl").string()) ==
          0);
    CHECK_FALSE(read_text_file(dir / "ledger.jsonl").empty());

    const fs::path config = dir / "config.json";
    write_text_file(config, "{\"case\": \"" + kCase + "\", \"failures\": [2], \"trials_h\": 1, \"trials_f\": 1}");
    CHECK(run_cli("campaign --config " + config.string() + " --out " + (dir / "cfg").string()) == 0);

    CHECK(run_cli("campaign --case " + kCase + " --eta 2 --out " + out) == 1);
    CHECK(run_cli("campaign --case " + kCase + " --mode islanded --out " + out) == 1);
    CHECK(run_cli("campaign --bogus") == 1);
    CHECK(run_cli("") == 1);
    CHECK(run_cli("campaign --case " + (dir / "missing.m").string() + " --out " + out) == 2);
    CHECK(run_cli("report --metrics " + (dir / "missing.csv").string() + " --out " + out) == 2);
  }
}
