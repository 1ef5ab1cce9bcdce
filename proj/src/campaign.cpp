#include "gridcert/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <thread>

#include "gridcert/errors.hpp"
#include "gridcert/rng.hpp"

namespace gridcert {

void RunConfig::validate() const {
  if (!(eta > 0.0 && eta < 1.0)) throw PreconditionViolation("eta must lie in (0, 1)");
  if (area_size == 0) throw PreconditionViolation("area size must be positive");
  if (trials_h == 0 || trials_f == 0) throw PreconditionViolation("trial counts must be positive");
  if (failures.empty()) throw PreconditionViolation("at least one |F| value is required");
}

std::string mode_name(GridMode mode) { return mode == GridMode::General ? "general" : "connected-known"; }

GridMode parse_mode(const std::string& name) {
  if (name == "general") return GridMode::General;
  if (name == "connected-known") return GridMode::ConnectedKnown;
  throw PreconditionViolation("unknown mode '" + name + "' (expected general or connected-known)");
}

std::uint64_t area_seed(std::uint64_t master, std::size_t area_index) {
  return derive_seed(derive_seed(master, 0xA4EAULL), area_index);
}

std::uint64_t failure_seed(std::uint64_t master, std::size_t failures, std::size_t area_index,
                           std::size_t failure_index) {
  return derive_seed(derive_seed(area_seed(master, area_index), failures), failure_index);
}

namespace {

void score(TrialOutcome& out, const Observables& obs, const IdentifiabilityReport& ident, const CutCatalog& catalog,
           const RunConfig& config, const GroundTruth& truth) {
  MetricsRow& row = out.row;
  const EstimationResult& est = *out.estimate;
  const VerificationLedger& first = *out.after_alg1;
  const VerificationLedger& final_ledger = *out.after_alg2;

  LinkSet testable = catalog.bridges;
  for (const auto& [a, b] : catalog.two_edge_cuts) {
    testable.push_back(a);
    testable.push_back(b);
  }
  std::sort(testable.begin(), testable.end());
  const auto in = [](const LinkSet& s, LinkIndex e) { return std::binary_search(s.begin(), s.end(), e); };

  row.non_identifiable = ident.non_identifiable.size();
  row.estimated_failed = est.f_hat.size();
  std::size_t hits = 0;
  for (LinkIndex e : obs.area.links) {
    const bool failed = truth.is_failed(e);
    const bool flagged = est.estimated_failed(e);
    const bool verified = final_ledger.at(e).verified;
    if (failed && flagged) ++hits;
    if (verified && failed != flagged) ++row.violations;
    if (!in(ident.identifiable, e)) continue;

    const bool correct = failed == flagged;
    const bool bridge = in(catalog.bridges, e);
    const bool early = first.at(e).verified;
    (failed ? row.failed_links : row.operational_links) += 1;
    if (correct) (failed ? row.correct_failed : row.correct_operational) += 1;
    if (in(testable, e)) (failed ? row.testable_failed : row.testable_operational) += 1;
    if (bridge) (failed ? row.bridge_failed : row.bridge_operational) += 1;
    if (correct && early) (failed ? row.verified_failed_alg1 : row.verified_operational_alg1) += 1;
    if (correct && early && bridge) (failed ? row.verified_failed_bridge : row.verified_operational_bridge) += 1;
    if (correct && verified) (failed ? row.verified_failed : row.verified_operational) += 1;
    if (bridge) {
      ++row.bridge_identifiable;
      if (correct && early) ++row.bridge_exact;
    }
    if (config.guaranteed) {
      try {
        if (guaranteed_by_gale(e, truth, obs, config.eta, config.mode)) {
          (failed ? row.guaranteed_failed : row.guaranteed_operational) += 1;
        }
      } catch (const NumericalFailure&) {
        ++row.numerical_failures;
      }
    }
  }
  row.numerical_failures += final_ledger.numerical_failures;
  row.alg2_added = final_ledger.verified_links().size() - first.verified_links().size();
  row.precision = est.f_hat.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(est.f_hat.size());
  row.recall = truth.failed.empty() ? 1.0 : static_cast<double>(hits) / static_cast<double>(truth.failed.size());
}

}  // namespace

TrialOutcome run_trial(const std::shared_ptr<const GridTopology>& topology, const Eigen::VectorXd& theta_pre,
                       const RunConfig& config, std::size_t failures, std::size_t area_index,
                       std::size_t failure_index) {
  TrialOutcome out;
  MetricsRow& row = out.row;
  row.mode = mode_name(config.mode);
  row.failures = failures;
  row.area_index = area_index;
  row.failure_index = failure_index;
  row.seed = failure_seed(config.seed, failures, area_index, failure_index);
  try {
    const AttackScenario area =
        generate_attack_area(*topology, config.area_size, area_seed(config.seed, area_index));
    row.area_nodes = area.area.nodes.size();
    row.area_links = area.area.links.size();
    out.scenario = sample_failures(area, failures, row.seed);
    out.post = compute_post_attack(*topology, out.scenario);
    row.connected = out.post->connected();
    if (config.mode == GridMode::ConnectedKnown && !row.connected) return out;

    const Observables obs = make_observables(topology, out.scenario, *out.post, theta_pre);
    const GroundTruth truth = make_ground_truth(out.scenario, *out.post);
    const IdentifiabilityReport ident = filter_identifiable(*topology, out.scenario, *out.post);

    Eigen::VectorXd x_true = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obs.area.links.size()));
    for (std::size_t k = 0; k < obs.area.links.size(); ++k) {
      if (truth.is_failed(obs.area.links[k])) x_true[static_cast<Eigen::Index>(k)] = 1.0;
    }
    Eigen::VectorXd delta_true(static_cast<Eigen::Index>(obs.area.nodes.size()));
    for (std::size_t i = 0; i < obs.area.nodes.size(); ++i) {
      delta_true[static_cast<Eigen::Index>(i)] = truth.delta[static_cast<Eigen::Index>(obs.area.nodes[i])];
    }
    row.identity_residual = p1_residual(obs, x_true, delta_true);

    out.estimate = estimate(obs, config.eta, config.mode);
    const CutCatalog catalog = enumerate_cuts(*topology, obs.area);
    out.after_alg1 = algorithm1(obs, *out.estimate, catalog, config.eta);
    out.after_alg2 = algorithm2(obs, *out.estimate, *out.after_alg1, config.eta);
    score(out, obs, ident, catalog, config, truth);
    row.evaluated = true;
  } catch (const std::exception& e) {
    row.error = true;
    row.evaluated = false;
    out.error = e.what();
  }
  return out;
}

CampaignResult run_campaign(const RunConfig& config) {
  config.validate();
  return run_campaign(config, std::make_shared<const GridTopology>(load_case(config.case_path)));
}

CampaignResult run_campaign(const RunConfig& config, const std::shared_ptr<const GridTopology>& topology) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const Eigen::VectorXd theta_pre = solve_dc_power_flow(*topology, topology->injections()).theta;

  struct Job {
    std::size_t failures, area, failure;
  };
  std::vector<Job> jobs;
  for (std::size_t k : config.failures) {
    for (std::size_t i = 0; i < config.trials_h; ++i) {
      for (std::size_t j = 0; j < config.trials_f; ++j) jobs.push_back({k, i, j});
    }
  }

  std::vector<MetricsRow> rows(jobs.size());
  std::vector<std::string> ledgers(config.write_ledgers ? jobs.size() : 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t n = next++; n < jobs.size(); n = next++) {
      TrialOutcome t = run_trial(topology, theta_pre, config, jobs[n].failures, jobs[n].area, jobs[n].failure);
      if (config.write_ledgers && t.after_alg2) ledgers[n] = ledger_to_jsonl(*topology, *t.after_alg2);
      rows[n] = std::move(t.row);
    }
  };
  std::size_t threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(jobs.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  CampaignResult result;
  result.rows = std::move(rows);
  for (const MetricsRow& r : result.rows) result.errors += r.error ? 1 : 0;

  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    write_metrics(result.rows, config.out_dir / "metrics.csv");
    write_text_file(config.out_dir / "summary.csv", summary_to_csv(summarize(result.rows)));
    if (config.write_ledgers) {
      const auto dir = config.out_dir / "ledgers";
      std::filesystem::create_directories(dir);
      for (std::size_t n = 0; n < jobs.size(); ++n) {
        if (ledgers[n].empty() && !result.rows[n].evaluated) continue;
        char name[96];
        std::snprintf(name, sizeof name, "%s-F%zu-H%03zu-T%03zu.jsonl", mode_name(config.mode).c_str(),
                      jobs[n].failures, jobs[n].area, jobs[n].failure);
        write_text_file(dir / name, ledgers[n]);
      }
    }
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  const std::size_t rank = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(p / 100.0 * n - 1e-12)));
  return values[std::min(rank, values.size()) - 1];
}

namespace {

struct MetricDef {
  const char* name;
  bool (*applies)(const MetricsRow&);  // trials counted for this metric
  double (*value)(const MetricsRow&);
};

double ratio(std::size_t a, std::size_t b) { return static_cast<double>(a) / static_cast<double>(b); }

const std::vector<MetricDef>& metric_defs() {
  static const std::vector<MetricDef> defs = {
      {"connected", [](const MetricsRow& r) { return !r.error; },
       [](const MetricsRow& r) { return r.connected ? 1.0 : 0.0; }},
      {"testable_failed", [](const MetricsRow& r) { return r.evaluated && r.failed_links > 0; },
       [](const MetricsRow& r) { return ratio(r.testable_failed, r.failed_links); }},
      {"testable_operational", [](const MetricsRow& r) { return r.evaluated && r.operational_links > 0; },
       [](const MetricsRow& r) { return ratio(r.testable_operational, r.operational_links); }},
      {"verified_failed_alg1", [](const MetricsRow& r) { return r.evaluated && r.failed_links > 0; },
       [](const MetricsRow& r) { return ratio(r.verified_failed_alg1, r.failed_links); }},
      {"verified_operational_alg1", [](const MetricsRow& r) { return r.evaluated && r.operational_links > 0; },
       [](const MetricsRow& r) { return ratio(r.verified_operational_alg1, r.operational_links); }},
      {"verified_failed", [](const MetricsRow& r) { return r.evaluated && r.failed_links > 0; },
       [](const MetricsRow& r) { return ratio(r.verified_failed, r.failed_links); }},
      {"verified_operational", [](const MetricsRow& r) { return r.evaluated && r.operational_links > 0; },
       [](const MetricsRow& r) { return ratio(r.verified_operational, r.operational_links); }},
      {"verifiable_failed_among_testable", [](const MetricsRow& r) { return r.evaluated && r.testable_failed > 0; },
       [](const MetricsRow& r) { return ratio(r.verified_failed_alg1, r.testable_failed); }},
      {"verifiable_operational_among_testable",
       [](const MetricsRow& r) { return r.evaluated && r.testable_operational > 0; },
       [](const MetricsRow& r) { return ratio(r.verified_operational_alg1, r.testable_operational); }},
      {"guaranteed_failed", [](const MetricsRow& r) { return r.evaluated && r.failed_links > 0; },
       [](const MetricsRow& r) { return ratio(r.guaranteed_failed, r.failed_links); }},
      {"guaranteed_operational", [](const MetricsRow& r) { return r.evaluated && r.operational_links > 0; },
       [](const MetricsRow& r) { return ratio(r.guaranteed_operational, r.operational_links); }},
      {"correct_failed", [](const MetricsRow& r) { return r.evaluated && r.failed_links > 0; },
       [](const MetricsRow& r) { return ratio(r.correct_failed, r.failed_links); }},
      {"correct_operational", [](const MetricsRow& r) { return r.evaluated && r.operational_links > 0; },
       [](const MetricsRow& r) { return ratio(r.correct_operational, r.operational_links); }},
      {"alg2_effective", [](const MetricsRow& r) { return r.evaluated; },
       [](const MetricsRow& r) { return r.alg2_added > 0 ? 1.0 : 0.0; }},
      {"precision", [](const MetricsRow& r) { return r.evaluated; }, [](const MetricsRow& r) { return r.precision; }},
      {"recall", [](const MetricsRow& r) { return r.evaluated; }, [](const MetricsRow& r) { return r.recall; }},
  };
  return defs;
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::vector<SummaryRow> summarize(const std::vector<MetricsRow>& rows) {
  std::map<std::pair<std::string, std::size_t>, std::vector<const MetricsRow*>> groups;
  for (const MetricsRow& r : rows) groups[{r.mode, r.failures}].push_back(&r);
  std::vector<SummaryRow> out;
  for (const auto& [key, members] : groups) {
    for (const MetricDef& def : metric_defs()) {
      std::vector<double> values;
      for (const MetricsRow* r : members) {
        if (def.applies(*r)) values.push_back(def.value(*r));
      }
      SummaryRow s{key.first, key.second, def.name, values.size(), 0, 0, 0};
      if (!values.empty()) {
        double sum = 0;
        for (double v : values) sum += v;
        s.mean = sum / static_cast<double>(values.size());
        s.p25 = percentile(values, 25);
        s.p75 = percentile(values, 75);
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::string summary_to_csv(const std::vector<SummaryRow>& rows) {
  std::string out = "mode,failures,metric,samples,mean,p25,p75\n";
  for (const SummaryRow& s : rows) {
    out += s.mode + "," + std::to_string(s.failures) + "," + s.metric + "," + std::to_string(s.samples) + "," +
           fixed6(s.mean) + "," + fixed6(s.p25) + "," + fixed6(s.p75) + "\n";
  }
  return out;
}

std::vector<SummaryRow> report(const std::filesystem::path& metrics_path, const std::filesystem::path& out_dir) {
  const std::vector<SummaryRow> summary = summarize(read_metrics(metrics_path));
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "summary.csv", summary_to_csv(summary));
  return summary;
}

}  // namespace gridcert
