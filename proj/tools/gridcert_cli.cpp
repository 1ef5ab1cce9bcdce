// Command-line entry point: simulate, estimate, verify, campaign, report.

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridcert/attack_sim.hpp"
#include "gridcert/campaign.hpp"
#include "gridcert/case_io.hpp"
#include "gridcert/errors.hpp"
#include "gridcert/fld.hpp"
#include "gridcert/verifier.hpp"

namespace {

using gridcert::GridMode;
using json = nlohmann::json;

constexpr int kConfigError = 1;
constexpr int kDataError = 2;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_file;
  std::string case_path;
  std::size_t area_size = 20;
  std::vector<std::size_t> failures = {2, 4, 6, 8};
  std::size_t trials_h = 10;
  std::size_t trials_f = 10;
  double eta = 0.5;
  std::string mode = "general";
  std::uint64_t seed = 1;
  std::string out;
  std::size_t threads = 0;
  bool ledgers = false;
  std::string scenario;
  std::string metrics;
};

// Values from --config, for every key whose flag was not given explicitly.
void apply_config_file(Options& o, const CLI::App& cmd) {
  if (o.config_file.empty()) return;
  json doc;
  try {
    doc = json::parse(gridcert::read_text_file(o.config_file));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config file: ") + e.what());
  } catch (const gridcert::IoError& e) {
    throw ConfigError(e.what());
  }
  if (!doc.is_object()) throw ConfigError("config file must hold a JSON object");
  const auto unset = [&](const char* flag) {
    const CLI::Option* opt = cmd.get_option_no_throw(flag);
    return opt == nullptr || opt->count() == 0;
  };
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "case" && unset("--case")) o.case_path = value.get<std::string>();
      else if (key == "area_size" && unset("--area-size")) o.area_size = value.get<std::size_t>();
      else if (key == "failures" && unset("--failures")) o.failures = value.get<std::vector<std::size_t>>();
      else if (key == "trials_h" && unset("--trials-h")) o.trials_h = value.get<std::size_t>();
      else if (key == "trials_f" && unset("--trials-f")) o.trials_f = value.get<std::size_t>();
      else if (key == "eta" && unset("--eta")) o.eta = value.get<double>();
      else if (key == "mode" && unset("--mode")) o.mode = value.get<std::string>();
      else if (key == "seed" && unset("--seed")) o.seed = value.get<std::uint64_t>();
      else if (key == "out" && unset("--out")) o.out = value.get<std::string>();
      else if (key == "threads" && unset("--threads")) o.threads = value.get<std::size_t>();
      else if (key == "write_ledgers" && unset("--ledgers")) o.ledgers = value.get<bool>();
      else if (key != "case" && key != "area_size" && key != "failures" && key != "trials_h" &&
               key != "trials_f" && key != "eta" && key != "mode" && key != "seed" && key != "out" &&
               key != "threads" && key != "write_ledgers") {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
}

gridcert::RunConfig run_config(const Options& o) {
  gridcert::RunConfig c;
  if (o.case_path.empty()) throw ConfigError("--case is required");
  c.case_path = o.case_path;
  c.area_size = o.area_size;
  c.failures = o.failures;
  c.trials_h = o.trials_h;
  c.trials_f = o.trials_f;
  c.eta = o.eta;
  c.seed = o.seed;
  c.out_dir = o.out;
  c.threads = o.threads;
  c.write_ledgers = o.ledgers;
  try {
    c.mode = gridcert::parse_mode(o.mode);
    c.validate();
  } catch (const gridcert::PreconditionViolation& e) {
    throw ConfigError(e.what());
  }
  return c;
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    gridcert::write_text_file(path, text);
  }
}

struct Simulated {
  std::shared_ptr<const gridcert::GridTopology> topology;
  gridcert::AttackScenario scenario;
  gridcert::PostAttackState post;
  gridcert::Observables obs;
};

Simulated load_scenario(const Options& o) {
  if (o.scenario.empty()) throw ConfigError("--scenario is required");
  Simulated s;
  s.topology = std::make_shared<const gridcert::GridTopology>(gridcert::load_case(o.case_path));
  s.scenario = gridcert::scenario_from_json(*s.topology, gridcert::read_text_file(o.scenario));
  s.post = gridcert::compute_post_attack(*s.topology, s.scenario);
  s.obs = gridcert::make_observables(s.topology, s.scenario, s.post);
  return s;
}

int cmd_simulate(const Options& o) {
  const gridcert::RunConfig c = run_config(o);
  const gridcert::GridTopology t = gridcert::load_case(c.case_path);
  const std::size_t k = c.failures.front();
  const auto area = gridcert::generate_attack_area(t, c.area_size, gridcert::area_seed(c.seed, 0));
  const auto scenario = gridcert::sample_failures(area, k, gridcert::failure_seed(c.seed, k, 0, 0));
  emit(o.out, gridcert::scenario_to_json(t, scenario));
  return 0;
}

int cmd_estimate(const Options& o) {
  const gridcert::RunConfig c = run_config(o);
  const Simulated s = load_scenario(o);
  const auto est = gridcert::estimate(s.obs, c.eta, c.mode);
  json doc;
  doc["objective"] = est.objective;
  doc["eta"] = est.eta;
  doc["F_hat"] = est.f_hat;
  json x = json::object();
  for (std::size_t k = 0; k < s.obs.area.links.size(); ++k) {
    x[std::to_string(s.obs.area.links[k])] = est.x[static_cast<Eigen::Index>(k)];
  }
  doc["x"] = std::move(x);
  emit(o.out, doc.dump(1) + "\n");
  return 0;
}

int cmd_verify(const Options& o) {
  const gridcert::RunConfig c = run_config(o);
  const Simulated s = load_scenario(o);
  const auto est = gridcert::estimate(s.obs, c.eta, c.mode);
  const auto catalog = gridcert::enumerate_cuts(*s.topology, s.obs.area);
  const auto first = gridcert::algorithm1(s.obs, est, catalog, c.eta);
  const auto ledger = gridcert::algorithm2(s.obs, est, first, c.eta);
  emit(o.out, gridcert::ledger_to_jsonl(*s.topology, ledger));
  return 0;
}

int cmd_campaign(const Options& o) {
  const gridcert::RunConfig c = run_config(o);
  if (c.out_dir.empty()) throw ConfigError("--out is required for campaign");
  const auto result = gridcert::run_campaign(c);
  std::size_t connected = 0;
  for (const auto& r : result.rows) connected += r.connected ? 1 : 0;
  std::fprintf(stderr, "%zu trials, %zu connected, %zu errors, %.1f s\n", result.rows.size(), connected,
               result.errors, result.seconds);
  return 0;
}

int cmd_report(const Options& o) {
  if (o.metrics.empty()) throw ConfigError("--metrics is required");
  if (o.out.empty()) throw ConfigError("--out is required");
  gridcert::report(o.metrics, o.out);
  return 0;
}

void add_run_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_file, "JSON config file; explicit flags override it");
  cmd->add_option("--case", o.case_path, "MATPOWER .m or JSON case file");
  cmd->add_option("--area-size", o.area_size, "attacked-area size |V_H|");
  cmd->add_option("--failures", o.failures, "failed-link counts |F|")->delimiter(',');
  cmd->add_option("--trials-h", o.trials_h, "attacked areas per |F|");
  cmd->add_option("--trials-f", o.trials_f, "failure sets per area");
  cmd->add_option("--eta", o.eta, "rounding threshold in (0, 1)");
  cmd->add_option("--mode", o.mode, "general or connected-known");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", o.out, "output file or directory");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Failure localization and verification under cyber-physical attacks"};
  app.require_subcommand(1);
  Options o;

  CLI::App* simulate = app.add_subcommand("simulate", "draw one attack scenario and write it as JSON");
  add_run_flags(simulate, o);
  CLI::App* estimate = app.add_subcommand("estimate", "run the estimator on a scenario");
  add_run_flags(estimate, o);
  estimate->add_option("--scenario", o.scenario, "scenario JSON");
  CLI::App* verify = app.add_subcommand("verify", "estimate and certify a scenario; writes a JSON-lines ledger");
  add_run_flags(verify, o);
  verify->add_option("--scenario", o.scenario, "scenario JSON");
  CLI::App* campaign = app.add_subcommand("campaign", "run a seeded batch of trials");
  add_run_flags(campaign, o);
  campaign->add_option("--threads", o.threads, "worker threads (0: all cores)");
  campaign->add_flag("--ledgers", o.ledgers, "also write one ledger per trial");
  CLI::App* rep = app.add_subcommand("report", "aggregate a metrics CSV");
  rep->add_option("--metrics", o.metrics, "metrics.csv from a campaign");
  rep->add_option("--out", o.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    for (CLI::App* cmd : {simulate, estimate, verify, campaign}) {
      if (cmd->parsed()) apply_config_file(o, *cmd);
    }
    if (simulate->parsed()) return cmd_simulate(o);
    if (estimate->parsed()) return cmd_estimate(o);
    if (verify->parsed()) return cmd_verify(o);
    if (campaign->parsed()) return cmd_campaign(o);
    return cmd_report(o);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const gridcert::PreconditionViolation& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kDataError;
  }
}
