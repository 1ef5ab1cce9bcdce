#pragma once

// Case ingestion (MATPOWER .m subset and a JSON mirror) and serialization of
// scenarios, verification ledgers and per-trial metrics.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "gridcert/attack_sim.hpp"
#include "gridcert/grid_model.hpp"
#include "gridcert/verifier.hpp"

namespace gridcert {

/// Parses a MATPOWER case (mpc.bus / mpc.gen / mpc.branch) or the JSON mirror
/// {"format": "gridcert-case", "version": 1, "case_id", "bus": [{id, type, Pd}],
///  "gen": [{bus, Pg, status}], "branch": [{from, to, x, status}]}.
///
/// Parallel branches are merged (1/r = sum 1/r_i) keeping the first one's
/// orientation, out-of-service rows are dropped, isolated (type 4) buses are
/// skipped, and the pre-attack imbalance is absorbed at the slack bus.
/// Reactance magnitudes are used, so series-compensated branches (x < 0)
/// contribute |x|.
///
/// Throws ParseError, DanglingReference or DisconnectedCase.
GridTopology parse_case(std::string_view text, std::string case_id = {});

/// Reads and parses a case file; the case id defaults to the file stem.
GridTopology load_case(const std::filesystem::path& path);

/// JSON mirror of a topology (one generator per positive-injection node).
std::string case_to_json(const GridTopology& topology);

// Scenarios ------------------------------------------------------------------

/// {"seed", "case-id", "policy-version", "V_H": [bus ids], "F": [link ids]}.
std::string scenario_to_json(const GridTopology& topology, const AttackScenario& scenario);

/// Throws SchemaError on missing fields or F outside E_H, DanglingReference
/// on unknown buses.
AttackScenario scenario_from_json(const GridTopology& topology, std::string_view text);

// Ledgers --------------------------------------------------------------------

/// One JSON object per line, per link of E_H in id order:
/// {"link", "from", "to", "estimated", "verified", "method"[, "witness"]}.
std::string ledger_to_jsonl(const GridTopology& topology, const VerificationLedger& ledger);
std::vector<LinkVerdict> ledger_from_jsonl(std::string_view text);

/// Throws IoError.
void write_results(const GridTopology& topology, const VerificationLedger& ledger,
                   const std::filesystem::path& path);
std::vector<LinkVerdict> read_results(const std::filesystem::path& path);

// Metrics --------------------------------------------------------------------

/// One (H, F) trial. Link counts exclude non-identifiable links unless noted.
struct MetricsRow {
  std::string mode = "general";
  std::size_t failures = 0;  ///< requested |F|
  std::size_t area_index = 0;
  std::size_t failure_index = 0;
  std::uint64_t seed = 0;
  std::size_t area_nodes = 0;
  std::size_t area_links = 0;
  bool evaluated = false;  ///< false when skipped (error, or disconnected in connected-known mode)
  bool connected = false;  ///< post-attack grid connected
  bool error = false;
  std::size_t non_identifiable = 0;
  std::size_t failed_links = 0;
  std::size_t operational_links = 0;
  std::size_t estimated_failed = 0;  ///< |F^|, all links
  std::size_t correct_failed = 0;
  std::size_t correct_operational = 0;
  std::size_t testable_failed = 0;  ///< in a bridge or 2-edge cut of H
  std::size_t testable_operational = 0;
  std::size_t bridge_failed = 0;
  std::size_t bridge_operational = 0;
  std::size_t verified_failed_alg1 = 0;
  std::size_t verified_operational_alg1 = 0;
  std::size_t verified_failed_bridge = 0;
  std::size_t verified_operational_bridge = 0;
  std::size_t verified_failed = 0;  ///< after both algorithms
  std::size_t verified_operational = 0;
  std::size_t alg2_added = 0;
  std::size_t guaranteed_failed = 0;
  std::size_t guaranteed_operational = 0;
  std::size_t violations = 0;  ///< verified links whose estimate is wrong, all links
  std::size_t numerical_failures = 0;
  std::size_t bridge_identifiable = 0;
  std::size_t bridge_exact = 0;  ///< identifiable bridges estimated correctly and verified
  double identity_residual = 0;
  double precision = 1;
  double recall = 1;

  bool operator==(const MetricsRow&) const = default;
};

/// Fixed column order used by the metrics CSV.
const std::vector<std::string>& metrics_header();

std::string metrics_to_csv(const std::vector<MetricsRow>& rows);
/// Throws SchemaError on a header or field mismatch.
std::vector<MetricsRow> metrics_from_csv(std::string_view text);

void write_metrics(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

// Files ----------------------------------------------------------------------

/// Throws IoError.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace gridcert
