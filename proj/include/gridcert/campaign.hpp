#pragma once

// Seeded experiment harness: simulate, estimate, verify and score many
// (H, F) trials, then fold the per-trial rows into percentile summaries.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gridcert/attack_sim.hpp"
#include "gridcert/case_io.hpp"
#include "gridcert/fld.hpp"
#include "gridcert/grid_model.hpp"
#include "gridcert/verifier.hpp"

namespace gridcert {

struct RunConfig {
  std::filesystem::path case_path;
  std::size_t area_size = 20;
  std::vector<std::size_t> failures = {2, 4, 6, 8};
  std::size_t trials_h = 10;  ///< attacked areas per |F|
  std::size_t trials_f = 10;  ///< failure sets per area
  double eta = 0.5;
  GridMode mode = GridMode::General;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir;  ///< empty: write nothing
  bool write_ledgers = false;
  std::size_t threads = 0;  ///< 0: hardware concurrency
  bool guaranteed = true;   ///< run the ground-truth Gale sweep

  /// Throws PreconditionViolation on out-of-range values.
  void validate() const;
};

std::string mode_name(GridMode mode);
/// Accepts "general" and "connected-known"; throws PreconditionViolation otherwise.
GridMode parse_mode(const std::string& name);

/// Seeds of one trial. Areas depend only on (master, area index) so every
/// |F| setting attacks the same areas.
std::uint64_t area_seed(std::uint64_t master, std::size_t area_index);
std::uint64_t failure_seed(std::uint64_t master, std::size_t failures, std::size_t area_index,
                           std::size_t failure_index);

/// Everything a trial produced, for callers that inspect more than the row.
struct TrialOutcome {
  MetricsRow row;
  AttackScenario scenario;
  std::optional<PostAttackState> post;
  std::optional<EstimationResult> estimate;
  std::optional<VerificationLedger> after_alg1;
  std::optional<VerificationLedger> after_alg2;
  std::string error;  ///< message when row.error is set
};

/// Runs one trial. Exceptions are caught and reported through row.error.
TrialOutcome run_trial(const std::shared_ptr<const GridTopology>& topology, const Eigen::VectorXd& theta_pre,
                       const RunConfig& config, std::size_t failures, std::size_t area_index,
                       std::size_t failure_index);

struct CampaignResult {
  std::vector<MetricsRow> rows;  ///< ordered by (|F| setting, area, failure set)
  std::size_t errors = 0;
  double seconds = 0;
};

/// Runs every trial of the configuration on a worker pool; the row order and
/// contents depend only on the configuration. When out_dir is set, writes
/// metrics.csv, summary.csv and (optionally) one ledger per trial.
CampaignResult run_campaign(const RunConfig& config);
CampaignResult run_campaign(const RunConfig& config, const std::shared_ptr<const GridTopology>& topology);

/// Nearest-rank percentile (rank = ceil(p/100 * n)); values need not be sorted.
double percentile(std::vector<double> values, double p);

struct SummaryRow {
  std::string mode;
  std::size_t failures = 0;
  std::string metric;
  std::size_t samples = 0;
  double mean = 0;
  double p25 = 0;
  double p75 = 0;
};

/// Per (mode, |F|) aggregates of the per-trial fractions. Trials whose
/// denominator is zero are left out of that metric.
std::vector<SummaryRow> summarize(const std::vector<MetricsRow>& rows);

std::string summary_to_csv(const std::vector<SummaryRow>& rows);

/// Reads a metrics CSV and writes summary.csv into out_dir. Throws IoError or SchemaError.
std::vector<SummaryRow> report(const std::filesystem::path& metrics_path, const std::filesystem::path& out_dir);

}  // namespace gridcert
