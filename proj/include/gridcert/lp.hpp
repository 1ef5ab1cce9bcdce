#pragma once

// Small dense linear-programming facade.
//
// The engine is a deterministic two-phase tableau simplex (Dantzig pricing,
// Bland's rule once degenerate pivots pile up). Every Optimal outcome is
// re-checked against the original constraints; an outcome that fails the
// check is surfaced as NumericalFailure instead of being returned.

#include <limits>

#include <Eigen/Core>

namespace gridcert::lp {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// min c'x  s.t.  A_eq x = b_eq,  A_le x <= b_le,  lower <= x <= upper.
struct LinearProgram {
  Eigen::VectorXd objective;
  Eigen::MatrixXd eq_matrix;
  Eigen::VectorXd eq_rhs;
  Eigen::MatrixXd le_matrix;
  Eigen::VectorXd le_rhs;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  LinearProgram() = default;

  /// `variables` unknowns with cost 0 and bounds [0, +inf), no rows.
  explicit LinearProgram(Eigen::Index variables);

  Eigen::Index variable_count() const { return objective.size(); }

  /// Throws std::invalid_argument on inconsistent dimensions or lower > upper.
  void validate() const;
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpOutcome {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd solution;  ///< empty unless Optimal
  double objective_value = 0;
};

/// Primal feasibility tolerance applied to Optimal outcomes (row-scaled).
inline constexpr double kFeasibilityTolerance = 1e-7;

LpOutcome solve(const LinearProgram& program);

struct HomogeneousCertificate {
  bool feasible = false;
  Eigen::VectorXd witness;  ///< z >= 0 with M z = 0 and g'z < 0, when feasible
  double value = 0;         ///< g'z of the witness (or LP optimum when infeasible)
};

/// Relative residual allowed on a homogeneous witness: ||M z||_inf <= tol * max(1, max|M_ij|)
/// for z normalized to 1'z = 1.
inline constexpr double kWitnessTolerance = 1e-9;

/// Decides whether some z >= 0 has M z = 0 and g'z < 0. Columns are rescaled
/// and the system is normalized by 1'z <= 1; a positive answer always carries
/// a witness with 1'z = 1 that has been re-verified against the original data
/// (relative residual within kWitnessTolerance, g'z < 0).
HomogeneousCertificate strict_homogeneous_feasible(const Eigen::MatrixXd& m, const Eigen::VectorXd& g);

/// Threshold below which the normalized optimum counts as strictly negative.
double strict_epsilon(const Eigen::VectorXd& g);

}  // namespace gridcert::lp
