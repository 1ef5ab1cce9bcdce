#include "gridcert/lp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/LU>

#include "gridcert/errors.hpp"

namespace gridcert::lp {

namespace {

using Index = Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr double kPivotTolerance = 1e-7;
constexpr double kCostTolerance = 1e-10;
constexpr double kPhaseOneTolerance = 1e-9;
constexpr double kTieTolerance = 1e-12;
constexpr int kDegenerateLimit = 50;
constexpr int kRefineRounds = 3;

enum class VarKind { Shift, Mirror, Split };

// x = base + y (Shift), x = base - y (Mirror), x = y - y2 (Split).
struct VarMap {
  VarKind kind;
  Index column;
  Index column2;
  double base;
};

// min c'y + offset  s.t.  A y = b,  y >= 0,  b >= 0, rows scaled to unit max.
struct StandardForm {
  RowMatrix a;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  double offset = 0;
  std::vector<VarMap> vars;
  std::vector<Index> unit_column;  // per row: a +1 slack usable as the starting basis, or -1
};

StandardForm to_standard_form(const LinearProgram& p) {
  StandardForm sf;
  const Index n = p.variable_count();
  Index structural = 0;
  Index bound_rows = 0;
  for (Index j = 0; j < n; ++j) {
    const bool lo = std::isfinite(p.lower[j]);
    const bool hi = std::isfinite(p.upper[j]);
    if (lo) {
      sf.vars.push_back({VarKind::Shift, structural++, -1, p.lower[j]});
      if (hi) ++bound_rows;
    } else if (hi) {
      sf.vars.push_back({VarKind::Mirror, structural++, -1, p.upper[j]});
    } else {
      sf.vars.push_back({VarKind::Split, structural, structural + 1, 0.0});
      structural += 2;
    }
  }
  const Index eq_rows = p.eq_matrix.rows();
  const Index le_rows = p.le_matrix.rows();
  const Index rows = eq_rows + le_rows + bound_rows;
  const Index slacks = le_rows + bound_rows;
  sf.a = RowMatrix::Zero(rows, structural + slacks);
  sf.b = Eigen::VectorXd::Zero(rows);
  sf.c = Eigen::VectorXd::Zero(structural + slacks);
  sf.unit_column.assign(static_cast<std::size_t>(rows), -1);

  auto add_term = [&](Index row, Index j, double coef) {
    const VarMap& v = sf.vars[static_cast<std::size_t>(j)];
    switch (v.kind) {
      case VarKind::Shift:
        sf.a(row, v.column) += coef;
        sf.b[row] -= coef * v.base;
        break;
      case VarKind::Mirror:
        sf.a(row, v.column) -= coef;
        sf.b[row] -= coef * v.base;
        break;
      case VarKind::Split:
        sf.a(row, v.column) += coef;
        sf.a(row, v.column2) -= coef;
        break;
    }
  };

  Index row = 0;
  for (Index i = 0; i < eq_rows; ++i, ++row) {
    sf.b[row] = p.eq_rhs[i];
    for (Index j = 0; j < n; ++j) {
      if (p.eq_matrix(i, j) != 0.0) add_term(row, j, p.eq_matrix(i, j));
    }
  }
  Index slack = structural;
  std::vector<Index> slack_of_row(static_cast<std::size_t>(rows), -1);
  for (Index i = 0; i < le_rows; ++i, ++row) {
    sf.b[row] = p.le_rhs[i];
    for (Index j = 0; j < n; ++j) {
      if (p.le_matrix(i, j) != 0.0) add_term(row, j, p.le_matrix(i, j));
    }
    slack_of_row[static_cast<std::size_t>(row)] = slack++;
  }
  for (Index j = 0; j < n; ++j) {
    const VarMap& v = sf.vars[static_cast<std::size_t>(j)];
    if (v.kind != VarKind::Shift || !std::isfinite(p.upper[j])) continue;
    sf.a(row, v.column) = 1.0;
    sf.b[row] = p.upper[j] - p.lower[j];
    slack_of_row[static_cast<std::size_t>(row)] = slack++;
    ++row;
  }

  // Row equilibration on the structural part; slacks are rescaled to stay unit.
  for (Index i = 0; i < rows; ++i) {
    const double scale = structural > 0 ? sf.a.row(i).head(structural).cwiseAbs().maxCoeff() : 0.0;
    if (scale > 0.0) {
      sf.a.row(i).head(structural) /= scale;
      sf.b[i] /= scale;
    }
    const Index s = slack_of_row[static_cast<std::size_t>(i)];
    double sign = 1.0;
    if (sf.b[i] < 0.0) {
      sf.a.row(i).head(structural) *= -1.0;
      sf.b[i] = -sf.b[i];
      sign = -1.0;
    }
    if (s >= 0) {
      sf.a(i, s) = sign;
      if (sign > 0) sf.unit_column[static_cast<std::size_t>(i)] = s;
    }
  }

  for (Index j = 0; j < n; ++j) {
    const VarMap& v = sf.vars[static_cast<std::size_t>(j)];
    const double cj = p.objective[j];
    switch (v.kind) {
      case VarKind::Shift:
        sf.c[v.column] += cj;
        sf.offset += cj * v.base;
        break;
      case VarKind::Mirror:
        sf.c[v.column] -= cj;
        sf.offset += cj * v.base;
        break;
      case VarKind::Split:
        sf.c[v.column] += cj;
        sf.c[v.column2] -= cj;
        break;
    }
  }
  return sf;
}

enum class StepResult { Optimal, Unbounded };

class Tableau {
 public:
  Tableau(const StandardForm& sf) : sf_(sf), rows_(sf.a.rows()), structural_(sf.a.cols()) {
    artificial_ = 0;
    for (Index u : sf.unit_column) {
      if (u < 0) ++artificial_;
    }
    t_ = RowMatrix::Zero(rows_ + 1, structural_ + artificial_ + 1);
    t_.topLeftCorner(rows_, structural_) = sf.a;
    t_.col(rhs()).head(rows_) = sf.b;
    basis_.resize(static_cast<std::size_t>(rows_));
    Index next_art = structural_;
    for (Index i = 0; i < rows_; ++i) {
      const Index u = sf.unit_column[static_cast<std::size_t>(i)];
      if (u >= 0) {
        basis_[static_cast<std::size_t>(i)] = u;
      } else {
        t_(i, next_art) = 1.0;
        basis_[static_cast<std::size_t>(i)] = next_art++;
      }
    }
    iteration_limit_ = 50 * (rows_ + structural_ + artificial_) + 1000;
  }

  Index rows() const { return rows_; }
  Index structural() const { return structural_; }
  Index artificial() const { return artificial_; }
  Index rhs() const { return structural_ + artificial_; }
  const std::vector<Index>& basis() const { return basis_; }
  double value(Index i) const { return t_(i, rhs()); }
  double objective() const { return -t_(rows_, rhs()); }
  bool is_artificial(Index col) const { return col >= structural_ && col < rhs(); }

  void set_costs(const Eigen::VectorXd& cost) {
    cost_ = cost;
    t_.row(rows_).setZero();
    t_.row(rows_).head(cost.size()) = cost.transpose();
    for (Index i = 0; i < rows_; ++i) {
      const double cb = cost[basis_[static_cast<std::size_t>(i)]];
      if (cb != 0.0) t_.row(rows_) -= cb * t_.row(i);
    }
  }

  StepResult run(Index allowed_columns) {
    int degenerate = 0;
    bool bland = false;
    for (Index iter = 0; iter < iteration_limit_; ++iter) {
      Index enter = -1;
      double best = -kCostTolerance;
      for (Index j = 0; j < allowed_columns; ++j) {
        const double d = t_(rows_, j);
        if (bland) {
          if (d < -kCostTolerance) {
            enter = j;
            break;
          }
        } else if (d < best) {
          best = d;
          enter = j;
        }
      }
      if (enter < 0) return StepResult::Optimal;

      Index leave = -1;
      double best_ratio = 0;
      for (Index i = 0; i < rows_; ++i) {
        const double a = t_(i, enter);
        if (a <= kPivotTolerance) continue;
        const double ratio = std::max(t_(i, rhs()), 0.0) / a;
        const bool tie = leave >= 0 && ratio <= best_ratio + kTieTolerance;
        const bool wins_tie = bland ? basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)]
                                    : a > t_(leave, enter);
        if (leave < 0 || ratio < best_ratio - kTieTolerance || (tie && wins_tie)) {
          leave = i;
          best_ratio = ratio;
        }
      }
      if (leave < 0) return StepResult::Unbounded;
      if (best_ratio <= kTieTolerance) {
        if (++degenerate > kDegenerateLimit) bland = true;
      } else {
        degenerate = 0;
      }
      pivot(leave, enter);
    }
    throw NumericalFailure("simplex iteration limit reached");
  }

  // Rebuilds the constraint rows as B^-1 [A | I_art | b] from the original
  // matrix and reprices, discarding the error accumulated by pivoting.
  // Returns false (and leaves the tableau alone) when B is numerically singular.
  bool reinvert() {
    if (rows_ == 0) return true;
    RowMatrix original = RowMatrix::Zero(rows_, rhs() + 1);
    original.leftCols(structural_) = sf_.a;
    original.col(rhs()) = sf_.b;
    Index art = structural_;
    for (Index i = 0; i < rows_; ++i) {
      if (sf_.unit_column[static_cast<std::size_t>(i)] < 0) original(i, art++) = 1.0;
    }
    Eigen::MatrixXd basis_matrix(rows_, rows_);
    for (Index k = 0; k < rows_; ++k) basis_matrix.col(k) = original.col(basis_[static_cast<std::size_t>(k)]);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(basis_matrix);
    if (!lu.isInvertible()) return false;
    Eigen::MatrixXd rebuilt = lu.solve(Eigen::MatrixXd(original));
    if (!rebuilt.allFinite()) return false;
    for (Index k = 0; k < rows_; ++k) {
      rebuilt.col(basis_[static_cast<std::size_t>(k)]).setZero();
      rebuilt(k, basis_[static_cast<std::size_t>(k)]) = 1.0;
    }
    t_.topRows(rows_) = rebuilt;
    set_costs(cost_);
    return true;
  }

  // Runs the simplex, then reinverts and resumes until the rebuilt tableau is
  // still optimal (a few rounds at most).
  StepResult run_refined(Index allowed_columns) {
    for (int round = 0; round < kRefineRounds; ++round) {
      const StepResult step = run(allowed_columns);
      if (!reinvert()) return step;
      if (step == StepResult::Unbounded) {
        if (unbounded_ray(allowed_columns)) return StepResult::Unbounded;
        continue;
      }
      bool priced_out = true;
      for (Index j = 0; j < allowed_columns && priced_out; ++j) priced_out = t_(rows_, j) >= -kCostTolerance;
      if (priced_out) return StepResult::Optimal;
    }
    return run(allowed_columns);
  }

  // True when some improving column has no positive entry in the current tableau.
  bool unbounded_ray(Index allowed_columns) const {
    for (Index j = 0; j < allowed_columns; ++j) {
      if (t_(rows_, j) >= -kCostTolerance) continue;
      if (t_.col(j).head(rows_).maxCoeff() <= kPivotTolerance) return true;
    }
    return false;
  }

  // Pivots remaining artificials out of the basis where a structural column allows it.
  void expel_artificials() {
    for (Index i = 0; i < rows_; ++i) {
      if (!is_artificial(basis_[static_cast<std::size_t>(i)])) continue;
      Index best = -1;
      double mag = kPivotTolerance;
      for (Index j = 0; j < structural_; ++j) {
        if (std::abs(t_(i, j)) > mag) {
          mag = std::abs(t_(i, j));
          best = j;
        }
      }
      if (best >= 0) pivot(i, best);
    }
  }

 private:
  void pivot(Index r, Index q) {
    t_.row(r) /= t_(r, q);
    for (Index i = 0; i <= rows_; ++i) {
      if (i == r) continue;
      const double f = t_(i, q);
      if (f != 0.0) t_.row(i) -= f * t_.row(r);
    }
    basis_[static_cast<std::size_t>(r)] = q;
  }

  const StandardForm& sf_;
  Index rows_;
  Index structural_;
  Index artificial_;
  RowMatrix t_;
  std::vector<Index> basis_;
  Eigen::VectorXd cost_;
  Index iteration_limit_;
};

// Basic values recomputed from the original (scaled) matrix; falls back to
// the tableau values when the basis matrix is numerically singular.
Eigen::VectorXd extract_solution(const StandardForm& sf, const Tableau& tab) {
  const Index rows = tab.rows();
  const Index total = tab.structural() + tab.artificial();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(total);
  for (Index i = 0; i < rows; ++i) y[tab.basis()[static_cast<std::size_t>(i)]] = tab.value(i);

  if (rows > 0) {
    Eigen::MatrixXd basis_matrix = Eigen::MatrixXd::Zero(rows, rows);
    Index art = tab.structural();
    std::vector<Index> art_row(static_cast<std::size_t>(tab.artificial()), -1);
    for (Index i = 0; i < rows; ++i) {
      if (sf.unit_column[static_cast<std::size_t>(i)] < 0) art_row[static_cast<std::size_t>(art++ - tab.structural())] = i;
    }
    for (Index k = 0; k < rows; ++k) {
      const Index col = tab.basis()[static_cast<std::size_t>(k)];
      if (col < tab.structural()) {
        basis_matrix.col(k) = sf.a.col(col);
      } else {
        basis_matrix(art_row[static_cast<std::size_t>(col - tab.structural())], k) = 1.0;
      }
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(basis_matrix);
    if (lu.isInvertible()) {
      const Eigen::VectorXd refined = lu.solve(sf.b);
      const double scale = std::max(1.0, refined.lpNorm<Eigen::Infinity>());
      if (refined.allFinite() && refined.minCoeff() >= -1e-9 * scale) {
        for (Index k = 0; k < rows; ++k) y[tab.basis()[static_cast<std::size_t>(k)]] = refined[k];
      }
    }
  }
  return y.cwiseMax(0.0);
}

Eigen::VectorXd map_back(const LinearProgram& p, const StandardForm& sf, const Eigen::VectorXd& y) {
  Eigen::VectorXd x(p.variable_count());
  for (Index j = 0; j < p.variable_count(); ++j) {
    const VarMap& v = sf.vars[static_cast<std::size_t>(j)];
    switch (v.kind) {
      case VarKind::Shift:
        x[j] = v.base + y[v.column];
        break;
      case VarKind::Mirror:
        x[j] = v.base - y[v.column];
        break;
      case VarKind::Split:
        x[j] = y[v.column] - y[v.column2];
        break;
    }
  }
  return x;
}

double row_scale(const Eigen::MatrixXd& a, Index i, const Eigen::VectorXd& x, double rhs) {
  const double terms = a.cols() > 0 ? (a.row(i).transpose().cwiseProduct(x)).cwiseAbs().maxCoeff() : 0.0;
  return std::max({1.0, std::abs(rhs), terms});
}

void check_feasibility(const LinearProgram& p, Eigen::VectorXd& x) {
  for (Index j = 0; j < x.size(); ++j) {
    const double lo = p.lower[j];
    const double hi = p.upper[j];
    if (x[j] < lo) {
      if (lo - x[j] > kFeasibilityTolerance * std::max(1.0, std::abs(lo))) {
        throw NumericalFailure("variable " + std::to_string(j) + " below its lower bound");
      }
      x[j] = lo;
    }
    if (x[j] > hi) {
      if (x[j] - hi > kFeasibilityTolerance * std::max(1.0, std::abs(hi))) {
        throw NumericalFailure("variable " + std::to_string(j) + " above its upper bound");
      }
      x[j] = hi;
    }
  }
  for (Index i = 0; i < p.eq_matrix.rows(); ++i) {
    const double r = p.eq_matrix.row(i).dot(x) - p.eq_rhs[i];
    if (std::abs(r) > kFeasibilityTolerance * row_scale(p.eq_matrix, i, x, p.eq_rhs[i])) {
      throw NumericalFailure("equality row " + std::to_string(i) + " residual " + std::to_string(r));
    }
  }
  for (Index i = 0; i < p.le_matrix.rows(); ++i) {
    const double r = p.le_matrix.row(i).dot(x) - p.le_rhs[i];
    if (r > kFeasibilityTolerance * row_scale(p.le_matrix, i, x, p.le_rhs[i])) {
      throw NumericalFailure("inequality row " + std::to_string(i) + " violated by " + std::to_string(r));
    }
  }
}

}  // namespace

LinearProgram::LinearProgram(Eigen::Index variables)
    : objective(Eigen::VectorXd::Zero(variables)),
      eq_matrix(0, variables),
      eq_rhs(0),
      le_matrix(0, variables),
      le_rhs(0),
      lower(Eigen::VectorXd::Zero(variables)),
      upper(Eigen::VectorXd::Constant(variables, kInfinity)) {}

void LinearProgram::validate() const {
  const Index n = objective.size();
  if (eq_matrix.cols() != n || le_matrix.cols() != n || lower.size() != n || upper.size() != n) {
    throw std::invalid_argument("linear program: column counts disagree");
  }
  if (eq_matrix.rows() != eq_rhs.size() || le_matrix.rows() != le_rhs.size()) {
    throw std::invalid_argument("linear program: row counts disagree");
  }
  for (Index j = 0; j < n; ++j) {
    if (lower[j] > upper[j]) throw std::invalid_argument("linear program: lower bound above upper bound");
    if (lower[j] == kInfinity || upper[j] == -kInfinity) {
      throw std::invalid_argument("linear program: empty variable domain");
    }
  }
  if (!objective.allFinite() || !eq_matrix.allFinite() || !eq_rhs.allFinite() || !le_matrix.allFinite() ||
      !le_rhs.allFinite()) {
    throw std::invalid_argument("linear program: non-finite data");
  }
}

LpOutcome solve(const LinearProgram& program) {
  program.validate();
  const StandardForm sf = to_standard_form(program);
  Tableau tab(sf);

  if (tab.artificial() > 0) {
    Eigen::VectorXd phase_one = Eigen::VectorXd::Zero(tab.structural() + tab.artificial());
    phase_one.tail(tab.artificial()).setOnes();
    tab.set_costs(phase_one);
    tab.run_refined(tab.structural() + tab.artificial());
    const double tolerance = kPhaseOneTolerance * std::max(1.0, sf.b.lpNorm<Eigen::Infinity>());
    if (tab.objective() > tolerance) return LpOutcome{LpStatus::Infeasible, {}, 0.0};
    tab.expel_artificials();
  }

  Eigen::VectorXd cost = Eigen::VectorXd::Zero(tab.structural() + tab.artificial());
  const double cost_scale = std::max(1.0, sf.c.lpNorm<Eigen::Infinity>());
  cost.head(tab.structural()) = sf.c / cost_scale;
  tab.set_costs(cost);
  if (tab.run_refined(tab.structural()) == StepResult::Unbounded) return LpOutcome{LpStatus::Unbounded, {}, 0.0};

  Eigen::VectorXd x = map_back(program, sf, extract_solution(sf, tab));
  check_feasibility(program, x);
  return LpOutcome{LpStatus::Optimal, x, program.objective.dot(x)};
}

double strict_epsilon(const Eigen::VectorXd& g) {
  return 1e-9 * std::max(1.0, g.size() > 0 ? g.lpNorm<Eigen::Infinity>() : 0.0);
}

HomogeneousCertificate strict_homogeneous_feasible(const Eigen::MatrixXd& m, const Eigen::VectorXd& g) {
  if (m.cols() != g.size()) throw std::invalid_argument("homogeneous system: M and g disagree in size");
  const Index n = g.size();
  HomogeneousCertificate cert;
  if (n == 0) return cert;

  // z >= 0 is a cone, so columns can be rescaled freely: solve for z' = s z
  // with every column of [M; g'] at unit magnitude, then map back.
  Eigen::VectorXd scale(n);
  for (Index j = 0; j < n; ++j) {
    const double mag = std::max(m.rows() > 0 ? m.col(j).lpNorm<Eigen::Infinity>() : 0.0, std::abs(g[j]));
    scale[j] = mag > 0.0 ? mag : 1.0;
  }
  LinearProgram lp(n);
  lp.objective = g.cwiseQuotient(scale);
  lp.eq_matrix = m * scale.cwiseInverse().asDiagonal();
  lp.eq_rhs = Eigen::VectorXd::Zero(m.rows());
  lp.le_matrix = Eigen::MatrixXd::Ones(1, n);
  lp.le_rhs = Eigen::VectorXd::Ones(1);

  const LpOutcome out = solve(lp);
  if (out.status != LpStatus::Optimal) {
    throw NumericalFailure("normalized homogeneous system reported a non-optimal status");
  }
  cert.value = out.objective_value;
  if (out.objective_value >= -strict_epsilon(lp.objective)) return cert;

  Eigen::VectorXd z = out.solution.cwiseMax(0.0).cwiseQuotient(scale);
  const double mass = z.sum();
  if (!(mass > 0.0)) throw NumericalFailure("homogeneous witness vanished after unscaling");
  z /= mass;
  const double m_scale = std::max(1.0, m.rows() > 0 ? m.lpNorm<Eigen::Infinity>() : 0.0);
  const double residual = m.rows() > 0 ? (m * z).lpNorm<Eigen::Infinity>() : 0.0;
  const double gz = g.dot(z);
  if (!(residual <= kWitnessTolerance * m_scale) || !(gz < 0.0)) {
    throw NumericalFailure("homogeneous witness failed re-verification (residual " + std::to_string(residual) +
                           ", g'z " + std::to_string(gz) + ")");
  }
  cert.feasible = true;
  cert.witness = std::move(z);
  cert.value = gz;
  return cert;
}

}  // namespace gridcert::lp
