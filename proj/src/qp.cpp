#include "wsvm/qp.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace wsvm::qp {
namespace {

constexpr double kSigma = 1e-6;       // proximal regularization of the x-step
constexpr double kRelaxation = 1.6;   // over-relaxation factor
constexpr double kRhoEqFactor = 1e3;  // stiffer penalty on equality rows
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr int kCheckInterval = 25;
constexpr int kRhoUpdateInterval = 100;
constexpr int kScalingIterations = 10;
constexpr double kInfeasEps = 1e-6;
constexpr double kPolishDelta = 1e-9;

double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

bool is_diagonal(const SparseMatrix& m) {
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it)
      if (it.row() != it.col() && it.value() != 0.0) return false;
  return true;
}

// Row classification: a singleton row constrains a single coordinate and can
// be folded into the diagonal of the x-step system.
struct RowStructure {
  std::vector<int> singleton_col;   // per row, column index or -1
  std::vector<double> singleton_coef;
  std::vector<int> general_rows;
};

RowStructure analyze_rows(const SparseMatrix& a) {
  RowStructure s;
  const int rows = static_cast<int>(a.rows());
  s.singleton_col.assign(rows, -1);
  s.singleton_coef.assign(rows, 0.0);
  std::vector<int> count(rows, 0);
  for (int k = 0; k < a.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
      if (it.value() == 0.0) continue;
      const int r = static_cast<int>(it.row());
      if (++count[r] == 1) {
        s.singleton_col[r] = static_cast<int>(it.col());
        s.singleton_coef[r] = it.value();
      } else {
        s.singleton_col[r] = -1;
      }
    }
  for (int r = 0; r < rows; ++r)
    if (s.singleton_col[r] < 0 && count[r] > 0) s.general_rows.push_back(r);
  // rows with no nonzero at all count as singletons on nothing; treat as general
  for (int r = 0; r < rows; ++r)
    if (count[r] == 0) s.general_rows.push_back(r);
  std::sort(s.general_rows.begin(), s.general_rows.end());
  return s;
}

class KktBackend {
 public:
  virtual ~KktBackend() = default;
  virtual void factorize(const Vector& rho_vec) = 0;
  virtual Vector apply_inverse(const Vector& rhs) const = 0;
};

// Direct path: K = Q + sigma*I + A' R A factored dense.
class DenseBackend final : public KktBackend {
 public:
  DenseBackend(const SparseMatrix& q, const SparseMatrix& a) : q_(q), a_(a) {}

  void factorize(const Vector& rho_vec) override {
    Matrix k = Matrix(q_);
    k.diagonal().array() += kSigma;
    if (a_.rows() > 0) {
      SparseMatrix at = a_.transpose();
      SparseMatrix ara = at * rho_vec.asDiagonal() * a_;
      k += Matrix(ara);
    }
    ldlt_.compute(k);
  }

  Vector apply_inverse(const Vector& rhs) const override { return ldlt_.solve(rhs); }

 private:
  const SparseMatrix& q_;
  const SparseMatrix& a_;
  Eigen::LDLT<Matrix> ldlt_;
};

// Diagonal-plus-low-rank path for diagonal curvature: singleton rows fold
// into the diagonal and the remaining g general rows enter through a g x g
// Schur complement (g << N for the large hinge-constrained programs).
class WoodburyBackend final : public KktBackend {
 public:
  WoodburyBackend(const SparseMatrix& q, const SparseMatrix& a, const RowStructure& rows)
      : rows_(rows) {
    const int n = static_cast<int>(q.cols());
    q_diag_ = Vector::Zero(n);
    for (int k = 0; k < q.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(q, k); it; ++it)
        if (it.row() == it.col()) q_diag_[it.row()] = it.value();
    const int g = static_cast<int>(rows_.general_rows.size());
    g_mat_.resize(g, n);
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<int> row_to_slot(a.rows(), -1);
    for (int i = 0; i < g; ++i) row_to_slot[rows_.general_rows[i]] = i;
    for (int k = 0; k < a.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
        const int slot = row_to_slot[it.row()];
        if (slot >= 0) trips.emplace_back(slot, static_cast<int>(it.col()), it.value());
      }
    g_mat_.setFromTriplets(trips.begin(), trips.end());
    g_mat_t_ = g_mat_.transpose();
    singleton_rows_.reserve(a.rows() - g);
    for (int r = 0; r < static_cast<int>(a.rows()); ++r)
      if (rows_.singleton_col[r] >= 0) singleton_rows_.push_back(r);
  }

  void factorize(const Vector& rho_vec) override {
    inv_diag_ = q_diag_;
    inv_diag_.array() += kSigma;
    for (int r : singleton_rows_) {
      const double coef = rows_.singleton_coef[r];
      inv_diag_[rows_.singleton_col[r]] += rho_vec[r] * coef * coef;
    }
    inv_diag_ = inv_diag_.cwiseInverse();
    const int g = static_cast<int>(rows_.general_rows.size());
    Matrix schur = Matrix(g_mat_ * inv_diag_.asDiagonal() * g_mat_t_);
    for (int i = 0; i < g; ++i) schur(i, i) += 1.0 / rho_vec[rows_.general_rows[i]];
    llt_.compute(schur);
  }

  Vector apply_inverse(const Vector& rhs) const override {
    Vector t = inv_diag_.cwiseProduct(rhs);
    if (rows_.general_rows.empty()) return t;
    Vector s = llt_.solve(g_mat_ * t);
    return t - inv_diag_.cwiseProduct(g_mat_t_ * s);
  }

 private:
  RowStructure rows_;
  Vector q_diag_;
  SparseMatrix g_mat_, g_mat_t_;
  std::vector<int> singleton_rows_;
  Vector inv_diag_;
  Eigen::LLT<Matrix> llt_;
};

struct ScaledProblem {
  SparseMatrix q, a, at;
  Vector c, l, u;
  Vector d_scale, e_scale;  // x = d_scale .* x_hat, y = e_scale .* y_hat / cost_scale
  double cost_scale = 1.0;
};

ScaledProblem scale_problem(const ConicProgram& p) {
  ScaledProblem s;
  s.q = p.curvature;
  s.a = p.constraints;
  s.c = p.linear_cost;
  s.l = p.lower;
  s.u = p.upper;
  const int n = static_cast<int>(p.num_variables());
  const int m = static_cast<int>(p.num_constraints());
  s.d_scale = Vector::Ones(n);
  s.e_scale = Vector::Ones(m);
  s.cost_scale = 1.0;

  for (int pass = 0; pass < kScalingIterations; ++pass) {
    Vector col_norm = Vector::Zero(n);
    Vector row_norm = Vector::Zero(m);
    for (int k = 0; k < s.q.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(s.q, k); it; ++it)
        col_norm[it.col()] = std::max(col_norm[it.col()], std::abs(it.value()));
    for (int k = 0; k < s.a.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(s.a, k); it; ++it) {
        col_norm[it.col()] = std::max(col_norm[it.col()], std::abs(it.value()));
        row_norm[it.row()] = std::max(row_norm[it.row()], std::abs(it.value()));
      }
    Vector d(n), e(m);
    for (int j = 0; j < n; ++j)
      d[j] = col_norm[j] < 1e-12 ? 1.0 : std::clamp(1.0 / std::sqrt(col_norm[j]), 1e-4, 1e4);
    for (int i = 0; i < m; ++i)
      e[i] = row_norm[i] < 1e-12 ? 1.0 : std::clamp(1.0 / std::sqrt(row_norm[i]), 1e-4, 1e4);
    s.q = SparseMatrix(d.asDiagonal() * s.q * d.asDiagonal());
    s.c = d.cwiseProduct(s.c);
    if (m > 0) {
      s.a = SparseMatrix(e.asDiagonal() * s.a * d.asDiagonal());
      s.l = e.cwiseProduct(s.l);
      s.u = e.cwiseProduct(s.u);
    }
    s.d_scale = s.d_scale.cwiseProduct(d);
    s.e_scale = s.e_scale.cwiseProduct(e);

    // cost normalization
    Vector q_col = Vector::Zero(n);
    for (int k = 0; k < s.q.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(s.q, k); it; ++it)
        q_col[it.col()] = std::max(q_col[it.col()], std::abs(it.value()));
    const double denom = std::max(n > 0 ? q_col.mean() : 0.0, inf_norm(s.c));
    if (denom > 1e-12) {
      const double gamma = std::clamp(1.0 / denom, 1e-6, 1e6);
      s.q *= gamma;
      s.c *= gamma;
      s.cost_scale *= gamma;
    }
  }
  s.at = s.a.transpose();
  return s;
}

struct Unscaled {
  Vector x, y, z;
  double r_prim = 0.0, r_dual = 0.0;
  double norm_ax = 0.0, norm_z = 0.0, norm_qx = 0.0, norm_aty = 0.0, norm_c = 0.0;
};

Unscaled unscale_and_residuals(const ScaledProblem& s, const Vector& xh, const Vector& yh,
                               const Vector& zh) {
  Unscaled r;
  r.x = s.d_scale.cwiseProduct(xh);
  const int m = static_cast<int>(s.e_scale.size());
  if (m > 0) {
    r.y = s.e_scale.cwiseProduct(yh) / s.cost_scale;
    r.z = zh.cwiseQuotient(s.e_scale);
    Vector ax = (s.a * xh).cwiseQuotient(s.e_scale);
    r.norm_ax = inf_norm(ax);
    r.norm_z = inf_norm(r.z);
    r.r_prim = inf_norm(ax - r.z);
  }
  Vector qx = s.d_scale.cwiseInverse().cwiseProduct(Vector(s.q * xh)) / s.cost_scale;
  Vector aty = m > 0 ? Vector(s.d_scale.cwiseInverse().cwiseProduct(Vector(s.at * yh)) / s.cost_scale)
                     : Vector(Vector::Zero(xh.size()));
  Vector cu = s.d_scale.cwiseInverse().cwiseProduct(s.c) / s.cost_scale;
  r.norm_qx = inf_norm(qx);
  r.norm_aty = inf_norm(aty);
  r.norm_c = inf_norm(cu);
  r.r_dual = inf_norm(qx + cu + aty);
  return r;
}

bool primal_infeasibility_certificate(const ConicProgram& p, const Vector& dy) {
  const double norm = inf_norm(dy);
  if (norm < 1e-12) return false;
  Vector v = dy / norm;
  const double tol = kInfeasEps;
  double support = 0.0;
  for (int i = 0; i < v.size(); ++i) {
    if (v[i] > tol) {
      if (std::isinf(p.upper[i])) return false;
      support += p.upper[i] * v[i];
    } else if (v[i] < -tol) {
      if (std::isinf(p.lower[i])) return false;
      support += p.lower[i] * v[i];
    }
  }
  SparseMatrix at = p.constraints.transpose();
  if (inf_norm(Vector(at * v)) > tol) return false;
  return support < -tol;
}

bool dual_infeasibility_certificate(const ConicProgram& p, const Vector& dx) {
  const double norm = inf_norm(dx);
  if (norm < 1e-12) return false;
  Vector w = dx / norm;
  const double tol = kInfeasEps;
  if (inf_norm(Vector(p.curvature * w)) > tol) return false;
  if (p.linear_cost.dot(w) >= -tol) return false;
  if (p.num_constraints() > 0) {
    Vector aw = p.constraints * w;
    for (int i = 0; i < aw.size(); ++i) {
      if (std::isfinite(p.lower[i]) && aw[i] < -tol) return false;
      if (std::isfinite(p.upper[i]) && aw[i] > tol) return false;
    }
  }
  return true;
}

// Equality-constrained re-solve on the detected active set. Fixes variables
// pinned by active singleton rows, solves the reduced KKT system over the
// free variables and active general rows, and recovers the remaining duals
// from stationarity. Accepted only when it improves the KKT residuals and
// keeps dual signs consistent with the active bounds.
struct PolishOutcome {
  bool ok = false;
  Vector x, y;
  double r_prim = kInfinity, r_dual = kInfinity;
};

PolishOutcome try_polish(const ConicProgram& p, const RowStructure& rows, const Vector& x0,
                         const Vector& y0, const Vector& cx0, double y_tol) {
  PolishOutcome out;
  const int n = static_cast<int>(p.num_variables());
  const int m = static_cast<int>(p.num_constraints());

  // y_tol = infinity means "ignore the duals", classifying rows from bound
  // proximity alone; used when the dual iterate is unreliable.
  const bool use_duals = std::isfinite(y_tol);
  std::vector<int> side(m, 0);  // -1 lower, +1 upper, 0 inactive
  for (int i = 0; i < m; ++i) {
    if (p.lower[i] == p.upper[i]) {
      side[i] = -1;
    } else if (use_duals && y0[i] < -y_tol && std::isfinite(p.lower[i])) {
      side[i] = -1;
    } else if (use_duals && y0[i] > y_tol && std::isfinite(p.upper[i])) {
      side[i] = +1;
    } else if (std::isfinite(p.lower[i]) &&
               cx0[i] - p.lower[i] < 1e-7 * (1.0 + std::abs(p.lower[i]))) {
      side[i] = -1;
    } else if (std::isfinite(p.upper[i]) &&
               p.upper[i] - cx0[i] < 1e-7 * (1.0 + std::abs(p.upper[i]))) {
      side[i] = +1;
    }
  }

  // Equality-constrained re-solve on the guessed active set, releasing rows
  // whose multiplier sign contradicts the bound they push against. A few
  // release rounds recover from weakly-active rows swept up by the guess.
  Vector xp, yp;
  bool consistent = false;
  for (int round = 0; round < 4 && !consistent; ++round) {
    std::vector<double> fixed_value(n, 0.0);
    std::vector<int> fixed_by(n, -1);
    std::vector<int> active_general;
    for (int i = 0; i < m; ++i) {
      if (side[i] == 0) continue;
      const double bound = side[i] < 0 ? p.lower[i] : p.upper[i];
      const int col = rows.singleton_col[i];
      if (col >= 0) {
        const double value = bound / rows.singleton_coef[i];
        if (fixed_by[col] >= 0) {
          if (std::abs(fixed_value[col] - value) > 1e-9 * (1.0 + std::abs(value))) return out;
          side[i] = 0;  // duplicate pin, fold dual into the first row
          continue;
        }
        fixed_by[col] = i;
        fixed_value[col] = value;
      } else {
        active_general.push_back(i);
      }
    }

    std::vector<int> free_vars;
    free_vars.reserve(n);
    std::vector<int> free_slot(n, -1);
    for (int j = 0; j < n; ++j)
      if (fixed_by[j] < 0) {
        free_slot[j] = static_cast<int>(free_vars.size());
        free_vars.push_back(j);
      }
    const int nf = static_cast<int>(free_vars.size());
    const int ng = static_cast<int>(active_general.size());
    if (nf + ng > 2000) return out;

    xp = Vector::Zero(n);
    for (int j = 0; j < n; ++j)
      if (fixed_by[j] >= 0) xp[j] = fixed_value[j];

    std::vector<int> general_slot(m, -1);
    for (int g = 0; g < ng; ++g) general_slot[active_general[g]] = g;

    Matrix kkt = Matrix::Zero(nf + ng, nf + ng);
    Vector rhs(nf + ng);
    // K_ff block and the fixed-variable contribution to the gradient
    Vector q_xfix = p.curvature * xp;
    for (int k = 0; k < p.curvature.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(p.curvature, k); it; ++it) {
        const int ra = free_slot[it.row()], ca = free_slot[it.col()];
        if (ra >= 0 && ca >= 0) kkt(ra, ca) += it.value();
      }
    for (int a = 0; a < nf; ++a)
      rhs[a] = -(p.linear_cost[free_vars[a]] + q_xfix[free_vars[a]]);
    Vector g_xfix = Vector::Zero(ng);
    for (int k = 0; k < p.constraints.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(p.constraints, k); it; ++it) {
        const int g = general_slot[it.row()];
        if (g < 0) continue;
        const int a = free_slot[it.col()];
        if (a >= 0) {
          kkt(a, nf + g) = it.value();
          kkt(nf + g, a) = it.value();
        } else {
          g_xfix[g] += it.value() * xp[it.col()];
        }
      }
    for (int g = 0; g < ng; ++g) {
      const int row = active_general[g];
      rhs[nf + g] = (side[row] < 0 ? p.lower[row] : p.upper[row]) - g_xfix[g];
    }

    // regularized factorization, refined against the unregularized system;
    // the reduced KKT can be singular on a degenerate face, so keep the best
    // iterate by true residual instead of refining blindly
    Vector sol = Vector::Zero(nf + ng);
    if (nf + ng > 0) {
      Matrix kkt_reg = kkt;
      for (int a = 0; a < nf; ++a) kkt_reg(a, a) += kPolishDelta;
      for (int g = 0; g < ng; ++g) kkt_reg(nf + g, nf + g) -= kPolishDelta;
      Eigen::PartialPivLU<Matrix> lu(kkt_reg);
      sol = lu.solve(rhs);
      if (!sol.allFinite()) return out;
      double best_res = (rhs - kkt * sol).cwiseAbs().maxCoeff();
      Vector best_sol = sol;
      for (int pass = 0; pass < 3; ++pass) {
        sol += lu.solve(rhs - kkt * sol);
        if (!sol.allFinite()) break;
        const double res = (rhs - kkt * sol).cwiseAbs().maxCoeff();
        if (res < best_res) {
          best_res = res;
          best_sol = sol;
        } else {
          break;
        }
      }
      sol = best_sol;
    }

    for (int a = 0; a < nf; ++a) xp[free_vars[a]] = sol[a];
    yp = Vector::Zero(m);
    for (int g = 0; g < ng; ++g) yp[active_general[g]] = sol[nf + g];

    // duals of the pinning singleton rows from stationarity
    Vector grad = Vector(p.curvature * xp) + p.linear_cost;
    if (m > 0) grad += Vector(p.constraints.transpose() * yp);
    for (int j = 0; j < n; ++j) {
      const int row = fixed_by[j];
      if (row >= 0) yp[row] = -grad[j] / rows.singleton_coef[row];
    }

    // release rows whose dual sign contradicts the bound they claim
    consistent = true;
    for (int i = 0; i < m; ++i) {
      if (side[i] == 0 || p.lower[i] == p.upper[i]) continue;
      if ((side[i] < 0 && yp[i] > 1e-7) || (side[i] > 0 && yp[i] < -1e-7)) {
        side[i] = 0;
        consistent = false;
      }
    }
  }
  if (!consistent) return out;

  // remaining duals must push against a bound the point actually touches
  Vector cxp = m > 0 ? Vector(p.constraints * xp) : Vector();
  for (int i = 0; i < m; ++i) {
    if (p.lower[i] == p.upper[i]) continue;
    const double scale =
        1.0 + std::max(std::abs(p.lower[i]), 0.0) + std::max(std::abs(p.upper[i]), 0.0);
    if (yp[i] > 1e-7) {
      if (std::isinf(p.upper[i]) || std::abs(cxp[i] - p.upper[i]) > 1e-5 * scale) return out;
    } else if (yp[i] < -1e-7) {
      if (std::isinf(p.lower[i]) || std::abs(cxp[i] - p.lower[i]) > 1e-5 * scale) return out;
    }
  }

  auto [rp, rd] = kkt_residuals(p, xp, yp);
  out.ok = true;
  out.x = std::move(xp);
  out.y = std::move(yp);
  out.r_prim = rp;
  out.r_dual = rd;
  return out;
}

}  // namespace

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Solved: return "Solved";
    case SolveStatus::MaxIterations: return "MaxIterations";
    case SolveStatus::PrimalInfeasible: return "PrimalInfeasible";
    case SolveStatus::DualInfeasible: return "DualInfeasible";
  }
  return "Unknown";
}

void ConicProgram::validate() const {
  const auto n = num_variables();
  const auto m = num_constraints();
  if (curvature.rows() != n || curvature.cols() != n)
    throw std::invalid_argument("curvature dimensions do not match the cost vector");
  if (constraints.rows() != m || (m > 0 && constraints.cols() != n))
    throw std::invalid_argument("constraint matrix dimensions do not match bounds");
  if (upper.size() != m) throw std::invalid_argument("lower/upper length mismatch");
  if (!linear_cost.allFinite()) throw std::invalid_argument("non-finite linear cost");
  for (int i = 0; i < m; ++i) {
    if (std::isnan(lower[i]) || std::isnan(upper[i]))
      throw std::invalid_argument("NaN constraint bound");
    if (lower[i] > upper[i]) throw std::invalid_argument("lower bound exceeds upper bound");
  }
  SparseMatrix diff = SparseMatrix(curvature.transpose()) - curvature;
  double asym = 0.0;
  for (int k = 0; k < diff.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(diff, k); it; ++it)
      asym = std::max(asym, std::abs(it.value()));
  if (asym > 1e-10) throw std::invalid_argument("curvature matrix is not symmetric");
}

void SolverSettings::validate() const {
  if (!(eps_abs > 0) || !(eps_rel > 0)) throw std::invalid_argument("tolerances must be positive");
  if (max_iterations <= 0) throw std::invalid_argument("max_iterations must be positive");
  if (!(step_scale > 0)) throw std::invalid_argument("step_scale must be positive");
}

std::pair<double, double> kkt_residuals(const ConicProgram& program, const Vector& solution,
                                        const Vector& duals) {
  if (solution.size() != program.num_variables() || duals.size() != program.num_constraints())
    throw std::invalid_argument("kkt_residuals: dimension mismatch");
  double r_prim = 0.0;
  if (program.num_constraints() > 0) {
    Vector cx = program.constraints * solution;
    for (int i = 0; i < cx.size(); ++i) {
      if (std::isfinite(program.lower[i])) r_prim = std::max(r_prim, program.lower[i] - cx[i]);
      if (std::isfinite(program.upper[i])) r_prim = std::max(r_prim, cx[i] - program.upper[i]);
    }
  }
  Vector stat = Vector(program.curvature * solution) + program.linear_cost;
  if (program.num_constraints() > 0) stat += Vector(program.constraints.transpose() * duals);
  return {r_prim, inf_norm(stat)};
}

SparseMatrix to_sparse(const Matrix& dense) {
  SparseMatrix s = dense.sparseView(0.0, 0.0);
  s.makeCompressed();
  return s;
}

SolverResult solve(const ConicProgram& program, const SolverSettings& settings) {
  program.validate();
  settings.validate();
  const int n = static_cast<int>(program.num_variables());
  const int m = static_cast<int>(program.num_constraints());
  if (settings.warm_x && settings.warm_x->size() != n)
    throw std::invalid_argument("warm_x size mismatch");
  if (settings.warm_y && settings.warm_y->size() != m)
    throw std::invalid_argument("warm_y size mismatch");

  ScaledProblem s = scale_problem(program);
  RowStructure rows = analyze_rows(program.constraints);       // for polish
  RowStructure scaled_rows = analyze_rows(s.a);                // for the x-step system

  const bool diag_q = is_diagonal(s.q);
  std::unique_ptr<KktBackend> kkt;
  if (diag_q && m > 0 && static_cast<int>(scaled_rows.general_rows.size()) * 2 <= n)
    kkt = std::make_unique<WoodburyBackend>(s.q, s.a, scaled_rows);
  else
    kkt = std::make_unique<DenseBackend>(s.q, s.a);

  double rho = std::clamp(settings.step_scale, kRhoMin, kRhoMax);
  Vector rho_vec(m);
  auto fill_rho = [&] {
    for (int i = 0; i < m; ++i)
      rho_vec[i] = std::clamp(program.lower[i] == program.upper[i] ? rho * kRhoEqFactor : rho,
                              kRhoMin, kRhoMax);
  };
  fill_rho();
  kkt->factorize(rho_vec);

  Vector x = settings.warm_x ? Vector(settings.warm_x->cwiseQuotient(s.d_scale)) : Vector(Vector::Zero(n));
  Vector y = Vector::Zero(m);
  if (settings.warm_y && m > 0)
    y = s.cost_scale * settings.warm_y->cwiseQuotient(s.e_scale);
  Vector z(m);
  if (m > 0) z = (s.a * x).cwiseMax(s.l).cwiseMin(s.u);

  SolverResult result;
  result.status = SolveStatus::MaxIterations;
  double best_score = kInfinity;
  Vector x_check_prev = x, y_check_prev = y;

  // Runs the active-set re-solve against the incumbent; returns true when
  // the result now satisfies the tolerances. A final pass with the dual
  // ignored covers iterates whose multipliers are stuck off-face.
  auto polish_rescue = [&](SolverResult& r) {
    if (r.solution.size() != n || !r.solution.allFinite()) return false;
    Vector cx = m > 0 ? Vector(program.constraints * r.solution) : Vector();
    const double y_scale = std::max(1.0, inf_norm(r.duals));
    PolishOutcome best;
    for (double y_tol : {1e-10 * y_scale, 1e-7 * y_scale, kInfinity}) {
      PolishOutcome p = try_polish(program, rows, r.solution, r.duals, cx, y_tol);
      if (p.ok && (!best.ok || std::max(p.r_prim, p.r_dual) < std::max(best.r_prim, best.r_dual)))
        best = std::move(p);
      if (best.ok && std::max(best.r_prim, best.r_dual) < 1e-12) break;
    }
    if (best.ok &&
        std::max(best.r_prim, best.r_dual) < std::max(r.primal_residual, r.dual_residual)) {
      r.solution = std::move(best.x);
      r.duals = std::move(best.y);
      r.primal_residual = best.r_prim;
      r.dual_residual = best.r_dual;
    }
    // tolerance thresholds at the polished point, in unscaled terms
    Vector ax = m > 0 ? Vector(program.constraints * r.solution) : Vector();
    Vector aty = m > 0 ? Vector(program.constraints.transpose() * r.duals)
                       : Vector(Vector::Zero(n));
    Vector qx = program.curvature * r.solution;
    const double eps_p = settings.eps_abs + settings.eps_rel * inf_norm(ax);
    const double eps_d =
        settings.eps_abs +
        settings.eps_rel * std::max({inf_norm(qx), inf_norm(aty), inf_norm(program.linear_cost)});
    return r.primal_residual <= eps_p && r.dual_residual <= eps_d;
  };

  int iter = 0;
  int stalled_checks = 0;
  double last_stall_score = kInfinity;
  bool converged = false;
  for (iter = 1; iter <= settings.max_iterations; ++iter) {
    Vector rhs = kSigma * x - s.c;
    if (m > 0) rhs += s.at * Vector(rho_vec.cwiseProduct(z) - y);
    Vector xt = kkt->apply_inverse(rhs);
    if (m > 0) {
      Vector zt = s.a * xt;
      x = kRelaxation * xt + (1.0 - kRelaxation) * x;
      Vector zr = kRelaxation * zt + (1.0 - kRelaxation) * z;
      Vector w = zr + y.cwiseQuotient(rho_vec);
      Vector z_new = w.cwiseMax(s.l).cwiseMin(s.u);
      y += rho_vec.cwiseProduct(zr - z_new);
      z = std::move(z_new);
    } else {
      x = kRelaxation * xt + (1.0 - kRelaxation) * x;
    }

    const bool checkpoint = (iter % kCheckInterval == 0) || iter == settings.max_iterations;
    if (!checkpoint) continue;

    Unscaled u = unscale_and_residuals(s, x, y, z);
    const double eps_prim = settings.eps_abs + settings.eps_rel * std::max(u.norm_ax, u.norm_z);
    const double eps_dual =
        settings.eps_abs + settings.eps_rel * std::max({u.norm_qx, u.norm_aty, u.norm_c});
    const double score = std::max(u.r_prim / eps_prim, u.r_dual / eps_dual);
    if (score < best_score) {
      best_score = score;
      result.solution = u.x;
      result.duals = u.y;
      result.primal_residual = u.r_prim;
      result.dual_residual = u.r_dual;
    }
    if (u.r_prim <= eps_prim && u.r_dual <= eps_dual) {
      converged = true;
      result.status = SolveStatus::Solved;
      result.solution = u.x;
      result.duals = u.y;
      result.primal_residual = u.r_prim;
      result.dual_residual = u.r_dual;
      break;
    }

    if (m > 0) {
      Vector dy = s.e_scale.cwiseProduct(y - y_check_prev) / s.cost_scale;
      if (primal_infeasibility_certificate(program, dy)) {
        result.status = SolveStatus::PrimalInfeasible;
        result.iterations = iter;
        result.solution = u.x;
        result.duals = u.y;
        return result;
      }
    }
    Vector dx = s.d_scale.cwiseProduct(x - x_check_prev);
    if (dual_infeasibility_certificate(program, dx)) {
      result.status = SolveStatus::DualInfeasible;
      result.iterations = iter;
      result.solution = u.x;
      result.duals = u.y;
      return result;
    }
    x_check_prev = x;
    y_check_prev = y;

    // degenerate faces can freeze progress; a polished incumbent often
    // already satisfies the tolerances
    if (score > 0.99 * last_stall_score) {
      if (++stalled_checks >= 8 && settings.polish) {
        stalled_checks = 0;
        SolverResult candidate = result;
        if (polish_rescue(candidate)) {
          candidate.status = SolveStatus::Solved;
          candidate.iterations = iter;
          return candidate;
        }
      }
    } else {
      stalled_checks = 0;
      last_stall_score = score;
    }

    if (m > 0 && iter % kRhoUpdateInterval == 0) {
      const double pr = u.r_prim / std::max({u.norm_ax, u.norm_z, 1e-12});
      const double dr = u.r_dual / std::max({u.norm_qx, u.norm_aty, u.norm_c, 1e-12});
      if (pr > 0 && dr > 0) {
        const double rho_new = std::clamp(rho * std::sqrt(pr / dr), kRhoMin, kRhoMax);
        if (rho_new > 5.0 * rho || rho_new < rho / 5.0) {
          rho = rho_new;
          fill_rho();
          kkt->factorize(rho_vec);
        }
      }
    }
  }
  result.iterations = std::min(iter, settings.max_iterations);

  if (settings.polish) {
    const bool meets = polish_rescue(result);
    if (!converged && meets) result.status = SolveStatus::Solved;
  }
  return result;
}

}  // namespace wsvm::qp
