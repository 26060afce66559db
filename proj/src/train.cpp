#include "wsvm/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace wsvm {
namespace {

constexpr double kKktSlackRel = 1e-6;       // KKT slack test, relative to n*lambda1
constexpr double kInteriorSvEps = 1e-4;     // minimum mass of interior multipliers for the
                                            // support-vector average intercept
constexpr Eigen::Index kMaxEnVariables = 1'000'000;

void check_pi_open(double pi) {
  if (!(pi > 0.0 && pi < 1.0)) throw std::invalid_argument("pi must lie strictly inside (0, 1)");
}

void check_positive(double v, const char* name) {
  if (!(v > 0.0)) throw std::invalid_argument(std::string(name) + " must be positive");
}

[[noreturn]] void throw_solver_failure(const char* where, double pi, double lambda1,
                                       double lambda2, const qp::SolverResult& result) {
  std::ostringstream msg;
  msg << where << " failed: status=" << qp::to_string(result.status)
      << " after " << result.iterations << " iterations (pi=" << pi << ", lambda1=" << lambda1;
  if (lambda2 > 0) msg << ", lambda2=" << lambda2;
  msg << ", primal_residual=" << result.primal_residual
      << ", dual_residual=" << result.dual_residual << ")";
  throw std::runtime_error(msg.str());
}

Vector zero_small(Vector beta, double p_beta) {
  for (int j = 0; j < beta.size(); ++j)
    if (std::abs(beta[j]) < p_beta) beta[j] = 0.0;
  return beta;
}

// One solve attempt per step scale; badly scaled corners of the tuning grid
// sometimes need a different splitting penalty to converge.
qp::SolverResult solve_robust(const qp::ConicProgram& program,
                              const qp::SolverSettings& settings) {
  qp::SolverResult best = qp::solve(program, settings);
  if (best.status == qp::SolveStatus::Solved) return best;
  for (double scale : {1e-2, 1e2}) {
    qp::SolverSettings retry = settings;
    retry.step_scale = scale;
    retry.warm_x.reset();
    retry.warm_y.reset();
    qp::SolverResult r = qp::solve(program, retry);
    if (r.status == qp::SolveStatus::Solved) return r;
    if (r.status == qp::SolveStatus::MaxIterations &&
        std::max(r.primal_residual, r.dual_residual) <
            std::max(best.primal_residual, best.dual_residual))
      best = std::move(r);
  }
  return best;
}

// A stalled iterate whose constraint violation is negligible still carries
// the unique coefficient block (the curvature is strict there); only the
// duals are untrustworthy.
bool primal_acceptable(const qp::ConicProgram& program, const qp::SolverResult& result) {
  if (result.status != qp::SolveStatus::MaxIterations || !result.solution.allFinite())
    return false;
  double scale = 0.0;
  if (program.num_constraints() > 0) {
    Vector cx = program.constraints * result.solution;
    scale = cx.cwiseAbs().maxCoeff();
  }
  return result.primal_residual <= 1e-5 * (1.0 + scale);
}

}  // namespace

void Dataset::validate(bool require_both_classes) const {
  if (labels.size() != features.rows())
    throw std::invalid_argument("label count does not match sample count");
  if (!features.allFinite()) throw std::invalid_argument("non-finite feature value");
  bool has_pos = false, has_neg = false;
  for (int i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1.0)
      has_pos = true;
    else if (labels[i] == -1.0)
      has_neg = true;
    else
      throw std::invalid_argument("labels must be exactly -1 or +1");
  }
  if (require_both_classes && !(has_pos && has_neg))
    throw std::invalid_argument("training requires samples from both classes");
}

Dataset Dataset::select_columns(const std::vector<int>& columns) const {
  Dataset out;
  out.labels = labels;
  out.features.resize(features.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) out.features.col(k) = features.col(columns[k]);
  return out;
}

Dataset Dataset::select_rows(const std::vector<int>& rows) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.features.row(k) = features.row(rows[k]);
    out.labels[k] = labels[rows[k]];
  }
  return out;
}

Vector build_weights(const Vector& labels, double pi) {
  if (!(pi >= 0.0 && pi <= 1.0)) throw std::invalid_argument("pi must lie in [0, 1]");
  Vector w(labels.size());
  for (int i = 0; i < labels.size(); ++i) w[i] = labels[i] < 0 ? pi : 1.0 - pi;
  return w;
}

namespace detail {

double hinge_at_intercept(const Vector& labels, const Vector& weights, const Vector& margins,
                          double b0) {
  double acc = 0.0;
  for (int i = 0; i < labels.size(); ++i)
    acc += weights[i] * std::max(0.0, 1.0 - labels[i] * (b0 + margins[i]));
  return acc;
}

// The exact one-dimensional minimizer is always an optimal intercept for
// the fitted coefficients; candidates recovered from multipliers keep
// priority only while they are not measurably worse.
double guard_intercept(const Vector& labels, const Vector& weights, const Vector& margins,
                       double candidate) {
  const double exact = minimize_intercept(labels, weights, margins);
  const double at_candidate = hinge_at_intercept(labels, weights, margins, candidate);
  const double at_exact = hinge_at_intercept(labels, weights, margins, exact);
  return at_candidate <= at_exact + 1e-9 * (1.0 + at_exact) ? candidate : exact;
}

double minimize_intercept(const Vector& labels, const Vector& weights, const Vector& margins) {
  const int n = static_cast<int>(labels.size());
  double pos_weight = 0.0, neg_weight = 0.0;
  for (int i = 0; i < n; ++i) (labels[i] > 0 ? pos_weight : neg_weight) += weights[i];
  if (pos_weight <= 0.0 || neg_weight <= 0.0)
    throw std::invalid_argument("intercept minimization needs weight in both classes");

  // term i is w_i * max(0, 1 - y_i b0 - y_i margins_i); its breakpoint in b0
  // sits at y_i (1 - y_i margins_i) and crossing it adds slope w_i.
  std::vector<std::pair<double, double>> breaks(n);
  for (int i = 0; i < n; ++i)
    breaks[i] = {labels[i] * (1.0 - labels[i] * margins[i]), weights[i]};
  std::sort(breaks.begin(), breaks.end());

  double slope = -pos_weight;
  for (int i = 0; i < n; ++i) {
    const double next = slope + breaks[i].second;
    if (next > 0.0) {
      if (slope < 0.0) return breaks[i].first;
      // slope was exactly 0: flat segment ending here
      return i > 0 ? 0.5 * (breaks[i - 1].first + breaks[i].first) : breaks[i].first;
    }
    slope = next;
  }
  return breaks.back().first;
}

L2Fit fit_l2(const Dataset& data, double pi, double lambda, const qp::SolverSettings& settings) {
  data.validate(true);
  check_pi_open(pi);
  check_positive(lambda, "lambda");
  const int n = static_cast<int>(data.size());
  const Vector& y = data.labels;
  Vector box = build_weights(y, pi) / static_cast<double>(n);

  Matrix gram = data.features * data.features.transpose();
  Matrix q(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) q(i, j) = y[i] * y[j] * gram(i, j) / (2.0 * lambda);

  qp::ConicProgram program;
  program.curvature = qp::to_sparse(q);
  program.linear_cost = Vector::Constant(n, -1.0);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * n);
  for (int i = 0; i < n; ++i) trips.emplace_back(0, i, y[i]);
  for (int i = 0; i < n; ++i) trips.emplace_back(1 + i, i, 1.0);
  qp::SparseMatrix constraints(n + 1, n);
  constraints.setFromTriplets(trips.begin(), trips.end());
  program.constraints = std::move(constraints);
  program.lower = Vector::Zero(n + 1);
  program.upper = Vector::Zero(n + 1);
  program.upper.tail(n) = box;

  qp::SolverResult result = solve_robust(program, settings);
  if (result.status != qp::SolveStatus::Solved && !primal_acceptable(program, result))
    throw_solver_failure("L2 fit", pi, lambda, 0.0, result);

  Vector alpha = result.solution.cwiseMax(0.0).cwiseMin(box);
  Vector beta = data.features.transpose() * Vector(y.cwiseProduct(alpha)) / (2.0 * lambda);

  L2Fit fit;
  fit.model.coefficients = beta;
  fit.model.intercept =
      minimize_intercept(y, build_weights(y, pi), Vector(data.features * beta));
  fit.model.weight = pi;
  fit.model.lambda1 = lambda;
  fit.model.method = FitMethod::L2;
  fit.alpha = std::move(alpha);
  fit.qp_result = std::move(result);
  return fit;
}

L1Solution solve_l1_dual(const Dataset& data, double pi, double lambda1, double p_beta,
                         const qp::SolverSettings& settings) {
  data.validate(true);
  check_pi_open(pi);
  check_positive(lambda1, "lambda1");
  const int n = static_cast<int>(data.size());
  const int p = static_cast<int>(data.dim());
  const Vector& y = data.labels;
  Vector w = build_weights(y, pi);
  const double bound = n * lambda1;

  qp::ConicProgram program;
  program.curvature = qp::SparseMatrix(n, n);
  program.linear_cost = Vector::Constant(n, -1.0);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * n + n * p);
  for (int i = 0; i < n; ++i) trips.emplace_back(0, i, y[i]);
  for (int i = 0; i < n; ++i) trips.emplace_back(1 + i, i, 1.0);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < n; ++i) {
      const double v = data.features(i, j) * y[i];
      if (v != 0.0) trips.emplace_back(1 + n + j, i, v);
    }
  qp::SparseMatrix constraints(1 + n + p, n);
  constraints.setFromTriplets(trips.begin(), trips.end());
  program.constraints = std::move(constraints);
  program.lower.resize(1 + n + p);
  program.upper.resize(1 + n + p);
  program.lower[0] = program.upper[0] = 0.0;
  program.lower.segment(1, n).setZero();
  program.upper.segment(1, n) = w;
  program.lower.tail(p).setConstant(-bound);
  program.upper.tail(p).setConstant(bound);

  qp::SolverResult result = solve_robust(program, settings);
  if (result.status == qp::SolveStatus::PrimalInfeasible ||
      result.status == qp::SolveStatus::DualInfeasible)
    throw std::runtime_error("L1 selection dual reported infeasible; the program is feasible at "
                             "alpha = 0, this indicates an internal error");
  if (result.status != qp::SolveStatus::Solved)
    throw_solver_failure("L1 selection", pi, lambda1, 0.0, result);

  L1Solution sol;
  sol.alpha = result.solution.cwiseMax(0.0).cwiseMin(w);
  Vector xya = data.features.transpose() * Vector(y.cwiseProduct(sol.alpha));
  sol.bound_slack_lower = Vector::Constant(p, bound) - xya;
  sol.bound_slack_upper = Vector::Constant(p, bound) + xya;
  const double eps_kkt = kKktSlackRel * bound;
  sol.selection.mask.resize(p);
  for (int j = 0; j < p; ++j)
    sol.selection.mask[j] =
        !(sol.bound_slack_lower[j] > eps_kkt && sol.bound_slack_upper[j] > eps_kkt);
  sol.selection.threshold_used = p_beta;
  sol.qp_result = std::move(result);
  return sol;
}

EnFit fit_elastic_net(const Dataset& data, double pi, double lambda1, double lambda2, EnForm form,
                      double p_beta, const qp::SolverSettings& settings) {
  const int n = static_cast<int>(data.size());
  const int p = static_cast<int>(data.dim());
  qp::ConicProgram program = form == EnForm::Primal
                                 ? assemble_en_primal(data, pi, lambda1, lambda2)
                                 : assemble_en_dual(data, pi, lambda1, lambda2);
  qp::SolverResult result = solve_robust(program, settings);
  const bool stalled = primal_acceptable(program, result);
  if (result.status != qp::SolveStatus::Solved && !stalled) {
    std::ostringstream where;
    where << "elastic net " << (form == EnForm::Primal ? "primal" : "dual") << " fit";
    throw_solver_failure(where.str().c_str(), pi, lambda1, lambda2, result);
  }

  EnFit fit;
  const Vector& w = result.solution;
  Vector weights = build_weights(data.labels, pi);
  Vector beta;
  double beta0 = 0.0;
  if (form == EnForm::Primal) {
    beta = w.segment(n, p) - w.segment(n + p, p);
    beta0 = w[n + 2 * p];
    // The hinge-row multipliers are the box duals; when none is interior the
    // intercept is a flat segment and the solver lands on an arbitrary point
    // of it. Re-center on the midpoint so the primal and dual forms agree.
    fit.alpha = (-result.duals.tail(n)).cwiseMax(0.0).cwiseMin(weights);
    double interior = 0.0;
    for (int i = 0; i < n; ++i) interior += fit.alpha[i] * (weights[i] - fit.alpha[i]);
    Vector margins = data.features * beta;
    if (stalled || interior <= kInteriorSvEps)
      beta0 = detail::minimize_intercept(data.labels, weights, margins);
    else
      beta0 = detail::guard_intercept(data.labels, weights, margins, beta0);
  } else {
    const double inv = 1.0 / (n * lambda2);
    Vector xya = data.features.transpose() * Vector(data.labels.cwiseProduct(w.head(n)));
    Vector u = inv * (xya + w.segment(n, p)) - (lambda1 / lambda2) * w.tail(p);
    Vector v = inv * (-xya + w.segment(n + p, p)) - (lambda1 / lambda2) * w.tail(p);
    beta = u - v;
    fit.alpha = w.head(n);
    Vector margins = data.features * beta;
    beta0 = stalled
                ? detail::minimize_intercept(data.labels, weights, margins)
                : detail::guard_intercept(data.labels, weights, margins,
                                          recover_intercept_dual(data, fit.alpha, weights, beta));
  }
  beta = zero_small(std::move(beta), p_beta);
  fit.selection = extract_selection(beta, p_beta);
  fit.model.coefficients = std::move(beta);
  fit.model.intercept = beta0;
  fit.model.weight = pi;
  fit.model.lambda1 = lambda1;
  fit.model.lambda2 = lambda2;
  fit.model.method = form == EnForm::Primal ? FitMethod::ENPrimal : FitMethod::ENDual;
  fit.qp_result = std::move(result);
  return fit;
}

}  // namespace detail

LinearModel train_l2_wsvm(const Dataset& data, double pi, double lambda,
                          const qp::SolverSettings& settings) {
  return detail::fit_l2(data, pi, lambda, settings).model;
}

SelectionIndicator train_l1_select(const Dataset& data, double pi, double lambda1, double p_beta,
                                   const qp::SolverSettings& settings) {
  return detail::solve_l1_dual(data, pi, lambda1, p_beta, settings).selection;
}

std::pair<LinearModel, SelectionIndicator> train_en_wsvm(const Dataset& data, double pi,
                                                         double lambda1, double lambda2,
                                                         EnForm form, double p_beta,
                                                         const qp::SolverSettings& settings) {
  data.validate(true);
  check_pi_open(pi);
  detail::EnFit fit = detail::fit_elastic_net(data, pi, lambda1, lambda2, form, p_beta, settings);
  return {std::move(fit.model), std::move(fit.selection)};
}

qp::ConicProgram assemble_en_primal(const Dataset& data, double pi, double lambda1,
                                    double lambda2) {
  data.validate(true);
  check_pi_open(pi);
  check_positive(lambda1, "lambda1");
  check_positive(lambda2, "lambda2");
  const Eigen::Index n = data.size();
  const Eigen::Index p = data.dim();
  const Eigen::Index nv = n + 2 * p + 1;  // [z, u, v, beta0]
  if (nv > kMaxEnVariables)
    throw std::invalid_argument("elastic net primal exceeds the variable cap");
  const Vector& y = data.labels;

  qp::ConicProgram program;
  std::vector<Eigen::Triplet<double>> qtrips;
  qtrips.reserve(2 * p);
  for (Eigen::Index j = 0; j < 2 * p; ++j)
    qtrips.emplace_back(static_cast<int>(n + j), static_cast<int>(n + j), n * lambda2);
  qp::SparseMatrix q(nv, nv);
  q.setFromTriplets(qtrips.begin(), qtrips.end());
  program.curvature = std::move(q);

  program.linear_cost.resize(nv);
  program.linear_cost.head(n) = build_weights(y, pi);
  program.linear_cost.segment(n, 2 * p).setConstant(n * lambda1);
  program.linear_cost[nv - 1] = 0.0;

  // rows: z >= 0, u >= 0, v >= 0, then the hinge rows
  const Eigen::Index rows = 2 * n + 2 * p;
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(n + 2 * p + n * (2 * p + 2));
  for (Eigen::Index k = 0; k < n + 2 * p; ++k)
    trips.emplace_back(static_cast<int>(k), static_cast<int>(k), 1.0);
  const Eigen::Index hinge0 = n + 2 * p;
  for (Eigen::Index i = 0; i < n; ++i) {
    trips.emplace_back(static_cast<int>(hinge0 + i), static_cast<int>(i), 1.0);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double v = y[i] * data.features(i, j);
      if (v != 0.0) {
        trips.emplace_back(static_cast<int>(hinge0 + i), static_cast<int>(n + j), v);
        trips.emplace_back(static_cast<int>(hinge0 + i), static_cast<int>(n + p + j), -v);
      }
    }
    trips.emplace_back(static_cast<int>(hinge0 + i), static_cast<int>(nv - 1), y[i]);
  }
  qp::SparseMatrix constraints(rows, nv);
  constraints.setFromTriplets(trips.begin(), trips.end());
  program.constraints = std::move(constraints);
  program.lower = Vector::Zero(rows);
  program.lower.tail(n).setOnes();
  program.upper = Vector::Constant(rows, qp::kInfinity);
  return program;
}

qp::ConicProgram assemble_en_dual(const Dataset& data, double pi, double lambda1,
                                  double lambda2) {
  data.validate(true);
  check_pi_open(pi);
  check_positive(lambda1, "lambda1");
  check_positive(lambda2, "lambda2");
  const Eigen::Index n = data.size();
  const Eigen::Index p = data.dim();
  const Eigen::Index nv = n + 3 * p;  // [alpha, s, t, ones]
  if (nv > kMaxEnVariables)
    throw std::invalid_argument("elastic net dual exceeds the variable cap");
  const Vector& y = data.labels;
  const double inv = 1.0 / (n * lambda2);
  const double ratio = lambda1 / lambda2;

  // u = A w, v = B w
  Matrix a = Matrix::Zero(p, nv);
  Matrix b = Matrix::Zero(p, nv);
  Matrix xty(p, n);
  for (Eigen::Index i = 0; i < n; ++i) xty.col(i) = data.features.row(i).transpose() * y[i];
  a.leftCols(n) = inv * xty;
  b.leftCols(n) = -inv * xty;
  for (Eigen::Index j = 0; j < p; ++j) {
    a(j, n + j) = inv;
    b(j, n + p + j) = inv;
    a(j, n + 2 * p + j) = -ratio;
    b(j, n + 2 * p + j) = -ratio;
  }

  qp::ConicProgram program;
  Matrix q = (n * lambda2) * (a.transpose() * a + b.transpose() * b);
  q = 0.5 * (q + q.transpose());
  program.curvature = qp::to_sparse(q);
  program.linear_cost = Vector::Zero(nv);
  program.linear_cost.head(n).setConstant(-1.0);

  // rows: y'alpha = 0; alpha box; s >= 0; t >= 0; ones pinned; Aw >= 0; Bw >= 0
  const Eigen::Index rows = 1 + n + 3 * p + 2 * p;
  Matrix cons = Matrix::Zero(rows, nv);
  Vector lower(rows), upper(rows);
  cons.row(0).head(n) = y.transpose();
  lower[0] = upper[0] = 0.0;
  Vector w = build_weights(y, pi);
  for (Eigen::Index i = 0; i < n; ++i) {
    cons(1 + i, i) = 1.0;
    lower[1 + i] = 0.0;
    upper[1 + i] = w[i];
  }
  for (Eigen::Index j = 0; j < 2 * p; ++j) {
    cons(1 + n + j, n + j) = 1.0;
    lower[1 + n + j] = 0.0;
    upper[1 + n + j] = qp::kInfinity;
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    cons(1 + n + 2 * p + j, n + 2 * p + j) = 1.0;
    lower[1 + n + 2 * p + j] = upper[1 + n + 2 * p + j] = 1.0;
  }
  cons.middleRows(1 + n + 3 * p, p) = a;
  cons.middleRows(1 + n + 4 * p, p) = b;
  lower.tail(2 * p).setZero();
  upper.tail(2 * p).setConstant(qp::kInfinity);

  program.constraints = qp::to_sparse(cons);
  program.lower = std::move(lower);
  program.upper = std::move(upper);
  return program;
}

double recover_intercept_dual(const Dataset& data, const Vector& alpha, const Vector& weights,
                              const Vector& beta) {
  if (alpha.size() != data.size() || weights.size() != data.size() ||
      beta.size() != data.dim())
    throw std::invalid_argument("recover_intercept_dual: dimension mismatch");
  Vector a = alpha.cwiseMax(0.0).cwiseMin(weights);
  Vector margins = data.features * beta;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    // multipliers within noise distance of their box are bound-bound, not
    // support vectors; snapping keeps their noise out of the average
    if (a[i] < 1e-2 * weights[i] || a[i] > (1.0 - 1e-2) * weights[i]) continue;
    const double gap = a[i] * (weights[i] - a[i]);
    num += gap * (data.labels[i] - margins[i]);
    den += gap;
  }
  if (den > kInteriorSvEps) return num / den;
  return detail::minimize_intercept(data.labels, weights, margins);
}

Vector predict_decision(const LinearModel& model, const Matrix& features) {
  if (features.cols() != model.dim())
    throw std::invalid_argument("predict_decision: feature width does not match the model");
  return (features * model.coefficients).array() + model.intercept;
}

SelectionIndicator extract_selection(const Vector& beta, double p_beta) {
  if (p_beta < 0.0) throw std::invalid_argument("p_beta must be nonnegative");
  SelectionIndicator s;
  s.threshold_used = p_beta;
  s.mask.resize(beta.size());
  for (int j = 0; j < beta.size(); ++j) s.mask[j] = std::abs(beta[j]) > p_beta;
  return s;
}

}  // namespace wsvm
