#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <limits>
#include <optional>
#include <utility>

namespace wsvm::qp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Canonical convex program: minimize 1/2 x'Qx + c'x subject to
/// lower <= Cx <= upper. A row with lower == upper is an equality;
/// one-sided rows use +-infinity. A zero curvature matrix gives an LP.
struct ConicProgram {
  SparseMatrix curvature;    // N x N, symmetric positive semidefinite
  Vector linear_cost;        // N
  SparseMatrix constraints;  // D x N (D may be zero)
  Vector lower;              // D
  Vector upper;              // D

  Eigen::Index num_variables() const { return linear_cost.size(); }
  Eigen::Index num_constraints() const { return lower.size(); }

  // Throws std::invalid_argument on dimension mismatch, asymmetric
  // curvature (tolerance 1e-10 on max |Q_ij - Q_ji|), crossed bounds,
  // or non-finite cost entries.
  void validate() const;
};

struct SolverSettings {
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  int max_iterations = 20000;
  double step_scale = 1.0;  // initial ADMM penalty, rescaled adaptively
  bool polish = true;
  std::optional<Vector> warm_x;  // primal warm start (size N)
  std::optional<Vector> warm_y;  // dual warm start (size D)

  void validate() const;  // throws std::invalid_argument
};

enum class SolveStatus { Solved, MaxIterations, PrimalInfeasible, DualInfeasible };

const char* to_string(SolveStatus status);

struct SolverResult {
  SolveStatus status = SolveStatus::MaxIterations;
  Vector solution;  // N; best iterate on MaxIterations, undefined on infeasible
  Vector duals;     // D; row multipliers (>= 0 at upper bounds, <= 0 at lower)
  double primal_residual = kInfinity;
  double dual_residual = kInfinity;
  int iterations = 0;
};

// Operator-splitting solve of the program. Deterministic given identical
// inputs and settings. Throws std::invalid_argument on malformed input.
SolverResult solve(const ConicProgram& program, const SolverSettings& settings = {});

// (primal, dual) residuals of a candidate point: worst bound violation of
// lower <= Cx <= upper and |Qx + c + C'y|_inf.
std::pair<double, double> kkt_residuals(const ConicProgram& program, const Vector& solution,
                                        const Vector& duals);

SparseMatrix to_sparse(const Matrix& dense);

}  // namespace wsvm::qp
