#pragma once

#include "wsvm/qp.hpp"
#include "wsvm/types.hpp"

#include <utility>

namespace wsvm {

enum class EnForm { Primal, Dual };

// pi weights class -1, 1 - pi weights class +1.
Vector build_weights(const Vector& labels, double pi);

// L2-regularized weighted hinge fit, solved through the box-constrained
// dual. The returned intercept is the exact one-dimensional minimizer of
// the weighted hinge given the fitted coefficients.
LinearModel train_l2_wsvm(const Dataset& data, double pi, double lambda,
                          const qp::SolverSettings& settings = {});

// L1-penalized selection: solves the dual linear program and reads the
// kept set off the complementary-slackness test on the bound slacks.
SelectionIndicator train_l1_select(const Dataset& data, double pi, double lambda1, double p_beta,
                                   const qp::SolverSettings& settings = {});

// Doubly regularized (L1 + L2) weighted hinge fit in either the primal or
// dual quadratic-program form; coefficients below p_beta are zeroed.
std::pair<LinearModel, SelectionIndicator> train_en_wsvm(const Dataset& data, double pi,
                                                         double lambda1, double lambda2,
                                                         EnForm form, double p_beta,
                                                         const qp::SolverSettings& settings = {});

// Constraint-matrix assembly for the elastic-net programs; exposed for
// direct inspection and for solving the two forms against each other.
qp::ConicProgram assemble_en_primal(const Dataset& data, double pi, double lambda1,
                                    double lambda2);
qp::ConicProgram assemble_en_dual(const Dataset& data, double pi, double lambda1, double lambda2);

// Support-vector weighted average intercept from dual multipliers, with a
// one-dimensional hinge minimization fallback when no multiplier is
// strictly inside its box.
double recover_intercept_dual(const Dataset& data, const Vector& alpha, const Vector& weights,
                              const Vector& beta);

Vector predict_decision(const LinearModel& model, const Matrix& features);

SelectionIndicator extract_selection(const Vector& beta, double p_beta);

namespace detail {

// Exact minimizer of sum_i w_i * max(0, 1 - y_i (b0 + margins_i)) over b0;
// flat optimal segments resolve to their midpoint.
double minimize_intercept(const Vector& labels, const Vector& weights, const Vector& margins);

struct L1Solution {
  SelectionIndicator selection;
  Vector alpha;
  Vector bound_slack_lower;  // s = n*lambda1*e - X'Y alpha
  Vector bound_slack_upper;  // t = n*lambda1*e + X'Y alpha
  qp::SolverResult qp_result;
};
L1Solution solve_l1_dual(const Dataset& data, double pi, double lambda1, double p_beta,
                         const qp::SolverSettings& settings = {});

struct EnFit {
  LinearModel model;
  SelectionIndicator selection;
  Vector alpha;  // dual form only; empty for primal
  qp::SolverResult qp_result;
};
EnFit fit_elastic_net(const Dataset& data, double pi, double lambda1, double lambda2, EnForm form,
                      double p_beta, const qp::SolverSettings& settings = {});

struct L2Fit {
  LinearModel model;
  Vector alpha;
  qp::SolverResult qp_result;
};
L2Fit fit_l2(const Dataset& data, double pi, double lambda,
             const qp::SolverSettings& settings = {});

}  // namespace detail

}  // namespace wsvm
