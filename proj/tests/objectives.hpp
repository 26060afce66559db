#pragma once

// Direct evaluations of the regularized weighted-hinge objectives, used by
// oracle tests; independent of the production fitting code.

#include "wsvm/qp.hpp"
#include "wsvm/types.hpp"

#include <functional>

namespace objectives {

using wsvm::Dataset;
using wsvm::Matrix;
using wsvm::Vector;

double weighted_hinge(const Dataset& data, double pi, double beta0, const Vector& beta);

// (1/n) weighted hinge + lambda |beta|_2^2
double l2_objective(const Dataset& data, double pi, double lambda, double beta0,
                    const Vector& beta);

// (1/n) weighted hinge + lambda1 |beta|_1
double l1_objective(const Dataset& data, double pi, double lambda1, double beta0,
                    const Vector& beta);

// (1/n) weighted hinge + lambda1 |beta|_1 + (lambda2/2) |beta|_2^2
double en_objective(const Dataset& data, double pi, double lambda1, double lambda2, double beta0,
                    const Vector& beta);

// theta = [beta0, beta...] packed for the direct minimizers
std::function<double(const Vector&)> l2_value(const Dataset& data, double pi, double lambda);
std::function<Vector(const Vector&)> l2_subgradient(const Dataset& data, double pi,
                                                    double lambda);
std::function<double(const Vector&)> en_value(const Dataset& data, double pi, double lambda1,
                                              double lambda2);
std::function<Vector(const Vector&)> en_subgradient(const Dataset& data, double pi,
                                                    double lambda1, double lambda2);

// Correlated-pair coefficient bound of the doubly regularized fit with unit
// Lipschitz loss: (1/(n lambda2)) [(1-pi) sum_{y=+1} |x_is - x_it|
//                                   + pi sum_{y=-1} |x_is - x_it|]
double grouping_bound(const Dataset& data, double pi, double lambda2, int s, int t);

// Primal linear program of the L1-penalized fit with box guards, suitable
// for vertex enumeration. Variables are [beta0, u, v, z].
wsvm::qp::ConicProgram l1_primal_lp(const Dataset& data, double pi, double lambda1, double box);

}  // namespace objectives
