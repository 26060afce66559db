#include "objectives.hpp"

#include "wsvm/train.hpp"

#include <cmath>

namespace objectives {

double weighted_hinge(const Dataset& data, double pi, double beta0, const Vector& beta) {
  Vector f = (data.features * beta).array() + beta0;
  double acc = 0.0;
  for (int i = 0; i < data.size(); ++i) {
    const double w = data.labels[i] < 0 ? pi : 1.0 - pi;
    acc += w * std::max(0.0, 1.0 - data.labels[i] * f[i]);
  }
  return acc;
}

double l2_objective(const Dataset& data, double pi, double lambda, double beta0,
                    const Vector& beta) {
  return weighted_hinge(data, pi, beta0, beta) / data.size() + lambda * beta.squaredNorm();
}

double l1_objective(const Dataset& data, double pi, double lambda1, double beta0,
                    const Vector& beta) {
  return weighted_hinge(data, pi, beta0, beta) / data.size() +
         lambda1 * beta.cwiseAbs().sum();
}

double en_objective(const Dataset& data, double pi, double lambda1, double lambda2, double beta0,
                    const Vector& beta) {
  return l1_objective(data, pi, lambda1, beta0, beta) + 0.5 * lambda2 * beta.squaredNorm();
}

namespace {

Vector hinge_subgradient(const Dataset& data, double pi, const Vector& theta) {
  const int p = static_cast<int>(data.dim());
  Vector g = Vector::Zero(p + 1);
  Vector f = (data.features * theta.tail(p)).array() + theta[0];
  for (int i = 0; i < data.size(); ++i) {
    if (1.0 - data.labels[i] * f[i] > 0.0) {
      const double w = (data.labels[i] < 0 ? pi : 1.0 - pi) / data.size();
      g[0] -= w * data.labels[i];
      g.tail(p) -= w * data.labels[i] * data.features.row(i).transpose();
    }
  }
  return g;
}

}  // namespace

std::function<double(const Vector&)> l2_value(const Dataset& data, double pi, double lambda) {
  return [=, &data](const Vector& theta) {
    return l2_objective(data, pi, lambda, theta[0], theta.tail(theta.size() - 1));
  };
}

std::function<Vector(const Vector&)> l2_subgradient(const Dataset& data, double pi,
                                                    double lambda) {
  return [=, &data](const Vector& theta) {
    Vector g = hinge_subgradient(data, pi, theta);
    g.tail(theta.size() - 1) += 2.0 * lambda * theta.tail(theta.size() - 1);
    return g;
  };
}

std::function<double(const Vector&)> en_value(const Dataset& data, double pi, double lambda1,
                                              double lambda2) {
  return [=, &data](const Vector& theta) {
    return en_objective(data, pi, lambda1, lambda2, theta[0], theta.tail(theta.size() - 1));
  };
}

std::function<Vector(const Vector&)> en_subgradient(const Dataset& data, double pi,
                                                    double lambda1, double lambda2) {
  return [=, &data](const Vector& theta) {
    Vector g = hinge_subgradient(data, pi, theta);
    const int p = static_cast<int>(theta.size() - 1);
    for (int j = 0; j < p; ++j) {
      const double b = theta[1 + j];
      g[1 + j] += lambda2 * b + (b > 0 ? lambda1 : (b < 0 ? -lambda1 : 0.0));
    }
    return g;
  };
}

double grouping_bound(const Dataset& data, double pi, double lambda2, int s, int t) {
  double pos = 0.0, neg = 0.0;
  for (int i = 0; i < data.size(); ++i) {
    const double d = std::abs(data.features(i, s) - data.features(i, t));
    (data.labels[i] > 0 ? pos : neg) += d;
  }
  return ((1.0 - pi) * pos + pi * neg) / (data.size() * lambda2);
}

wsvm::qp::ConicProgram l1_primal_lp(const Dataset& data, double pi, double lambda1, double box) {
  using wsvm::qp::kInfinity;
  const int n = static_cast<int>(data.size());
  const int p = static_cast<int>(data.dim());
  const int nv = 1 + 2 * p + n;  // [beta0, u, v, z]
  Matrix cons = Matrix::Zero(2 * n + 2 * p + 1, nv);
  Vector lower(cons.rows()), upper(cons.rows());

  // hinge rows: y_i beta0 + y_i x_i'(u - v) + z_i >= 1
  for (int i = 0; i < n; ++i) {
    cons(i, 0) = data.labels[i];
    for (int j = 0; j < p; ++j) {
      cons(i, 1 + j) = data.labels[i] * data.features(i, j);
      cons(i, 1 + p + j) = -data.labels[i] * data.features(i, j);
    }
    cons(i, 1 + 2 * p + i) = 1.0;
    lower[i] = 1.0;
    upper[i] = kInfinity;
  }
  for (int i = 0; i < n; ++i) {  // z >= 0
    cons(n + i, 1 + 2 * p + i) = 1.0;
    lower[n + i] = 0.0;
    upper[n + i] = kInfinity;
  }
  for (int j = 0; j < 2 * p; ++j) {  // u, v in [0, box]
    cons(2 * n + j, 1 + j) = 1.0;
    lower[2 * n + j] = 0.0;
    upper[2 * n + j] = box;
  }
  cons(2 * n + 2 * p, 0) = 1.0;  // |beta0| <= box
  lower[2 * n + 2 * p] = -box;
  upper[2 * n + 2 * p] = box;

  wsvm::qp::ConicProgram lp;
  lp.curvature = wsvm::qp::SparseMatrix(nv, nv);
  lp.linear_cost = Vector::Zero(nv);
  lp.linear_cost.head(1 + 2 * p).tail(2 * p).setConstant(n * lambda1);
  lp.linear_cost.tail(n) = wsvm::build_weights(data.labels, pi);
  lp.constraints = wsvm::qp::to_sparse(cons);
  lp.lower = std::move(lower);
  lp.upper = std::move(upper);
  return lp;
}

}  // namespace objectives
