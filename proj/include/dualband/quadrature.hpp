#pragma once

#include <Eigen/Dense>
#include <functional>

namespace dualband {

// Physicists' Gauss-Hermite rule: integral of f(x)*exp(-x^2) dx
// ~= sum w_i * f(x_i). Nodes/weights computed once per order via the
// Golub-Welsch eigendecomposition and cached.
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

const GaussHermite& gauss_hermite(int order);

// E[g(S)] for S ~ N(mean, sd^2) using the given rule order.
double gauss_hermite_expectation(const std::function<double(double)>& g, double mean,
                                 double sd, int order);

// Recursive adaptive Simpson on [a, b] with absolute tolerance.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol);

}  // namespace dualband
