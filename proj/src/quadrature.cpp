#include "dualband/quadrature.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace dualband {

namespace {

GaussHermite build_gauss_hermite(int order) {
  if (order < 1) throw std::invalid_argument("gauss_hermite: order must be >= 1");
  // Jacobi matrix of the Hermite recurrence: zero diagonal, off-diagonal
  // sqrt(k/2); eigenvalues are the nodes, weights from the first eigenvector
  // components scaled by mu0 = sqrt(pi).
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    double b = std::sqrt(k / 2.0);
    jacobi(k - 1, k) = b;
    jacobi(k, k - 1) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  GaussHermite gh;
  gh.nodes = es.eigenvalues();
  gh.weights.resize(order);
  const double mu0 = std::sqrt(M_PI);
  for (int i = 0; i < order; ++i) {
    double v0 = es.eigenvectors()(0, i);
    gh.weights(i) = mu0 * v0 * v0;
  }
  return gh;
}

double simpson_rule(double a, double fa, double fm, double fb, double b) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double simpson_recurse(const std::function<double(double)>& f, double a, double fa, double b,
                       double fb, double m, double fm, double whole, double tol, int depth) {
  double lm = (a + m) / 2.0, rm = (m + b) / 2.0;
  double flm = f(lm), frm = f(rm);
  double left = simpson_rule(a, fa, flm, fm, m);
  double right = simpson_rule(m, fm, frm, fb, b);
  double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_recurse(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1) +
         simpson_recurse(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1);
}

}  // namespace

const GaussHermite& gauss_hermite(int order) {
  static std::map<int, GaussHermite> cache;
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, build_gauss_hermite(order)).first;
  return it->second;
}

double gauss_hermite_expectation(const std::function<double(double)>& g, double mean,
                                 double sd, int order) {
  const GaussHermite& gh = gauss_hermite(order);
  const double scale = std::sqrt(2.0) * sd;
  double acc = 0.0;
  for (int i = 0; i < gh.nodes.size(); ++i)
    acc += gh.weights(i) * g(mean + scale * gh.nodes(i));
  return acc / std::sqrt(M_PI);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol) {
  double m = (a + b) / 2.0;
  double fa = f(a), fb = f(b), fm = f(m);
  double whole = simpson_rule(a, fa, fm, fb, b);
  return simpson_recurse(f, a, fa, b, fb, m, fm, whole, tol, 48);
}

}  // namespace dualband
