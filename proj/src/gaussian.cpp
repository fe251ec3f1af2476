#include "dualband/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace dualband {

namespace {

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

// Gather rows/cols of `cov` named by index lists.
Eigen::MatrixXd submatrix(const Eigen::MatrixXd& cov, const std::vector<int>& rows,
                          const std::vector<int>& cols) {
  Eigen::MatrixXd out(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cov(rows[i], cols[j]);
  return out;
}

Eigen::VectorXd subvector(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(idx[i]);
  return out;
}

}  // namespace

GaussianSampler::GaussianSampler(const Eigen::MatrixXd& cov) {
  const Eigen::Index n = cov.rows();
  if (cov.cols() != n) throw std::invalid_argument("GaussianSampler: covariance must be square");

  double max_diag = n > 0 ? cov.diagonal().maxCoeff() : 0.0;
  if (max_diag <= 0.0) {  // degenerate: no variance anywhere
    factor_ = Eigen::MatrixXd::Zero(n, n);
    zero_ = true;
    return;
  }

  for (double jitter : {0.0, 1e-9, 1e-6}) {
    Eigen::MatrixXd work = cov;
    if (jitter > 0.0) work.diagonal().array() += jitter * max_diag;
    Eigen::LLT<Eigen::MatrixXd> llt(work);
    if (llt.info() != Eigen::Success) continue;
    Eigen::MatrixXd lower = llt.matrixL();
    if (!lower.allFinite()) continue;
    factor_ = std::move(lower);
    return;
  }
  throw std::runtime_error("GaussianSampler: covariance is not positive definite even with jitter");
}

Eigen::VectorXd GaussianSampler::draw(Rng& rng) const {
  Eigen::VectorXd z(factor_.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  if (zero_) return Eigen::VectorXd::Zero(z.size());
  return factor_.triangularView<Eigen::Lower>() * z;
}

Eigen::VectorXd sample_gaussian(const Eigen::MatrixXd& cov, Rng& rng) {
  return GaussianSampler(cov).draw(rng);
}

GaussianConditional condition_gaussian(const Eigen::VectorXd& mean,
                                       const Eigen::MatrixXd& cov,
                                       const std::vector<int>& observed,
                                       const Eigen::VectorXd& values,
                                       const std::vector<int>& target) {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size())
    throw std::invalid_argument("condition_gaussian: dimension mismatch between mean and covariance");
  if (static_cast<Eigen::Index>(observed.size()) != values.size())
    throw std::invalid_argument("condition_gaussian: observed index/value size mismatch");

  GaussianConditional out;
  if (observed.empty()) {  // prior marginal
    out.mean = subvector(mean, target);
    out.cov = submatrix(cov, target, target);
    return out;
  }

  Eigen::MatrixXd k_oo = submatrix(cov, observed, observed);
  Eigen::MatrixXd k_to = submatrix(cov, target, observed);
  Eigen::VectorXd resid = values - subvector(mean, observed);

  double max_diag = k_oo.diagonal().maxCoeff();
  for (double jitter : {0.0, 1e-9, 1e-6}) {
    Eigen::MatrixXd work = k_oo;
    if (jitter > 0.0 && max_diag > 0.0) work.diagonal().array() += jitter * max_diag;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(work);
    if (ldlt.info() != Eigen::Success) continue;
    if (jitter == 0.0 && !ldlt.isPositive()) continue;  // indefinite: exact solve untrustworthy
    Eigen::VectorXd w = ldlt.solve(resid);
    Eigen::MatrixXd gain = ldlt.solve(k_to.transpose());
    if (!w.allFinite() || !all_finite(gain)) continue;
    out.mean = subvector(mean, target) + k_to * w;
    out.cov = submatrix(cov, target, target) - k_to * gain;
    // clip tiny negative variances produced by cancellation
    for (Eigen::Index i = 0; i < out.cov.rows(); ++i)
      if (out.cov(i, i) < 0.0 && out.cov(i, i) > -1e-8 * std::max(1.0, max_diag)) out.cov(i, i) = 0.0;
    return out;
  }
  throw std::runtime_error("condition_gaussian: observed block is not positive semidefinite");
}

}  // namespace dualband
