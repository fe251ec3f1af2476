#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dualband/rng.hpp"

namespace dualband {

// Draw x ~ N(0, cov) via Cholesky. A factorization that fails numerically is
// retried with diagonal jitter of 1e-9 then 1e-6 times the largest diagonal
// entry; an all-zero covariance yields the zero vector.
Eigen::VectorXd sample_gaussian(const Eigen::MatrixXd& cov, Rng& rng);

// Factor-once sampler for repeated draws from the same N(0, cov); applies the
// same jitter policy as sample_gaussian at construction.
class GaussianSampler {
 public:
  explicit GaussianSampler(const Eigen::MatrixXd& cov);
  Eigen::VectorXd draw(Rng& rng) const;
  Eigen::Index dim() const { return factor_.rows(); }

 private:
  Eigen::MatrixXd factor_;  // lower-triangular; empty columns mean a zero field
  bool zero_ = false;
};

struct GaussianConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Posterior of the `target` coordinates of N(mean, cov) given that the
// `observed` coordinates equal `values`. Solves through LDLT of the observed
// block; jitter is added only if the exact factorization is unusable, so a
// well-conditioned problem is answered without perturbation.
GaussianConditional condition_gaussian(const Eigen::VectorXd& mean,
                                       const Eigen::MatrixXd& cov,
                                       const std::vector<int>& observed,
                                       const Eigen::VectorXd& values,
                                       const std::vector<int>& target);

}  // namespace dualband
