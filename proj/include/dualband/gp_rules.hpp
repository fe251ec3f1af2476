#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dualband/channel.hpp"
#include "dualband/common.hpp"

namespace dualband {

// Parameter bundle for the model-based decision rules.
struct GpRule {
  Environment env;
  Vec2 bs{0.0, 0.0};
  int window_q = 5;    // past frames conditioning a decision, beyond the current one
  int horizon_u = 4;   // frames ahead being decided
  double gamma_t = 0.5;
};

// Observations feeding one sequential decision: the Q+1 most recent frames
// (oldest first) and the position the UE will occupy at the horizon.
struct HistoryFrame {
  Vec2 position;
  double s_c = 0.0;  // dB
  double s_m = 0.0;
};

struct History {
  std::vector<HistoryFrame> frames;
  Vec2 target;
};

// Standard normal tail probability Q(x) = P(Z > x), and its inverse.
double q_function(double x);
double q_inverse(double p);  // throws std::domain_error outside (0,1)

struct ConditionalGaussian {
  double mean = 0.0;
  double variance = 0.0;
};

// Zero-mean scalar conditioning: posterior of coordinate `target` of
// N(0, prior_cov) given the observed coordinates.
ConditionalGaussian condition_scalar(const Eigen::MatrixXd& prior_cov,
                                     const std::vector<int>& observed,
                                     const Eigen::VectorXd& values, int target);

// Mean linear SNR of each band at a distance (shadowing excluded).
struct LinkGains {
  double cm = 0.0;
  double mm = 0.0;
};
LinkGains link_gains(const Environment& env, double distance_m);

// The mmWave shadowing level above which the mmWave rate exceeds the cmWave
// rate, given cmWave shadowing s (both bands at the same distance).
double v_threshold(const Environment& env, const LinkGains& gains, double s_db);

// One-shot rule: probability that mmWave beats cmWave given the cmWave
// shadowing observed at this position, under the cross-band conditional.
// With rho = 0 the conditional degenerates to the unconditional tail
// probability, which is the documented fallback.
double tbba_success_prob(const Environment& env, double distance_m, double s_c_db);
int tbba_decide(const Environment& env, double distance_m, double s_c_db);

// Sequential exact rule: P(R^m > R^c at the horizon | history), via a 1-D
// quadrature over the cmWave shadowing at the target position.
double exact_success_prob(const History& h, const GpRule& rule);

// High-SNR approximate rule: the posterior mean of the linearized rate
// difference; decision 1 iff it is >= 0.
double approx_mean_diff(const History& h, const GpRule& rule);
int approx_decide(const History& h, const GpRule& rule);

// Probability-to-decision map for the model-based rules; ties go to mmWave.
int map_decide(double p, double gamma_t);

}  // namespace dualband
