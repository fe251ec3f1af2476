#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dualband/common.hpp"
#include "dualband/rng.hpp"

namespace dualband {

// One carrier. Distances in meters, frequencies in Hz, powers in dBm.
struct BandConfig {
  double carrier_hz = 0.0;
  double bandwidth_hz = 0.0;
  double tx_power_dbm = 0.0;
  double pre_break_exponent = 2.0;  // slope below the breakpoint, in 10*dB/decade
  double pathloss_exponent = 4.0;   // slope beyond the breakpoint
  double break_distance_m = 50.0;
  double decorrelation_m = 0.0;     // shadowing correlation distance
  double shadow_sigma_db = 0.0;     // shadowing standard deviation
  double pathloss_intercept_db = 0.0;  // loss at 1 m; 0 means free-space for carrier_hz
};

// Dual-band link: a sub-6 GHz carrier and a mmWave carrier observed at the
// same positions, with cross-correlated log-normal shadowing.
struct Environment {
  BandConfig cm;
  BandConfig mm;
  double cross_correlation = 0.75;  // shadowing correlation between bands
  double kernel_shape = 1.0;        // exponent of the correlation kernel
  double noise_psd_dbm_hz = -174.0;

  static Environment defaults();
};

// Free-space reference loss at 1 m: 20*log10(4*pi*f/c).
double pathloss_intercept_db(double carrier_hz);

// The band's 1 m intercept: its explicit value if set, else free-space.
double effective_intercept_db(const BandConfig& band);

// Dual-slope log-distance loss. Throws std::domain_error below kMinDistanceM;
// position generators guarantee the bound.
double path_loss_db(const BandConfig& band, double distance_m);

// Thermal noise over the band: psd + 10*log10(bandwidth).
double noise_floor_dbm(const BandConfig& band, double noise_psd_dbm_hz);

double snr_db(double tx_power_dbm, double path_loss_db, double shadow_db,
              double noise_floor_dbm);

// SNR at a distance with a given shadowing value (dB).
double snr_at_db(const Environment& env, const BandConfig& band, double distance_m,
                 double shadow_db);

// Mean SNR in linear units (shadowing excluded); the operand of the
// high-SNR expansion used by the approximate decision rule.
double mean_snr_linear(const Environment& env, const BandConfig& band, double distance_m);

// Shannon rate in bit/s.
double rate_bps(const BandConfig& band, double snr_db);

// Rate with the modulation ceiling of 8 bit/s/Hz (256-QAM).
double rate_capped_bps(const BandConfig& band, double snr_db);

// SNR above which the capped rate saturates.
double cap_snr_db();

enum class Band { cm = 0, mm = 1 };

// Cov(S^bi(p), S^bj(p')) for positions `delta_m` apart. Same band:
// sigma^2 * exp(-(delta/dcor)^nu); across bands the geometric mean of the two
// same-band values scaled by the cross-correlation.
double shadow_cov_db2(const Environment& env, Band bi, Band bj, double delta_m);

// Joint covariance of [S^cm(p_0..p_{T-1}); S^mm(p_0..p_{T-1})], a 2T x 2T
// matrix ordered band-major.
Eigen::MatrixXd joint_shadow_covariance(const Environment& env,
                                        const std::vector<Vec2>& positions);

struct ShadowingDraw {
  Eigen::VectorXd cm;  // dB, one entry per position
  Eigen::VectorXd mm;
};

// One realization of the correlated shadowing field over a trajectory.
ShadowingDraw sample_shadowing(const Environment& env, const std::vector<Vec2>& positions,
                               Rng& rng);

}  // namespace dualband
