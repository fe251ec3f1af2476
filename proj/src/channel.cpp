#include "dualband/channel.hpp"

#include <cmath>
#include <stdexcept>

#include "dualband/gaussian.hpp"

namespace dualband {

Environment Environment::defaults() {
  Environment env;
  env.cm = BandConfig{2.5e9, 10e6, 15.0, 2.0, 4.0, 50.0, 25.0, 5.0, 0.0};
  env.mm = BandConfig{28e9, 100e6, 22.0, 2.0, 4.0, 50.0, 24.0, 7.0, 0.0};
  env.cross_correlation = 0.75;
  env.kernel_shape = 1.0;
  env.noise_psd_dbm_hz = -174.0;
  return env;
}

double pathloss_intercept_db(double carrier_hz) {
  return 20.0 * std::log10(4.0 * M_PI * carrier_hz / kSpeedOfLight);
}

double effective_intercept_db(const BandConfig& band) {
  return band.pathloss_intercept_db != 0.0 ? band.pathloss_intercept_db
                                           : pathloss_intercept_db(band.carrier_hz);
}

double path_loss_db(const BandConfig& band, double distance_m) {
  if (distance_m < kMinDistanceM)
    throw std::domain_error("path_loss: distance below the 1 m reference");
  double pl = effective_intercept_db(band);
  double pre = 10.0 * band.pre_break_exponent;
  if (distance_m <= band.break_distance_m) return pl + pre * std::log10(distance_m);
  return pl + pre * std::log10(band.break_distance_m) +
         10.0 * band.pathloss_exponent * std::log10(distance_m / band.break_distance_m);
}

double noise_floor_dbm(const BandConfig& band, double noise_psd_dbm_hz) {
  return noise_psd_dbm_hz + 10.0 * std::log10(band.bandwidth_hz);
}

double snr_db(double tx_power_dbm, double path_loss_db, double shadow_db,
              double noise_floor_dbm) {
  return tx_power_dbm - path_loss_db + shadow_db - noise_floor_dbm;
}

double snr_at_db(const Environment& env, const BandConfig& band, double distance_m,
                 double shadow_db) {
  return snr_db(band.tx_power_dbm, path_loss_db(band, distance_m), shadow_db,
                noise_floor_dbm(band, env.noise_psd_dbm_hz));
}

double mean_snr_linear(const Environment& env, const BandConfig& band, double distance_m) {
  return std::pow(10.0, 0.1 * snr_at_db(env, band, distance_m, 0.0));
}

double rate_bps(const BandConfig& band, double snr_db) {
  return band.bandwidth_hz * std::log2(1.0 + std::pow(10.0, 0.1 * snr_db));
}

double rate_capped_bps(const BandConfig& band, double snr_db) {
  double se = std::log2(1.0 + std::pow(10.0, 0.1 * snr_db));
  return band.bandwidth_hz * std::min(se, 8.0);
}

double cap_snr_db() {
  return 10.0 * std::log10(255.0);  // log2(1 + snr) == 8
}

namespace {

struct KernelTerms {
  double inv_c;  // dcor_cm^-nu
  double inv_m;
  double var_c;
  double var_m;
  double rho;
  double nu;
};

KernelTerms kernel_terms(const Environment& env) {
  KernelTerms k;
  if (env.cm.decorrelation_m <= 0.0 || env.mm.decorrelation_m <= 0.0)
    throw std::invalid_argument("shadowing decorrelation distance must be positive");
  k.nu = env.kernel_shape;
  k.inv_c = std::pow(env.cm.decorrelation_m, -k.nu);
  k.inv_m = std::pow(env.mm.decorrelation_m, -k.nu);
  k.var_c = env.cm.shadow_sigma_db * env.cm.shadow_sigma_db;
  k.var_m = env.mm.shadow_sigma_db * env.mm.shadow_sigma_db;
  k.rho = env.cross_correlation;
  return k;
}

}  // namespace

double shadow_cov_db2(const Environment& env, Band bi, Band bj, double delta_m) {
  KernelTerms k = kernel_terms(env);
  double u = delta_m > 0.0 ? std::pow(delta_m, k.nu) : 0.0;
  double c_c = k.var_c * std::exp(-u * k.inv_c);
  double c_m = k.var_m * std::exp(-u * k.inv_m);
  if (bi == bj) return bi == Band::cm ? c_c : c_m;
  return k.rho * std::sqrt(c_c * c_m);
}

Eigen::MatrixXd joint_shadow_covariance(const Environment& env,
                                        const std::vector<Vec2>& positions) {
  const Eigen::Index t = static_cast<Eigen::Index>(positions.size());
  KernelTerms k = kernel_terms(env);
  Eigen::MatrixXd cov(2 * t, 2 * t);
  for (Eigen::Index i = 0; i < t; ++i) {
    for (Eigen::Index j = i; j < t; ++j) {
      double delta = distance(positions[static_cast<std::size_t>(i)],
                              positions[static_cast<std::size_t>(j)]);
      double u = delta > 0.0 ? std::pow(delta, k.nu) : 0.0;
      double c_c = k.var_c * std::exp(-u * k.inv_c);
      double c_m = k.var_m * std::exp(-u * k.inv_m);
      double x = k.rho * std::sqrt(c_c * c_m);
      cov(i, j) = cov(j, i) = c_c;
      cov(t + i, t + j) = cov(t + j, t + i) = c_m;
      cov(i, t + j) = cov(t + j, i) = x;
      cov(j, t + i) = cov(t + i, j) = x;
    }
  }
  return cov;
}

ShadowingDraw sample_shadowing(const Environment& env, const std::vector<Vec2>& positions,
                               Rng& rng) {
  const Eigen::Index t = static_cast<Eigen::Index>(positions.size());
  Eigen::MatrixXd cov = joint_shadow_covariance(env, positions);
  Eigen::VectorXd x = sample_gaussian(cov, rng);
  ShadowingDraw draw;
  draw.cm = x.head(t);
  draw.mm = x.tail(t);
  return draw;
}

}  // namespace dualband
