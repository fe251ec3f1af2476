#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

#include "dualband/channel.hpp"

using namespace dualband;

TEST_CASE("free-space intercept at 1 m") {
  CHECK(pathloss_intercept_db(2.5e9) == doctest::Approx(40.4067).epsilon(1e-5));
  CHECK(pathloss_intercept_db(28e9) == doctest::Approx(61.3910).epsilon(1e-5));
}

TEST_CASE("dual-slope path loss") {
  Environment env = Environment::defaults();

  // before the breakpoint: intercept + 20 log10(d)
  CHECK(path_loss_db(env.cm, 10.0) == doctest::Approx(60.4067).epsilon(1e-5));
  // at the breakpoint both slopes agree
  CHECK(path_loss_db(env.cm, 50.0) ==
        doctest::Approx(pathloss_intercept_db(2.5e9) + 20.0 * std::log10(50.0)).epsilon(1e-9));
  // beyond: 40 dB/decade with exponent 4
  CHECK(path_loss_db(env.cm, 100.0) == doctest::Approx(86.4273).epsilon(1e-5));
  // the model is undefined below the 1 m reference
  CHECK_THROWS_AS(path_loss_db(env.cm, 0.2), std::domain_error);
  // continuity across the breakpoint
  CHECK(path_loss_db(env.cm, 50.0 - 1e-9) ==
        doctest::Approx(path_loss_db(env.cm, 50.0 + 1e-9)).epsilon(1e-9));

  // a fitted model can override the intercept and the pre-break slope
  BandConfig fitted = env.cm;
  fitted.pathloss_intercept_db = 30.0;
  fitted.pre_break_exponent = 2.5;
  CHECK(path_loss_db(fitted, 10.0) == doctest::Approx(55.0));
}

TEST_CASE("noise floor and snr") {
  Environment env = Environment::defaults();
  CHECK(noise_floor_dbm(env.cm, env.noise_psd_dbm_hz) == doctest::Approx(-104.0));
  CHECK(noise_floor_dbm(env.mm, env.noise_psd_dbm_hz) == doctest::Approx(-94.0));
  CHECK(snr_db(15.0, 100.0, 0.0, -104.0) == doctest::Approx(19.0));
  // shadowing enters additively in dB
  CHECK(snr_db(15.0, 100.0, 3.5, -104.0) == doctest::Approx(22.5));
}

TEST_CASE("shannon rate") {
  Environment env = Environment::defaults();
  CHECK(rate_bps(env.cm, 0.0) == doctest::Approx(1e7));  // log2(2) = 1 bit/s/Hz
  CHECK(rate_bps(env.cm, 20.0) == doctest::Approx(6.6582115e7).epsilon(1e-6));
  CHECK(rate_bps(env.cm, -200.0) == doctest::Approx(0.0).epsilon(1e-6));
  // monotone in snr
  CHECK(rate_bps(env.mm, 10.0) < rate_bps(env.mm, 10.5));
}

TEST_CASE("modulation cap") {
  Environment env = Environment::defaults();
  CHECK(cap_snr_db() == doctest::Approx(24.0654).epsilon(1e-5));
  // below the cap the two rates agree, above the capped one saturates
  CHECK(rate_capped_bps(env.cm, 20.0) == doctest::Approx(rate_bps(env.cm, 20.0)));
  CHECK(rate_capped_bps(env.cm, 30.0) == doctest::Approx(8.0 * env.cm.bandwidth_hz));
  CHECK(rate_capped_bps(env.mm, 40.0) == doctest::Approx(8.0 * env.mm.bandwidth_hz));
}

TEST_CASE("shadowing covariance values") {
  Environment env = Environment::defaults();  // nu = 1
  CHECK(shadow_cov_db2(env, Band::cm, Band::cm, 0.0) == doctest::Approx(25.0));
  CHECK(shadow_cov_db2(env, Band::mm, Band::mm, 0.0) == doctest::Approx(49.0));
  CHECK(shadow_cov_db2(env, Band::cm, Band::mm, 0.0) == doctest::Approx(26.25));
  // at delta == dcor the same-band value is sigma^2 / e for any kernel shape
  CHECK(shadow_cov_db2(env, Band::cm, Band::cm, 25.0) ==
        doctest::Approx(9.196986).epsilon(1e-6));
  CHECK(shadow_cov_db2(env, Band::mm, Band::mm, 24.0) ==
        doctest::Approx(49.0 / std::exp(1.0)).epsilon(1e-9));
  env.kernel_shape = 1.9;
  CHECK(shadow_cov_db2(env, Band::cm, Band::cm, 25.0) ==
        doctest::Approx(9.196986).epsilon(1e-6));
  // smoother kernel decays less at short range, more at long range
  Environment e1 = Environment::defaults();
  CHECK(shadow_cov_db2(env, Band::cm, Band::cm, 5.0) >
        shadow_cov_db2(e1, Band::cm, Band::cm, 5.0));
  CHECK(shadow_cov_db2(env, Band::cm, Band::cm, 80.0) <
        shadow_cov_db2(e1, Band::cm, Band::cm, 80.0));
  // cross-band covariance is symmetric in the band arguments
  CHECK(shadow_cov_db2(env, Band::cm, Band::mm, 13.0) ==
        doctest::Approx(shadow_cov_db2(env, Band::mm, Band::cm, 13.0)));
}

TEST_CASE("joint covariance matches the kernel entrywise and is psd") {
  Environment env = Environment::defaults();
  env.kernel_shape = 1.9;
  std::vector<Vec2> pos = {{0.0, 0.0}, {30.0, 0.0}, {30.0, 40.0}, {-5.0, 12.0}};
  Eigen::MatrixXd cov = joint_shadow_covariance(env, pos);
  const int t = static_cast<int>(pos.size());
  REQUIRE(cov.rows() == 2 * t);
  for (int i = 0; i < t; ++i) {
    for (int j = 0; j < t; ++j) {
      double d = distance(pos[static_cast<std::size_t>(i)], pos[static_cast<std::size_t>(j)]);
      CHECK(cov(i, j) == doctest::Approx(shadow_cov_db2(env, Band::cm, Band::cm, d)));
      CHECK(cov(t + i, t + j) == doctest::Approx(shadow_cov_db2(env, Band::mm, Band::mm, d)));
      CHECK(cov(i, t + j) == doctest::Approx(shadow_cov_db2(env, Band::cm, Band::mm, d)));
    }
  }
  CHECK(cov.isApprox(cov.transpose()));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  CHECK(es.eigenvalues().minCoeff() >= -1e-9);
}

TEST_CASE("shadowing draws are deterministic in the seed") {
  Environment env = Environment::defaults();
  std::vector<Vec2> pos;
  for (int i = 0; i < 16; ++i) pos.push_back({6.0 * i, 3.0 * i});
  Rng a(1234), b(1234), c(99);
  ShadowingDraw da = sample_shadowing(env, pos, a);
  ShadowingDraw db = sample_shadowing(env, pos, b);
  ShadowingDraw dc = sample_shadowing(env, pos, c);
  CHECK(da.cm.isApprox(db.cm));
  CHECK(da.mm.isApprox(db.mm));
  CHECK_FALSE(da.cm.isApprox(dc.cm));
}

TEST_CASE("empirical moments of the shadowing field") {
  Environment env = Environment::defaults();
  std::vector<Vec2> pos = {{0.0, 0.0}, {10.0, 0.0}};
  Rng rng(777);
  const int n = 20000;
  double s00 = 0, s01 = 0, scm_mm = 0, m0 = 0;
  for (int k = 0; k < n; ++k) {
    ShadowingDraw d = sample_shadowing(env, pos, rng);
    m0 += d.cm(0);
    s00 += d.cm(0) * d.cm(0);
    s01 += d.cm(0) * d.cm(1);
    scm_mm += d.cm(0) * d.mm(0);
  }
  m0 /= n;
  CHECK(std::abs(m0) < 0.15);  // zero-mean field
  CHECK(s00 / n == doctest::Approx(25.0).epsilon(0.04));
  CHECK(s01 / n == doctest::Approx(25.0 * std::exp(-10.0 / 25.0)).epsilon(0.06));
  CHECK(scm_mm / n == doctest::Approx(26.25).epsilon(0.06));
}

TEST_CASE("zero-variance environment yields the zero field") {
  Environment env = Environment::defaults();
  env.cm.shadow_sigma_db = 0.0;
  env.mm.shadow_sigma_db = 0.0;
  std::vector<Vec2> pos = {{0.0, 0.0}, {5.0, 5.0}};
  Rng rng(1);
  ShadowingDraw d = sample_shadowing(env, pos, rng);
  CHECK(d.cm.norm() == 0.0);
  CHECK(d.mm.norm() == 0.0);
}
