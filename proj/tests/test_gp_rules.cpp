#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "dualband/gaussian.hpp"
#include "dualband/gp_rules.hpp"
#include "dualband/quadrature.hpp"
#include "dualband/rng.hpp"

using namespace dualband;

TEST_CASE("quadrature utilities") {
  // E[X^2] = sd^2 + mean^2 under the Gaussian weight
  auto sq = [](double x) { return x * x; };
  CHECK(gauss_hermite_expectation(sq, 0.0, 1.0, 64) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(gauss_hermite_expectation(sq, 2.0, 3.0, 64) == doctest::Approx(13.0).epsilon(1e-12));
  // E[cos X] = exp(-1/2) for X ~ N(0,1)
  auto cosx = [](double x) { return std::cos(x); };
  CHECK(gauss_hermite_expectation(cosx, 0.0, 1.0, 64) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  // weights sum to sqrt(pi)
  const GaussHermite& gh = gauss_hermite(64);
  CHECK(gh.weights.sum() == doctest::Approx(std::sqrt(M_PI)).epsilon(1e-12));

  auto sinx = [](double x) { return std::sin(x); };
  CHECK(adaptive_simpson(sinx, 0.0, M_PI, 1e-10) == doctest::Approx(2.0).epsilon(1e-9));
  auto steep = [](double x) { return 1.0 / (1.0 + std::exp(-200.0 * x)); };
  CHECK(adaptive_simpson(steep, -1.0, 1.0, 1e-8) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("q function and its inverse") {
  CHECK(q_function(0.0) == doctest::Approx(0.5));
  CHECK(q_inverse(0.5) == 0.0);  // exact by definition
  CHECK(q_function(1.6449) == doctest::Approx(0.05).epsilon(2e-3));
  CHECK(std::abs(q_function(1.6449) - 0.05) < 1e-4);
  for (double p : {0.001, 0.1, 0.3, 0.7, 0.95, 0.9999})
    CHECK(q_function(q_inverse(p)) == doctest::Approx(p).epsilon(1e-10));
  CHECK_THROWS_AS(q_inverse(0.0), std::domain_error);
  CHECK_THROWS_AS(q_inverse(1.0), std::domain_error);
}

TEST_CASE("scalar conditioning special cases") {
  // independent observation leaves the prior untouched
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(2, 2);
  cov(0, 0) = 4.0;
  Eigen::VectorXd v(1);
  v << 2.5;
  ConditionalGaussian g = condition_scalar(cov, {1}, v, 0);
  CHECK(g.mean == doctest::Approx(0.0));
  CHECK(g.variance == doctest::Approx(4.0));

  // conditioning a coordinate on itself pins it
  Eigen::MatrixXd cov2(2, 2);
  cov2 << 4.0, 1.0, 1.0, 2.0;
  g = condition_scalar(cov2, {0}, v, 0);
  CHECK(g.mean == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(g.variance == doctest::Approx(0.0));
}

TEST_CASE("matrix conditioning matches the two-variable closed form") {
  // mu = rho*(sigma_m/sigma_c)*s_c, var = (1-rho^2)*sigma_m^2
  Rng rng(314);
  for (int trial = 0; trial < 100; ++trial) {
    double sc = rng.uniform(0.5, 10.0);
    double sm = rng.uniform(0.5, 10.0);
    double rho = rng.uniform(-0.99, 0.99);
    double obs = rng.normal(0.0, sc);
    Eigen::MatrixXd cov(2, 2);
    cov << sc * sc, rho * sc * sm, rho * sc * sm, sm * sm;
    Eigen::VectorXd v(1);
    v << obs;
    ConditionalGaussian g = condition_scalar(cov, {0}, v, 1);
    CHECK(std::abs(g.mean - rho * (sm / sc) * obs) < 1e-10);
    CHECK(std::abs(g.variance - (1.0 - rho * rho) * sm * sm) < 1e-10);
  }
}

TEST_CASE("v_threshold properties") {
  Environment env = Environment::defaults();

  SUBCASE("identical bands give the identity") {
    Environment sym = env;
    sym.mm = sym.cm;
    LinkGains gains = link_gains(sym, 80.0);
    for (double s : {-12.0, -3.0, 0.0, 4.5, 20.0})
      CHECK(v_threshold(sym, gains, s) == doctest::Approx(s).epsilon(1e-9));
  }

  SUBCASE("threshold splits the rate comparison") {
    Rng rng(99);
    for (int i = 0; i < 1000; ++i) {
      double d = rng.uniform(2.0, 240.0);
      double s = rng.normal(0.0, 5.0);
      double delta = rng.uniform(0.01, 10.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      LinkGains gains = link_gains(env, d);
      double v = v_threshold(env, gains, s);
      double rc = rate_bps(env.cm, snr_at_db(env, env.cm, d, s));
      double rm = rate_bps(env.mm, snr_at_db(env, env.mm, d, v + delta));
      if (delta > 0.0)
        CHECK(rm > rc);
      else
        CHECK(rm < rc);
    }
  }

  SUBCASE("bisection oracle at 100 m") {
    LinkGains gains = link_gains(env, 100.0);
    double rc = rate_bps(env.cm, snr_at_db(env, env.cm, 100.0, 0.0));
    double lo = -100.0, hi = 100.0;
    for (int it = 0; it < 200; ++it) {
      double mid = (lo + hi) / 2.0;
      double rm = rate_bps(env.mm, snr_at_db(env, env.mm, 100.0, mid));
      (rm < rc ? lo : hi) = mid;
    }
    double v = v_threshold(env, gains, 0.0);
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx((lo + hi) / 2.0).epsilon(1e-9));
  }
}

TEST_CASE("tbba probability form equals the threshold form") {
  Environment env = Environment::defaults();
  Rng rng(5150);
  for (int i = 0; i < 10000; ++i) {
    double d = rng.uniform(2.0, 240.0);
    double s_c = rng.normal(0.0, env.cm.shadow_sigma_db);
    // threshold form: decide 1 iff the conditional mean reaches v1
    double v1 = v_threshold(env, link_gains(env, d), s_c);
    double mu = env.cross_correlation * (env.mm.shadow_sigma_db / env.cm.shadow_sigma_db) * s_c;
    int threshold_form = mu >= v1 ? 1 : 0;
    CHECK(tbba_decide(env, d, s_c) == threshold_form);
  }
}

TEST_CASE("tbba probability matches a conditional monte-carlo") {
  Environment env = Environment::defaults();
  Rng rng(777);
  const double sc = env.cm.shadow_sigma_db, sm = env.mm.shadow_sigma_db;
  const double rho = env.cross_correlation;
  for (double d : {40.0, 120.0, 200.0}) {
    double s_c = rng.normal(0.0, sc);
    double p = tbba_success_prob(env, d, s_c);
    double rc = rate_bps(env.cm, snr_at_db(env, env.cm, d, s_c));
    int wins = 0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
      double s_m = rho * (sm / sc) * s_c + std::sqrt(1.0 - rho * rho) * sm * rng.normal();
      if (rate_bps(env.mm, snr_at_db(env, env.mm, d, s_m)) > rc) ++wins;
    }
    CHECK(std::abs(p - static_cast<double>(wins) / n) < 2e-3);
  }
}

namespace {

// a history drawn from the true joint model along a short straight walk
History random_history(const GpRule& rule, Rng& rng, int q, double base_distance) {
  History h;
  double angle = rng.uniform(0.0, 2.0 * M_PI);
  double step = rng.uniform(2.0, 6.0);
  Vec2 dir{std::cos(angle), std::sin(angle)};
  Vec2 start{base_distance, 0.0};
  std::vector<Vec2> pos;
  for (int i = 0; i <= q; ++i)
    pos.push_back({start.x + dir.x * step * i, start.y + dir.y * step * i});
  Vec2 target{pos.back().x + dir.x * step * rule.horizon_u,
              pos.back().y + dir.y * step * rule.horizon_u};
  pos.push_back(target);
  Eigen::MatrixXd cov = joint_shadow_covariance(rule.env, pos);
  Eigen::VectorXd draw = sample_gaussian(cov, rng);
  int p = static_cast<int>(pos.size());
  for (int i = 0; i <= q; ++i)
    h.frames.push_back({pos[static_cast<std::size_t>(i)], draw(i), draw(p + i)});
  h.target = target;
  return h;
}

}  // namespace

TEST_CASE("exact rule with uninformative history equals the unconditional probability") {
  GpRule rule;
  rule.env = Environment::defaults();
  rule.env.cross_correlation = 0.0;
  rule.env.cm.decorrelation_m = 1e-6;  // no correlation in space either
  rule.env.mm.decorrelation_m = 1e-6;
  rule.window_q = 3;
  rule.horizon_u = 4;
  Rng rng(2718);
  History h = random_history(rule, rng, rule.window_q, 120.0);
  double p = exact_success_prob(h, rule);

  // direct two-band monte-carlo of P(R^m > R^c) at the target distance
  double d = distance(h.target, rule.bs);
  int wins = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    double s_c = rng.normal(0.0, rule.env.cm.shadow_sigma_db);
    double s_m = rng.normal(0.0, rule.env.mm.shadow_sigma_db);
    if (rate_bps(rule.env.mm, snr_at_db(rule.env, rule.env.mm, d, s_m)) >
        rate_bps(rule.env.cm, snr_at_db(rule.env, rule.env.cm, d, s_c)))
      ++wins;
  }
  CHECK(std::abs(p - static_cast<double>(wins) / n) < 2e-3);
}

TEST_CASE("exact rule basics over random histories") {
  GpRule rule;
  rule.env = Environment::defaults();
  Rng rng(1234);
  for (int trial = 0; trial < 50; ++trial) {
    double base = rng.uniform(30.0, 220.0);
    History h = random_history(rule, rng, rule.window_q, base);
    double p = exact_success_prob(h, rule);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);

    // more observed mmWave shadowing raises the predicted success
    History lifted = h;
    for (HistoryFrame& f : lifted.frames) f.s_m += 3.0;
    CHECK(exact_success_prob(lifted, rule) >= p - 1e-9);
  }
}

TEST_CASE("quadrature matches a conditional monte-carlo oracle") {
  // the full-scale version (100 histories, 10^6 draws) runs in the acceptance
  // suite; this is the same oracle at unit-test size
  GpRule rule;
  rule.env = Environment::defaults();
  Rng rng(555);
  for (int trial = 0; trial < 4; ++trial) {
    History h = random_history(rule, rng, rule.window_q, rng.uniform(50.0, 200.0));
    double p = exact_success_prob(h, rule);

    // joint conditional of (S^c, S^m) at the target given the history,
    // sampled directly
    std::vector<Vec2> pos;
    for (const HistoryFrame& f : h.frames) pos.push_back(f.position);
    pos.push_back(h.target);
    Eigen::MatrixXd cov = joint_shadow_covariance(rule.env, pos);
    int np = static_cast<int>(pos.size());
    std::vector<int> obs;
    Eigen::VectorXd vals(2 * h.frames.size());
    for (std::size_t i = 0; i < h.frames.size(); ++i) {
      obs.push_back(static_cast<int>(i));
      vals(static_cast<Eigen::Index>(i)) = h.frames[i].s_c;
    }
    for (std::size_t i = 0; i < h.frames.size(); ++i) {
      obs.push_back(np + static_cast<int>(i));
      vals(static_cast<Eigen::Index>(h.frames.size() + i)) = h.frames[i].s_m;
    }
    GaussianConditional post = condition_gaussian(Eigen::VectorXd::Zero(2 * np), cov, obs,
                                                  vals, {np - 1, 2 * np - 1});
    double d = distance(h.target, rule.bs);
    int wins = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd draw = sample_gaussian(post.cov, rng);
      double s_c = post.mean(0) + draw(0);
      double s_m = post.mean(1) + draw(1);
      if (rate_bps(rule.env.mm, snr_at_db(rule.env, rule.env.mm, d, s_m)) >
          rate_bps(rule.env.cm, snr_at_db(rule.env, rule.env.cm, d, s_c)))
        ++wins;
    }
    CHECK(std::abs(p - static_cast<double>(wins) / n) < 6e-3);
  }
}

TEST_CASE("approximate rule: empty history compares prior means") {
  GpRule rule;
  rule.env = Environment::defaults();
  History h;
  h.target = {60.0, 0.0};
  LinkGains gains = link_gains(rule.env, 60.0);
  double prior = rule.env.mm.bandwidth_hz * std::log(gains.mm) -
                 rule.env.cm.bandwidth_hz * std::log(gains.cm);
  CHECK(approx_mean_diff(h, rule) == doctest::Approx(prior));
  CHECK(approx_decide(h, rule) == (prior >= 0.0 ? 1 : 0));
}

TEST_CASE("high snr makes the approximation exact") {
  GpRule rule;
  rule.env = Environment::defaults();
  rule.env.cm.tx_power_dbm += 40.0;
  rule.env.mm.tx_power_dbm += 40.0;
  Rng rng(4242);
  int agree = 0;
  const int trials = 1000;
  for (int t = 0; t < trials; ++t) {
    History h = random_history(rule, rng, rule.window_q, rng.uniform(30.0, 220.0));
    int exact = map_decide(exact_success_prob(h, rule), 0.5);
    if (exact == approx_decide(h, rule)) ++agree;
  }
  CHECK(agree >= 990);
}

TEST_CASE("probability-to-decision map") {
  CHECK(map_decide(0.7, 0.5) == 1);
  CHECK(map_decide(0.5, 0.5) == 1);  // tie goes to mmWave
  CHECK(map_decide(0.49, 0.5) == 0);
  // theorem equivalence: argmax across the two classes == 0.5 threshold
  Rng rng(31337);
  for (int i = 0; i < 10000; ++i) {
    double p = rng.uniform();
    int argmax = p >= 1.0 - p ? 1 : 0;
    CHECK(map_decide(p, 0.5) == argmax);
  }
}

TEST_CASE("conditional variance never exceeds the prior") {
  GpRule rule;
  rule.env = Environment::defaults();
  Rng rng(808);
  for (int t = 0; t < 20; ++t) {
    History h = random_history(rule, rng, rule.window_q, rng.uniform(30.0, 200.0));
    std::vector<Vec2> pos;
    for (const HistoryFrame& f : h.frames) pos.push_back(f.position);
    pos.push_back(h.target);
    Eigen::MatrixXd cov = joint_shadow_covariance(rule.env, pos);
    int np = static_cast<int>(pos.size());
    std::vector<int> obs;
    Eigen::VectorXd vals(2 * h.frames.size());
    for (std::size_t i = 0; i < h.frames.size(); ++i) {
      obs.push_back(static_cast<int>(i));
      vals(static_cast<Eigen::Index>(i)) = h.frames[i].s_c;
    }
    for (std::size_t i = 0; i < h.frames.size(); ++i) {
      obs.push_back(np + static_cast<int>(i));
      vals(static_cast<Eigen::Index>(h.frames.size() + i)) = h.frames[i].s_m;
    }
    ConditionalGaussian c = condition_scalar(cov, obs, vals, 2 * np - 1);
    CHECK(c.variance <= cov(2 * np - 1, 2 * np - 1) + 1e-9);
  }
}
