#include "dualband/gp_rules.hpp"

#include <cmath>
#include <stdexcept>

#include "dualband/gaussian.hpp"
#include "dualband/quadrature.hpp"

namespace dualband {

namespace {

constexpr double kLn10 = 2.30258509299404568402;

double clamp01(double p) { return p < 0.0 ? 0.0 : (p > 1.0 ? 1.0 : p); }

// Acklam's rational approximation to the standard normal quantile.
double norm_quantile(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double q_inverse(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("q_inverse: p must lie in (0,1)");
  if (p == 0.5) return 0.0;
  double x = -norm_quantile(p);  // Q(x) = p  <=>  Phi(-x)... seed, then polish
  for (int it = 0; it < 2; ++it) {
    double err = q_function(x) - p;
    double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    if (pdf <= 0.0) break;
    x += err / pdf;  // dQ/dx = -pdf
  }
  return x;
}

ConditionalGaussian condition_scalar(const Eigen::MatrixXd& prior_cov,
                                     const std::vector<int>& observed,
                                     const Eigen::VectorXd& values, int target) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(prior_cov.rows());
  GaussianConditional post = condition_gaussian(mean, prior_cov, observed, values, {target});
  ConditionalGaussian out;
  out.mean = post.mean(0);
  out.variance = std::max(post.cov(0, 0), 0.0);
  return out;
}

LinkGains link_gains(const Environment& env, double distance_m) {
  return {mean_snr_linear(env, env.cm, distance_m), mean_snr_linear(env, env.mm, distance_m)};
}

double v_threshold(const Environment& env, const LinkGains& gains, double s_db) {
  // rate parity: w_c*ln(1 + g_c*10^{s/10}) = w_m*ln(1 + g_m*10^{V/10})
  double a = (env.cm.bandwidth_hz / env.mm.bandwidth_hz) *
             std::log1p(gains.cm * std::pow(10.0, 0.1 * s_db));
  double ln_inner;
  if (a > 30.0)
    ln_inner = a + std::log1p(-std::exp(-a));  // ln(e^a - 1) without overflow
  else
    ln_inner = std::log(std::expm1(a));
  return (ln_inner - std::log(gains.mm)) * (10.0 / kLn10);
}

double tbba_success_prob(const Environment& env, double distance_m, double s_c_db) {
  const double sc = env.cm.shadow_sigma_db, sm = env.mm.shadow_sigma_db;
  const double rho = env.cross_correlation;
  double v1 = v_threshold(env, link_gains(env, distance_m), s_c_db);
  // cross-band conditional of S^m given S^c; rho = 0 degenerates to the
  // unconditional tail probability
  double mu = rho * (sm / sc) * s_c_db;
  double var = (1.0 - rho * rho) * sm * sm;
  if (var <= 0.0) return v1 < mu ? 1.0 : (v1 > mu ? 0.0 : 0.5);
  if (std::isinf(v1)) return v1 > 0.0 ? 0.0 : 1.0;
  return q_function((v1 - mu) / std::sqrt(var));
}

int tbba_decide(const Environment& env, double distance_m, double s_c_db) {
  return map_decide(tbba_success_prob(env, distance_m, s_c_db), 0.5);
}

namespace {

struct DecisionContext {
  Eigen::MatrixXd cov;          // joint prior over history + target, both bands
  std::vector<int> observed;    // history coordinate indices
  Eigen::VectorXd values;       // observed shadowing
  int c_target = 0;
  int m_target = 0;
  int n_positions = 0;
};

DecisionContext build_context(const History& h, const GpRule& rule) {
  DecisionContext ctx;
  std::vector<Vec2> positions;
  positions.reserve(h.frames.size() + 1);
  for (const HistoryFrame& f : h.frames) positions.push_back(f.position);
  positions.push_back(h.target);
  ctx.n_positions = static_cast<int>(positions.size());
  ctx.cov = joint_shadow_covariance(rule.env, positions);
  const int p = ctx.n_positions;
  const int nf = static_cast<int>(h.frames.size());
  ctx.c_target = p - 1;
  ctx.m_target = 2 * p - 1;
  ctx.observed.reserve(2 * static_cast<std::size_t>(nf));
  ctx.values.resize(2 * nf);
  for (int i = 0; i < nf; ++i) {
    ctx.observed.push_back(i);
    ctx.values(i) = h.frames[static_cast<std::size_t>(i)].s_c;
  }
  for (int i = 0; i < nf; ++i) {
    ctx.observed.push_back(p + i);
    ctx.values(nf + i) = h.frames[static_cast<std::size_t>(i)].s_m;
  }
  return ctx;
}

}  // namespace

double exact_success_prob(const History& h, const GpRule& rule) {
  DecisionContext ctx = build_context(h, rule);
  // cmWave shadowing at the target given the history
  ConditionalGaussian outer = condition_scalar(ctx.cov, ctx.observed, ctx.values, ctx.c_target);

  // mmWave posterior given history plus the target cmWave value s: its mean
  // is affine in s, its variance constant; recover both from two evaluations
  std::vector<int> obs_plus = ctx.observed;
  obs_plus.push_back(ctx.c_target);
  Eigen::VectorXd vals_plus(ctx.values.size() + 1);
  vals_plus.head(ctx.values.size()) = ctx.values;
  vals_plus(ctx.values.size()) = 0.0;
  ConditionalGaussian inner0 = condition_scalar(ctx.cov, obs_plus, vals_plus, ctx.m_target);
  vals_plus(ctx.values.size()) = 1.0;
  ConditionalGaussian inner1 = condition_scalar(ctx.cov, obs_plus, vals_plus, ctx.m_target);
  const double a0 = inner0.mean;
  const double slope = inner1.mean - inner0.mean;
  const double sd_in = std::sqrt(inner0.variance);

  LinkGains gains = link_gains(rule.env, distance(h.target, rule.bs));
  auto success_given_s = [&](double s) {
    double v = v_threshold(rule.env, gains, s);
    double mu = a0 + slope * s;
    if (sd_in <= 1e-12) return v < mu ? 1.0 : (v > mu ? 0.0 : 0.5);
    if (std::isinf(v)) return v > 0.0 ? 0.0 : 1.0;
    return q_function((v - mu) / sd_in);
  };

  const double sd_out = std::sqrt(outer.variance);
  if (sd_out <= 1e-12) return clamp01(success_given_s(outer.mean));

  double p64 = gauss_hermite_expectation(success_given_s, outer.mean, sd_out, 64);
  double p128 = gauss_hermite_expectation(success_given_s, outer.mean, sd_out, 128);
  if (std::abs(p64 - p128) < 1e-6) return clamp01(p128);

  // stiff integrand (step-like Q factor): integrate the windowed density
  const double norm = 1.0 / (sd_out * std::sqrt(2.0 * M_PI));
  auto integrand = [&](double s) {
    double z = (s - outer.mean) / sd_out;
    return success_given_s(s) * norm * std::exp(-0.5 * z * z);
  };
  double p = adaptive_simpson(integrand, outer.mean - 8.0 * sd_out, outer.mean + 8.0 * sd_out,
                              1e-6);
  return clamp01(p);
}

double approx_mean_diff(const History& h, const GpRule& rule) {
  const double k = kLn10 / 10.0;
  const double wc = rule.env.cm.bandwidth_hz, wm = rule.env.mm.bandwidth_hz;
  LinkGains gains = link_gains(rule.env, distance(h.target, rule.bs));
  const double prior = wm * std::log(gains.mm) - wc * std::log(gains.cm);
  if (h.frames.empty()) return prior;

  DecisionContext ctx = build_context(h, rule);
  // extend the prior with the linearized rate difference D as one extra
  // coordinate, then condition it on the history
  const int n = static_cast<int>(ctx.cov.rows());
  Eigen::MatrixXd cov_d(n + 1, n + 1);
  cov_d.topLeftCorner(n, n) = ctx.cov;
  for (int j = 0; j < n; ++j) {
    double c = k * (wm * ctx.cov(ctx.m_target, j) - wc * ctx.cov(ctx.c_target, j));
    cov_d(n, j) = cov_d(j, n) = c;
  }
  cov_d(n, n) = k * k *
                (wm * wm * ctx.cov(ctx.m_target, ctx.m_target) +
                 wc * wc * ctx.cov(ctx.c_target, ctx.c_target) -
                 2.0 * wm * wc * ctx.cov(ctx.c_target, ctx.m_target));
  ConditionalGaussian post = condition_scalar(cov_d, ctx.observed, ctx.values, n);
  return prior + post.mean;
}

int approx_decide(const History& h, const GpRule& rule) {
  return approx_mean_diff(h, rule) >= 0.0 ? 1 : 0;
}

int map_decide(double p, double gamma_t) { return p >= gamma_t ? 1 : 0; }

}  // namespace dualband
