#include "dualband/fitting.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace dualband {

namespace {

// Residual sum of squares of the continuity-constrained two-segment model for
// a fixed breakpoint (log10 meters).  Returns the fitted parameters through
// `theta` = (intercept, pre-break slope, post-break slope) with slopes in
// dB/decade/10 (i.e. the path-loss exponents).  Rank-deficient layouts
// return +inf so the candidate is skipped.
double two_segment_rss(const std::vector<double>& lg, const std::vector<double>& pl,
                       double b, Eigen::Vector3d& theta) {
  const int n = static_cast<int>(lg.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    if (lg[i] <= b) {
      a.row(i) << 1.0, 10.0 * lg[i], 0.0;
    } else {
      a.row(i) << 1.0, 10.0 * b, 10.0 * (lg[i] - b);
    }
    y(i) = pl[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < 3) return std::numeric_limits<double>::infinity();
  theta = qr.solve(y);
  return (a * theta - y).squaredNorm();
}

struct BinStat {
  double sum_c = 0.0, sum_m = 0.0, sum_lg = 0.0;
  std::int64_t count = 0;
};

}  // namespace

double pathloss_model_db(const PathLossModel& model, double d_m) {
  if (d_m < 1.0) throw std::domain_error("pathloss_model_db: distance below 1 m");
  const double lg = std::log10(d_m);
  const double lb = std::log10(model.break_distance_m);
  if (lg <= lb) return model.intercept_db + 10.0 * model.pre_break_exponent * lg;
  return model.intercept_db + 10.0 * model.pre_break_exponent * lb +
         10.0 * model.pathloss_exponent * (lg - lb);
}

PathLossModel fit_pathloss_two_segment(
    const std::vector<std::pair<double, double>>& samples, double tx_power_dbm) {
  if (samples.size() < 4)
    throw std::invalid_argument("fit_pathloss_two_segment: need at least 4 samples");
  std::vector<double> lg, pl;
  lg.reserve(samples.size());
  pl.reserve(samples.size());
  for (const auto& [d, rx] : samples) {
    if (d <= 0.0) throw std::invalid_argument("fit_pathloss_two_segment: non-positive distance");
    lg.push_back(std::log10(d));
    pl.push_back(tx_power_dbm - rx);
  }
  std::vector<double> sorted = lg;
  std::sort(sorted.begin(), sorted.end());
  // keep at least two samples on each side of any candidate breakpoint
  const double lo = sorted[1], hi = sorted[sorted.size() - 2];
  if (!(hi > lo))
    throw std::runtime_error("fit_pathloss_two_segment: samples do not span a breakpoint");

  Eigen::Vector3d theta;
  auto rss = [&](double b) { return two_segment_rss(lg, pl, b, theta); };

  // coarse grid, then two shrinking sub-grids, then a golden-section polish
  double best_b = lo, best_rss = std::numeric_limits<double>::infinity();
  double left = lo, right = hi;
  for (int round = 0; round < 3; ++round) {
    const int pts = round == 0 ? 81 : 41;
    double round_best = best_b, round_rss = std::numeric_limits<double>::infinity();
    for (int i = 0; i < pts; ++i) {
      const double b = left + (right - left) * i / (pts - 1);
      const double r = rss(b);
      if (r < round_rss) {
        round_rss = r;
        round_best = b;
      }
    }
    if (round_rss < best_rss) {
      best_rss = round_rss;
      best_b = round_best;
    }
    const double h = (right - left) / (pts - 1);
    left = std::max(lo, best_b - h);
    right = std::min(hi, best_b + h);
  }
  if (!std::isfinite(best_rss))
    throw std::runtime_error("fit_pathloss_two_segment: samples do not span a breakpoint");

  constexpr double kInvPhi = 0.6180339887498949;
  double x1 = right - kInvPhi * (right - left);
  double x2 = left + kInvPhi * (right - left);
  double f1 = rss(x1), f2 = rss(x2);
  for (int it = 0; it < 90 && right - left > 1e-14; ++it) {
    if (f1 < f2) {
      right = x2;
      x2 = x1;
      f2 = f1;
      x1 = right - kInvPhi * (right - left);
      f1 = rss(x1);
    } else {
      left = x1;
      x1 = x2;
      f1 = f2;
      x2 = left + kInvPhi * (right - left);
      f2 = rss(x2);
    }
  }
  double b = f1 < f2 ? x1 : x2;
  if (rss(b) > best_rss) b = best_b;  // keep the grid optimum if the polish regressed
  (void)rss(b);                       // refresh theta at the final breakpoint

  PathLossModel model;
  model.intercept_db = theta(0);
  model.pre_break_exponent = theta(1);
  model.pathloss_exponent = theta(2);
  model.break_distance_m = std::pow(10.0, b);
  return model;
}

ShadowingFit fit_shadowing_params(const std::vector<ShadowGroup>& groups,
                                  std::optional<double> fixed_nu) {
  std::size_t n = 0;
  for (const auto& g : groups) {
    if (g.positions.size() != g.s_c_db.size() || g.positions.size() != g.s_m_db.size())
      throw std::invalid_argument("fit_shadowing_params: group arrays differ in length");
    n += g.positions.size();
  }
  if (n < 100)
    throw std::invalid_argument("fit_shadowing_params: need at least 100 samples per band");

  double mean_c = 0.0, mean_m = 0.0;
  for (const auto& g : groups)
    for (std::size_t i = 0; i < g.positions.size(); ++i) {
      mean_c += g.s_c_db[i];
      mean_m += g.s_m_db[i];
    }
  mean_c /= static_cast<double>(n);
  mean_m /= static_cast<double>(n);
  double var_c = 0.0, var_m = 0.0, cov_cm = 0.0;
  for (const auto& g : groups)
    for (std::size_t i = 0; i < g.positions.size(); ++i) {
      const double dc = g.s_c_db[i] - mean_c, dm = g.s_m_db[i] - mean_m;
      var_c += dc * dc;
      var_m += dm * dm;
      cov_cm += dc * dm;
    }
  var_c /= static_cast<double>(n - 1);
  var_m /= static_cast<double>(n - 1);
  cov_cm /= static_cast<double>(n - 1);

  ShadowingFit fit;
  fit.sigma_c_db = std::sqrt(var_c);
  fit.sigma_m_db = std::sqrt(var_m);
  fit.cross_correlation =
      var_c > 0.0 && var_m > 0.0 ? cov_cm / (fit.sigma_c_db * fit.sigma_m_db) : 0.0;

  // within-group pair displacements; stride the enumeration when huge
  std::int64_t total_pairs = 0;
  for (const auto& g : groups) {
    const std::int64_t t = static_cast<std::int64_t>(g.positions.size());
    total_pairs += t * (t - 1) / 2;
  }
  const std::int64_t stride = std::max<std::int64_t>(1, total_pairs / 4'000'000);

  double max_delta = 0.0;
  double min_delta = std::numeric_limits<double>::infinity();
  std::vector<double> deltas;
  deltas.reserve(static_cast<std::size_t>(std::min<std::int64_t>(total_pairs / stride + 1, 4'100'000)));
  std::int64_t counter = 0;
  for (const auto& g : groups)
    for (std::size_t i = 0; i < g.positions.size(); ++i)
      for (std::size_t j = i + 1; j < g.positions.size(); ++j) {
        if (counter++ % stride != 0) continue;
        const double d = distance(g.positions[i], g.positions[j]);
        max_delta = std::max(max_delta, d);
        if (d > 0.0) {
          min_delta = std::min(min_delta, d);
          deltas.push_back(d);
        }
      }
  if (deltas.empty())
    throw std::runtime_error("fit_shadowing_params: no displacement diversity in any group");

  std::vector<double> q = deltas;
  auto mid = q.begin() + static_cast<std::ptrdiff_t>(0.4 * static_cast<double>(q.size()));
  std::nth_element(q.begin(), mid, q.end());
  double range = *mid;
  if (range <= 0.0) range = max_delta;
  constexpr int kBins = 24;
  const double width = range / kBins;

  std::vector<BinStat> bins(kBins);
  counter = 0;
  for (const auto& g : groups)
    for (std::size_t i = 0; i < g.positions.size(); ++i)
      for (std::size_t j = i + 1; j < g.positions.size(); ++j) {
        if (counter++ % stride != 0) continue;
        const double d = distance(g.positions[i], g.positions[j]);
        if (d <= 0.0 || d >= range) continue;
        auto& bin = bins[static_cast<std::size_t>(d / width)];
        bin.sum_c += (g.s_c_db[i] - mean_c) * (g.s_c_db[j] - mean_c);
        bin.sum_m += (g.s_m_db[i] - mean_m) * (g.s_m_db[j] - mean_m);
        bin.sum_lg += std::log(d);
        bin.count += 1;
      }

  // Regression points y = log(-log c) vs x = mean log displacement, per band.
  // A physical correlogram decays from 1, so usable bins must form a prefix:
  // once the estimate drops to the noise floor, later bins (pure sampling
  // noise around zero) may not re-enter the fit.
  struct RegPoint {
    double x, y, w;
  };
  auto prefix_points = [&](double BinStat::* sum, double var) {
    std::vector<RegPoint> pts;
    bool started = false;
    for (const auto& bin : bins) {
      if (bin.count < 30) continue;
      const double c = bin.*sum / static_cast<double>(bin.count) / var;
      if (c >= 0.95) {
        if (started) break;  // saturated head is fine, saturation after decay is noise
        continue;
      }
      if (c <= 0.05) break;
      started = true;
      pts.push_back({bin.sum_lg / static_cast<double>(bin.count), std::log(-std::log(c)),
                     static_cast<double>(bin.count)});
    }
    return pts;
  };
  const std::vector<RegPoint> pts_c = prefix_points(&BinStat::sum_c, var_c);
  const std::vector<RegPoint> pts_m = prefix_points(&BinStat::sum_m, var_m);

  const double collapsed = 0.5 * min_delta;  // below the displacement resolution
  const bool have_c = pts_c.size() >= 2, have_m = pts_m.size() >= 2;
  double nu;
  if (fixed_nu) {
    nu = *fixed_nu;
  } else if (have_c || have_m) {
    // shared slope, one intercept per band: minimize sum w (y - nu x - a_b)^2
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Eigen::Vector3d atb = Eigen::Vector3d::Zero();
    auto accumulate = [&](const std::vector<RegPoint>& pts, int band) {
      for (const auto& p : pts) {
        Eigen::Vector3d row(p.x, band == 0 ? 1.0 : 0.0, band == 1 ? 1.0 : 0.0);
        ata += p.w * row * row.transpose();
        atb += p.w * row * p.y;
      }
    };
    if (have_c) accumulate(pts_c, 0);
    if (have_m) accumulate(pts_m, 1);
    ata.diagonal() += Eigen::Vector3d::Constant(1e-12);
    const Eigen::Vector3d sol = ata.ldlt().solve(atb);
    nu = std::clamp(sol(0), 0.05, 8.0);
  } else {
    nu = 1.0;
  }
  fit.kernel_shape = nu;

  auto band_dcor = [&](const std::vector<RegPoint>& pts) {
    if (pts.size() < 2) return collapsed;
    // with nu known, a = weighted mean of (y - nu x); dcor = exp(-a / nu)
    double sw = 0.0, sa = 0.0;
    for (const auto& p : pts) {
      sw += p.w;
      sa += p.w * (p.y - nu * p.x);
    }
    return std::exp(-sa / sw / nu);
  };
  fit.decorrelation_c_m = band_dcor(pts_c);
  fit.decorrelation_m_m = band_dcor(pts_m);
  return fit;
}

}  // namespace dualband
