#include "dualband/dataset.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "dualband/gaussian.hpp"

namespace dualband {

namespace {

// Ties rate_m == rate_c carry label 0; they have measure zero under the
// continuous shadowing model, so seeing many is a sign of a broken input.
int tie_count_warn_threshold() { return 1; }

void warn_ties(const char* where, long ties, std::size_t total) {
  if (ties >= tie_count_warn_threshold())
    std::cerr << where << ": " << ties << " of " << total
              << " points have rate_m == rate_c; labeled 0\n";
}

}  // namespace

std::size_t LabeledDataset::total_points() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.points.size();
  return n;
}

double LabeledDataset::label_balance() const {
  std::size_t n = 0, ones = 0;
  for (const auto& s : sequences)
    for (const auto& p : s.points) {
      ++n;
      ones += static_cast<std::size_t>(p.label);
    }
  if (n == 0) throw std::domain_error("label_balance: empty dataset");
  return static_cast<double>(ones) / static_cast<double>(n);
}

SamplePoint make_sample(const Environment& env, const Vec2& bs, const Vec2& position,
                        double s_c_db, double s_m_db) {
  SamplePoint p;
  p.position = position;
  p.d_m = distance(bs, position);
  p.theta_rad = std::atan2(position.y - bs.y, position.x - bs.x);
  p.s_c_db = s_c_db;
  p.s_m_db = s_m_db;
  p.snr_c_db = snr_at_db(env, env.cm, p.d_m, s_c_db);
  p.snr_m_db = snr_at_db(env, env.mm, p.d_m, s_m_db);
  p.rate_c_bps = rate_bps(env.cm, p.snr_c_db);
  p.rate_m_bps = rate_bps(env.mm, p.snr_m_db);
  p.delay_s = p.d_m / kSpeedOfLight;
  p.aod_rad = p.theta_rad;
  p.label = p.rate_m_bps > p.rate_c_bps ? 1 : 0;
  return p;
}

LabeledDataset build_one_shot_realization(const Environment& env, const CellGeometry& geom,
                                          int n_points, std::uint64_t seed) {
  if (n_points <= 0) throw std::invalid_argument("build_one_shot_realization: n_points must be positive");

  std::vector<Vec2> points = gen_uniform_points(geom, n_points, derive_seed(seed, 0));
  Rng rng(derive_seed(seed, 1));
  ShadowingDraw draw = sample_shadowing(env, points, rng);

  LabeledDataset ds;
  ds.seed = seed;
  ds.sequences.reserve(points.size());
  long ties = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    Sequence s;
    s.id = static_cast<int>(i);
    s.t_s = {0.0};
    s.points.push_back(make_sample(env, geom.bs, points[i],
                                   draw.cm(static_cast<Eigen::Index>(i)),
                                   draw.mm(static_cast<Eigen::Index>(i))));
    if (s.points.back().rate_m_bps == s.points.back().rate_c_bps) ++ties;
    ds.sequences.push_back(std::move(s));
  }
  warn_ties("build_one_shot_realization", ties, ds.total_points());
  return ds;
}

LabeledDataset build_sequential_dataset(const Environment& env, const CellGeometry& geom,
                                        const SmsParams& sms, int n_sequences,
                                        std::uint64_t seed) {
  if (n_sequences <= 0) throw std::invalid_argument("build_sequential_dataset: n_sequences must be positive");

  LabeledDataset ds;
  ds.seed = seed;
  ds.sequences.reserve(static_cast<std::size_t>(n_sequences));
  long ties = 0;
  for (int k = 0; k < n_sequences; ++k) {
    // one seed stream for the walk, one for the field, so trajectory changes
    // never shift another sequence's shadowing
    Trajectory traj = gen_sms_trajectory(geom, sms, derive_seed(seed, 2 * static_cast<std::uint64_t>(k)));
    Rng rng(derive_seed(seed, 2 * static_cast<std::uint64_t>(k) + 1));
    ShadowingDraw draw = sample_shadowing(env, traj.positions, rng);

    Sequence s;
    s.id = k;
    s.t_s = traj.frame_times_s;
    s.points.reserve(traj.positions.size());
    for (std::size_t i = 0; i < traj.positions.size(); ++i) {
      s.points.push_back(make_sample(env, geom.bs, traj.positions[i],
                                     draw.cm(static_cast<Eigen::Index>(i)),
                                     draw.mm(static_cast<Eigen::Index>(i))));
      if (s.points.back().rate_m_bps == s.points.back().rate_c_bps) ++ties;
    }
    ds.sequences.push_back(std::move(s));
  }
  warn_ties("build_sequential_dataset", ties, ds.total_points());
  return ds;
}

LabeledDataset build_circular_dataset(const Environment& env, const CellGeometry& geom,
                                      double radius_m, int n_frames, int n_sequences,
                                      std::uint64_t seed) {
  if (n_sequences <= 0) throw std::invalid_argument("build_circular_dataset: n_sequences must be positive");

  Trajectory circle = gen_circular_trajectory(radius_m, n_frames, geom);
  GaussianSampler sampler(joint_shadow_covariance(env, circle.positions));

  LabeledDataset ds;
  ds.seed = seed;
  ds.sequences.reserve(static_cast<std::size_t>(n_sequences));
  const auto n = static_cast<Eigen::Index>(circle.positions.size());
  long ties = 0;
  for (int k = 0; k < n_sequences; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    Eigen::VectorXd joint = sampler.draw(rng);  // band-major [cm; mm]

    Sequence s;
    s.id = k;
    s.t_s = circle.frame_times_s;
    s.points.reserve(circle.positions.size());
    for (Eigen::Index i = 0; i < n; ++i) {
      s.points.push_back(make_sample(env, geom.bs, circle.positions[static_cast<std::size_t>(i)],
                                     joint(i), joint(n + i)));
      if (s.points.back().rate_m_bps == s.points.back().rate_c_bps) ++ties;
    }
    ds.sequences.push_back(std::move(s));
  }
  warn_ties("build_circular_dataset", ties, ds.total_points());
  return ds;
}

double ba_error(const std::vector<int>& decisions, const std::vector<int>& labels) {
  if (decisions.empty()) throw std::domain_error("ba_error: empty input");
  if (decisions.size() != labels.size())
    throw std::invalid_argument("ba_error: decision/label size mismatch");
  long wrong = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) wrong += decisions[i] != labels[i] ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(decisions.size());
}

double rate_loss(const std::vector<int>& decisions,
                 const std::vector<std::pair<double, double>>& capped_rates) {
  if (decisions.empty()) throw std::domain_error("rate_loss: empty input");
  if (decisions.size() != capped_rates.size())
    throw std::invalid_argument("rate_loss: decision/rate size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const auto& [rc, rm] = capped_rates[i];
    double best = std::max(rc, rm);
    if (best <= 0.0) throw std::domain_error("rate_loss: nonpositive best rate");
    double chosen = decisions[i] == 1 ? rm : rc;
    acc += (best - chosen) / best;
  }
  return acc / static_cast<double>(decisions.size());
}

}  // namespace dualband
