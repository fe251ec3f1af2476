#include "dualband/mobility.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>

namespace dualband {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Walkers bounce off a disc slightly larger than the minimum BS distance so
// that grid snapping (up to spacing/sqrt(2) of displacement) can never move a
// node inside the 1 m limit.
double exclusion_radius(const CellGeometry& geom) {
  return kMinDistanceM + geom.grid_spacing_m * std::sqrt(0.5);
}

Vec2 snap_to_grid(const CellGeometry& geom, const Vec2& p) {
  double s = geom.grid_spacing_m;
  return {geom.bs.x + std::round((p.x - geom.bs.x) / s) * s,
          geom.bs.y + std::round((p.y - geom.bs.y) / s) * s};
}

bool same_node(const Vec2& a, const Vec2& b) { return a.x == b.x && a.y == b.y; }

}  // namespace

std::vector<Vec2> gen_uniform_points(const CellGeometry& geom, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("gen_uniform_points: n must be >= 1");
  if (geom.side_m < 4.0 * kMinDistanceM)
    throw std::invalid_argument("gen_uniform_points: cell too small for the BS exclusion");
  Rng rng(seed);
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(n));
  double half = geom.side_m / 2.0;
  while (out.size() < static_cast<std::size_t>(n)) {
    Vec2 p{geom.bs.x + rng.uniform(-half, half), geom.bs.y + rng.uniform(-half, half)};
    if (distance(p, geom.bs) < kMinDistanceM) continue;
    out.push_back(p);
  }
  return out;
}

Trajectory gen_sms_trajectory(const CellGeometry& geom, const SmsParams& params,
                              std::uint64_t seed) {
  if (params.sample_period_s <= 0.0 || params.sim_duration_s <= 0.0 ||
      params.max_speed_mps < 0.0)
    throw std::invalid_argument("gen_sms_trajectory: invalid durations or speed");
  Rng rng(seed);
  const double half = geom.side_m / 2.0;
  const double excl = exclusion_radius(geom);

  // start anywhere in the cell but outside the exclusion disc
  Vec2 pos;
  do {
    pos = {geom.bs.x + rng.uniform(-half, half), geom.bs.y + rng.uniform(-half, half)};
  } while (distance(pos, geom.bs) < excl);

  enum class Phase { accel, steady, decel, pause };
  Phase phase = Phase::accel;
  double phase_left = rng.uniform(params.accel_min_s, params.accel_max_s);
  double phase_total = phase_left;
  double heading = rng.uniform(0.0, 2.0 * kPi);
  double target_speed = rng.uniform(0.0, params.max_speed_mps);

  const int n_frames = static_cast<int>(params.sim_duration_s / params.sample_period_s);
  const int sub = std::max(1, static_cast<int>(std::ceil(params.sample_period_s)));
  const double dt = params.sample_period_s / sub;

  std::vector<Vec2> raw;
  raw.reserve(static_cast<std::size_t>(n_frames));
  raw.push_back(snap_to_grid(geom, pos));

  for (int frame = 1; frame < n_frames; ++frame) {
    for (int step = 0; step < sub; ++step) {
      // advance the phase machine (a step can span several short phases)
      double left = dt;
      while (phase_left < left) {
        left -= phase_left;
        switch (phase) {
          case Phase::accel:
            phase = Phase::steady;
            phase_left = rng.uniform(params.steady_min_fraction * params.sim_duration_s,
                                     params.sim_duration_s);
            break;
          case Phase::steady:
            phase = Phase::decel;
            phase_left = rng.uniform(params.decel_min_s, params.decel_max_s);
            break;
          case Phase::decel:
            phase = Phase::pause;
            phase_left = rng.uniform(params.pause_min_s, params.pause_max_s);
            break;
          case Phase::pause:  // new cycle: fresh direction and speed
            phase = Phase::accel;
            phase_left = rng.uniform(params.accel_min_s, params.accel_max_s);
            heading = rng.uniform(0.0, 2.0 * kPi);
            target_speed = rng.uniform(0.0, params.max_speed_mps);
            break;
        }
        phase_total = phase_left;
      }

      double speed = 0.0;
      switch (phase) {
        case Phase::accel:
          speed = target_speed * (1.0 - phase_left / std::max(phase_total, 1e-12));
          break;
        case Phase::steady:
          speed = target_speed;
          if (rng.uniform() > params.direction_hold_prob)
            heading += rng.uniform(-kPi / 6.0, kPi / 6.0);
          break;
        case Phase::decel:
          speed = target_speed * (phase_left / std::max(phase_total, 1e-12));
          break;
        case Phase::pause:
          speed = 0.0;
          break;
      }
      phase_left -= left;

      Vec2 cand{pos.x + speed * dt * std::cos(heading),
                pos.y + speed * dt * std::sin(heading)};
      // reflect at the cell walls
      if (cand.x - geom.bs.x > half) {
        cand.x = 2.0 * (geom.bs.x + half) - cand.x;
        heading = kPi - heading;
      } else if (cand.x - geom.bs.x < -half) {
        cand.x = 2.0 * (geom.bs.x - half) - cand.x;
        heading = kPi - heading;
      }
      if (cand.y - geom.bs.y > half) {
        cand.y = 2.0 * (geom.bs.y + half) - cand.y;
        heading = -heading;
      } else if (cand.y - geom.bs.y < -half) {
        cand.y = 2.0 * (geom.bs.y - half) - cand.y;
        heading = -heading;
      }
      // bounce back from the BS exclusion disc
      if (distance(cand, geom.bs) < excl) {
        heading += kPi;
        Vec2 back{pos.x + speed * dt * std::cos(heading),
                  pos.y + speed * dt * std::sin(heading)};
        if (distance(back, geom.bs) >= excl && std::abs(back.x - geom.bs.x) <= half &&
            std::abs(back.y - geom.bs.y) <= half)
          cand = back;
        else
          cand = pos;  // stay put for this step
      }
      pos = cand;
    }
    raw.push_back(snap_to_grid(geom, pos));
  }

  // drop consecutive duplicates, then truncate at the crossing cap
  Trajectory traj;
  traj.seed = seed;
  std::map<std::pair<long long, long long>, int> visits;
  auto node_key = [&](const Vec2& p) {
    return std::pair<long long, long long>(
        std::llround((p.x - geom.bs.x) / geom.grid_spacing_m),
        std::llround((p.y - geom.bs.y) / geom.grid_spacing_m));
  };
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!traj.positions.empty() && same_node(traj.positions.back(), raw[i])) continue;
    int& count = visits[node_key(raw[i])];
    if (count >= params.max_crossings) break;
    ++count;
    traj.positions.push_back(raw[i]);
    traj.frame_times_s.push_back(static_cast<double>(i) * params.sample_period_s);
  }
  return traj;
}

Trajectory gen_circular_trajectory(double radius_m, int n_frames, const CellGeometry& geom) {
  if (radius_m < kMinDistanceM || radius_m > geom.side_m / 2.0)
    throw std::domain_error("gen_circular_trajectory: radius outside [d_min, side/2]");
  if (n_frames < 1) throw std::invalid_argument("gen_circular_trajectory: n_frames must be >= 1");
  Trajectory traj;
  traj.positions.reserve(static_cast<std::size_t>(n_frames));
  for (int k = 0; k < n_frames; ++k) {
    double a = 2.0 * kPi * k / n_frames;
    traj.positions.push_back(
        {geom.bs.x + radius_m * std::cos(a), geom.bs.y + radius_m * std::sin(a)});
    traj.frame_times_s.push_back(static_cast<double>(k));
  }
  return traj;
}

}  // namespace dualband
