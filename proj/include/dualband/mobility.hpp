#pragma once

#include <cstdint>
#include <vector>

#include "dualband/common.hpp"
#include "dualband/rng.hpp"

namespace dualband {

// Square cell, BS at the center, trajectory nodes on a regular grid.
struct CellGeometry {
  double side_m = 500.0;
  Vec2 bs{0.0, 0.0};
  double grid_spacing_m = 5.0;
};

// Walker parameters: cycles of acceleration -> steady -> deceleration ->
// pause. Phase durations are drawn uniformly from the given ranges at each
// phase entry; the steady phase lasts between steady_min_fraction*duration
// and the full duration. Heading and target speed are redrawn at each cycle
// start; during the steady phase the heading is held with
// direction_hold_prob per integration step, else nudged within +/- pi/6.
struct SmsParams {
  double sim_duration_s = 900.0;
  double sample_period_s = 4.0;
  double max_speed_mps = 1.5;
  double accel_min_s = 4.0;
  double accel_max_s = 20.0;
  double decel_min_s = 4.0;
  double decel_max_s = 20.0;
  double pause_min_s = 0.0;
  double pause_max_s = 8.0;
  double steady_min_fraction = 0.5;
  double direction_hold_prob = 0.95;
  int max_crossings = 3;  // visits allowed per grid node before truncation
};

struct Trajectory {
  std::vector<Vec2> positions;     // snapped to the grid for walker output
  std::vector<double> frame_times_s;
  std::uint64_t seed = 0;
};

// n i.i.d. uniform positions in the cell, each at least kMinDistanceM from
// the BS (rejection sampling). Not grid-snapped.
std::vector<Vec2> gen_uniform_points(const CellGeometry& geom, int n, std::uint64_t seed);

// One walker trace: a position per sample period, snapped to the grid,
// consecutive duplicates removed, truncated once any node would be visited
// more than max_crossings times.
Trajectory gen_sms_trajectory(const CellGeometry& geom, const SmsParams& params,
                              std::uint64_t seed);

// n_frames equally spaced points around the BS at the given radius,
// starting on the +x axis, counter-clockwise. Not grid-snapped.
Trajectory gen_circular_trajectory(double radius_m, int n_frames, const CellGeometry& geom);

}  // namespace dualband
