#pragma once

// Recovery of channel-model parameters from measured traces: a two-segment
// path-loss fit and a shadowing fit (variances, cross-band correlation,
// correlation length and kernel shape).  These feed ingested datasets back
// into the model-based decision rules.

#include <optional>
#include <utility>
#include <vector>

#include "dualband/common.hpp"

namespace dualband {

struct PathLossModel {
  double intercept_db = 0.0;  // loss at 1 m
  double pre_break_exponent = 2.0;
  double pathloss_exponent = 4.0;
  double break_distance_m = 50.0;
};

// Evaluate the fitted two-segment model at distance d (meters, >= 1).
double pathloss_model_db(const PathLossModel& model, double d_m);

// Least-squares two-segment fit in log10(d) with a continuity constraint at
// the breakpoint; the breakpoint itself is chosen by a grid search over the
// sample span refined by a bracketed minimization of the residual sum of
// squares.  `samples` holds (distance_m, received_power_dbm) pairs;
// tx_power_dbm converts received power into observed loss.
// Throws std::invalid_argument on fewer than 4 samples and std::runtime_error
// when the samples cannot bracket a breakpoint (no span).
PathLossModel fit_pathloss_two_segment(
    const std::vector<std::pair<double, double>>& samples, double tx_power_dbm);

// One independent shadowing realization: residuals for both bands observed at
// common positions.  Pairs are only formed within a group; distinct groups
// (e.g. distinct trajectories) carry independent shadowing processes.
struct ShadowGroup {
  std::vector<Vec2> positions;
  std::vector<double> s_c_db;
  std::vector<double> s_m_db;
};

struct ShadowingFit {
  double sigma_c_db = 0.0;
  double sigma_m_db = 0.0;
  double cross_correlation = 0.0;
  double decorrelation_c_m = 0.0;
  double decorrelation_m_m = 0.0;
  double kernel_shape = 1.0;
};

// Moment-based shadowing fit: per-band standard deviations, same-location
// cross-band Pearson correlation, and (decorrelation distance, kernel shape)
// from a least-squares line through log(-log c) of the displacement-binned
// empirical correlogram.  The kernel shape is shared across bands (one slope,
// two intercepts); pass fixed_nu to pin it and fit only the distances.
// Spatially white residuals collapse the decorrelation distance below the
// displacement resolution instead of failing.
// Throws std::invalid_argument on fewer than 100 samples per band or
// mismatched group arrays, std::runtime_error when every within-group
// displacement is zero (no diversity to bin).
ShadowingFit fit_shadowing_params(const std::vector<ShadowGroup>& groups,
                                  std::optional<double> fixed_nu = std::nullopt);

}  // namespace dualband
