#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "dualband/channel.hpp"
#include "dualband/mobility.hpp"

namespace dualband {

// One labeled observation of the dual-band link at a position.
// Rates are uncapped Shannon rates; the label compares them directly, the
// modulation ceiling only enters the rate-loss metric.
struct SamplePoint {
  Vec2 position;
  double d_m = 0.0;
  double theta_rad = 0.0;     // angle from the BS, atan2 convention
  double s_c_db = 0.0;        // shadowing
  double s_m_db = 0.0;
  double snr_c_db = 0.0;
  double snr_m_db = 0.0;
  double rate_c_bps = 0.0;
  double rate_m_bps = 0.0;
  std::optional<double> delay_s;   // dominant-path delay, when available
  std::optional<double> aod_rad;   // dominant-path departure angle
  int label = 0;                   // 1 iff rate_m > rate_c
};

struct Sequence {
  int id = 0;
  std::vector<double> t_s;  // per-frame timestamps
  std::vector<SamplePoint> points;

  int length() const { return static_cast<int>(points.size()); }
};

enum class Provenance { stochastic, ingested };

struct LabeledDataset {
  Provenance provenance = Provenance::stochastic;
  std::uint64_t seed = 0;
  std::vector<Sequence> sequences;

  std::size_t total_points() const;
  double label_balance() const;  // fraction of labels equal to 1
};

// Fill in everything derivable from a position and a shadowing pair; delay
// and AoD are the line-of-sight values (d/c and theta).
SamplePoint make_sample(const Environment& env, const Vec2& bs, const Vec2& position,
                        double s_c_db, double s_m_db);

// One cell realization of the one-shot experiment: n points uniform in the
// cell, a single joint shadowing draw across every point and both bands.
// Sequences are singletons (seq id = point index) so the one-shot and the
// sequential format share a container.
LabeledDataset build_one_shot_realization(const Environment& env, const CellGeometry& geom,
                                          int n_points, std::uint64_t seed);

// Walker sequences; each sequence gets an independent joint shadowing draw
// over its frames and both bands.
LabeledDataset build_sequential_dataset(const Environment& env, const CellGeometry& geom,
                                        const SmsParams& sms, int n_sequences,
                                        std::uint64_t seed);

// Sequences repeating one circle around the BS, shadowing independent across
// sequences. The circle geometry is shared, so the covariance is factored
// once for all draws.
LabeledDataset build_circular_dataset(const Environment& env, const CellGeometry& geom,
                                      double radius_m, int n_frames, int n_sequences,
                                      std::uint64_t seed);

// Mean |decision - label|. Throws std::domain_error on empty input.
double ba_error(const std::vector<int>& decisions, const std::vector<int>& labels);

// Mean normalized shortfall of the chosen band's capped rate against the
// per-instant capped maximum. Pairs are (cm, mm) capped rates in bit/s.
double rate_loss(const std::vector<int>& decisions,
                 const std::vector<std::pair<double, double>>& capped_rates);

}  // namespace dualband
