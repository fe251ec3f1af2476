#pragma once

// Experiment orchestration: the one-shot and sequential band-assignment
// studies and the horizon / threshold / window sweeps.  Everything is
// deterministic given the config seed; rules inside one experiment share the
// same splits and the same evaluation instants so their errors are
// comparable.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dualband/channel.hpp"
#include "dualband/dataset.hpp"
#include "dualband/gp_rules.hpp"
#include "dualband/ml_rules.hpp"
#include "dualband/mobility.hpp"

namespace dualband {

// The model-based rules' observation bundle for a decision at instant t of a
// sequence: frames t-Q..t (oldest first) and the position at t+U.
// Requires t >= window_q and t + horizon_u < seq.length().
History make_history(const Sequence& seq, int t, int window_q, int horizon_u);

// Feature combinations of the result tables.  One-shot menus differ from
// sequential ones; index is 1-based (c-1 .. c-7).
FeatureSpec one_shot_combination(int index);
FeatureSpec sequential_combination(int index, int window_q);

// Deterministic shuffle split of {0..n-1}: first fraction -> train.
// Fractions must lie in (0,1); both sides are guaranteed non-empty.
std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double train_fraction,
                                                            std::uint64_t seed);

struct ResultRow {
  std::string rule;
  int combination = 0;  // 0 for rules that take no feature combination
  int horizon_u = 0;    // 0 for one-shot rows
  double gamma_t = 0.5;
  int window_q = 0;  // 0 for one-shot rows
  double ba_error = 0.0;
  double rate_loss = 0.0;
  long n_test = 0;
  std::uint64_t seed = 0;
};

struct ExperimentReport {
  std::vector<ResultRow> rows;
  double label_balance = 0.0;
  double wall_seconds = 0.0;
  std::vector<std::string> notes;  // selected layouts, alphas, thresholds, ...
};

// The one-shot environment: defaults with the rougher kernel shape used by
// the single-decision study.
Environment one_shot_environment();

struct OneShotConfig {
  Environment env = one_shot_environment();
  CellGeometry geom;
  int realizations = 200;
  int points = 2000;
  double train_fraction = 0.65;
  std::vector<int> combinations = {1, 2, 3, 4, 5, 6, 7};
  bool run_nn = true;
  bool run_gr = true;
  bool run_lr = true;
  bool run_tbba = true;
  bool run_cm_only = true;
  // model selection: Monte-Carlo CV on the training split of the first
  // realization; the winner is retrained per realization
  int cv_repeats = 3;
  double cv_fraction = 0.25;
  std::vector<double> alpha_grid = {0.01, 0.05, 0.1, 0.3};
  int jobs = 1;  // worker threads for the per-realization loop
  std::uint64_t seed = 1;
};

// Per combination and rule: select once by CV, then per realization retrain
// on the 65% split and evaluate on the 35% split; report the unweighted mean
// of per-realization test errors.  TBBA and the cmWave-only baseline take no
// features and appear once (combination 0).
ExperimentReport run_one_shot(const OneShotConfig& cfg);

// Same protocol on caller-provided cell realizations (datasets of singleton
// sequences, e.g. ingested traces); cfg.realizations and cfg.points yield to
// the data. Selection still happens on the first realization's train split.
ExperimentReport run_one_shot(const OneShotConfig& cfg,
                              const std::vector<LabeledDataset>& realizations);

// Train one one-shot rule ("lr", "gr", "nn") on the given realization exactly
// as the experiment trains its first realization: CV selection and threshold
// calibration on the train split, then a final fit. The returned model
// carries the calibrated gamma_t; `note` (optional) receives the selected
// candidate's description.
TrainedModel train_one_shot_rule(const OneShotConfig& cfg, const LabeledDataset& ds,
                                 const std::string& rule, int combination,
                                 std::string* note = nullptr);

struct SequentialConfig {
  Environment env = Environment::defaults();
  CellGeometry geom;
  SmsParams sms;
  int sequences = 1000;
  double train_fraction = 0.7;
  int window_q = 5;
  std::vector<int> horizons = {4, 8};
  std::vector<int> combinations = {1, 2, 3, 4, 5, 6, 7};
  bool run_gp = true;
  bool run_gp_app = true;
  bool run_lstm_std = true;
  bool run_lstm_opd = false;  // full Table-I search; expensive, off by default
  bool run_nn_h = true;
  bool run_gr_h = true;
  double alpha = 0.05;   // fixed penalty for the sequential learned rules
  double gamma_t = 0.5;  // fixed decision threshold
  // LSTM selection: schedule (and for lstm_opd the layout) chosen by
  // validation CE on held-out sequences, trained on a capped subset
  bool lstm_schedule_cv = true;
  int lstm_cv_sequences = 50;
  int lstm_cv_train_sequences = 100;
  int lstm_cv_epoch_cap = 150;
  TrainConfig nn_h_cfg = one_shot_schedule();
  TrainConfig gr_h_cfg = logistic_schedule();
  int jobs = 1;  // worker threads for model-based evaluation
  std::uint64_t seed = 1;
};

// Sequence-level 70/30 split.  All rules decide at the common instants
// t in [Q, T-1-U] of each test sequence about the label at t+U, so every row
// of one run rests on the same decision set.
ExperimentReport run_sequential(const SequentialConfig& cfg);

// Same protocol on a caller-provided sequence dataset (e.g. an ingested
// trace); cfg.sequences yields to the data.
ExperimentReport run_sequential(const SequentialConfig& cfg, const LabeledDataset& ds);

// Train one sequential rule ("lstm_std", "lstm_opd", "nn_h", "gr_h") for the
// given horizon exactly as the experiment does, including the LSTM schedule /
// layout selection and its seed streams. GP rules carry no learned state and
// are rejected.
TrainedModel train_sequential_rule(const SequentialConfig& cfg, const LabeledDataset& ds,
                                   const std::string& rule, int combination, int horizon_u,
                                   std::string* note = nullptr);

// Horizon sweep: rows per enabled rule per U.  Model-based rules are
// re-evaluated; learned rules are retrained per U (expensive, honor the
// toggles).  Combinations are taken from cfg.combinations.
ExperimentReport sweep_horizon(const SequentialConfig& cfg, const std::vector<int>& u_values);

// Threshold sweep at U = cfg.horizons.front(): soft outputs / success
// probabilities are computed once and re-thresholded per gamma.
ExperimentReport sweep_gamma(const SequentialConfig& cfg, const std::vector<double>& gammas);

struct QSweepConfig {
  Environment env = Environment::defaults();
  CellGeometry geom;
  double radius_m = 125.0;
  int frames = 157;  // one lap at the typical steady walking pace
  int sequences = 5000;
  int horizon_u = 4;
  std::vector<int> q_values = {0, 1, 2, 3, 4, 5, 6, 8, 10};
  int jobs = 1;
  std::uint64_t seed = 1;
};

// Observation-window sweep on fixed-geometry circular trajectories with
// independent shadowing per sequence; model-based rules only.  Decisions for
// every Q run at the common instants t in [max Q, T-1-U].
ExperimentReport sweep_window(const QSweepConfig& cfg);

}  // namespace dualband
