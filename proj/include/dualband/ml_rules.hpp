#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dualband/dataset.hpp"
#include "dualband/rng.hpp"

namespace dualband {

// ---------------------------------------------------------------------------
// Features

// The six side-information inputs: f1 distance, f2 angle, f3/f4 received
// band powers, f5 dominant-path delay, f6 dominant-path AoD.
enum class Feature { distance, angle, cm_power, mm_power, delay, aod };

const char* feature_name(Feature f);
Feature feature_from_name(const std::string& name);  // throws std::invalid_argument

struct FeatureSpec {
  std::vector<Feature> features;  // non-empty, ordered
  int window_q = 0;               // previous frames appended; 0 for one-shot

  int frame_dim() const { return static_cast<int>(features.size()); }
  int length() const { return frame_dim() * (window_q + 1); }
};

// One feature with its scale rule applied: log10 for distance, everything
// else passed through (powers are already in dB). Throws std::runtime_error
// naming the field when an optional input is absent.
double raw_feature(const SamplePoint& p, Feature f);

// One-shot vector; spec.window_q must be 0.
Eigen::VectorXd assemble_features(const SamplePoint& p, const FeatureSpec& spec);

// Windowed vector at instant t of a sequence: frames t-Q..t flattened oldest
// first. Requires t >= spec.window_q.
Eigen::VectorXd assemble_features(const Sequence& seq, int t, const FeatureSpec& spec);

// Per-dimension affine map fitted on training rows only. Zero-variance
// dimensions are dropped (with a warning) rather than divided by zero.
struct Standardizer {
  Eigen::VectorXd mean;   // full input dimension
  Eigen::VectorXd scale;  // 1/std for kept dimensions, 0 for dropped ones
  std::vector<int> kept;  // surviving input dimensions, ascending

  int in_dim() const { return static_cast<int>(mean.size()); }
  int out_dim() const { return static_cast<int>(kept.size()); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply_rows(const Eigen::MatrixXd& rows) const;
};

Standardizer fit_standardizer(const Eigen::MatrixXd& rows);  // needs >= 2 rows

// ---------------------------------------------------------------------------
// Networks

struct LayerSpec {
  enum class Kind { fc, lstm, relu };
  Kind kind = Kind::fc;
  int width = 0;  // ignored for relu
};

// A hidden stack; every network ends with an implied (FC:2)+softmax head
// whose second output is the soft decision.
struct NetworkSpec {
  std::string name = "custom";
  std::vector<LayerSpec> layers;

  bool recurrent() const;
};

NetworkSpec logistic_spec();                           // empty stack: plain GR
NetworkSpec mlp_spec(const std::vector<int>& hidden);  // FC+ReLU per entry
// The sixteen study architectures NW0..NW15; the data-dependent entries scale
// with the per-frame feature count F. NW4 is the fixed reference network.
NetworkSpec table_network(int index, int feature_count);

struct TrainConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double initial_lr = 0.01;
  double lr_drop_factor = 0.1;
  int drop_after_epochs = 120;  // drop period in epochs; 0 disables drops
  int max_epochs = 600;
  int minibatch_sequences = 3;  // 0 trains full batch
  bool shuffle = true;
  double tol_ce = 0.0;  // full-batch stop when |CE change| < tol; 0 disables
  std::uint64_t seed = 1;
};

TrainConfig shuffled_schedule();    // 600 epochs, batch 3, drop 0.1 every 120
TrainConfig unshuffled_schedule();  // 120 epochs, batch 4, drop 0.009 every 50
TrainConfig one_shot_schedule();    // 500 epochs, full batch, flat rate
TrainConfig logistic_schedule();    // full batch to |dCE| < 1e-8

// Parameter layout plus forward/backward for one NetworkSpec. Parameters live
// in a single flat vector so optimizers and finite-difference checks treat
// every architecture uniformly. Inputs are standardized features.
class Network {
 public:
  Network(NetworkSpec spec, int input_dim);

  const NetworkSpec& spec() const { return spec_; }
  int input_dim() const { return input_dim_; }
  int n_params() const { return n_params_; }

  // Glorot-uniform weights, zero biases; consumes rng in layout order.
  Eigen::VectorXd init_params(Rng& rng) const;
  // 1 for multiplicative weights, 0 for biases (L2 skips biases).
  const Eigen::VectorXd& weight_mask() const { return weight_mask_; }

  // Soft decision per row. For a recurrent spec the rows form one sequence in
  // time order and state is carried across them; otherwise rows are independent.
  Eigen::VectorXd forward(const Eigen::MatrixXd& rows, const Eigen::VectorXd& theta) const;

  // Sum of cross-entropy over rows with mask != 0 and its gradient; the L2
  // term is the trainer's job. Returns the labeled-row count in n_labeled.
  double ce_sum_and_grad(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                         const std::vector<char>& mask, const Eigen::VectorXd& theta,
                         Eigen::VectorXd& grad, long& n_labeled) const;

 private:
  struct Block {
    LayerSpec::Kind kind = LayerSpec::Kind::fc;
    int in = 0, out = 0;          // relu: in == out
    int off_w = 0, off_b = 0;     // fc
    int off_wx = 0, off_wh = 0;   // lstm (gate order i,f,g,o)
  };

  NetworkSpec spec_;
  int input_dim_ = 0;
  int n_params_ = 0;
  std::vector<Block> blocks_;  // hidden stack + the FC:2 head
  Eigen::VectorXd weight_mask_;
};

// Largest relative disagreement between analytic and central-difference
// gradients of the regularized loss at theta.
double gradient_check(const Network& net, const Eigen::MatrixXd& rows,
                      const Eigen::VectorXd& labels, const std::vector<char>& mask,
                      const Eigen::VectorXd& theta, double alpha, double step);

// ---------------------------------------------------------------------------
// Trained models

enum class ModelKind { linear, logistic, mlp, lstm };

const char* model_kind_name(ModelKind k);
ModelKind model_kind_from_name(const std::string& name);

struct TrainedModel {
  ModelKind kind = ModelKind::logistic;
  FeatureSpec spec;
  Standardizer standardizer;
  NetworkSpec net;        // empty stack for linear/logistic
  Eigen::VectorXd theta;  // network parameters; for linear, weights then bias
  double gamma_t = 0.5;
  double alpha = 0.0;
  std::vector<double> train_ce;  // per-epoch training objective
};

// Mean clipped cross-entropy between soft decisions and {0,1} labels.
double cross_entropy(const Eigen::VectorXd& soft, const Eigen::VectorXd& labels);

// Ridge least squares on {0,1} labels, bias unpenalized, closed form. Rows
// are raw (unstandardized) features; the model standardizes internally.
TrainedModel train_linear(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                          const FeatureSpec& spec, double alpha);

// Full-batch Adam on CE + alpha*L2 until |CE change| < cfg.tol_ce or the
// epoch budget. Identical code path to a hidden-layer-free network.
TrainedModel train_logistic(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                            const FeatureSpec& spec, double alpha, const TrainConfig& cfg);

TrainedModel train_mlp(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                       const FeatureSpec& spec, const NetworkSpec& net, double alpha,
                       const TrainConfig& cfg);

// One training sequence: per-frame raw features and the frame's own label.
struct SequenceExample {
  Eigen::MatrixXd frames;  // T x frame_dim
  Eigen::VectorXd labels;  // length T
};

SequenceExample make_sequence_example(const Sequence& seq, const FeatureSpec& spec);

// Many-to-many training with labels shifted by the horizon: the target at
// frame t is labels[t+u], the last u frames drop out of the loss. Sequences
// not longer than u are skipped with a warning; all skipped is an error.
TrainedModel train_lstm(const std::vector<SequenceExample>& seqs, const FeatureSpec& spec,
                        const NetworkSpec& net, double alpha, const TrainConfig& cfg,
                        int horizon_u);

// Soft decisions. predict/predict_rows reject recurrent models;
// predict_sequence handles every kind, feeding recurrent models the whole
// prefix and windowed/one-shot models each row independently.
double predict(const TrainedModel& m, const Eigen::VectorXd& raw_features);
Eigen::VectorXd predict_rows(const TrainedModel& m, const Eigen::MatrixXd& rows);
Eigen::VectorXd predict_sequence(const TrainedModel& m, const Eigen::MatrixXd& frames);

// 1 iff soft > gamma_t; the tie goes to the cmWave band, unlike the
// probability-rule mapping which sends ties to mmWave.
int decide(const TrainedModel& m, double soft);

// ---------------------------------------------------------------------------
// Model selection

struct CvCandidate {
  ModelKind kind = ModelKind::mlp;
  NetworkSpec net;  // ignored for linear
  double alpha = 0.0;
  TrainConfig cfg;
};

struct CvSelection {
  CvCandidate best;
  double best_ce = 0.0;
  std::vector<double> mean_ce;  // per candidate, same order as the input
};

// Monte-Carlo cross-validation on i.i.d. rows: `repeats` random splits with
// the given validation fraction; candidates are ranked by mean validation CE.
CvSelection monte_carlo_cv(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                           const FeatureSpec& spec, const std::vector<CvCandidate>& candidates,
                           int repeats, double validation_fraction, std::uint64_t seed);

// Sequence-level variant: each repeat holds out n_validation whole sequences.
CvSelection monte_carlo_cv_sequences(const std::vector<SequenceExample>& seqs,
                                     const FeatureSpec& spec,
                                     const std::vector<CvCandidate>& candidates, int repeats,
                                     int n_validation, int horizon_u, std::uint64_t seed);

// Grid {0, 0.05, ..., 1} minimizing the mean validation BA error across
// splits; ties resolve toward 0.5, then toward the smaller value.
double calibrate_threshold(const std::vector<Eigen::VectorXd>& val_soft,
                           const std::vector<Eigen::VectorXd>& val_labels);

// The fixed one-shot search menu: twelve hidden layouts within the four-layer
// / hundred-neuron budget crossed with an alpha grid.
std::vector<CvCandidate> one_shot_candidates(ModelKind kind, const TrainConfig& cfg,
                                             const std::vector<double>& alpha_grid);

}  // namespace dualband
