#include "dualband/ml_rules.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dualband {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kCeClip = 1e-12;

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  double e = std::exp(u);
  return e / (1.0 + e);
}

double clipped_ce_term(double p, double y) {
  double q = std::min(1.0 - kCeClip, std::max(kCeClip, p));
  return y > 0.5 ? -std::log(q) : -std::log(1.0 - q);
}

}  // namespace

// ---------------------------------------------------------------------------
// Features

const char* feature_name(Feature f) {
  switch (f) {
    case Feature::distance: return "d";
    case Feature::angle: return "theta";
    case Feature::cm_power: return "cm_power";
    case Feature::mm_power: return "mm_power";
    case Feature::delay: return "delay";
    case Feature::aod: return "aod";
  }
  throw std::logic_error("feature_name: bad enum");
}

Feature feature_from_name(const std::string& name) {
  for (Feature f : {Feature::distance, Feature::angle, Feature::cm_power, Feature::mm_power,
                    Feature::delay, Feature::aod})
    if (name == feature_name(f)) return f;
  throw std::invalid_argument("unknown feature name: " + name);
}

double raw_feature(const SamplePoint& p, Feature f) {
  switch (f) {
    case Feature::distance: return std::log10(p.d_m);
    case Feature::angle: return p.theta_rad;
    case Feature::cm_power: return p.snr_c_db;
    case Feature::mm_power: return p.snr_m_db;
    case Feature::delay:
      if (!p.delay_s) throw std::runtime_error("feature 'delay' requested but delay_s is absent");
      return *p.delay_s;
    case Feature::aod:
      if (!p.aod_rad) throw std::runtime_error("feature 'aod' requested but aod_rad is absent");
      return *p.aod_rad;
  }
  throw std::logic_error("raw_feature: bad enum");
}

Eigen::VectorXd assemble_features(const SamplePoint& p, const FeatureSpec& spec) {
  if (spec.features.empty()) throw std::invalid_argument("assemble_features: empty feature spec");
  if (spec.window_q != 0)
    throw std::invalid_argument("assemble_features: windowed spec given a single point");
  VectorXd x(spec.frame_dim());
  for (int j = 0; j < spec.frame_dim(); ++j) x(j) = raw_feature(p, spec.features[static_cast<std::size_t>(j)]);
  return x;
}

Eigen::VectorXd assemble_features(const Sequence& seq, int t, const FeatureSpec& spec) {
  if (spec.features.empty()) throw std::invalid_argument("assemble_features: empty feature spec");
  if (t < spec.window_q || t >= seq.length())
    throw std::out_of_range("assemble_features: instant outside the windowed range");
  const int f = spec.frame_dim();
  VectorXd x(spec.length());
  for (int k = 0; k <= spec.window_q; ++k) {  // oldest frame first
    const SamplePoint& p = seq.points[static_cast<std::size_t>(t - spec.window_q + k)];
    for (int j = 0; j < f; ++j) x(k * f + j) = raw_feature(p, spec.features[static_cast<std::size_t>(j)]);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Standardizer

Standardizer fit_standardizer(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2) throw std::invalid_argument("fit_standardizer: needs at least 2 rows");
  Standardizer s;
  const Index d = rows.cols();
  s.mean = rows.colwise().mean();
  s.scale = VectorXd::Zero(d);
  for (Index j = 0; j < d; ++j) {
    double var = (rows.col(j).array() - s.mean(j)).square().sum() /
                 static_cast<double>(rows.rows() - 1);
    double sd = std::sqrt(var);
    if (sd > 1e-12 * std::max(1.0, std::abs(s.mean(j)))) {
      s.scale(j) = 1.0 / sd;
      s.kept.push_back(static_cast<int>(j));
    } else {
      std::cerr << "fit_standardizer: dropping constant feature column " << j << "\n";
    }
  }
  if (s.kept.empty()) throw std::runtime_error("fit_standardizer: every feature column is constant");
  return s;
}

Eigen::VectorXd Standardizer::apply(const Eigen::VectorXd& x) const {
  if (x.size() != mean.size()) throw std::invalid_argument("Standardizer: dimension mismatch");
  VectorXd out(static_cast<Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    int j = kept[i];
    out(static_cast<Index>(i)) = (x(j) - mean(j)) * scale(j);
  }
  return out;
}

Eigen::MatrixXd Standardizer::apply_rows(const Eigen::MatrixXd& rows) const {
  if (rows.cols() != mean.size()) throw std::invalid_argument("Standardizer: dimension mismatch");
  MatrixXd out(rows.rows(), static_cast<Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    int j = kept[i];
    out.col(static_cast<Index>(i)) = (rows.col(j).array() - mean(j)) * scale(j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Network specs and schedules

bool NetworkSpec::recurrent() const {
  for (const auto& l : layers)
    if (l.kind == LayerSpec::Kind::lstm) return true;
  return false;
}

NetworkSpec logistic_spec() { return NetworkSpec{"GR", {}}; }

NetworkSpec mlp_spec(const std::vector<int>& hidden) {
  NetworkSpec s;
  s.name = "mlp";
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    s.name += (i ? "-" : ":") + std::to_string(hidden[i]);
    s.layers.push_back({LayerSpec::Kind::fc, hidden[i]});
    s.layers.push_back({LayerSpec::Kind::relu, 0});
  }
  return s;
}

NetworkSpec table_network(int index, int feature_count) {
  const int f = feature_count;
  if (f <= 0) throw std::invalid_argument("table_network: feature count must be positive");
  auto fc = [](int w) { return LayerSpec{LayerSpec::Kind::fc, w}; };
  auto lstm = [](int w) { return LayerSpec{LayerSpec::Kind::lstm, w}; };
  auto relu = []() { return LayerSpec{LayerSpec::Kind::relu, 0}; };
  NetworkSpec s;
  s.name = "NW" + std::to_string(index);
  switch (index) {
    case 0: s.layers = {fc(5), lstm(5), fc(5)}; break;
    case 1: s.layers = {fc(15), lstm(10), fc(10)}; break;
    case 2: s.layers = {fc(50), lstm(10), fc(10)}; break;
    case 3: s.layers = {fc(30), lstm(20), fc(15)}; break;
    case 4: s.layers = {fc(20), lstm(40), fc(20)}; break;
    case 5: s.layers = {fc(15), lstm(10), fc(10), relu(), fc(7)}; break;
    case 6: s.layers = {fc(10), lstm(50), fc(7)}; break;
    case 7: s.layers = {fc(2 * f), lstm(2 * f), fc(2 * f)}; break;
    case 8: s.layers = {fc(3 * f), lstm(3 * f), fc(2 * f)}; break;
    case 9: s.layers = {fc(10 * f), lstm(9 * f), fc(5 * f)}; break;
    case 10: s.layers = {fc(10 * f), lstm(5 * f)}; break;
    case 11: s.layers = {fc(5 * f), lstm(10 * f)}; break;
    case 12: s.layers = {lstm(10 * f)}; break;
    case 13: s.layers = {fc(3 * f), lstm(15 * f), fc(4 * f)}; break;
    case 14: s.layers = {fc(20), lstm(40), relu()}; break;
    case 15: s.layers = {fc(3 * f), lstm(15 * f), fc(4 * f), relu()}; break;
    default: throw std::invalid_argument("table_network: index must be in 0..15");
  }
  return s;
}

TrainConfig shuffled_schedule() {
  TrainConfig c;
  c.max_epochs = 600;
  c.minibatch_sequences = 3;
  c.shuffle = true;
  c.lr_drop_factor = 0.1;
  c.drop_after_epochs = 120;
  return c;
}

TrainConfig unshuffled_schedule() {
  TrainConfig c;
  c.max_epochs = 120;
  c.minibatch_sequences = 4;
  c.shuffle = false;
  c.lr_drop_factor = 0.009;
  c.drop_after_epochs = 50;
  return c;
}

TrainConfig one_shot_schedule() {
  TrainConfig c;
  c.max_epochs = 500;
  c.minibatch_sequences = 0;
  c.shuffle = false;
  c.drop_after_epochs = 0;
  c.tol_ce = 1e-7;  // plateau stop; full batch makes the objective comparable
  return c;
}

TrainConfig logistic_schedule() {
  TrainConfig c = one_shot_schedule();
  c.max_epochs = 2000;
  c.tol_ce = 1e-8;
  return c;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(NetworkSpec spec, int input_dim) : spec_(std::move(spec)), input_dim_(input_dim) {
  if (input_dim <= 0) throw std::invalid_argument("Network: input dimension must be positive");
  int cur = input_dim;
  int off = 0;
  for (const auto& l : spec_.layers) {
    Block b;
    b.kind = l.kind;
    b.in = cur;
    switch (l.kind) {
      case LayerSpec::Kind::fc:
        if (l.width <= 0) throw std::invalid_argument("Network: fc width must be positive");
        b.out = l.width;
        b.off_w = off;
        off += b.out * b.in;
        b.off_b = off;
        off += b.out;
        cur = b.out;
        break;
      case LayerSpec::Kind::lstm:
        if (l.width <= 0) throw std::invalid_argument("Network: lstm width must be positive");
        b.out = l.width;
        b.off_wx = off;
        off += 4 * b.out * b.in;
        b.off_wh = off;
        off += 4 * b.out * b.out;
        b.off_b = off;
        off += 4 * b.out;
        cur = b.out;
        break;
      case LayerSpec::Kind::relu:
        b.out = cur;
        break;
    }
    blocks_.push_back(b);
  }
  // the implied two-way softmax head
  Block head;
  head.kind = LayerSpec::Kind::fc;
  head.in = cur;
  head.out = 2;
  head.off_w = off;
  off += 2 * cur;
  head.off_b = off;
  off += 2;
  blocks_.push_back(head);
  n_params_ = off;

  weight_mask_ = VectorXd::Zero(n_params_);
  for (const auto& b : blocks_) {
    if (b.kind == LayerSpec::Kind::fc) {
      weight_mask_.segment(b.off_w, b.out * b.in).setOnes();
    } else if (b.kind == LayerSpec::Kind::lstm) {
      weight_mask_.segment(b.off_wx, 4 * b.out * b.in).setOnes();
      weight_mask_.segment(b.off_wh, 4 * b.out * b.out).setOnes();
    }
  }
}

Eigen::VectorXd Network::init_params(Rng& rng) const {
  VectorXd theta = VectorXd::Zero(n_params_);
  auto glorot = [&](int off, int rows, int cols) {
    double lim = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (int k = 0; k < rows * cols; ++k) theta(off + k) = rng.uniform(-lim, lim);
  };
  for (const auto& b : blocks_) {
    if (b.kind == LayerSpec::Kind::fc) {
      glorot(b.off_w, b.out, b.in);
    } else if (b.kind == LayerSpec::Kind::lstm) {
      glorot(b.off_wx, 4 * b.out, b.in);
      glorot(b.off_wh, 4 * b.out, b.out);
    }
  }
  return theta;
}

namespace {

using MapMat = Eigen::Map<const MatrixXd>;
using MapVec = Eigen::Map<const VectorXd>;
using MutMat = Eigen::Map<MatrixXd>;
using MutVec = Eigen::Map<VectorXd>;

// per-lstm-block forward cache for backpropagation through time
struct LstmCache {
  MatrixXd x;       // T x in, block input
  MatrixXd gates;   // T x 4H, activations in gate order i,f,g,o
  MatrixXd c;       // T x H, cell state
  MatrixXd tanh_c;  // T x H
  MatrixXd h;       // T x H, block output
};

}  // namespace

Eigen::VectorXd Network::forward(const Eigen::MatrixXd& rows, const Eigen::VectorXd& theta) const {
  if (rows.cols() != input_dim_) throw std::invalid_argument("Network::forward: input width mismatch");
  if (theta.size() != n_params_) throw std::invalid_argument("Network::forward: parameter size mismatch");
  const Index t_len = rows.rows();
  MatrixXd a = rows;
  for (const auto& b : blocks_) {
    switch (b.kind) {
      case LayerSpec::Kind::fc: {
        MapMat w(theta.data() + b.off_w, b.out, b.in);
        MapVec bias(theta.data() + b.off_b, b.out);
        a = ((a * w.transpose()).rowwise() + bias.transpose()).eval();
        break;
      }
      case LayerSpec::Kind::relu:
        a = a.cwiseMax(0.0);
        break;
      case LayerSpec::Kind::lstm: {
        const int hdim = b.out;
        MapMat wx(theta.data() + b.off_wx, 4 * hdim, b.in);
        MapMat wh(theta.data() + b.off_wh, 4 * hdim, hdim);
        MapVec bias(theta.data() + b.off_b, 4 * hdim);
        MatrixXd pre = a * wx.transpose();  // T x 4H
        MatrixXd out(t_len, hdim);
        VectorXd h = VectorXd::Zero(hdim), c = VectorXd::Zero(hdim);
        for (Index t = 0; t < t_len; ++t) {
          VectorXd gate = pre.row(t).transpose() + wh * h + bias;
          for (int k = 0; k < hdim; ++k) {
            double gi = sigmoid(gate(k));
            double gf = sigmoid(gate(hdim + k));
            double gg = std::tanh(gate(2 * hdim + k));
            double go = sigmoid(gate(3 * hdim + k));
            c(k) = gf * c(k) + gi * gg;
            h(k) = go * std::tanh(c(k));
          }
          out.row(t) = h.transpose();
        }
        a = std::move(out);
        break;
      }
    }
  }
  // a is now the head output, T x 2
  VectorXd p(t_len);
  for (Index t = 0; t < t_len; ++t) p(t) = sigmoid(a(t, 1) - a(t, 0));
  return p;
}

double Network::ce_sum_and_grad(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                                const std::vector<char>& mask, const Eigen::VectorXd& theta,
                                Eigen::VectorXd& grad, long& n_labeled) const {
  const Index t_len = rows.rows();
  if (rows.cols() != input_dim_) throw std::invalid_argument("Network::ce_sum_and_grad: input width mismatch");
  if (labels.size() != t_len || static_cast<Index>(mask.size()) != t_len)
    throw std::invalid_argument("Network::ce_sum_and_grad: label/mask length mismatch");
  if (theta.size() != n_params_) throw std::invalid_argument("Network::ce_sum_and_grad: parameter size mismatch");

  if (grad.size() != n_params_) grad = VectorXd::Zero(n_params_);

  // forward, keeping the activation matrix after every block
  std::vector<MatrixXd> acts;
  acts.reserve(blocks_.size() + 1);
  acts.push_back(rows);
  std::vector<LstmCache> caches(blocks_.size());
  for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
    const Block& b = blocks_[bi];
    const MatrixXd& a = acts.back();
    switch (b.kind) {
      case LayerSpec::Kind::fc: {
        MapMat w(theta.data() + b.off_w, b.out, b.in);
        MapVec bias(theta.data() + b.off_b, b.out);
        acts.push_back(((a * w.transpose()).rowwise() + bias.transpose()).eval());
        break;
      }
      case LayerSpec::Kind::relu:
        acts.push_back(a.cwiseMax(0.0));
        break;
      case LayerSpec::Kind::lstm: {
        const int hdim = b.out;
        MapMat wx(theta.data() + b.off_wx, 4 * hdim, b.in);
        MapMat wh(theta.data() + b.off_wh, 4 * hdim, hdim);
        MapVec bias(theta.data() + b.off_b, 4 * hdim);
        LstmCache& cc = caches[bi];
        cc.x = a;
        cc.gates.resize(t_len, 4 * hdim);
        cc.c.resize(t_len, hdim);
        cc.tanh_c.resize(t_len, hdim);
        cc.h.resize(t_len, hdim);
        MatrixXd pre = a * wx.transpose();
        VectorXd h = VectorXd::Zero(hdim), c = VectorXd::Zero(hdim);
        for (Index t = 0; t < t_len; ++t) {
          VectorXd gate = pre.row(t).transpose() + wh * h + bias;
          for (int k = 0; k < hdim; ++k) {
            double gi = sigmoid(gate(k));
            double gf = sigmoid(gate(hdim + k));
            double gg = std::tanh(gate(2 * hdim + k));
            double go = sigmoid(gate(3 * hdim + k));
            cc.gates(t, k) = gi;
            cc.gates(t, hdim + k) = gf;
            cc.gates(t, 2 * hdim + k) = gg;
            cc.gates(t, 3 * hdim + k) = go;
            c(k) = gf * c(k) + gi * gg;
            cc.c(t, k) = c(k);
            double tc = std::tanh(c(k));
            cc.tanh_c(t, k) = tc;
            h(k) = go * tc;
          }
          cc.h.row(t) = h.transpose();
        }
        acts.push_back(cc.h);
        break;
      }
    }
  }

  // head loss and its input gradient
  const MatrixXd& z = acts.back();  // T x 2
  double ce_sum = 0.0;
  n_labeled = 0;
  MatrixXd dz = MatrixXd::Zero(t_len, 2);
  for (Index t = 0; t < t_len; ++t) {
    if (!mask[static_cast<std::size_t>(t)]) continue;
    ++n_labeled;
    double y = labels(t);
    double p = sigmoid(z(t, 1) - z(t, 0));
    ce_sum += clipped_ce_term(p, y);
    double du = p - y;
    dz(t, 0) = -du;
    dz(t, 1) = du;
  }

  // walk the stack backwards
  MatrixXd da = std::move(dz);
  for (std::size_t bi = blocks_.size(); bi-- > 0;) {
    const Block& b = blocks_[bi];
    const MatrixXd& a_in = acts[bi];
    switch (b.kind) {
      case LayerSpec::Kind::fc: {
        MapMat w(theta.data() + b.off_w, b.out, b.in);
        MutMat dw(grad.data() + b.off_w, b.out, b.in);
        MutVec db(grad.data() + b.off_b, b.out);
        dw.noalias() += da.transpose() * a_in;
        db.noalias() += da.colwise().sum().transpose();
        da = (da * w).eval();
        break;
      }
      case LayerSpec::Kind::relu:
        da = da.cwiseProduct((acts[bi + 1].array() > 0.0).cast<double>().matrix()).eval();
        break;
      case LayerSpec::Kind::lstm: {
        const int hdim = b.out;
        const LstmCache& cc = caches[bi];
        MapMat wx(theta.data() + b.off_wx, 4 * hdim, b.in);
        MapMat wh(theta.data() + b.off_wh, 4 * hdim, hdim);
        MutMat dwx(grad.data() + b.off_wx, 4 * hdim, b.in);
        MutMat dwh(grad.data() + b.off_wh, 4 * hdim, hdim);
        MutVec db(grad.data() + b.off_b, 4 * hdim);
        MatrixXd dgate_all(t_len, 4 * hdim);
        VectorXd dh_next = VectorXd::Zero(hdim), dc_next = VectorXd::Zero(hdim);
        for (Index t = t_len - 1; t >= 0; --t) {
          for (int k = 0; k < hdim; ++k) {
            double gi = cc.gates(t, k);
            double gf = cc.gates(t, hdim + k);
            double gg = cc.gates(t, 2 * hdim + k);
            double go = cc.gates(t, 3 * hdim + k);
            double tc = cc.tanh_c(t, k);
            double c_prev = t > 0 ? cc.c(t - 1, k) : 0.0;
            double dh = da(t, k) + dh_next(k);
            double dc = dh * go * (1.0 - tc * tc) + dc_next(k);
            dgate_all(t, k) = dc * gg * gi * (1.0 - gi);
            dgate_all(t, hdim + k) = dc * c_prev * gf * (1.0 - gf);
            dgate_all(t, 2 * hdim + k) = dc * gi * (1.0 - gg * gg);
            dgate_all(t, 3 * hdim + k) = dh * tc * go * (1.0 - go);
            dc_next(k) = dc * gf;
          }
          dh_next.noalias() = wh.transpose() * dgate_all.row(t).transpose();
        }
        // h_prev rows: zero then h_0..h_{T-2}
        dwx.noalias() += dgate_all.transpose() * cc.x;
        if (t_len > 1)
          dwh.noalias() += dgate_all.bottomRows(t_len - 1).transpose() * cc.h.topRows(t_len - 1);
        db.noalias() += dgate_all.colwise().sum().transpose();
        da = (dgate_all * wx).eval();
        break;
      }
    }
  }
  return ce_sum;
}

double gradient_check(const Network& net, const Eigen::MatrixXd& rows,
                      const Eigen::VectorXd& labels, const std::vector<char>& mask,
                      const Eigen::VectorXd& theta, double alpha, double step) {
  auto loss = [&](const VectorXd& th) {
    VectorXd g;
    long n = 0;
    double ce = net.ce_sum_and_grad(rows, labels, mask, th, g, n);
    if (n == 0) throw std::invalid_argument("gradient_check: no labeled rows");
    double l2 = (net.weight_mask().array() * th.array().square()).sum();
    return ce / static_cast<double>(n) + alpha * l2;
  };

  VectorXd analytic = VectorXd::Zero(net.n_params());
  long n = 0;
  net.ce_sum_and_grad(rows, labels, mask, theta, analytic, n);
  if (n == 0) throw std::invalid_argument("gradient_check: no labeled rows");
  analytic /= static_cast<double>(n);
  analytic += (2.0 * alpha) * net.weight_mask().cwiseProduct(theta);

  double worst = 0.0;
  VectorXd probe = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    probe(i) = theta(i) + step;
    double up = loss(probe);
    probe(i) = theta(i) - step;
    double dn = loss(probe);
    probe(i) = theta(i);
    double numeric = (up - dn) / (2.0 * step);
    double rel = std::abs(analytic(i) - numeric) /
                 std::max(1e-4, std::abs(analytic(i)) + std::abs(numeric));
    worst = std::max(worst, rel);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Adam {
  double beta1, beta2, eps;
  VectorXd m, v;
  long steps = 0;

  Adam(const TrainConfig& cfg, Index n)
      : beta1(cfg.beta1), beta2(cfg.beta2), eps(cfg.eps), m(VectorXd::Zero(n)), v(VectorXd::Zero(n)) {}

  void step(VectorXd& theta, const VectorXd& grad, double lr) {
    ++steps;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
    theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

double epoch_lr(const TrainConfig& cfg, int epoch) {
  if (cfg.drop_after_epochs <= 0) return cfg.initial_lr;
  int drops = epoch / cfg.drop_after_epochs;
  return cfg.initial_lr * std::pow(cfg.lr_drop_factor, drops);
}

// shared Adam loop over minibatches of row blocks; `batches` yields index
// ranges into `parts`, each part one (rows, labels, mask) group
struct TrainPart {
  MatrixXd rows;
  VectorXd labels;
  std::vector<char> mask;
};

TrainedModel train_net_common(ModelKind kind, std::vector<TrainPart> parts, const FeatureSpec& spec,
                              Standardizer standardizer, const NetworkSpec& netspec, double alpha,
                              const TrainConfig& cfg) {
  Network net(netspec, static_cast<int>(parts.front().rows.cols()));
  Rng rng(cfg.seed);
  VectorXd theta = net.init_params(rng);
  Adam adam(cfg, theta.size());

  const int n_parts = static_cast<int>(parts.size());
  const int mb = cfg.minibatch_sequences > 0 ? std::min(cfg.minibatch_sequences, n_parts) : n_parts;
  std::vector<int> order(static_cast<std::size_t>(n_parts));
  std::iota(order.begin(), order.end(), 0);

  TrainedModel model;
  model.kind = kind;
  model.spec = spec;
  model.standardizer = std::move(standardizer);
  model.net = netspec;
  model.alpha = alpha;
  model.train_ce.reserve(static_cast<std::size_t>(cfg.max_epochs));

  VectorXd grad(theta.size());
  double prev_obj = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    if (cfg.shuffle) rng.shuffle(order);
    double lr = epoch_lr(cfg, epoch);
    double epoch_ce = 0.0;
    long epoch_labeled = 0;
    for (int start = 0; start < n_parts; start += mb) {
      grad.setZero();
      double ce_sum = 0.0;
      long labeled = 0;
      for (int k = start; k < std::min(start + mb, n_parts); ++k) {
        const TrainPart& p = parts[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])];
        long nl = 0;
        ce_sum += net.ce_sum_and_grad(p.rows, p.labels, p.mask, theta, grad, nl);
        labeled += nl;
      }
      if (labeled == 0) continue;
      grad /= static_cast<double>(labeled);
      grad += (2.0 * alpha) * net.weight_mask().cwiseProduct(theta);
      adam.step(theta, grad, lr);
      epoch_ce += ce_sum;
      epoch_labeled += labeled;
    }
    double l2 = alpha * (net.weight_mask().array() * theta.array().square()).sum();
    double obj = epoch_ce / static_cast<double>(epoch_labeled) + l2;
    if (!std::isfinite(obj))
      throw std::runtime_error("training diverged (CE is not finite) at epoch " + std::to_string(epoch));
    model.train_ce.push_back(obj);
    if (cfg.tol_ce > 0.0 && mb == n_parts && std::abs(prev_obj - obj) < cfg.tol_ce) break;
    prev_obj = obj;
  }

  model.theta = std::move(theta);
  return model;
}

}  // namespace

double cross_entropy(const Eigen::VectorXd& soft, const Eigen::VectorXd& labels) {
  if (soft.size() != labels.size()) throw std::invalid_argument("cross_entropy: length mismatch");
  if (soft.size() == 0) throw std::domain_error("cross_entropy: empty input");
  double acc = 0.0;
  for (Index i = 0; i < soft.size(); ++i) acc += clipped_ce_term(soft(i), labels(i));
  return acc / static_cast<double>(soft.size());
}

TrainedModel train_linear(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                          const FeatureSpec& spec, double alpha) {
  if (rows.rows() != labels.size()) throw std::invalid_argument("train_linear: row/label mismatch");
  if (rows.rows() < rows.cols() + 1)
    throw std::invalid_argument("train_linear: needs at least F+1 rows");
  Standardizer st = fit_standardizer(rows);
  MatrixXd xs = st.apply_rows(rows);
  const Index n = xs.rows(), d = xs.cols();

  MatrixXd a(n, d + 1);
  a.leftCols(d) = xs;
  a.col(d).setOnes();
  MatrixXd gram = a.transpose() * a;
  for (Index j = 0; j < d; ++j) gram(j, j) += alpha;  // bias unpenalized
  VectorXd w = gram.ldlt().solve(a.transpose() * labels);

  TrainedModel m;
  m.kind = ModelKind::linear;
  m.spec = spec;
  m.standardizer = std::move(st);
  m.net = NetworkSpec{"LR", {}};
  m.theta = w;
  m.alpha = alpha;
  return m;
}

TrainedModel train_logistic(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                            const FeatureSpec& spec, double alpha, const TrainConfig& cfg) {
  return train_mlp(rows, labels, spec, logistic_spec(), alpha, cfg);
}

TrainedModel train_mlp(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                       const FeatureSpec& spec, const NetworkSpec& net, double alpha,
                       const TrainConfig& cfg) {
  if (rows.rows() != labels.size()) throw std::invalid_argument("train_mlp: row/label mismatch");
  if (rows.rows() < rows.cols() + 1) throw std::invalid_argument("train_mlp: needs at least F+1 rows");
  if (net.recurrent()) throw std::invalid_argument("train_mlp: recurrent spec; use train_lstm");
  Standardizer st = fit_standardizer(rows);
  std::vector<TrainPart> parts(1);
  parts[0].rows = st.apply_rows(rows);
  parts[0].labels = labels;
  parts[0].mask.assign(static_cast<std::size_t>(rows.rows()), 1);
  TrainConfig full = cfg;
  full.minibatch_sequences = 0;  // row datasets always train full batch
  full.shuffle = false;
  ModelKind kind = net.layers.empty() ? ModelKind::logistic : ModelKind::mlp;
  return train_net_common(kind, std::move(parts), spec, std::move(st), net, alpha, full);
}

SequenceExample make_sequence_example(const Sequence& seq, const FeatureSpec& spec) {
  SequenceExample ex;
  const int t_len = seq.length();
  ex.frames.resize(t_len, spec.frame_dim());
  ex.labels.resize(t_len);
  for (int t = 0; t < t_len; ++t) {
    const SamplePoint& p = seq.points[static_cast<std::size_t>(t)];
    for (int j = 0; j < spec.frame_dim(); ++j)
      ex.frames(t, j) = raw_feature(p, spec.features[static_cast<std::size_t>(j)]);
    ex.labels(t) = p.label;
  }
  return ex;
}

TrainedModel train_lstm(const std::vector<SequenceExample>& seqs, const FeatureSpec& spec,
                        const NetworkSpec& net, double alpha, const TrainConfig& cfg,
                        int horizon_u) {
  if (horizon_u < 0) throw std::invalid_argument("train_lstm: negative horizon");
  std::vector<const SequenceExample*> usable;
  long skipped = 0;
  for (const auto& s : seqs) {
    if (s.frames.rows() > horizon_u)
      usable.push_back(&s);
    else
      ++skipped;
  }
  if (skipped > 0)
    std::cerr << "train_lstm: skipped " << skipped << " sequences not longer than the horizon\n";
  if (usable.empty()) throw std::runtime_error("train_lstm: no sequence longer than the horizon");

  long total = 0;
  for (const auto* s : usable) total += s->frames.rows();
  MatrixXd stacked(total, usable.front()->frames.cols());
  long at = 0;
  for (const auto* s : usable) {
    stacked.middleRows(at, s->frames.rows()) = s->frames;
    at += s->frames.rows();
  }
  Standardizer st = fit_standardizer(stacked);

  std::vector<TrainPart> parts;
  parts.reserve(usable.size());
  for (const auto* s : usable) {
    TrainPart p;
    p.rows = st.apply_rows(s->frames);
    const Index t_len = s->frames.rows();
    p.labels = VectorXd::Zero(t_len);
    p.mask.assign(static_cast<std::size_t>(t_len), 0);
    for (Index t = 0; t + horizon_u < t_len; ++t) {  // predict the band at t+U
      p.labels(t) = s->labels(t + horizon_u);
      p.mask[static_cast<std::size_t>(t)] = 1;
    }
    parts.push_back(std::move(p));
  }
  return train_net_common(ModelKind::lstm, std::move(parts), spec, std::move(st), net, alpha, cfg);
}

// ---------------------------------------------------------------------------
// Prediction

namespace {

Eigen::VectorXd model_forward(const TrainedModel& m, const Eigen::MatrixXd& standardized) {
  if (m.kind == ModelKind::linear) {
    const Index d = standardized.cols();
    if (m.theta.size() != d + 1) throw std::runtime_error("predict: linear parameter size mismatch");
    VectorXd p = standardized * m.theta.head(d);
    p.array() += m.theta(d);
    return p.cwiseMax(0.0).cwiseMin(1.0);
  }
  Network net(m.net, static_cast<int>(standardized.cols()));
  return net.forward(standardized, m.theta);
}

}  // namespace

Eigen::VectorXd predict_rows(const TrainedModel& m, const Eigen::MatrixXd& rows) {
  if (m.net.recurrent())
    throw std::runtime_error("predict_rows: recurrent model needs predict_sequence");
  return model_forward(m, m.standardizer.apply_rows(rows));
}

double predict(const TrainedModel& m, const Eigen::VectorXd& raw_features) {
  return predict_rows(m, raw_features.transpose())(0);
}

Eigen::VectorXd predict_sequence(const TrainedModel& m, const Eigen::MatrixXd& frames) {
  return model_forward(m, m.standardizer.apply_rows(frames));
}

int decide(const TrainedModel& m, double soft) { return soft > m.gamma_t ? 1 : 0; }

const char* model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::linear: return "linear";
    case ModelKind::logistic: return "logistic";
    case ModelKind::mlp: return "mlp";
    case ModelKind::lstm: return "lstm";
  }
  throw std::logic_error("model_kind_name: bad enum");
}

ModelKind model_kind_from_name(const std::string& name) {
  for (ModelKind k : {ModelKind::linear, ModelKind::logistic, ModelKind::mlp, ModelKind::lstm})
    if (name == model_kind_name(k)) return k;
  throw std::invalid_argument("unknown model kind: " + name);
}

// ---------------------------------------------------------------------------
// Model selection

namespace {

TrainedModel train_candidate_rows(const CvCandidate& cand, const MatrixXd& rows,
                                  const VectorXd& labels, const FeatureSpec& spec,
                                  std::uint64_t seed) {
  TrainConfig cfg = cand.cfg;
  cfg.seed = seed;
  switch (cand.kind) {
    case ModelKind::linear: return train_linear(rows, labels, spec, cand.alpha);
    case ModelKind::logistic: return train_logistic(rows, labels, spec, cand.alpha, cfg);
    case ModelKind::mlp: return train_mlp(rows, labels, spec, cand.net, cand.alpha, cfg);
    case ModelKind::lstm: break;
  }
  throw std::invalid_argument("monte_carlo_cv: lstm candidates need the sequence variant");
}

}  // namespace

CvSelection monte_carlo_cv(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                           const FeatureSpec& spec, const std::vector<CvCandidate>& candidates,
                           int repeats, double validation_fraction, std::uint64_t seed) {
  if (candidates.empty()) throw std::invalid_argument("monte_carlo_cv: no candidates");
  if (repeats < 1) throw std::invalid_argument("monte_carlo_cv: repeats must be >= 1");
  if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
    throw std::invalid_argument("monte_carlo_cv: validation fraction must be in (0,1)");
  const Index n = rows.rows();
  const auto n_val = static_cast<Index>(std::lround(validation_fraction * static_cast<double>(n)));
  if (n_val < 1 || n_val >= n) throw std::invalid_argument("monte_carlo_cv: degenerate split");

  std::vector<double> ce_acc(candidates.size(), 0.0);
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int r = 0; r < repeats; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    rng.shuffle(idx);
    MatrixXd xt(n - n_val, rows.cols()), xv(n_val, rows.cols());
    VectorXd yt(n - n_val), yv(n_val);
    for (Index i = 0; i < n_val; ++i) {
      xv.row(i) = rows.row(idx[static_cast<std::size_t>(i)]);
      yv(i) = labels(idx[static_cast<std::size_t>(i)]);
    }
    for (Index i = n_val; i < n; ++i) {
      xt.row(i - n_val) = rows.row(idx[static_cast<std::size_t>(i)]);
      yt(i - n_val) = labels(idx[static_cast<std::size_t>(i)]);
    }
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      TrainedModel m = train_candidate_rows(candidates[c], xt, yt, spec,
                                            derive_seed(candidates[c].cfg.seed, static_cast<std::uint64_t>(r)));
      ce_acc[c] += cross_entropy(predict_rows(m, xv), yv);
    }
  }

  CvSelection sel;
  sel.mean_ce.resize(candidates.size());
  std::size_t best = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    sel.mean_ce[c] = ce_acc[c] / repeats;
    if (sel.mean_ce[c] < sel.mean_ce[best]) best = c;
  }
  sel.best = candidates[best];
  sel.best_ce = sel.mean_ce[best];
  return sel;
}

CvSelection monte_carlo_cv_sequences(const std::vector<SequenceExample>& seqs,
                                     const FeatureSpec& spec,
                                     const std::vector<CvCandidate>& candidates, int repeats,
                                     int n_validation, int horizon_u, std::uint64_t seed) {
  if (candidates.empty()) throw std::invalid_argument("monte_carlo_cv_sequences: no candidates");
  if (repeats < 1) throw std::invalid_argument("monte_carlo_cv_sequences: repeats must be >= 1");
  const int n = static_cast<int>(seqs.size());
  if (n_validation < 1 || n_validation >= n)
    throw std::invalid_argument("monte_carlo_cv_sequences: bad validation count");
  for (const auto& c : candidates)
    if (c.kind != ModelKind::lstm)
      throw std::invalid_argument("monte_carlo_cv_sequences: only lstm candidates are selected here");

  std::vector<double> ce_acc(candidates.size(), 0.0);
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int r = 0; r < repeats; ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    rng.shuffle(idx);
    std::vector<SequenceExample> train_seqs, val_seqs;
    for (int i = 0; i < n; ++i)
      (i < n_validation ? val_seqs : train_seqs).push_back(seqs[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      TrainConfig cfg = candidates[c].cfg;
      cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(r));
      TrainedModel m = train_lstm(train_seqs, spec, candidates[c].net, candidates[c].alpha, cfg, horizon_u);
      double ce_sum = 0.0;
      long n_lab = 0;
      for (const auto& s : val_seqs) {
        const Index t_len = s.frames.rows();
        if (t_len <= horizon_u) continue;
        VectorXd p = predict_sequence(m, s.frames);
        for (Index t = 0; t + horizon_u < t_len; ++t) {
          ce_sum += clipped_ce_term(p(t), s.labels(t + horizon_u));
          ++n_lab;
        }
      }
      if (n_lab == 0) throw std::runtime_error("monte_carlo_cv_sequences: empty validation marks");
      ce_acc[c] += ce_sum / static_cast<double>(n_lab);
    }
  }

  CvSelection sel;
  sel.mean_ce.resize(candidates.size());
  std::size_t best = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    sel.mean_ce[c] = ce_acc[c] / repeats;
    if (sel.mean_ce[c] < sel.mean_ce[best]) best = c;
  }
  sel.best = candidates[best];
  sel.best_ce = sel.mean_ce[best];
  return sel;
}

double calibrate_threshold(const std::vector<Eigen::VectorXd>& val_soft,
                           const std::vector<Eigen::VectorXd>& val_labels) {
  if (val_soft.empty() || val_soft.size() != val_labels.size())
    throw std::invalid_argument("calibrate_threshold: bad split lists");
  double best_gamma = 0.5, best_err = std::numeric_limits<double>::infinity();
  for (int g = 0; g <= 20; ++g) {
    double gamma = 0.05 * g;
    double err_acc = 0.0;
    for (std::size_t s = 0; s < val_soft.size(); ++s) {
      const VectorXd& p = val_soft[s];
      const VectorXd& y = val_labels[s];
      if (p.size() != y.size() || p.size() == 0)
        throw std::invalid_argument("calibrate_threshold: split size mismatch");
      long wrong = 0;
      for (Index i = 0; i < p.size(); ++i) {
        int d = p(i) > gamma ? 1 : 0;
        wrong += d != static_cast<int>(y(i)) ? 1 : 0;
      }
      err_acc += static_cast<double>(wrong) / static_cast<double>(p.size());
    }
    double err = err_acc / static_cast<double>(val_soft.size());
    // prefer the smaller error; break ties toward 0.5, then downward
    bool better = err < best_err - 1e-15;
    if (!better && std::abs(err - best_err) <= 1e-15) {
      double cur = std::abs(best_gamma - 0.5), alt = std::abs(gamma - 0.5);
      better = alt < cur - 1e-12;
    }
    if (better) {
      best_err = err;
      best_gamma = gamma;
    }
  }
  return best_gamma;
}

std::vector<CvCandidate> one_shot_candidates(ModelKind kind, const TrainConfig& cfg,
                                             const std::vector<double>& alpha_grid) {
  if (alpha_grid.empty()) throw std::invalid_argument("one_shot_candidates: empty alpha grid");
  std::vector<CvCandidate> out;
  if (kind == ModelKind::linear || kind == ModelKind::logistic) {
    for (double a : alpha_grid) out.push_back({kind, logistic_spec(), a, cfg});
    return out;
  }
  if (kind != ModelKind::mlp) throw std::invalid_argument("one_shot_candidates: one-shot kinds only");
  static const std::vector<std::vector<int>> layouts = {
      {5},          {10},         {20},         {40},
      {10, 5},      {20, 10},     {30, 20},     {50, 25},
      {20, 10, 5},  {30, 20, 10}, {40, 30, 20}, {30, 30, 20, 10}};
  for (const auto& layout : layouts)
    for (double a : alpha_grid) out.push_back({ModelKind::mlp, mlp_spec(layout), a, cfg});
  return out;
}

}  // namespace dualband
