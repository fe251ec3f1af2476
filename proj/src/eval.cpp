#include "dualband/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dualband/gp_rules.hpp"
#include "dualband/rng.hpp"

namespace dualband {

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

// Work-pool over [0, n): deterministic as long as workers write only to
// their own index's slot. jobs <= 1 degenerates to a plain loop.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::min(jobs, n);
  if (jobs <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      while (true) {
        int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Flat accumulation of decisions against ground truth for one result row.
struct Bucket {
  std::vector<int> decisions, labels;
  std::vector<std::pair<double, double>> rates;

  void add(int decision, const SamplePoint& truth, const Environment& env) {
    decisions.push_back(decision);
    labels.push_back(truth.label);
    rates.emplace_back(rate_capped_bps(env.cm, truth.snr_c_db),
                       rate_capped_bps(env.mm, truth.snr_m_db));
  }
  void append(const Bucket& other) {
    decisions.insert(decisions.end(), other.decisions.begin(), other.decisions.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
    rates.insert(rates.end(), other.rates.begin(), other.rates.end());
  }
  bool empty() const { return decisions.empty(); }
};

ResultRow bucket_row(const Bucket& b, std::string rule, int combination, int horizon_u,
                     double gamma_t, int window_q, std::uint64_t seed) {
  ResultRow row;
  row.rule = std::move(rule);
  row.combination = combination;
  row.horizon_u = horizon_u;
  row.gamma_t = gamma_t;
  row.window_q = window_q;
  row.ba_error = ba_error(b.decisions, b.labels);
  row.rate_loss = rate_loss(b.decisions, b.rates);
  row.n_test = static_cast<long>(b.decisions.size());
  row.seed = seed;
  return row;
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& rows, const std::vector<int>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), rows.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows.row(idx[i]);
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(idx[i]);
  return out;
}

TrainedModel train_candidate(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                             const FeatureSpec& spec, CvCandidate cand, std::uint64_t seed) {
  cand.cfg.seed = seed;
  switch (cand.kind) {
    case ModelKind::linear:
      return train_linear(rows, labels, spec, cand.alpha);
    case ModelKind::logistic:
      return train_logistic(rows, labels, spec, cand.alpha, cand.cfg);
    case ModelKind::mlp:
      return train_mlp(rows, labels, spec, cand.net, cand.alpha, cand.cfg);
    case ModelKind::lstm:
      break;
  }
  throw std::logic_error("train_candidate: recurrent candidates need sequences");
}

// Validation-based threshold calibration: refit the selected candidate on
// inner splits of the training rows and pick the grid threshold minimizing
// the mean validation error.
double calibrate_gamma(const Eigen::MatrixXd& rows, const Eigen::VectorXd& labels,
                       const FeatureSpec& spec, const CvCandidate& cand, int repeats,
                       double validation_fraction, std::uint64_t seed) {
  std::vector<Eigen::VectorXd> preds, labs;
  for (int rep = 0; rep < repeats; ++rep) {
    auto [tr, va] = split_indices(static_cast<int>(rows.rows()), 1.0 - validation_fraction,
                                  derive_seed(seed, 0xCA10u + static_cast<std::uint64_t>(rep)));
    TrainedModel m = train_candidate(gather_rows(rows, tr), gather(labels, tr), spec, cand,
                                     derive_seed(seed, 0xCA80u + static_cast<std::uint64_t>(rep)));
    preds.push_back(predict_rows(m, gather_rows(rows, va)));
    labs.push_back(gather(labels, va));
  }
  return calibrate_threshold(preds, labs);
}

const SamplePoint& one_shot_point(const LabeledDataset& ds, int i) {
  return ds.sequences[static_cast<std::size_t>(i)].points.front();
}

Eigen::MatrixXd one_shot_rows(const LabeledDataset& ds, const std::vector<int>& idx,
                              const FeatureSpec& spec) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(idx.size()), spec.length());
  for (std::size_t i = 0; i < idx.size(); ++i)
    rows.row(static_cast<Eigen::Index>(i)) = assemble_features(one_shot_point(ds, idx[i]), spec);
  return rows;
}

Eigen::VectorXd one_shot_labels(const LabeledDataset& ds, const std::vector<int>& idx) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i)
    y(static_cast<Eigen::Index>(i)) = one_shot_point(ds, idx[i]).label;
  return y;
}

// Windowed training rows over the common decision instants of the given
// sequences; the row at instant t carries the label of t+U.
void windowed_rows(const LabeledDataset& ds, const std::vector<int>& seq_idx,
                   const FeatureSpec& spec, int horizon_u, Eigen::MatrixXd& rows,
                   Eigen::VectorXd& labels) {
  const int q = spec.window_q;
  long count = 0;
  for (int s : seq_idx) {
    const int t_len = ds.sequences[static_cast<std::size_t>(s)].length();
    count += std::max(0, t_len - horizon_u - q);
  }
  rows.resize(count, spec.length());
  labels.resize(count);
  long at = 0;
  for (int s : seq_idx) {
    const Sequence& seq = ds.sequences[static_cast<std::size_t>(s)];
    for (int t = q; t + horizon_u < seq.length(); ++t) {
      rows.row(at) = assemble_features(seq, t, spec);
      labels(at) = seq.points[static_cast<std::size_t>(t + horizon_u)].label;
      ++at;
    }
  }
}

std::string describe(const CvCandidate& cand) {
  std::ostringstream out;
  switch (cand.kind) {
    case ModelKind::linear: out << "linear"; break;
    case ModelKind::logistic: out << "logistic"; break;
    case ModelKind::mlp: {
      out << "mlp(";
      bool first = true;
      for (const auto& l : cand.net.layers) {
        if (!first) out << ",";
        first = false;
        out << l.width;
      }
      out << ")";
      break;
    }
    case ModelKind::lstm: out << cand.net.name; break;
  }
  out << " alpha=" << cand.alpha;
  return out.str();
}

void check_fraction(double f, const char* what) {
  if (!(f > 0.0 && f < 1.0))
    throw std::invalid_argument(std::string(what) + " must lie strictly inside (0,1)");
}

void check_combinations(const std::vector<int>& combos) {
  if (combos.empty()) throw std::invalid_argument("no feature combinations selected");
  for (int c : combos)
    if (c < 1 || c > 7) throw std::invalid_argument("feature combination index out of range");
}

}  // namespace

FeatureSpec one_shot_combination(int index) {
  using F = Feature;
  switch (index) {
    case 1: return {{F::distance, F::angle}, 0};
    case 2: return {{F::distance, F::angle, F::cm_power}, 0};
    case 3: return {{F::angle, F::cm_power}, 0};
    case 4: return {{F::distance, F::cm_power}, 0};
    case 5: return {{F::distance}, 0};
    case 6: return {{F::cm_power}, 0};
    case 7: return {{F::angle}, 0};
    default: throw std::invalid_argument("one_shot_combination: index must be 1..7");
  }
}

FeatureSpec sequential_combination(int index, int window_q) {
  using F = Feature;
  FeatureSpec spec;
  switch (index) {
    case 1: spec.features = {F::distance, F::angle}; break;
    case 2: spec.features = {F::distance, F::cm_power}; break;
    case 3: spec.features = {F::angle, F::cm_power}; break;
    case 4: spec.features = {F::distance, F::angle, F::cm_power}; break;
    case 5: spec.features = {F::distance, F::angle, F::cm_power, F::mm_power}; break;
    case 6: spec.features = {F::cm_power, F::mm_power}; break;
    case 7: spec.features = {F::cm_power}; break;
    default: throw std::invalid_argument("sequential_combination: index must be 1..7");
  }
  spec.window_q = window_q;
  return spec;
}

History make_history(const Sequence& seq, int t, int window_q, int horizon_u) {
  History h;
  h.frames.reserve(static_cast<std::size_t>(window_q) + 1);
  for (int k = t - window_q; k <= t; ++k) {
    const SamplePoint& p = seq.points[static_cast<std::size_t>(k)];
    h.frames.push_back({p.position, p.s_c_db, p.s_m_db});
  }
  h.target = seq.points[static_cast<std::size_t>(t + horizon_u)].position;
  return h;
}

std::pair<std::vector<int>, std::vector<int>> split_indices(int n, double train_fraction,
                                                            std::uint64_t seed) {
  check_fraction(train_fraction, "train fraction");
  if (n < 2) throw std::invalid_argument("split_indices: need at least 2 items");
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  int n_train = static_cast<int>(std::lround(train_fraction * n));
  n_train = std::clamp(n_train, 1, n - 1);
  std::vector<int> train(idx.begin(), idx.begin() + n_train);
  std::vector<int> test(idx.begin() + n_train, idx.end());
  return {std::move(train), std::move(test)};
}

Environment one_shot_environment() {
  Environment env = Environment::defaults();
  env.kernel_shape = 1.9;
  return env;
}

namespace {

// Realizations arrive through a provider so the generated and the ingested
// paths share the whole protocol.
ExperimentReport run_one_shot_impl(const OneShotConfig& cfg, int n_realizations,
                                   const std::function<LabeledDataset(int)>& provider) {
  Timer timer;
  check_fraction(cfg.train_fraction, "train fraction");
  check_fraction(cfg.cv_fraction, "cv fraction");
  check_combinations(cfg.combinations);
  if (cfg.cv_repeats < 1) throw std::invalid_argument("run_one_shot: cv repeats must be >= 1");
  if ((cfg.run_nn || cfg.run_gr || cfg.run_lr) && cfg.alpha_grid.empty())
    throw std::invalid_argument("run_one_shot: alpha grid is empty");

  ExperimentReport report;

  struct LearnedRule {
    const char* name;
    ModelKind kind;
    TrainConfig schedule;
    bool enabled;
  };
  const std::vector<LearnedRule> learned = {
      {"lr", ModelKind::linear, TrainConfig{}, cfg.run_lr},
      {"gr", ModelKind::logistic, logistic_schedule(), cfg.run_gr},
      {"nn", ModelKind::mlp, one_shot_schedule(), cfg.run_nn},
  };

  // ---- selection on the training split of the first realization ----
  struct Selection {
    CvCandidate cand;
    double gamma = 0.5;
  };
  std::map<std::pair<std::string, int>, Selection> chosen;
  {
    const LabeledDataset ds0 = provider(0);
    auto [tr0, te0] = split_indices(static_cast<int>(ds0.sequences.size()), cfg.train_fraction,
                                    derive_seed(cfg.seed, 0x5517));
    (void)te0;
    for (int comb : cfg.combinations) {
      const FeatureSpec spec = one_shot_combination(comb);
      const Eigen::MatrixXd rows_tr = one_shot_rows(ds0, tr0, spec);
      const Eigen::VectorXd y_tr = one_shot_labels(ds0, tr0);
      for (std::size_t ri = 0; ri < learned.size(); ++ri) {
        const LearnedRule& rule = learned[ri];
        if (!rule.enabled) continue;
        const auto menu = one_shot_candidates(rule.kind, rule.schedule, cfg.alpha_grid);
        const std::uint64_t sel_seed =
            derive_seed(cfg.seed, 0xCE00u + static_cast<std::uint64_t>(comb) * 8 + ri);
        CvSelection sel = monte_carlo_cv(rows_tr, y_tr, spec, menu, cfg.cv_repeats,
                                         cfg.cv_fraction, sel_seed);
        Selection s;
        s.cand = sel.best;
        s.gamma = calibrate_gamma(rows_tr, y_tr, spec, sel.best, cfg.cv_repeats, cfg.cv_fraction,
                                  derive_seed(cfg.seed, 0xCF00u + static_cast<std::uint64_t>(comb) * 8 + ri));
        chosen[{rule.name, comb}] = s;
        std::ostringstream note;
        note << "one-shot c-" << comb << " " << rule.name << ": " << describe(s.cand)
             << " gamma_t=" << s.gamma;
        report.notes.push_back(note.str());
      }
    }
  }

  // ---- per-realization retraining and evaluation ----
  // fixed row order, doubling as the slot layout of the work-pool
  std::vector<std::pair<std::string, int>> order;
  for (const auto& rule : learned)
    if (rule.enabled)
      for (int comb : cfg.combinations) order.emplace_back(rule.name, comb);
  if (cfg.run_tbba) order.emplace_back("tbba", 0);
  if (cfg.run_cm_only) order.emplace_back("cm_only", 0);
  std::map<std::pair<std::string, int>, std::size_t> slot_of;
  for (std::size_t i = 0; i < order.size(); ++i) slot_of[order[i]] = i;

  struct RealizationResult {
    std::vector<double> ba, rate;
    std::vector<long> n;
    double balance = 0.0;
  };
  std::vector<RealizationResult> results(static_cast<std::size_t>(n_realizations));

  parallel_for(n_realizations, cfg.jobs, [&](int r) {
    const LabeledDataset ds = provider(r);
    const int n_pts = static_cast<int>(ds.sequences.size());
    RealizationResult& res = results[static_cast<std::size_t>(r)];
    res.ba.assign(order.size(), 0.0);
    res.rate.assign(order.size(), 0.0);
    res.n.assign(order.size(), 0);
    res.balance = ds.label_balance();
    auto [tr, te] = split_indices(n_pts, cfg.train_fraction,
                                  derive_seed(cfg.seed, 0x5517u + static_cast<std::uint64_t>(r)));
    auto put = [&](const char* name, int comb, const Bucket& b) {
      const std::size_t i = slot_of.at({name, comb});
      res.ba[i] = ba_error(b.decisions, b.labels);
      res.rate[i] = rate_loss(b.decisions, b.rates);
      res.n[i] = static_cast<long>(b.decisions.size());
    };

    if (cfg.run_tbba) {
      Bucket b;
      for (int i : te) {
        const SamplePoint& p = one_shot_point(ds, i);
        b.add(tbba_decide(cfg.env, p.d_m, p.s_c_db), p, cfg.env);
      }
      put("tbba", 0, b);
    }
    if (cfg.run_cm_only) {
      Bucket b;
      for (int i : te) b.add(0, one_shot_point(ds, i), cfg.env);
      put("cm_only", 0, b);
    }

    for (int comb : cfg.combinations) {
      const FeatureSpec spec = one_shot_combination(comb);
      const Eigen::MatrixXd rows_tr = one_shot_rows(ds, tr, spec);
      const Eigen::VectorXd y_tr = one_shot_labels(ds, tr);
      const Eigen::MatrixXd rows_te = one_shot_rows(ds, te, spec);
      for (std::size_t ri = 0; ri < learned.size(); ++ri) {
        const LearnedRule& rule = learned[ri];
        if (!rule.enabled) continue;
        const Selection& sel = chosen.at({rule.name, comb});
        TrainedModel model = train_candidate(
            rows_tr, y_tr, spec, sel.cand,
            derive_seed(cfg.seed, 0xAB0000u + static_cast<std::uint64_t>(r) * 64 +
                                      static_cast<std::uint64_t>(comb) * 8 + ri));
        model.gamma_t = sel.gamma;
        const Eigen::VectorXd soft = predict_rows(model, rows_te);
        Bucket b;
        for (std::size_t i = 0; i < te.size(); ++i)
          b.add(decide(model, soft(static_cast<Eigen::Index>(i))), one_shot_point(ds, te[i]),
                cfg.env);
        put(rule.name, comb, b);
      }
    }
  });

  // serial reduction in realization order keeps results independent of the
  // worker count
  double balance_sum = 0.0;
  for (const RealizationResult& res : results) balance_sum += res.balance;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& key = order[i];
    double ba = 0.0, rate = 0.0;
    long n_test = 0;
    for (const RealizationResult& res : results) {
      ba += res.ba[i];
      rate += res.rate[i];
      n_test += res.n[i];
    }
    ResultRow row;
    row.rule = key.first;
    row.combination = key.second;
    if (key.first == "cm_only") row.gamma_t = 1.0;  // the threshold no soft output ever clears
    else if (key.first == "tbba") row.gamma_t = 0.5;
    else row.gamma_t = chosen.at(key).gamma;
    row.ba_error = ba / n_realizations;
    row.rate_loss = rate / n_realizations;
    row.n_test = n_test;
    row.seed = cfg.seed;
    report.rows.push_back(std::move(row));
  }
  report.label_balance = balance_sum / n_realizations;
  report.wall_seconds = timer.seconds();
  return report;
}

}  // namespace

ExperimentReport run_one_shot(const OneShotConfig& cfg) {
  if (cfg.realizations < 1) throw std::invalid_argument("run_one_shot: realizations must be >= 1");
  if (cfg.points < 10) throw std::invalid_argument("run_one_shot: points must be >= 10");
  return run_one_shot_impl(cfg, cfg.realizations, [&](int r) {
    return build_one_shot_realization(cfg.env, cfg.geom, cfg.points,
                                      derive_seed(cfg.seed, static_cast<std::uint64_t>(r)));
  });
}

ExperimentReport run_one_shot(const OneShotConfig& cfg,
                              const std::vector<LabeledDataset>& realizations) {
  if (realizations.empty()) throw std::invalid_argument("run_one_shot: no realizations provided");
  for (const LabeledDataset& ds : realizations) {
    if (ds.sequences.size() < 10)
      throw std::invalid_argument("run_one_shot: a provided realization has fewer than 10 points");
    for (const Sequence& seq : ds.sequences)
      if (seq.length() != 1)
        throw std::invalid_argument(
            "run_one_shot: provided data must be singleton sequences (one point per seq_id)");
  }
  return run_one_shot_impl(cfg, static_cast<int>(realizations.size()),
                           [&](int r) { return realizations[static_cast<std::size_t>(r)]; });
}

TrainedModel train_one_shot_rule(const OneShotConfig& cfg, const LabeledDataset& ds,
                                 const std::string& rule, int combination, std::string* note) {
  check_fraction(cfg.train_fraction, "train fraction");
  check_fraction(cfg.cv_fraction, "cv fraction");
  if (cfg.cv_repeats < 1)
    throw std::invalid_argument("train_one_shot_rule: cv repeats must be >= 1");
  if (cfg.alpha_grid.empty()) throw std::invalid_argument("train_one_shot_rule: alpha grid is empty");
  if (ds.sequences.size() < 10)
    throw std::invalid_argument("train_one_shot_rule: need at least 10 points");
  for (const Sequence& seq : ds.sequences)
    if (seq.length() != 1)
      throw std::invalid_argument(
          "train_one_shot_rule: data must be singleton sequences (one point per seq_id)");

  ModelKind kind;
  TrainConfig schedule;
  std::uint64_t ri = 0;
  if (rule == "lr") {
    kind = ModelKind::linear;
  } else if (rule == "gr") {
    kind = ModelKind::logistic;
    schedule = logistic_schedule();
    ri = 1;
  } else if (rule == "nn") {
    kind = ModelKind::mlp;
    schedule = one_shot_schedule();
    ri = 2;
  } else {
    throw std::invalid_argument("train_one_shot_rule: unknown rule '" + rule +
                                "' (learned rules: lr, gr, nn)");
  }

  const FeatureSpec spec = one_shot_combination(combination);
  auto [tr, te] = split_indices(static_cast<int>(ds.sequences.size()), cfg.train_fraction,
                                derive_seed(cfg.seed, 0x5517));
  (void)te;
  const Eigen::MatrixXd rows_tr = one_shot_rows(ds, tr, spec);
  const Eigen::VectorXd y_tr = one_shot_labels(ds, tr);
  const auto menu = one_shot_candidates(kind, schedule, cfg.alpha_grid);
  const std::uint64_t comb_u = static_cast<std::uint64_t>(combination);
  CvSelection sel = monte_carlo_cv(rows_tr, y_tr, spec, menu, cfg.cv_repeats, cfg.cv_fraction,
                                   derive_seed(cfg.seed, 0xCE00u + comb_u * 8 + ri));
  const double gamma =
      calibrate_gamma(rows_tr, y_tr, spec, sel.best, cfg.cv_repeats, cfg.cv_fraction,
                      derive_seed(cfg.seed, 0xCF00u + comb_u * 8 + ri));
  TrainedModel model = train_candidate(rows_tr, y_tr, spec, sel.best,
                                       derive_seed(cfg.seed, 0xAB0000u + comb_u * 8 + ri));
  model.gamma_t = gamma;
  if (note) *note = describe(sel.best);
  return model;
}

namespace {

// Everything the sequential runner and its sweeps share: the dataset, the
// sequence split, and per-rule evaluation at the common instants.
struct SequentialContext {
  const SequentialConfig& cfg;
  LabeledDataset ds;
  std::vector<int> train_idx, test_idx;

  explicit SequentialContext(const SequentialConfig& c)
      : SequentialContext(c, build_sequential_dataset(c.env, c.geom, c.sms, c.sequences,
                                                      derive_seed(c.seed, 1))) {}

  SequentialContext(const SequentialConfig& c, LabeledDataset provided)
      : cfg(c), ds(std::move(provided)) {
    auto [tr, te] = split_indices(static_cast<int>(ds.sequences.size()), c.train_fraction,
                                  derive_seed(c.seed, 2));
    train_idx = std::move(tr);
    test_idx = std::move(te);
  }

  // the common decision instants of one sequence
  template <typename Fn>
  void for_instants(const Sequence& seq, int horizon_u, Fn&& fn) const {
    for (int t = cfg.window_q; t + horizon_u < seq.length(); ++t) fn(t);
  }

  void require_instants(int horizon_u) const {
    for (int s : test_idx)
      if (ds.sequences[static_cast<std::size_t>(s)].length() > cfg.window_q + horizon_u) return;
    throw std::invalid_argument("sequential run: no evaluation instants (Q + U too large)");
  }

  Bucket eval_gp(int horizon_u, bool approximate, double gamma_t) const {
    GpRule rule;
    rule.env = cfg.env;
    rule.bs = cfg.geom.bs;
    rule.window_q = cfg.window_q;
    rule.horizon_u = horizon_u;
    rule.gamma_t = gamma_t;
    std::vector<Bucket> parts(test_idx.size());
    parallel_for(static_cast<int>(test_idx.size()), cfg.jobs, [&](int i) {
      const Sequence& seq = ds.sequences[static_cast<std::size_t>(test_idx[static_cast<std::size_t>(i)])];
      for_instants(seq, horizon_u, [&](int t) {
        const History h = make_history(seq, t, cfg.window_q, horizon_u);
        const int d = approximate ? approx_decide(h, rule)
                                  : map_decide(exact_success_prob(h, rule), gamma_t);
        parts[static_cast<std::size_t>(i)].add(d, seq.points[static_cast<std::size_t>(t + horizon_u)], cfg.env);
      });
    });
    Bucket b;
    for (const Bucket& part : parts) b.append(part);
    return b;
  }

  // soft outputs of a trained model at the common instants of the test set,
  // flattened, along with the matching truth points
  void eval_soft(const TrainedModel& model, const FeatureSpec& spec, int horizon_u,
                 std::vector<double>& soft, std::vector<const SamplePoint*>& truth) const {
    soft.clear();
    truth.clear();
    const bool recurrent = model.kind == ModelKind::lstm;
    for (int s : test_idx) {
      const Sequence& seq = ds.sequences[static_cast<std::size_t>(s)];
      if (recurrent) {
        const SequenceExample ex = make_sequence_example(seq, spec);
        const Eigen::VectorXd p = predict_sequence(model, ex.frames);
        for_instants(seq, horizon_u, [&](int t) {
          soft.push_back(p(t));
          truth.push_back(&seq.points[static_cast<std::size_t>(t + horizon_u)]);
        });
      } else {
        for_instants(seq, horizon_u, [&](int t) {
          soft.push_back(predict(model, assemble_features(seq, t, spec)));
          truth.push_back(&seq.points[static_cast<std::size_t>(t + horizon_u)]);
        });
      }
    }
  }

  Bucket threshold_bucket(const std::vector<double>& soft,
                          const std::vector<const SamplePoint*>& truth, double gamma) const {
    Bucket b;
    for (std::size_t i = 0; i < soft.size(); ++i)
      b.add(soft[i] > gamma ? 1 : 0, *truth[i], cfg.env);
    return b;
  }

  std::vector<SequenceExample> train_examples(const FeatureSpec& spec) const {
    std::vector<SequenceExample> out;
    out.reserve(train_idx.size());
    for (int s : train_idx)
      out.push_back(make_sequence_example(ds.sequences[static_cast<std::size_t>(s)], spec));
    return out;
  }

  // LSTM selection: candidates ranked by validation CE on held-out training
  // sequences, trained on a capped subset under a capped epoch budget.
  CvCandidate select_lstm(const std::vector<SequenceExample>& examples, const FeatureSpec& spec,
                          std::vector<CvCandidate> candidates, int horizon_u,
                          std::uint64_t seed, std::string* note) const {
    for (auto& c : candidates) c.cfg.max_epochs = std::min(c.cfg.max_epochs, cfg.lstm_cv_epoch_cap);
    const int budget = cfg.lstm_cv_train_sequences + cfg.lstm_cv_sequences;
    std::vector<SequenceExample> subset(
        examples.begin(),
        examples.begin() + std::min<std::ptrdiff_t>(budget, static_cast<std::ptrdiff_t>(examples.size())));
    if (static_cast<int>(subset.size()) <= cfg.lstm_cv_sequences)
      throw std::invalid_argument("lstm selection: not enough training sequences to hold out");
    CvSelection sel = monte_carlo_cv_sequences(subset, spec, candidates, 1, cfg.lstm_cv_sequences,
                                               horizon_u, seed);
    if (note) *note = describe(sel.best);
    return sel.best;
  }
};

std::vector<CvCandidate> lstm_schedule_candidates(const SequentialConfig& cfg,
                                                  const NetworkSpec& net) {
  std::vector<CvCandidate> out;
  out.push_back({ModelKind::lstm, net, cfg.alpha, shuffled_schedule()});
  if (cfg.lstm_schedule_cv)
    out.push_back({ModelKind::lstm, net, cfg.alpha, unshuffled_schedule()});
  return out;
}

}  // namespace

namespace {

void check_sequential(const SequentialConfig& cfg) {
  check_fraction(cfg.train_fraction, "train fraction");
  check_combinations(cfg.combinations);
  if (cfg.window_q < 0) throw std::invalid_argument("run_sequential: window must be >= 0");
  if (cfg.horizons.empty()) throw std::invalid_argument("run_sequential: no horizons");
  for (int u : cfg.horizons)
    if (u < 1) throw std::invalid_argument("run_sequential: horizons must be >= 1");
}

ExperimentReport run_sequential_impl(const SequentialConfig& cfg, SequentialContext& ctx) {
  Timer timer;
  ExperimentReport report;
  report.label_balance = ctx.ds.label_balance();
  const int q = cfg.window_q;

  for (int u : cfg.horizons) {
    ctx.require_instants(u);
    if (cfg.run_gp)
      report.rows.push_back(
          bucket_row(ctx.eval_gp(u, false, cfg.gamma_t), "gp", 0, u, cfg.gamma_t, q, cfg.seed));
    if (cfg.run_gp_app)
      report.rows.push_back(
          bucket_row(ctx.eval_gp(u, true, cfg.gamma_t), "gp_app", 0, u, cfg.gamma_t, q, cfg.seed));
  }

  for (int comb : cfg.combinations) {
    const FeatureSpec frame_spec = sequential_combination(comb, 0);
    const FeatureSpec window_spec = sequential_combination(comb, q);
    const int frame_dim = static_cast<int>(frame_spec.features.size());
    std::vector<SequenceExample> lstm_train;
    if (cfg.run_lstm_std || cfg.run_lstm_opd) lstm_train = ctx.train_examples(frame_spec);

    for (int u : cfg.horizons) {
      const std::uint64_t tag =
          static_cast<std::uint64_t>(comb) * 256 + static_cast<std::uint64_t>(u);
      std::vector<double> soft;
      std::vector<const SamplePoint*> truth;

      if (cfg.run_lstm_std) {
        std::string note;
        CvCandidate best =
            ctx.select_lstm(lstm_train, frame_spec,
                            lstm_schedule_candidates(cfg, table_network(4, frame_dim)), u,
                            derive_seed(cfg.seed, 0x157D00u + tag), &note);
        CvCandidate full = best;
        full.cfg.max_epochs = best.cfg.shuffle ? shuffled_schedule().max_epochs
                                               : unshuffled_schedule().max_epochs;
        full.cfg.seed = derive_seed(cfg.seed, 0x157D80u + tag);
        TrainedModel model =
            train_lstm(lstm_train, frame_spec, full.net, full.alpha, full.cfg, u);
        model.gamma_t = cfg.gamma_t;
        ctx.eval_soft(model, frame_spec, u, soft, truth);
        report.rows.push_back(bucket_row(ctx.threshold_bucket(soft, truth, cfg.gamma_t),
                                         "lstm_std", comb, u, cfg.gamma_t, q, cfg.seed));
        report.notes.push_back("sequential c-" + std::to_string(comb) + " U=" + std::to_string(u) +
                               " lstm_std: " + note +
                               (full.cfg.shuffle ? " (shuffled)" : " (unshuffled)"));
      }

      if (cfg.run_lstm_opd) {
        std::vector<CvCandidate> menu;
        for (int nw = 0; nw < 16; ++nw) {
          for (const auto& base : lstm_schedule_candidates(cfg, table_network(nw, frame_dim)))
            menu.push_back(base);
        }
        std::string note;
        CvCandidate best = ctx.select_lstm(lstm_train, frame_spec, std::move(menu), u,
                                           derive_seed(cfg.seed, 0x0BD000u + tag), &note);
        CvCandidate full = best;
        full.cfg.max_epochs = best.cfg.shuffle ? shuffled_schedule().max_epochs
                                               : unshuffled_schedule().max_epochs;
        full.cfg.seed = derive_seed(cfg.seed, 0x0BD080u + tag);
        TrainedModel model =
            train_lstm(lstm_train, frame_spec, full.net, full.alpha, full.cfg, u);
        model.gamma_t = cfg.gamma_t;
        ctx.eval_soft(model, frame_spec, u, soft, truth);
        report.rows.push_back(bucket_row(ctx.threshold_bucket(soft, truth, cfg.gamma_t),
                                         "lstm_opd", comb, u, cfg.gamma_t, q, cfg.seed));
        report.notes.push_back("sequential c-" + std::to_string(comb) + " U=" + std::to_string(u) +
                               " lstm_opd: " + note +
                               (full.cfg.shuffle ? " (shuffled)" : " (unshuffled)"));
      }

      if (cfg.run_nn_h || cfg.run_gr_h) {
        Eigen::MatrixXd rows;
        Eigen::VectorXd labels;
        windowed_rows(ctx.ds, ctx.train_idx, window_spec, u, rows, labels);
        if (cfg.run_nn_h) {
          TrainConfig tc = cfg.nn_h_cfg;
          tc.seed = derive_seed(cfg.seed, 0x44E000u + tag);
          TrainedModel model =
              train_mlp(rows, labels, window_spec, mlp_spec({70, 40}), cfg.alpha, tc);
          model.gamma_t = cfg.gamma_t;
          ctx.eval_soft(model, window_spec, u, soft, truth);
          report.rows.push_back(bucket_row(ctx.threshold_bucket(soft, truth, cfg.gamma_t), "nn_h",
                                           comb, u, cfg.gamma_t, q, cfg.seed));
        }
        if (cfg.run_gr_h) {
          TrainConfig tc = cfg.gr_h_cfg;
          tc.seed = derive_seed(cfg.seed, 0x64E000u + tag);
          TrainedModel model = train_logistic(rows, labels, window_spec, cfg.alpha, tc);
          model.gamma_t = cfg.gamma_t;
          ctx.eval_soft(model, window_spec, u, soft, truth);
          report.rows.push_back(bucket_row(ctx.threshold_bucket(soft, truth, cfg.gamma_t), "gr_h",
                                           comb, u, cfg.gamma_t, q, cfg.seed));
        }
      }
    }
  }

  report.wall_seconds = timer.seconds();
  return report;
}

}  // namespace

ExperimentReport run_sequential(const SequentialConfig& cfg) {
  check_sequential(cfg);
  if (cfg.sequences < 2) throw std::invalid_argument("run_sequential: need at least 2 sequences");
  SequentialContext ctx(cfg);
  return run_sequential_impl(cfg, ctx);
}

ExperimentReport run_sequential(const SequentialConfig& cfg, const LabeledDataset& ds) {
  check_sequential(cfg);
  if (ds.sequences.size() < 2)
    throw std::invalid_argument("run_sequential: provided dataset needs at least 2 sequences");
  SequentialContext ctx(cfg, ds);
  return run_sequential_impl(cfg, ctx);
}

TrainedModel train_sequential_rule(const SequentialConfig& cfg, const LabeledDataset& ds,
                                   const std::string& rule, int combination, int horizon_u,
                                   std::string* note) {
  check_sequential(cfg);
  if (horizon_u < 1) throw std::invalid_argument("train_sequential_rule: horizon must be >= 1");
  if (ds.sequences.size() < 2)
    throw std::invalid_argument("train_sequential_rule: need at least 2 sequences");
  if (rule == "gp" || rule == "gp_app")
    throw std::invalid_argument("train_sequential_rule: " + rule +
                                " has no learned state; nothing to train");

  SequentialContext ctx(cfg, ds);
  const std::uint64_t tag =
      static_cast<std::uint64_t>(combination) * 256 + static_cast<std::uint64_t>(horizon_u);
  const FeatureSpec frame_spec = sequential_combination(combination, 0);
  const FeatureSpec window_spec = sequential_combination(combination, cfg.window_q);

  if (rule == "lstm_std" || rule == "lstm_opd") {
    const bool opd = rule == "lstm_opd";
    const int frame_dim = static_cast<int>(frame_spec.features.size());
    std::vector<SequenceExample> lstm_train = ctx.train_examples(frame_spec);
    std::vector<CvCandidate> menu;
    if (opd) {
      for (int nw = 0; nw < 16; ++nw)
        for (const auto& base : lstm_schedule_candidates(cfg, table_network(nw, frame_dim)))
          menu.push_back(base);
    } else {
      menu = lstm_schedule_candidates(cfg, table_network(4, frame_dim));
    }
    std::string chosen;
    CvCandidate best =
        ctx.select_lstm(lstm_train, frame_spec, std::move(menu), horizon_u,
                        derive_seed(cfg.seed, (opd ? 0x0BD000u : 0x157D00u) + tag), &chosen);
    CvCandidate full = best;
    full.cfg.max_epochs =
        best.cfg.shuffle ? shuffled_schedule().max_epochs : unshuffled_schedule().max_epochs;
    full.cfg.seed = derive_seed(cfg.seed, (opd ? 0x0BD080u : 0x157D80u) + tag);
    TrainedModel model =
        train_lstm(lstm_train, frame_spec, full.net, full.alpha, full.cfg, horizon_u);
    model.gamma_t = cfg.gamma_t;
    if (note) *note = chosen + (full.cfg.shuffle ? " (shuffled)" : " (unshuffled)");
    return model;
  }

  if (rule == "nn_h" || rule == "gr_h") {
    Eigen::MatrixXd rows;
    Eigen::VectorXd labels;
    windowed_rows(ctx.ds, ctx.train_idx, window_spec, horizon_u, rows, labels);
    TrainedModel model;
    if (rule == "nn_h") {
      TrainConfig tc = cfg.nn_h_cfg;
      tc.seed = derive_seed(cfg.seed, 0x44E000u + tag);
      model = train_mlp(rows, labels, window_spec, mlp_spec({70, 40}), cfg.alpha, tc);
      if (note) *note = "fc70+fc40";
    } else {
      TrainConfig tc = cfg.gr_h_cfg;
      tc.seed = derive_seed(cfg.seed, 0x64E000u + tag);
      model = train_logistic(rows, labels, window_spec, cfg.alpha, tc);
      if (note) *note = "logistic";
    }
    model.gamma_t = cfg.gamma_t;
    return model;
  }

  throw std::invalid_argument("train_sequential_rule: unknown rule '" + rule +
                              "' (learned rules: lstm_std, lstm_opd, nn_h, gr_h)");
}

ExperimentReport sweep_horizon(const SequentialConfig& cfg, const std::vector<int>& u_values) {
  if (u_values.empty()) throw std::invalid_argument("sweep_horizon: axis values list is empty");
  SequentialConfig swept = cfg;
  swept.horizons = u_values;
  return run_sequential(swept);
}

ExperimentReport sweep_gamma(const SequentialConfig& cfg, const std::vector<double>& gammas) {
  Timer timer;
  if (gammas.empty()) throw std::invalid_argument("sweep_gamma: axis values list is empty");
  for (double g : gammas)
    if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument("sweep_gamma: gamma outside [0,1]");
  check_combinations(cfg.combinations);
  if (cfg.horizons.empty()) throw std::invalid_argument("sweep_gamma: no horizon");
  const int u = cfg.horizons.front();

  ExperimentReport report;
  SequentialContext ctx(cfg);
  ctx.require_instants(u);
  report.label_balance = ctx.ds.label_balance();
  const int q = cfg.window_q;

  if (cfg.run_gp) {
    // success probabilities once, re-thresholded per gamma
    GpRule rule;
    rule.env = cfg.env;
    rule.bs = cfg.geom.bs;
    rule.window_q = q;
    rule.horizon_u = u;
    std::vector<std::vector<double>> prob_parts(ctx.test_idx.size());
    std::vector<std::vector<const SamplePoint*>> truth_parts(ctx.test_idx.size());
    parallel_for(static_cast<int>(ctx.test_idx.size()), cfg.jobs, [&](int i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      const Sequence& seq = ctx.ds.sequences[static_cast<std::size_t>(ctx.test_idx[ii])];
      ctx.for_instants(seq, u, [&](int t) {
        prob_parts[ii].push_back(exact_success_prob(make_history(seq, t, q, u), rule));
        truth_parts[ii].push_back(&seq.points[static_cast<std::size_t>(t + u)]);
      });
    });
    std::vector<double> probs;
    std::vector<const SamplePoint*> truth;
    for (std::size_t i = 0; i < prob_parts.size(); ++i) {
      probs.insert(probs.end(), prob_parts[i].begin(), prob_parts[i].end());
      truth.insert(truth.end(), truth_parts[i].begin(), truth_parts[i].end());
    }
    for (double g : gammas) {
      Bucket b;
      for (std::size_t i = 0; i < probs.size(); ++i)
        b.add(map_decide(probs[i], g), *truth[i], cfg.env);
      report.rows.push_back(bucket_row(b, "gp", 0, u, g, q, cfg.seed));
    }
  }

  // learned rules: train once at the fixed threshold-free objective, then
  // re-threshold the cached soft outputs
  for (int comb : cfg.combinations) {
    const FeatureSpec frame_spec = sequential_combination(comb, 0);
    const FeatureSpec window_spec = sequential_combination(comb, q);
    std::vector<double> soft;
    std::vector<const SamplePoint*> truth;
    const std::uint64_t tag = static_cast<std::uint64_t>(comb) * 256 + static_cast<std::uint64_t>(u);

    if (cfg.run_lstm_std) {
      std::vector<SequenceExample> lstm_train = ctx.train_examples(frame_spec);
      std::string note;
      CvCandidate best = ctx.select_lstm(
          lstm_train, frame_spec,
          lstm_schedule_candidates(cfg, table_network(4, static_cast<int>(frame_spec.features.size()))),
          u, derive_seed(cfg.seed, 0x157D00u + tag), &note);
      CvCandidate full = best;
      full.cfg.max_epochs =
          best.cfg.shuffle ? shuffled_schedule().max_epochs : unshuffled_schedule().max_epochs;
      full.cfg.seed = derive_seed(cfg.seed, 0x157D80u + tag);
      TrainedModel model = train_lstm(lstm_train, frame_spec, full.net, full.alpha, full.cfg, u);
      ctx.eval_soft(model, frame_spec, u, soft, truth);
      for (double g : gammas)
        report.rows.push_back(
            bucket_row(ctx.threshold_bucket(soft, truth, g), "lstm_std", comb, u, g, q, cfg.seed));
    }
    if (cfg.run_nn_h || cfg.run_gr_h) {
      Eigen::MatrixXd rows;
      Eigen::VectorXd labels;
      windowed_rows(ctx.ds, ctx.train_idx, window_spec, u, rows, labels);
      if (cfg.run_nn_h) {
        TrainConfig tc = cfg.nn_h_cfg;
        tc.seed = derive_seed(cfg.seed, 0x44E000u + tag);
        TrainedModel model = train_mlp(rows, labels, window_spec, mlp_spec({70, 40}), cfg.alpha, tc);
        ctx.eval_soft(model, window_spec, u, soft, truth);
        for (double g : gammas)
          report.rows.push_back(
              bucket_row(ctx.threshold_bucket(soft, truth, g), "nn_h", comb, u, g, q, cfg.seed));
      }
      if (cfg.run_gr_h) {
        TrainConfig tc = cfg.gr_h_cfg;
        tc.seed = derive_seed(cfg.seed, 0x64E000u + tag);
        TrainedModel model = train_logistic(rows, labels, window_spec, cfg.alpha, tc);
        ctx.eval_soft(model, window_spec, u, soft, truth);
        for (double g : gammas)
          report.rows.push_back(
              bucket_row(ctx.threshold_bucket(soft, truth, g), "gr_h", comb, u, g, q, cfg.seed));
      }
    }
  }

  report.wall_seconds = timer.seconds();
  return report;
}

ExperimentReport sweep_window(const QSweepConfig& cfg) {
  Timer timer;
  if (cfg.q_values.empty()) throw std::invalid_argument("sweep_window: axis values list is empty");
  if (cfg.sequences < 1) throw std::invalid_argument("sweep_window: need sequences");
  if (cfg.horizon_u < 1) throw std::invalid_argument("sweep_window: horizon must be >= 1");
  for (int q : cfg.q_values)
    if (q < 0) throw std::invalid_argument("sweep_window: window values must be >= 0");

  const int q_max = *std::max_element(cfg.q_values.begin(), cfg.q_values.end());
  const int u = cfg.horizon_u;
  if (cfg.frames <= q_max + u)
    throw std::invalid_argument("sweep_window: trajectories shorter than max window + horizon");

  ExperimentReport report;
  const LabeledDataset ds = build_circular_dataset(cfg.env, cfg.geom, cfg.radius_m, cfg.frames,
                                                   cfg.sequences, derive_seed(cfg.seed, 3));
  report.label_balance = ds.label_balance();

  for (int q : cfg.q_values) {
    GpRule rule;
    rule.env = cfg.env;
    rule.bs = cfg.geom.bs;
    rule.window_q = q;
    rule.horizon_u = u;
    std::vector<Bucket> gp_parts(ds.sequences.size()), app_parts(ds.sequences.size());
    parallel_for(static_cast<int>(ds.sequences.size()), cfg.jobs, [&](int i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      const Sequence& seq = ds.sequences[ii];
      // common instants across every swept window size
      for (int t = q_max; t + u < seq.length(); ++t) {
        const History h = make_history(seq, t, q, u);
        const SamplePoint& target = seq.points[static_cast<std::size_t>(t + u)];
        gp_parts[ii].add(map_decide(exact_success_prob(h, rule), rule.gamma_t), target, cfg.env);
        app_parts[ii].add(approx_decide(h, rule), target, cfg.env);
      }
    });
    Bucket gp, app;
    for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
      gp.append(gp_parts[i]);
      app.append(app_parts[i]);
    }
    report.rows.push_back(bucket_row(gp, "gp", 0, u, rule.gamma_t, q, cfg.seed));
    report.rows.push_back(bucket_row(app, "gp_app", 0, u, rule.gamma_t, q, cfg.seed));
  }

  report.wall_seconds = timer.seconds();
  return report;
}

}  // namespace dualband
