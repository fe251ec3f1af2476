#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>

#include "dualband/ml_rules.hpp"

using namespace dualband;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// small synthetic classification set: label 1 iff x0 + noise > 0
void planted_rows(int n, double noise, std::uint64_t seed, MatrixXd& x, VectorXd& y) {
  Rng rng(seed);
  x.resize(n, 2);
  y.resize(n);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(-2.0, 2.0);
    x(i, 1) = rng.uniform(-1.0, 1.0);  // uninformative
    y(i) = x(i, 0) + noise * rng.normal() > 0.0 ? 1.0 : 0.0;
  }
}

SamplePoint handmade_point(double d, double theta, double snr_c, double snr_m) {
  SamplePoint p;
  p.d_m = d;
  p.theta_rad = theta;
  p.snr_c_db = snr_c;
  p.snr_m_db = snr_m;
  p.delay_s = d / 3e8;
  p.aod_rad = theta;
  return p;
}

}  // namespace

TEST_CASE("feature assembly applies the scale rules") {
  SamplePoint p = handmade_point(100.0, 0.7, 11.0, -4.0);
  FeatureSpec spec{{Feature::distance, Feature::angle, Feature::cm_power, Feature::mm_power}, 0};
  VectorXd x = assemble_features(p, spec);
  REQUIRE(x.size() == 4);
  CHECK(x(0) == doctest::Approx(2.0));  // log10(100)
  CHECK(x(1) == 0.7);
  CHECK(x(2) == 11.0);
  CHECK(x(3) == -4.0);

  // two orderings produce permutations of each other
  FeatureSpec rev{{Feature::angle, Feature::distance}, 0};
  FeatureSpec fwd{{Feature::distance, Feature::angle}, 0};
  VectorXd a = assemble_features(p, fwd), b = assemble_features(p, rev);
  CHECK(a(0) == b(1));
  CHECK(a(1) == b(0));
}

TEST_CASE("windowed assembly flattens oldest-first with length F(Q+1)") {
  Sequence seq;
  for (int t = 0; t < 8; ++t) {
    seq.points.push_back(handmade_point(10.0 + t, 0.1 * t, t, -t));
    seq.t_s.push_back(4.0 * t);
  }
  FeatureSpec spec{{Feature::cm_power, Feature::mm_power, Feature::angle}, 5};
  CHECK(spec.length() == 18);  // F=3, Q=5
  VectorXd x = assemble_features(seq, 6, spec);
  REQUIRE(x.size() == 18);
  // oldest frame of the window is t=1, newest t=6
  CHECK(x(0) == 1.0);
  CHECK(x(1) == -1.0);
  CHECK(x(2) == doctest::Approx(0.1));
  CHECK(x(15) == 6.0);
  CHECK(x(16) == -6.0);
  CHECK(x(17) == doctest::Approx(0.6));
  CHECK_THROWS_AS(assemble_features(seq, 4, spec), std::out_of_range);
}

TEST_CASE("missing optional features raise a schema error naming the field") {
  SamplePoint p = handmade_point(50.0, 0.0, 0.0, 0.0);
  p.delay_s.reset();
  FeatureSpec spec{{Feature::delay}, 0};
  try {
    assemble_features(p, spec);
    FAIL("expected a schema error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("delay") != std::string::npos);
  }
}

TEST_CASE("standardizer: defining property, round trip, leakage") {
  Rng rng(5);
  MatrixXd x(200, 3);
  for (int i = 0; i < 200; ++i) {
    x(i, 0) = rng.normal(3.0, 2.0);
    x(i, 1) = rng.uniform(-1.0, 5.0);
    x(i, 2) = rng.normal(-10.0, 0.3);
  }
  Standardizer st = fit_standardizer(x);
  REQUIRE(st.out_dim() == 3);
  MatrixXd z = st.apply_rows(x);
  for (int j = 0; j < 3; ++j) {
    CHECK(z.col(j).mean() == doctest::Approx(0.0).epsilon(1e-9));
    double sd = std::sqrt((z.col(j).array() - z.col(j).mean()).square().sum() / 199.0);
    CHECK(sd == doctest::Approx(1.0).epsilon(1e-9));
  }

  // round trip: de-standardizing recovers the input to machine precision
  for (int i = 0; i < 200; i += 37)
    for (int j = 0; j < 3; ++j) {
      double back = st.mean(j) + z(i, j) / st.scale(j);
      CHECK(back == doctest::Approx(x(i, j)).epsilon(1e-12));
    }

  // fitting on a different split must move the statistics
  Standardizer head = fit_standardizer(x.topRows(100));
  Standardizer tail = fit_standardizer(x.bottomRows(100));
  CHECK(head.mean(0) != tail.mean(0));
}

TEST_CASE("standardizer drops constant columns") {
  MatrixXd x(50, 2);
  x.col(0).setConstant(7.0);
  for (int i = 0; i < 50; ++i) x(i, 1) = i;
  Standardizer st = fit_standardizer(x);
  REQUIRE(st.kept == std::vector<int>{1});
  VectorXd v(2);
  v << 7.0, 10.0;
  CHECK(st.apply(v).size() == 1);
}

TEST_CASE("cross entropy: perfect, uniform, frozen hand value") {
  VectorXd y(2), p(2);
  y << 1.0, 0.0;
  p << 1.0 - 1e-13, 1e-13;
  CHECK(cross_entropy(p, y) == doctest::Approx(0.0).epsilon(1e-9));
  p << 0.5, 0.5;
  CHECK(cross_entropy(p, y) == doctest::Approx(std::log(2.0)));

  // -(ln .9 + ln .8 + ln .6)/3, frozen from hand arithmetic
  VectorXd y3(3), p3(3);
  y3 << 1.0, 0.0, 1.0;
  p3 << 0.9, 0.2, 0.6;
  CHECK(cross_entropy(p3, y3) == doctest::Approx(0.2797765602).epsilon(1e-8));
}

TEST_CASE("linear rule: separable data, ridge limit") {
  // one informative feature, classes separated by a clear margin
  Rng rng(11);
  MatrixXd x(400, 1);
  VectorXd y(400);
  for (int i = 0; i < 400; ++i) {
    double mag = rng.uniform(0.25, 2.0);
    x(i, 0) = rng.uniform() < 0.5 ? -mag : mag;
    y(i) = x(i, 0) > 0.0 ? 1.0 : 0.0;
  }
  FeatureSpec spec{{Feature::distance}, 0};

  TrainedModel m = train_linear(x.topRows(300), y.head(300), spec, 0.01);
  VectorXd soft = predict_rows(m, x.bottomRows(100));
  m.gamma_t = calibrate_threshold({soft}, {y.tail(100)});
  int wrong = 0;
  for (int i = 0; i < 100; ++i) wrong += (soft(i) > m.gamma_t ? 1 : 0) != static_cast<int>(y(300 + i));
  CHECK(wrong == 0);
  for (int i = 0; i < 100; ++i) {
    CHECK(soft(i) >= 0.0);
    CHECK(soft(i) <= 1.0);
  }

  // giant ridge drives the weights to zero and the output to the label mean
  TrainedModel flat = train_linear(x, y, spec, 1e12);
  CHECK(std::abs(flat.theta(0)) < 1e-6);
  CHECK(predict(flat, x.row(0).transpose()) == doctest::Approx(y.mean()).epsilon(1e-6));
}

TEST_CASE("logistic rule is the hidden-layer-free network") {
  MatrixXd x;
  VectorXd y;
  planted_rows(300, 0.1, 21, x, y);
  FeatureSpec spec{{Feature::distance, Feature::angle}, 0};
  TrainConfig cfg = logistic_schedule();
  cfg.max_epochs = 300;
  cfg.seed = 9;

  TrainedModel gr = train_logistic(x, y, spec, 0.05, cfg);
  TrainedModel nn = train_mlp(x, y, spec, logistic_spec(), 0.05, cfg);
  REQUIRE(gr.train_ce.size() == nn.train_ce.size());
  for (std::size_t e = 0; e < gr.train_ce.size(); ++e) CHECK(gr.train_ce[e] == nn.train_ce[e]);
  CHECK((gr.theta - nn.theta).norm() == 0.0);

  // full-batch descent on the convex objective decreases monotonically
  for (std::size_t e = 1; e < gr.train_ce.size(); ++e)
    CHECK(gr.train_ce[e] <= gr.train_ce[e - 1] + 1e-6);

  // agrees with the linear rule where the classes are far apart
  TrainedModel lr = train_linear(x, y, spec, 0.05);
  VectorXd pg = predict_rows(gr, x), pl = predict_rows(lr, x);
  int agree = 0;
  for (int i = 0; i < 300; ++i) agree += (pg(i) > 0.5) == (pl(i) > 0.5);
  CHECK(agree >= 290);
}

TEST_CASE("feature order is irrelevant after refitting") {
  MatrixXd x;
  VectorXd y;
  planted_rows(400, 0.1, 33, x, y);
  MatrixXd xr(400, 2);
  xr.col(0) = x.col(1);
  xr.col(1) = x.col(0);
  TrainConfig cfg = logistic_schedule();
  cfg.seed = 4;
  FeatureSpec fwd{{Feature::distance, Feature::angle}, 0};
  FeatureSpec rev{{Feature::angle, Feature::distance}, 0};
  TrainedModel a = train_logistic(x.topRows(300), y.head(300), fwd, 0.1, cfg);
  TrainedModel b = train_logistic(xr.topRows(300), y.head(300), rev, 0.1, cfg);
  VectorXd pa = predict_rows(a, x.bottomRows(100));
  VectorXd pb = predict_rows(b, xr.bottomRows(100));
  int wrong_a = 0, wrong_b = 0;
  for (int i = 0; i < 100; ++i) {
    wrong_a += (pa(i) > 0.5) != (y(300 + i) > 0.5);
    wrong_b += (pb(i) > 0.5) != (y(300 + i) > 0.5);
  }
  CHECK(std::abs(wrong_a - wrong_b) <= 2);  // converged optimum is order-free
}

TEST_CASE("mlp solves an xor-style layout") {
  Rng rng(3);
  MatrixXd x(400, 2);
  VectorXd y(400);
  for (int i = 0; i < 400; ++i) {
    x(i, 0) = rng.uniform(-1.0, 1.0);
    x(i, 1) = rng.uniform(-1.0, 1.0);
    y(i) = (x(i, 0) > 0.0) != (x(i, 1) > 0.0) ? 1.0 : 0.0;
  }
  FeatureSpec spec{{Feature::distance, Feature::angle}, 0};
  TrainConfig cfg = one_shot_schedule();
  cfg.seed = 12;
  TrainedModel m = train_mlp(x, y, spec, mlp_spec({10, 10}), 0.0, cfg);
  VectorXd p = predict_rows(m, x);
  int wrong = 0;
  for (int i = 0; i < 400; ++i) wrong += (p(i) > 0.5) != (y(i) > 0.5);
  CHECK(wrong < 20);  // < 5% training error
  CHECK(m.train_ce.back() < m.train_ce.front());
}

TEST_CASE("network construction and determinism") {
  NetworkSpec nw4 = table_network(4, 4);
  REQUIRE(nw4.layers.size() == 3);
  CHECK(nw4.layers[0].width == 20);
  CHECK(nw4.layers[1].kind == LayerSpec::Kind::lstm);
  CHECK(nw4.layers[1].width == 40);
  CHECK(nw4.layers[2].width == 20);
  CHECK(nw4.recurrent());
  CHECK(nw4.name == "NW4");

  NetworkSpec nw12 = table_network(12, 3);
  REQUIRE(nw12.layers.size() == 1);
  CHECK(nw12.layers[0].width == 30);
  CHECK_THROWS_AS(table_network(16, 3), std::invalid_argument);

  Network net(nw4, 4);
  Rng r1(77), r2(77);
  VectorXd t1 = net.init_params(r1), t2 = net.init_params(r2);
  CHECK((t1 - t2).norm() == 0.0);
  CHECK(net.weight_mask().sum() < net.n_params());  // biases excluded

  // soft outputs stay inside [0,1] for random parameters
  MatrixXd frames = MatrixXd::Random(12, 4);
  VectorXd p = net.forward(frames, t1);
  for (int t = 0; t < 12; ++t) {
    CHECK(p(t) >= 0.0);
    CHECK(p(t) <= 1.0);
  }
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(19);

  // feedforward with relu
  {
    Network net(mlp_spec({7, 5}), 3);
    VectorXd theta = net.init_params(rng);
    MatrixXd rows(6, 3);
    VectorXd labels(6);
    std::vector<char> mask(6, 1);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 3; ++j) rows(i, j) = rng.normal();
      labels(i) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    CHECK(gradient_check(net, rows, labels, mask, theta, 0.1, 1e-5) < 1e-4);
  }

  // five-frame recurrent stack with a shifted-label mask
  {
    NetworkSpec spec;
    spec.layers = {{LayerSpec::Kind::fc, 4}, {LayerSpec::Kind::lstm, 5}, {LayerSpec::Kind::fc, 3}};
    Network net(spec, 2);
    VectorXd theta = net.init_params(rng);
    MatrixXd rows(5, 2);
    VectorXd labels(5);
    std::vector<char> mask = {1, 1, 1, 1, 0};  // last frame beyond the horizon
    for (int t = 0; t < 5; ++t) {
      rows(t, 0) = rng.normal();
      rows(t, 1) = rng.normal();
      labels(t) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    CHECK(gradient_check(net, rows, labels, mask, theta, 0.05, 1e-5) < 1e-4);
  }

  // relu directly after the recurrent layer
  {
    NetworkSpec spec;
    spec.layers = {{LayerSpec::Kind::lstm, 4}, {LayerSpec::Kind::relu, 0}};
    Network net(spec, 3);
    VectorXd theta = net.init_params(rng);
    MatrixXd rows(4, 3);
    VectorXd labels(4);
    std::vector<char> mask(4, 1);
    for (int t = 0; t < 4; ++t) {
      for (int j = 0; j < 3; ++j) rows(t, j) = rng.normal();
      labels(t) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    }
    CHECK(gradient_check(net, rows, labels, mask, theta, 0.0, 1e-5) < 1e-4);
  }
}

TEST_CASE("lstm training: constant labels converge, short sequences are policed") {
  std::vector<SequenceExample> seqs;
  Rng rng(8);
  for (int k = 0; k < 15; ++k) {
    SequenceExample ex;
    ex.frames = MatrixXd::Random(12, 2);
    ex.labels = VectorXd::Ones(12);
    seqs.push_back(ex);
  }
  FeatureSpec spec{{Feature::distance, Feature::angle}, 0};
  NetworkSpec net;
  net.layers = {{LayerSpec::Kind::lstm, 6}};
  TrainConfig cfg = unshuffled_schedule();
  cfg.seed = 5;
  TrainedModel m = train_lstm(seqs, spec, net, 0.0, cfg, 2);
  CHECK(m.train_ce.back() < 0.05);
  VectorXd p = predict_sequence(m, seqs[0].frames);
  for (int t = 0; t + 2 < 12; ++t) CHECK(p(t) > 0.5);

  // sequences not longer than the horizon cannot contribute
  std::vector<SequenceExample> tiny(2);
  tiny[0].frames = MatrixXd::Random(3, 2);
  tiny[0].labels = VectorXd::Ones(3);
  tiny[1].frames = MatrixXd::Random(2, 2);
  tiny[1].labels = VectorXd::Ones(2);
  CHECK_THROWS_AS(train_lstm(tiny, spec, net, 0.0, cfg, 3), std::runtime_error);
}

TEST_CASE("decide uses a strict threshold; batch equals per-item") {
  MatrixXd x;
  VectorXd y;
  planted_rows(200, 0.2, 44, x, y);
  FeatureSpec spec{{Feature::distance, Feature::angle}, 0};
  TrainedModel m = train_logistic(x, y, spec, 0.1, logistic_schedule());

  m.gamma_t = 0.5;
  CHECK(decide(m, 0.5) == 0);  // tie goes to the cmWave band
  CHECK(decide(m, 0.5 + 1e-12) == 1);
  CHECK(decide(m, 0.3) == 0);

  VectorXd batch = predict_rows(m, x);
  for (int i = 0; i < 200; i += 23)
    CHECK(batch(i) == doctest::Approx(predict(m, x.row(i).transpose())).epsilon(1e-12));

  // recurrent models refuse the row interface
  NetworkSpec rec;
  rec.layers = {{LayerSpec::Kind::lstm, 3}};
  std::vector<SequenceExample> seqs(3);
  for (auto& s : seqs) {
    s.frames = MatrixXd::Random(6, 2);
    s.labels = VectorXd::Ones(6);
  }
  TrainConfig cfg = unshuffled_schedule();
  cfg.max_epochs = 3;
  TrainedModel lstm = train_lstm(seqs, spec, rec, 0.0, cfg, 1);
  CHECK_THROWS_AS(predict_rows(lstm, x), std::runtime_error);
}

TEST_CASE("monte-carlo cv picks the planted model and is deterministic") {
  MatrixXd x;
  VectorXd y;
  planted_rows(300, 0.05, 70, x, y);
  FeatureSpec spec{{Feature::distance, Feature::angle}, 0};
  TrainConfig cfg = logistic_schedule();
  cfg.max_epochs = 200;

  std::vector<CvCandidate> one = {{ModelKind::logistic, logistic_spec(), 0.01, cfg}};
  CvSelection only = monte_carlo_cv(x, y, spec, one, 3, 0.2, 99);
  CHECK(only.best.alpha == 0.01);

  std::vector<CvCandidate> pair = {
      {ModelKind::logistic, logistic_spec(), 1e6, cfg},   // crippled by the penalty
      {ModelKind::logistic, logistic_spec(), 0.01, cfg},  // planted good model
  };
  CvSelection sel = monte_carlo_cv(x, y, spec, pair, 5, 0.2, 99);
  CHECK(sel.best.alpha == 0.01);
  CHECK(sel.mean_ce[1] < sel.mean_ce[0]);

  CvSelection again = monte_carlo_cv(x, y, spec, pair, 5, 0.2, 99);
  CHECK(again.best_ce == sel.best_ce);
}

TEST_CASE("threshold calibration: symmetric and degenerate splits") {
  VectorXd p(4), y(4);
  p << 0.1, 0.4, 0.6, 0.9;
  y << 0.0, 0.0, 1.0, 1.0;
  CHECK(calibrate_threshold({p}, {y}) == doctest::Approx(0.5));

  // all-positive labels with imperfect predictions: every nonzero threshold
  // loses at least one point, so the grid floor wins
  VectorXd pp(3), yy(3);
  pp << 0.04, 0.5, 0.9;
  yy << 1.0, 1.0, 1.0;
  CHECK(calibrate_threshold({pp}, {yy}) == doctest::Approx(0.0));
}

TEST_CASE("one-shot candidate menu respects the size budget") {
  std::vector<double> alphas = {0.05, 0.1, 0.15, 0.3, 0.5};
  auto menu = one_shot_candidates(ModelKind::mlp, one_shot_schedule(), alphas);
  CHECK(menu.size() == 60);  // 12 layouts x 5 alphas
  for (const auto& c : menu) {
    int layers = 0, total = 0;
    for (const auto& l : c.net.layers)
      if (l.kind == LayerSpec::Kind::fc) {
        ++layers;
        total += l.width;
      }
    CHECK(layers <= 4);
    CHECK(total <= 100);
  }
  auto gr_menu = one_shot_candidates(ModelKind::logistic, logistic_schedule(), alphas);
  CHECK(gr_menu.size() == 5);
}
