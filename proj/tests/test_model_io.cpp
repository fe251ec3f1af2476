#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dualband/model_io.hpp"
#include "dualband/rng.hpp"

using namespace dualband;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "dualband_model_io_test";
  fs::create_directories(dir);
  return dir;
}

// A small trained model over two features with some structure in it.
TrainedModel trained_toy(ModelKind kind) {
  Rng rng(31);
  int n = 80;
  Eigen::MatrixXd rows(n, 2);
  Eigen::VectorXd labels(n);
  for (int i = 0; i < n; ++i) {
    rows(i, 0) = 20.0 + 180.0 * rng.uniform();
    rows(i, 1) = 3.0 * (rng.uniform() - 0.5);
    labels[i] = rows(i, 1) > 0.0 ? 1.0 : 0.0;
  }
  FeatureSpec spec;
  spec.features = {Feature::distance, Feature::angle};
  if (kind == ModelKind::linear) return train_linear(rows, labels, spec, 0.05);
  TrainConfig cfg = one_shot_schedule();
  cfg.max_epochs = 60;
  cfg.seed = 5;
  if (kind == ModelKind::logistic) return train_logistic(rows, labels, spec, 0.01, cfg);
  return train_mlp(rows, labels, spec, mlp_spec({6}), 0.01, cfg);
}

}  // namespace

TEST_CASE("save/load round-trip preserves predictions exactly") {
  fs::path dir = temp_dir();
  for (ModelKind kind : {ModelKind::linear, ModelKind::logistic, ModelKind::mlp}) {
    TrainedModel m = trained_toy(kind);
    m.gamma_t = 0.47;
    fs::path path = dir / (std::string(model_kind_name(kind)) + ".json");
    save_model(path, ModelArtifact{m, "0123456789abcdef", 99});

    ModelArtifact back = load_model(path);
    CHECK(back.config_hash == "0123456789abcdef");
    CHECK(back.seed == 99);
    CHECK(back.model.kind == kind);
    CHECK(back.model.gamma_t == 0.47);
    CHECK(back.model.alpha == m.alpha);
    CHECK(back.model.spec.features == m.spec.features);
    CHECK(back.model.standardizer.kept == m.standardizer.kept);
    CHECK(back.model.theta.size() == m.theta.size());
    CHECK(back.model.train_ce == m.train_ce);

    Rng rng(77);
    for (int i = 0; i < 25; ++i) {
      Eigen::VectorXd x(2);
      x[0] = 20.0 + 180.0 * rng.uniform();
      x[1] = 3.0 * (rng.uniform() - 0.5);
      CHECK(predict(back.model, x) == predict(m, x));
    }
    CHECK_FALSE(fs::exists(path.string() + ".tmp"));
  }
}

TEST_CASE("recurrent artifacts keep the window and run on sequences") {
  fs::path dir = temp_dir();
  Rng rng(9);
  int seqs = 10, frames = 8;
  FeatureSpec spec;
  spec.features = {Feature::cm_power};
  std::vector<SequenceExample> examples;
  for (int s = 0; s < seqs; ++s) {
    SequenceExample ex;
    ex.frames.resize(frames, 1);
    ex.labels.resize(frames);
    for (int t = 0; t < frames; ++t) {
      ex.frames(t, 0) = rng.normal();
      ex.labels[t] = ex.frames(t, 0) > 0.0 ? 1.0 : 0.0;
    }
    examples.push_back(ex);
  }
  TrainConfig cfg = unshuffled_schedule();
  cfg.max_epochs = 10;
  cfg.seed = 3;
  NetworkSpec net = table_network(12, 1);  // single small LSTM stack
  TrainedModel m = train_lstm(examples, spec, net, 0.01, cfg, 0);

  fs::path path = dir / "lstm.json";
  save_model(path, ModelArtifact{m, "", 1});
  ModelArtifact back = load_model(path);
  CHECK(back.model.net.name == m.net.name);
  REQUIRE(back.model.net.layers.size() == m.net.layers.size());
  for (std::size_t i = 0; i < m.net.layers.size(); ++i) {
    CHECK(back.model.net.layers[i].kind == m.net.layers[i].kind);
    CHECK(back.model.net.layers[i].width == m.net.layers[i].width);
  }
  Eigen::MatrixXd probe(frames, 1);
  Rng prng(13);
  for (int t = 0; t < frames; ++t) probe(t, 0) = prng.normal();
  Eigen::VectorXd a = predict_sequence(m, probe);
  Eigen::VectorXd b = predict_sequence(back.model, probe);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("malformed artifacts are rejected") {
  fs::path dir = temp_dir();
  fs::path path = dir / "bad.json";

  auto spit = [&](const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    out << text;
  };

  spit("not json at all{");
  CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("not valid JSON"),
                       std::runtime_error);

  spit(R"({"schema":"model/2.0"})");
  CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("major version 2"),
                       std::runtime_error);

  spit(R"({"schema":"results/1.0"})");
  CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("not a model artifact"),
                       std::runtime_error);

  TrainedModel m = trained_toy(ModelKind::linear);
  fs::path good = dir / "good.json";
  save_model(good, ModelArtifact{m, "", 0});

  // Break internal consistency: drop one theta entry.
  std::ifstream in(good);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto pos = text.find("\"theta\":");  // the parameter key, not the feature name "theta"
  REQUIRE(pos != std::string::npos);
  auto bracket = text.find('[', pos);
  auto comma = text.find(',', bracket);
  text.erase(bracket + 1, comma - bracket);
  spit(text);
  CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("parameter count"),
                       std::runtime_error);

  spit(R"({"schema":"model/1.0","kind":"mlp","features":["d","banana"]})");
  CHECK_THROWS_WITH_AS(load_model(path), doctest::Contains("banana"), std::runtime_error);

  CHECK_THROWS_AS(load_model(dir / "missing.json"), std::runtime_error);
}
