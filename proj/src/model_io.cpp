#include "dualband/model_io.hpp"

#include <fstream>
#include <json.hpp>
#include <stdexcept>

#include "dualband/csvio.hpp"

namespace dualband {
namespace {

using nlohmann::json;

constexpr int kSchemaMajor = 1;
constexpr int kSchemaMinor = 0;

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error(path.string() + ": " + what);
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vector_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  Eigen::Index i = 0;
  for (const json& x : a) v[i++] = x.get<double>();
  return v;
}

const char* layer_kind_name(LayerSpec::Kind k) {
  switch (k) {
    case LayerSpec::Kind::fc: return "fc";
    case LayerSpec::Kind::lstm: return "lstm";
    case LayerSpec::Kind::relu: return "relu";
  }
  throw std::logic_error("layer_kind_name: bad enum");
}

LayerSpec::Kind layer_kind_from_name(const std::string& name,
                                     const std::filesystem::path& path) {
  if (name == "fc") return LayerSpec::Kind::fc;
  if (name == "lstm") return LayerSpec::Kind::lstm;
  if (name == "relu") return LayerSpec::Kind::relu;
  fail(path, "unknown layer kind: " + name);
}

}  // namespace

void save_model(const std::filesystem::path& path, const ModelArtifact& artifact) {
  const TrainedModel& m = artifact.model;
  json doc;
  doc["schema"] = std::string("model/") + std::to_string(kSchemaMajor) + "." +
                  std::to_string(kSchemaMinor);
  doc["config_hash"] = artifact.config_hash;
  doc["seed"] = artifact.seed;
  doc["kind"] = model_kind_name(m.kind);

  json features = json::array();
  for (Feature f : m.spec.features) features.push_back(feature_name(f));
  doc["features"] = features;
  doc["window_q"] = m.spec.window_q;

  doc["standardizer"] = {{"mean", vector_to_json(m.standardizer.mean)},
                         {"scale", vector_to_json(m.standardizer.scale)},
                         {"kept", m.standardizer.kept}};

  json layers = json::array();
  for (const LayerSpec& l : m.net.layers)
    layers.push_back({{"kind", layer_kind_name(l.kind)}, {"width", l.width}});
  doc["net"] = {{"name", m.net.name}, {"layers", layers}};

  doc["theta"] = vector_to_json(m.theta);
  doc["gamma_t"] = m.gamma_t;
  doc["alpha"] = m.alpha;
  doc["train_ce"] = m.train_ce;

  write_text_atomic(path, doc.dump(2) + "\n");
}

ModelArtifact load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    fail(path, std::string("not valid JSON: ") + e.what());
  }

  try {
    std::string schema = doc.at("schema").get<std::string>();
    auto slash = schema.find('/');
    auto dot = schema.find('.', slash == std::string::npos ? 0 : slash);
    if (slash == std::string::npos || dot == std::string::npos || schema.substr(0, slash) != "model")
      fail(path, "not a model artifact, schema: " + schema);
    int major = std::stoi(schema.substr(slash + 1, dot - slash - 1));
    if (major != kSchemaMajor)
      fail(path, "unsupported schema major version " + std::to_string(major));

    ModelArtifact artifact;
    artifact.config_hash = doc.value("config_hash", std::string());
    artifact.seed = doc.value("seed", std::uint64_t{0});

    TrainedModel& m = artifact.model;
    m.kind = model_kind_from_name(doc.at("kind").get<std::string>());
    for (const json& f : doc.at("features"))
      m.spec.features.push_back(feature_from_name(f.get<std::string>()));
    if (m.spec.features.empty()) fail(path, "model has no features");
    m.spec.window_q = doc.at("window_q").get<int>();

    const json& st = doc.at("standardizer");
    m.standardizer.mean = vector_from_json(st.at("mean"));
    m.standardizer.scale = vector_from_json(st.at("scale"));
    m.standardizer.kept = st.at("kept").get<std::vector<int>>();
    if (m.standardizer.mean.size() != m.standardizer.scale.size() ||
        m.standardizer.mean.size() != m.spec.length())
      fail(path, "standardizer dimensions do not match the feature spec");
    for (int k : m.standardizer.kept)
      if (k < 0 || k >= m.standardizer.in_dim()) fail(path, "kept index out of range");

    const json& net = doc.at("net");
    m.net.name = net.at("name").get<std::string>();
    for (const json& l : net.at("layers")) {
      LayerSpec spec;
      spec.kind = layer_kind_from_name(l.at("kind").get<std::string>(), path);
      spec.width = l.at("width").get<int>();
      m.net.layers.push_back(spec);
    }

    m.theta = vector_from_json(doc.at("theta"));
    if (m.kind == ModelKind::linear) {
      if (m.theta.size() != m.standardizer.out_dim() + 1)
        fail(path, "parameter count does not match the standardized input");
    } else {
      Network net(m.net, m.standardizer.out_dim());
      if (m.theta.size() != net.n_params())
        fail(path, "parameter count does not match the architecture");
    }
    m.gamma_t = doc.at("gamma_t").get<double>();
    m.alpha = doc.at("alpha").get<double>();
    m.train_ce = doc.value("train_ce", std::vector<double>{});
    return artifact;
  } catch (const json::exception& e) {
    fail(path, std::string("malformed model artifact: ") + e.what());
  } catch (const std::invalid_argument& e) {
    fail(path, e.what());
  }
}

}  // namespace dualband
