#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dualband/ml_rules.hpp"

namespace dualband {

// A trained model on disk: JSON carrying the feature spec (by feature name),
// the standardizer, the architecture, the flat parameter vector and the
// decision threshold, stamped with the producing config hash and seed.
struct ModelArtifact {
  TrainedModel model;
  std::string config_hash;
  std::uint64_t seed = 0;
};

// Atomic write (temp + rename). Load rejects unknown schema major versions
// and inconsistent dimensions with std::runtime_error naming the file.
void save_model(const std::filesystem::path& path, const ModelArtifact& artifact);
ModelArtifact load_model(const std::filesystem::path& path);

}  // namespace dualband
