#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dualband/eval.hpp"

namespace dualband {

// What cmd_generate should synthesize.
struct GenerateSpec {
  std::string kind = "sequential";  // one_shot | sequential | circular
  int points = 2000;                // one_shot
  int sequences = 1000;             // sequential / circular
  double radius_m = 125.0;          // circular
  int frames = 157;                 // circular
};

// Which axis cmd_sweep walks. gamma and horizon sweep the sequential
// experiment; window sweeps the circular-trajectory observation window.
struct SweepSpec {
  std::string axis = "gamma";  // gamma | horizon | window
  std::vector<double> gamma_values = {0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50,
                                      0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95};
  std::vector<int> u_values = {2, 4, 6, 8, 10, 12, 14, 16};
};

// Every tunable of the toolkit with the file's values filled in and defaults
// everywhere else. The experiment configs share one channel/cell/mobility
// description; the kernel shape defaults to 1.9 for the one-shot experiment
// and 1.0 otherwise unless the file pins it.
struct ResolvedConfig {
  std::string experiment = "one_shot";  // one_shot | sequential
  std::uint64_t seed = 1;
  int jobs = 1;
  bool kernel_shape_set = false;

  OneShotConfig one_shot;
  SequentialConfig sequential;
  QSweepConfig q_sweep;
  GenerateSpec generate;
  SweepSpec sweep;
};

// INI-style text: [section] headers, key = value lines, # or ; comments.
// Unknown sections or keys, duplicate keys, and malformed values all raise
// std::invalid_argument naming the line. parse_config takes the raw text so
// tests can avoid the filesystem; `source_name` labels error messages.
ResolvedConfig parse_config(const std::string& text, const std::string& source_name);
ResolvedConfig load_config(const std::filesystem::path& path);

// Root-seed override (--seed); keeps the per-experiment seed copies in step.
void apply_seed(ResolvedConfig& cfg, std::uint64_t seed);
void apply_jobs(ResolvedConfig& cfg, int jobs);

// Canonical dump of every resolved value, itself parseable: feeding the
// render back through parse_config reproduces the same render.
std::string render_resolved(const ResolvedConfig& cfg);

// FNV-1a 64-bit digest of render_resolved, as 16 hex characters.
std::string config_hash(const ResolvedConfig& cfg);

}  // namespace dualband
