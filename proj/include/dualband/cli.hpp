#pragma once

// Command front end: generate / ingest / train / eval / sweep. The cmd_*
// functions do the work and are callable from tests; run_cli wraps them in
// argument parsing for the `dualband` binary.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dualband/config.hpp"

namespace dualband {

// What a finished subcommand wants printed: progress lines for stdout and
// warnings for stderr. Failures are exceptions; run_cli turns them into
// "error: ..." plus exit code 1.
struct CommandResult {
  std::vector<std::string> lines;
  std::vector<std::string> warnings;
};

// Synthesize a dataset CSV per cfg.generate. The seed streams match the
// experiment runners, so evaluating a generated file reproduces the
// corresponding stochastic run.
CommandResult cmd_generate(const ResolvedConfig& cfg, const std::filesystem::path& out_path);

// Validate an externally produced trace, recompute labels from the stored
// rates, fit path-loss and shadowing parameters, and write the cleaned
// dataset plus a config fragment with the fits (next to out_path, extension
// ".params.ini").
CommandResult cmd_ingest(const ResolvedConfig& cfg, const std::filesystem::path& trace_path,
                         const std::filesystem::path& out_path);

// Train the enabled learned rules of cfg.experiment and write one model
// artifact per rule/combination (and horizon, for sequential rules) into
// out_dir. Without a dataset the training data is generated from the seed.
CommandResult cmd_train(const ResolvedConfig& cfg,
                        const std::optional<std::filesystem::path>& dataset_path,
                        const std::filesystem::path& out_dir);

// Run the configured experiment and write the results CSV. Without a dataset
// the full stochastic study runs; with one, the same rule battery runs on the
// file's single realization (one-shot) or its sequences (sequential).
CommandResult cmd_eval(const ResolvedConfig& cfg,
                       const std::optional<std::filesystem::path>& dataset_path,
                       const std::filesystem::path& out_path);

// Walk the configured sweep axis (gamma, horizon, or window) and write the
// results CSV.
CommandResult cmd_sweep(const ResolvedConfig& cfg, const std::filesystem::path& out_path);

// argv-style entry shared by the binary and the tests (argv[0] excluded);
// returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dualband
