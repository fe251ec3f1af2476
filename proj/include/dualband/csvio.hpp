#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dualband/dataset.hpp"
#include "dualband/eval.hpp"

namespace dualband {

// Comment header stamped into every file we write, so a result can always be
// traced back to the exact configuration and seed that produced it.
struct FileStamp {
  std::string config_hash;              // hex digest of the resolved config; empty = omit
  std::uint64_t seed = 0;
  std::vector<std::string> extra;       // free-form lines, written one comment each
};

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double x);

// Whole-file write through a sibling temp file and rename; the target never
// holds a torn write.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

// Dataset CSV, schema "dataset/1.0". Columns:
//   seq_id,frame,t_s,x_m,y_m,d_m,theta_rad,s_c_db,s_m_db,snr_c_db,snr_m_db,
//   rate_c_bps,rate_m_bps,delay_s,aod_rad,label
// delay_s/aod_rad cells are empty when the point has no value. Writing is
// atomic (temp file + rename). Reading restores the dataset bit-for-bit,
// including seed and provenance from the comment header; files without a
// stamp are treated as ingested. Malformed content raises std::runtime_error
// naming the offending line; an unknown schema major version is rejected.
void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& ds,
                       const FileStamp& stamp);
LabeledDataset read_dataset_csv(const std::filesystem::path& path);

// Results CSV, schema "results/1.0". Columns:
//   rule,combination,U,gamma_t,Q,ba_error,rate_loss,n_test,seed
// Report notes and summary figures ride along as comment lines.
void write_results_csv(const std::filesystem::path& path, const ExperimentReport& report,
                       const FileStamp& stamp);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

}  // namespace dualband
