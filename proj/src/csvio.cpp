#include "dualband/csvio.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dualband {
namespace {

constexpr const char* kDatasetHeader =
    "seq_id,frame,t_s,x_m,y_m,d_m,theta_rad,s_c_db,s_m_db,snr_c_db,snr_m_db,"
    "rate_c_bps,rate_m_bps,delay_s,aod_rad,label";
constexpr const char* kResultsHeader = "rule,combination,U,gamma_t,Q,ba_error,rate_loss,n_test,seed";
constexpr int kSchemaMajor = 1;
constexpr int kSchemaMinor = 0;

[[noreturn]] void fail_at(const std::filesystem::path& path, long line, const std::string& what) {
  throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": " + what);
}

// Writes through a sibling temp file; the target either keeps its old content
// or gets the complete new one, never a torn write.
class AtomicWriter {
 public:
  explicit AtomicWriter(const std::filesystem::path& path)
      : final_(path), temp_(path.string() + ".tmp") {
    out_.open(temp_, std::ios::binary | std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open for writing: " + temp_.string());
  }
  ~AtomicWriter() {
    if (!committed_) {
      out_.close();
      std::error_code ec;
      std::filesystem::remove(temp_, ec);
    }
  }
  std::ofstream& stream() { return out_; }
  void commit() {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed: " + temp_.string());
    out_.close();
    std::filesystem::rename(temp_, final_);
    committed_ = true;
  }

 private:
  std::filesystem::path final_;
  std::filesystem::path temp_;
  std::ofstream out_;
  bool committed_ = false;
};

void write_stamp(std::ofstream& out, const char* schema_name, const FileStamp& stamp) {
  out << "# schema " << schema_name << "/" << kSchemaMajor << "." << kSchemaMinor << "\n";
  if (!stamp.config_hash.empty()) out << "# config_hash=" << stamp.config_hash << "\n";
  out << "# seed=" << stamp.seed << "\n";
  for (const std::string& line : stamp.extra) out << "# " << line << "\n";
}

struct CommentHeader {
  bool saw_schema = false;
  std::string schema_name;
  std::uint64_t seed = 0;
  bool saw_seed = false;
  std::string provenance;
};

// Consumes leading comment lines; returns the first non-comment line (the
// column header) through `header`. `line_no` tracks the file position.
CommentHeader read_comments(std::istream& in, const std::filesystem::path& path,
                            std::string& header, long& line_no) {
  CommentHeader h;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] != '#') {
      header = line;
      return h;
    }
    std::string body = line.substr(1);
    if (!body.empty() && body[0] == ' ') body = body.substr(1);
    if (body.rfind("schema ", 0) == 0) {
      std::string tag = body.substr(7);
      auto slash = tag.find('/');
      auto dot = tag.find('.', slash == std::string::npos ? 0 : slash);
      if (slash == std::string::npos || dot == std::string::npos)
        fail_at(path, line_no, "malformed schema tag: " + tag);
      h.schema_name = tag.substr(0, slash);
      int major = std::atoi(tag.substr(slash + 1, dot - slash - 1).c_str());
      if (major != kSchemaMajor)
        fail_at(path, line_no,
                "unsupported schema major version " + std::to_string(major) + " in " + tag);
      h.saw_schema = true;
    } else if (body.rfind("seed=", 0) == 0) {
      h.seed = std::strtoull(body.c_str() + 5, nullptr, 10);
      h.saw_seed = true;
    } else if (body.rfind("provenance=", 0) == 0) {
      h.provenance = body.substr(11);
    }
  }
  fail_at(path, line_no, "missing column header");
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_double(const std::string& s, const std::filesystem::path& path, long line_no,
                    const char* field) {
  if (s.empty()) fail_at(path, line_no, std::string("empty ") + field);
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE)
    fail_at(path, line_no, std::string("bad ") + field + ": " + s);
  return v;
}

long parse_int(const std::string& s, const std::filesystem::path& path, long line_no,
               const char* field) {
  if (s.empty()) fail_at(path, line_no, std::string("empty ") + field);
  errno = 0;
  char* end = nullptr;
  long v = std::strtol(s.c_str(), &end, 10);
  if (end != s.c_str() + s.size() || errno == ERANGE)
    fail_at(path, line_no, std::string("bad ") + field + ": " + s);
  return v;
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) return buf;
  }
  return buf;  // %.17g always round-trips a finite double
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  AtomicWriter w(path);
  w.stream() << text;
  w.commit();
}

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& ds,
                       const FileStamp& stamp) {
  AtomicWriter w(path);
  std::ofstream& out = w.stream();
  write_stamp(out, "dataset", stamp);
  out << "# provenance=" << (ds.provenance == Provenance::stochastic ? "stochastic" : "ingested")
      << "\n";
  out << kDatasetHeader << "\n";
  for (const Sequence& seq : ds.sequences) {
    for (int t = 0; t < seq.length(); ++t) {
      const SamplePoint& p = seq.points[t];
      out << seq.id << ',' << t << ',' << format_double(seq.t_s[t]) << ','
          << format_double(p.position.x) << ',' << format_double(p.position.y) << ','
          << format_double(p.d_m) << ',' << format_double(p.theta_rad) << ','
          << format_double(p.s_c_db) << ',' << format_double(p.s_m_db) << ','
          << format_double(p.snr_c_db) << ',' << format_double(p.snr_m_db) << ','
          << format_double(p.rate_c_bps) << ',' << format_double(p.rate_m_bps) << ',';
      if (p.delay_s) out << format_double(*p.delay_s);
      out << ',';
      if (p.aod_rad) out << format_double(*p.aod_rad);
      out << ',' << p.label << "\n";
    }
  }
  w.commit();
}

LabeledDataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  long line_no = 0;
  std::string header;
  CommentHeader h = read_comments(in, path, header, line_no);
  if (h.saw_schema && h.schema_name != "dataset")
    fail_at(path, line_no, "expected a dataset file, found schema " + h.schema_name);
  if (header != kDatasetHeader)
    fail_at(path, line_no, "unexpected column header: " + header);

  LabeledDataset ds;
  ds.seed = h.seed;
  // A file without our stamp came from somewhere else.
  if (h.provenance == "stochastic")
    ds.provenance = Provenance::stochastic;
  else
    ds.provenance = Provenance::ingested;

  std::string line;
  bool have_seq = false;
  std::vector<int> finished_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    std::vector<std::string> f = split_fields(line);
    if (f.size() != 16)
      fail_at(path, line_no, "expected 16 fields, found " + std::to_string(f.size()));

    int seq_id = static_cast<int>(parse_int(f[0], path, line_no, "seq_id"));
    int frame = static_cast<int>(parse_int(f[1], path, line_no, "frame"));
    if (!have_seq || ds.sequences.back().id != seq_id) {
      if (have_seq) finished_ids.push_back(ds.sequences.back().id);
      for (int done : finished_ids)
        if (done == seq_id)
          fail_at(path, line_no,
                  "seq_id " + std::to_string(seq_id) + " reappears after other sequences");
      ds.sequences.push_back(Sequence{});
      ds.sequences.back().id = seq_id;
      have_seq = true;
    }
    Sequence& seq = ds.sequences.back();
    if (frame != seq.length())
      fail_at(path, line_no, "expected frame " + std::to_string(seq.length()) + " of seq_id " +
                                 std::to_string(seq_id) + ", found " + std::to_string(frame));

    SamplePoint p;
    seq.t_s.push_back(parse_double(f[2], path, line_no, "t_s"));
    p.position.x = parse_double(f[3], path, line_no, "x_m");
    p.position.y = parse_double(f[4], path, line_no, "y_m");
    p.d_m = parse_double(f[5], path, line_no, "d_m");
    p.theta_rad = parse_double(f[6], path, line_no, "theta_rad");
    p.s_c_db = parse_double(f[7], path, line_no, "s_c_db");
    p.s_m_db = parse_double(f[8], path, line_no, "s_m_db");
    p.snr_c_db = parse_double(f[9], path, line_no, "snr_c_db");
    p.snr_m_db = parse_double(f[10], path, line_no, "snr_m_db");
    p.rate_c_bps = parse_double(f[11], path, line_no, "rate_c_bps");
    p.rate_m_bps = parse_double(f[12], path, line_no, "rate_m_bps");
    if (!f[13].empty()) p.delay_s = parse_double(f[13], path, line_no, "delay_s");
    if (!f[14].empty()) p.aod_rad = parse_double(f[14], path, line_no, "aod_rad");
    long label = parse_int(f[15], path, line_no, "label");
    if (label != 0 && label != 1)
      fail_at(path, line_no, "label must be 0 or 1, found " + f[15]);
    p.label = static_cast<int>(label);
    seq.points.push_back(p);
  }
  if (ds.sequences.empty()) fail_at(path, line_no, "no data rows");
  return ds;
}

void write_results_csv(const std::filesystem::path& path, const ExperimentReport& report,
                       const FileStamp& stamp) {
  AtomicWriter w(path);
  std::ofstream& out = w.stream();
  write_stamp(out, "results", stamp);
  // wall_seconds stays out of the file: same seed must mean byte-same output
  out << "# label_balance=" << format_double(report.label_balance) << "\n";
  for (const std::string& note : report.notes) out << "# note: " << note << "\n";
  out << kResultsHeader << "\n";
  for (const ResultRow& r : report.rows) {
    out << r.rule << ',' << r.combination << ',' << r.horizon_u << ','
        << format_double(r.gamma_t) << ',' << r.window_q << ',' << format_double(r.ba_error)
        << ',' << format_double(r.rate_loss) << ',' << r.n_test << ',' << r.seed << "\n";
  }
  w.commit();
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  long line_no = 0;
  std::string header;
  CommentHeader h = read_comments(in, path, header, line_no);
  if (h.saw_schema && h.schema_name != "results")
    fail_at(path, line_no, "expected a results file, found schema " + h.schema_name);
  if (header != kResultsHeader)
    fail_at(path, line_no, "unexpected column header: " + header);

  std::vector<ResultRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> f = split_fields(line);
    if (f.size() != 9)
      fail_at(path, line_no, "expected 9 fields, found " + std::to_string(f.size()));
    ResultRow r;
    if (f[0].empty()) fail_at(path, line_no, "empty rule");
    r.rule = f[0];
    r.combination = static_cast<int>(parse_int(f[1], path, line_no, "combination"));
    r.horizon_u = static_cast<int>(parse_int(f[2], path, line_no, "U"));
    r.gamma_t = parse_double(f[3], path, line_no, "gamma_t");
    r.window_q = static_cast<int>(parse_int(f[4], path, line_no, "Q"));
    r.ba_error = parse_double(f[5], path, line_no, "ba_error");
    r.rate_loss = parse_double(f[6], path, line_no, "rate_loss");
    r.n_test = parse_int(f[7], path, line_no, "n_test");
    if (f[8].empty()) fail_at(path, line_no, "empty seed");
    errno = 0;
    char* end = nullptr;
    r.seed = std::strtoull(f[8].c_str(), &end, 10);
    if (end != f[8].c_str() + f[8].size() || errno == ERANGE)
      fail_at(path, line_no, "bad seed: " + f[8]);
    rows.push_back(r);
  }
  return rows;
}

}  // namespace dualband
