#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <cstdlib>
#include <sstream>

#include "dualband/csvio.hpp"
#include "dualband/dataset.hpp"

using namespace dualband;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path dir = fs::temp_directory_path() / "dualband_csvio_test";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
  REQUIRE(out.good());
}

bool same_optional(const std::optional<double>& a, const std::optional<double>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || *a == *b;
}

bool same_point(const SamplePoint& a, const SamplePoint& b) {
  return a.position.x == b.position.x && a.position.y == b.position.y && a.d_m == b.d_m &&
         a.theta_rad == b.theta_rad && a.s_c_db == b.s_c_db && a.s_m_db == b.s_m_db &&
         a.snr_c_db == b.snr_c_db && a.snr_m_db == b.snr_m_db && a.rate_c_bps == b.rate_c_bps &&
         a.rate_m_bps == b.rate_m_bps && same_optional(a.delay_s, b.delay_s) &&
         same_optional(a.aod_rad, b.aod_rad) && a.label == b.label;
}

bool same_dataset(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.provenance != b.provenance || a.seed != b.seed) return false;
  if (a.sequences.size() != b.sequences.size()) return false;
  for (std::size_t s = 0; s < a.sequences.size(); ++s) {
    const Sequence& x = a.sequences[s];
    const Sequence& y = b.sequences[s];
    if (x.id != y.id || x.t_s != y.t_s || x.points.size() != y.points.size()) return false;
    for (std::size_t i = 0; i < x.points.size(); ++i)
      if (!same_point(x.points[i], y.points[i])) return false;
  }
  return true;
}

const char* kHeaderRow =
    "seq_id,frame,t_s,x_m,y_m,d_m,theta_rad,s_c_db,s_m_db,snr_c_db,snr_m_db,"
    "rate_c_bps,rate_m_bps,delay_s,aod_rad,label";

}  // namespace

TEST_CASE("format_double round-trips awkward values") {
  for (double x : {0.1, 1.0 / 3.0, 1e-17, 3.141592653589793, -1234.5678901234567,
                   6.02214076e23, 5e-324, 0.0, -0.75, 123456789.123456789}) {
    std::string s = format_double(x);
    CHECK(std::strtod(s.c_str(), nullptr) == x);  // stod would balk at subnormals
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(2.0) == "2");
}

TEST_CASE("dataset csv round-trip is exact") {
  fs::path dir = temp_dir();
  Environment env = Environment::defaults();
  CellGeometry geom;
  SmsParams sms;
  sms.sim_duration_s = 200.0;
  LabeledDataset ds = build_sequential_dataset(env, geom, sms, 5, 991);

  FileStamp stamp;
  stamp.config_hash = "00ff00ff00ff00ff";
  stamp.seed = ds.seed;
  stamp.extra = {"written by the round-trip test"};
  fs::path path = dir / "seq.csv";
  write_dataset_csv(path, ds, stamp);

  LabeledDataset back = read_dataset_csv(path);
  CHECK(same_dataset(ds, back));
  CHECK(back.provenance == Provenance::stochastic);
  CHECK(back.seed == ds.seed);
  CHECK_FALSE(fs::exists(path.string() + ".tmp"));

  // Points carry LOS delay and AoD, so no cell should be empty.
  std::string text = slurp(path);
  CHECK(text.find(",,") == std::string::npos);
  CHECK(text.find("# config_hash=00ff00ff00ff00ff\n") != std::string::npos);
  CHECK(text.find("# schema dataset/1.") != std::string::npos);
}

TEST_CASE("absent optional features become empty cells and survive the trip") {
  fs::path dir = temp_dir();
  LabeledDataset ds = build_one_shot_realization(Environment::defaults(), CellGeometry{}, 12, 7);
  for (Sequence& seq : ds.sequences) {
    seq.points[0].delay_s.reset();
    seq.points[0].aod_rad.reset();
  }
  fs::path path = dir / "bare.csv";
  write_dataset_csv(path, ds, FileStamp{"", ds.seed, {}});
  std::string text = slurp(path);
  CHECK(text.find(",,") != std::string::npos);

  LabeledDataset back = read_dataset_csv(path);
  CHECK(same_dataset(ds, back));
  CHECK_FALSE(back.sequences[3].points[0].delay_s.has_value());

  // One-shot rows are singleton sequences: seq_id counts points, frame stays 0.
  CHECK(text.find("\n0,0,") != std::string::npos);
  CHECK(text.find("\n11,0,") != std::string::npos);
}

TEST_CASE("dataset file row count matches points plus headers") {
  fs::path dir = temp_dir();
  LabeledDataset ds = build_one_shot_realization(Environment::defaults(), CellGeometry{}, 40, 3);
  fs::path path = dir / "count.csv";
  write_dataset_csv(path, ds, FileStamp{});
  std::string text = slurp(path);
  long rows = 0, comments = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') ++comments;
    else ++rows;
  }
  CHECK(rows == 40 + 1);  // data + column header
  CHECK(comments >= 2);   // schema + seed at least
}

TEST_CASE("malformed dataset content is rejected with the line number") {
  fs::path dir = temp_dir();
  fs::path path = dir / "bad.csv";
  const std::string head = std::string("# schema dataset/1.0\n") + kHeaderRow + "\n";
  const std::string good = "0,0,0,1,2,10,0.5,0,0,5,5,1e6,2e6,,,1\n";

  spit(path, head + good + "0,1,4,1,2,10,0.5,0,0,5,5,1e6,2e6,,\n");
  CHECK_THROWS_WITH_AS(read_dataset_csv(path), doctest::Contains(":4:"), std::runtime_error);

  spit(path, head + good + "0,1,4,1,2,ten,0.5,0,0,5,5,1e6,2e6,,,1\n");
  CHECK_THROWS_WITH_AS(read_dataset_csv(path), doctest::Contains("d_m"), std::runtime_error);

  spit(path, head + good + "0,1,4,1,2,10,0.5,0,0,5,5,1e6,2e6,,,2\n");
  CHECK_THROWS_WITH_AS(read_dataset_csv(path), doctest::Contains("label"), std::runtime_error);

  // Frames must count up from zero within a sequence.
  spit(path, head + good + "0,5,4,1,2,10,0.5,0,0,5,5,1e6,2e6,,,1\n");
  CHECK_THROWS_WITH_AS(read_dataset_csv(path), doctest::Contains("frame"), std::runtime_error);

  // A sequence id may not come back after another one started.
  spit(path, head + good + "1,0,4,1,2,10,0.5,0,0,5,5,1e6,2e6,,,1\n" +
                 "0,0,8,1,2,10,0.5,0,0,5,5,1e6,2e6,,,1\n");
  CHECK_THROWS_WITH_AS(read_dataset_csv(path), doctest::Contains("reappears"), std::runtime_error);

  spit(path, head);
  CHECK_THROWS_WITH_AS(read_dataset_csv(path), doctest::Contains("no data rows"),
                       std::runtime_error);

  CHECK_THROWS_AS(read_dataset_csv(dir / "missing.csv"), std::runtime_error);
}

TEST_CASE("schema version gate") {
  fs::path dir = temp_dir();
  fs::path path = dir / "versioned.csv";
  const std::string row = "0,0,0,1,2,10,0.5,0,0,5,5,1e6,2e6,,,1\n";

  spit(path, std::string("# schema dataset/2.0\n") + kHeaderRow + "\n" + row);
  CHECK_THROWS_WITH_AS(read_dataset_csv(path), doctest::Contains("major version 2"),
                       std::runtime_error);

  // Newer minor versions of the same major stay readable.
  spit(path, std::string("# schema dataset/1.7\n") + kHeaderRow + "\n" + row);
  CHECK(read_dataset_csv(path).sequences.size() == 1);

  // A results file is not a dataset.
  spit(path, std::string("# schema results/1.0\n") + kHeaderRow + "\n" + row);
  CHECK_THROWS_WITH_AS(read_dataset_csv(path), doctest::Contains("expected a dataset"),
                       std::runtime_error);

  // No stamp at all: readable, treated as externally produced.
  spit(path, std::string(kHeaderRow) + "\n" + row);
  LabeledDataset ds = read_dataset_csv(path);
  CHECK(ds.provenance == Provenance::ingested);
  CHECK(ds.seed == 0);

  spit(path, std::string("seq_id,frame\n") + row);
  CHECK_THROWS_WITH_AS(read_dataset_csv(path), doctest::Contains("column header"),
                       std::runtime_error);
}

TEST_CASE("results csv round-trip and determinism") {
  fs::path dir = temp_dir();
  ExperimentReport report;
  report.label_balance = 0.493;
  report.wall_seconds = 12.25;
  report.notes = {"one-shot c-2 nn: mlp({30,20}) alpha=0.05 gamma_t=0.48"};
  ResultRow a;
  a.rule = "nn";
  a.combination = 2;
  a.gamma_t = 0.48;
  a.ba_error = 0.1861111;
  a.rate_loss = 0.0701;
  a.n_test = 700;
  a.seed = 42;
  ResultRow b = a;
  b.rule = "gp";
  b.combination = 0;
  b.horizon_u = 8;
  b.window_q = 5;
  b.gamma_t = 0.5;
  report.rows = {a, b};

  FileStamp stamp;
  stamp.config_hash = "deadbeef01234567";
  stamp.seed = 42;
  fs::path p1 = dir / "res1.csv";
  fs::path p2 = dir / "res2.csv";
  write_results_csv(p1, report, stamp);
  write_results_csv(p2, report, stamp);
  CHECK(slurp(p1) == slurp(p2));

  std::vector<ResultRow> rows = read_results_csv(p1);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].rule == "nn");
  CHECK(rows[0].combination == 2);
  CHECK(rows[0].gamma_t == 0.48);
  CHECK(rows[0].ba_error == a.ba_error);
  CHECK(rows[0].rate_loss == a.rate_loss);
  CHECK(rows[0].n_test == 700);
  CHECK(rows[0].seed == 42);
  CHECK(rows[1].rule == "gp");
  CHECK(rows[1].horizon_u == 8);
  CHECK(rows[1].window_q == 5);

  std::string text = slurp(p1);
  CHECK(text.find("# note: one-shot c-2 nn") != std::string::npos);
  CHECK(text.find("# label_balance=0.493\n") != std::string::npos);
  CHECK(text.find("rule,combination,U,gamma_t,Q,ba_error,rate_loss,n_test,seed\n") !=
        std::string::npos);
}

TEST_CASE("results csv rejects malformed rows") {
  fs::path dir = temp_dir();
  fs::path path = dir / "badres.csv";
  const std::string head = "# schema results/1.0\nrule,combination,U,gamma_t,Q,ba_error,"
                           "rate_loss,n_test,seed\n";
  spit(path, head + "gp,0,4,0.5,5,0.2,0.07,300\n");
  CHECK_THROWS_WITH_AS(read_results_csv(path), doctest::Contains("expected 9 fields"),
                       std::runtime_error);
  spit(path, head + ",0,4,0.5,5,0.2,0.07,300,1\n");
  CHECK_THROWS_WITH_AS(read_results_csv(path), doctest::Contains("empty rule"),
                       std::runtime_error);
  spit(path, head + "gp,0,4,half,5,0.2,0.07,300,1\n");
  CHECK_THROWS_WITH_AS(read_results_csv(path), doctest::Contains("gamma_t"), std::runtime_error);

  spit(path, "# schema results/3.1\n" + std::string("rule,combination,U,gamma_t,Q,ba_error,"
                                                    "rate_loss,n_test,seed\n"));
  CHECK_THROWS_WITH_AS(read_results_csv(path), doctest::Contains("major version 3"),
                       std::runtime_error);
}

TEST_CASE("write failures leave no temp litter") {
  fs::path dir = temp_dir();
  fs::path path = dir / "not_a_dir" / "out.csv";
  LabeledDataset ds = build_one_shot_realization(Environment::defaults(), CellGeometry{}, 4, 1);
  CHECK_THROWS_AS(write_dataset_csv(path, ds, FileStamp{}), std::runtime_error);
  CHECK_FALSE(fs::exists(path));
  CHECK_FALSE(fs::exists(path.string() + ".tmp"));
}
