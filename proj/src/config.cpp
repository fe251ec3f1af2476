#include "dualband/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dualband/csvio.hpp"

namespace dualband {
namespace {

struct Entry {
  std::string value;
  long line = 0;
  bool used = false;
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

// Parsed key=value soup plus consumption tracking: whatever the fill code
// never asks for is by definition an unknown key.
struct RawConfig {
  std::string name;
  std::map<std::string, Entry> entries;  // "section.key" -> entry

  [[noreturn]] void fail(long line, const std::string& what) const {
    throw std::invalid_argument(name + ":" + std::to_string(line) + ": " + what);
  }

  const Entry* find(const std::string& full) {
    auto it = entries.find(full);
    if (it == entries.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  double getd(const std::string& full, double dflt) {
    const Entry* e = find(full);
    return e ? parse_double(*e, full) : dflt;
  }
  int geti(const std::string& full, int dflt) {
    const Entry* e = find(full);
    if (!e) return dflt;
    return static_cast<int>(parse_long(*e, full));
  }
  std::uint64_t getu(const std::string& full, std::uint64_t dflt) {
    const Entry* e = find(full);
    if (!e) return dflt;
    errno = 0;
    char* end = nullptr;
    std::uint64_t v = std::strtoull(e->value.c_str(), &end, 10);
    if (e->value.empty() || end != e->value.c_str() + e->value.size() || errno == ERANGE)
      fail(e->line, full + ": expected an unsigned integer, found '" + e->value + "'");
    return v;
  }
  bool getb(const std::string& full, bool dflt) {
    const Entry* e = find(full);
    if (!e) return dflt;
    if (e->value == "true" || e->value == "1") return true;
    if (e->value == "false" || e->value == "0") return false;
    fail(e->line, full + ": expected true/false, found '" + e->value + "'");
  }
  std::string gets(const std::string& full, const std::string& dflt) {
    const Entry* e = find(full);
    return e ? e->value : dflt;
  }
  std::vector<double> getdlist(const std::string& full, std::vector<double> dflt) {
    const Entry* e = find(full);
    if (!e) return dflt;
    std::vector<double> out;
    for (const std::string& tok : split_list(*e, full))
      out.push_back(parse_double(Entry{tok, e->line, true}, full));
    return out;
  }
  std::vector<int> getilist(const std::string& full, std::vector<int> dflt) {
    const Entry* e = find(full);
    if (!e) return dflt;
    std::vector<int> out;
    for (const std::string& tok : split_list(*e, full))
      out.push_back(static_cast<int>(parse_long(Entry{tok, e->line, true}, full)));
    return out;
  }

  double parse_double(const Entry& e, const std::string& full) const {
    errno = 0;
    char* end = nullptr;
    double v = std::strtod(e.value.c_str(), &end);
    if (e.value.empty() || end != e.value.c_str() + e.value.size() || errno == ERANGE)
      fail(e.line, full + ": expected a number, found '" + e.value + "'");
    return v;
  }
  long parse_long(const Entry& e, const std::string& full) const {
    errno = 0;
    char* end = nullptr;
    long v = std::strtol(e.value.c_str(), &end, 10);
    if (e.value.empty() || end != e.value.c_str() + e.value.size() || errno == ERANGE)
      fail(e.line, full + ": expected an integer, found '" + e.value + "'");
    return v;
  }
  std::vector<std::string> split_list(const Entry& e, const std::string& full) const {
    std::vector<std::string> out;
    std::size_t start = 0;
    const std::string& v = e.value;
    while (true) {
      auto comma = v.find(',', start);
      std::string tok = trim(comma == std::string::npos ? v.substr(start)
                                                        : v.substr(start, comma - start));
      if (tok.empty()) fail(e.line, full + ": empty list entry");
      out.push_back(tok);
      if (comma == std::string::npos) return out;
      start = comma + 1;
    }
  }
};

RawConfig parse_raw(const std::string& text, const std::string& name) {
  RawConfig raw;
  raw.name = name;
  std::istringstream in(text);
  std::string line, section;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) raw.fail(line_no, "malformed section header: " + t);
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) raw.fail(line_no, "empty section name");
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) raw.fail(line_no, "expected 'key = value', found: " + t);
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) raw.fail(line_no, "empty key");
    if (section.empty()) raw.fail(line_no, "key '" + key + "' appears before any [section]");
    std::string full = section + "." + key;
    auto [it, inserted] = raw.entries.emplace(full, Entry{value, line_no, false});
    if (!inserted)
      raw.fail(line_no, "duplicate key " + full + " (first on line " +
                            std::to_string(it->second.line) + ")");
  }
  return raw;
}

void fill_band(RawConfig& raw, const std::string& sec, BandConfig& b) {
  b.carrier_hz = raw.getd(sec + ".carrier_hz", b.carrier_hz);
  b.bandwidth_hz = raw.getd(sec + ".bandwidth_hz", b.bandwidth_hz);
  b.tx_power_dbm = raw.getd(sec + ".tx_power_dbm", b.tx_power_dbm);
  b.pre_break_exponent = raw.getd(sec + ".pre_break_exponent", b.pre_break_exponent);
  b.pathloss_exponent = raw.getd(sec + ".pathloss_exponent", b.pathloss_exponent);
  b.break_distance_m = raw.getd(sec + ".break_distance_m", b.break_distance_m);
  b.decorrelation_m = raw.getd(sec + ".decorrelation_m", b.decorrelation_m);
  b.shadow_sigma_db = raw.getd(sec + ".shadow_sigma_db", b.shadow_sigma_db);
  b.pathloss_intercept_db = raw.getd(sec + ".pathloss_intercept_db", b.pathloss_intercept_db);
}

void fill_one_shot_rules(RawConfig& raw, OneShotConfig& c) {
  const Entry* e = raw.find("one_shot.rules");
  if (!e) return;
  c.run_nn = c.run_gr = c.run_lr = c.run_tbba = c.run_cm_only = false;
  if (trim(e->value).empty()) return;
  for (const std::string& tok : raw.split_list(*e, "one_shot.rules")) {
    if (tok == "nn") c.run_nn = true;
    else if (tok == "gr") c.run_gr = true;
    else if (tok == "lr") c.run_lr = true;
    else if (tok == "tbba") c.run_tbba = true;
    else if (tok == "cm_only") c.run_cm_only = true;
    else raw.fail(e->line, "unknown one-shot rule '" + tok +
                               "' (valid: nn, gr, lr, tbba, cm_only)");
  }
}

void fill_sequential_rules(RawConfig& raw, SequentialConfig& c) {
  const Entry* e = raw.find("sequential.rules");
  if (!e) return;
  c.run_gp = c.run_gp_app = c.run_lstm_std = c.run_lstm_opd = c.run_nn_h = c.run_gr_h = false;
  if (trim(e->value).empty()) return;
  for (const std::string& tok : raw.split_list(*e, "sequential.rules")) {
    if (tok == "gp") c.run_gp = true;
    else if (tok == "gp_app") c.run_gp_app = true;
    else if (tok == "lstm_std") c.run_lstm_std = true;
    else if (tok == "lstm_opd") c.run_lstm_opd = true;
    else if (tok == "nn_h") c.run_nn_h = true;
    else if (tok == "gr_h") c.run_gr_h = true;
    else raw.fail(e->line, "unknown sequential rule '" + tok +
                               "' (valid: gp, gp_app, lstm_std, lstm_opd, nn_h, gr_h)");
  }
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  return out;
}

void render_band(std::ostringstream& out, const char* sec, const BandConfig& b) {
  out << "[" << sec << "]\n";
  out << "carrier_hz = " << format_double(b.carrier_hz) << "\n";
  out << "bandwidth_hz = " << format_double(b.bandwidth_hz) << "\n";
  out << "tx_power_dbm = " << format_double(b.tx_power_dbm) << "\n";
  out << "pre_break_exponent = " << format_double(b.pre_break_exponent) << "\n";
  out << "pathloss_exponent = " << format_double(b.pathloss_exponent) << "\n";
  out << "break_distance_m = " << format_double(b.break_distance_m) << "\n";
  out << "decorrelation_m = " << format_double(b.decorrelation_m) << "\n";
  out << "shadow_sigma_db = " << format_double(b.shadow_sigma_db) << "\n";
  out << "pathloss_intercept_db = " << format_double(b.pathloss_intercept_db) << "\n";
}

}  // namespace

ResolvedConfig parse_config(const std::string& text, const std::string& source_name) {
  RawConfig raw = parse_raw(text, source_name);
  ResolvedConfig cfg;

  cfg.experiment = raw.gets("run.experiment", cfg.experiment);
  if (cfg.experiment != "one_shot" && cfg.experiment != "sequential") {
    const Entry* e = raw.entries.count("run.experiment") ? &raw.entries.at("run.experiment")
                                                         : nullptr;
    raw.fail(e ? e->line : 0, "run.experiment must be one_shot or sequential, found '" +
                                  cfg.experiment + "'");
  }
  cfg.seed = raw.getu("run.seed", cfg.seed);
  cfg.jobs = raw.geti("run.jobs", cfg.jobs);
  if (cfg.jobs < 1) throw std::invalid_argument(source_name + ": run.jobs must be >= 1");

  Environment env = Environment::defaults();
  fill_band(raw, "cm", env.cm);
  fill_band(raw, "mm", env.mm);
  env.cross_correlation = raw.getd("channel.cross_correlation", env.cross_correlation);
  env.noise_psd_dbm_hz = raw.getd("channel.noise_psd_dbm_hz", env.noise_psd_dbm_hz);
  double kernel_shape = env.kernel_shape;
  if (const Entry* e = raw.find("channel.kernel_shape")) {
    kernel_shape = raw.parse_double(*e, "channel.kernel_shape");
    cfg.kernel_shape_set = true;
  }

  CellGeometry geom;
  geom.side_m = raw.getd("cell.side_m", geom.side_m);
  geom.bs.x = raw.getd("cell.bs_x_m", geom.bs.x);
  geom.bs.y = raw.getd("cell.bs_y_m", geom.bs.y);
  geom.grid_spacing_m = raw.getd("cell.grid_spacing_m", geom.grid_spacing_m);

  SmsParams sms;
  sms.sim_duration_s = raw.getd("mobility.sim_duration_s", sms.sim_duration_s);
  sms.sample_period_s = raw.getd("mobility.sample_period_s", sms.sample_period_s);
  sms.max_speed_mps = raw.getd("mobility.max_speed_mps", sms.max_speed_mps);
  sms.accel_min_s = raw.getd("mobility.accel_min_s", sms.accel_min_s);
  sms.accel_max_s = raw.getd("mobility.accel_max_s", sms.accel_max_s);
  sms.decel_min_s = raw.getd("mobility.decel_min_s", sms.decel_min_s);
  sms.decel_max_s = raw.getd("mobility.decel_max_s", sms.decel_max_s);
  sms.pause_min_s = raw.getd("mobility.pause_min_s", sms.pause_min_s);
  sms.pause_max_s = raw.getd("mobility.pause_max_s", sms.pause_max_s);
  sms.steady_min_fraction = raw.getd("mobility.steady_min_fraction", sms.steady_min_fraction);
  sms.direction_hold_prob = raw.getd("mobility.direction_hold_prob", sms.direction_hold_prob);
  sms.max_crossings = raw.geti("mobility.max_crossings", sms.max_crossings);

  OneShotConfig& os = cfg.one_shot;
  os.env = env;
  os.env.kernel_shape = cfg.kernel_shape_set ? kernel_shape : 1.9;
  os.geom = geom;
  os.realizations = raw.geti("one_shot.realizations", os.realizations);
  os.points = raw.geti("one_shot.points", os.points);
  os.train_fraction = raw.getd("one_shot.train_fraction", os.train_fraction);
  os.combinations = raw.getilist("one_shot.combinations", os.combinations);
  fill_one_shot_rules(raw, os);
  os.cv_repeats = raw.geti("one_shot.cv_repeats", os.cv_repeats);
  os.cv_fraction = raw.getd("one_shot.cv_fraction", os.cv_fraction);
  os.alpha_grid = raw.getdlist("one_shot.alpha_grid", os.alpha_grid);

  SequentialConfig& sq = cfg.sequential;
  sq.env = env;
  if (cfg.kernel_shape_set) sq.env.kernel_shape = kernel_shape;
  sq.geom = geom;
  sq.sms = sms;
  sq.sequences = raw.geti("sequential.sequences", sq.sequences);
  sq.train_fraction = raw.getd("sequential.train_fraction", sq.train_fraction);
  sq.window_q = raw.geti("sequential.window_q", sq.window_q);
  sq.horizons = raw.getilist("sequential.horizons", sq.horizons);
  sq.combinations = raw.getilist("sequential.combinations", sq.combinations);
  fill_sequential_rules(raw, sq);
  sq.alpha = raw.getd("sequential.alpha", sq.alpha);
  sq.gamma_t = raw.getd("sequential.gamma_t", sq.gamma_t);
  sq.lstm_schedule_cv = raw.getb("sequential.lstm_schedule_cv", sq.lstm_schedule_cv);
  sq.lstm_cv_sequences = raw.geti("sequential.lstm_cv_sequences", sq.lstm_cv_sequences);
  sq.lstm_cv_train_sequences =
      raw.geti("sequential.lstm_cv_train_sequences", sq.lstm_cv_train_sequences);
  sq.lstm_cv_epoch_cap = raw.geti("sequential.lstm_cv_epoch_cap", sq.lstm_cv_epoch_cap);

  QSweepConfig& qs = cfg.q_sweep;
  qs.env = sq.env;
  qs.geom = geom;
  qs.radius_m = raw.getd("q_sweep.radius_m", qs.radius_m);
  qs.frames = raw.geti("q_sweep.frames", qs.frames);
  qs.sequences = raw.geti("q_sweep.sequences", qs.sequences);
  qs.horizon_u = raw.geti("q_sweep.horizon_u", qs.horizon_u);
  qs.q_values = raw.getilist("q_sweep.q_values", qs.q_values);

  GenerateSpec& gen = cfg.generate;
  gen.kind = raw.gets("generate.kind", gen.kind);
  if (gen.kind != "one_shot" && gen.kind != "sequential" && gen.kind != "circular") {
    const Entry& e = raw.entries.at("generate.kind");
    raw.fail(e.line, "generate.kind must be one_shot, sequential or circular, found '" +
                         gen.kind + "'");
  }
  gen.points = raw.geti("generate.points", gen.points);
  gen.sequences = raw.geti("generate.sequences", gen.sequences);
  gen.radius_m = raw.getd("generate.radius_m", gen.radius_m);
  gen.frames = raw.geti("generate.frames", gen.frames);

  SweepSpec& sw = cfg.sweep;
  sw.axis = raw.gets("sweep.axis", sw.axis);
  if (sw.axis != "gamma" && sw.axis != "horizon" && sw.axis != "window") {
    const Entry& e = raw.entries.at("sweep.axis");
    raw.fail(e.line, "sweep.axis must be gamma, horizon or window, found '" + sw.axis + "'");
  }
  sw.gamma_values = raw.getdlist("sweep.gamma_values", sw.gamma_values);
  sw.u_values = raw.getilist("sweep.u_values", sw.u_values);

  long first_unknown = 0;
  const std::string* unknown_key = nullptr;
  for (const auto& [key, e] : raw.entries) {
    if (e.used) continue;
    if (!unknown_key || e.line < first_unknown) {
      first_unknown = e.line;
      unknown_key = &key;
    }
  }
  if (unknown_key) raw.fail(first_unknown, "unknown key: " + *unknown_key);

  apply_seed(cfg, cfg.seed);
  apply_jobs(cfg, cfg.jobs);
  return cfg;
}

ResolvedConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

void apply_seed(ResolvedConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.one_shot.seed = seed;
  cfg.sequential.seed = seed;
  cfg.q_sweep.seed = seed;
}

void apply_jobs(ResolvedConfig& cfg, int jobs) {
  if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
  cfg.jobs = jobs;
  cfg.one_shot.jobs = jobs;
  cfg.sequential.jobs = jobs;
  cfg.q_sweep.jobs = jobs;
}

std::string render_resolved(const ResolvedConfig& cfg) {
  const OneShotConfig& os = cfg.one_shot;
  const SequentialConfig& sq = cfg.sequential;
  const QSweepConfig& qs = cfg.q_sweep;
  // The effective kernel shape is the one the configured experiment runs with.
  double kernel = cfg.experiment == "one_shot" ? os.env.kernel_shape : sq.env.kernel_shape;
  const Environment& env = cfg.experiment == "one_shot" ? os.env : sq.env;

  std::ostringstream out;
  out << "[run]\n";
  out << "experiment = " << cfg.experiment << "\n";
  out << "seed = " << cfg.seed << "\n";
  out << "[channel]\n";
  out << "cross_correlation = " << format_double(env.cross_correlation) << "\n";
  out << "kernel_shape = " << format_double(kernel) << "\n";
  out << "noise_psd_dbm_hz = " << format_double(env.noise_psd_dbm_hz) << "\n";
  render_band(out, "cm", env.cm);
  render_band(out, "mm", env.mm);
  out << "[cell]\n";
  out << "side_m = " << format_double(os.geom.side_m) << "\n";
  out << "bs_x_m = " << format_double(os.geom.bs.x) << "\n";
  out << "bs_y_m = " << format_double(os.geom.bs.y) << "\n";
  out << "grid_spacing_m = " << format_double(os.geom.grid_spacing_m) << "\n";
  out << "[mobility]\n";
  out << "sim_duration_s = " << format_double(sq.sms.sim_duration_s) << "\n";
  out << "sample_period_s = " << format_double(sq.sms.sample_period_s) << "\n";
  out << "max_speed_mps = " << format_double(sq.sms.max_speed_mps) << "\n";
  out << "accel_min_s = " << format_double(sq.sms.accel_min_s) << "\n";
  out << "accel_max_s = " << format_double(sq.sms.accel_max_s) << "\n";
  out << "decel_min_s = " << format_double(sq.sms.decel_min_s) << "\n";
  out << "decel_max_s = " << format_double(sq.sms.decel_max_s) << "\n";
  out << "pause_min_s = " << format_double(sq.sms.pause_min_s) << "\n";
  out << "pause_max_s = " << format_double(sq.sms.pause_max_s) << "\n";
  out << "steady_min_fraction = " << format_double(sq.sms.steady_min_fraction) << "\n";
  out << "direction_hold_prob = " << format_double(sq.sms.direction_hold_prob) << "\n";
  out << "max_crossings = " << sq.sms.max_crossings << "\n";
  out << "[one_shot]\n";
  out << "realizations = " << os.realizations << "\n";
  out << "points = " << os.points << "\n";
  out << "train_fraction = " << format_double(os.train_fraction) << "\n";
  out << "combinations = " << join_ints(os.combinations) << "\n";
  {
    std::vector<std::string> toks;
    if (os.run_nn) toks.push_back("nn");
    if (os.run_gr) toks.push_back("gr");
    if (os.run_lr) toks.push_back("lr");
    if (os.run_tbba) toks.push_back("tbba");
    if (os.run_cm_only) toks.push_back("cm_only");
    out << "rules =";
    for (std::size_t i = 0; i < toks.size(); ++i) out << (i ? "," : " ") << toks[i];
    out << "\n";
  }
  out << "cv_repeats = " << os.cv_repeats << "\n";
  out << "cv_fraction = " << format_double(os.cv_fraction) << "\n";
  out << "alpha_grid = " << join_doubles(os.alpha_grid) << "\n";
  out << "[sequential]\n";
  out << "sequences = " << sq.sequences << "\n";
  out << "train_fraction = " << format_double(sq.train_fraction) << "\n";
  out << "window_q = " << sq.window_q << "\n";
  out << "horizons = " << join_ints(sq.horizons) << "\n";
  out << "combinations = " << join_ints(sq.combinations) << "\n";
  {
    std::vector<std::string> toks;
    if (sq.run_gp) toks.push_back("gp");
    if (sq.run_gp_app) toks.push_back("gp_app");
    if (sq.run_lstm_std) toks.push_back("lstm_std");
    if (sq.run_lstm_opd) toks.push_back("lstm_opd");
    if (sq.run_nn_h) toks.push_back("nn_h");
    if (sq.run_gr_h) toks.push_back("gr_h");
    out << "rules =";
    for (std::size_t i = 0; i < toks.size(); ++i) out << (i ? "," : " ") << toks[i];
    out << "\n";
  }
  out << "alpha = " << format_double(sq.alpha) << "\n";
  out << "gamma_t = " << format_double(sq.gamma_t) << "\n";
  out << "lstm_schedule_cv = " << (sq.lstm_schedule_cv ? "true" : "false") << "\n";
  out << "lstm_cv_sequences = " << sq.lstm_cv_sequences << "\n";
  out << "lstm_cv_train_sequences = " << sq.lstm_cv_train_sequences << "\n";
  out << "lstm_cv_epoch_cap = " << sq.lstm_cv_epoch_cap << "\n";
  out << "[q_sweep]\n";
  out << "radius_m = " << format_double(qs.radius_m) << "\n";
  out << "frames = " << qs.frames << "\n";
  out << "sequences = " << qs.sequences << "\n";
  out << "horizon_u = " << qs.horizon_u << "\n";
  out << "q_values = " << join_ints(qs.q_values) << "\n";
  out << "[generate]\n";
  out << "kind = " << cfg.generate.kind << "\n";
  out << "points = " << cfg.generate.points << "\n";
  out << "sequences = " << cfg.generate.sequences << "\n";
  out << "radius_m = " << format_double(cfg.generate.radius_m) << "\n";
  out << "frames = " << cfg.generate.frames << "\n";
  out << "[sweep]\n";
  out << "axis = " << cfg.sweep.axis << "\n";
  out << "gamma_values = " << join_doubles(cfg.sweep.gamma_values) << "\n";
  out << "u_values = " << join_ints(cfg.sweep.u_values) << "\n";
  return out.str();
}

std::string config_hash(const ResolvedConfig& cfg) {
  std::string s = render_resolved(cfg);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dualband
