#include "dualband/cli.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include <CLI11.hpp>

#include "dualband/channel.hpp"
#include "dualband/csvio.hpp"
#include "dualband/dataset.hpp"
#include "dualband/eval.hpp"
#include "dualband/fitting.hpp"
#include "dualband/model_io.hpp"
#include "dualband/rng.hpp"

namespace fs = std::filesystem;

namespace dualband {

namespace {

// Every output embeds the hash, the root seed, and the resolved config
// itself, so a file is reproducible without the original command line.
FileStamp stamp_for(const ResolvedConfig& cfg) {
  FileStamp stamp;
  stamp.config_hash = config_hash(cfg);
  stamp.seed = cfg.seed;
  std::istringstream render(render_resolved(cfg));
  for (std::string line; std::getline(render, line);) stamp.extra.push_back("config: " + line);
  return stamp;
}

bool singleton_shaped(const LabeledDataset& ds) {
  if (ds.sequences.empty()) return false;
  for (const Sequence& seq : ds.sequences)
    if (seq.length() != 1) return false;
  return true;
}

std::string count_summary(const LabeledDataset& ds) {
  std::ostringstream os;
  os << ds.sequences.size() << " sequences, " << ds.total_points() << " points, label balance "
     << format_double(ds.label_balance());
  return os.str();
}

std::string describe_row(const ResultRow& row) {
  std::ostringstream os;
  os << "  " << row.rule;
  if (row.combination > 0) os << " c-" << row.combination;
  if (row.horizon_u > 0) os << " U=" << row.horizon_u;
  os << ": ba_error=" << format_double(row.ba_error)
     << " rate_loss=" << format_double(row.rate_loss) << " (n=" << row.n_test << ")";
  return os.str();
}

void render_fitted_band(std::ostream& out, const std::string& section, const PathLossModel& pl,
                        double sigma_db, double decorrelation_m) {
  out << "[" << section << "]\n";
  out << "pathloss_intercept_db = " << format_double(pl.intercept_db) << "\n";
  out << "pre_break_exponent = " << format_double(pl.pre_break_exponent) << "\n";
  out << "pathloss_exponent = " << format_double(pl.pathloss_exponent) << "\n";
  out << "break_distance_m = " << format_double(pl.break_distance_m) << "\n";
  out << "shadow_sigma_db = " << format_double(sigma_db) << "\n";
  out << "decorrelation_m = " << format_double(decorrelation_m) << "\n";
}

}  // namespace

CommandResult cmd_generate(const ResolvedConfig& cfg, const fs::path& out_path) {
  CommandResult res;
  const GenerateSpec& gen = cfg.generate;
  LabeledDataset ds;
  if (gen.kind == "one_shot") {
    // realization 0 of the one-shot experiment
    ds = build_one_shot_realization(cfg.one_shot.env, cfg.one_shot.geom, gen.points,
                                    derive_seed(cfg.seed, 0));
  } else if (gen.kind == "sequential") {
    // the sequential experiment's dataset stream
    ds = build_sequential_dataset(cfg.sequential.env, cfg.sequential.geom, cfg.sequential.sms,
                                  gen.sequences, derive_seed(cfg.seed, 1));
  } else if (gen.kind == "circular") {
    // the window sweep's dataset stream
    ds = build_circular_dataset(cfg.q_sweep.env, cfg.q_sweep.geom, gen.radius_m, gen.frames,
                                gen.sequences, derive_seed(cfg.seed, 3));
  } else {
    throw std::invalid_argument("generate: unknown kind '" + gen.kind + "'");
  }
  write_dataset_csv(out_path, ds, stamp_for(cfg));
  res.lines.push_back("wrote " + out_path.string() + " (" + count_summary(ds) + ")");
  return res;
}

CommandResult cmd_ingest(const ResolvedConfig& cfg, const fs::path& trace_path,
                         const fs::path& out_path) {
  CommandResult res;
  LabeledDataset ds = read_dataset_csv(trace_path);
  const bool one_shot_shape = singleton_shaped(ds);
  const Environment& env = one_shot_shape ? cfg.one_shot.env : cfg.sequential.env;

  // labels follow from the stored rates; the file's own column is advisory
  long relabeled = 0, missing_optional = 0, below_1m = 0;
  const double n0_c = noise_floor_dbm(env.cm, env.noise_psd_dbm_hz);
  const double n0_m = noise_floor_dbm(env.mm, env.noise_psd_dbm_hz);
  std::vector<std::pair<double, double>> rx_c, rx_m;  // (distance, received power dBm)
  for (Sequence& seq : ds.sequences) {
    for (SamplePoint& p : seq.points) {
      const int want = p.rate_m_bps > p.rate_c_bps ? 1 : 0;
      if (p.label != want) {
        p.label = want;
        ++relabeled;
      }
      if (!p.delay_s.has_value() || !p.aod_rad.has_value()) ++missing_optional;
      if (p.d_m < 1.0) {
        ++below_1m;
        continue;
      }
      rx_c.emplace_back(p.d_m, p.snr_c_db + n0_c);
      rx_m.emplace_back(p.d_m, p.snr_m_db + n0_m);
    }
  }
  if (relabeled > 0)
    res.warnings.push_back(std::to_string(relabeled) +
                           " labels disagreed with the stored rates and were recomputed");
  if (missing_optional > 0)
    res.warnings.push_back("delay/AoD missing on " + std::to_string(missing_optional) +
                           " rows; feature combinations using them stay disabled");
  if (below_1m > 0)
    res.warnings.push_back(std::to_string(below_1m) +
                           " rows closer than 1 m were left out of the path-loss fit");

  const PathLossModel fit_c = fit_pathloss_two_segment(rx_c, env.cm.tx_power_dbm);
  const PathLossModel fit_m = fit_pathloss_two_segment(rx_m, env.mm.tx_power_dbm);

  // shadowing = what the fitted mean path cannot explain; a one-shot file is
  // a single joint draw, a sequence file carries one draw per trajectory
  std::vector<ShadowGroup> groups(one_shot_shape ? 1 : ds.sequences.size());
  std::size_t gi = 0;
  for (Sequence& seq : ds.sequences) {
    ShadowGroup& g = one_shot_shape ? groups[0] : groups[gi++];
    for (SamplePoint& p : seq.points) {
      const double d = std::max(p.d_m, 1.0);
      p.s_c_db = p.snr_c_db + n0_c - env.cm.tx_power_dbm + pathloss_model_db(fit_c, d);
      p.s_m_db = p.snr_m_db + n0_m - env.mm.tx_power_dbm + pathloss_model_db(fit_m, d);
      g.positions.push_back(p.position);
      g.s_c_db.push_back(p.s_c_db);
      g.s_m_db.push_back(p.s_m_db);
    }
  }
  const ShadowingFit sh = fit_shadowing_params(groups);

  ds.provenance = Provenance::ingested;
  write_dataset_csv(out_path, ds, stamp_for(cfg));

  fs::path params_path = out_path;
  params_path.replace_extension(".params.ini");
  std::ostringstream frag;
  frag << "# channel parameters fitted from " << trace_path.filename().string() << "\n";
  frag << "# merge into the [channel]/[cm]/[mm] sections of a config file\n";
  frag << "[channel]\n";
  frag << "cross_correlation = " << format_double(sh.cross_correlation) << "\n";
  frag << "kernel_shape = " << format_double(sh.kernel_shape) << "\n";
  render_fitted_band(frag, "cm", fit_c, sh.sigma_c_db, sh.decorrelation_c_m);
  render_fitted_band(frag, "mm", fit_m, sh.sigma_m_db, sh.decorrelation_m_m);
  write_text_atomic(params_path, frag.str());

  res.lines.push_back("wrote " + out_path.string() + " (" + count_summary(ds) + ")");
  res.lines.push_back("wrote " + params_path.string());
  auto pl_line = [](const char* band, const PathLossModel& pl) {
    std::ostringstream os;
    os << "  " << band << " path loss: intercept " << format_double(pl.intercept_db)
       << " dB, exponents " << format_double(pl.pre_break_exponent) << "/"
       << format_double(pl.pathloss_exponent) << ", breakpoint "
       << format_double(pl.break_distance_m) << " m";
    return os.str();
  };
  res.lines.push_back(pl_line("cm", fit_c));
  res.lines.push_back(pl_line("mm", fit_m));
  std::ostringstream sh_line;
  sh_line << "  shadowing: sigma " << format_double(sh.sigma_c_db) << "/"
          << format_double(sh.sigma_m_db) << " dB, correlation "
          << format_double(sh.cross_correlation) << ", decorrelation "
          << format_double(sh.decorrelation_c_m) << "/" << format_double(sh.decorrelation_m_m)
          << " m, kernel shape " << format_double(sh.kernel_shape);
  res.lines.push_back(sh_line.str());
  return res;
}

CommandResult cmd_train(const ResolvedConfig& cfg, const std::optional<fs::path>& dataset_path,
                        const fs::path& out_dir) {
  CommandResult res;
  fs::create_directories(out_dir);
  const bool one_shot = cfg.experiment == "one_shot";
  LabeledDataset ds;
  if (dataset_path) {
    ds = read_dataset_csv(*dataset_path);
  } else if (one_shot) {
    ds = build_one_shot_realization(cfg.one_shot.env, cfg.one_shot.geom, cfg.one_shot.points,
                                    derive_seed(cfg.one_shot.seed, 0));
  } else {
    ds = build_sequential_dataset(cfg.sequential.env, cfg.sequential.geom, cfg.sequential.sms,
                                  cfg.sequential.sequences, derive_seed(cfg.sequential.seed, 1));
  }

  const std::string hash = config_hash(cfg);
  int artifacts = 0;
  struct Rule {
    const char* name;
    bool enabled;
  };
  if (one_shot) {
    const OneShotConfig& os = cfg.one_shot;
    for (const Rule r : {Rule{"lr", os.run_lr}, Rule{"gr", os.run_gr}, Rule{"nn", os.run_nn}}) {
      if (!r.enabled) continue;
      for (int comb : os.combinations) {
        std::string note;
        TrainedModel model = train_one_shot_rule(os, ds, r.name, comb, &note);
        const fs::path path =
            out_dir / (std::string(r.name) + "_c" + std::to_string(comb) + ".model.json");
        save_model(path, ModelArtifact{model, hash, cfg.seed});
        res.lines.push_back("wrote " + path.string() + " (" + note +
                            ", gamma_t=" + format_double(model.gamma_t) + ")");
        ++artifacts;
      }
    }
    if (os.run_tbba || os.run_cm_only)
      res.lines.push_back("tbba / cm_only carry no learned state; nothing to train for them");
  } else {
    const SequentialConfig& sq = cfg.sequential;
    for (const Rule r : {Rule{"lstm_std", sq.run_lstm_std}, Rule{"lstm_opd", sq.run_lstm_opd},
                         Rule{"nn_h", sq.run_nn_h}, Rule{"gr_h", sq.run_gr_h}}) {
      if (!r.enabled) continue;
      for (int comb : sq.combinations) {
        for (int u : sq.horizons) {
          std::string note;
          TrainedModel model = train_sequential_rule(sq, ds, r.name, comb, u, &note);
          const fs::path path = out_dir / (std::string(r.name) + "_c" + std::to_string(comb) +
                                           "_u" + std::to_string(u) + ".model.json");
          save_model(path, ModelArtifact{model, hash, cfg.seed});
          res.lines.push_back("wrote " + path.string() + " (" + note + ")");
          ++artifacts;
        }
      }
    }
    if (sq.run_gp || sq.run_gp_app)
      res.lines.push_back("gp / gp_app carry no learned state; nothing to train for them");
  }
  if (artifacts == 0) res.warnings.push_back("no learned rules enabled; no artifacts written");
  return res;
}

CommandResult cmd_eval(const ResolvedConfig& cfg, const std::optional<fs::path>& dataset_path,
                       const fs::path& out_path) {
  CommandResult res;
  ExperimentReport report;
  if (cfg.experiment == "one_shot") {
    if (dataset_path) {
      std::vector<LabeledDataset> realizations;
      realizations.push_back(read_dataset_csv(*dataset_path));
      report = run_one_shot(cfg.one_shot, realizations);
    } else {
      report = run_one_shot(cfg.one_shot);
    }
  } else {
    if (dataset_path) {
      report = run_sequential(cfg.sequential, read_dataset_csv(*dataset_path));
    } else {
      report = run_sequential(cfg.sequential);
    }
  }
  write_results_csv(out_path, report, stamp_for(cfg));
  std::ostringstream head;
  head << "wrote " << out_path.string() << " (" << report.rows.size() << " result rows, "
       << "label balance " << format_double(report.label_balance) << ", "
       << format_double(report.wall_seconds) << " s)";
  res.lines.push_back(head.str());
  for (const ResultRow& row : report.rows) res.lines.push_back(describe_row(row));
  return res;
}

CommandResult cmd_sweep(const ResolvedConfig& cfg, const fs::path& out_path) {
  CommandResult res;
  const SweepSpec& sw = cfg.sweep;
  ExperimentReport report;
  if (sw.axis == "gamma") {
    report = sweep_gamma(cfg.sequential, sw.gamma_values);
  } else if (sw.axis == "horizon") {
    report = sweep_horizon(cfg.sequential, sw.u_values);
  } else if (sw.axis == "window") {
    report = sweep_window(cfg.q_sweep);
  } else {
    throw std::invalid_argument("sweep: unknown axis '" + sw.axis + "'");
  }
  write_results_csv(out_path, report, stamp_for(cfg));
  std::ostringstream head;
  head << "wrote " << out_path.string() << " (" << report.rows.size() << " rows along the "
       << sw.axis << " axis, " << format_double(report.wall_seconds) << " s)";
  res.lines.push_back(head.str());
  return res;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dual-band cmWave/mmWave band assignment toolkit", "dualband"};
  app.require_subcommand(1);

  std::string config_path, out_path, dataset_path;
  std::uint64_t seed = 0;
  int jobs = 1;

  auto common = [&](CLI::App* sub, const char* out_help, bool with_dataset,
                    bool dataset_required) {
    sub->add_option("--config", config_path, "experiment configuration file")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_path, out_help)->required();
    sub->add_option("--seed", seed, "root seed override");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    if (with_dataset) {
      CLI::Option* o =
          sub->add_option("--dataset", dataset_path, "dataset CSV")->check(CLI::ExistingFile);
      if (dataset_required) o->required();
    }
  };

  CLI::App* generate = app.add_subcommand("generate", "synthesize a dataset CSV");
  common(generate, "output dataset path", false, false);
  CLI::App* ingest =
      app.add_subcommand("ingest", "validate an external trace and fit channel parameters");
  common(ingest, "cleaned dataset path (fitted parameters land next to it)", true, true);
  CLI::App* train =
      app.add_subcommand("train", "train the learned rules and write model artifacts");
  common(train, "artifact directory", true, false);
  CLI::App* eval =
      app.add_subcommand("eval", "run the configured experiment and write a results CSV");
  common(eval, "results CSV path", true, false);
  CLI::App* sweep =
      app.add_subcommand("sweep", "walk the configured axis and write a results CSV");
  common(sweep, "results CSV path", false, false);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    ResolvedConfig cfg =
        config_path.empty() ? parse_config("", "<defaults>") : load_config(config_path);
    CLI::App* active = app.get_subcommands().front();
    if (active->count("--seed") > 0) apply_seed(cfg, seed);
    if (active->count("--jobs") > 0) apply_jobs(cfg, jobs);
    std::optional<fs::path> dataset;
    if (!dataset_path.empty()) dataset = fs::path(dataset_path);

    CommandResult res;
    if (active == generate) {
      res = cmd_generate(cfg, out_path);
    } else if (active == ingest) {
      res = cmd_ingest(cfg, *dataset, out_path);
    } else if (active == train) {
      res = cmd_train(cfg, dataset, out_path);
    } else if (active == eval) {
      res = cmd_eval(cfg, dataset, out_path);
    } else {
      res = cmd_sweep(cfg, out_path);
    }
    for (const std::string& w : res.warnings) err << "warning: " << w << "\n";
    for (const std::string& line : res.lines) out << line << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dualband
