// fadekey: batch driver for the fading-channel decoy-state BB84 toolkit.
// Each command loads one config file, runs deterministically under the given
// seed, and writes CSV artifacts plus a rerun manifest into the output
// directory.  Exit codes: 0 success, 2 config/validation error, 3 runtime or
// estimation failure.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fadekey/config.hpp"
#include "fadekey/devices.hpp"
#include "fadekey/finitekey.hpp"
#include "fadekey/io.hpp"
#include "fadekey/kernels/api.hpp"
#include "fadekey/montecarlo.hpp"
#include "fadekey/postselect.hpp"
#include "fadekey/turbulence.hpp"
#include "fadekey/version.hpp"

namespace {

using namespace fadekey;
using ordered_json = nlohmann::ordered_json;

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_runtime = 3;

struct CliArgs {
  std::string command;
  std::string config_path;
  std::uint64_t seed = 0;
  bool have_seed = false;
  std::string out_dir;
  bool have_out = false;
  int threads = 0; // 0 = all hardware threads
  std::string alice_tape;
  std::string detection_tape;
  bool write_tapes = false;
};

// Output-directory priority: --out flag, then FADEKEY_OUT, then config.
std::string resolve_out_dir(const CliArgs& args, const RunConfig& cfg) {
  if (args.have_out) return args.out_dir;
  if (const char* env = std::getenv("FADEKEY_OUT"); env && *env) return env;
  return cfg.run.out_dir;
}

RunConfig load_config(const CliArgs& args) {
  if (args.config_path.empty()) {
    throw ConfigError("--config <file> is required");
  }
  RunConfig cfg = RunConfig::load(args.config_path);
  if (args.have_seed) {
    cfg.run.seed = args.seed;
    cfg.run.have_seed = true;
  }
  return cfg;
}

class ArtifactWriter {
 public:
  ArtifactWriter(std::string dir, const CliArgs& args, const RunConfig& cfg)
      : dir_(std::move(dir)), args_(args), cfg_(cfg) {}

  void write(const std::string& name, const std::string& bytes) {
    io::atomic_write(path_of(name), bytes);
    outputs_.push_back({name, bytes.size()});
  }

  std::string path_of(const std::string& name) const {
    return (std::filesystem::path(dir_) / name).string();
  }

  // The manifest carries everything needed to reproduce the run: the verbatim
  // config, the effective seed/threads/flags, and the code version.  No
  // timestamps: reruns must be byte-identical.
  void finish(const std::vector<std::pair<std::string, std::string>>& extra) {
    ordered_json j;
    j["command"] = args_.command;
    j["config_file"] = args_.config_path;
    j["config_text"] = cfg_.raw_text;
    j["seed"] = cfg_.run.have_seed ? ordered_json(cfg_.run.seed) : ordered_json();
    j["threads"] = args_.threads;
    if (!args_.alice_tape.empty()) j["alice_tape"] = args_.alice_tape;
    if (!args_.detection_tape.empty()) j["detection_tape"] = args_.detection_tape;
    j["version"] = version_string;
    j["kernel_backend"] = kernels::backend_name();
    for (const auto& [key, value] : extra) j[key] = value;
    ordered_json outs = ordered_json::object();
    for (const auto& [name, bytes] : outputs_) {
      outs[name] = {{"bytes", bytes}};
    }
    j["outputs"] = outs;
    io::atomic_write(path_of("manifest.json"), j.dump(2) + "\n");
  }

 private:
  std::string dir_;
  const CliArgs& args_;
  const RunConfig& cfg_;
  std::vector<std::pair<std::string, std::size_t>> outputs_;
};

std::string tallies_csv(const TallyTable& tally) {
  std::vector<std::vector<std::string>> rows;
  const char* basis_name[2] = {"X", "Z"};
  for (int b = 0; b < 2; ++b) {
    for (int k = 0; k < 3; ++k) {
      rows.push_back({basis_name[b], std::to_string(k + 1),
                      io::u64_str(tally.sent[b][k]), io::u64_str(tally.clicks[b][k]),
                      io::u64_str(tally.errors[b][k])});
    }
  }
  return io::csv_table({"basis", "intensity", "sent", "detected", "errors"}, rows);
}

std::string diagnostics_csv(const Diagnostics& diag) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& [key, value] : diag.rows()) rows.push_back({key, value});
  return io::csv_table({"field", "value"}, rows);
}

TransmittanceTrace make_trace(const RunConfig& cfg) {
  const ChannelModel model = cfg.channel.model();
  const std::uint64_t n_bins = cfg.n_bins();
  return sample_trace(model, n_bins, cfg.run.bin_duration, cfg.pulses_per_bin(),
                      cfg.require_seed(), cfg.run.probe_sigma);
}

// Paper-style prefixed cutoff; commands that need a single threshold reject
// the adaptive policy.
double require_prefixed_threshold(const RunConfig& cfg) {
  if (cfg.run.policy.mode != ThresholdPolicy::Mode::prefixed) {
    throw ConfigError(
        "this command needs a prefixed threshold (run.policy = paper-prts or "
        "run.policy = fixed with run.eta_t)");
  }
  return cfg.run.policy.eta_t;
}

SourceParams resolve_source(const RunConfig& cfg, const char* why) {
  if (cfg.optimize_source) {
    const double eta_t = require_prefixed_threshold(cfg);
    const OptimizeResult best = optimize_params(
        cfg.channel.model(), cfg.require_suite(), cfg.budget,
        static_cast<double>(cfg.require_n_pulses()), eta_t,
        cfg.source.rep_rate, cfg.require_seed());
    if (!best.feasible) {
      throw std::runtime_error(std::string("no positive rate: source "
                                           "optimization found nothing for ") +
                               why);
    }
    SourceParams s = best.params;
    s.passive = cfg.source.passive;
    return s;
  }
  return cfg.require_source();
}

// ---------------------------------------------------------------- commands

int cmd_rytov(const CliArgs& args) {
  const RunConfig cfg = load_config(args);
  if (!cfg.channel.have_path()) {
    throw ConfigError("channel.cn2 and channel.distance are required for rytov");
  }
  if (!cfg.channel.have_wavelength) {
    throw ConfigError("channel.wavelength is required for rytov");
  }
  ArtifactWriter out(resolve_out_dir(args, cfg), args, cfg);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < cfg.channel.cn2.size(); ++i) {
    const AtmosphericPath path(cfg.channel.cn2[i], cfg.channel.wavelength,
                               cfg.channel.distance[i]);
    const double var = rytov_variance(path);
    std::printf("sigma2 = %.9g  (cn2 = %.9g, wavelength = %.9g m, distance = %.9g m)\n",
                var, path.cn2, path.wavelength, path.distance);
    rows.push_back({io::g9(path.cn2), io::g9(path.wavelength),
                    io::g9(path.distance), io::g9(var)});
  }
  out.write("rytov.csv",
            io::csv_table({"cn2", "wavelength_m", "distance_m", "rytov_variance"},
                          rows));
  out.finish({});
  return exit_ok;
}

int cmd_sample(const CliArgs& args) {
  const RunConfig cfg = load_config(args);
  cfg.require_source(); // rep_rate via explicit source
  const TransmittanceTrace trace = make_trace(cfg);
  ArtifactWriter out(resolve_out_dir(args, cfg), args, cfg);

  std::vector<std::vector<std::string>> rows;
  rows.reserve(trace.n_bins());
  for (std::size_t i = 0; i < trace.n_bins(); ++i) {
    rows.push_back({io::u64_str(i), io::g9(trace.bins[i])});
  }
  out.write("trace.csv", io::csv_table({"bin_index", "eta"}, rows));
  if (!trace.observed.empty()) {
    std::vector<std::vector<std::string>> obs;
    obs.reserve(trace.n_bins());
    for (std::size_t i = 0; i < trace.n_bins(); ++i) {
      obs.push_back({io::u64_str(i), io::g9(trace.observed[i])});
    }
    out.write("trace_observed.csv", io::csv_table({"bin_index", "eta"}, obs));
  }
  out.finish({{"n_bins", io::u64_str(trace.n_bins())}});
  return exit_ok;
}

int cmd_simulate(const CliArgs& args) {
  const RunConfig cfg = load_config(args);
  const SourceParams source = resolve_source(cfg, "simulate");
  const DetectorSuite& suite = cfg.require_suite();
  const TransmittanceTrace trace = make_trace(cfg);
  const SimResult sim =
      simulate_bins(trace, source, suite, cfg.require_seed(), args.threads);

  ArtifactWriter out(resolve_out_dir(args, cfg), args, cfg);
  out.write("tallies.csv", tallies_csv(sim.tally));
  out.write("diagnostics.csv", diagnostics_csv(sim.diag));
  std::vector<std::pair<std::string, std::string>> extra = {
      {"n_pulses", io::u64_str(sim.tally.pulses)}};
  if (args.write_tapes) {
    write_synthetic_tapes(sim, source, trace, out.path_of("alice_tape.csv"),
                          out.path_of("detection_tape.csv"));
    extra.push_back({"alice_tape", "alice_tape.csv"});
    extra.push_back({"detection_tape", "detection_tape.csv"});
  }
  out.finish(extra);
  return exit_ok;
}

int cmd_ingest(const CliArgs& args) {
  if (args.alice_tape.empty() || args.detection_tape.empty()) {
    throw ConfigError("ingest needs --alice <file> and --detections <file>");
  }
  const RunConfig cfg = load_config(args);
  const SourceParams source = cfg.require_source();
  const DetectorSuite& suite = cfg.require_suite();
  const TransmittanceTrace trace = make_trace(cfg);
  const SimResult sim = ingest_event_tape(args.alice_tape, args.detection_tape,
                                          trace, source, suite,
                                          cfg.require_seed());

  ArtifactWriter out(resolve_out_dir(args, cfg), args, cfg);
  out.write("tallies.csv", tallies_csv(sim.tally));
  out.write("diagnostics.csv", diagnostics_csv(sim.diag));
  out.finish({{"n_pulses", io::u64_str(sim.tally.pulses)}});
  return exit_ok;
}

int cmd_sweep_threshold(const CliArgs& args) {
  const RunConfig cfg = load_config(args);
  const SourceParams source = resolve_source(cfg, "sweep-threshold");
  const DetectorSuite& suite = cfg.require_suite();
  const TransmittanceTrace trace = make_trace(cfg);
  const SimResult sim =
      simulate_bins(trace, source, suite, cfg.require_seed(), args.threads);

  const std::vector<double> grid = cfg.run.sweep_grid.empty()
                                       ? ThresholdPolicy::default_grid()
                                       : cfg.run.sweep_grid;
  const SweepResult sweep =
      arts_sweep(sim.bins, grid, source, cfg.budget, args.threads);

  std::vector<std::vector<std::string>> rows;
  for (const auto& pt : sweep.points) {
    const double r = pt.rate.r_sec;
    rows.push_back({io::g9(pt.threshold), io::g9(r), io::u64_str(pt.rate.bits),
                    io::g9(pt.rate.n_post), io::g9(pt.rate.eta_avg),
                    r > 0.0 ? io::g9(std::log10(r)) : "-inf"});
  }
  ArtifactWriter out(resolve_out_dir(args, cfg), args, cfg);
  out.write("sweep.csv",
            io::csv_table({"threshold", "R_sec", "l_bits", "N_post", "eta_avg",
                           "log10_R_sec"},
                          rows));
  std::vector<std::pair<std::string, std::string>> extra;
  if (sweep.found) {
    std::printf("best threshold = %.9g  (R_sec = %.9g)\n", sweep.best_threshold,
                sweep.best_rate);
    extra.push_back({"best_threshold", io::g9(sweep.best_threshold)});
    extra.push_back({"best_R_sec", io::g9(sweep.best_rate)});
  } else {
    std::printf("no positive rate on the threshold grid\n");
    extra.push_back({"best_threshold", "none"});
  }
  out.finish(extra);
  return exit_ok;
}

int cmd_keyrate_vs_loss(const CliArgs& args) {
  const RunConfig cfg = load_config(args);
  if (cfg.run.loss_list_db.empty()) {
    throw ConfigError("run.loss_list_db is required for keyrate-vs-loss");
  }
  const SourceParams source = cfg.require_source();
  const DetectorSuite& suite = cfg.require_suite();
  const double eta_t = require_prefixed_threshold(cfg);
  const double sigma = cfg.channel.resolve_sigma();
  const std::uint64_t n_pulses = cfg.require_n_pulses();
  const std::uint64_t seed = cfg.require_seed();
  const std::uint64_t ppb = cfg.pulses_per_bin();
  if (n_pulses % ppb != 0) {
    throw ConfigError(
        "run.n_pulses must be a whole multiple of pulses per bin");
  }
  const std::uint64_t n_bins = n_pulses / ppb;

  std::vector<std::vector<std::string>> rows;
  for (const double loss : cfg.run.loss_list_db) {
    const ChannelModel model(std::pow(10.0, -loss / 10.0), sigma);
    const SecureRate zero = predicted_rate(model, 0.0, source, suite,
                                           cfg.budget,
                                           static_cast<double>(n_pulses));
    const SecureRate prts = predicted_rate(model, eta_t, source, suite,
                                           cfg.budget,
                                           static_cast<double>(n_pulses));
    // Monte Carlo at the same prefixed cutoff; the one seed is reused across
    // losses (common random numbers keeps the curve smooth in loss).
    const TransmittanceTrace trace = sample_trace(
        model, n_bins, cfg.run.bin_duration, ppb, seed, cfg.run.probe_sigma);
    const SimResult sim = simulate_bins(trace, source, suite, seed, args.threads);
    const SecureRate mc = secure_rate(sim.bins, eta_t, source, cfg.budget);
    rows.push_back(
        {io::g9(loss), io::g9(zero.r_sec), io::g9(prts.r_sec), io::g9(mc.r_sec)});
  }
  ArtifactWriter out(resolve_out_dir(args, cfg), args, cfg);
  out.write("keyrate_vs_loss.csv",
            io::csv_table(
                {"loss_db", "R_sec_zero_cutoff", "R_sec_prts", "R_sec_arts_opt"},
                rows));
  out.finish({});
  return exit_ok;
}

int cmd_optimize(const CliArgs& args) {
  const RunConfig cfg = load_config(args);
  const DetectorSuite& suite = cfg.require_suite();
  const double eta_t = require_prefixed_threshold(cfg);
  const double rep = cfg.source.rep_rate;
  if (!(rep > 0.0)) throw ConfigError("source.rep_rate is required");
  const OptimizeResult best = optimize_params(
      cfg.channel.model(), suite, cfg.budget,
      static_cast<double>(cfg.require_n_pulses()), eta_t, rep,
      cfg.require_seed());
  if (!best.feasible) {
    std::fprintf(stderr, "no positive rate\n");
    return exit_runtime;
  }
  std::printf("q_x = %.9g  mu1 = %.9g  mu2 = %.9g  p1 = %.9g  p2 = %.9g  "
              "R_sec = %.9g\n",
              best.params.q_x, best.params.mu[0], best.params.mu[1],
              best.params.p_mu[0], best.params.p_mu[1], best.r_sec);
  ArtifactWriter out(resolve_out_dir(args, cfg), args, cfg);
  out.write("optimized_params.csv",
            io::csv_table({"q_x", "mu1", "mu2", "p1", "p2", "p3", "rep_rate",
                           "eta_t", "R_sec", "l_bits"},
                          {{io::g9(best.params.q_x), io::g9(best.params.mu[0]),
                            io::g9(best.params.mu[1]), io::g9(best.params.p_mu[0]),
                            io::g9(best.params.p_mu[1]), io::g9(best.params.p_mu[2]),
                            io::g9(best.params.rep_rate), io::g9(eta_t),
                            io::g9(best.r_sec), io::u64_str(best.bits)}}));
  out.finish({});
  return exit_ok;
}

int cmd_export_waveform(const CliArgs& args) {
  const RunConfig cfg = load_config(args);
  cfg.require_source();
  const TransmittanceTrace trace = make_trace(cfg);
  ArtifactWriter out(resolve_out_dir(args, cfg), args, cfg);
  // Build in memory through the library call so header and payload rules live
  // in one place, then register the artifact for the manifest.
  const std::string path = out.path_of("waveform.bin");
  export_waveform(trace, cfg.run.full_scale, path);
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  out.finish({{"waveform_bytes", io::u64_str(ec ? 0 : size)},
              {"waveform_file", "waveform.bin"}});
  return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic decoy-state BB84 over a fading channel"};
  app.require_subcommand(1);

  CliArgs args;
  struct Sub {
    const char* name;
    const char* desc;
    int (*fn)(const CliArgs&);
    bool tapes;
  };
  const Sub subs[] = {
      {"rytov", "tabulate the scintillation variance for (cn2, distance) pairs",
       cmd_rytov, false},
      {"sample", "draw a transmittance trace and write it as CSV", cmd_sample,
       false},
      {"simulate", "run the binned protocol simulation and write tallies",
       cmd_simulate, false},
      {"ingest", "replay recorded alice/detection tapes into tallies",
       cmd_ingest, true},
      {"sweep-threshold", "simulate, then scan post-selection cutoffs",
       cmd_sweep_threshold, false},
      {"keyrate-vs-loss", "rate-vs-loss table (analytic and Monte Carlo)",
       cmd_keyrate_vs_loss, false},
      {"optimize", "search source parameters for the best predicted rate",
       cmd_optimize, false},
      {"export-waveform", "write the trace as a 16-bit AWG waveform",
       cmd_export_waveform, false},
  };

  std::vector<std::pair<CLI::App*, const Sub*>> wired;
  for (const Sub& sub : subs) {
    CLI::App* cmd = app.add_subcommand(sub.name, sub.desc);
    cmd->add_option("--config", args.config_path, "run configuration file")
        ->required();
    cmd->add_option("--seed", args.seed, "override [run] seed")
        ->check(CLI::NonNegativeNumber);
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--threads", args.threads,
                    "worker threads (default: all hardware threads)");
    if (sub.tapes) {
      cmd->add_option("--alice", args.alice_tape, "alice tape CSV")->required();
      cmd->add_option("--detections", args.detection_tape,
                      "detection tape CSV")
          ->required();
    }
    if (std::string(sub.name) == "simulate") {
      cmd->add_flag("--tapes", args.write_tapes,
                    "also write synthetic alice/detection tapes");
    }
    wired.push_back({cmd, &sub});
  }

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [cmd, sub] : wired) {
      if (cmd->parsed()) {
        args.command = sub->name;
        args.have_seed = cmd->count("--seed") > 0;
        args.have_out = cmd->count("--out") > 0;
        return sub->fn(args);
      }
    }
    std::fprintf(stderr, "no command selected\n");
    return exit_config;
  } catch (const ConfigError& ex) {
    std::fprintf(stderr, "config error: %s\n", ex.what());
    return exit_config;
  } catch (const std::invalid_argument& ex) {
    std::fprintf(stderr, "config error: %s\n", ex.what());
    return exit_config;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return exit_runtime;
  }
}
