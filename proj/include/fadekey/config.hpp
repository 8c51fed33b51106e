#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fadekey/devices.hpp"
#include "fadekey/finitekey.hpp"
#include "fadekey/postselect.hpp"
#include "fadekey/turbulence.hpp"

// Run-configuration loading: a strict line-oriented `[section]` / `key =
// value` format (full grammar in the README).  Every parse or consistency
// problem throws ConfigError naming the section and key; unknown keys and
// sections are rejected outright.

namespace fadekey {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChannelSection {
  bool have_eta = false;
  double eta_o = 0.0; // resolved mean transmittance (from eta_o or loss_db)
  bool have_sigma = false;
  double sigma = 0.0; // explicit sigma, if given
  // Path physics (lists allowed so the rytov command can tabulate pairs).
  std::vector<double> cn2;
  std::vector<double> distance;
  double wavelength = 1550.5e-9;
  bool have_wavelength = false;

  bool have_path() const { return !cn2.empty(); }
  // Resolve to a ChannelModel for simulation; requires eta_o/loss_db and a
  // single sigma source (explicit, or one cn2/distance pair).
  ChannelModel model() const;
  // The sigma value alone (explicit or derived from the single path pair).
  double resolve_sigma() const;
};

struct RunSection {
  bool have_n_pulses = false;
  std::uint64_t n_pulses = 0;
  double bin_duration = 1e-3;
  bool have_seed = false;
  std::uint64_t seed = 0;
  ThresholdPolicy policy = ThresholdPolicy::from_name("paper-prts");
  std::string out_dir = "out";
  double probe_sigma = 0.0;
  double full_scale = 1.0;
  std::vector<double> loss_list_db;
  std::vector<double> sweep_grid; // from grid_min/grid_max/grid_points
};

struct RunConfig {
  ChannelSection channel;
  bool have_source = false;
  SourceParams source{};
  bool optimize_source = false;
  bool have_suite = false;
  DetectorSuite suite{};
  std::string suite_name; // "new-snspd", "old-spad", or the custom name
  SecurityBudget budget{};
  RunSection run;
  std::string raw_text; // verbatim config file, echoed into manifests

  static RunConfig load(const std::string& path);
  // Parse from text (file name only for messages).
  static RunConfig parse(const std::string& text, const std::string& name);

  // Command-level requirement checks; each throws ConfigError.
  const SourceParams& require_source() const;
  const DetectorSuite& require_suite() const;
  std::uint64_t require_seed() const;
  std::uint64_t require_n_pulses() const;
  // pulses_per_bin = rep_rate * bin_duration; must be a whole number that
  // divides n_pulses.
  std::uint64_t pulses_per_bin() const;
  std::uint64_t n_bins() const;
};

} // namespace fadekey
