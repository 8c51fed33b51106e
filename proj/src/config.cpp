#include "fadekey/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <sstream>

#include "fadekey/io.hpp"

namespace fadekey {

namespace {

std::string trim(const std::string& s) {
  std::size_t lo = 0;
  std::size_t hi = s.size();
  while (lo < hi && std::isspace(static_cast<unsigned char>(s[lo]))) ++lo;
  while (hi > lo && std::isspace(static_cast<unsigned char>(s[hi - 1]))) --hi;
  return s.substr(lo, hi - lo);
}

// Raw parse result: section -> ordered key/value pairs, duplicates rejected.
struct RawConfig {
  std::map<std::string, std::map<std::string, std::string>> sections;
  std::string name;

  [[noreturn]] void fail(const std::string& what) const {
    throw ConfigError(name + ": " + what);
  }
};

RawConfig parse_raw(const std::string& text, const std::string& name) {
  RawConfig raw;
  raw.name = name;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::uint64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        raw.fail("line " + io::u64_str(line_no) + ": malformed section header '" +
                 line + "'");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (raw.sections.count(section)) {
        raw.fail("line " + io::u64_str(line_no) + ": duplicate section [" +
                 section + "]");
      }
      raw.sections[section]; // create
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      raw.fail("line " + io::u64_str(line_no) + ": expected 'key = value', got '" +
               line + "'");
    }
    if (section.empty()) {
      raw.fail("line " + io::u64_str(line_no) + ": key outside any [section]");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) raw.fail("line " + io::u64_str(line_no) + ": empty key");
    if (value.empty()) {
      raw.fail("line " + io::u64_str(line_no) + ": empty value for " + section +
               "." + key);
    }
    if (!raw.sections[section].emplace(key, value).second) {
      raw.fail("line " + io::u64_str(line_no) + ": duplicate key " + section +
               "." + key);
    }
  }
  return raw;
}

// Typed access that records which keys were consumed, so leftovers can be
// reported as unknown.
class SectionReader {
 public:
  SectionReader(RawConfig& raw, const std::string& section)
      : raw_(raw), section_(section) {
    auto it = raw.sections.find(section);
    if (it != raw.sections.end()) {
      present_ = true;
      pending_ = it->second;
    }
  }

  bool present() const { return present_; }

  bool has(const std::string& key) const { return pending_.count(key) != 0; }

  std::string take(const std::string& key) {
    auto it = pending_.find(key);
    if (it == pending_.end()) {
      raw_.fail(section_ + "." + key + " is required");
    }
    std::string value = it->second;
    pending_.erase(it);
    return value;
  }

  bool take_optional(const std::string& key, std::string& out) {
    auto it = pending_.find(key);
    if (it == pending_.end()) return false;
    out = it->second;
    pending_.erase(it);
    return true;
  }

  double take_double(const std::string& key) {
    return to_double(key, take(key));
  }
  bool take_double_optional(const std::string& key, double& out) {
    std::string text;
    if (!take_optional(key, text)) return false;
    out = to_double(key, text);
    return true;
  }
  bool take_u64_optional(const std::string& key, std::uint64_t& out) {
    std::string text;
    if (!take_optional(key, text)) return false;
    out = to_u64(key, text);
    return true;
  }
  bool take_bool_optional(const std::string& key, bool& out) {
    std::string text;
    if (!take_optional(key, text)) return false;
    if (text == "true") {
      out = true;
    } else if (text == "false") {
      out = false;
    } else {
      raw_.fail(section_ + "." + key + " must be true or false, got '" + text + "'");
    }
    return true;
  }
  bool take_list_optional(const std::string& key, std::vector<double>& out) {
    std::string text;
    if (!take_optional(key, text)) return false;
    out.clear();
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = text.find(',', start);
      const std::string item = trim(text.substr(
          start, comma == std::string::npos ? std::string::npos : comma - start));
      out.push_back(to_double(key, item));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return true;
  }

  void finish() {
    if (!pending_.empty()) {
      raw_.fail("unknown key " + section_ + "." + pending_.begin()->first);
    }
  }

 private:
  double to_double(const std::string& key, const std::string& text) {
    const char* begin = text.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end != begin + text.size() || text.empty() || !std::isfinite(value)) {
      raw_.fail(section_ + "." + key + " is not a number: '" + text + "'");
    }
    return value;
  }
  std::uint64_t to_u64(const std::string& key, const std::string& text) {
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) {
      raw_.fail(section_ + "." + key + " is not a non-negative integer: '" +
                text + "'");
    }
    errno = 0;
    const unsigned long long value = std::strtoull(text.c_str(), nullptr, 10);
    if (errno != 0) {
      raw_.fail(section_ + "." + key + " overflows 64 bits: '" + text + "'");
    }
    return value;
  }

  RawConfig& raw_;
  std::string section_;
  bool present_ = false;
  std::map<std::string, std::string> pending_;
};

DetectorSuite read_custom_suite(SectionReader& sec, const std::string& name) {
  DetectorSuite s{};
  const char* suffix[4] = {"h", "v", "d", "a"};
  const double eta_det = sec.take_double("eta_det");
  for (int i = 0; i < 4; ++i) {
    s.det[static_cast<std::size_t>(i)].y0 =
        sec.take_double(std::string("y0_") + suffix[i]);
    double b = 0.0;
    sec.take_double_optional(std::string("b_") + suffix[i], b);
    s.det[static_cast<std::size_t>(i)].b = b;
    s.det[static_cast<std::size_t>(i)].eta_det = eta_det;
  }
  s.eta_bob = sec.take_double("eta_bob");
  s.e_mis = sec.take_double("e_mis");
  s.dead_time = 0.0;
  sec.take_double_optional("dead_time", s.dead_time);
  s.timing_jitter = 0.0;
  sec.take_double_optional("timing_jitter", s.timing_jitter);
  sec.finish();
  try {
    s.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError("[detectors." + name + "]: " + ex.what());
  }
  return s;
}

} // namespace

ChannelModel ChannelSection::model() const {
  if (!have_eta) {
    throw ConfigError("channel.eta_o or channel.loss_db is required");
  }
  return ChannelModel(eta_o, resolve_sigma());
}

double ChannelSection::resolve_sigma() const {
  if (have_sigma) return sigma;
  if (!have_path()) {
    throw ConfigError(
        "channel.sigma or the cn2/wavelength/distance path physics is required");
  }
  if (cn2.size() != 1 || distance.size() != 1) {
    throw ConfigError(
        "channel.cn2 and channel.distance must be single values when deriving "
        "sigma for a run (lists are only for the rytov command)");
  }
  const double variance =
      rytov_variance(AtmosphericPath(cn2[0], wavelength, distance[0]));
  return std::sqrt(variance);
}

RunConfig RunConfig::load(const std::string& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& ex) {
    throw ConfigError(ex.what());
  }
  return parse(text, path);
}

RunConfig RunConfig::parse(const std::string& text, const std::string& name) {
  RawConfig raw = parse_raw(text, name);
  RunConfig cfg;
  cfg.raw_text = text;

  // --- channel ---
  {
    SectionReader sec(raw, "channel");
    double loss_db = 0.0;
    const bool has_eta = sec.take_double_optional("eta_o", cfg.channel.eta_o);
    const bool has_loss = sec.take_double_optional("loss_db", loss_db);
    if (has_eta && has_loss) {
      raw.fail("channel.eta_o and channel.loss_db are mutually exclusive");
    }
    if (has_loss) cfg.channel.eta_o = std::pow(10.0, -loss_db / 10.0);
    cfg.channel.have_eta = has_eta || has_loss;

    cfg.channel.have_sigma = sec.take_double_optional("sigma", cfg.channel.sigma);
    sec.take_list_optional("cn2", cfg.channel.cn2);
    sec.take_list_optional("distance", cfg.channel.distance);
    cfg.channel.have_wavelength =
        sec.take_double_optional("wavelength", cfg.channel.wavelength);
    if (cfg.channel.have_sigma && cfg.channel.have_path()) {
      raw.fail("channel.sigma and channel.cn2/distance are mutually exclusive");
    }
    if (cfg.channel.cn2.empty() != cfg.channel.distance.empty()) {
      raw.fail("channel.cn2 and channel.distance must be given together");
    }
    if (!cfg.channel.cn2.empty() &&
        cfg.channel.cn2.size() != cfg.channel.distance.size()) {
      raw.fail("channel.cn2 and channel.distance lists differ in length");
    }
    sec.finish();
  }

  // --- source ---
  {
    SectionReader sec(raw, "source");
    if (sec.present()) {
      sec.take_bool_optional("optimize", cfg.optimize_source);
      bool passive = false;
      sec.take_bool_optional("passive", passive);
      const bool explicit_params = sec.has("q_x") || sec.has("mu1") ||
                                   sec.has("mu2") || sec.has("p1") ||
                                   sec.has("p2");
      cfg.source.rep_rate = sec.take_double("rep_rate");
      cfg.source.passive = passive;
      if (explicit_params) {
        cfg.source.q_x = sec.take_double("q_x");
        cfg.source.mu[0] = sec.take_double("mu1");
        cfg.source.mu[1] = sec.take_double("mu2");
        cfg.source.mu[2] = 0.0;
        double mu3 = 0.0;
        if (sec.take_double_optional("mu3", mu3) && mu3 != 0.0) {
          raw.fail("source.mu3 must be 0 (vacuum decoy)");
        }
        const double p1 = sec.take_double("p1");
        const double p2 = sec.take_double("p2");
        cfg.source.p_mu = {p1, p2, 1.0 - p1 - p2};
        try {
          cfg.source.validate();
        } catch (const std::invalid_argument& ex) {
          throw ConfigError(std::string("[source]: ") + ex.what());
        }
        cfg.have_source = true;
      } else if (!cfg.optimize_source) {
        raw.fail(
            "source needs explicit q_x/mu1/mu2/p1/p2 or optimize = true");
      }
      sec.finish();
    }
  }

  // --- detectors ---
  {
    SectionReader sec(raw, "detectors");
    std::string builtin;
    std::string use;
    if (sec.present()) {
      sec.take_optional("builtin", builtin);
      sec.take_optional("use", use);
      sec.finish();
    }
    // Collect custom [detectors.<name>] sections.
    std::vector<std::string> custom_names;
    for (const auto& entry : raw.sections) {
      if (entry.first.rfind("detectors.", 0) == 0) {
        custom_names.push_back(entry.first.substr(10));
      }
    }
    if (!builtin.empty()) {
      if (!use.empty() || !custom_names.empty()) {
        raw.fail("detectors.builtin excludes custom [detectors.<name>] sections");
      }
      try {
        cfg.suite = DetectorSuite::builtin(builtin);
      } catch (const std::invalid_argument& ex) {
        throw ConfigError(std::string("[detectors]: ") + ex.what());
      }
      cfg.suite_name = builtin;
      cfg.have_suite = true;
    } else if (!custom_names.empty()) {
      std::string chosen = use;
      if (chosen.empty()) {
        if (custom_names.size() > 1) {
          raw.fail("several [detectors.<name>] sections: pick one with "
                   "detectors.use");
        }
        chosen = custom_names.front();
      }
      if (!raw.sections.count("detectors." + chosen)) {
        raw.fail("detectors.use names a missing section [detectors." + chosen +
                 "]");
      }
      SectionReader custom(raw, "detectors." + chosen);
      cfg.suite = read_custom_suite(custom, chosen);
      cfg.suite_name = chosen;
      cfg.have_suite = true;
    } else if (!use.empty()) {
      raw.fail("detectors.use names a missing section [detectors." + use + "]");
    }
  }

  // --- security ---
  {
    SectionReader sec(raw, "security");
    if (sec.present()) {
      sec.take_double_optional("eps_sec", cfg.budget.eps_sec);
      sec.take_double_optional("eps_cor", cfg.budget.eps_cor);
      sec.take_double_optional("f_ec", cfg.budget.f_ec);
      sec.finish();
    }
    try {
      cfg.budget.validate();
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(std::string("[security]: ") + ex.what());
    }
  }

  // --- run ---
  {
    SectionReader sec(raw, "run");
    if (sec.present()) {
      cfg.run.have_n_pulses = sec.take_u64_optional("n_pulses", cfg.run.n_pulses);
      if (cfg.run.have_n_pulses && cfg.run.n_pulses == 0) {
        raw.fail("run.n_pulses must be at least 1");
      }
      sec.take_double_optional("bin_duration", cfg.run.bin_duration);
      if (!(cfg.run.bin_duration > 0.0)) {
        raw.fail("run.bin_duration must be positive");
      }
      cfg.run.have_seed = sec.take_u64_optional("seed", cfg.run.seed);

      std::string policy;
      double eta_t = 0.0;
      const bool has_eta_t = sec.take_double_optional("eta_t", eta_t);
      if (sec.take_optional("policy", policy)) {
        if (policy == "fixed") {
          if (!has_eta_t) raw.fail("run.policy = fixed needs run.eta_t");
          try {
            cfg.run.policy = ThresholdPolicy::prefixed(eta_t);
          } catch (const std::invalid_argument& ex) {
            throw ConfigError(std::string("run.eta_t: ") + ex.what());
          }
        } else {
          if (has_eta_t) {
            raw.fail("run.eta_t is only valid with run.policy = fixed");
          }
          try {
            cfg.run.policy = ThresholdPolicy::from_name(policy);
          } catch (const std::invalid_argument& ex) {
            throw ConfigError(std::string("run.policy: ") + ex.what());
          }
        }
      } else if (has_eta_t) {
        try {
          cfg.run.policy = ThresholdPolicy::prefixed(eta_t);
        } catch (const std::invalid_argument& ex) {
          throw ConfigError(std::string("run.eta_t: ") + ex.what());
        }
      }

      double grid_min = 1e-5;
      double grid_max = 1e-2;
      std::uint64_t grid_points = 40;
      const bool has_gmin = sec.take_double_optional("grid_min", grid_min);
      const bool has_gmax = sec.take_double_optional("grid_max", grid_max);
      const bool has_gpts = sec.take_u64_optional("grid_points", grid_points);
      if (has_gmin || has_gmax || has_gpts) {
        if (!(grid_min > 0.0) || !(grid_max < 1.0) || !(grid_min < grid_max)) {
          raw.fail("run.grid_min/grid_max must satisfy 0 < min < max < 1");
        }
        if (grid_points < 1 || grid_points > 100000) {
          raw.fail("run.grid_points must be in [1, 100000]");
        }
        cfg.run.sweep_grid.resize(grid_points);
        if (grid_points == 1) {
          cfg.run.sweep_grid[0] = grid_min;
        } else {
          const double lo = std::log10(grid_min);
          const double hi = std::log10(grid_max);
          for (std::uint64_t i = 0; i < grid_points; ++i) {
            cfg.run.sweep_grid[i] = std::pow(
                10.0, lo + (hi - lo) * static_cast<double>(i) /
                               static_cast<double>(grid_points - 1));
          }
        }
      }

      std::string out_dir;
      if (sec.take_optional("out_dir", out_dir)) cfg.run.out_dir = out_dir;
      sec.take_double_optional("probe_sigma", cfg.run.probe_sigma);
      if (cfg.run.probe_sigma < 0.0) {
        raw.fail("run.probe_sigma must be non-negative");
      }
      sec.take_double_optional("full_scale", cfg.run.full_scale);
      if (!(cfg.run.full_scale > 0.0)) {
        raw.fail("run.full_scale must be positive");
      }
      sec.take_list_optional("loss_list_db", cfg.run.loss_list_db);
      sec.finish();
    }
  }

  // Anything left is an unknown section.
  for (const auto& entry : raw.sections) {
    const std::string& s = entry.first;
    if (s == "channel" || s == "source" || s == "detectors" || s == "security" ||
        s == "run" || s.rfind("detectors.", 0) == 0) {
      continue;
    }
    raw.fail("unknown section [" + s + "]");
  }
  return cfg;
}

const SourceParams& RunConfig::require_source() const {
  if (!have_source) {
    throw ConfigError("this command needs explicit [source] parameters");
  }
  return source;
}

const DetectorSuite& RunConfig::require_suite() const {
  if (!have_suite) {
    throw ConfigError(
        "[detectors] is required (builtin = new-snspd | old-spad, or a custom "
        "[detectors.<name>] section)");
  }
  return suite;
}

std::uint64_t RunConfig::require_seed() const {
  if (!run.have_seed) {
    throw ConfigError("run.seed (or --seed) is required; no wall-clock default");
  }
  return run.seed;
}

std::uint64_t RunConfig::require_n_pulses() const {
  if (!run.have_n_pulses) throw ConfigError("run.n_pulses is required");
  return run.n_pulses;
}

std::uint64_t RunConfig::pulses_per_bin() const {
  const double rep = have_source || optimize_source
                         ? source.rep_rate
                         : 0.0;
  if (!(rep > 0.0)) throw ConfigError("source.rep_rate is required");
  const double exact = rep * run.bin_duration;
  const double rounded = std::round(exact);
  if (!(exact > 0.5) || std::fabs(exact - rounded) > 1e-6 * exact) {
    throw ConfigError(
        "source.rep_rate * run.bin_duration must be a whole number of pulses "
        "per bin");
  }
  if (rounded > 4294967295.0) {
    throw ConfigError("pulses per bin exceeds the 32-bit per-bin counter");
  }
  return static_cast<std::uint64_t>(rounded);
}

std::uint64_t RunConfig::n_bins() const {
  const std::uint64_t ppb = pulses_per_bin();
  const std::uint64_t n = require_n_pulses();
  if (n % ppb != 0) {
    throw ConfigError(
        "run.n_pulses must be a whole multiple of pulses per bin (rep_rate * "
        "bin_duration)");
  }
  return n / ppb;
}

} // namespace fadekey
