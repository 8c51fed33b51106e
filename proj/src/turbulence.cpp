#include "fadekey/turbulence.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "fadekey/io.hpp"
#include "fadekey/kernels/api.hpp"
#include "fadekey/kernels/philox.hpp"
#include "fadekey/math.hpp"

namespace fadekey {

ChannelModel::ChannelModel(double eta_o_, double sigma_)
    : eta_o(eta_o_), sigma(sigma_) {
  if (!(eta_o > 0.0) || !(eta_o <= 1.0)) {
    throw std::invalid_argument("channel eta_o must be in (0, 1]");
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("channel sigma must be positive and finite");
  }
}

AtmosphericPath::AtmosphericPath(double cn2_, double wavelength_, double distance_)
    : cn2(cn2_), wavelength(wavelength_), distance(distance_) {
  if (!(cn2 > 0.0)) throw std::invalid_argument("path cn2 must be positive");
  if (!(wavelength > 0.0)) {
    throw std::invalid_argument("path wavelength must be positive");
  }
  if (!(distance > 0.0)) {
    throw std::invalid_argument("path distance must be positive");
  }
}

double rytov_variance(const AtmosphericPath& path) {
  const double k = 2.0 * std::numbers::pi / path.wavelength;
  return 1.23 * path.cn2 * std::pow(k, 7.0 / 6.0) *
         std::pow(path.distance, 11.0 / 6.0);
}

double pdf(const ChannelModel& model, double eta) {
  if (!(eta > 0.0)) return 0.0;
  const double s = model.sigma;
  // ln(eta) ~ Normal(m, s^2) with m chosen so that E[eta] = eta_o.
  const double z = std::log(eta / model.eta_o) + 0.5 * s * s;
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * s * eta);
  return norm * std::exp(-(z * z) / (2.0 * s * s));
}

double transmittance_cdf(const ChannelModel& model, double eta) {
  if (!(eta > 0.0)) return 0.0;
  const double s = model.sigma;
  const double z = (std::log(eta / model.eta_o) + 0.5 * s * s) / s;
  return normal_cdf(z);
}

TruncatedStats truncated_stats(const ChannelModel& model, double eta_t) {
  if (!(eta_t >= 0.0) || !(eta_t < 1.0)) {
    throw std::invalid_argument("threshold must satisfy 0 <= eta_t < 1");
  }
  const double s = model.sigma;
  const double m = std::log(model.eta_o) - 0.5 * s * s; // mean of ln(eta)

  // F = P(eta_t <= eta <= 1) = Phi((0 - m)/s) - Phi((ln eta_t - m)/s).
  const double hi = normal_cdf((0.0 - m) / s);
  const double lo = eta_t > 0.0 ? normal_cdf((std::log(eta_t) - m) / s) : 0.0;
  const double survival = hi - lo;

  // Partial first moment over the same window:
  //   int eta p(eta) deta = eta_o [Phi((-m-s^2)/s) - Phi((ln eta_t - m - s^2)/s)].
  const double hi1 = normal_cdf((-m - s * s) / s);
  const double lo1 =
      eta_t > 0.0 ? normal_cdf((std::log(eta_t) - m - s * s) / s) : 0.0;
  const double partial_mean = model.eta_o * (hi1 - lo1);

  TruncatedStats out{};
  out.survival = survival;
  if (!(survival > 0.0)) {
    // The cutoff sits so deep in the tail that the survival fraction
    // underflows: post-selection keeps nothing.
    out.survival = 0.0;
    out.eta_avg = 0.0;
    out.empty = true;
    return out;
  }
  out.eta_avg = partial_mean / survival;
  out.empty = false;
  return out;
}

TransmittanceTrace sample_trace(const ChannelModel& model, std::size_t n_bins,
                                double bin_duration, std::uint64_t pulses_per_bin,
                                std::uint64_t seed, double probe_sigma) {
  if (n_bins == 0) throw std::invalid_argument("trace needs at least one bin");
  if (!(bin_duration > 0.0)) {
    throw std::invalid_argument("bin duration must be positive");
  }
  if (pulses_per_bin == 0) {
    throw std::invalid_argument("pulses per bin must be positive");
  }
  if (probe_sigma < 0.0) {
    throw std::invalid_argument("probe noise sigma must be non-negative");
  }

  TransmittanceTrace trace;
  trace.bin_duration = bin_duration;
  trace.pulses_per_bin = pulses_per_bin;
  trace.seed = seed;
  trace.bins.resize(n_bins);
  kernels::lognormal_batch(seed, kernels::domain_trace, 0, n_bins, model.eta_o,
                           model.sigma, trace.bins.data());

  if (probe_sigma > 0.0) {
    trace.observed.resize(n_bins);
    // Unit-mean multiplicative noise on the receiver's estimate only.  Built
    // from the raw uniform/quantile/exp kernels: the fade sampler clamps its
    // output at 1, which would bias the noise factor low.
    std::vector<double> work(n_bins);
    kernels::uniform_batch(seed, kernels::domain_probe, 0, n_bins, work.data());
    kernels::normal_quantile_batch(work.data(), work.data(), n_bins);
    const double half_var = 0.5 * probe_sigma * probe_sigma;
    for (std::size_t i = 0; i < n_bins; ++i) {
      work[i] = probe_sigma * work[i] - half_var;
    }
    kernels::exp_batch(work.data(), trace.observed.data(), n_bins);
    for (std::size_t i = 0; i < n_bins; ++i) {
      const double est = trace.bins[i] * trace.observed[i];
      trace.observed[i] = est > 1.0 ? 1.0 : est;
    }
  }
  return trace;
}

void export_waveform(const TransmittanceTrace& trace, double full_scale,
                     const std::string& destination) {
  if (!(full_scale > 0.0)) {
    throw std::invalid_argument("waveform full_scale must be positive");
  }
  for (double eta : trace.bins) {
    if (eta > full_scale) {
      throw std::invalid_argument(
          "waveform full_scale below the trace maximum; samples would clip");
    }
  }

  std::string bytes;
  {
    char head[256];
    std::snprintf(head, sizeof(head),
                  "# samples=%llu\n# bin_duration_s=%.17g\n# full_scale=%.17g\n"
                  "# seed=%llu\n",
                  static_cast<unsigned long long>(trace.bins.size()),
                  trace.bin_duration, full_scale,
                  static_cast<unsigned long long>(trace.seed));
    bytes = head;
  }
  bytes.reserve(bytes.size() + 2 * trace.bins.size());
  for (double eta : trace.bins) {
    const double scaled = eta / full_scale * 65535.0;
    const long code = std::lround(scaled);
    const std::uint16_t q =
        static_cast<std::uint16_t>(code < 0 ? 0 : (code > 65535 ? 65535 : code));
    bytes.push_back(static_cast<char>(q & 0xFF));
    bytes.push_back(static_cast<char>((q >> 8) & 0xFF));
  }
  io::atomic_write(destination, bytes);
}

namespace {

// Parse one "# key=value" header line; returns the value text.
std::string header_value(const std::string& line, const char* key,
                         const std::string& source) {
  const std::string prefix = std::string("# ") + key + "=";
  if (line.compare(0, prefix.size(), prefix) != 0) {
    throw std::runtime_error("malformed waveform header in " + source +
                             ": expected '" + prefix + "...', got '" + line + "'");
  }
  return line.substr(prefix.size());
}

} // namespace

WaveformFile import_waveform(const std::string& source) {
  const std::string bytes = io::read_file(source);

  // Four header lines, then raw little-endian uint16 samples.
  std::size_t pos = 0;
  std::string lines[4];
  for (auto& line : lines) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) {
      throw std::runtime_error("truncated waveform header in " + source);
    }
    line = bytes.substr(pos, nl - pos);
    pos = nl + 1;
  }

  WaveformFile wf{};
  wf.samples = std::stoull(header_value(lines[0], "samples", source));
  wf.bin_duration = std::stod(header_value(lines[1], "bin_duration_s", source));
  wf.full_scale = std::stod(header_value(lines[2], "full_scale", source));
  wf.seed = std::stoull(header_value(lines[3], "seed", source));

  const std::size_t payload = bytes.size() - pos;
  if (payload != 2 * wf.samples) {
    std::ostringstream msg;
    msg << "waveform payload size mismatch in " << source << ": header says "
        << wf.samples << " samples (" << 2 * wf.samples << " bytes), file has "
        << payload << " bytes";
    throw std::runtime_error(msg.str());
  }
  wf.eta.resize(wf.samples);
  for (std::uint64_t i = 0; i < wf.samples; ++i) {
    const auto lo = static_cast<unsigned char>(bytes[pos + 2 * i]);
    const auto hi = static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
    const std::uint16_t q = static_cast<std::uint16_t>(lo | (hi << 8));
    wf.eta[i] = static_cast<double>(q) / 65535.0 * wf.full_scale;
  }
  return wf;
}

} // namespace fadekey
