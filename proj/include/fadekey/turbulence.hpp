#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Fading-channel model: log-normal transmittance distribution with unit mean
// ratio (the -sigma^2/2 shift makes the distribution mean exactly eta_o),
// Rytov variance from path physics, truncated moments for post-selection,
// seeded trace sampling, and AWG-style waveform export.

namespace fadekey {

struct ChannelModel {
  double eta_o; // mean channel transmittance, linear scale, (0, 1]
  double sigma; // sqrt of the Rytov variance, > 0

  ChannelModel(double eta_o_, double sigma_);
};

struct AtmosphericPath {
  double cn2;        // refractive-index structure parameter, m^(-2/3)
  double wavelength; // meters
  double distance;   // meters

  AtmosphericPath(double cn2_, double wavelength_, double distance_);
};

struct TransmittanceTrace {
  std::vector<double> bins; // true per-bin transmittance, each in (0, 1]
  // Receiver-side estimate of each bin (empty = known exactly).  Populated
  // only when the probe-noise knob is on.
  std::vector<double> observed;
  double bin_duration = 0.0;        // seconds
  std::uint64_t pulses_per_bin = 0; // repetition rate x bin duration
  std::uint64_t seed = 0;

  std::size_t n_bins() const { return bins.size(); }
  double receiver_eta(std::size_t i) const {
    return observed.empty() ? bins[i] : observed[i];
  }
};

struct TruncatedStats {
  double survival; // F = P(eta_t <= eta <= 1)
  double eta_avg;  // E[eta | eta_t <= eta <= 1]
  bool empty;      // survival underflowed to zero
};

// sigma^2 = 1.23 Cn^2 k^(7/6) L^(11/6), k = 2*pi/lambda (plane waves).
double rytov_variance(const AtmosphericPath& path);

// Probability density of the transmittance at eta > 0.
double pdf(const ChannelModel& model, double eta);

// P(transmittance <= eta); exact closed form, used by the KS check.
double transmittance_cdf(const ChannelModel& model, double eta);

// Survival fraction and conditional mean above the cutoff, via closed-form
// Gaussian-CDF expressions for the truncated log-normal (upper limit 1).
TruncatedStats truncated_stats(const ChannelModel& model, double eta_t);

// i.i.d. per-bin fades eta_i = min(1, eta_o*exp(sigma*z_i - sigma^2/2)).
// probe_sigma > 0 adds multiplicative log-normal noise to the receiver's
// per-bin estimate (the physics keeps the true value).
TransmittanceTrace sample_trace(const ChannelModel& model, std::size_t n_bins,
                                double bin_duration, std::uint64_t pulses_per_bin,
                                std::uint64_t seed, double probe_sigma = 0.0);

// AWG-style waveform: text header (# samples / # bin_duration_s /
// # full_scale / # seed) followed by little-endian 16-bit samples of
// eta/full_scale.  Requires full_scale >= max(trace).
void export_waveform(const TransmittanceTrace& trace, double full_scale,
                     const std::string& destination);

struct WaveformFile {
  std::uint64_t samples;
  double bin_duration;
  double full_scale;
  std::uint64_t seed;
  std::vector<double> eta; // dequantized values
};

WaveformFile import_waveform(const std::string& source);

} // namespace fadekey
