#include "fadekey/devices.hpp"

#include <cmath>
#include <stdexcept>

#include "fadekey/kernels/api.hpp"

namespace fadekey {

void SourceParams::validate() const {
  if (!(q_x > 0.0) || !(q_x < 1.0)) {
    throw std::invalid_argument("source q_x must be in (0, 1)");
  }
  if (!(mu[0] > mu[1])) {
    throw std::invalid_argument("source intensities must satisfy mu1 > mu2");
  }
  if (!(mu[1] > mu[2])) {
    throw std::invalid_argument("source intensities must satisfy mu2 > mu3");
  }
  if (mu[2] != 0.0) {
    throw std::invalid_argument("source vacuum intensity mu3 must be 0");
  }
  if (!(mu[0] <= 1.0)) {
    throw std::invalid_argument("source mu1 must be at most 1");
  }
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    if (!(p_mu[k] > 0.0) || !(p_mu[k] < 1.0)) {
      throw std::invalid_argument("source intensity probabilities must be in (0, 1)");
    }
    sum += p_mu[k];
  }
  if (std::fabs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("source intensity probabilities must sum to 1");
  }
  if (!(rep_rate > 0.0)) {
    throw std::invalid_argument("source rep_rate must be positive");
  }
}

void DetectorSuite::validate() const {
  for (const auto& d : det) {
    if (!(d.y0 >= 0.0) || !(d.y0 <= 1.0)) {
      throw std::invalid_argument("detector y0 must be in [0, 1]");
    }
    if (!(d.b >= 0.0) || !(d.y0 + d.b <= 1.0)) {
      throw std::invalid_argument(
          "detector stray coefficient must keep y0 + b*eta within [0, 1]");
    }
    if (!(d.eta_det > 0.0) || !(d.eta_det <= 1.0)) {
      throw std::invalid_argument("detector efficiency must be in (0, 1]");
    }
  }
  if (!(eta_bob > 0.0) || !(eta_bob <= 1.0)) {
    throw std::invalid_argument("receiver eta_bob must be in (0, 1]");
  }
  if (!(e_mis >= 0.0) || !(e_mis <= 0.5)) {
    throw std::invalid_argument("receiver e_mis must be in [0, 0.5]");
  }
  if (!(dead_time >= 0.0)) {
    throw std::invalid_argument("detector dead_time must be non-negative");
  }
  if (!(timing_jitter >= 0.0)) {
    throw std::invalid_argument("detector timing_jitter must be non-negative");
  }
}

double DetectorSuite::pair_eta_det(Basis b) const {
  if (b == Basis::x) {
    return 0.5 * (at(DetectorId::h).eta_det + at(DetectorId::v).eta_det);
  }
  return 0.5 * (at(DetectorId::d).eta_det + at(DetectorId::a).eta_det);
}

double DetectorSuite::pair_background(Basis b, double eta) const {
  double sum;
  if (b == Basis::x) {
    sum = at(DetectorId::h).background(eta) + at(DetectorId::v).background(eta);
  } else {
    sum = at(DetectorId::d).background(eta) + at(DetectorId::a).background(eta);
  }
  return sum > 1.0 ? 1.0 : sum;
}

DetectorSuite DetectorSuite::builtin(const std::string& name) {
  DetectorSuite s{};
  if (name == "new-snspd") {
    s.det = {DetectorParams{7.1e-7, 0.0, 0.8}, DetectorParams{6.7e-7, 0.0, 0.8},
             DetectorParams{6.2e-7, 0.0, 0.8}, DetectorParams{6.1e-7, 0.0, 0.8}};
    s.eta_bob = 0.42;
    s.e_mis = 0.001;
    s.dead_time = 80e-9;
    s.timing_jitter = 50e-12;
  } else if (name == "old-spad") {
    s.det = {DetectorParams{76e-7, 2.6e-4, 0.1}, DetectorParams{310e-7, 1.8e-4, 0.1},
             DetectorParams{670e-7, 2.7e-4, 0.1}, DetectorParams{670e-7, 1.8e-4, 0.1}};
    s.eta_bob = 0.42;
    s.e_mis = 0.003;
    s.dead_time = 9000e-9;
    s.timing_jitter = 200e-12;
  } else {
    throw std::invalid_argument("unknown detector preset: " + name +
                                " (expected new-snspd or old-spad)");
  }
  s.validate();
  return s;
}

double system_transmittance(const DetectorSuite& suite, double eta, Basis basis) {
  return eta * (suite.eta_bob * suite.pair_eta_det(basis));
}

GainModel::GainModel(const SourceParams& source, const DetectorSuite& suite) {
  for (int b = 0; b < 2; ++b) {
    const Basis basis = static_cast<Basis>(b);
    const double chain = suite.eta_bob * suite.pair_eta_det(basis);
    for (int k = 0; k < 3; ++k) coef_[b][k] = -(source.mu[k] * chain);
  }
  y0_sum_[0] = suite.at(DetectorId::h).y0 + suite.at(DetectorId::v).y0;
  y0_sum_[1] = suite.at(DetectorId::d).y0 + suite.at(DetectorId::a).y0;
  b_sum_[0] = suite.at(DetectorId::h).b + suite.at(DetectorId::v).b;
  b_sum_[1] = suite.at(DetectorId::d).b + suite.at(DetectorId::a).b;
  e_mis_ = suite.e_mis;
}

double GainModel::gain(Basis b, int k, double eta) const {
  const double e = kernels::exp1(exp_arg(b, k, eta));
  return gain_from_exp(background(b, eta), e);
}

double GainModel::error_rate(Basis b, int k, double eta) const {
  const double e = kernels::exp1(exp_arg(b, k, eta));
  return error_from_exp(background(b, eta), e);
}

double expected_gain(const SourceParams& source, const DetectorSuite& suite,
                     double eta, int k, Basis basis) {
  if (k < 0 || k > 2) throw std::invalid_argument("intensity index out of range");
  return GainModel(source, suite).gain(basis, k, eta);
}

double expected_error_rate(const SourceParams& source, const DetectorSuite& suite,
                           double eta, int k, Basis basis) {
  if (k < 0 || k > 2) throw std::invalid_argument("intensity index out of range");
  return GainModel(source, suite).error_rate(basis, k, eta);
}

double photon_yield(const DetectorSuite& suite, double eta, int n, Basis basis) {
  const double eta_sys = system_transmittance(suite, eta, basis);
  const double miss = std::pow(1.0 - eta_sys, n);
  return 1.0 - (1.0 - suite.pair_background(basis, eta)) * miss;
}

double photon_error_yield(const DetectorSuite& suite, double eta, int n,
                          Basis basis) {
  const double eta_sys = system_transmittance(suite, eta, basis);
  const double miss = std::pow(1.0 - eta_sys, n);
  return e0 * suite.pair_background(basis, eta) + suite.e_mis * (1.0 - miss);
}

} // namespace fadekey
