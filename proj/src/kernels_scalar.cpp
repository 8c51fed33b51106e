// Scalar reference backend: instantiates the shared kernel templates with
// plain doubles.  This translation unit is built WITHOUT any AVX flags; the
// explicit std::fma calls and -ffp-contract=off keep its arithmetic identical
// to the AVX2 instantiation of the same templates.

#include "fadekey/kernels/detail.hpp"
#include "fadekey/kernels/philox.hpp"

namespace fadekey::kernels {

using detail::ScalarOps;

double exp1(double x) { return detail::v_exp<ScalarOps>(x); }
double log1(double x) { return detail::v_log<ScalarOps>(x); }
double normal_quantile1(double u) { return detail::v_ppnd<ScalarOps>(u); }

double uniform1(std::uint64_t seed, std::uint32_t domain, std::uint64_t index) {
  const PhiloxBlock b = philox4x32(0, static_cast<std::uint32_t>(index),
                                   static_cast<std::uint32_t>(index >> 32),
                                   domain, seed);
  const std::uint64_t bits =
      (static_cast<std::uint64_t>(b.w[0]) << 32) | b.w[1];
  return u01_from_bits(bits);
}

double lognormal1(std::uint64_t seed, std::uint32_t domain, std::uint64_t index,
                  double eta_o, double sigma) {
  const double neg_half_sigma2 = -0.5 * (sigma * sigma);
  return detail::v_lognormal<ScalarOps>(uniform1(seed, domain, index), eta_o,
                                        sigma, neg_half_sigma2);
}

namespace scalar_backend {

void exp_batch(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = detail::v_exp<ScalarOps>(x[i]);
}

void log_batch(const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = detail::v_log<ScalarOps>(x[i]);
}

void normal_quantile_batch(const double* u, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = detail::v_ppnd<ScalarOps>(u[i]);
}

void uniform_batch(std::uint64_t seed, std::uint32_t domain,
                   std::uint64_t index0, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = uniform1(seed, domain, index0 + i);
}

void lognormal_batch(std::uint64_t seed, std::uint32_t domain,
                     std::uint64_t index0, std::size_t n, double eta_o,
                     double sigma, double* out) {
  const double neg_half_sigma2 = -0.5 * (sigma * sigma);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = detail::v_lognormal<ScalarOps>(uniform1(seed, domain, index0 + i),
                                            eta_o, sigma, neg_half_sigma2);
  }
}

} // namespace scalar_backend
} // namespace fadekey::kernels
