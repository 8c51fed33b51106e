#pragma once

#include <cstddef>
#include <cstdint>

// Batch kernel API with runtime backend dispatch.  The scalar backend is the
// reference; the AVX2 backend must produce bitwise-identical output (enforced
// by test_kernels).  Backend choice therefore never changes results, only
// throughput.  Selection: FADEKEY_KERNELS=scalar|avx2|auto in the environment
// (read once at first use) or force_backend() from code.

namespace fadekey::kernels {

enum class Backend { scalar, avx2 };

bool cpu_supports_avx2();
Backend active_backend();
const char* backend_name();
// Throws std::invalid_argument if the backend is unavailable on this CPU.
void force_backend(Backend b);
void reset_backend(); // back to auto selection

// out[i] = exp(x[i]); see detail.hpp for the accuracy contract.
void exp_batch(const double* x, double* out, std::size_t n);
// out[i] = log(x[i]) for normal positive x[i].
void log_batch(const double* x, double* out, std::size_t n);
// out[i] = standard normal quantile of u[i], u[i] in (0,1).
void normal_quantile_batch(const double* u, double* out, std::size_t n);
// out[i] = uniform (0,1) draw for stream index0+i of the given domain.
void uniform_batch(std::uint64_t seed, std::uint32_t domain,
                   std::uint64_t index0, std::size_t n, double* out);
// out[i] = min(1, eta_o * exp(sigma*z_i - sigma^2/2)) with z_i the normal
// draw for stream index0+i — one fade sample per bin.
void lognormal_batch(std::uint64_t seed, std::uint32_t domain,
                     std::uint64_t index0, std::size_t n, double eta_o,
                     double sigma, double* out);

// Single-value reference-path helpers (always the scalar code path; used by
// the sequential samplers and by the AVX2 backend for loop tails).
double exp1(double x);
double log1(double x);
double normal_quantile1(double u);
double uniform1(std::uint64_t seed, std::uint32_t domain, std::uint64_t index);
double lognormal1(std::uint64_t seed, std::uint32_t domain,
                  std::uint64_t index, double eta_o, double sigma);

} // namespace fadekey::kernels
