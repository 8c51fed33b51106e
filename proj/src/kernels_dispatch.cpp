#include "fadekey/kernels/api.hpp"

#include <cstdlib>
#include <mutex>
#include <stdexcept>
#include <string>

// Runtime backend selection.  The table is initialized once from CPUID plus
// the FADEKEY_KERNELS environment variable; force_backend() lets tests pick a
// backend explicitly.  Because backends are bitwise-equivalent, switching is
// purely a performance decision.

namespace fadekey::kernels {

namespace scalar_backend {
void exp_batch(const double*, double*, std::size_t);
void log_batch(const double*, double*, std::size_t);
void normal_quantile_batch(const double*, double*, std::size_t);
void uniform_batch(std::uint64_t, std::uint32_t, std::uint64_t, std::size_t, double*);
void lognormal_batch(std::uint64_t, std::uint32_t, std::uint64_t, std::size_t,
                     double, double, double*);
} // namespace scalar_backend

#if defined(FADEKEY_HAVE_AVX2)
namespace avx2_backend {
void exp_batch(const double*, double*, std::size_t);
void log_batch(const double*, double*, std::size_t);
void normal_quantile_batch(const double*, double*, std::size_t);
void uniform_batch(std::uint64_t, std::uint32_t, std::uint64_t, std::size_t, double*);
void lognormal_batch(std::uint64_t, std::uint32_t, std::uint64_t, std::size_t,
                     double, double, double*);
} // namespace avx2_backend
#endif

namespace {

struct Table {
  void (*exp_batch)(const double*, double*, std::size_t);
  void (*log_batch)(const double*, double*, std::size_t);
  void (*normal_quantile_batch)(const double*, double*, std::size_t);
  void (*uniform_batch)(std::uint64_t, std::uint32_t, std::uint64_t, std::size_t, double*);
  void (*lognormal_batch)(std::uint64_t, std::uint32_t, std::uint64_t, std::size_t,
                          double, double, double*);
};

constexpr Table scalar_table{
    &scalar_backend::exp_batch,
    &scalar_backend::log_batch,
    &scalar_backend::normal_quantile_batch,
    &scalar_backend::uniform_batch,
    &scalar_backend::lognormal_batch,
};

#if defined(FADEKEY_HAVE_AVX2)
constexpr Table avx2_table{
    &avx2_backend::exp_batch,
    &avx2_backend::log_batch,
    &avx2_backend::normal_quantile_batch,
    &avx2_backend::uniform_batch,
    &avx2_backend::lognormal_batch,
};
#endif

struct State {
  const Table* table;
  Backend backend;
};

State pick_auto() {
#if defined(FADEKEY_HAVE_AVX2)
  const char* env = std::getenv("FADEKEY_KERNELS");
  if (env != nullptr) {
    const std::string v(env);
    if (v == "scalar") return {&scalar_table, Backend::scalar};
    if (v == "avx2") {
      if (!cpu_supports_avx2())
        throw std::invalid_argument("FADEKEY_KERNELS=avx2: CPU lacks AVX2+FMA");
      return {&avx2_table, Backend::avx2};
    }
    // anything else (including "auto") falls through to detection
  }
  if (cpu_supports_avx2()) return {&avx2_table, Backend::avx2};
#endif
  return {&scalar_table, Backend::scalar};
}

State& state() {
  static State s = pick_auto();
  return s;
}

std::mutex& state_mutex() {
  static std::mutex m;
  return m;
}

} // namespace

bool cpu_supports_avx2() {
#if defined(FADEKEY_HAVE_AVX2)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return state().backend; }

const char* backend_name() {
  return state().backend == Backend::avx2 ? "avx2" : "scalar";
}

void force_backend(Backend b) {
  std::lock_guard<std::mutex> lock(state_mutex());
  if (b == Backend::avx2) {
#if defined(FADEKEY_HAVE_AVX2)
    if (!cpu_supports_avx2())
      throw std::invalid_argument("force_backend: CPU lacks AVX2+FMA");
    state() = {&avx2_table, Backend::avx2};
    return;
#else
    throw std::invalid_argument("force_backend: built without AVX2 support");
#endif
  }
  state() = {&scalar_table, Backend::scalar};
}

void reset_backend() {
  std::lock_guard<std::mutex> lock(state_mutex());
  state() = pick_auto();
}

void exp_batch(const double* x, double* out, std::size_t n) {
  state().table->exp_batch(x, out, n);
}
void log_batch(const double* x, double* out, std::size_t n) {
  state().table->log_batch(x, out, n);
}
void normal_quantile_batch(const double* u, double* out, std::size_t n) {
  state().table->normal_quantile_batch(u, out, n);
}
void uniform_batch(std::uint64_t seed, std::uint32_t domain, std::uint64_t index0,
                   std::size_t n, double* out) {
  state().table->uniform_batch(seed, domain, index0, n, out);
}
void lognormal_batch(std::uint64_t seed, std::uint32_t domain, std::uint64_t index0,
                     std::size_t n, double eta_o, double sigma, double* out) {
  state().table->lognormal_batch(seed, domain, index0, n, eta_o, sigma, out);
}

} // namespace fadekey::kernels
