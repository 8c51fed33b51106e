#pragma once

#include <array>
#include <cstdint>

// Philox4x32-10 counter-based generator.  Every random decision in the
// simulator derives from (seed; domain, stream index, block index), so any
// bin/pulse can be generated independently of evaluation order — the property
// the parallel simulation and the reproducibility contract both rely on.

namespace fadekey::kernels {

// Domain tags keep independent uses of the same seed from colliding.
enum Domain : std::uint32_t {
  domain_trace  = 1, // per-bin transmittance draws
  domain_probe  = 2, // optional probe-noise draws
  domain_sim    = 3, // binned tally sampling
  domain_brute  = 4, // per-pulse brute-force oracle
  domain_photon = 5, // photon-number-resolved oracle
  domain_opt    = 6, // optimizer restart proposals
  domain_tape   = 7, // event-tape tie breaking
};

struct PhiloxBlock {
  std::uint32_t w[4];
};

inline constexpr std::uint32_t philox_m0 = 0xD2511F53u;
inline constexpr std::uint32_t philox_m1 = 0xCD9E8D57u;
inline constexpr std::uint32_t philox_w0 = 0x9E3779B9u;
inline constexpr std::uint32_t philox_w1 = 0xBB67AE85u;

// One 4x32 block, 10 rounds.  Counter layout used throughout the project:
//   c0 = block sequence number within the stream
//   c1 = low 32 bits of the stream index (e.g. bin number)
//   c2 = high 32 bits of the stream index
//   c3 = domain tag
inline PhiloxBlock philox4x32(std::uint32_t c0, std::uint32_t c1, std::uint32_t c2,
                              std::uint32_t c3, std::uint64_t seed) {
  std::uint32_t k0 = static_cast<std::uint32_t>(seed);
  std::uint32_t k1 = static_cast<std::uint32_t>(seed >> 32);
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(philox_m0) * c0;
    const std::uint64_t p1 = static_cast<std::uint64_t>(philox_m1) * c2;
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    c0 = hi1 ^ c1 ^ k0;
    c1 = lo1;
    c2 = hi0 ^ c3 ^ k1;
    c3 = lo0;
    k0 += philox_w0;
    k1 += philox_w1;
  }
  return PhiloxBlock{{c0, c1, c2, c3}};
}

// Uniform on [2^-53, 1 - 2^-53] built by filling the 52-bit mantissa and
// centering: never returns 0 or 1, and the construction is exact in both the
// scalar and the SIMD backend.
inline double u01_from_bits(std::uint64_t x) {
  const std::uint64_t bits = 0x3FF0000000000000ull | (x >> 12);
  double d;
  static_assert(sizeof(d) == sizeof(bits));
  __builtin_memcpy(&d, &bits, sizeof(d));
  return (d - 1.0) + 0x1.0p-53;
}

// Sequential draw stream: one logical stream per (seed, domain, index).
// 2^32 blocks per stream = 1.7e10 32-bit draws, far beyond any single bin or
// oracle run.
class PhiloxStream {
 public:
  PhiloxStream(std::uint64_t seed, std::uint32_t domain, std::uint64_t index)
      : seed_(seed),
        c1_(static_cast<std::uint32_t>(index)),
        c2_(static_cast<std::uint32_t>(index >> 32)),
        c3_(domain) {}

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return block_.w[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    const std::uint64_t lo = next_u32();
    return (hi << 32) | lo;
  }

  // Uniform in (0, 1), exclusive of both endpoints.
  double next_u01() { return u01_from_bits(next_u64()); }

 private:
  void refill() {
    block_ = philox4x32(block_index_++, c1_, c2_, c3_, seed_);
    pos_ = 0;
  }

  std::uint64_t seed_;
  std::uint32_t c1_, c2_, c3_;
  std::uint32_t block_index_ = 0;
  PhiloxBlock block_{};
  int pos_ = 4;
};

} // namespace fadekey::kernels
