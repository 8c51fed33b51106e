#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fadekey/devices.hpp"
#include "fadekey/turbulence.hpp"

// Sampled experiments over a transmittance trace.  Three producers fill the
// same tally structures: the binned sampler (closed-form per-bin
// probabilities, the workhorse), the per-pulse brute-force oracle (full
// physical event model, used to validate the binned distributions), and the
// event-tape ingester (replays recorded Alice/detector logs).

namespace fadekey {

// Per-bin outcome counts.  Index order everywhere: [basis][intensity], with
// basis 0 = X, 1 = Z and intensity 0-based (0 = signal, 2 = vacuum).
struct BinRecord {
  double eta = 0.0;        // receiver-side transmittance estimate for the bin
  std::uint32_t sent = 0;  // pulses in the bin
  std::array<std::array<std::uint32_t, 3>, 2> sent_bk{}; // Alice's choices
  std::array<std::array<std::uint32_t, 3>, 2> n_bk{};    // sifted detections
  std::array<std::array<std::uint32_t, 3>, 2> m_bk{};    // sifted errors
};

// Aggregate counts over a set of bins.  Addition checks both the per-record
// invariants and 64-bit overflow.
struct TallyTable {
  std::uint64_t pulses = 0;
  std::array<std::array<std::uint64_t, 3>, 2> sent{};
  std::array<std::array<std::uint64_t, 3>, 2> clicks{};
  std::array<std::array<std::uint64_t, 3>, 2> errors{};

  void add(const BinRecord& rec);
  void merge(const TallyTable& other);

  std::uint64_t clicks_in(Basis b) const {
    const auto& row = clicks[static_cast<int>(b)];
    return row[0] + row[1] + row[2];
  }
  std::uint64_t errors_in(Basis b) const {
    const auto& row = errors[static_cast<int>(b)];
    return row[0] + row[1] + row[2];
  }
};

struct Diagnostics {
  std::uint64_t unmatched = 0;     // sifted away: Bob's basis != Alice's
  std::uint64_t double_clicks = 0; // slots with more than one detection
  std::uint64_t out_of_span = 0;   // detections outside the trace's slots
  std::uint64_t dead_time_capped = 0; // bins clipped by the dead-time cap
  std::vector<std::uint64_t> suspect_lines; // first few out-of-span line numbers

  std::vector<std::pair<std::string, std::string>> rows() const;
};

struct SimResult {
  std::vector<BinRecord> bins;
  TallyTable tally;
  Diagnostics diag;
};

// Binned sampling: per bin, Alice's 6-way (basis, intensity) split is
// multinomial; sifted detections are Binomial(sent, q_basis * Q_k(eta_true));
// errors are Binomial(detections, conditional error probability).  Bin i uses
// Philox stream (seed; sim domain, index i), so results are independent of
// thread count.  threads = 0 picks the hardware concurrency.
SimResult simulate_bins(const TransmittanceTrace& trace,
                        const SourceParams& source, const DetectorSuite& suite,
                        std::uint64_t seed, int threads = 1);

struct BruteBin {
  BinRecord rec;
  std::uint64_t unmatched = 0;
};

// Per-pulse oracle at fixed transmittance: explicit photon-number draws,
// per-photon survival, per-detector backgrounds, misalignment flips and
// double-click resolution.  Capped at 1e6 pulses.
BruteBin brute_force_bin(double eta, std::uint64_t n_pulses,
                         const SourceParams& source, const DetectorSuite& suite,
                         std::uint64_t seed);

// Replay recorded tapes.  alice_path: CSV `slot,basis,intensity_index,bit`
// covering every slot in order; detection_path: CSV `timestamp_ps,detector`
// sorted by time, detector in {H,V,D,A}.  Timestamps map to the nearest slot
// (ties toward the earlier one).  Double clicks resolve by a seeded fair
// choice; out-of-span detections and basis-mismatched clicks land in the
// diagnostics, malformed or unsorted lines abort with the line number.
SimResult ingest_event_tape(const std::string& alice_path,
                            const std::string& detection_path,
                            const TransmittanceTrace& trace,
                            const SourceParams& source,
                            const DetectorSuite& suite, std::uint64_t seed);

// Test fixture: write a tape pair that ingests back to exactly the given
// simulation result (bit order: detections first in each category, errors
// first among detections).
void write_synthetic_tapes(const SimResult& sim, const SourceParams& source,
                           const TransmittanceTrace& trace,
                           const std::string& alice_path,
                           const std::string& detection_path);

} // namespace fadekey
