#include "fadekey/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "fadekey/io.hpp"
#include "fadekey/kernels/api.hpp"
#include "fadekey/kernels/philox.hpp"
#include "fadekey/sampling.hpp"

namespace fadekey {

namespace {

void checked_add(std::uint64_t& acc, std::uint64_t inc) {
  std::uint64_t sum;
  if (__builtin_add_overflow(acc, inc, &sum)) {
    throw std::overflow_error("tally counter overflow");
  }
  acc = sum;
}

} // namespace

void TallyTable::add(const BinRecord& rec) {
  std::uint64_t sent_sum = 0;
  for (int b = 0; b < 2; ++b) {
    for (int k = 0; k < 3; ++k) {
      if (rec.m_bk[b][k] > rec.n_bk[b][k] || rec.n_bk[b][k] > rec.sent_bk[b][k]) {
        throw std::invalid_argument("bin record violates m <= n <= sent");
      }
      sent_sum += rec.sent_bk[b][k];
      checked_add(sent[b][k], rec.sent_bk[b][k]);
      checked_add(clicks[b][k], rec.n_bk[b][k]);
      checked_add(errors[b][k], rec.m_bk[b][k]);
    }
  }
  if (sent_sum != rec.sent) {
    throw std::invalid_argument("bin record category counts do not sum to sent");
  }
  checked_add(pulses, rec.sent);
}

void TallyTable::merge(const TallyTable& other) {
  checked_add(pulses, other.pulses);
  for (int b = 0; b < 2; ++b) {
    for (int k = 0; k < 3; ++k) {
      checked_add(sent[b][k], other.sent[b][k]);
      checked_add(clicks[b][k], other.clicks[b][k]);
      checked_add(errors[b][k], other.errors[b][k]);
    }
  }
}

std::vector<std::pair<std::string, std::string>> Diagnostics::rows() const {
  std::string lines;
  for (std::size_t i = 0; i < suspect_lines.size(); ++i) {
    if (i) lines += ';';
    lines += io::u64_str(suspect_lines[i]);
  }
  return {
      {"unmatched", io::u64_str(unmatched)},
      {"double_clicks", io::u64_str(double_clicks)},
      {"out_of_span", io::u64_str(out_of_span)},
      {"dead_time_capped", io::u64_str(dead_time_capped)},
      {"suspect_lines", lines},
  };
}

namespace {

// Category order used for every 6-way split: (X,0..2), (Z,0..2).
void category_probs(const SourceParams& source, double out[6]) {
  const double qb[2] = {source.q_x, 1.0 - source.q_x};
  for (int b = 0; b < 2; ++b) {
    for (int k = 0; k < 3; ++k) out[b * 3 + k] = qb[b] * source.p_mu[k];
  }
}

// Largest-remainder reduction of counts[] to total `target` (< current sum).
// Deterministic: leftovers go to the largest fractional parts, ties to the
// lower index.
void scale_counts(std::uint32_t counts[3], std::uint64_t total,
                  std::uint64_t target) {
  std::uint64_t floors[3];
  double rema[3];
  std::uint64_t assigned = 0;
  for (int k = 0; k < 3; ++k) {
    const double exact =
        static_cast<double>(counts[k]) * static_cast<double>(target) /
        static_cast<double>(total);
    floors[k] = static_cast<std::uint64_t>(exact);
    rema[k] = exact - static_cast<double>(floors[k]);
    assigned += floors[k];
  }
  std::uint64_t leftover = target > assigned ? target - assigned : 0;
  while (leftover > 0) {
    int best = 0;
    for (int k = 1; k < 3; ++k) {
      if (rema[k] > rema[best]) best = k;
    }
    floors[best] += 1;
    rema[best] = -1.0;
    --leftover;
  }
  for (int k = 0; k < 3; ++k) counts[k] = static_cast<std::uint32_t>(floors[k]);
}

struct DeadTimeCap {
  bool active = false;
  std::uint64_t per_basis = 0;
};

DeadTimeCap make_cap(const SourceParams& source, const DetectorSuite& suite,
                     double bin_duration) {
  DeadTimeCap cap;
  // The cap only binds when the dead time exceeds the pulse period; below
  // that the detector recovers between pulses and the per-pulse model is
  // already faithful.
  if (suite.dead_time > 0.0 && suite.dead_time * source.rep_rate > 1.0) {
    cap.active = true;
    cap.per_basis =
        2 * static_cast<std::uint64_t>(std::floor(bin_duration / suite.dead_time));
  }
  return cap;
}

} // namespace

SimResult simulate_bins(const TransmittanceTrace& trace,
                        const SourceParams& source, const DetectorSuite& suite,
                        std::uint64_t seed, int threads) {
  source.validate();
  suite.validate();
  if (trace.n_bins() == 0) {
    throw std::invalid_argument("simulate_bins needs a non-empty trace");
  }
  if (trace.pulses_per_bin == 0 || trace.pulses_per_bin > 0xFFFFFFFFull) {
    throw std::invalid_argument("pulses per bin must fit a 32-bit counter");
  }

  const std::size_t n_bins = trace.n_bins();
  const auto ppb = static_cast<std::uint32_t>(trace.pulses_per_bin);
  const GainModel gm(source, suite);
  double cat_p[6];
  category_probs(source, cat_p);
  const double qb[2] = {source.bob_basis_prob(Basis::x),
                        source.bob_basis_prob(Basis::z)};
  const DeadTimeCap cap = make_cap(source, suite, trace.bin_duration);

  SimResult result;
  result.bins.resize(n_bins);

  int n_threads = threads;
  if (n_threads <= 0) {
    n_threads = static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads <= 0) n_threads = 1;
  }
  n_threads = static_cast<int>(
      std::min<std::size_t>(static_cast<std::size_t>(n_threads), n_bins));

  std::vector<TallyTable> tallies(static_cast<std::size_t>(n_threads));
  std::vector<std::uint64_t> capped(static_cast<std::size_t>(n_threads), 0);
  std::vector<std::string> failures(static_cast<std::size_t>(n_threads));

  auto worker = [&](int tid, std::size_t lo, std::size_t hi) {
    try {
      constexpr std::size_t chunk = 4096;
      std::vector<double> args(6 * chunk), exps(6 * chunk);
      for (std::size_t base = lo; base < hi; base += chunk) {
        const std::size_t count = std::min(chunk, hi - base);
        for (std::size_t i = 0; i < count; ++i) {
          const double eta = trace.bins[base + i];
          for (int b = 0; b < 2; ++b) {
            for (int k = 0; k < 3; ++k) {
              args[(b * 3 + k) * count + i] =
                  gm.exp_arg(static_cast<Basis>(b), k, eta);
            }
          }
        }
        kernels::exp_batch(args.data(), exps.data(), 6 * count);

        for (std::size_t i = 0; i < count; ++i) {
          const std::size_t bin = base + i;
          const double eta = trace.bins[bin];
          BinRecord& rec = result.bins[bin];
          rec.eta = trace.receiver_eta(bin);
          rec.sent = ppb;

          kernels::PhiloxStream stream(seed, kernels::domain_sim, bin);
          std::uint64_t split[6];
          multinomial(stream, ppb, cat_p, 6, split);

          double ybg[2] = {gm.background(Basis::x, eta),
                           gm.background(Basis::z, eta)};
          // Sample detections for all six categories first, then errors, so
          // the dead-time cap (applied between the two) cannot change how
          // many draws the stream consumes before the error stage.
          double err_p[2][3];
          for (int b = 0; b < 2; ++b) {
            for (int k = 0; k < 3; ++k) {
              rec.sent_bk[b][k] = static_cast<std::uint32_t>(split[b * 3 + k]);
              const double e = exps[(b * 3 + k) * count + i];
              const double q = gm.gain_from_exp(ybg[b], e);
              const double eq = gm.error_from_exp(ybg[b], e);
              const double p_det = qb[b] * q;
              rec.n_bk[b][k] = static_cast<std::uint32_t>(
                  binomial(stream, rec.sent_bk[b][k], p_det));
              double cond = q > 0.0 ? eq / q : 0.0;
              err_p[b][k] = cond > 1.0 ? 1.0 : cond;
            }
          }

          if (cap.active) {
            bool clipped = false;
            for (int b = 0; b < 2; ++b) {
              const std::uint64_t total = std::uint64_t(rec.n_bk[b][0]) +
                                          rec.n_bk[b][1] + rec.n_bk[b][2];
              if (total > cap.per_basis) {
                scale_counts(rec.n_bk[b].data(), total, cap.per_basis);
                clipped = true;
              }
            }
            if (clipped) ++capped[static_cast<std::size_t>(tid)];
          }

          for (int b = 0; b < 2; ++b) {
            for (int k = 0; k < 3; ++k) {
              rec.m_bk[b][k] = rec.n_bk[b][k] == 0
                                   ? 0u
                                   : static_cast<std::uint32_t>(binomial(
                                         stream, rec.n_bk[b][k], err_p[b][k]));
            }
          }
          tallies[static_cast<std::size_t>(tid)].add(rec);
        }
      }
    } catch (const std::exception& ex) {
      failures[static_cast<std::size_t>(tid)] = ex.what();
    }
  };

  if (n_threads == 1) {
    worker(0, 0, n_bins);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    const std::size_t step =
        (n_bins + static_cast<std::size_t>(n_threads) - 1) /
        static_cast<std::size_t>(n_threads);
    for (int t = 0; t < n_threads; ++t) {
      const std::size_t lo = static_cast<std::size_t>(t) * step;
      const std::size_t hi = std::min(n_bins, lo + step);
      pool.emplace_back(worker, t, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  for (int t = 0; t < n_threads; ++t) {
    if (!failures[static_cast<std::size_t>(t)].empty()) {
      throw std::runtime_error(failures[static_cast<std::size_t>(t)]);
    }
    result.tally.merge(tallies[static_cast<std::size_t>(t)]);
    result.diag.dead_time_capped += capped[static_cast<std::size_t>(t)];
  }
  return result;
}

BruteBin brute_force_bin(double eta, std::uint64_t n_pulses,
                         const SourceParams& source, const DetectorSuite& suite,
                         std::uint64_t seed) {
  source.validate();
  suite.validate();
  if (!(eta > 0.0) || !(eta <= 1.0)) {
    throw std::invalid_argument("brute_force_bin eta must be in (0, 1]");
  }
  if (n_pulses == 0 || n_pulses > 1000000) {
    throw std::invalid_argument("brute_force_bin supports 1..1e6 pulses");
  }

  double cat_p[6];
  category_probs(source, cat_p);
  double cat_cum[6];
  double acc = 0.0;
  for (int c = 0; c < 6; ++c) {
    acc += cat_p[c];
    cat_cum[c] = acc;
  }
  cat_cum[5] = 1.0;

  const double eta_sys[2] = {system_transmittance(suite, eta, Basis::x),
                             system_transmittance(suite, eta, Basis::z)};
  // Detector pair per basis: index 0 carries bit 0 (H or D).
  const DetectorId pair[2][2] = {{DetectorId::h, DetectorId::v},
                                 {DetectorId::d, DetectorId::a}};

  BruteBin out;
  out.rec.eta = eta;
  out.rec.sent = static_cast<std::uint32_t>(n_pulses);

  for (std::uint64_t pulse = 0; pulse < n_pulses; ++pulse) {
    kernels::PhiloxStream stream(seed, kernels::domain_brute, pulse);

    const double u_cat = stream.next_u01();
    int cat = 0;
    while (cat < 5 && u_cat > cat_cum[cat]) ++cat;
    const int b = cat / 3;
    const int k = cat % 3;
    out.rec.sent_bk[b][k] += 1;

    const int alice_bit = bernoulli(stream, 0.5) ? 1 : 0;
    const bool bob_x = bernoulli(stream, source.bob_basis_prob(Basis::x));
    if (bob_x != (b == 0)) {
      out.unmatched += 1;
      continue;
    }

    const std::uint64_t n_photons = poisson(stream, source.mu[k]);
    const std::uint64_t survivors = binomial(stream, n_photons, eta_sys[b]);
    const bool flip = bernoulli(stream, suite.e_mis);
    const bool bg0 = bernoulli(stream, suite.at(pair[b][0]).background(eta));
    const bool bg1 = bernoulli(stream, suite.at(pair[b][1]).background(eta));

    const int signal_slot = alice_bit ^ (flip ? 1 : 0);
    const bool click0 = bg0 || (survivors > 0 && signal_slot == 0);
    const bool click1 = bg1 || (survivors > 0 && signal_slot == 1);
    if (!click0 && !click1) continue;

    int bit;
    if (click0 && click1) {
      bit = stream.next_u01() < 0.5 ? 0 : 1;
    } else {
      bit = click1 ? 1 : 0;
    }
    out.rec.n_bk[b][k] += 1;
    if (bit != alice_bit) out.rec.m_bk[b][k] += 1;
  }
  return out;
}

namespace {

struct LineReader {
  std::ifstream in;
  std::string path;
  std::uint64_t line_no = 0;

  LineReader(const std::string& p) : in(p), path(p) {
    if (!in) throw std::runtime_error("cannot open tape: " + p);
  }

  bool next(std::string& line) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& what) const {
    std::ostringstream msg;
    msg << path << " line " << line_no << ": " << what;
    throw std::runtime_error(msg.str());
  }
};

int split_fields(const std::string& line, std::string_view out[], int max_fields) {
  int n = 0;
  std::size_t start = 0;
  while (n < max_fields) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out[n++] = std::string_view(line).substr(start);
      break;
    }
    out[n++] = std::string_view(line).substr(start, comma - start);
    start = comma + 1;
  }
  return n;
}

std::uint64_t parse_u64(std::string_view text, LineReader& r, const char* what) {
  if (text.empty()) r.fail(std::string("empty ") + what);
  std::uint64_t value = 0;
  for (char c : text) {
    if (c < '0' || c > '9') {
      r.fail(std::string("malformed ") + what + " '" + std::string(text) + "'");
    }
    const std::uint64_t digit = static_cast<std::uint64_t>(c - '0');
    if (value > (0xFFFFFFFFFFFFFFFFull - digit) / 10) {
      r.fail(std::string(what) + " overflows 64 bits");
    }
    value = value * 10 + digit;
  }
  return value;
}

struct AliceEntry {
  int basis;
  int k;
  int bit;
};

AliceEntry parse_alice(const std::string& line, std::uint64_t expect_slot,
                       LineReader& r) {
  std::string_view f[5];
  if (split_fields(line, f, 5) != 4) {
    r.fail("expected 4 fields (slot,basis,intensity_index,bit)");
  }
  if (parse_u64(f[0], r, "slot") != expect_slot) {
    r.fail("slot out of order (expected " + std::string(io::u64_str(expect_slot)) +
           ", got " + std::string(f[0]) + ")");
  }
  AliceEntry e{};
  if (f[1] == "X") {
    e.basis = 0;
  } else if (f[1] == "Z") {
    e.basis = 1;
  } else {
    r.fail("basis must be X or Z");
  }
  const std::uint64_t k = parse_u64(f[2], r, "intensity_index");
  if (k < 1 || k > 3) r.fail("intensity_index must be 1, 2 or 3");
  e.k = static_cast<int>(k) - 1;
  const std::uint64_t bit = parse_u64(f[3], r, "bit");
  if (bit > 1) r.fail("bit must be 0 or 1");
  e.bit = static_cast<int>(bit);
  return e;
}

DetectorId parse_detector(std::string_view text, LineReader& r) {
  if (text == "H") return DetectorId::h;
  if (text == "V") return DetectorId::v;
  if (text == "D") return DetectorId::d;
  if (text == "A") return DetectorId::a;
  r.fail("detector must be H, V, D or A");
}

} // namespace

SimResult ingest_event_tape(const std::string& alice_path,
                            const std::string& detection_path,
                            const TransmittanceTrace& trace,
                            const SourceParams& source,
                            const DetectorSuite& suite, std::uint64_t seed) {
  source.validate();
  suite.validate();
  if (trace.n_bins() == 0 || trace.pulses_per_bin == 0) {
    throw std::invalid_argument("ingest needs a trace with bins and a pulse rate");
  }
  if (trace.pulses_per_bin > 0xFFFFFFFFull) {
    throw std::invalid_argument("pulses per bin must fit a 32-bit counter");
  }
  const std::uint64_t n_slots = trace.n_bins() * trace.pulses_per_bin;
  const std::uint64_t period_ps = static_cast<std::uint64_t>(
      std::llround(1e12 / source.rep_rate));
  if (period_ps == 0) {
    throw std::invalid_argument("rep_rate too high for picosecond timestamps");
  }

  LineReader alice(alice_path);
  LineReader dets(detection_path);

  std::string line;
  if (!alice.next(line)) alice.fail("empty file");
  if (line != "slot,basis,intensity_index,bit") {
    alice.fail("expected header 'slot,basis,intensity_index,bit'");
  }
  if (!dets.next(line)) dets.fail("empty file");
  if (line != "timestamp_ps,detector") {
    dets.fail("expected header 'timestamp_ps,detector'");
  }

  SimResult result;
  result.bins.resize(trace.n_bins());
  for (std::size_t i = 0; i < trace.n_bins(); ++i) {
    result.bins[i].eta = trace.receiver_eta(i);
  }

  // Lookahead detection, already slot-mapped; out-of-span lines are consumed
  // and recorded on the fly.
  struct Pending {
    bool valid = false;
    std::uint64_t slot = 0;
    DetectorId det = DetectorId::h;
  };
  Pending cur;
  std::uint64_t prev_t = 0;
  bool have_prev = false;

  auto advance = [&]() {
    cur.valid = false;
    std::string det_line;
    while (dets.next(det_line)) {
      std::string_view f[3];
      if (split_fields(det_line, f, 3) != 2) {
        dets.fail("expected 2 fields (timestamp_ps,detector)");
      }
      const std::uint64_t t = parse_u64(f[0], dets, "timestamp_ps");
      if (have_prev && t < prev_t) {
        dets.fail("timestamps must be sorted (saw " + std::string(f[0]) +
                  " after " + io::u64_str(prev_t) + ")");
      }
      prev_t = t;
      have_prev = true;
      const DetectorId id = parse_detector(f[1], dets);
      // Nearest slot; the midpoint maps to the earlier one.
      const std::uint64_t base = t / period_ps;
      const std::uint64_t rem = t - base * period_ps;
      const std::uint64_t slot = (2 * rem <= period_ps) ? base : base + 1;
      if (slot >= n_slots) {
        result.diag.out_of_span += 1;
        if (result.diag.suspect_lines.size() < 16) {
          result.diag.suspect_lines.push_back(dets.line_no);
        }
        continue;
      }
      cur = Pending{true, slot, id};
      return;
    }
  };
  advance();

  std::vector<DetectorId> clicks;
  for (std::uint64_t slot = 0; slot < n_slots; ++slot) {
    if (!alice.next(line)) {
      alice.fail("file ends early: trace expects " + std::string(io::u64_str(n_slots)) +
                 " slots");
    }
    const AliceEntry entry = parse_alice(line, slot, alice);
    const std::size_t bin = static_cast<std::size_t>(slot / trace.pulses_per_bin);
    BinRecord& rec = result.bins[bin];
    rec.sent += 1;
    rec.sent_bk[entry.basis][entry.k] += 1;

    clicks.clear();
    while (cur.valid && cur.slot == slot) {
      clicks.push_back(cur.det);
      advance();
    }
    if (clicks.empty()) continue;

    if (clicks.size() > 1) result.diag.double_clicks += 1;
    std::sort(clicks.begin(), clicks.end());
    clicks.erase(std::unique(clicks.begin(), clicks.end()), clicks.end());
    DetectorId chosen = clicks[0];
    if (clicks.size() > 1) {
      kernels::PhiloxStream stream(seed, kernels::domain_tape, slot);
      const double u = stream.next_u01();
      auto idx = static_cast<std::size_t>(u * static_cast<double>(clicks.size()));
      if (idx >= clicks.size()) idx = clicks.size() - 1;
      chosen = clicks[idx];
    }

    if (static_cast<int>(basis_of(chosen)) != entry.basis) {
      result.diag.unmatched += 1;
      continue;
    }
    rec.n_bk[entry.basis][entry.k] += 1;
    if (bit_of(chosen) != entry.bit) rec.m_bk[entry.basis][entry.k] += 1;
  }
  if (alice.next(line)) {
    alice.fail("more slots than the trace (" + std::string(io::u64_str(n_slots)) +
               ") allows");
  }
  // Drain any detections beyond the last slot so they are diagnosed too.
  while (cur.valid) advance();

  for (const auto& rec : result.bins) result.tally.add(rec);
  return result;
}

void write_synthetic_tapes(const SimResult& sim, const SourceParams& source,
                           const TransmittanceTrace& trace,
                           const std::string& alice_path,
                           const std::string& detection_path) {
  const std::uint64_t period_ps = static_cast<std::uint64_t>(
      std::llround(1e12 / source.rep_rate));
  // One line per pulse: the alice tape can dwarf memory, so stream it out in
  // bounded chunks instead of assembling the whole file.
  io::AtomicWriter alice(alice_path);
  io::AtomicWriter dets(detection_path);
  std::string abuf = "slot,basis,intensity_index,bit\n";
  std::string dbuf = "timestamp_ps,detector\n";
  constexpr std::size_t flush_bytes = std::size_t{4} << 20;

  const char* correct_det[2] = {"H", "D"}; // bit 0 in each basis
  const char* error_det[2] = {"V", "A"};   // bit 1

  char line[64];
  std::uint64_t slot = 0;
  for (const auto& rec : sim.bins) {
    for (int b = 0; b < 2; ++b) {
      for (int k = 0; k < 3; ++k) {
        const char basis_ch = b == 0 ? 'X' : 'Z';
        for (std::uint32_t i = 0; i < rec.sent_bk[b][k]; ++i, ++slot) {
          int len = std::snprintf(line, sizeof(line), "%llu,%c,%d,0\n",
                                  static_cast<unsigned long long>(slot),
                                  basis_ch, k + 1);
          abuf.append(line, static_cast<std::size_t>(len));
          if (i < rec.n_bk[b][k]) {
            const bool is_error = i < rec.m_bk[b][k];
            len = std::snprintf(
                line, sizeof(line), "%llu,%s\n",
                static_cast<unsigned long long>(slot * period_ps),
                is_error ? error_det[b] : correct_det[b]);
            dbuf.append(line, static_cast<std::size_t>(len));
          }
          if (abuf.size() >= flush_bytes) {
            alice.append(abuf);
            abuf.clear();
          }
          if (dbuf.size() >= flush_bytes) {
            dets.append(dbuf);
            dbuf.clear();
          }
        }
      }
    }
  }
  (void)trace;
  alice.append(abuf);
  dets.append(dbuf);
  alice.commit();
  dets.commit();
}

} // namespace fadekey
