#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "fadekey/devices.hpp"
#include "fadekey/io.hpp"
#include "fadekey/montecarlo.hpp"
#include "fadekey/turbulence.hpp"
#include "oracles.hpp"

using namespace fadekey;

namespace {

SourceParams table_source() {
  SourceParams s{};
  s.q_x = 0.677;
  s.mu = {0.701, 0.281, 0.0};
  s.p_mu = {0.246, 0.490, 0.264};
  s.rep_rate = 1e7;
  return s;
}

TransmittanceTrace flat_trace(double eta, std::size_t n_bins,
                              std::uint64_t ppb, double bin_duration = 1e-3) {
  TransmittanceTrace t;
  t.bins.assign(n_bins, eta);
  t.bin_duration = bin_duration;
  t.pulses_per_bin = ppb;
  t.seed = 0;
  return t;
}

bool same_tally(const TallyTable& a, const TallyTable& b) {
  if (a.pulses != b.pulses) return false;
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 3; ++k) {
      if (a.sent[i][k] != b.sent[i][k]) return false;
      if (a.clicks[i][k] != b.clicks[i][k]) return false;
      if (a.errors[i][k] != b.errors[i][k]) return false;
    }
  }
  return true;
}

bool same_bins(const SimResult& a, const SimResult& b) {
  if (a.bins.size() != b.bins.size()) return false;
  for (std::size_t i = 0; i < a.bins.size(); ++i) {
    const BinRecord& x = a.bins[i];
    const BinRecord& y = b.bins[i];
    if (x.eta != y.eta || x.sent != y.sent) return false;
    if (x.sent_bk != y.sent_bk || x.n_bk != y.n_bk || x.m_bk != y.m_bk) {
      return false;
    }
  }
  return true;
}

// Run fn and require it to throw E with `needle` somewhere in the message.
template <typename E = std::runtime_error>
void expect_error(const std::function<void()>& fn, const std::string& needle) {
  bool threw = false;
  try {
    fn();
  } catch (const E& ex) {
    threw = true;
    INFO("message: ", ex.what());
    CHECK(std::string(ex.what()).find(needle) != std::string::npos);
  }
  CHECK_MESSAGE(threw, "expected an exception mentioning '", needle, "'");
}

struct TapePair {
  std::string alice = "/tmp/fadekey_mc_alice.csv";
  std::string dets = "/tmp/fadekey_mc_dets.csv";

  TapePair(const std::string& alice_body, const std::string& det_body) {
    io::atomic_write(alice, "slot,basis,intensity_index,bit\n" + alice_body);
    io::atomic_write(dets, "timestamp_ps,detector\n" + det_body);
  }
  ~TapePair() {
    std::remove(alice.c_str());
    std::remove(dets.c_str());
  }
};

} // namespace

TEST_CASE("tallies conserve counts exactly across bins") {
  const ChannelModel model(1e-3, 1.0);
  const TransmittanceTrace trace = sample_trace(model, 500, 1e-3, 2000, 21);
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");
  const SimResult sim = simulate_bins(trace, src, suite, 7);

  REQUIRE(sim.bins.size() == 500);
  TallyTable rebuilt;
  for (std::size_t i = 0; i < sim.bins.size(); ++i) {
    const BinRecord& rec = sim.bins[i];
    CHECK(rec.eta == trace.bins[i]);
    CHECK(rec.sent == 2000);
    std::uint64_t sum = 0;
    for (int b = 0; b < 2; ++b) {
      for (int k = 0; k < 3; ++k) {
        CHECK(rec.m_bk[b][k] <= rec.n_bk[b][k]);
        CHECK(rec.n_bk[b][k] <= rec.sent_bk[b][k]);
        sum += rec.sent_bk[b][k];
      }
    }
    CHECK(sum == rec.sent);
    rebuilt.add(rec);
  }
  CHECK(same_tally(rebuilt, sim.tally));
  CHECK(sim.tally.pulses == 500ull * 2000ull);
  CHECK(sim.diag.unmatched == 0);
  CHECK(sim.diag.out_of_span == 0);
}

TEST_CASE("simulation is deterministic and thread-schedule independent") {
  const ChannelModel model(1e-3, 1.0);
  const TransmittanceTrace trace = sample_trace(model, 1000, 1e-3, 100, 5);
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");

  const SimResult one = simulate_bins(trace, src, suite, 99, 1);
  for (int threads : {1, 2, 3, 0}) {
    const SimResult again = simulate_bins(trace, src, suite, 99, threads);
    INFO("threads=", threads);
    CHECK(same_bins(one, again));
    CHECK(same_tally(one.tally, again.tally));
  }
  const SimResult other = simulate_bins(trace, src, suite, 100, 2);
  CHECK_FALSE(same_tally(one.tally, other.tally));
}

TEST_CASE("dark, aligned, empty pulses produce all-zero tallies") {
  // No background, no misalignment, and vacuum-only intensities would fail
  // validation (mu must decrease), so use real intensities on a detector
  // suite with zero efficiency paths closed: y0 = 0, b = 0, e_mis = 0 makes
  // vacuum silent and errors impossible; photon clicks remain.
  DetectorSuite quiet = DetectorSuite::builtin("new-snspd");
  for (auto& d : quiet.det) {
    d.y0 = 0.0;
    d.b = 0.0;
  }
  quiet.e_mis = 0.0;
  const SourceParams src = table_source();
  const SimResult sim = simulate_bins(flat_trace(1e-3, 50, 10000), src, quiet, 3);

  for (const auto& rec : sim.bins) {
    for (int b = 0; b < 2; ++b) {
      CHECK(rec.n_bk[b][2] == 0); // vacuum pulses cannot click
      for (int k = 0; k < 3; ++k) CHECK(rec.m_bk[b][k] == 0);
    }
  }
  CHECK(sim.tally.clicks[0][2] == 0);
  CHECK(sim.tally.clicks[1][2] == 0);
  CHECK(sim.tally.errors_in(Basis::x) == 0);
  CHECK(sim.tally.errors_in(Basis::z) == 0);
}

TEST_CASE("binned gains track the closed forms at 1e8 pulses") {
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");
  const double eta = 1e-2;
  const SimResult sim = simulate_bins(flat_trace(eta, 100, 1000000), src, suite, 11);
  const GainModel gm(src, suite);

  for (int b = 0; b < 2; ++b) {
    const Basis basis = static_cast<Basis>(b);
    const double qb = src.bob_basis_prob(basis);
    for (int k = 0; k < 3; ++k) {
      const double sent = static_cast<double>(sim.tally.sent[b][k]);
      const double n = static_cast<double>(sim.tally.clicks[b][k]);
      const double m = static_cast<double>(sim.tally.errors[b][k]);
      REQUIRE(sent > 0);

      // Detection probability per sent pulse folds in Bob's basis choice.
      const double p_det = qb * gm.gain(basis, k, eta);
      const double sd_det = std::sqrt(p_det * (1.0 - p_det) / sent);
      INFO("basis=", b, " k=", k);
      CHECK(std::fabs(n / sent - p_det) < 4.0 * sd_det);

      if (n > 0) {
        const double q = gm.gain(basis, k, eta);
        const double e_cond = gm.error_rate(basis, k, eta) / q;
        const double sd_err = std::sqrt(e_cond * (1.0 - e_cond) / n);
        CHECK(std::fabs(m / n - e_cond) < 4.0 * sd_err);
      }
    }
  }
}

TEST_CASE("sifted fraction over a fading trace matches the quadrature oracle") {
  const ChannelModel model(1e-4, 1.0); // 40 dB mean loss
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");
  const GainModel gm(src, suite);

  const std::size_t n_bins = 100000;
  const std::uint64_t ppb = 10000;
  const TransmittanceTrace trace = sample_trace(model, n_bins, 1e-3, ppb, 31);
  const SimResult sim = simulate_bins(trace, src, suite, 77);

  // Analytic sifted-X click probability per sent pulse, integrated over the
  // fade distribution (log-space quadrature).
  const double qx2 = src.q_x * src.q_x;
  const auto p_click = [&](double eta) {
    double p = 0.0;
    for (int k = 0; k < 3; ++k) {
      p += src.p_mu[k] * gm.gain(Basis::x, k, eta);
    }
    return qx2 * p;
  };
  const auto mean_term = [&](double u) {
    const double eta = std::exp(u);
    return p_click(eta) * pdf(model, eta) * eta;
  };
  const auto square_term = [&](double u) {
    const double eta = std::exp(u);
    const double p = p_click(eta);
    return p * p * pdf(model, eta) * eta;
  };
  const double p_bar = oracle::integrate(mean_term, std::log(1e-12), 0.0);
  const double p_sq = oracle::integrate(square_term, std::log(1e-12), 0.0);

  // Two fluctuation sources: the finite trace sample of p(eta), and the
  // binomial click noise given the trace.
  const double n_pulses = static_cast<double>(n_bins) * static_cast<double>(ppb);
  const double var = (p_sq - p_bar * p_bar) / static_cast<double>(n_bins) +
                     p_bar / n_pulses;
  const double frac =
      static_cast<double>(sim.tally.clicks_in(Basis::x)) / n_pulses;
  CHECK(std::fabs(frac - p_bar) < 4.0 * std::sqrt(var));
}

TEST_CASE("binned and brute-force samplers agree in distribution") {
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");
  const std::uint64_t pulses = 100000;

  for (double eta : {1e-2, 3e-4}) {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
      const SimResult binned =
          simulate_bins(flat_trace(eta, 1, pulses), src, suite, seed);
      const BruteBin brute = brute_force_bin(eta, pulses, src, suite, seed);

      // 18 cells: per (basis, intensity) the pulse splits into undetected,
      // detected-correct, detected-error.
      std::vector<std::uint64_t> a, b;
      for (int bi = 0; bi < 2; ++bi) {
        for (int k = 0; k < 3; ++k) {
          const BinRecord& r = binned.bins[0];
          a.push_back(r.sent_bk[bi][k] - r.n_bk[bi][k]);
          a.push_back(r.n_bk[bi][k] - r.m_bk[bi][k]);
          a.push_back(r.m_bk[bi][k]);
          const BinRecord& s = brute.rec;
          b.push_back(s.sent_bk[bi][k] - s.n_bk[bi][k]);
          b.push_back(s.n_bk[bi][k] - s.m_bk[bi][k]);
          b.push_back(s.m_bk[bi][k]);
        }
      }
      const oracle::TwoSampleChi2 test = oracle::two_sample_chi2(a, b);
      INFO("eta=", eta, " seed=", seed, " stat=", test.stat, " dof=", test.dof);
      CHECK(test.pvalue > 1e-3);
    }
  }
}

TEST_CASE("brute-force means match the closed forms over 200 repetitions") {
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("old-spad");
  const double eta = 0.5;
  const std::uint64_t per_rep = 5000;
  const int reps = 200;

  TallyTable total;
  std::uint64_t unmatched = 0;
  for (int r = 0; r < reps; ++r) {
    const BruteBin bin = brute_force_bin(eta, per_rep, src, suite, 1000 + r);
    total.add(bin.rec);
    unmatched += bin.unmatched;
  }
  const double sent_total = static_cast<double>(total.pulses);
  REQUIRE(total.pulses == per_rep * static_cast<std::uint64_t>(reps));

  // Basis-mismatch rate: 2 q_x (1 - q_x).
  const double p_mismatch = 2.0 * src.q_x * (1.0 - src.q_x);
  const double sd_mis = std::sqrt(p_mismatch * (1 - p_mismatch) / sent_total);
  CHECK(std::fabs(static_cast<double>(unmatched) / sent_total - p_mismatch) <
        4.0 * sd_mis);

  const GainModel gm(src, suite);
  for (int b = 0; b < 2; ++b) {
    const Basis basis = static_cast<Basis>(b);
    const double qb = src.bob_basis_prob(basis);
    for (int k = 0; k < 3; ++k) {
      const double sent = static_cast<double>(total.sent[b][k]);
      const double n = static_cast<double>(total.clicks[b][k]);
      const double m = static_cast<double>(total.errors[b][k]);
      const double p_det = qb * gm.gain(basis, k, eta);
      const double sd_det = std::sqrt(p_det * (1 - p_det) / sent);
      INFO("basis=", b, " k=", k);
      CHECK(std::fabs(n / sent - p_det) < 4.0 * sd_det);
      if (n > 30) {
        const double e_cond =
            gm.error_rate(basis, k, eta) / gm.gain(basis, k, eta);
        const double sd_err = std::sqrt(e_cond * (1 - e_cond) / n);
        CHECK(std::fabs(m / n - e_cond) < 4.0 * sd_err);
      }
    }
  }
}

TEST_CASE("brute-force trivial limits") {
  SourceParams src = table_source();
  DetectorSuite dark = DetectorSuite::builtin("new-snspd");
  for (auto& d : dark.det) {
    d.y0 = 0.0;
    d.b = 0.0;
  }

  // Vanishing transmittance and no background: nothing clicks.
  const BruteBin none = brute_force_bin(1e-15, 100000, src, dark, 4);
  for (int b = 0; b < 2; ++b) {
    for (int k = 0; k < 3; ++k) CHECK(none.rec.n_bk[b][k] == 0);
  }

  // Bright limit: unit-efficiency chain, no misalignment, no background.
  // Every sifted non-vacuum pulse with at least one photon clicks on the
  // correct detector, so errors are exactly zero and the gain matches
  // 1 - exp(-mu) through the closed form.
  DetectorSuite perfect = dark;
  for (auto& d : perfect.det) d.eta_det = 1.0;
  perfect.eta_bob = 1.0;
  perfect.e_mis = 0.0;
  SourceParams bright = src;
  bright.mu = {1.0, 0.3, 0.0};
  const BruteBin lit = brute_force_bin(1.0, 100000, bright, perfect, 9);
  for (int b = 0; b < 2; ++b) {
    const Basis basis = static_cast<Basis>(b);
    const double qb = bright.bob_basis_prob(basis);
    CHECK(lit.rec.n_bk[b][2] == 0); // vacuum stays silent
    for (int k = 0; k < 3; ++k) {
      CHECK(lit.rec.m_bk[b][k] == 0); // no error channel exists
      if (k == 2) continue;
      const double sent = static_cast<double>(lit.rec.sent_bk[b][k]);
      const double p_det = qb * (1.0 - std::exp(-bright.mu[k]));
      const double sd = std::sqrt(p_det * (1 - p_det) / sent);
      CHECK(std::fabs(static_cast<double>(lit.rec.n_bk[b][k]) / sent - p_det) <
            4.0 * sd);
    }
  }
}

TEST_CASE("brute-force double clicks resolve by a fair coin") {
  // Choke the signal path and crank both dark floors: clicks come only from
  // backgrounds, so the assigned bit is independent of Alice's and the
  // sifted error rate must sit at one half.
  SourceParams src = table_source();
  DetectorSuite noisy = DetectorSuite::builtin("new-snspd");
  for (auto& d : noisy.det) d.y0 = 0.25;
  const BruteBin bin = brute_force_bin(1e-15, 200000, src, noisy, 6);

  std::uint64_t n = 0, m = 0;
  for (int b = 0; b < 2; ++b) {
    for (int k = 0; k < 3; ++k) {
      n += bin.rec.n_bk[b][k];
      m += bin.rec.m_bk[b][k];
    }
  }
  REQUIRE(n > 10000);
  const double sd = std::sqrt(0.25 / static_cast<double>(n));
  CHECK(std::fabs(static_cast<double>(m) / static_cast<double>(n) - 0.5) <
        4.0 * sd);
}

TEST_CASE("brute-force argument validation") {
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");
  CHECK_THROWS_AS(brute_force_bin(0.0, 100, src, suite, 1), std::invalid_argument);
  CHECK_THROWS_AS(brute_force_bin(1.5, 100, src, suite, 1), std::invalid_argument);
  CHECK_THROWS_AS(brute_force_bin(0.5, 0, src, suite, 1), std::invalid_argument);
  CHECK_THROWS_AS(brute_force_bin(0.5, 1000001, src, suite, 1),
                  std::invalid_argument);
}

TEST_CASE("simulate_bins argument validation") {
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");
  TransmittanceTrace trace;
  trace.bin_duration = 1e-3;
  trace.pulses_per_bin = 100;
  CHECK_THROWS_AS(simulate_bins(trace, src, suite, 1), std::invalid_argument);

  trace.bins = {1e-3};
  trace.pulses_per_bin = 0;
  CHECK_THROWS_AS(simulate_bins(trace, src, suite, 1), std::invalid_argument);
  trace.pulses_per_bin = 5000000000ull; // over the 32-bit bin counter
  CHECK_THROWS_AS(simulate_bins(trace, src, suite, 1), std::invalid_argument);

  trace.pulses_per_bin = 100;
  SourceParams bad = src;
  bad.q_x = 0.0;
  CHECK_THROWS_AS(simulate_bins(trace, bad, suite, 1), std::invalid_argument);
}

TEST_CASE("detections are drawn from true transmittance, eta from the estimate") {
  // A wildly wrong receiver estimate must not change the physics.
  TransmittanceTrace trace;
  trace.bins = {0.5};
  trace.observed = {1e-9};
  trace.bin_duration = 1e-3;
  trace.pulses_per_bin = 100000;
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");

  const SimResult sim = simulate_bins(trace, src, suite, 8);
  CHECK(sim.bins[0].eta == 1e-9);
  // At eta = 0.5 the signal gain is ~0.08; an eta of 1e-9 would give ~1e-6.
  CHECK(sim.tally.clicks_in(Basis::x) > 1000);
}

TEST_CASE("dead-time cap clips per-basis detections deterministically") {
  SourceParams src = table_source();
  src.rep_rate = 1e8; // dead_time * rep_rate = 900 for the old SPADs
  const DetectorSuite spad = DetectorSuite::builtin("old-spad");
  // 2 * floor(1e-3 / 9e-6) detections per basis per bin.
  const std::uint64_t cap = 222;

  const SimResult sim = simulate_bins(flat_trace(1.0, 40, 100000), src, spad, 13);
  CHECK(sim.diag.dead_time_capped == 40); // X saturates in every bin
  for (const auto& rec : sim.bins) {
    const std::uint64_t nx = std::uint64_t(rec.n_bk[0][0]) + rec.n_bk[0][1] +
                             rec.n_bk[0][2];
    const std::uint64_t nz = std::uint64_t(rec.n_bk[1][0]) + rec.n_bk[1][1] +
                             rec.n_bk[1][2];
    CHECK(nx == cap);  // raw X rate is ~610 clicks: always clipped, exactly
    CHECK(nz <= cap);  // Z rate is ~140: never clipped
    CHECK(nz > 80);
    for (int b = 0; b < 2; ++b) {
      for (int k = 0; k < 3; ++k) CHECK(rec.m_bk[b][k] <= rec.n_bk[b][k]);
    }
  }

  // Below one dead time per pulse period the cap must stay out of the way.
  SourceParams slow = table_source(); // 1e7 Hz: 80 ns dead time covers 0.8 pulses
  const DetectorSuite snspd = DetectorSuite::builtin("new-snspd");
  const SimResult free_run =
      simulate_bins(flat_trace(1.0, 20, 100000), slow, snspd, 13);
  CHECK(free_run.diag.dead_time_capped == 0);
}

TEST_CASE("tally add rejects malformed records and guards overflow") {
  BinRecord rec;
  rec.sent = 10;
  rec.sent_bk[0][0] = 10;
  rec.n_bk[0][0] = 4;
  rec.m_bk[0][0] = 5; // more errors than detections
  TallyTable t;
  CHECK_THROWS_AS(t.add(rec), std::invalid_argument);

  rec.m_bk[0][0] = 2;
  rec.n_bk[0][0] = 11; // more detections than pulses
  CHECK_THROWS_AS(t.add(rec), std::invalid_argument);

  rec.n_bk[0][0] = 4;
  rec.sent = 11; // category counts no longer sum to sent
  CHECK_THROWS_AS(t.add(rec), std::invalid_argument);

  rec.sent = 10;
  TallyTable fresh; // a throwing add aborts the run; no rollback is promised
  CHECK_NOTHROW(fresh.add(rec));
  CHECK(fresh.pulses == 10);
  CHECK(fresh.clicks[0][0] == 4);
  CHECK(fresh.errors[0][0] == 2);

  TallyTable big;
  big.pulses = 0xFFFFFFFFFFFFFFFFull - 5;
  CHECK_THROWS_AS(big.add(rec), std::overflow_error);
  CHECK(big.pulses == 0xFFFFFFFFFFFFFFFFull - 5); // overflow must not corrupt
  TallyTable other;
  other.pulses = 10;
  CHECK_THROWS_AS(big.merge(other), std::overflow_error);
}

TEST_CASE("diagnostics render as labeled rows") {
  Diagnostics d;
  d.unmatched = 3;
  d.double_clicks = 1;
  d.out_of_span = 2;
  d.dead_time_capped = 0;
  d.suspect_lines = {4, 9};
  const auto rows = d.rows();
  REQUIRE(rows.size() == 5);
  CHECK(rows[0].first == "unmatched");
  CHECK(rows[0].second == "3");
  CHECK(rows[1].second == "1");
  CHECK(rows[2].second == "2");
  CHECK(rows[3].second == "0");
  CHECK(rows[4].first == "suspect_lines");
  CHECK(rows[4].second == "4;9");
}

TEST_CASE("synthetic tapes round-trip to the generating tallies") {
  const ChannelModel model(1e-2, 1.0);
  const TransmittanceTrace trace = sample_trace(model, 50, 2e-3, 20000, 17);
  const SourceParams src = table_source(); // 1e7 Hz -> 100 ns slot period
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");
  const SimResult sim = simulate_bins(trace, src, suite, 23);
  REQUIRE(sim.tally.clicks_in(Basis::x) > 100);

  const std::string alice = "/tmp/fadekey_mc_rt_alice.csv";
  const std::string dets = "/tmp/fadekey_mc_rt_dets.csv";
  write_synthetic_tapes(sim, src, trace, alice, dets);
  const SimResult replay = ingest_event_tape(alice, dets, trace, src, suite, 55);

  CHECK(same_tally(replay.tally, sim.tally));
  CHECK(replay.diag.unmatched == 0);
  CHECK(replay.diag.double_clicks == 0);
  CHECK(replay.diag.out_of_span == 0);
  for (std::size_t i = 0; i < replay.bins.size(); ++i) {
    CHECK(replay.bins[i].eta == trace.bins[i]);
  }
  std::remove(alice.c_str());
  std::remove(dets.c_str());
}

TEST_CASE("empty detection tape yields zero clicks with N from the alice tape") {
  const TapePair tapes("0,X,1,0\n1,Z,2,1\n2,X,3,0\n3,Z,1,1\n", "");
  const TransmittanceTrace trace = flat_trace(1e-2, 1, 4, 4e-7);
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");

  const SimResult sim =
      ingest_event_tape(tapes.alice, tapes.dets, trace, src, suite, 1);
  CHECK(sim.tally.pulses == 4);
  CHECK(sim.tally.sent[0][0] == 1);
  CHECK(sim.tally.sent[1][1] == 1);
  CHECK(sim.tally.sent[0][2] == 1);
  CHECK(sim.tally.sent[1][0] == 1);
  CHECK(sim.tally.clicks_in(Basis::x) == 0);
  CHECK(sim.tally.clicks_in(Basis::z) == 0);
}

TEST_CASE("timestamps map to the nearest slot with midpoint ties going early") {
  // 100 ns period (1e7 Hz): slot k spans timestamps around k*1e5 ps.
  const TransmittanceTrace trace = flat_trace(1e-2, 1, 4, 4e-7);
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");

  // 50000 ps sits exactly between slots 0 and 1: must land in slot 0 (X,
  // matching H).  50001 ps crosses the midpoint: slot 1 (Z, H mismatches).
  // 250000 ps ties between slots 2 and 3: slot 2 records a D-bit error.
  // 360000 ps rounds up to slot 4, past the end of the tape: out of span.
  const TapePair tapes("0,X,1,0\n1,Z,1,0\n2,Z,2,1\n3,X,3,1\n",
                       "50000,H\n50001,H\n250000,D\n360000,D\n");
  const SimResult sim =
      ingest_event_tape(tapes.alice, tapes.dets, trace, src, suite, 2);

  CHECK(sim.tally.clicks[0][0] == 1); // slot 0: sifted, correct
  CHECK(sim.tally.errors[0][0] == 0);
  CHECK(sim.tally.clicks[1][1] == 1); // slot 2: sifted, wrong bit
  CHECK(sim.tally.errors[1][1] == 1);
  CHECK(sim.diag.unmatched == 1);     // slot 1: H against a Z pulse
  CHECK(sim.diag.out_of_span == 1);
  REQUIRE(sim.diag.suspect_lines.size() == 1);
  CHECK(sim.diag.suspect_lines[0] == 5); // 1-based line in the detection tape
}

TEST_CASE("double clicks are counted and resolve to a single candidate") {
  const TransmittanceTrace trace = flat_trace(1e-2, 1, 2, 2e-7);
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");

  // Three detections in slot 0, two of them on the same detector: the slot
  // resolves to exactly one click on H or V, never more.
  const TapePair tapes("0,X,1,0\n1,X,1,0\n", "100,H\n200,V\n300,H\n");
  const SimResult sim =
      ingest_event_tape(tapes.alice, tapes.dets, trace, src, suite, 3);
  CHECK(sim.diag.double_clicks == 1);
  CHECK(sim.tally.clicks[0][0] == 1);
  CHECK(sim.tally.clicks_in(Basis::x) + sim.diag.unmatched == 1);

  // The coin is seeded: replays are stable.
  const SimResult again =
      ingest_event_tape(tapes.alice, tapes.dets, trace, src, suite, 3);
  CHECK(same_tally(sim.tally, again.tally));
  CHECK(sim.tally.errors[0][0] == again.tally.errors[0][0]);
}

TEST_CASE("tape ingestion reports malformed input with line numbers") {
  const TransmittanceTrace trace = flat_trace(1e-2, 1, 2, 2e-7);
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");
  const auto run = [&](const std::string& alice_body, const std::string& det_body) {
    return [&, alice_body, det_body] {
      const TapePair tapes(alice_body, det_body);
      ingest_event_tape(tapes.alice, tapes.dets, trace, src, suite, 1);
    };
  };

  expect_error(run("0,Y,1,0\n1,X,1,0\n", ""), "line 2");
  expect_error(run("0,Y,1,0\n1,X,1,0\n", ""), "basis");
  expect_error(run("0,X,4,0\n1,X,1,0\n", ""), "intensity_index");
  expect_error(run("0,X,0,0\n1,X,1,0\n", ""), "intensity_index");
  expect_error(run("0,X,1,7\n1,X,1,0\n", ""), "bit");
  expect_error(run("0,X,1\n1,X,1,0\n", ""), "4 fields");
  expect_error(run("1,X,1,0\n0,X,1,0\n", ""), "slot out of order");
  expect_error(run("0,X,1,0\n", ""), "ends early");
  expect_error(run("0,X,1,0\n1,X,1,0\n2,X,1,0\n", ""), "more slots");
  expect_error(run("0,X,1,0\n1,X,1,0\n", "100,Q\n"), "detector");
  expect_error(run("0,X,1,0\n1,X,1,0\n", "100\n"), "2 fields");
  expect_error(run("0,X,1,0\n1,X,1,0\n", "abc,H\n"), "timestamp_ps");
  expect_error(run("0,X,1,0\n1,X,1,0\n", "60000,H\n50000,V\n"), "sorted");
  expect_error(run("0,X,1,0\n1,X,1,0\n", "60000,H\n50000,V\n"), "line 3");
}

TEST_CASE("tape ingestion validates headers and missing files") {
  const TransmittanceTrace trace = flat_trace(1e-2, 1, 2, 2e-7);
  const SourceParams src = table_source();
  const DetectorSuite suite = DetectorSuite::builtin("new-snspd");

  const std::string alice = "/tmp/fadekey_mc_hdr_alice.csv";
  const std::string dets = "/tmp/fadekey_mc_hdr_dets.csv";
  io::atomic_write(alice, "slot,basis,bit\n0,X,1,0\n");
  io::atomic_write(dets, "timestamp_ps,detector\n");
  expect_error([&] { ingest_event_tape(alice, dets, trace, src, suite, 1); },
               "expected header");

  io::atomic_write(alice, "");
  expect_error([&] { ingest_event_tape(alice, dets, trace, src, suite, 1); },
               "empty file");

  io::atomic_write(alice, "slot,basis,intensity_index,bit\n0,X,1,0\n1,X,1,0\n");
  io::atomic_write(dets, "time,detector\n");
  expect_error([&] { ingest_event_tape(alice, dets, trace, src, suite, 1); },
               "expected header");

  expect_error(
      [&] {
        ingest_event_tape("/tmp/fadekey_no_such_tape.csv", dets, trace, src,
                          suite, 1);
      },
      "cannot open");
  std::remove(alice.c_str());
  std::remove(dets.c_str());
}
