#include "fadekey/postselect.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "fadekey/kernels/api.hpp"
#include "fadekey/kernels/philox.hpp"

namespace fadekey {

std::vector<double> ThresholdPolicy::default_grid() {
  std::vector<double> grid(40);
  for (int i = 0; i < 40; ++i) {
    grid[static_cast<std::size_t>(i)] =
        std::pow(10.0, -5.0 + 3.0 * static_cast<double>(i) / 39.0);
  }
  return grid;
}

ThresholdPolicy ThresholdPolicy::prefixed(double eta_t) {
  ThresholdPolicy p;
  p.mode = Mode::prefixed;
  p.eta_t = eta_t;
  p.validate();
  return p;
}

ThresholdPolicy ThresholdPolicy::from_name(const std::string& name) {
  if (name == "paper-prts") return prefixed(3e-4);
  if (name == "adaptive") {
    ThresholdPolicy p;
    p.mode = Mode::adaptive;
    p.grid = default_grid();
    return p;
  }
  throw std::invalid_argument("unknown threshold policy: " + name +
                              " (expected paper-prts or adaptive)");
}

void ThresholdPolicy::validate() const {
  if (mode == Mode::prefixed) {
    if (!(eta_t >= 0.0) || !(eta_t < 1.0)) {
      throw std::invalid_argument("threshold eta_t must be in [0, 1)");
    }
    return;
  }
  const auto& g = grid.empty() ? default_grid() : grid;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(g[i] > 0.0) || !(g[i] < 1.0)) {
      throw std::invalid_argument("threshold grid values must be in (0, 1)");
    }
    if (i > 0 && !(g[i] > g[i - 1])) {
      throw std::invalid_argument("threshold grid must be strictly increasing");
    }
  }
}

const char* to_string(RateStatus s) {
  switch (s) {
    case RateStatus::ok: return "ok";
    case RateStatus::empty_post_selection: return "empty-post-selection";
    case RateStatus::no_sifted_data: return "no-sifted-data";
    case RateStatus::estimation_failed: return "estimation-failed";
  }
  return "unknown";
}

PostSelection filter_bins(const std::vector<BinRecord>& bins, double eta_t) {
  PostSelection out;
  double eta_weighted = 0.0;
  for (const auto& rec : bins) {
    if (rec.eta < eta_t) continue;
    out.tally.add(rec);
    out.n_post += rec.sent;
    eta_weighted += rec.eta * static_cast<double>(rec.sent);
  }
  if (out.n_post == 0) {
    out.empty = true;
    return out;
  }
  out.eta_avg = eta_weighted / static_cast<double>(out.n_post);
  return out;
}

namespace {

RateStatus status_from(KeyStatus s) {
  switch (s) {
    case KeyStatus::ok: return RateStatus::ok;
    case KeyStatus::no_sifted_data: return RateStatus::no_sifted_data;
    case KeyStatus::estimation_failed: return RateStatus::estimation_failed;
  }
  return RateStatus::ok;
}

SecureRate rate_from_tallies(const TallyReal& tallies, double n_post,
                             double eta_avg, double n_total,
                             const SourceParams& source,
                             const SecurityBudget& budget) {
  SecureRate out;
  out.n_post = n_post;
  out.eta_avg = eta_avg;
  const DecoyEstimates est = decoy_bounds(tallies, source, budget, true);
  const KeyLength l = key_length(tallies, est, budget);
  out.bits = l.bits;
  out.status = status_from(l.status);
  out.r_sec = static_cast<double>(l.bits) / n_total;
  return out;
}

} // namespace

SecureRate secure_rate(const std::vector<BinRecord>& bins, double eta_t,
                       const SourceParams& source, const SecurityBudget& budget) {
  if (bins.empty()) {
    throw std::invalid_argument("secure_rate needs at least one bin");
  }
  double n_total = 0.0;
  for (const auto& rec : bins) n_total += static_cast<double>(rec.sent);
  const PostSelection post = filter_bins(bins, eta_t);
  if (post.empty) {
    SecureRate out;
    out.status = RateStatus::empty_post_selection;
    return out;
  }
  return rate_from_tallies(TallyReal::from(post.tally),
                           static_cast<double>(post.n_post), post.eta_avg,
                           n_total, source, budget);
}

SweepResult arts_sweep(const std::vector<BinRecord>& bins,
                       const std::vector<double>& grid,
                       const SourceParams& source, const SecurityBudget& budget,
                       int threads) {
  if (grid.empty()) {
    throw std::invalid_argument("threshold sweep needs a non-empty grid");
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw std::invalid_argument("threshold grid must be strictly increasing");
    }
  }

  SweepResult result;
  result.points.resize(grid.size());

  int n_threads = threads;
  if (n_threads <= 0) {
    n_threads = static_cast<int>(std::thread::hardware_concurrency());
    if (n_threads <= 0) n_threads = 1;
  }
  n_threads = static_cast<int>(std::min<std::size_t>(
      static_cast<std::size_t>(n_threads), grid.size()));

  auto eval_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      result.points[i].threshold = grid[i];
      result.points[i].rate = secure_rate(bins, grid[i], source, budget);
    }
  };

  if (n_threads == 1) {
    eval_range(0, grid.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t step =
        (grid.size() + static_cast<std::size_t>(n_threads) - 1) /
        static_cast<std::size_t>(n_threads);
    for (int t = 0; t < n_threads; ++t) {
      const std::size_t lo = static_cast<std::size_t>(t) * step;
      const std::size_t hi = std::min(grid.size(), lo + step);
      if (lo < hi) pool.emplace_back(eval_range, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  // Ascending scan with strict improvement: ties keep the smallest threshold.
  for (const auto& point : result.points) {
    if (point.rate.r_sec > 0.0 && point.rate.r_sec > result.best_rate) {
      result.best_rate = point.rate.r_sec;
      result.best_threshold = point.threshold;
      result.found = true;
    }
  }
  return result;
}

SecureRate predicted_rate(const ChannelModel& model, double eta_t,
                          const SourceParams& source, const DetectorSuite& suite,
                          const SecurityBudget& budget, double n_pulses) {
  source.validate();
  suite.validate();
  budget.validate();
  if (!(n_pulses > 0.0)) {
    throw std::invalid_argument("predicted_rate needs a positive pulse count");
  }

  const TruncatedStats stats = truncated_stats(model, eta_t);
  if (stats.empty) {
    SecureRate out;
    out.status = RateStatus::empty_post_selection;
    return out;
  }
  const double n_post = n_pulses * stats.survival;
  const GainModel gm(source, suite);
  const double alice_q[2] = {source.q_x, 1.0 - source.q_x};
  const double bob_q[2] = {source.bob_basis_prob(Basis::x),
                           source.bob_basis_prob(Basis::z)};

  TallyReal tallies;
  tallies.pulses = n_post;
  for (int b = 0; b < 2; ++b) {
    const Basis basis = static_cast<Basis>(b);
    for (int k = 0; k < 3; ++k) {
      const double sifted = n_post * alice_q[b] * bob_q[b] * source.p_mu[k];
      tallies.clicks[b][k] = sifted * gm.gain(basis, k, stats.eta_avg);
      tallies.errors[b][k] = sifted * gm.error_rate(basis, k, stats.eta_avg);
    }
  }
  return rate_from_tallies(tallies, n_post, stats.eta_avg, n_pulses, source,
                           budget);
}

namespace {

// Search coordinates, each normalized to [0, 1]:
//   q_x in [0.1, 0.95]; mu1 in [0.05, 1]; mu2 = ratio*mu1, ratio in
//   [0.01, 0.9]; p1, p2 in [1e-4, 0.998] with p1 + p2 <= 0.999.
struct SearchPoint {
  double v[5];
};

constexpr double box_lo[5] = {0.10, 0.05, 0.01, 1e-4, 1e-4};
constexpr double box_hi[5] = {0.95, 1.00, 0.90, 0.998, 0.998};

SourceParams decode(const SearchPoint& x, double rep_rate) {
  double raw[5];
  for (int d = 0; d < 5; ++d) {
    double t = x.v[d];
    if (t < 0.0) t = 0.0;
    if (t > 1.0) t = 1.0;
    raw[d] = box_lo[d] + t * (box_hi[d] - box_lo[d]);
  }
  double p1 = raw[3];
  double p2 = raw[4];
  const double mass = p1 + p2;
  if (mass > 0.999) {
    p1 *= 0.999 / mass;
    p2 *= 0.999 / mass;
  }
  SourceParams s{};
  s.q_x = raw[0];
  s.mu[0] = raw[1];
  s.mu[1] = raw[2] * raw[1];
  s.mu[2] = 0.0;
  s.p_mu = {p1, p2, 1.0 - p1 - p2};
  s.rep_rate = rep_rate;
  return s;
}

} // namespace

OptimizeResult optimize_params(const ChannelModel& model,
                               const DetectorSuite& suite,
                               const SecurityBudget& budget, double n_pulses,
                               double eta_t, double rep_rate,
                               std::uint64_t seed, int restarts) {
  suite.validate();
  budget.validate();
  if (!(n_pulses > 0.0)) {
    throw std::invalid_argument("optimize_params needs a positive pulse count");
  }
  if (restarts < 0) {
    throw std::invalid_argument("optimize_params restarts must be >= 0");
  }

  auto objective = [&](const SearchPoint& x) {
    const SourceParams s = decode(x, rep_rate);
    return predicted_rate(model, eta_t, s, suite, budget, n_pulses).r_sec;
  };

  // Lexicographic tie-break on the decoded parameters keeps the result
  // independent of evaluation order among equal maxima.
  auto better = [&](double ra, const SearchPoint& a, double rb,
                    const SearchPoint& b) {
    if (ra != rb) return ra > rb;
    const SourceParams sa = decode(a, rep_rate);
    const SourceParams sb = decode(b, rep_rate);
    if (sa.q_x != sb.q_x) return sa.q_x < sb.q_x;
    if (sa.mu[0] != sb.mu[0]) return sa.mu[0] < sb.mu[0];
    if (sa.mu[1] != sb.mu[1]) return sa.mu[1] < sb.mu[1];
    if (sa.p_mu[0] != sb.p_mu[0]) return sa.p_mu[0] < sb.p_mu[0];
    return sa.p_mu[1] < sb.p_mu[1];
  };

  std::vector<SearchPoint> starts;
  for (double q : {0.55, 0.8, 0.92}) {
    for (double m1 : {0.3, 0.5, 0.75}) {
      for (double r : {0.1, 0.3}) {
        for (double p1 : {0.35, 0.6, 0.85}) {
          for (double p2 : {0.08, 0.2}) {
            SearchPoint x{};
            const double vals[5] = {q, m1, r, p1, p2};
            for (int d = 0; d < 5; ++d) {
              x.v[d] = (vals[d] - box_lo[d]) / (box_hi[d] - box_lo[d]);
            }
            starts.push_back(x);
          }
        }
      }
    }
  }
  for (int i = 0; i < restarts; ++i) {
    kernels::PhiloxStream stream(seed, kernels::domain_opt,
                                 static_cast<std::uint64_t>(i));
    SearchPoint x{};
    for (int d = 0; d < 5; ++d) x.v[d] = stream.next_u01();
    starts.push_back(x);
  }

  SearchPoint best{};
  double best_rate = -1.0;
  for (const auto& start : starts) {
    SearchPoint x = start;
    double fx = objective(x);
    double h = 0.25;
    while (h >= 1e-4) {
      SearchPoint cand = x;
      double fc = fx;
      bool improved = false;
      for (int d = 0; d < 5; ++d) {
        for (double sign : {+1.0, -1.0}) {
          SearchPoint y = x;
          y.v[d] += sign * h;
          if (y.v[d] < 0.0) y.v[d] = 0.0;
          if (y.v[d] > 1.0) y.v[d] = 1.0;
          const double fy = objective(y);
          if (fy > fc) {
            fc = fy;
            cand = y;
            improved = true;
          }
        }
      }
      if (improved) {
        x = cand;
        fx = fc;
      } else {
        h *= 0.5;
      }
    }
    if (best_rate < 0.0 || better(fx, x, best_rate, best)) {
      best_rate = fx;
      best = x;
    }
  }

  OptimizeResult out;
  out.params = decode(best, rep_rate);
  const SecureRate final_rate =
      predicted_rate(model, eta_t, out.params, suite, budget, n_pulses);
  out.r_sec = final_rate.r_sec;
  out.bits = final_rate.bits;
  out.feasible = final_rate.r_sec > 0.0;
  return out;
}

} // namespace fadekey
