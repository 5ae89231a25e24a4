#pragma once

// Independent reference implementations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <boost/math/distributions/binomial.hpp>

#include "p2pbackup/sched.hpp"

namespace oracle {

using p2pbackup::Direction;
using p2pbackup::TransferProblem;

struct BruteForce {
  std::int64_t max_fragments = 0;             // best count using slots < horizon
  std::optional<std::int64_t> min_completion;  // over schedules with >= x entries
};

// Enumerates every assignment of each remote peer to "unused" or to one slot
// where both ends are online, respecting the owner's per-slot rate. Only
// valid for per_peer_cap = 1 and peer_rate >= 1.
inline BruteForce enumerate_schedules(const TransferProblem& p, std::size_t horizon) {
  std::vector<std::size_t> peers;
  for (std::size_t i = 0; i < p.matrix.num_peers(); ++i) {
    if (i == p.owner) continue;
    if (p.direction == Direction::restore &&
        std::find(p.storage_set.begin(), p.storage_set.end(), i) == p.storage_set.end())
      continue;
    peers.push_back(i);
  }
  std::vector<std::int64_t> used(horizon, 0);
  BruteForce out;
  auto rec = [&](auto&& self, std::size_t idx, std::int64_t count, std::int64_t last) -> void {
    if (idx == peers.size()) {
      out.max_fragments = std::max(out.max_fragments, count);
      if (count >= p.x && count > 0) {
        if (!out.min_completion || last < *out.min_completion) out.min_completion = last;
      }
      return;
    }
    self(self, idx + 1, count, last);
    const auto peer = peers[idx];
    for (std::size_t t = 0; t < horizon; ++t) {
      if (!p.matrix.online(p.owner, t) || !p.matrix.online(peer, t)) continue;
      if (used[t] >= p.owner_rate) continue;
      ++used[t];
      self(self, idx + 1, count + 1, std::max<std::int64_t>(last, static_cast<std::int64_t>(t) + 1));
      --used[t];
    }
  };
  rec(rec, 0, 0, 0);
  return out;
}

// P(X >= at_least), X ~ Binomial(n, p), via Boost.
inline double binomial_tail(std::int64_t n, std::int64_t at_least, double p) {
  if (at_least <= 0) return 1.0;
  if (at_least > n) return 0.0;
  boost::math::binomial_distribution<double> dist(static_cast<double>(n), p);
  return boost::math::cdf(boost::math::complement(dist, static_cast<double>(at_least - 1)));
}

// Linear scan for the smallest n with P(Bin(n, a) >= k) >= target.
inline std::int64_t fixed_n_linear(std::int64_t k, double a, double target) {
  for (std::int64_t n = k;; ++n)
    if (binomial_tail(n, k, a) >= target) return n;
}

// Fraction of trials in which more than n-k of n exponential lifetimes end before t.
inline double monte_carlo_loss(std::int64_t n, std::int64_t k, double t, double mean,
                               std::size_t trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> life(1.0 / mean);
  std::size_t lost = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    std::int64_t dead = 0;
    for (std::int64_t j = 0; j < n; ++j) dead += life(rng) < t;
    lost += dead > n - k;
  }
  return static_cast<double>(lost) / static_cast<double>(trials);
}

}  // namespace oracle
