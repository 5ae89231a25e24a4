// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Usage: acceptance [AC1 AC2 ...]   (no arguments runs everything)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "p2pbackup/cli.hpp"
#include "p2pbackup/redundancy.hpp"
#include "p2pbackup/report.hpp"
#include "p2pbackup/sched.hpp"
#include "p2pbackup/sim.hpp"

using namespace p2pbackup;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double time_limit;  // seconds
  std::function<Outcome()> body;
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

// ---- AC1

Outcome fixed_redundancy_golden() {
  const auto n = fixed_redundancy_n(64, 0.36, 0.99);
  const double rate = static_cast<double>(n) / 64.0;
  return {n == 228 && rate == 3.5625,
          "n=" + std::to_string(n) + " rate=" + fmt(rate) + " expected n=228 rate=3.5625"};
}

// ---- AC2

Outcome small_instance() {
  const auto p = fixture::small_instance(3);
  const auto best = optimal_completion(p);
  const Schedule quoted{{{1, 0}, {3, 2}, {2, 6}}};
  const auto violations = validate_schedule(p, quoted);
  const auto quoted_slots = completion_time(quoted).slots;
  const bool ok = best.feasible && best.completion == 3 && violations.empty() &&
                  quoted_slots == 7 && validate_schedule(p, best.schedule).empty();
  return {ok, "O(3)=" + std::to_string(best.completion) + " quoted schedule violations=" +
                  std::to_string(violations.size()) + " completion=" +
                  std::to_string(quoted_slots)};
}

// ---- AC3

struct Mismatches {
  std::size_t instances = 0;
  std::size_t checks = 0;
  std::size_t bad = 0;
};

void compare_with_brute_force(const TransferProblem& base, Mismatches& m) {
  ++m.instances;
  const auto slots = base.matrix.num_slots();
  for (std::size_t t = 1; t <= slots; ++t) {
    ++m.checks;
    if (max_fragments(base, t).fragments != oracle::enumerate_schedules(base, t).max_fragments)
      ++m.bad;
  }
  for (std::int64_t x = 1; x <= 4; ++x) {
    auto p = base;
    p.x = x;
    const auto got = optimal_completion(p);
    const auto want = oracle::enumerate_schedules(p, slots).min_completion;
    ++m.checks;
    if (got.feasible != want.has_value() || (want && got.completion != *want)) ++m.bad;
  }
}

Outcome oracle_equivalence() {
  Mismatches m;
  // Every availability matrix with at most 12 cells within the size bounds.
  for (std::size_t peers = 2; peers <= 5; ++peers) {
    for (std::size_t slots = 1; slots <= 6 && peers * slots <= 12; ++slots) {
      const std::size_t cells = peers * slots;
      for (std::uint32_t mask = 0; mask < (1u << cells); ++mask) {
        std::vector<std::uint8_t> bits(cells);
        for (std::size_t c = 0; c < cells; ++c) bits[c] = (mask >> c) & 1u;
        TransferProblem p;
        p.matrix = AvailabilityMatrix(peers, slots, 3600, bits);
        compare_with_brute_force(p, m);
      }
    }
  }
  const std::size_t exhaustive = m.instances;
  // Random instances up to the full bounds, backups and restores.
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    TransferProblem p;
    const std::size_t peers = 2 + rng() % 4;
    const std::size_t slots = 1 + rng() % 6;
    p.matrix = fixture::random_matrix(rng, peers, slots, 0.3 + 0.4 * (rng() % 100) / 100.0);
    p.owner = rng() % peers;
    if (rng() % 3 == 0) {
      p.direction = Direction::restore;
      for (std::size_t j = 0; j < peers; ++j)
        if (j != p.owner && rng() % 2) p.storage_set.push_back(j);
      if (p.storage_set.empty()) p.storage_set.push_back((p.owner + 1) % peers);
    }
    compare_with_brute_force(p, m);
  }
  return {m.bad == 0, "exhaustive=" + std::to_string(exhaustive) + " random=" +
                          std::to_string(m.instances - exhaustive) + " checks=" +
                          std::to_string(m.checks) + " mismatches=" + std::to_string(m.bad)};
}

// ---- AC4

Outcome scheduling_convergence() {
  bool ok = true;
  std::ostringstream d;
  for (std::uint64_t seed : {1, 2, 3}) {
    SynthParams sp;
    sp.num_peers = 200;
    sp.num_slots = 24 * 7 * 3;
    SchedCompareParams cp;
    cp.seed = seed;
    const auto points = sched_compare(synth_trace(sp, seed), cp);
    for (std::int64_t x : {40, 60}) {
      double first = NAN, last = NAN, lowest = INFINITY;
      std::size_t count = 0;
      for (const auto& pt : points) {
        if (pt.x != x) continue;
        ++count;
        lowest = std::min(lowest, pt.random_over_optimal);
        if (std::abs(pt.ratio - 1.1) < 1e-9) first = pt.random_over_optimal;
        if (std::abs(pt.ratio - 2.0) < 1e-9) last = pt.random_over_optimal;
        if (pt.trials < 150) ok = false;
      }
      const bool good = count == cp.ratios.size() && lowest >= 1.0 && last < first;
      ok = ok && good;
      d << " seed" << seed << "/x" << x << ":" << fmt(first) << "->" << fmt(last);
    }
  }
  return {ok, "random/optimal at I/x 1.1->2.0" + d.str()};
}

// ---- AC5

Outcome loss_formula() {
  std::size_t violations = 0, checked = 0;
  for (std::int64_t k : {1, 16, 64}) {
    for (std::int64_t n = k; n <= 4 * k; ++n) {
      double previous = -1.0;
      for (double t : {0.0, 1.0, 7.0, 14.0, 56.0}) {
        const double p = data_loss_probability(n, k, t, 90.0);
        ++checked;
        if (p < previous) ++violations;
        if (n > k && p > data_loss_probability(n - 1, k, t, 90.0)) ++violations;
        previous = p;
      }
    }
  }
  struct Point {
    std::int64_t n, k;
    double t;
  };
  const std::vector<Point> points{{2, 1, 90}, {20, 16, 14}, {24, 16, 56}, {80, 64, 14}, {10, 1, 56}};
  std::size_t outside = 0;
  double worst = 0.0;
  std::uint64_t seed = 7;
  for (const auto& pt : points) {
    const std::size_t trials = 100000;
    const double exact = data_loss_probability(pt.n, pt.k, pt.t, 90.0);
    const double mc = oracle::monte_carlo_loss(pt.n, pt.k, pt.t, 90.0, trials, seed++);
    const double se = std::sqrt(exact * (1 - exact) / static_cast<double>(trials));
    const double z = std::abs(mc - exact) / se;
    worst = std::max(worst, z);
    if (z > 3.0) ++outside;
  }
  const double ratio =
      data_loss_probability(96, 64, 14, 90.0) / data_loss_probability(192, 64, 14, 90.0);
  return {violations == 0 && outside == 0 && ratio > 1e3,
          "grid checks=" + std::to_string(checked) + " violations=" + std::to_string(violations) +
              " mc worst z=" + fmt(worst) + " ratio(r=1.5/r=3)=" + fmt(ratio)};
}

// ---- simulation runs shared by AC6 to AC9

constexpr std::int64_t kFragment = 160 * kMiB;

SimConfig policy_config(RedundancyPolicy policy, ResponsePolicy response, std::uint64_t seed) {
  SimConfig c;
  c.fragment_size = kFragment;
  c.object_size = 16 * kFragment;  // k = 16 so that n fits in 100 peers
  c.redundancy_policy = policy;
  c.response = response;
  c.seed = seed;
  return c;
}

AvailabilityMatrix policy_trace(std::uint64_t seed) {
  SynthParams sp;
  sp.num_peers = 100;
  sp.num_slots = 24 * 7 * 4;
  return synth_trace(sp, seed);
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

struct RunKey {
  RedundancyPolicy policy;
  ResponsePolicy response;
  std::uint64_t seed;
  auto operator<=>(const RunKey&) const = default;
};

std::map<RunKey, SimReport>& runs() {
  static std::map<RunKey, SimReport> cache;
  return cache;
}

const SimReport& get_run(RedundancyPolicy policy, ResponsePolicy response, std::uint64_t seed) {
  const RunKey key{policy, response, seed};
  auto it = runs().find(key);
  if (it == runs().end())
    it = runs().emplace(key, run(policy_config(policy, response, seed), policy_trace(seed))).first;
  return it->second;
}

// Per-peer ratios pooled over all seeds of one policy.
NormalizedRatios pooled(RedundancyPolicy policy) {
  NormalizedRatios all;
  for (auto seed : kSeeds) {
    const auto r = normalized_ratios(get_run(policy, ResponsePolicy::immediate, seed));
    all.ttb.insert(all.ttb.end(), r.ttb.begin(), r.ttb.end());
    all.ttr.insert(all.ttr.end(), r.ttr.begin(), r.ttr.end());
    all.ettr_over_ttr.insert(all.ettr_over_ttr.end(), r.ettr_over_ttr.begin(),
                             r.ettr_over_ttr.end());
  }
  return all;
}

double safe_median(const std::vector<double>& xs) { return xs.empty() ? NAN : median(xs); }

// ---- AC6

Outcome policy_comparison() {
  std::size_t redundancy_ok = 0, nesting_bad = 0;
  for (auto seed : kSeeds) {
    const auto& a = get_run(RedundancyPolicy::adaptive, ResponsePolicy::immediate, seed);
    const auto& f = get_run(RedundancyPolicy::fixed, ResponsePolicy::immediate, seed);
    const double fixed_rate = static_cast<double>(a.fixed_n) / static_cast<double>(a.k);
    if (a.average_redundancy > 0.0 && a.average_redundancy < fixed_rate) ++redundancy_ok;
    for (const auto* r : {&a, &f})
      for (const auto& c : r->crashes)
        if (c.unavoidable && !c.unfinished_backup) ++nesting_bad;
  }
  const auto ad = pooled(RedundancyPolicy::adaptive);
  const auto fx = pooled(RedundancyPolicy::fixed);
  const double ttb_a = safe_median(ad.ttb), ttb_f = safe_median(fx.ttb);
  const double ttr_a = safe_median(ad.ttr), ttr_f = safe_median(fx.ttr);
  const bool ok = redundancy_ok == kSeeds.size() && ttb_a <= ttb_f && ttr_f <= ttr_a &&
                  nesting_bad == 0;
  return {ok, "redundancy below fixed in " + std::to_string(redundancy_ok) + "/" +
                  std::to_string(kSeeds.size()) + " runs; median TTB ratio adaptive=" +
                  fmt(ttb_a) + " fixed=" + fmt(ttb_f) + "; median TTR ratio fixed=" +
                  fmt(ttr_f) + " adaptive=" + fmt(ttr_a) +
                  "; unavoidable outside unfinished=" + std::to_string(nesting_bad)};
}

// ---- AC7

std::string csv_bytes(const SimReport& r, std::uint64_t seed) {
  fixture::TempDir dir("accept");
  write_report_csv(dir.path(), r, seed);
  std::string all;
  for (const char* f : {"peers.csv", "crashes.csv", "server.csv", "summary.csv"})
    if (std::filesystem::exists(dir.path() / f)) all += fixture::read_file(dir.path() / f);
  return all;
}

Outcome invariant_suite() {
  // Make sure every run shape used by the suite exists.
  for (auto seed : kSeeds)
    for (auto policy : {RedundancyPolicy::adaptive, RedundancyPolicy::fixed})
      for (auto response : {ResponsePolicy::immediate, ResponsePolicy::delayed_assisted})
        get_run(policy, response, seed);

  std::size_t violations = 0, bound_bad = 0, untallied = 0;
  for (const auto& [key, r] : runs()) {
    violations += r.invariant_violations.size();
    if (r.invariants.byte_budget_checks == 0 || r.invariants.restore_priority_checks == 0 ||
        r.invariants.placement_checks == 0)
      ++untallied;
    for (const auto& p : r.peers) {
      if (p.ttb && *p.ttb < p.min_ttb * (1 - 1e-12)) ++bound_bad;
      if (p.ttr && p.min_ttr && *p.ttr < *p.min_ttr * (1 - 1e-12)) ++bound_bad;
    }
  }
  std::size_t nondeterministic = 0;
  for (auto policy : {RedundancyPolicy::adaptive, RedundancyPolicy::fixed}) {
    for (auto response : {ResponsePolicy::immediate, ResponsePolicy::delayed_assisted}) {
      const auto c = policy_config(policy, response, 1);
      const auto first = csv_bytes(run(c, policy_trace(1)), 1);
      const auto second = csv_bytes(run(c, policy_trace(1)), 1);
      if (first != second || first != csv_bytes(get_run(policy, response, 1), 1))
        ++nondeterministic;
    }
  }
  const bool ok = violations == 0 && bound_bad == 0 && untallied == 0 && nondeterministic == 0;
  return {ok, "runs=" + std::to_string(runs().size()) + " violations=" +
                  std::to_string(violations) + " bound failures=" + std::to_string(bound_bad) +
                  " nondeterministic configs=" + std::to_string(nondeterministic)};
}

// ---- AC8

Outcome ettr_sanity() {
  std::vector<double> all;
  for (auto policy : {RedundancyPolicy::adaptive, RedundancyPolicy::fixed}) {
    const auto r = pooled(policy).ettr_over_ttr;
    all.insert(all.end(), r.begin(), r.end());
  }
  const double m = safe_median(all);
  return {m >= 0.3 && m <= 3.0,
          "median eTTR/TTR=" + fmt(m) + " over " + std::to_string(all.size()) + " restores" +
              " (adaptive " + fmt(safe_median(pooled(RedundancyPolicy::adaptive).ettr_over_ttr)) +
              ", fixed " + fmt(safe_median(pooled(RedundancyPolicy::fixed).ettr_over_ttr)) + ")"};
}

// ---- AC9

Outcome assisted_accounting() {
  std::size_t accounting_bad = 0, order_bad = 0;
  double total_fixed = 0.0, total_adaptive = 0.0;
  std::string worse;
  for (auto seed : kSeeds) {
    double outbound[2] = {0.0, 0.0};
    int i = 0;
    for (auto policy : {RedundancyPolicy::fixed, RedundancyPolicy::adaptive}) {
      const auto& r = get_run(policy, ResponsePolicy::delayed_assisted, seed);
      double sum = 0.0;
      for (double b : r.server_outbound) sum += b;
      if (sum != static_cast<double>(r.server_fragments_uploaded * r.fragment_size))
        ++accounting_bad;
      outbound[i++] = sum;
    }
    total_fixed += outbound[0];
    total_adaptive += outbound[1];
    if (outbound[0] > outbound[1]) {
      ++order_bad;
      worse += " seed" + std::to_string(seed);
    }
  }
  return {accounting_bad == 0 && order_bad == 0,
          "accounting mismatches=" + std::to_string(accounting_bad) +
              " seeds with fixed > adaptive=" + std::to_string(order_bad) +
              (worse.empty() ? "" : " (" + worse.substr(1) + ")") + " total fixed=" +
              fmt(total_fixed) + " adaptive=" + fmt(total_adaptive) + " bytes"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"AC1", 1.0, fixed_redundancy_golden},
      {"AC2", 1.0, small_instance},
      {"AC3", 60.0, oracle_equivalence},
      {"AC4", 300.0, scheduling_convergence},
      {"AC5", 60.0, loss_formula},
      {"AC6", 600.0, policy_comparison},
      {"AC7", 600.0, invariant_suite},
      {"AC8", 600.0, ettr_sanity},
      {"AC9", 600.0, assisted_accounting},
  };
  std::set<std::string> wanted(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.name)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.pass && secs < c.time_limit;
    if (!pass) ++failed;
    std::printf("%s %s %s [%.2fs, limit %.0fs]\n", c.name.c_str(), pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs, c.time_limit);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
