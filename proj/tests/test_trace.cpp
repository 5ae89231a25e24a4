#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "p2pbackup/trace.hpp"

using namespace p2pbackup;

namespace {

ParsedTrace parse(const std::string& text) {
  std::istringstream in(text);
  return parse_events(in);
}

AvailabilityMatrix slotize_text(const std::string& text, std::int64_t slot = 3600,
                                std::optional<std::int64_t> horizon = std::nullopt) {
  auto parsed = parse(text);
  SlotizeOptions opts;
  opts.slot_seconds = slot;
  opts.horizon_seconds = horizon;
  return slotize(parsed.events, opts);
}

}  // namespace

TEST_SUITE("trace") {

TEST_CASE("parse keeps a well formed session") {
  auto t = parse("p1,0,login\np1,7200,logoff\n");
  REQUIRE(t.events.size() == 2);
  CHECK(t.warnings.empty());
  auto m = slotize(t.events, SlotizeOptions{});
  CHECK(m.num_slots() == 2);
  CHECK(m.online(0, 0));
  CHECK(m.online(0, 1));
}

TEST_CASE("duplicate login is dropped, first one wins") {
  auto t = parse("p1,0,login\np1,100,login\np1,200,logoff\n");
  REQUIRE(t.events.size() == 2);
  CHECK(t.events[0].timestamp == 0);
  CHECK(t.events[0].kind == EventKind::login);
  CHECK(t.events[1].timestamp == 200);
}

TEST_CASE("leading logoff implies a login at the epoch and warns") {
  auto t = parse("p1,50,logoff\n");
  REQUIRE(t.events.size() == 2);
  CHECK(t.events[0] == AvailabilityEvent{"p1", 0, EventKind::login});
  CHECK(t.events[1] == AvailabilityEvent{"p1", 50, EventKind::logoff});
  CHECK(t.warnings.size() == 1);
}

TEST_CASE("events come back sorted by time then id, comments ignored") {
  auto t = parse("# header\nb,10,login\na,10,login\na,5,logoff  # glitch\nb,20,logoff\n");
  std::vector<std::string> order;
  for (const auto& e : t.events) order.push_back(e.peer_id + "@" + std::to_string(e.timestamp));
  CHECK(order == std::vector<std::string>{"a@0", "a@5", "a@10", "b@10", "b@20"});
}

TEST_CASE("malformed records report their line") {
  for (const char* bad : {"p1,abc,login\n", "p1,10\n", "p1,10,wake\n", "p1,-5,login\n"}) {
    try {
      parse(std::string("# ok\n") + bad);
      FAIL("expected a parse error for " << bad);
    } catch (const TraceParseError& e) {
      CHECK(e.line() == 2);
    }
  }
}

TEST_CASE("majority rule at the half-slot boundary") {
  CHECK(slotize_text("p1,0,login\np1,1800,logoff\n", 3600, 3600).online(0, 0));
  CHECK_FALSE(slotize_text("p1,0,login\np1,1799,logoff\n", 3600, 3600).online(0, 0));
  // Two short sessions adding up to half a slot also count.
  CHECK(slotize_text("p1,0,login\np1,900,logoff\np1,2700,login\np1,3600,logoff\n").online(0, 0));
}

TEST_CASE("an unterminated session runs to the horizon") {
  auto m = slotize_text("p1,3600,login\np2,0,login\np2,100,logoff\n", 3600, 4 * 3600);
  CHECK(m.num_slots() == 4);
  CHECK(m.row(0)[0] == 0);
  CHECK(m.row(0)[3] == 1);
}

TEST_CASE("zero slot length is rejected") {
  auto t = parse("p1,0,login\np1,10,logoff\n");
  SlotizeOptions opts;
  opts.slot_seconds = 0;
  CHECK_THROWS_AS(slotize(t.events, opts), std::invalid_argument);
}

TEST_CASE("uptime filter keeps the boundary and preserves order") {
  auto all_ones = AvailabilityMatrix::from_rows({"111111", "111111"});
  CHECK(filter_min_uptime(all_ones, 1.0 / 6.0).matrix.num_peers() == 2);

  auto m = AvailabilityMatrix::from_rows({"1000000000", "0000000000", "1100000000"});
  auto f = filter_min_uptime(m, 0.15);
  CHECK(f.kept == std::vector<std::size_t>{2});

  auto exact = AvailabilityMatrix::from_rows({"100000", "000000", "110000"});
  auto g = filter_min_uptime(exact, 1.0 / 6.0);
  CHECK(g.kept == std::vector<std::size_t>{0, 2});
  CHECK(g.matrix.peer_ids() == std::vector<std::string>{"0", "2"});
}

TEST_CASE("availability statistics by hand") {
  auto m = AvailabilityMatrix::from_rows({"1000", "1111"});
  auto s = availability_stats(m);
  CHECK(s.per_peer_availability[0] == doctest::Approx(0.25));
  CHECK(s.per_peer_availability[1] == doctest::Approx(1.0));
  CHECK(s.system_availability == doctest::Approx(0.625));
  CHECK(availability_stats(AvailabilityMatrix::from_rows({"1010"})).system_availability ==
        doctest::Approx(0.5));
  CHECK_THROWS_AS(availability_stats(AvailabilityMatrix{}), std::invalid_argument);
}

TEST_CASE("synthetic trace: degenerate parameters give an all-ones matrix") {
  SynthParams p;
  p.num_peers = 5;
  p.num_slots = 100;
  p.base = {AvailabilityDistribution::constant, 1.0, 0.0};
  p.diurnal_amplitude = 0.0;
  p.weekend_factor = 1.0;
  auto m = synth_trace(p, 3);
  CHECK(std::all_of(m.bits().begin(), m.bits().end(), [](auto b) { return b == 1; }));
}

TEST_CASE("synthetic trace is reproducible under a seed") {
  SynthParams p;
  p.num_peers = 20;
  p.num_slots = 200;
  CHECK(synth_trace(p, 9) == synth_trace(p, 9));
  CHECK_FALSE(synth_trace(p, 9) == synth_trace(p, 10));
}

TEST_CASE("synthetic trace: per-peer availability tracks the profile") {
  SynthParams p;
  p.num_peers = 100;
  p.num_slots = 2016;
  p.base = {AvailabilityDistribution::constant, 0.5, 0.0};
  p.diurnal_amplitude = 0.5;
  double expected = 0.0;
  for (std::size_t t = 0; t < p.num_slots; ++t)
    expected += std::clamp(0.5 * synth_profile(p, t), 0.0, 1.0);
  expected /= static_cast<double>(p.num_slots);
  auto s = availability_stats(synth_trace(p, 1));
  for (double a : s.per_peer_availability) CHECK(a == doctest::Approx(expected).epsilon(0.1));

  // Uniform a_i in [0.2, 0.9]: normalised availabilities stay inside the range.
  p.base = {AvailabilityDistribution::uniform, 0.2, 0.9};
  p.diurnal_amplitude = 0.0;
  auto u = availability_stats(synth_trace(p, 2));
  auto [lo, hi] = std::minmax_element(u.per_peer_availability.begin(), u.per_peer_availability.end());
  CHECK(*lo >= 0.15);
  CHECK(*hi <= 0.95);
  CHECK(*hi - *lo > 0.5);
}

TEST_CASE("diurnal profile peaks in the evening and dips at night") {
  SynthParams p;
  p.diurnal_amplitude = 0.5;
  CHECK(synth_profile(p, 18) == doctest::Approx(1.5));
  CHECK(synth_profile(p, 6) == doctest::Approx(0.5));
  p.weekend_factor = 0.5;
  CHECK(synth_profile(p, 5 * 24 + 18) == doctest::Approx(0.75));
}

TEST_CASE("invalid synthetic parameters are rejected") {
  SynthParams p;
  p.base = {AvailabilityDistribution::uniform, 0.9, 0.2};
  CHECK_THROWS_AS(synth_trace(p, 0), std::invalid_argument);
  p.base = {AvailabilityDistribution::beta, 0.0, 1.0};
  CHECK_THROWS_AS(synth_trace(p, 0), std::invalid_argument);
  p.base = {};
  p.diurnal_amplitude = 1.5;
  CHECK_THROWS_AS(synth_trace(p, 0), std::invalid_argument);
}

TEST_CASE("property: matrix -> events -> matrix round trip") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = fixture::random_matrix(rng, 1 + rng() % 6, 1 + rng() % 40, 0.4);
    auto events = matrix_to_events(m);
    SlotizeOptions opts;
    opts.horizon_seconds = static_cast<std::int64_t>(m.num_slots()) * 3600;
    opts.peer_order = m.peer_ids();
    auto again = slotize(events, opts);
    CHECK(again == m);

    std::ostringstream text;
    write_events(text, events);
    std::istringstream in(text.str());
    CHECK(slotize(parse_events(in).events, opts) == m);
  }
}

TEST_CASE("property: matrix file round trip") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = fixture::random_matrix(rng, 1 + rng() % 5, 1 + rng() % 30, 0.5);
    std::stringstream io;
    write_matrix(io, m);
    auto back = read_matrix(io);
    CHECK(back.bits() == m.bits());
    CHECK(back.num_peers() == m.num_peers());
    CHECK(back.slot_seconds() == m.slot_seconds());
  }
  std::istringstream bad("peers=2 slots=3\n101\n");
  CHECK_THROWS_AS(read_matrix(bad), TraceParseError);
}

TEST_CASE("property: availability bounds and filter guarantees") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    auto m = fixture::random_matrix(rng, 1 + rng() % 8, 1 + rng() % 50, 0.3);
    auto s = availability_stats(m);
    double mean = 0.0;
    for (double a : s.per_peer_availability) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
      mean += a;
    }
    CHECK(s.system_availability == doctest::Approx(mean / static_cast<double>(m.num_peers())));

    const double threshold = std::uniform_real_distribution<double>(0, 0.6)(rng);
    auto f = filter_min_uptime(m, threshold);
    CHECK(std::is_sorted(f.kept.begin(), f.kept.end()));
    for (std::size_t i = 0; i < f.kept.size(); ++i) {
      CHECK(s.per_peer_availability[f.kept[i]] >= threshold);
      auto kept = f.matrix.row(i);
      auto orig = m.row(f.kept[i]);
      CHECK(std::equal(kept.begin(), kept.end(), orig.begin()));
    }
    std::size_t expected = 0;
    for (double a : s.per_peer_availability) expected += a >= threshold;
    CHECK(f.kept.size() == expected);
  }
}

}  // TEST_SUITE
