#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "p2pbackup/cli.hpp"
#include "p2pbackup/report.hpp"

using namespace p2pbackup;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "p2pbackup");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

nlohmann::json manifest(const fs::path& dir) {
  return nlohmann::json::parse(fixture::read_file(dir / "run-manifest.json"));
}

std::vector<std::string> small_sim(const fs::path& dir, const std::string& seed) {
  return {"--seed", seed, "--out-dir", dir.string(), "simulate", "--peers", "30", "--weeks", "2",
          "--object-size", std::to_string(8 * 8 * kMiB), "--fragment-size",
          std::to_string(8 * kMiB), "--lifetime", "60"};
}

RunSummary read_summary(const fs::path& file) {
  std::istringstream in(fixture::read_file(file));
  auto rows = read_summary_csv(in);
  REQUIRE(rows.size() == 1);
  return rows.front();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("plan answers match the redundancy oracles") {
  fixture::TempDir dir("plan");
  auto r = cli({"--out-dir", dir.path().string(), "plan", "--k", "64", "--a", "0.36", "--target",
                "0.99"});
  CHECK(r.code == 0);
  CHECK(std::stoll(r.out) == oracle::fixed_n_linear(64, 0.36, 0.99));
  auto m = manifest(dir.path());
  CHECK(m["command"] == "plan");
  CHECK(m["seed"] == 0);
  CHECK(m["result"]["n"] == oracle::fixed_n_linear(64, 0.36, 0.99));

  r = cli({"--out-dir", dir.path().string(), "plan", "--loss", "--n", "64", "--k", "64",
           "--t-days", "0"});
  CHECK(r.code == 0);
  CHECK(std::stod(r.out) == 0.0);

  r = cli({"--out-dir", dir.path().string(), "plan", "--loss", "--n", "2", "--k", "1",
           "--t-days", "90", "--lifetime", "90"});
  CHECK(r.code == 0);
  CHECK(std::stod(r.out) == doctest::Approx(std::pow(1 - std::exp(-1.0), 2)));
  CHECK(std::stod(r.out) == doctest::Approx(0.39958).epsilon(1e-4));
}

TEST_CASE("plan batch mode") {
  fixture::TempDir dir("batch");
  const auto in = dir.path() / "questions.csv";
  std::ofstream(in) << "n,k,t_days,mean_lifetime_days\n2,1,90,90\n64,64,0,90\n";
  auto r = cli({"--out-dir", dir.path().string(), "plan", "--batch", in.string()});
  CHECK(r.code == 0);
  std::istringstream csv(fixture::read_file(dir.path() / "plan.csv"));
  std::string header, first, second;
  std::getline(csv, header);
  std::getline(csv, first);
  std::getline(csv, second);
  CHECK(header == "n,k,t_days,mean_lifetime_days,probability");
  CHECK(std::stod(first.substr(first.rfind(',') + 1)) == doctest::Approx(0.39958).epsilon(1e-4));
  CHECK(second == "64,64,0,90,0");

  std::ofstream(in) << "k,a\n1,0.5\n";
  CHECK(cli({"--out-dir", dir.path().string(), "plan", "--batch", in.string()}).code != 0);
}

TEST_CASE("usage errors are rejected with a nonzero exit") {
  fixture::TempDir dir("usage");
  const auto d = dir.path().string();
  CHECK(cli({"--out-dir", d, "plan", "--loss", "--a", "0.5"}).code != 0);
  CHECK(cli({"--out-dir", d, "plan", "--bogus"}).code != 0);
  CHECK(cli({"--out-dir", d}).code != 0);
  CHECK(cli({"--out-dir", d, "simulate", "--policy", "sometimes"}).code != 0);
  auto r = cli({"--out-dir", d, "simulate", "--peers", "5", "--weeks", "1", "--runs", "0"});
  CHECK(r.code == 2);
  r = cli({"--out-dir", d, "plan", "--k", "64", "--a", "0.00001", "--target", "0.99"});
  CHECK(r.code == 1);
  CHECK(r.err.find("error") != std::string::npos);
  CHECK_FALSE(fs::exists(dir.path() / "run-manifest.json"));
}

TEST_CASE("trace-synth then trace-stats") {
  fixture::TempDir dir("trace");
  const auto d = dir.path().string();
  auto r = cli({"--seed", "4", "--out-dir", d, "trace-synth", "--peers", "12", "--weeks", "1",
                "--events-output", "events.csv"});
  REQUIRE(r.code == 0);
  std::ifstream matrix_file(dir.path() / "trace.matrix");
  auto m = read_matrix(matrix_file);
  CHECK(m.num_peers() == 12);
  CHECK(m.num_slots() == 168);

  r = cli({"--out-dir", d, "trace-stats", "--events", (dir.path() / "events.csv").string(),
           "--min-uptime", "0"});
  REQUIRE(r.code == 0);
  CHECK(manifest(dir.path())["command"] == "trace-stats");
  const double a = manifest(dir.path())["system_availability"];
  CHECK(a == doctest::Approx(availability_stats(m).system_availability));
  CHECK(fs::exists(dir.path() / "trace_stats.csv"));
}

TEST_CASE("sched-compare without churn matches the baseline") {
  fixture::TempDir dir("cmp");
  {
    std::ofstream f(dir.path() / "ones.matrix");
    write_matrix(f, AvailabilityMatrix(30, 100, 3600, std::vector<std::uint8_t>(3000, 1)));
  }
  auto r = cli({"--out-dir", dir.path().string(), "sched-compare", "--matrix",
                (dir.path() / "ones.matrix").string(), "--x", "5,10", "--ratios", "2.0",
                "--trials", "10"});
  REQUIRE(r.code == 0);
  SchedCompareParams p;
  p.x_values = {5, 10};
  p.ratios = {2.0};
  p.trials = 10;
  std::ifstream f(dir.path() / "ones.matrix");
  auto points = sched_compare(read_matrix(f), p);
  REQUIRE(points.size() == 2);
  for (const auto& pt : points) {
    CHECK(pt.trials == 10);
    CHECK(pt.optimal_over_baseline == doctest::Approx(1.0));
    CHECK(pt.random_over_baseline == doctest::Approx(1.0));
  }
  CHECK(fs::exists(dir.path() / "sched_compare.csv"));

  // More candidates than peers: the grid point is skipped.
  p.x_values = {20};
  CHECK(sched_compare(AvailabilityMatrix(30, 100, 3600, std::vector<std::uint8_t>(3000, 1)), p)
            .empty());
}

TEST_CASE("sched-compare: random never beats optimal on a churned trace") {
  SynthParams sp;
  sp.num_peers = 60;
  sp.num_slots = 24 * 7;
  SchedCompareParams p;
  p.x_values = {10};
  p.ratios = {1.2, 2.0};
  p.trials = 30;
  p.seed = 3;
  auto m = synth_trace(sp, 1);
  auto points = sched_compare(m, p);
  REQUIRE(points.size() == 2);
  for (const auto& pt : points) {
    CHECK(pt.random_over_optimal >= 1.0);
    CHECK(pt.optimal_over_baseline >= 1.0);
  }
  auto again = sched_compare(m, p);
  CHECK(again[0].mean_random == points[0].mean_random);
}

TEST_CASE("simulate is reproducible and writes its manifest") {
  fixture::TempDir a("sim-a"), b("sim-b");
  REQUIRE(cli(small_sim(a.path(), "5")).code == 0);
  REQUIRE(cli(small_sim(b.path(), "5")).code == 0);
  for (const char* f : {"run-5/peers.csv", "run-5/crashes.csv", "run-5/summary.csv", "summary.csv"})
    CHECK(fixture::read_file(a.path() / f) == fixture::read_file(b.path() / f));
  auto m = manifest(a.path());
  CHECK(m["command"] == "simulate");
  CHECK(m["config"]["fragment_size"] == std::to_string(8 * kMiB));
  CHECK(m["config"]["seed"] == "5");
  CHECK(m["runs"].size() == 1);

  auto args = small_sim(a.path(), "5");
  args.insert(args.end(), {"--runs", "2"});
  REQUIRE(cli(args).code == 0);
  CHECK(fs::exists(a.path() / "run-6" / "peers.csv"));
  std::istringstream in(fixture::read_file(a.path() / "summary.csv"));
  CHECK(read_summary_csv(in).size() == 2);
}

TEST_CASE("simulate: adaptive uses less redundancy than fixed") {
  fixture::TempDir a("adaptive"), f("fixed");
  auto args = small_sim(a.path(), "2");
  args.insert(args.end(), {"--policy", "adaptive"});
  REQUIRE(cli(args).code == 0);
  args = small_sim(f.path(), "2");
  args.insert(args.end(), {"--policy", "fixed"});
  REQUIRE(cli(args).code == 0);
  auto ad = read_summary(a.path() / "summary_mean.csv");
  auto fx = read_summary(f.path() / "summary_mean.csv");
  CHECK(ad.average_redundancy > 0.0);
  CHECK(ad.average_redundancy < fx.fixed_rate);
  CHECK(ad.fixed_rate == fx.fixed_rate);
}

TEST_CASE("simulate: server.csv has rows iff a repair was triggered") {
  for (const char* lifetime : {"inf", "6"}) {
    fixture::TempDir dir("assist");
    auto args = small_sim(dir.path(), "1");
    args.back() = lifetime;
    args.insert(args.end(), {"--response", "delayed_assisted", "--repair-timeout", "1"});
    REQUIRE(cli(args).code == 0);
    auto s = read_summary(dir.path() / "run-1" / "summary.csv");
    std::istringstream server(fixture::read_file(dir.path() / "run-1" / "server.csv"));
    std::size_t lines = 0;
    for (std::string line; std::getline(server, line);) ++lines;
    CHECK(lines >= 1);
    CHECK((lines > 1) == (s.server_repairs > 0));
    if (std::string(lifetime) == "inf") CHECK(s.server_repairs == 0);
  }
}

}  // TEST_SUITE
