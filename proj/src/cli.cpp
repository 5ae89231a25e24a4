#include "p2pbackup/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <numeric>
#include <random>
#include <sstream>

#include "p2pbackup/redundancy.hpp"
#include "p2pbackup/report.hpp"
#include "p2pbackup/sched.hpp"
#include "p2pbackup/sim.hpp"

namespace p2pbackup {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<SchedComparePoint> sched_compare(const AvailabilityMatrix& matrix,
                                             const SchedCompareParams& params) {
  if (matrix.empty()) throw std::invalid_argument("sched-compare needs a non-empty trace");
  if (!(params.start_fraction > 0.0 && params.start_fraction <= 1.0))
    throw std::invalid_argument("start fraction must be in (0,1]");
  for (double r : params.ratios)
    if (!(r > 1.0)) throw std::invalid_argument("candidate ratios must exceed 1");

  const std::size_t peers = matrix.num_peers();
  const std::size_t slots = matrix.num_slots();
  const auto start_span = std::max<std::size_t>(
      1, static_cast<std::size_t>(params.start_fraction * static_cast<double>(slots)));

  std::vector<SchedComparePoint> out;
  for (auto x : params.x_values) {
    for (double ratio : params.ratios) {
      SchedComparePoint pt;
      pt.x = x;
      pt.ratio = ratio;
      pt.candidates = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(x)));
      if (x < 1 || pt.candidates + 1 > peers) continue;

      std::seed_seq seq{params.seed, static_cast<std::uint64_t>(x),
                        static_cast<std::uint64_t>(std::llround(ratio * 1000.0))};
      std::mt19937_64 rng(seq);
      std::vector<std::size_t> ids(peers);
      double sum_base = 0, sum_opt = 0, sum_rand = 0;
      for (std::size_t trial = 0; trial < params.trials; ++trial) {
        std::iota(ids.begin(), ids.end(), std::size_t{0});
        // Partial shuffle: ids[0] is the owner, the next I are candidates.
        for (std::size_t i = 0; i <= pt.candidates; ++i)
          std::swap(ids[i], ids[std::uniform_int_distribution<std::size_t>(i, peers - 1)(rng)]);
        const auto start = std::uniform_int_distribution<std::size_t>(0, start_span - 1)(rng);
        const auto trial_seed = rng();

        TransferProblem problem;
        problem.matrix = matrix.slice(std::span(ids.data(), pt.candidates + 1), start, slots);
        problem.owner = 0;
        problem.x = x;
        const auto base = ideal_baseline(problem.matrix.row(0), x, 1, 0);
        const auto opt = optimal_completion(problem);
        const auto rnd = random_schedule(problem, trial_seed);
        if (!base || !opt.feasible || !rnd.feasible) {
          ++pt.skipped;
          continue;
        }
        ++pt.trials;
        sum_base += static_cast<double>(*base);
        sum_opt += static_cast<double>(opt.completion);
        sum_rand += static_cast<double>(rnd.completion);
      }
      if (pt.trials > 0) {
        const auto n = static_cast<double>(pt.trials);
        pt.mean_baseline = sum_base / n;
        pt.mean_optimal = sum_opt / n;
        pt.mean_random = sum_rand / n;
        pt.optimal_over_baseline = pt.mean_optimal / pt.mean_baseline;
        pt.random_over_baseline = pt.mean_random / pt.mean_baseline;
        pt.random_over_optimal = pt.mean_random / pt.mean_optimal;
      }
      out.push_back(pt);
    }
  }
  return out;
}

void write_sched_compare_csv(std::ostream& out, std::span<const SchedComparePoint> points) {
  out << "x,ratio,candidates,trials,skipped,mean_baseline,mean_optimal,mean_random,"
         "optimal_over_baseline,random_over_baseline,random_over_optimal\n";
  out << std::setprecision(17);
  for (const auto& p : points)
    out << p.x << ',' << p.ratio << ',' << p.candidates << ',' << p.trials << ',' << p.skipped
        << ',' << p.mean_baseline << ',' << p.mean_optimal << ',' << p.mean_random << ','
        << p.optimal_over_baseline << ',' << p.random_over_baseline << ','
        << p.random_over_optimal << '\n';
}

namespace {

struct TraceInput {
  std::string matrix_path;
  std::string events_path;
  std::int64_t slot_seconds = 3600;
  double min_uptime = 0.0;  // 0 keeps every peer
  // Synthetic fallback.
  std::size_t peers = 100;
  double weeks = 4.0;
  std::string dist = "uniform";
  double a_min = 0.25;
  double a_max = 0.7;
  double amplitude = 0.5;
  double weekend = 0.7;
  std::optional<std::uint64_t> trace_seed;

  void add_options(CLI::App* cmd, bool synth_fallback) {
    auto* m = cmd->add_option("--matrix", matrix_path, "Availability matrix file");
    auto* e = cmd->add_option("--events", events_path, "Login/logoff event CSV (id,timestamp,kind)");
    m->excludes(e);
    cmd->add_option("--slot-seconds", slot_seconds, "Slot length for --events")
        ->capture_default_str();
    cmd->add_option("--min-uptime", min_uptime,
                    "Drop peers online less than this fraction of the trace (e.g. 0.1667)")
        ->capture_default_str();
    if (!synth_fallback) return;
    auto* p = cmd->add_option("--peers", peers, "Synthetic trace: peers")->capture_default_str();
    cmd->add_option("--weeks", weeks, "Synthetic trace: length in weeks")->capture_default_str();
    cmd->add_option("--dist", dist, "Synthetic trace: availability distribution")
        ->check(CLI::IsMember({"constant", "uniform", "beta"}))
        ->capture_default_str();
    cmd->add_option("--a-min", a_min, "Synthetic trace: uniform low end / constant / beta alpha")
        ->capture_default_str();
    cmd->add_option("--a-max", a_max, "Synthetic trace: uniform high end / beta beta")
        ->capture_default_str();
    cmd->add_option("--amplitude", amplitude, "Synthetic trace: diurnal amplitude")
        ->capture_default_str();
    cmd->add_option("--weekend", weekend, "Synthetic trace: weekend multiplier")
        ->capture_default_str();
    cmd->add_option("--trace-seed", trace_seed, "Synthetic trace seed (default: --seed)");
    p->excludes(m)->excludes(e);
  }

  SynthParams synth_params() const {
    SynthParams sp;
    sp.num_peers = peers;
    sp.num_slots = static_cast<std::size_t>(std::llround(weeks * 7.0 * 86400.0 /
                                                         static_cast<double>(slot_seconds)));
    sp.slot_seconds = slot_seconds;
    sp.base.kind = dist == "constant" ? AvailabilityDistribution::constant
                   : dist == "beta"   ? AvailabilityDistribution::beta
                                      : AvailabilityDistribution::uniform;
    sp.base.first = a_min;
    sp.base.second = a_max;
    sp.diurnal_amplitude = amplitude;
    sp.weekend_factor = weekend;
    return sp;
  }

  AvailabilityMatrix load(std::uint64_t seed, std::ostream& err, json& manifest) const {
    AvailabilityMatrix m;
    json src;
    if (!matrix_path.empty()) {
      std::ifstream in(matrix_path);
      if (!in) throw std::runtime_error("cannot open matrix '" + matrix_path + "'");
      m = read_matrix(in);
      src = {{"kind", "matrix"}, {"path", matrix_path}};
    } else if (!events_path.empty()) {
      std::ifstream in(events_path);
      if (!in) throw std::runtime_error("cannot open events '" + events_path + "'");
      auto parsed = parse_events(in);
      for (const auto& w : parsed.warnings) err << "warning: " << w << '\n';
      SlotizeOptions opts;
      opts.slot_seconds = slot_seconds;
      m = slotize(parsed.events, opts);
      src = {{"kind", "events"}, {"path", events_path}, {"slot_seconds", slot_seconds},
             {"repairs", parsed.warnings.size()}};
    } else {
      const auto sp = synth_params();
      const auto s = trace_seed.value_or(seed);
      m = synth_trace(sp, s);
      src = {{"kind", "synthetic"}, {"peers", sp.num_peers}, {"slots", sp.num_slots},
             {"slot_seconds", sp.slot_seconds}, {"dist", dist}, {"a_min", a_min},
             {"a_max", a_max}, {"amplitude", amplitude}, {"weekend", weekend}, {"seed", s}};
    }
    if (min_uptime > 0.0) {
      auto f = filter_min_uptime(m, min_uptime);
      src["min_uptime"] = min_uptime;
      src["peers_before_filter"] = m.num_peers();
      m = std::move(f.matrix);
    }
    src["peers_used"] = m.num_peers();
    manifest["trace"] = src;
    return m;
  }
};

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(text);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  return out;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

void print_summary(std::ostream& out, const RunSummary& s, const std::string& label) {
  out << label << ": policy=" << s.redundancy_policy << " response=" << s.response
      << " a=" << fmt(s.system_availability, 4) << " fixed_n=" << s.fixed_n
      << " fixed_rate=" << fmt(s.fixed_rate, 4) << " avg_redundancy=" << fmt(s.average_redundancy, 4)
      << " completed_backups=" << s.completed_backups << " crashes=" << s.crashes
      << " lost=" << s.lost << " lost_fraction=" << fmt(s.lost_fraction, 4)
      << " median_ttb_ratio=" << fmt(s.median_ttb_ratio, 4)
      << " median_ttr_ratio=" << fmt(s.median_ttr_ratio, 4)
      << " median_ettr_ttr=" << fmt(s.median_ettr_ttr, 4)
      << " server_outbound_bytes=" << fmt(s.server_outbound_bytes, 12)
      << " invariant_violations=" << s.invariant_violations << '\n';
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, ',');) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return cells;
}

// Answers one redundancy question per input row; returns the row count.
std::size_t plan_batch_csv(std::istream& in, std::ostream& out) {
  std::string line;
  auto next = [&] {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next()) throw std::invalid_argument("batch file is empty");
  const auto header = split_csv(line);
  const std::vector<std::string> fixed{"k", "a", "target"};
  const std::vector<std::string> loss{"n", "k", "t_days", "mean_lifetime_days"};
  const bool fixed_mode = header == fixed;
  if (!fixed_mode && header != loss)
    throw std::invalid_argument("batch header must be k,a,target or n,k,t_days,mean_lifetime_days");
  out << line << (fixed_mode ? ",n,rate\n" : ",probability\n");
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (next()) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw std::invalid_argument("batch line " + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields");
    try {
      if (fixed_mode) {
        const auto k = std::stoll(cells[0]);
        const auto n = fixed_redundancy_n(k, std::stod(cells[1]), std::stod(cells[2]));
        out << line << ',' << n << ',' << fmt(static_cast<double>(n) / static_cast<double>(k), 6)
            << '\n';
      } else {
        const double p = data_loss_probability(std::stoll(cells[0]), std::stoll(cells[1]),
                                               std::stod(cells[2]) * kSecondsPerDay,
                                               std::stod(cells[3]) * kSecondsPerDay);
        out << line << ',' << fmt(p, 12) << '\n';
      }
    } catch (const std::logic_error& e) {
      throw std::invalid_argument("batch line " + std::to_string(line_no) + ": " + e.what());
    }
    ++rows;
  }
  return rows;
}

void write_manifest(const fs::path& dir, const json& manifest) {
  fs::create_directories(dir);
  std::ofstream f(dir / "run-manifest.json");
  if (!f) throw std::runtime_error("cannot write " + (dir / "run-manifest.json").string());
  f << manifest.dump(2) << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Peer-to-peer backup toolkit: traces, transfer scheduling, redundancy planning "
               "and trace-driven simulation."};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::uint64_t seed = 0;
  std::string out_dir = "out";
  app.add_option("--seed", seed, "Random seed, echoed in run-manifest.json")->capture_default_str();
  app.add_option("--out-dir", out_dir, "Directory for output files")->capture_default_str();

  json manifest;
  std::function<void()> action;
  std::vector<std::string> outputs;

  // trace-stats
  auto* stats_cmd = app.add_subcommand("trace-stats", "Per-peer and system availability of a trace");
  TraceInput stats_in;
  stats_in.add_options(stats_cmd, false);
  stats_cmd->callback([&] {
    action = [&] {
      if (stats_in.matrix_path.empty() && stats_in.events_path.empty())
        throw CLI::RequiredError("--matrix or --events");
      auto m = stats_in.load(seed, err, manifest);
      auto st = availability_stats(m);
      out << "peers=" << m.num_peers() << " slots=" << m.num_slots()
          << " slot_seconds=" << m.slot_seconds()
          << " system_availability=" << fmt(st.system_availability, 6) << '\n';
      fs::create_directories(out_dir);
      std::ofstream f(fs::path(out_dir) / "trace_stats.csv");
      f << "peer_id,availability\n" << std::setprecision(17);
      for (std::size_t i = 0; i < m.num_peers(); ++i)
        f << m.peer_ids()[i] << ',' << st.per_peer_availability[i] << '\n';
      outputs.push_back("trace_stats.csv");
      manifest["system_availability"] = st.system_availability;
    };
  });

  // trace-synth
  auto* synth_cmd = app.add_subcommand("trace-synth", "Generate a synthetic availability matrix");
  TraceInput synth_in;
  std::string synth_output = "trace.matrix";
  std::string synth_events;
  synth_cmd->add_option("--peers", synth_in.peers, "Peers")->capture_default_str();
  synth_cmd->add_option("--weeks", synth_in.weeks, "Length in weeks")->capture_default_str();
  synth_cmd->add_option("--slot-seconds", synth_in.slot_seconds, "Slot length")->capture_default_str();
  synth_cmd->add_option("--dist", synth_in.dist, "Availability distribution")
      ->check(CLI::IsMember({"constant", "uniform", "beta"}))
      ->capture_default_str();
  synth_cmd->add_option("--a-min", synth_in.a_min, "Uniform low end / constant / beta alpha")
      ->capture_default_str();
  synth_cmd->add_option("--a-max", synth_in.a_max, "Uniform high end / beta beta")
      ->capture_default_str();
  synth_cmd->add_option("--amplitude", synth_in.amplitude, "Diurnal amplitude")->capture_default_str();
  synth_cmd->add_option("--weekend", synth_in.weekend, "Weekend multiplier")->capture_default_str();
  synth_cmd->add_option("--output", synth_output, "Matrix file name inside --out-dir")
      ->capture_default_str();
  synth_cmd->add_option("--events-output", synth_events, "Also write login/logoff events here");
  synth_cmd->callback([&] {
    action = [&] {
      auto m = synth_in.load(seed, err, manifest);
      fs::create_directories(out_dir);
      std::ofstream f(fs::path(out_dir) / synth_output);
      if (!f) throw std::runtime_error("cannot write " + synth_output);
      write_matrix(f, m);
      outputs.push_back(synth_output);
      if (!synth_events.empty()) {
        std::ofstream e(fs::path(out_dir) / synth_events);
        write_events(e, matrix_to_events(m));
        outputs.push_back(synth_events);
      }
      out << "wrote " << (fs::path(out_dir) / synth_output).string() << " (" << m.num_peers()
          << " peers, " << m.num_slots() << " slots, availability "
          << fmt(availability_stats(m).system_availability, 4) << ")\n";
    };
  });

  // sched-compare
  auto* cmp_cmd = app.add_subcommand("sched-compare",
                                     "Optimal vs randomized backup scheduling against minTTB");
  TraceInput cmp_in;
  cmp_in.peers = 200;
  cmp_in.weeks = 3.0;
  cmp_in.a_min = 0.2;
  cmp_in.a_max = 0.8;
  cmp_in.add_options(cmp_cmd, true);
  SchedCompareParams cmp;
  std::string x_text = "40,60";
  std::string ratio_text = "1.1,1.2,1.3,1.4,1.5,1.6,1.7,1.8,1.9,2.0";
  cmp_cmd->add_option("--x", x_text, "Comma-separated fragment counts")->capture_default_str();
  cmp_cmd->add_option("--ratios", ratio_text, "Comma-separated candidate ratios I/x (> 1)")
      ->capture_default_str();
  cmp_cmd->add_option("--trials", cmp.trials, "Trials per grid point")->capture_default_str();
  cmp_cmd->add_option("--start-fraction", cmp.start_fraction,
                      "Start slot is drawn from this leading fraction of the trace")
      ->capture_default_str();
  cmp_cmd->callback([&] {
    action = [&] {
      cmp.x_values.clear();
      for (auto& s : split_list(x_text)) cmp.x_values.push_back(std::stoll(s));
      cmp.ratios.clear();
      for (auto& s : split_list(ratio_text)) cmp.ratios.push_back(std::stod(s));
      cmp.seed = seed;
      auto m = cmp_in.load(seed, err, manifest);
      for (auto x : cmp.x_values)
        if (static_cast<std::size_t>(x) + 1 > m.num_peers())
          err << "note: x=" << x << " exceeds the peers in the trace; skipped\n";
      auto points = sched_compare(m, cmp);
      fs::create_directories(out_dir);
      std::ofstream f(fs::path(out_dir) / "sched_compare.csv");
      write_sched_compare_csv(f, points);
      outputs.push_back("sched_compare.csv");
      for (const auto& p : points) {
        if (p.candidates + 1 > m.num_peers()) continue;
        out << "x=" << p.x << " I/x=" << fmt(p.ratio, 3) << " trials=" << p.trials
            << " optimal/minTTB=" << fmt(p.optimal_over_baseline, 4)
            << " random/minTTB=" << fmt(p.random_over_baseline, 4)
            << " random/optimal=" << fmt(p.random_over_optimal, 4) << '\n';
      }
      manifest["params"] = {{"x", cmp.x_values}, {"ratios", cmp.ratios}, {"trials", cmp.trials},
                            {"start_fraction", cmp.start_fraction}};
    };
  });

  // plan
  auto* plan_cmd = app.add_subcommand("plan", "Redundancy answers: fixed n or data-loss probability");
  std::int64_t plan_k = 64;
  double plan_a = 0.36, plan_target = 0.99;
  bool plan_loss = false;
  std::int64_t plan_n = 0;
  double plan_t_days = 14.0, plan_lifetime = 90.0;
  plan_cmd->add_option("--k", plan_k, "Fragments needed to reconstruct")->capture_default_str();
  auto* a_opt = plan_cmd->add_option("--a", plan_a, "Average peer availability")->capture_default_str();
  auto* target_opt =
      plan_cmd->add_option("--target", plan_target, "Availability target")->capture_default_str();
  auto* loss_flag = plan_cmd->add_flag("--loss", plan_loss, "Compute the data-loss probability instead");
  auto* n_opt = plan_cmd->add_option("--n", plan_n, "Fragments stored (with --loss)");
  auto* t_opt = plan_cmd->add_option("--t-days", plan_t_days, "Elapsed days (with --loss)")
                    ->capture_default_str();
  auto* life_opt = plan_cmd->add_option("--lifetime", plan_lifetime, "Mean peer lifetime in days")
                       ->capture_default_str();
  std::string plan_batch;
  auto* batch_opt = plan_cmd->add_option(
      "--batch", plan_batch,
      "CSV with header k,a,target or n,k,t_days,mean_lifetime_days; answers go to plan.csv");
  loss_flag->excludes(a_opt)->excludes(target_opt);
  batch_opt->excludes(loss_flag)->excludes(a_opt)->excludes(target_opt)->excludes("--k");
  n_opt->needs(loss_flag);
  t_opt->needs(loss_flag);
  life_opt->needs(loss_flag);
  plan_cmd->callback([&] {
    action = [&] {
      json result;
      if (!plan_batch.empty()) {
        std::ifstream in(plan_batch);
        if (!in) throw std::runtime_error("cannot open batch file '" + plan_batch + "'");
        fs::create_directories(out_dir);
        std::ofstream f(fs::path(out_dir) / "plan.csv");
        const auto rows = plan_batch_csv(in, f);
        outputs.push_back("plan.csv");
        out << rows << " rows written to plan.csv\n";
        result = {{"mode", "batch"}, {"input", plan_batch}, {"rows", rows}};
      } else if (plan_loss) {
        if (plan_n == 0) plan_n = plan_k;
        const double p = data_loss_probability(plan_n, plan_k, plan_t_days * kSecondsPerDay,
                                               plan_lifetime * kSecondsPerDay);
        out << std::setprecision(12) << p << '\n';
        result = {{"mode", "loss"}, {"n", plan_n}, {"k", plan_k}, {"t_days", plan_t_days},
                  {"lifetime_days", plan_lifetime}, {"probability", p}};
      } else {
        const auto n = fixed_redundancy_n(plan_k, plan_a, plan_target);
        out << n << '\n';
        err << "k=" << plan_k << " a=" << plan_a << " target=" << plan_target
            << " rate=" << fmt(static_cast<double>(n) / static_cast<double>(plan_k), 6) << '\n';
        result = {{"mode", "fixed"}, {"k", plan_k}, {"a", plan_a}, {"target", plan_target}, {"n", n}};
      }
      manifest["result"] = result;
    };
  });

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Trace-driven simulation of backup, crashes and restores");
  TraceInput sim_in;
  sim_in.add_options(sim_cmd, true);
  std::string config_path;
  std::size_t runs = 1;
  std::string policy, response, bandwidth;
  std::optional<double> lifetime, loss_cap, w, delay_mean, repair_timeout, target, ttr_floor,
      ttr_multiplier;
  std::optional<std::int64_t> object_size, fragment_size, storage_quota, l;
  bool no_ttr = false, no_invariants = false;
  sim_cmd->add_option("--config", config_path, "key=value config file (SimConfig field names)");
  sim_cmd->add_option("--runs", runs, "Runs with seeds seed..seed+N-1")->capture_default_str();
  sim_cmd->add_option("--policy", policy, "Redundancy policy")->check(CLI::IsMember({"fixed", "adaptive"}));
  sim_cmd->add_option("--response", response, "Crash response")
      ->check(CLI::IsMember({"immediate", "delayed", "delayed_assisted"}));
  sim_cmd->add_option("--bandwidth", bandwidth, "'lognormal' or a quantile,uplink CSV file");
  sim_cmd->add_option("--lifetime", lifetime, "Mean peer lifetime in days (inf disables crashes)");
  sim_cmd->add_option("--object-size", object_size, "Backup object size in bytes (default 10 GiB)");
  sim_cmd->add_option("--fragment-size", fragment_size, "Fragment size in bytes (default 160 MiB)");
  sim_cmd->add_option("--storage-quota", storage_quota, "Per-peer storage quota in bytes (default 50 GiB)");
  sim_cmd->add_option("--target", target, "Fixed-policy availability target (default 0.99)");
  sim_cmd->add_option("--loss-cap", loss_cap, "Data-loss probability cap (default 1e-4)");
  sim_cmd->add_option("--w", w, "Crash-to-restore delay budget in days (default 14)");
  sim_cmd->add_option("--l", l, "Parallel restore downloads (default derived from bandwidth)");
  sim_cmd->add_option("--ttr-floor", ttr_floor, "eTTR floor in days (default 1)");
  sim_cmd->add_option("--ttr-multiplier", ttr_multiplier, "eTTR multiple of minTTR (default 2)");
  sim_cmd->add_flag("--no-ttr", no_ttr, "Disable the eTTR condition of the adaptive policy");
  sim_cmd->add_option("--delay-mean", delay_mean, "Mean absence after a crash in days (default 7)");
  sim_cmd->add_option("--repair-timeout", repair_timeout, "Days before assisted repair (default 7)");
  sim_cmd->add_flag("--no-invariants", no_invariants, "Skip per-slot invariant checks");
  sim_cmd->callback([&] {
    action = [&] {
      SimConfig cfg;
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot open config '" + config_path + "'");
        cfg = parse_sim_config(in, cfg);
      }
      auto set = [&](const std::string& key, const std::string& value) {
        apply_config_value(cfg, key, value);
      };
      if (!policy.empty()) set("redundancy_policy", policy);
      if (!response.empty()) set("response", response);
      if (!bandwidth.empty()) set("bandwidth_source", bandwidth);
      if (lifetime) cfg.mean_lifetime = *lifetime;
      if (object_size) cfg.object_size = *object_size;
      if (fragment_size) cfg.fragment_size = *fragment_size;
      if (storage_quota) cfg.storage_quota = *storage_quota;
      if (target) cfg.target = *target;
      if (loss_cap) cfg.loss_cap = *loss_cap;
      if (w) cfg.w = *w;
      if (l) cfg.l = *l;
      if (ttr_floor) cfg.ttr_floor = *ttr_floor;
      if (ttr_multiplier) cfg.ttr_multiplier = *ttr_multiplier;
      if (no_ttr) cfg.enforce_ttr = false;
      if (delay_mean) cfg.delay_mean = *delay_mean;
      if (repair_timeout) cfg.repair_timeout = *repair_timeout;
      if (no_invariants) cfg.check_invariants = false;
      if (app.get_option("--seed")->count() > 0 || config_path.empty()) cfg.seed = seed;
      cfg.validate();
      if (runs < 1) throw CLI::ValidationError("--runs", "must be at least 1");

      auto m = sim_in.load(cfg.seed, err, manifest);
      std::vector<RunSummary> rows;
      json run_list = json::array();
      for (std::size_t r = 0; r < runs; ++r) {
        SimConfig c = cfg;
        c.seed = cfg.seed + r;
        auto report = run(c, m);
        const auto dir = fs::path(out_dir) / ("run-" + std::to_string(c.seed));
        write_report_csv(dir, report, c.seed);
        rows.push_back(summarize(report, c.seed));
        print_summary(out, rows.back(), "seed " + std::to_string(c.seed));
        for (const auto& v : report.invariant_violations) err << "invariant: " << v << '\n';
        run_list.push_back({{"seed", c.seed}, {"dir", dir.filename().string()}});
      }
      {
        std::ofstream f(fs::path(out_dir) / "summary.csv");
        write_summary_csv(f, rows);
        outputs.push_back("summary.csv");
      }
      const auto mean = average_summaries(rows);
      {
        std::ofstream f(fs::path(out_dir) / "summary_mean.csv");
        write_summary_csv(f, std::span(&mean, 1));
        outputs.push_back("summary_mean.csv");
      }
      if (runs > 1) print_summary(out, mean, "mean of " + std::to_string(runs) + " runs");
      std::ostringstream resolved;
      write_sim_config(resolved, cfg);
      json cfg_json = json::object();
      std::istringstream lines(resolved.str());
      for (std::string line; std::getline(lines, line);) {
        auto eq = line.find('=');
        cfg_json[line.substr(0, eq)] = line.substr(eq + 1);
      }
      manifest["config"] = cfg_json;
      manifest["runs"] = run_list;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  json args = json::array();
  for (int i = 1; i < argc; ++i) args.push_back(argv[i]);
  manifest["tool"] = "p2pbackup";
  manifest["command"] = app.get_subcommands().front()->get_name();
  manifest["argv"] = args;
  manifest["seed"] = seed;
  manifest["out_dir"] = out_dir;

  try {
    action();
    manifest["outputs"] = outputs;
    write_manifest(out_dir, manifest);
  } catch (const CLI::Error& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace p2pbackup
