#include "p2pbackup/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace p2pbackup {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string num(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : ""; }

double to_double(const std::string& s) {
  if (s.empty()) return kNaN;
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

std::optional<double> to_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return to_double(s);
}

std::int64_t to_int(const std::string& s) {
  std::size_t used = 0;
  long long v = std::stoll(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad integer '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Rows of a CSV file keyed by its header.
std::vector<std::map<std::string, std::string>> read_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split(line);
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != header.size())
      throw std::invalid_argument("CSV row has " + std::to_string(cells.size()) +
                                  " cells, expected " + std::to_string(header.size()));
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

double safe_div(double a, double b) { return b > 0 ? a / b : 0.0; }

double median_or_nan(const std::vector<double>& v) { return v.empty() ? kNaN : median(v); }

RedundancyPolicy policy_from(const std::string& s) {
  if (s == "fixed") return RedundancyPolicy::fixed;
  if (s == "adaptive") return RedundancyPolicy::adaptive;
  throw std::invalid_argument("unknown policy '" + s + "'");
}

ResponsePolicy response_from(const std::string& s) {
  if (s == "immediate") return ResponsePolicy::immediate;
  if (s == "delayed") return ResponsePolicy::delayed;
  if (s == "delayed_assisted") return ResponsePolicy::delayed_assisted;
  throw std::invalid_argument("unknown response '" + s + "'");
}

CrashOutcome outcome_from(const std::string& s) {
  if (s == "restored") return CrashOutcome::restored;
  if (s == "lost") return CrashOutcome::lost;
  if (s == "pending") return CrashOutcome::pending;
  throw std::invalid_argument("unknown outcome '" + s + "'");
}

void finish_fractions(LossBreakdown& b) {
  b.lost_fraction = safe_div(static_cast<double>(b.lost_count), static_cast<double>(b.crashed_count));
  b.unfinished_backup_fraction =
      safe_div(static_cast<double>(b.unfinished_count), static_cast<double>(b.lost_count));
  b.unavoidable_fraction =
      safe_div(static_cast<double>(b.unavoidable_count), static_cast<double>(b.lost_count));
}

}  // namespace

CdfSeries cdf(std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("cdf of an empty sample");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  CdfSeries out;
  const auto n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    out.values.push_back(sorted[i]);
    out.fractions.push_back(static_cast<double>(i + 1) / n);
  }
  return out;
}

double percentile(std::span<const double> samples, double q) {
  if (samples.empty()) throw std::invalid_argument("percentile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile outside [0,1]");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
  return sorted[std::max<std::size_t>(rank, 1) - 1];
}

double median(std::span<const double> samples) { return percentile(samples, 0.5); }

LossBreakdown loss_breakdown(const SimReport& report) {
  LossBreakdown b;
  b.crashed_count = report.crashes.size();
  for (const auto& c : report.crashes) {
    if (c.outcome != CrashOutcome::lost) continue;
    ++b.lost_count;
    if (c.unfinished_backup) ++b.unfinished_count;
    if (c.unavoidable) ++b.unavoidable_count;
  }
  finish_fractions(b);
  return b;
}

LossBreakdown loss_breakdown_by_peer(const SimReport& report) {
  struct Flags {
    bool lost = false, unfinished = false, unavoidable = false;
  };
  std::map<std::size_t, Flags> peers;
  for (const auto& c : report.crashes) {
    auto& f = peers[c.peer];
    if (c.outcome != CrashOutcome::lost) continue;
    f.lost = true;
    f.unfinished |= c.unfinished_backup;
    f.unavoidable |= c.unavoidable;
  }
  LossBreakdown b;
  b.crashed_count = peers.size();
  for (const auto& [peer, f] : peers) {
    b.lost_count += f.lost;
    b.unfinished_count += f.unfinished;
    b.unavoidable_count += f.unavoidable;
  }
  finish_fractions(b);
  return b;
}

NormalizedRatios normalized_ratios(const SimReport& report) {
  NormalizedRatios r;
  for (const auto& p : report.peers) {
    if (p.ttb && p.min_ttb > 0.0 && std::isfinite(p.min_ttb)) r.ttb.push_back(*p.ttb / p.min_ttb);
    if (p.ttr && p.min_ttr && *p.min_ttr > 0.0) r.ttr.push_back(*p.ttr / *p.min_ttr);
    if (p.ttr && p.ettr && *p.ttr > 0.0) r.ettr_over_ttr.push_back(*p.ettr / *p.ttr);
  }
  return r;
}

ServerTraffic server_traffic(const SimReport& report) {
  ServerTraffic s;
  s.total_backup_bytes =
      static_cast<double>(report.num_peers) * static_cast<double>(report.object_size);
  if (!report.assisted) return s;
  s.assisted = true;
  s.outbound = report.server_outbound;
  s.buffered = report.server_buffered;
  for (double v : s.outbound) {
    s.total_outbound += v;
    s.outbound_fraction.push_back(safe_div(v, s.total_backup_bytes));
  }
  for (double v : s.buffered) s.buffered_fraction.push_back(safe_div(v, s.total_backup_bytes));
  for (double v : s.outbound_fraction) s.peak_outbound_fraction = std::max(s.peak_outbound_fraction, v);
  for (double v : s.buffered_fraction) s.peak_buffered_fraction = std::max(s.peak_buffered_fraction, v);
  return s;
}

RunSummary summarize(const SimReport& report, std::uint64_t seed) {
  RunSummary s;
  s.redundancy_policy = to_string(report.redundancy_policy);
  s.response = to_string(report.response);
  s.seed = seed;
  s.num_peers = report.num_peers;
  s.num_slots = report.num_slots;
  s.slot_seconds = report.slot_seconds;
  s.object_size = report.object_size;
  s.fragment_size = report.fragment_size;
  s.k = report.k;
  s.fixed_n = report.fixed_n;
  s.system_availability = report.system_availability;
  s.fixed_rate = report.k > 0 ? static_cast<double>(report.fixed_n) / static_cast<double>(report.k) : 0.0;
  s.average_redundancy = report.average_redundancy;
  for (const auto& p : report.peers) s.completed_backups += p.ttb.has_value();
  s.restores = 0;
  for (const auto& c : report.crashes) s.restores += c.outcome == CrashOutcome::restored;
  const auto by_crash = loss_breakdown(report);
  s.crashes = by_crash.crashed_count;
  s.lost = by_crash.lost_count;
  s.lost_fraction = by_crash.lost_fraction;
  s.lost_peer_fraction = loss_breakdown_by_peer(report).lost_fraction;
  s.unfinished_fraction = by_crash.unfinished_backup_fraction;
  s.unavoidable_fraction = by_crash.unavoidable_fraction;
  const auto ratios = normalized_ratios(report);
  s.median_ttb_ratio = median_or_nan(ratios.ttb);
  s.median_ttr_ratio = median_or_nan(ratios.ttr);
  s.median_ettr_ttr = median_or_nan(ratios.ettr_over_ttr);
  s.server_repairs = report.server_repairs;
  s.server_fragments_uploaded = report.server_fragments_uploaded;
  s.server_fragments_fetched = report.server_fragments_fetched;
  for (double v : report.server_outbound) s.server_outbound_bytes += v;
  for (double v : report.server_inbound) s.server_inbound_bytes += v;
  s.peak_buffered_fraction = server_traffic(report).peak_buffered_fraction;
  s.invariant_violations = report.invariant_violations.size();
  return s;
}

RunSummary average_summaries(std::span<const RunSummary> runs) {
  if (runs.empty()) throw std::invalid_argument("no runs to average");
  RunSummary out = runs.front();
  auto mean = [&](auto field) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : runs) {
      const double v = static_cast<double>(r.*field);
      if (std::isnan(v)) continue;
      sum += v;
      ++count;
    }
    return count ? sum / static_cast<double>(count) : kNaN;
  };
  out.system_availability = mean(&RunSummary::system_availability);
  out.fixed_rate = mean(&RunSummary::fixed_rate);
  out.average_redundancy = mean(&RunSummary::average_redundancy);
  out.lost_fraction = mean(&RunSummary::lost_fraction);
  out.lost_peer_fraction = mean(&RunSummary::lost_peer_fraction);
  out.unfinished_fraction = mean(&RunSummary::unfinished_fraction);
  out.unavoidable_fraction = mean(&RunSummary::unavoidable_fraction);
  out.median_ttb_ratio = mean(&RunSummary::median_ttb_ratio);
  out.median_ttr_ratio = mean(&RunSummary::median_ttr_ratio);
  out.median_ettr_ttr = mean(&RunSummary::median_ettr_ttr);
  out.server_outbound_bytes = mean(&RunSummary::server_outbound_bytes);
  out.server_inbound_bytes = mean(&RunSummary::server_inbound_bytes);
  out.peak_buffered_fraction = mean(&RunSummary::peak_buffered_fraction);
  // Counts are averaged and rounded to the nearest integer.
  auto count = [&](auto field) { return std::llround(mean(field)); };
  out.fixed_n = count(&RunSummary::fixed_n);
  out.completed_backups = static_cast<std::size_t>(count(&RunSummary::completed_backups));
  out.restores = static_cast<std::size_t>(count(&RunSummary::restores));
  out.crashes = static_cast<std::size_t>(count(&RunSummary::crashes));
  out.lost = static_cast<std::size_t>(count(&RunSummary::lost));
  out.server_repairs = count(&RunSummary::server_repairs);
  out.server_fragments_uploaded = count(&RunSummary::server_fragments_uploaded);
  out.server_fragments_fetched = count(&RunSummary::server_fragments_fetched);
  std::size_t violations = 0;
  for (const auto& r : runs) violations += r.invariant_violations;
  out.invariant_violations = violations;
  return out;
}

void write_peers_csv(std::ostream& out, const SimReport& report) {
  out << "peer_id,uplink,availability,ttb,min_ttb,ttr,min_ttr,ettr,redundancy_at_completion\n";
  for (const auto& p : report.peers)
    out << p.peer << ',' << num(p.uplink) << ',' << num(p.availability) << ',' << num(p.ttb)
        << ',' << num(p.min_ttb) << ',' << num(p.ttr) << ',' << num(p.min_ttr) << ','
        << num(p.ettr) << ',' << num(p.redundancy_at_completion) << '\n';
}

void write_crashes_csv(std::ostream& out, const SimReport& report) {
  out << "peer_id,crash_slot,response_slot,outcome,unfinished,unavoidable\n";
  for (const auto& c : report.crashes)
    out << c.peer << ',' << c.crash_slot << ','
        << (c.response_slot ? std::to_string(*c.response_slot) : std::string()) << ','
        << to_string(c.outcome) << ',' << int(c.unfinished_backup) << ',' << int(c.unavoidable)
        << '\n';
}

void write_server_csv(std::ostream& out, const SimReport& report) {
  out << "slot,outbound_bytes,buffered_bytes,inbound_bytes\n";
  if (report.server_repairs == 0) return;
  for (std::size_t t = 0; t < report.server_outbound.size(); ++t)
    out << t << ',' << num(report.server_outbound[t]) << ',' << num(report.server_buffered[t])
        << ',' << num(report.server_inbound[t]) << '\n';
}

void write_summary_csv(std::ostream& out, std::span<const RunSummary> rows) {
  out << "redundancy_policy,response,seed,num_peers,num_slots,slot_seconds,object_size,"
         "fragment_size,k,fixed_n,system_availability,fixed_rate,average_redundancy,"
         "completed_backups,restores,crashes,lost,lost_fraction,lost_peer_fraction,"
         "unfinished_fraction,unavoidable_fraction,median_ttb_ratio,median_ttr_ratio,"
         "median_ettr_ttr,server_repairs,server_fragments_uploaded,server_fragments_fetched,"
         "server_outbound_bytes,server_inbound_bytes,peak_buffered_fraction,invariant_violations\n";
  for (const auto& s : rows)
    out << s.redundancy_policy << ',' << s.response << ',' << s.seed << ',' << s.num_peers << ','
        << s.num_slots << ',' << s.slot_seconds << ',' << s.object_size << ',' << s.fragment_size
        << ',' << s.k << ',' << s.fixed_n << ',' << num(s.system_availability) << ','
        << num(s.fixed_rate) << ',' << num(s.average_redundancy) << ',' << s.completed_backups
        << ',' << s.restores << ',' << s.crashes << ',' << s.lost << ',' << num(s.lost_fraction)
        << ',' << num(s.lost_peer_fraction) << ',' << num(s.unfinished_fraction) << ','
        << num(s.unavoidable_fraction) << ',' << num(s.median_ttb_ratio) << ','
        << num(s.median_ttr_ratio) << ',' << num(s.median_ettr_ttr) << ',' << s.server_repairs
        << ',' << s.server_fragments_uploaded << ',' << s.server_fragments_fetched << ','
        << num(s.server_outbound_bytes) << ',' << num(s.server_inbound_bytes) << ','
        << num(s.peak_buffered_fraction) << ',' << s.invariant_violations << '\n';
}

std::vector<RunSummary> read_summary_csv(std::istream& in) {
  std::vector<RunSummary> out;
  for (auto& row : read_table(in)) {
    RunSummary s;
    s.redundancy_policy = row.at("redundancy_policy");
    s.response = row.at("response");
    s.seed = static_cast<std::uint64_t>(to_int(row.at("seed")));
    s.num_peers = static_cast<std::size_t>(to_int(row.at("num_peers")));
    s.num_slots = static_cast<std::size_t>(to_int(row.at("num_slots")));
    s.slot_seconds = to_int(row.at("slot_seconds"));
    s.object_size = to_int(row.at("object_size"));
    s.fragment_size = to_int(row.at("fragment_size"));
    s.k = to_int(row.at("k"));
    s.fixed_n = to_int(row.at("fixed_n"));
    s.system_availability = to_double(row.at("system_availability"));
    s.fixed_rate = to_double(row.at("fixed_rate"));
    s.average_redundancy = to_double(row.at("average_redundancy"));
    s.completed_backups = static_cast<std::size_t>(to_int(row.at("completed_backups")));
    s.restores = static_cast<std::size_t>(to_int(row.at("restores")));
    s.crashes = static_cast<std::size_t>(to_int(row.at("crashes")));
    s.lost = static_cast<std::size_t>(to_int(row.at("lost")));
    s.lost_fraction = to_double(row.at("lost_fraction"));
    s.lost_peer_fraction = to_double(row.at("lost_peer_fraction"));
    s.unfinished_fraction = to_double(row.at("unfinished_fraction"));
    s.unavoidable_fraction = to_double(row.at("unavoidable_fraction"));
    s.median_ttb_ratio = to_double(row.at("median_ttb_ratio"));
    s.median_ttr_ratio = to_double(row.at("median_ttr_ratio"));
    s.median_ettr_ttr = to_double(row.at("median_ettr_ttr"));
    s.server_repairs = to_int(row.at("server_repairs"));
    s.server_fragments_uploaded = to_int(row.at("server_fragments_uploaded"));
    s.server_fragments_fetched = to_int(row.at("server_fragments_fetched"));
    s.server_outbound_bytes = to_double(row.at("server_outbound_bytes"));
    s.server_inbound_bytes = to_double(row.at("server_inbound_bytes"));
    s.peak_buffered_fraction = to_double(row.at("peak_buffered_fraction"));
    s.invariant_violations = static_cast<std::size_t>(to_int(row.at("invariant_violations")));
    out.push_back(std::move(s));
  }
  return out;
}

void write_report_csv(const std::filesystem::path& dir, const SimReport& report,
                      std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    return f;
  };
  {
    auto f = open("peers.csv");
    write_peers_csv(f, report);
  }
  {
    auto f = open("crashes.csv");
    write_crashes_csv(f, report);
  }
  if (report.assisted) {
    auto f = open("server.csv");
    write_server_csv(f, report);
  }
  {
    auto f = open("summary.csv");
    const RunSummary row = summarize(report, seed);
    write_summary_csv(f, std::span(&row, 1));
  }
}

SimReport read_report_csv(const std::filesystem::path& dir) {
  auto open = [&](const char* name) {
    std::ifstream f(dir / name);
    if (!f) throw std::runtime_error("cannot read " + (dir / name).string());
    return f;
  };
  SimReport r;
  {
    auto f = open("summary.csv");
    auto rows = read_summary_csv(f);
    if (rows.size() != 1) throw std::invalid_argument("summary.csv must hold exactly one run");
    const auto& s = rows.front();
    r.num_peers = s.num_peers;
    r.num_slots = s.num_slots;
    r.slot_seconds = s.slot_seconds;
    r.object_size = s.object_size;
    r.fragment_size = s.fragment_size;
    r.k = s.k;
    r.fixed_n = s.fixed_n;
    r.redundancy_policy = policy_from(s.redundancy_policy);
    r.response = response_from(s.response);
    r.system_availability = s.system_availability;
    r.average_redundancy = s.average_redundancy;
    r.server_repairs = s.server_repairs;
    r.server_fragments_uploaded = s.server_fragments_uploaded;
    r.server_fragments_fetched = s.server_fragments_fetched;
    r.invariant_violations.assign(s.invariant_violations, "recorded in summary.csv");
  }
  {
    auto f = open("peers.csv");
    for (auto& row : read_table(f)) {
      PeerRecord p;
      p.peer = static_cast<std::size_t>(to_int(row.at("peer_id")));
      p.uplink = to_double(row.at("uplink"));
      p.availability = to_double(row.at("availability"));
      p.ttb = to_optional(row.at("ttb"));
      p.min_ttb = to_double(row.at("min_ttb"));
      p.ttr = to_optional(row.at("ttr"));
      p.min_ttr = to_optional(row.at("min_ttr"));
      p.ettr = to_optional(row.at("ettr"));
      p.redundancy_at_completion = to_optional(row.at("redundancy_at_completion"));
      r.peers.push_back(p);
    }
  }
  {
    auto f = open("crashes.csv");
    for (auto& row : read_table(f)) {
      CrashRecord c;
      c.peer = static_cast<std::size_t>(to_int(row.at("peer_id")));
      c.crash_slot = to_int(row.at("crash_slot"));
      if (!row.at("response_slot").empty()) c.response_slot = to_int(row.at("response_slot"));
      c.outcome = outcome_from(row.at("outcome"));
      c.unfinished_backup = row.at("unfinished") == "1";
      c.unavoidable = row.at("unavoidable") == "1";
      r.crashes.push_back(c);
    }
  }
  if (std::filesystem::exists(dir / "server.csv")) {
    r.assisted = true;
    auto f = open("server.csv");
    for (auto& row : read_table(f)) {
      r.server_outbound.push_back(to_double(row.at("outbound_bytes")));
      r.server_buffered.push_back(to_double(row.at("buffered_bytes")));
      r.server_inbound.push_back(to_double(row.at("inbound_bytes")));
    }
  }
  return r;
}

}  // namespace p2pbackup
