#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "p2pbackup/sim.hpp"

namespace p2pbackup {

/// Empirical CDF: distinct sorted values and the fraction of samples <= each.
struct CdfSeries {
  std::vector<double> values;
  std::vector<double> fractions;
};

CdfSeries cdf(std::span<const double> samples);

/// Nearest-rank percentile, q in [0,1]: the ceil(q*N)-th smallest sample
/// (the smallest for q = 0). Throws on empty input.
double percentile(std::span<const double> samples, double q);
double median(std::span<const double> samples);

struct LossBreakdown {
  std::size_t crashed_count = 0;
  std::size_t lost_count = 0;
  std::size_t unfinished_count = 0;  // lost with an incomplete backup at crash time
  std::size_t unavoidable_count = 0;  // lost before minTTB could elapse
  double lost_fraction = 0.0;         // of crashed
  double unfinished_backup_fraction = 0.0;  // of lost
  double unavoidable_fraction = 0.0;        // of lost
};

/// One entry per crash episode.
LossBreakdown loss_breakdown(const SimReport& report);
/// One entry per peer that crashed at least once; a peer counts as lost,
/// unfinished or unavoidable if any of its episodes does.
LossBreakdown loss_breakdown_by_peer(const SimReport& report);

struct NormalizedRatios {
  std::vector<double> ttb;           // TTB / minTTB
  std::vector<double> ttr;           // TTR / minTTR
  std::vector<double> ettr_over_ttr;  // eTTR / TTR
};

/// Per-peer ratios; peers without the relevant completed operation are omitted.
NormalizedRatios normalized_ratios(const SimReport& report);

struct ServerTraffic {
  bool assisted = false;  // false means the series are empty
  double total_backup_bytes = 0.0;  // sum of object sizes over peers
  std::vector<double> outbound;
  std::vector<double> outbound_fraction;
  std::vector<double> buffered;
  std::vector<double> buffered_fraction;
  double total_outbound = 0.0;
  double peak_outbound_fraction = 0.0;
  double peak_buffered_fraction = 0.0;
};

ServerTraffic server_traffic(const SimReport& report);

/// Run-level aggregates; undefined medians are NaN.
struct RunSummary {
  std::string redundancy_policy;
  std::string response;
  std::uint64_t seed = 0;
  std::size_t num_peers = 0;
  std::size_t num_slots = 0;
  std::int64_t slot_seconds = 0;
  std::int64_t object_size = 0;
  std::int64_t fragment_size = 0;
  std::int64_t k = 0;
  std::int64_t fixed_n = 0;
  double system_availability = 0.0;
  double fixed_rate = 0.0;  // fixed_n / k
  double average_redundancy = 0.0;
  std::size_t completed_backups = 0;
  std::size_t restores = 0;
  std::size_t crashes = 0;
  std::size_t lost = 0;
  double lost_fraction = 0.0;
  double lost_peer_fraction = 0.0;
  double unfinished_fraction = 0.0;
  double unavoidable_fraction = 0.0;
  double median_ttb_ratio = 0.0;
  double median_ttr_ratio = 0.0;
  double median_ettr_ttr = 0.0;
  std::int64_t server_repairs = 0;
  std::int64_t server_fragments_uploaded = 0;
  std::int64_t server_fragments_fetched = 0;
  double server_outbound_bytes = 0.0;
  double server_inbound_bytes = 0.0;
  double peak_buffered_fraction = 0.0;
  std::size_t invariant_violations = 0;
};

RunSummary summarize(const SimReport& report, std::uint64_t seed = 0);

/// Field-wise mean of the numeric columns; text columns come from the first run.
RunSummary average_summaries(std::span<const RunSummary> runs);

void write_peers_csv(std::ostream& out, const SimReport& report);
void write_crashes_csv(std::ostream& out, const SimReport& report);
/// Header only when no repair was ever triggered.
void write_server_csv(std::ostream& out, const SimReport& report);
void write_summary_csv(std::ostream& out, std::span<const RunSummary> rows);

/// Writes peers.csv, crashes.csv, server.csv (assisted runs only) and
/// summary.csv into `dir`, creating it if needed.
void write_report_csv(const std::filesystem::path& dir, const SimReport& report,
                      std::uint64_t seed = 0);

/// Rebuilds the parts of a report the CSV files carry. Restore episodes and
/// invariant counters are not exported.
SimReport read_report_csv(const std::filesystem::path& dir);

std::vector<RunSummary> read_summary_csv(std::istream& in);

}  // namespace p2pbackup
