#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "p2pbackup/redundancy.hpp"
#include "p2pbackup/trace.hpp"

namespace p2pbackup {

inline constexpr std::int64_t kMiB = 1024 * 1024;
inline constexpr std::int64_t kGiB = 1024 * kMiB;

enum class RedundancyPolicy { fixed, adaptive };
enum class ResponsePolicy { immediate, delayed, delayed_assisted };

struct CdfPoint {
  double quantile = 0.0;
  double uplink = 0.0;  // bytes/s
};

/// Where peer uplinks come from. Lognormal parameters are in ln(kB/s), with
/// 1 kB = 1000 bytes; the defaults give a median of 77 kB/s and a mean of 428 kB/s.
struct BandwidthSource {
  enum class Kind { lognormal, cdf };
  Kind kind = Kind::lognormal;
  double mu = std::log(77.0);
  double sigma = std::sqrt(2.0 * std::log(428.0 / 77.0));
  std::vector<CdfPoint> cdf;  // quantiles strictly increasing in [0,1]
  std::string path;           // provenance of `cdf`, echoed in manifests
};

/// CSV `quantile,uplink_bytes_per_sec`; an optional header line is skipped.
std::vector<CdfPoint> read_bandwidth_cdf(std::istream& in);

/// Draws uplinks from a BandwidthSource; downlink is always four times the uplink.
class BandwidthSampler {
 public:
  explicit BandwidthSampler(BandwidthSource source);
  std::pair<double, double> operator()(std::mt19937_64& rng) const;

 private:
  BandwidthSource source_;
};

/// (uplink, downlink) in bytes/s for `count` peers, deterministic in `seed`.
std::vector<std::pair<double, double>> sample_bandwidth(const BandwidthSource& source,
                                                        std::size_t count, std::uint64_t seed);

/// Exponential draw with the given mean; an infinite mean never crashes.
double sample_lifetime(double mean, std::mt19937_64& rng);

/// Experiment parameters. Sizes are bytes; durations are days unless noted.
/// Field names double as config-file keys.
struct SimConfig {
  std::int64_t object_size = 10 * kGiB;
  std::int64_t storage_quota = 50 * kGiB;
  std::int64_t fragment_size = 160 * kMiB;
  std::int64_t slot_seconds = 3600;
  double mean_lifetime = 90.0;  // infinity disables crashes

  RedundancyPolicy redundancy_policy = RedundancyPolicy::adaptive;
  double target = 0.99;  // fixed policy availability target

  // Adaptive thresholds.
  double loss_cap = 1e-4;
  double w = 14.0;
  std::int64_t l = 0;  // parallel downloads; 0 derives it from bandwidths
  double ttr_floor = 1.0;
  double ttr_multiplier = 2.0;
  bool enforce_ttr = true;

  ResponsePolicy response = ResponsePolicy::immediate;
  double delay_mean = 7.0;
  double repair_timeout = 7.0;

  BandwidthSource bandwidth_source;
  std::uint64_t seed = 0;
  bool check_invariants = true;

  std::int64_t k() const { return object_size / fragment_size; }
  AdaptiveThresholds thresholds() const;
  void validate() const;
};

/// Applies one `key=value` setting; throws std::invalid_argument on unknown keys or bad values.
void apply_config_value(SimConfig& config, const std::string& key, const std::string& value);
SimConfig parse_sim_config(std::istream& in, SimConfig base = {});
void write_sim_config(std::ostream& out, const SimConfig& config);

std::string to_string(RedundancyPolicy policy);
std::string to_string(ResponsePolicy response);

/// Times are seconds; ratios are dimensionless.
struct PeerRecord {
  std::size_t peer = 0;
  double uplink = 0.0;
  double availability = 0.0;
  std::optional<double> ttb;
  double min_ttb = 0.0;  // infinite if the trace never allows it
  std::optional<double> ttr;
  std::optional<double> min_ttr;
  std::optional<double> ettr;
  std::optional<double> redundancy_at_completion;
};

struct RestoreRecord {
  std::size_t peer = 0;
  std::int64_t start_slot = 0;
  double ttr = 0.0;
  double min_ttr = 0.0;
  std::optional<double> ettr;  // absent when fewer than k holders were live at start
};

enum class CrashOutcome { restored, lost, pending };
std::string to_string(CrashOutcome outcome);

struct CrashRecord {
  std::size_t peer = 0;
  std::int64_t crash_slot = 0;
  std::optional<std::int64_t> response_slot;
  CrashOutcome outcome = CrashOutcome::pending;
  bool unfinished_backup = false;
  bool unavoidable = false;
};

/// Counters from the per-slot invariant checks.
struct InvariantTally {
  std::int64_t slots_checked = 0;
  std::int64_t byte_budget_checks = 0;
  std::int64_t restore_priority_checks = 0;
  std::int64_t placement_checks = 0;
};

struct SimReport {
  std::size_t num_peers = 0;
  std::size_t num_slots = 0;
  std::int64_t slot_seconds = 3600;
  std::int64_t object_size = 0;
  std::int64_t fragment_size = 0;
  std::int64_t k = 0;
  RedundancyPolicy redundancy_policy = RedundancyPolicy::adaptive;
  ResponsePolicy response = ResponsePolicy::immediate;
  double system_availability = 0.0;
  std::int64_t fixed_n = 0;  // computed even under the adaptive policy

  std::vector<PeerRecord> peers;
  std::vector<RestoreRecord> restores;
  std::vector<CrashRecord> crashes;

  bool assisted = false;
  std::vector<double> server_outbound;  // bytes delivered per slot
  std::vector<double> server_inbound;
  std::vector<double> server_buffered;  // bytes held at the end of each slot
  std::int64_t server_fragments_uploaded = 0;
  std::int64_t server_fragments_fetched = 0;
  std::int64_t server_repairs = 0;
  double server_discarded_bytes = 0.0;  // partial uploads abandoned

  double average_redundancy = 0.0;  // mean n/k at backup completion
  std::vector<std::string> invariant_violations;
  InvariantTally invariants;
};

enum class PeerPhase { backing_up, complete, restoring, absent };

/// Slot-by-slot, trace-driven simulation of every peer backing up, maintaining
/// and restoring one object of `object_size` bytes.
///
/// Each slot runs crashes, then returns, loss detection and repair checks,
/// then transfer planning and allocation, then completions. All randomness
/// comes from one generator seeded by `SimConfig::seed` and consumed in peer
/// index order, so a run is deterministic in (config, matrix).
class Simulation {
 public:
  Simulation(SimConfig config, const AvailabilityMatrix& matrix);
  ~Simulation();
  Simulation(Simulation&&) noexcept;
  Simulation& operator=(Simulation&&) noexcept;

  std::size_t slot() const noexcept;
  bool finished() const noexcept;
  void step();
  /// Runs the remaining slots and returns the final report.
  SimReport finish();

  PeerPhase phase(std::size_t peer) const;
  bool online(std::size_t peer) const;  // as of the last planned slot
  std::vector<std::size_t> holders(std::size_t owner) const;
  std::size_t perceived_fragments(std::size_t owner) const;
  std::size_t pending_uploads(std::size_t owner) const;
  /// Uploads the owner has opened since the start of the run.
  std::int64_t uploads_started(std::size_t owner) const;
  std::int64_t fixed_n() const noexcept;
  std::int64_t parallel_downloads(std::size_t owner) const;
  std::int64_t server_buffered(std::size_t owner) const;
  bool repair_active(std::size_t owner) const;
  const SimReport& report() const noexcept;

  /// Crash `peer` at the start of the current slot. `return_delay` (seconds)
  /// overrides the drawn absence under delayed responses.
  void on_crash(std::size_t peer, std::optional<double> return_delay = std::nullopt);
  /// Opens uploads of fresh fragments for `owner` if its policy is unmet;
  /// returns how many were opened.
  std::size_t maintenance_step(std::size_t owner);
  /// Starts server repairs for absent owners past the timeout whose loss
  /// probability exceeds the cap; returns how many started.
  std::size_t assisted_repair_check();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

SimReport run(const SimConfig& config, const AvailabilityMatrix& matrix);

}  // namespace p2pbackup
