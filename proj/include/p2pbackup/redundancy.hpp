#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace p2pbackup {

inline constexpr double kSecondsPerDay = 86400.0;

/// Erasure-coding shape of one backup object. Sizes are in bytes.
struct CodingParams {
  std::int64_t object_size = 0;
  std::int64_t fragment_size = 0;
  std::int64_t k = 0;
  std::int64_t n = 0;

  double rate() const { return static_cast<double>(n) / static_cast<double>(k); }

  /// k = object_size / fragment_size; throws unless it divides exactly.
  static CodingParams make(std::int64_t object_size, std::int64_t fragment_size,
                           std::int64_t n = 0);
};

/// Stopping thresholds of the adaptive redundancy policy. Durations in seconds.
struct AdaptiveThresholds {
  bool enforce_ttr = true;
  double ttr_floor = kSecondsPerDay;  // eTTR <= max(ttr_floor, ttr_multiplier * minTTR)
  double ttr_multiplier = 2.0;
  double loss_cap = 1e-4;
  double restore_delay = 14.0 * kSecondsPerDay;  // w
  double mean_lifetime = 90.0 * kSecondsPerDay;
  /// Parallel downloads l; 0 selects default_parallel_downloads().
  std::int64_t parallel_downloads = 0;

  void validate() const;
};

/// A peer holding one fragment: long-run availability and uplink in bytes/s.
struct Holder {
  double availability = 0.0;
  double uplink = 0.0;
};

/// Raised when a bounded search (fixed n) or an estimate (eTTR) is undefined.
class RedundancyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// P(X >= at_least) for X ~ Binomial(n, p), summed in log space.
double binomial_upper_tail(std::int64_t n, std::int64_t at_least, double p);

/// Smallest n >= k such that P(Binomial(n, a) >= k) >= target.
std::int64_t fixed_redundancy_n(std::int64_t k, double a, double target,
                                std::int64_t ceiling = 100000);

/// l = min(k, max(1, floor(d0 / median holder uplink))).
std::int64_t default_parallel_downloads(double d0, std::span<const Holder> holders,
                                        std::int64_t k);

/// eTTR = max(o/d0, o/(l * a_j * u_j)) where j is the k-th best holder by a_i*u_i.
/// Infinite when that holder's expected rate is zero.
double estimate_ttr(double object_size, double d0, std::span<const Holder> holders,
                    std::int64_t k, std::int64_t parallel_downloads);

/// Probability that more than n-k of n holders crash within t_elapsed, with
/// exponential lifetimes of the given mean (same time unit).
double data_loss_probability(std::int64_t n, std::int64_t k, double t_elapsed,
                             double mean_lifetime);

enum class BackupDecision { complete, cont };

struct BackupAssessment {
  BackupDecision decision = BackupDecision::cont;
  double ettr = 0.0;
  double ttr_cap = 0.0;
  double loss_probability = 1.0;
  std::int64_t parallel_downloads = 0;
};

BackupAssessment assess_backup(double object_size, double d0, double min_ttr,
                               std::span<const Holder> holders, std::int64_t k,
                               const AdaptiveThresholds& thresholds);

/// complete iff n >= k, eTTR under its cap, and loss probability over
/// w + eTTR at most loss_cap.
BackupDecision backup_complete(double object_size, double d0, double min_ttr,
                               std::span<const Holder> holders, std::int64_t k,
                               const AdaptiveThresholds& thresholds);

}  // namespace p2pbackup
