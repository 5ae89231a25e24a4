#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "p2pbackup/trace.hpp"

namespace p2pbackup {

struct SchedCompareParams {
  std::vector<std::int64_t> x_values{40, 60};
  std::vector<double> ratios{1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0};
  std::size_t trials = 200;
  double start_fraction = 0.25;  // start slot drawn from the first part of the trace
  std::uint64_t seed = 0;
};

/// Means over the feasible trials of one (x, I/x) grid point. Completion
/// times are in slots; the baseline is minTTB measured in slots.
struct SchedComparePoint {
  std::int64_t x = 0;
  double ratio = 0.0;
  std::size_t candidates = 0;  // I = round(ratio * x)
  std::size_t trials = 0;      // feasible trials averaged
  std::size_t skipped = 0;     // trials where a policy could not finish
  double mean_baseline = 0.0;
  double mean_optimal = 0.0;
  double mean_random = 0.0;
  double optimal_over_baseline = 0.0;
  double random_over_baseline = 0.0;
  double random_over_optimal = 0.0;
};

/// For each grid point: draw an owner, I candidate peers and a start slot,
/// then time the optimal and randomized schedules against minTTB. Grid
/// points needing more candidates than the trace has peers are omitted.
std::vector<SchedComparePoint> sched_compare(const AvailabilityMatrix& matrix,
                                             const SchedCompareParams& params);

void write_sched_compare_csv(std::ostream& out, std::span<const SchedComparePoint> points);

/// Entry point of the command-line tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace p2pbackup
