#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "p2pbackup/flow.hpp"
#include "p2pbackup/trace.hpp"

namespace p2pbackup {

enum class Direction { backup, restore };

/// A single-owner backup or restore task over an availability matrix.
///
/// Rows of the matrix are peers; `owner` is the data owner and every other
/// row is a candidate remote peer (restricted to `storage_set` for restores).
/// Rates and caps are in fragments per slot.
struct TransferProblem {
  AvailabilityMatrix matrix;
  std::size_t owner = 0;
  Direction direction = Direction::backup;
  std::int64_t x = 1;
  std::int64_t owner_rate = 1;
  std::int64_t peer_rate = 1;
  std::int64_t per_peer_cap = 1;
  std::vector<std::size_t> storage_set;

  /// Throws std::invalid_argument if an invariant does not hold.
  void validate() const;

  /// Remote peers the owner may transfer with, in ascending row order.
  std::vector<std::size_t> remote_peers() const;
};

struct ScheduleEntry {
  std::size_t peer = 0;
  std::size_t slot = 0;  // matrix column, 0-based

  auto operator<=>(const ScheduleEntry&) const = default;
};

/// A multiset of (peer, slot) transfer decisions, one fragment each.
struct Schedule {
  std::vector<ScheduleEntry> entries;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
};

enum class ViolationKind {
  owner_rate_exceeded,
  peer_rate_exceeded,
  owner_offline,
  peer_offline,
  peer_cap_exceeded,
  not_in_storage_set,
  owner_as_target,
};

struct Violation {
  ViolationKind kind;
  ScheduleEntry entry;
  std::string message;
};

std::vector<Violation> validate_schedule(const TransferProblem& problem,
                                         const Schedule& schedule);

struct CompletionTime {
  std::int64_t slots = 0;  // 1-based label of the last slot used
  bool empty = false;
};

/// C(S): the number of slots elapsed up to and including the last transfer.
CompletionTime completion_time(const Schedule& schedule);

/// Source, sink, one node per slot in [0, horizon), one node per remote peer.
FlowNetwork build_flow_network(const TransferProblem& problem, std::size_t horizon);

struct MaxFragments {
  std::int64_t fragments = 0;  // F(horizon)
  Schedule schedule;
};

MaxFragments max_fragments(const TransferProblem& problem, std::size_t horizon);

struct TransferResult {
  bool feasible = false;
  std::int64_t completion = 0;  // slots; meaningful only when feasible
  std::int64_t transferable = 0;  // fragments placed (F(num_slots) when infeasible)
  Schedule schedule;
};

/// O(x) via doubling the horizon until F >= x, then binary search on the
/// bracket. The returned schedule holds exactly x entries.
TransferResult optimal_completion(const TransferProblem& problem);

/// Greedy slot scan choosing eligible online peers uniformly at random.
TransferResult random_schedule(const TransferProblem& problem, std::uint64_t seed);

/// Elapsed slots from `start_slot` until the owner has been online for
/// ceil(amount / rate) slots; nullopt if the row ends first.
std::optional<std::int64_t> ideal_baseline(std::span<const std::uint8_t> owner_row,
                                           std::int64_t amount, std::int64_t rate,
                                           std::size_t start_slot = 0);

/// Seconds elapsed from the start of `start_slot` until the owner has spent
/// `online_seconds` online, counting whole online slots of `slot_seconds`.
std::optional<double> ideal_online_time(std::span<const std::uint8_t> owner_row,
                                        double online_seconds, std::int64_t slot_seconds,
                                        std::size_t start_slot = 0);

struct ProblemFile {
  std::string matrix_path;  // value of `matrix=`; empty if absent
  TransferProblem problem;  // matrix left empty; the caller loads it
};

/// Reads whitespace-separated `key=value` tokens:
/// `matrix=<path> owner=<i> direction=backup|restore x=<n> u0=<r> m=<c>
/// [peer_rate=<r>] [storage=<i,j,...>]`. `#` starts a comment.
ProblemFile parse_problem_file(std::istream& in);

/// CSV `peer,slot` with 0-based matrix indices.
void write_schedule_csv(std::ostream& out, const Schedule& schedule);

}  // namespace p2pbackup
