#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace p2pbackup {

enum class EventKind { login, logoff };

struct AvailabilityEvent {
  std::string peer_id;
  std::int64_t timestamp = 0;  // seconds since trace epoch
  EventKind kind = EventKind::login;

  bool operator==(const AvailabilityEvent&) const = default;
};

/// Raised for malformed trace or matrix records; carries the 1-based line.
class TraceParseError : public std::runtime_error {
 public:
  TraceParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct ParsedTrace {
  std::vector<AvailabilityEvent> events;
  std::vector<std::string> warnings;
};

/// Per-peer, per-slot online indicator. Rows are peers, columns are slots.
class AvailabilityMatrix {
 public:
  AvailabilityMatrix() = default;
  AvailabilityMatrix(std::size_t num_peers, std::size_t num_slots,
                     std::int64_t slot_seconds, std::vector<std::uint8_t> bits,
                     std::vector<std::string> peer_ids = {});

  /// Builds a matrix from strings of '0'/'1', one per peer.
  static AvailabilityMatrix from_rows(const std::vector<std::string>& rows,
                                      std::int64_t slot_seconds = 3600);

  std::size_t num_peers() const noexcept { return num_peers_; }
  std::size_t num_slots() const noexcept { return num_slots_; }
  std::int64_t slot_seconds() const noexcept { return slot_seconds_; }
  bool empty() const noexcept { return num_peers_ == 0 || num_slots_ == 0; }

  bool online(std::size_t peer, std::size_t slot) const {
    return bits_[peer * num_slots_ + slot] != 0;
  }
  std::span<const std::uint8_t> row(std::size_t peer) const {
    return {bits_.data() + peer * num_slots_, num_slots_};
  }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
  const std::vector<std::string>& peer_ids() const noexcept { return peer_ids_; }

  /// Copy of the given rows restricted to slots [slot_begin, slot_end).
  AvailabilityMatrix slice(std::span<const std::size_t> rows, std::size_t slot_begin,
                           std::size_t slot_end) const;

  bool operator==(const AvailabilityMatrix&) const = default;

 private:
  std::size_t num_peers_ = 0;
  std::size_t num_slots_ = 0;
  std::int64_t slot_seconds_ = 3600;
  std::vector<std::uint8_t> bits_;
  std::vector<std::string> peer_ids_;
};

struct PeerAvailabilityStats {
  std::vector<double> per_peer_availability;
  double system_availability = 0.0;
};

struct FilterResult {
  AvailabilityMatrix matrix;
  std::vector<std::size_t> kept;  // row indices into the input matrix
};

enum class AvailabilityDistribution { constant, uniform, beta };

/// Distribution of per-peer target availability a_i for synthetic traces.
/// constant uses `first`; uniform draws from [first, second]; beta uses
/// shape parameters (first, second).
struct BaseAvailability {
  AvailabilityDistribution kind = AvailabilityDistribution::uniform;
  double first = 0.2;
  double second = 0.9;
};

struct SynthParams {
  std::size_t num_peers = 100;
  std::size_t num_slots = 24 * 7 * 4;
  std::int64_t slot_seconds = 3600;
  BaseAvailability base;
  double diurnal_amplitude = 0.5;
  double weekend_factor = 1.0;
};

struct SlotizeOptions {
  std::int64_t slot_seconds = 3600;
  /// Trace length; defaults to the last timestamp rounded up to a whole slot.
  std::optional<std::int64_t> horizon_seconds;
  /// Row order. Empty means lexicographic order of the peer ids seen.
  std::vector<std::string> peer_order;
};

inline constexpr double kDefaultMinUptime = 4.0 / 24.0;

ParsedTrace parse_events(std::istream& in);
void write_events(std::ostream& out, std::span<const AvailabilityEvent> events);

/// A peer is online in a slot iff it is connected for at least half of it.
AvailabilityMatrix slotize(std::span<const AvailabilityEvent> events,
                           const SlotizeOptions& options);

/// Inverse of slotize for whole-slot sessions: one login/logoff pair per run of ones.
std::vector<AvailabilityEvent> matrix_to_events(const AvailabilityMatrix& matrix);

FilterResult filter_min_uptime(const AvailabilityMatrix& matrix,
                               double min_fraction = kDefaultMinUptime);

/// Independent-per-slot Bernoulli trace modulated by a 24-hour sinusoid
/// (peak at 18:00) and a weekend multiplier on days 5 and 6 of each week.
AvailabilityMatrix synth_trace(const SynthParams& params, std::uint64_t seed);

/// Online probability multiplier applied to slot `slot` by synth_trace.
double synth_profile(const SynthParams& params, std::size_t slot);

PeerAvailabilityStats availability_stats(const AvailabilityMatrix& matrix);

AvailabilityMatrix read_matrix(std::istream& in);
void write_matrix(std::ostream& out, const AvailabilityMatrix& matrix);

}  // namespace p2pbackup
