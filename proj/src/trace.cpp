#include "p2pbackup/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

namespace p2pbackup {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> default_ids(std::size_t n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  return ids;
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc{} && ptr == end;
}

}  // namespace

TraceParseError::TraceParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

AvailabilityMatrix::AvailabilityMatrix(std::size_t num_peers, std::size_t num_slots,
                                       std::int64_t slot_seconds,
                                       std::vector<std::uint8_t> bits,
                                       std::vector<std::string> peer_ids)
    : num_peers_(num_peers),
      num_slots_(num_slots),
      slot_seconds_(slot_seconds),
      bits_(std::move(bits)),
      peer_ids_(std::move(peer_ids)) {
  if (slot_seconds_ <= 0) throw std::invalid_argument("slot_seconds must be positive");
  if (bits_.size() != num_peers_ * num_slots_)
    throw std::invalid_argument("bits size does not match peers x slots");
  if (peer_ids_.empty()) peer_ids_ = default_ids(num_peers_);
  if (peer_ids_.size() != num_peers_)
    throw std::invalid_argument("peer id count does not match peers");
  for (auto& b : bits_) b = b ? 1 : 0;
}

AvailabilityMatrix AvailabilityMatrix::from_rows(const std::vector<std::string>& rows,
                                                 std::int64_t slot_seconds) {
  const std::size_t slots = rows.empty() ? 0 : rows.front().size();
  std::vector<std::uint8_t> bits;
  bits.reserve(rows.size() * slots);
  for (const auto& r : rows) {
    if (r.size() != slots) throw std::invalid_argument("ragged availability rows");
    for (char c : r) {
      if (c != '0' && c != '1') throw std::invalid_argument("rows must contain only 0/1");
      bits.push_back(c == '1');
    }
  }
  return AvailabilityMatrix(rows.size(), slots, slot_seconds, std::move(bits));
}

AvailabilityMatrix AvailabilityMatrix::slice(std::span<const std::size_t> rows,
                                             std::size_t slot_begin,
                                             std::size_t slot_end) const {
  if (slot_begin > slot_end || slot_end > num_slots_)
    throw std::out_of_range("slice slot range");
  const std::size_t width = slot_end - slot_begin;
  std::vector<std::uint8_t> bits;
  bits.reserve(rows.size() * width);
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= num_peers_) throw std::out_of_range("slice row");
    const auto src = row(r);
    bits.insert(bits.end(), src.begin() + slot_begin, src.begin() + slot_end);
    ids.push_back(peer_ids_[r]);
  }
  return AvailabilityMatrix(rows.size(), width, slot_seconds_, std::move(bits),
                            std::move(ids));
}

ParsedTrace parse_events(std::istream& in) {
  struct Raw {
    AvailabilityEvent event;
    std::size_t order;
  };
  std::vector<Raw> raw;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos)
      view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;

    const auto c1 = view.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : view.find(',', c1 + 1);
    if (c2 == std::string_view::npos || view.find(',', c2 + 1) != std::string_view::npos)
      throw TraceParseError(line_no, "expected peer_id,timestamp,login|logoff");
    const auto id = trim(view.substr(0, c1));
    const auto ts_text = trim(view.substr(c1 + 1, c2 - c1 - 1));
    const auto kind_text = trim(view.substr(c2 + 1));
    if (id.empty()) throw TraceParseError(line_no, "empty peer id");

    AvailabilityEvent ev;
    ev.peer_id = std::string(id);
    if (!parse_number(ts_text, ev.timestamp))
      throw TraceParseError(line_no, "bad timestamp '" + std::string(ts_text) + "'");
    if (ev.timestamp < 0) throw TraceParseError(line_no, "negative timestamp");
    if (kind_text == "login") {
      ev.kind = EventKind::login;
    } else if (kind_text == "logoff") {
      ev.kind = EventKind::logoff;
    } else {
      throw TraceParseError(line_no, "unknown event kind '" + std::string(kind_text) + "'");
    }
    raw.push_back({std::move(ev), raw.size()});
  }

  std::stable_sort(raw.begin(), raw.end(), [](const Raw& a, const Raw& b) {
    if (a.event.peer_id != b.event.peer_id) return a.event.peer_id < b.event.peer_id;
    return a.event.timestamp < b.event.timestamp;
  });

  ParsedTrace result;
  result.events.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size();) {
    const std::string& peer = raw[i].event.peer_id;
    bool online = false;
    bool first = true;
    for (; i < raw.size() && raw[i].event.peer_id == peer; ++i) {
      const auto& ev = raw[i].event;
      if (ev.kind == EventKind::login) {
        if (!online) result.events.push_back(ev);
        online = true;
      } else if (online) {
        result.events.push_back(ev);
        online = false;
      } else if (first) {
        result.warnings.push_back("peer " + peer + ": logoff at " +
                                  std::to_string(ev.timestamp) +
                                  " before any login; assuming login at epoch");
        result.events.push_back({peer, 0, EventKind::login});
        result.events.push_back(ev);
      }
      first = false;
    }
  }

  std::stable_sort(result.events.begin(), result.events.end(),
                   [](const AvailabilityEvent& a, const AvailabilityEvent& b) {
                     if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                     return a.peer_id < b.peer_id;
                   });
  return result;
}

void write_events(std::ostream& out, std::span<const AvailabilityEvent> events) {
  for (const auto& ev : events) {
    out << ev.peer_id << ',' << ev.timestamp << ','
        << (ev.kind == EventKind::login ? "login" : "logoff") << '\n';
  }
}

AvailabilityMatrix slotize(std::span<const AvailabilityEvent> events,
                           const SlotizeOptions& options) {
  const std::int64_t slot = options.slot_seconds;
  if (slot <= 0) throw std::invalid_argument("slot_seconds must be positive");

  std::int64_t horizon = 0;
  if (options.horizon_seconds) {
    horizon = *options.horizon_seconds;
    if (horizon < 0) throw std::invalid_argument("negative horizon");
  } else {
    for (const auto& ev : events) horizon = std::max(horizon, ev.timestamp);
    horizon = (horizon + slot - 1) / slot * slot;
  }
  const auto num_slots = static_cast<std::size_t>((horizon + slot - 1) / slot);

  std::vector<std::string> ids = options.peer_order;
  if (ids.empty()) {
    std::map<std::string, int> seen;
    for (const auto& ev : events) seen.emplace(ev.peer_id, 0);
    for (const auto& [id, unused] : seen) ids.push_back(id);
  }
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!row_of.emplace(ids[i], i).second)
      throw std::invalid_argument("duplicate peer id in peer_order: " + ids[i]);
  }

  // Seconds online per (peer, slot).
  std::vector<std::int64_t> seconds(ids.size() * num_slots, 0);
  auto add_interval = [&](std::size_t r, std::int64_t begin, std::int64_t end) {
    begin = std::max<std::int64_t>(begin, 0);
    end = std::min(end, horizon);
    for (std::int64_t t = begin; t < end;) {
      const std::int64_t s = t / slot;
      const std::int64_t slot_end = std::min((s + 1) * slot, end);
      seconds[r * num_slots + static_cast<std::size_t>(s)] += slot_end - t;
      t = slot_end;
    }
  };

  std::vector<std::optional<std::int64_t>> open(ids.size());
  for (const auto& ev : events) {
    const auto it = row_of.find(ev.peer_id);
    if (it == row_of.end())
      throw std::invalid_argument("event for peer not in peer_order: " + ev.peer_id);
    auto& start = open[it->second];
    if (ev.kind == EventKind::login) {
      if (!start) start = ev.timestamp;
    } else if (start) {
      add_interval(it->second, *start, ev.timestamp);
      start.reset();
    }
  }
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (open[r]) add_interval(r, *open[r], horizon);
  }

  std::vector<std::uint8_t> bits(seconds.size());
  for (std::size_t i = 0; i < seconds.size(); ++i) bits[i] = 2 * seconds[i] >= slot;
  const auto num_peers = ids.size();
  return AvailabilityMatrix(num_peers, num_slots, slot, std::move(bits), std::move(ids));
}

std::vector<AvailabilityEvent> matrix_to_events(const AvailabilityMatrix& matrix) {
  std::vector<AvailabilityEvent> events;
  const auto slot = matrix.slot_seconds();
  for (std::size_t p = 0; p < matrix.num_peers(); ++p) {
    const auto row = matrix.row(p);
    const auto& id = matrix.peer_ids()[p];
    for (std::size_t t = 0; t < row.size();) {
      if (!row[t]) {
        ++t;
        continue;
      }
      std::size_t end = t;
      while (end < row.size() && row[end]) ++end;
      events.push_back({id, static_cast<std::int64_t>(t) * slot, EventKind::login});
      events.push_back({id, static_cast<std::int64_t>(end) * slot, EventKind::logoff});
      t = end;
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const AvailabilityEvent& a, const AvailabilityEvent& b) {
                     if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                     return a.peer_id < b.peer_id;
                   });
  return events;
}

FilterResult filter_min_uptime(const AvailabilityMatrix& matrix, double min_fraction) {
  if (!(min_fraction >= 0.0 && min_fraction <= 1.0))
    throw std::invalid_argument("min_fraction must be in [0,1]");
  FilterResult result;
  const std::size_t slots = matrix.num_slots();
  for (std::size_t p = 0; p < matrix.num_peers(); ++p) {
    const auto row = matrix.row(p);
    const auto online = static_cast<double>(std::count(row.begin(), row.end(), 1));
    const double mean = slots == 0 ? 0.0 : online / static_cast<double>(slots);
    if (mean >= min_fraction) result.kept.push_back(p);
  }
  result.matrix = matrix.slice(result.kept, 0, slots);
  return result;
}

double synth_profile(const SynthParams& params, std::size_t slot) {
  const double seconds = static_cast<double>(slot) * static_cast<double>(params.slot_seconds);
  const double hour = std::fmod(seconds / 3600.0, 24.0);
  double profile =
      1.0 + params.diurnal_amplitude * std::sin(2.0 * std::numbers::pi * (hour - 12.0) / 24.0);
  const auto day = static_cast<std::int64_t>(seconds / 86400.0) % 7;
  if (day >= 5) profile *= params.weekend_factor;
  return profile;
}

AvailabilityMatrix synth_trace(const SynthParams& params, std::uint64_t seed) {
  if (params.num_peers == 0 || params.num_slots == 0)
    throw std::invalid_argument("synth_trace needs at least one peer and one slot");
  if (params.slot_seconds <= 0) throw std::invalid_argument("slot_seconds must be positive");
  if (!(params.diurnal_amplitude >= 0.0 && params.diurnal_amplitude <= 1.0))
    throw std::invalid_argument("diurnal_amplitude must be in [0,1]");
  if (!(params.weekend_factor >= 0.0)) throw std::invalid_argument("weekend_factor must be >= 0");

  const auto& base = params.base;
  switch (base.kind) {
    case AvailabilityDistribution::constant:
      if (!(base.first >= 0.0 && base.first <= 1.0))
        throw std::invalid_argument("constant availability must be in [0,1]");
      break;
    case AvailabilityDistribution::uniform:
      if (!(base.first >= 0.0 && base.first <= base.second && base.second <= 1.0))
        throw std::invalid_argument("uniform availability bounds must satisfy 0<=lo<=hi<=1");
      break;
    case AvailabilityDistribution::beta:
      if (!(base.first > 0.0 && base.second > 0.0))
        throw std::invalid_argument("beta shape parameters must be positive");
      break;
  }

  std::mt19937_64 rng(seed);
  std::vector<double> target(params.num_peers);
  for (auto& a : target) {
    switch (base.kind) {
      case AvailabilityDistribution::constant:
        a = base.first;
        break;
      case AvailabilityDistribution::uniform:
        a = std::uniform_real_distribution<double>(base.first, base.second)(rng);
        break;
      case AvailabilityDistribution::beta: {
        const double x = std::gamma_distribution<double>(base.first, 1.0)(rng);
        const double y = std::gamma_distribution<double>(base.second, 1.0)(rng);
        a = x + y > 0.0 ? x / (x + y) : 0.0;
        break;
      }
    }
  }

  std::vector<double> profile(params.num_slots);
  for (std::size_t t = 0; t < params.num_slots; ++t) profile[t] = synth_profile(params, t);

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::uint8_t> bits(params.num_peers * params.num_slots);
  for (std::size_t p = 0; p < params.num_peers; ++p) {
    for (std::size_t t = 0; t < params.num_slots; ++t) {
      const double prob = std::clamp(target[p] * profile[t], 0.0, 1.0);
      bits[p * params.num_slots + t] = unit(rng) < prob;
    }
  }
  return AvailabilityMatrix(params.num_peers, params.num_slots, params.slot_seconds,
                            std::move(bits));
}

PeerAvailabilityStats availability_stats(const AvailabilityMatrix& matrix) {
  if (matrix.empty()) throw std::invalid_argument("availability_stats of an empty matrix");
  PeerAvailabilityStats stats;
  stats.per_peer_availability.reserve(matrix.num_peers());
  double sum = 0.0;
  for (std::size_t p = 0; p < matrix.num_peers(); ++p) {
    const auto row = matrix.row(p);
    const double a = static_cast<double>(std::count(row.begin(), row.end(), 1)) /
                     static_cast<double>(matrix.num_slots());
    stats.per_peer_availability.push_back(a);
    sum += a;
  }
  stats.system_availability = sum / static_cast<double>(matrix.num_peers());
  return stats;
}

AvailabilityMatrix read_matrix(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::optional<std::size_t> peers, slots;
  std::optional<std::int64_t> slot_seconds;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  std::istringstream header(line);
  std::string field;
  while (header >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw TraceParseError(line_no, "bad header field " + field);
    const std::string_view key(field.data(), eq);
    const std::string_view value(field.data() + eq + 1, field.size() - eq - 1);
    bool ok = false;
    if (key == "peers") {
      peers.emplace();
      ok = parse_number(value, *peers);
    } else if (key == "slots") {
      slots.emplace();
      ok = parse_number(value, *slots);
    } else if (key == "slot_seconds") {
      slot_seconds.emplace();
      ok = parse_number(value, *slot_seconds);
    }
    if (!ok) throw TraceParseError(line_no, "bad header field " + field);
  }
  if (!peers || !slots || !slot_seconds)
    throw TraceParseError(line_no, "header must be 'peers=<P> slots=<T> slot_seconds=<S>'");
  if (*slot_seconds <= 0) throw TraceParseError(line_no, "slot_seconds must be positive");

  std::vector<std::uint8_t> bits;
  bits.reserve(*peers * *slots);
  for (std::size_t p = 0; p < *peers; ++p) {
    if (!std::getline(in, line)) throw TraceParseError(line_no + 1, "missing matrix row");
    ++line_no;
    const auto row = trim(line);
    if (row.size() != *slots)
      throw TraceParseError(line_no, "row has " + std::to_string(row.size()) +
                                         " slots, expected " + std::to_string(*slots));
    for (char c : row) {
      if (c != '0' && c != '1') throw TraceParseError(line_no, "row must contain only 0/1");
      bits.push_back(c == '1');
    }
  }
  return AvailabilityMatrix(*peers, *slots, *slot_seconds, std::move(bits));
}

void write_matrix(std::ostream& out, const AvailabilityMatrix& matrix) {
  out << "peers=" << matrix.num_peers() << " slots=" << matrix.num_slots()
      << " slot_seconds=" << matrix.slot_seconds() << '\n';
  std::string row;
  for (std::size_t p = 0; p < matrix.num_peers(); ++p) {
    row.clear();
    for (auto b : matrix.row(p)) row.push_back(b ? '1' : '0');
    out << row << '\n';
  }
}

}  // namespace p2pbackup
