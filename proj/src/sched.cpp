#include "p2pbackup/sched.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace p2pbackup {

void TransferProblem::validate() const {
  if (owner >= matrix.num_peers()) throw std::invalid_argument("owner row out of range");
  if (x < 1) throw std::invalid_argument("x must be >= 1");
  if (owner_rate < 1) throw std::invalid_argument("owner_rate must be >= 1");
  if (peer_rate < 1) throw std::invalid_argument("peer_rate must be >= 1");
  if (per_peer_cap < 1) throw std::invalid_argument("per_peer_cap must be >= 1");
  if (direction == Direction::restore) {
    if (storage_set.empty()) throw std::invalid_argument("restore needs a storage set");
    for (auto p : storage_set) {
      if (p >= matrix.num_peers()) throw std::invalid_argument("storage peer out of range");
      if (p == owner) throw std::invalid_argument("owner cannot be in its storage set");
    }
  }
}

std::vector<std::size_t> TransferProblem::remote_peers() const {
  std::vector<std::size_t> peers;
  if (direction == Direction::restore) {
    peers = storage_set;
    std::sort(peers.begin(), peers.end());
    peers.erase(std::unique(peers.begin(), peers.end()), peers.end());
  } else {
    for (std::size_t p = 0; p < matrix.num_peers(); ++p)
      if (p != owner) peers.push_back(p);
  }
  return peers;
}

std::vector<Violation> validate_schedule(const TransferProblem& problem,
                                         const Schedule& schedule) {
  const auto& m = problem.matrix;
  for (const auto& e : schedule.entries) {
    if (e.peer >= m.num_peers() || e.slot >= m.num_slots())
      throw std::out_of_range("schedule entry (" + std::to_string(e.peer) + "," +
                              std::to_string(e.slot) + ") outside the matrix");
  }

  std::vector<bool> in_storage(m.num_peers(), problem.direction == Direction::backup);
  if (problem.direction == Direction::restore)
    for (auto p : problem.storage_set)
      if (p < m.num_peers()) in_storage[p] = true;

  std::vector<Violation> out;
  auto report = [&](ViolationKind kind, const ScheduleEntry& e, std::string what) {
    out.push_back({kind, e,
                   "(" + std::to_string(e.peer) + "," + std::to_string(e.slot) + "): " +
                       std::move(what)});
  };

  std::map<std::size_t, std::int64_t> per_slot;
  std::map<std::size_t, std::int64_t> per_peer;
  std::map<ScheduleEntry, std::int64_t> per_pair;
  for (const auto& e : schedule.entries) {
    if (e.peer == problem.owner) report(ViolationKind::owner_as_target, e, "owner is the target");
    if (!m.online(problem.owner, e.slot))
      report(ViolationKind::owner_offline, e, "owner offline in slot");
    if (!m.online(e.peer, e.slot)) report(ViolationKind::peer_offline, e, "peer offline in slot");
    if (!in_storage[e.peer] && e.peer != problem.owner)
      report(ViolationKind::not_in_storage_set, e, "peer does not hold a fragment");
    if (++per_slot[e.slot] == problem.owner_rate + 1)
      report(ViolationKind::owner_rate_exceeded, e, "more than owner_rate transfers in slot");
    if (++per_pair[e] == problem.peer_rate + 1)
      report(ViolationKind::peer_rate_exceeded, e, "more than peer_rate transfers to peer in slot");
    if (++per_peer[e.peer] == problem.per_peer_cap + 1)
      report(ViolationKind::peer_cap_exceeded, e, "more than per_peer_cap fragments on peer");
  }
  return out;
}

CompletionTime completion_time(const Schedule& schedule) {
  if (schedule.empty()) return {0, true};
  std::size_t last = 0;
  for (const auto& e : schedule.entries) last = std::max(last, e.slot);
  return {static_cast<std::int64_t>(last) + 1, false};
}

FlowNetwork build_flow_network(const TransferProblem& problem, std::size_t horizon) {
  problem.validate();
  const auto& m = problem.matrix;
  if (horizon < 1 || horizon > m.num_slots())
    throw std::invalid_argument("horizon must be in [1, num_slots]");

  FlowNetwork net;
  net.source = net.add_node();
  net.sink = net.add_node();
  const std::size_t first_slot = net.num_nodes;
  for (std::size_t t = 0; t < horizon; ++t) net.add_node();
  const auto peers = problem.remote_peers();
  const std::size_t first_peer = net.num_nodes;
  for (std::size_t i = 0; i < peers.size(); ++i) net.add_node();

  for (std::size_t t = 0; t < horizon; ++t) {
    const auto st = static_cast<std::int64_t>(t);
    if (m.online(problem.owner, t))
      net.add_arc({net.source, first_slot + t, problem.owner_rate, ArcKind::source_to_slot, st, -1});
    for (std::size_t i = 0; i < peers.size(); ++i) {
      if (m.online(peers[i], t))
        net.add_arc({first_slot + t, first_peer + i, problem.peer_rate, ArcKind::slot_to_peer, st,
                     static_cast<std::int64_t>(peers[i])});
    }
  }
  for (std::size_t i = 0; i < peers.size(); ++i)
    net.add_arc({first_peer + i, net.sink, problem.per_peer_cap, ArcKind::peer_to_sink, -1,
                 static_cast<std::int64_t>(peers[i])});
  return net;
}

MaxFragments max_fragments(const TransferProblem& problem, std::size_t horizon) {
  const auto net = build_flow_network(problem, horizon);
  const auto flow = max_flow(net);
  MaxFragments result;
  result.fragments = flow.value;
  for (std::size_t a = 0; a < net.arcs.size(); ++a) {
    const auto& arc = net.arcs[a];
    if (arc.kind != ArcKind::slot_to_peer) continue;
    for (std::int64_t f = 0; f < flow.arc_flow[a]; ++f)
      result.schedule.entries.push_back(
          {static_cast<std::size_t>(arc.peer), static_cast<std::size_t>(arc.slot)});
  }
  std::sort(result.schedule.entries.begin(), result.schedule.entries.end(),
            [](const ScheduleEntry& a, const ScheduleEntry& b) {
              return a.slot != b.slot ? a.slot < b.slot : a.peer < b.peer;
            });
  return result;
}

TransferResult optimal_completion(const TransferProblem& problem) {
  problem.validate();
  const std::size_t slots = problem.matrix.num_slots();
  TransferResult result;
  if (slots == 0) return result;

  std::size_t lo = 0;  // F(lo) < x, with F(0) = 0
  std::size_t hi = 1;
  MaxFragments best = max_fragments(problem, hi);
  while (best.fragments < problem.x) {
    if (hi == slots) {
      result.transferable = best.fragments;
      result.schedule = std::move(best.schedule);
      return result;
    }
    lo = hi;
    hi = std::min(2 * hi, slots);
    best = max_fragments(problem, hi);
  }
  while (hi - lo > 1) {
    const std::size_t mid = lo + (hi - lo) / 2;
    auto probe = max_fragments(problem, mid);
    if (probe.fragments >= problem.x) {
      hi = mid;
      best = std::move(probe);
    } else {
      lo = mid;
    }
  }

  // Any x-subset of an optimal schedule still ends in slot hi.
  best.schedule.entries.resize(static_cast<std::size_t>(problem.x));
  result.feasible = true;
  result.completion = static_cast<std::int64_t>(hi);
  result.transferable = problem.x;
  result.schedule = std::move(best.schedule);
  return result;
}

TransferResult random_schedule(const TransferProblem& problem, std::uint64_t seed) {
  problem.validate();
  const auto& m = problem.matrix;
  const auto peers = problem.remote_peers();
  std::vector<std::int64_t> used(m.num_peers(), 0);
  std::mt19937_64 rng(seed);

  TransferResult result;
  std::vector<std::size_t> eligible;
  for (std::size_t t = 0; t < m.num_slots(); ++t) {
    if (!m.online(problem.owner, t)) continue;
    eligible.clear();
    for (auto p : peers)
      if (m.online(p, t) && used[p] < problem.per_peer_cap) eligible.push_back(p);
    const auto remaining = static_cast<std::size_t>(problem.x - result.transferable);
    const std::size_t picks = std::min({static_cast<std::size_t>(problem.owner_rate), remaining,
                                        eligible.size()});
    for (std::size_t i = 0; i < picks; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, eligible.size() - 1);
      std::swap(eligible[i], eligible[pick(rng)]);
      ++used[eligible[i]];
      result.schedule.entries.push_back({eligible[i], t});
    }
    result.transferable += static_cast<std::int64_t>(picks);
    if (result.transferable == problem.x) {
      result.feasible = true;
      result.completion = static_cast<std::int64_t>(t) + 1;
      break;
    }
  }
  return result;
}

std::optional<std::int64_t> ideal_baseline(std::span<const std::uint8_t> owner_row,
                                           std::int64_t amount, std::int64_t rate,
                                           std::size_t start_slot) {
  if (rate < 1) throw std::invalid_argument("rate must be >= 1");
  if (amount <= 0) return 0;
  const std::int64_t needed = (amount + rate - 1) / rate;
  std::int64_t online = 0;
  for (std::size_t t = start_slot; t < owner_row.size(); ++t) {
    if (owner_row[t] && ++online == needed) return static_cast<std::int64_t>(t - start_slot) + 1;
  }
  return std::nullopt;
}

std::optional<double> ideal_online_time(std::span<const std::uint8_t> owner_row,
                                        double online_seconds, std::int64_t slot_seconds,
                                        std::size_t start_slot) {
  if (slot_seconds <= 0) throw std::invalid_argument("slot_seconds must be positive");
  if (!(online_seconds > 0.0)) return 0.0;
  const auto slot = static_cast<double>(slot_seconds);
  double remaining = online_seconds;
  for (std::size_t t = start_slot; t < owner_row.size(); ++t) {
    if (!owner_row[t]) continue;
    if (remaining <= slot) return static_cast<double>(t - start_slot) * slot + remaining;
    remaining -= slot;
  }
  return std::nullopt;
}

namespace {

std::int64_t to_int(const std::string& key, std::string_view value) {
  std::int64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || ptr != end)
    throw std::invalid_argument("problem file: bad integer for " + key + ": " + std::string(value));
  return out;
}

}  // namespace

ProblemFile parse_problem_file(std::istream& in) {
  ProblemFile file;
  auto& p = file.problem;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream tokens(line);
    std::string token;
    while (tokens >> token) {
      const auto eq = token.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("problem file: bad token " + token);
      const std::string key = token.substr(0, eq);
      const std::string_view value = std::string_view(token).substr(eq + 1);
      if (key == "matrix") {
        file.matrix_path = std::string(value);
      } else if (key == "owner") {
        p.owner = static_cast<std::size_t>(to_int(key, value));
      } else if (key == "direction") {
        if (value == "backup") {
          p.direction = Direction::backup;
        } else if (value == "restore") {
          p.direction = Direction::restore;
        } else {
          throw std::invalid_argument("problem file: direction must be backup or restore");
        }
      } else if (key == "x") {
        p.x = to_int(key, value);
      } else if (key == "u0") {
        p.owner_rate = to_int(key, value);
      } else if (key == "peer_rate") {
        p.peer_rate = to_int(key, value);
      } else if (key == "m") {
        p.per_peer_cap = to_int(key, value);
      } else if (key == "storage") {
        std::size_t pos = 0;
        while (pos <= value.size()) {
          const auto comma = std::min(value.find(',', pos), value.size());
          p.storage_set.push_back(
              static_cast<std::size_t>(to_int(key, value.substr(pos, comma - pos))));
          pos = comma + 1;
        }
      } else {
        throw std::invalid_argument("problem file: unknown key " + key);
      }
    }
  }
  return file;
}

void write_schedule_csv(std::ostream& out, const Schedule& schedule) {
  out << "peer,slot\n";
  for (const auto& e : schedule.entries) out << e.peer << ',' << e.slot << '\n';
}

}  // namespace p2pbackup
