#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "p2pbackup/allocation.hpp"
#include "p2pbackup/sched.hpp"
#include "p2pbackup/sim.hpp"

namespace p2pbackup {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kServer = kUnlimitedEndpoint;
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
constexpr double kEps = 1e-6;

// Per (owner, holder) flags.
constexpr std::uint8_t kHolds = 1;
constexpr std::uint8_t kIncoming = 2;
constexpr std::uint8_t kRestoring = 4;
constexpr std::uint8_t kRestored = 8;
constexpr std::uint8_t kFetching = 16;
constexpr std::uint8_t kFetched = 32;

enum class Kind { upload, server_upload, restore, server_fetch };

struct Transfer {
  Kind kind;
  std::size_t owner;
  std::size_t src;  // kServer for the server
  std::size_t dst;
  double done = 0.0;
  bool live = true;
};

struct Peer {
  double up = 0.0;
  double down = 0.0;
  double availability = 0.0;
  std::int64_t l = 1;
  double min_ttr = 0.0;

  PeerPhase phase = PeerPhase::backing_up;
  PeerPhase resume = PeerPhase::backing_up;
  bool has_data = true;
  bool lost_while_absent = false;
  std::vector<std::size_t> holders;
  std::int64_t stored = 0;
  std::int64_t reserved = 0;
  std::int64_t uploads = 0;
  std::int64_t server_uploads = 0;
  std::int64_t uploads_started = 0;

  double next_crash = kInf;
  double return_time = kInf;
  double crash_time = 0.0;
  std::size_t crash_index = kNone;

  double backup_start = 0.0;
  double min_ttb = kInf;
  bool backup_clean = true;

  double restore_start = 0.0;
  std::int64_t restore_slot = 0;
  std::optional<double> restore_ettr;
  std::int64_t downloaded = 0;

  std::int64_t buffered = 0;
  std::int64_t fetching = 0;
  bool repair = false;
};

}  // namespace

struct Simulation::Impl {
  SimConfig cfg;
  AvailabilityMatrix matrix;
  std::size_t n_peers = 0;
  std::size_t n_slots = 0;
  double slot_len = 0.0;
  double frag = 0.0;
  double object = 0.0;
  std::int64_t k = 0;
  std::int64_t quota_frags = 0;
  std::int64_t n_fixed = 0;
  AdaptiveThresholds thresholds;
  bool assisted = false;

  std::mt19937_64 rng;
  std::vector<Peer> peers;
  std::vector<std::uint8_t> pair;
  std::vector<Transfer> transfers;
  std::vector<std::uint8_t> on;
  std::size_t slot = 0;
  double now = 0.0;
  double end = 0.0;
  SimReport rep;

  Impl(SimConfig c, const AvailabilityMatrix& m) : cfg(std::move(c)), matrix(m) {
    cfg.validate();
    if (matrix.num_peers() < 2) throw std::invalid_argument("simulation needs at least 2 peers");
    if (matrix.num_slots() == 0) throw std::invalid_argument("simulation needs at least 1 slot");
    n_peers = matrix.num_peers();
    n_slots = matrix.num_slots();
    slot_len = static_cast<double>(cfg.slot_seconds);
    frag = static_cast<double>(cfg.fragment_size);
    object = static_cast<double>(cfg.object_size);
    k = cfg.k();
    quota_frags = cfg.storage_quota / cfg.fragment_size;
    thresholds = cfg.thresholds();
    assisted = cfg.response == ResponsePolicy::delayed_assisted;
    rng.seed(cfg.seed);

    const auto stats = availability_stats(matrix);
    peers.resize(n_peers);
    pair.assign(n_peers * n_peers, 0);
    on.assign(n_peers, 0);

    BandwidthSampler sampler(cfg.bandwidth_source);
    for (auto& p : peers) std::tie(p.up, p.down) = sampler(rng);
    for (auto& p : peers) p.next_crash = lifetime();

    std::vector<Holder> everyone;
    for (std::size_t i = 0; i < n_peers; ++i) {
      peers[i].availability = stats.per_peer_availability[i];
      everyone.push_back({stats.per_peer_availability[i], peers[i].up});
    }
    for (std::size_t i = 0; i < n_peers; ++i) {
      auto& p = peers[i];
      p.l = cfg.l > 0 ? cfg.l : default_parallel_downloads(p.down, everyone, k);
      p.min_ttr = object / p.down;
      p.min_ttb = ideal_online_time(matrix.row(i), object / p.up, cfg.slot_seconds, 0).value_or(kInf);
    }

    try {
      n_fixed = fixed_redundancy_n(k, stats.system_availability, cfg.target);
      rep.fixed_n = n_fixed;
    } catch (const std::exception&) {
      n_fixed = std::numeric_limits<std::int64_t>::max();
      rep.fixed_n = 0;
    }

    rep.num_peers = n_peers;
    rep.num_slots = n_slots;
    rep.slot_seconds = cfg.slot_seconds;
    rep.object_size = cfg.object_size;
    rep.fragment_size = cfg.fragment_size;
    rep.k = k;
    rep.redundancy_policy = cfg.redundancy_policy;
    rep.response = cfg.response;
    rep.system_availability = stats.system_availability;
    rep.assisted = assisted;
    if (assisted) {
      rep.server_outbound.assign(n_slots, 0.0);
      rep.server_inbound.assign(n_slots, 0.0);
      rep.server_buffered.assign(n_slots, 0.0);
    }
    for (std::size_t i = 0; i < n_peers; ++i) {
      PeerRecord r;
      r.peer = i;
      r.uplink = peers[i].up;
      r.availability = peers[i].availability;
      r.min_ttb = peers[i].min_ttb;
      rep.peers.push_back(r);
    }
  }

  double lifetime() { return sample_lifetime(cfg.mean_lifetime * kSecondsPerDay, rng); }

  void violation(std::string msg) {
    rep.invariant_violations.push_back("slot " + std::to_string(slot) + ": " + std::move(msg));
  }

  std::uint8_t& flags(std::size_t owner, std::size_t holder) {
    return pair[owner * n_peers + holder];
  }

  std::vector<Holder> profile(std::size_t owner) const {
    std::vector<Holder> out;
    out.reserve(peers[owner].holders.size());
    for (auto h : peers[owner].holders) out.push_back({peers[h].availability, peers[h].up});
    return out;
  }

  AdaptiveThresholds owner_thresholds(std::size_t owner) const {
    auto t = thresholds;
    t.parallel_downloads = peers[owner].l;
    return t;
  }

  bool satisfied(std::size_t owner) const {
    const auto& p = peers[owner];
    const auto n = static_cast<std::int64_t>(p.holders.size());
    if (cfg.redundancy_policy == RedundancyPolicy::fixed) return n >= n_fixed;
    if (n < k) return false;
    auto holders = profile(owner);
    return backup_complete(object, p.down, p.min_ttr, holders, k, owner_thresholds(owner)) ==
           BackupDecision::complete;
  }

  double current_ettr(std::size_t owner) const {
    const auto& p = peers[owner];
    if (static_cast<std::int64_t>(p.holders.size()) < k) return p.min_ttr;
    auto holders = profile(owner);
    return estimate_ttr(object, p.down, holders, k, p.l);
  }

  double loss_probability(std::size_t owner, std::int64_t n) const {
    return data_loss_probability(n, k, thresholds.restore_delay + current_ettr(owner),
                                 thresholds.mean_lifetime);
  }

  bool server_satisfied(std::size_t owner) const {
    const auto n = static_cast<std::int64_t>(peers[owner].holders.size());
    return n >= k && loss_probability(owner, n) <= cfg.loss_cap;
  }

  // ---- transfer bookkeeping

  void open(Kind kind, std::size_t owner, std::size_t src, std::size_t dst) {
    transfers.push_back({kind, owner, src, dst});
    auto& p = peers[owner];
    switch (kind) {
      case Kind::upload:
      case Kind::server_upload:
        flags(owner, dst) |= kIncoming;
        ++peers[dst].reserved;
        if (kind == Kind::upload) {
          ++p.uploads;
          ++p.uploads_started;
        } else {
          ++p.server_uploads;
        }
        break;
      case Kind::restore: flags(owner, src) |= kRestoring; break;
      case Kind::server_fetch:
        flags(owner, src) |= kFetching;
        ++p.fetching;
        break;
    }
  }

  void cancel(Transfer& t) {
    if (!t.live) return;
    t.live = false;
    auto& p = peers[t.owner];
    switch (t.kind) {
      case Kind::upload:
      case Kind::server_upload:
        flags(t.owner, t.dst) &= static_cast<std::uint8_t>(~kIncoming);
        --peers[t.dst].reserved;
        if (t.kind == Kind::upload) {
          --p.uploads;
        } else {
          --p.server_uploads;
          rep.server_discarded_bytes += t.done;
        }
        break;
      case Kind::restore: flags(t.owner, t.src) &= static_cast<std::uint8_t>(~kRestoring); break;
      case Kind::server_fetch:
        flags(t.owner, t.src) &= static_cast<std::uint8_t>(~kFetching);
        --p.fetching;
        break;
    }
  }

  template <class Pred>
  void cancel_if(Pred pred) {
    for (auto& t : transfers)
      if (t.live && pred(t)) cancel(t);
  }

  void release_fragments(std::size_t owner) {
    auto& p = peers[owner];
    for (auto h : p.holders) {
      flags(owner, h) &= static_cast<std::uint8_t>(~kHolds);
      --peers[h].stored;
    }
    p.holders.clear();
  }

  void release_server(std::size_t owner) {
    cancel_if([&](const Transfer& t) {
      return t.owner == owner && (t.kind == Kind::server_fetch || t.kind == Kind::server_upload);
    });
    auto& p = peers[owner];
    p.buffered = 0;
    p.repair = false;
    for (std::size_t h = 0; h < n_peers; ++h)
      flags(owner, h) &= static_cast<std::uint8_t>(~(kFetching | kFetched));
  }

  // ---- phase changes

  void mark_complete(std::size_t owner) {
    auto& p = peers[owner];
    p.phase = PeerPhase::complete;
    auto& r = rep.peers[owner];
    if (!r.redundancy_at_completion)
      r.redundancy_at_completion =
          static_cast<double>(p.holders.size()) / static_cast<double>(k);
    if (p.backup_clean && !r.ttb) {
      r.ttb = end - p.backup_start;
      r.min_ttb = p.min_ttb;
      if (*r.ttb < p.min_ttb * (1.0 - 1e-12))
        violation("peer " + std::to_string(owner) + " TTB below minTTB");
    }
  }

  void start_new_backup(std::size_t owner) {
    release_fragments(owner);
    cancel_if([&](const Transfer& t) { return t.owner == owner; });
    release_server(owner);
    auto& p = peers[owner];
    p.phase = PeerPhase::backing_up;
    p.has_data = true;
    p.lost_while_absent = false;
    p.backup_start = now;
    p.backup_clean = true;
    p.downloaded = 0;
    for (std::size_t h = 0; h < n_peers; ++h)
      flags(owner, h) &= static_cast<std::uint8_t>(~(kRestoring | kRestored));
    p.min_ttb =
        ideal_online_time(matrix.row(owner), object / p.up, cfg.slot_seconds, slot).value_or(kInf);
    p.next_crash = now + lifetime();
  }

  void begin_restore(std::size_t owner) {
    auto& p = peers[owner];
    p.phase = PeerPhase::restoring;
    p.restore_start = now;
    p.restore_slot = static_cast<std::int64_t>(slot);
    p.downloaded = 0;
    p.restore_ettr.reset();
    if (static_cast<std::int64_t>(p.holders.size()) >= k) p.restore_ettr = current_ettr(owner);
  }

  void finish_restore(std::size_t owner) {
    auto& p = peers[owner];
    RestoreRecord r{owner, p.restore_slot, end - p.restore_start, p.min_ttr, p.restore_ettr};
    if (r.ttr < r.min_ttr * (1.0 - 1e-12))
      violation("peer " + std::to_string(owner) + " TTR below minTTR");
    rep.restores.push_back(r);
    auto& pr = rep.peers[owner];
    pr.ttr = r.ttr;
    pr.min_ttr = r.min_ttr;
    pr.ettr = r.ettr;
    rep.crashes[p.crash_index].outcome = CrashOutcome::restored;

    cancel_if([&](const Transfer& t) { return t.owner == owner && t.kind == Kind::restore; });
    release_server(owner);
    for (std::size_t h = 0; h < n_peers; ++h)
      flags(owner, h) &= static_cast<std::uint8_t>(~(kRestoring | kRestored));
    p.downloaded = 0;
    p.has_data = true;
    p.phase = p.resume;
    p.next_crash = end + lifetime();
  }

  void declare_lost(std::size_t owner) {
    auto& p = peers[owner];
    rep.crashes[p.crash_index].outcome = CrashOutcome::lost;
    if (p.phase == PeerPhase::restoring) {
      start_new_backup(owner);
    } else {
      release_fragments(owner);
      cancel_if([&](const Transfer& t) { return t.owner == owner; });
      release_server(owner);
      p.lost_while_absent = true;
    }
  }

  void crash(std::size_t victim, std::optional<double> delay, double when) {
    auto& p = peers[victim];
    CrashRecord rec;
    rec.peer = victim;
    rec.crash_slot = static_cast<std::int64_t>(slot);
    rec.unfinished_backup = p.phase != PeerPhase::complete;
    rec.unavoidable = rec.unfinished_backup && when < p.backup_start + p.min_ttb;
    p.crash_index = rep.crashes.size();
    rep.crashes.push_back(rec);

    p.crash_time = when;
    p.resume = p.phase == PeerPhase::complete ? PeerPhase::complete : PeerPhase::backing_up;
    p.backup_clean = false;
    for (std::size_t o = 0; o < n_peers; ++o) {
      auto& f = flags(o, victim);
      if (!(f & kHolds)) continue;
      f &= static_cast<std::uint8_t>(~(kHolds | kRestored | kFetched));
      std::erase(peers[o].holders, victim);
    }
    p.stored = 0;
    cancel_if([&](const Transfer& t) { return t.src == victim || t.dst == victim; });
    p.has_data = false;
    p.next_crash = kInf;

    if (cfg.response == ResponsePolicy::immediate) {
      rep.crashes.back().response_slot = static_cast<std::int64_t>(slot);
      begin_restore(victim);
    } else {
      double d = delay ? *delay
                       : std::exponential_distribution<double>(
                             1.0 / (cfg.delay_mean * kSecondsPerDay))(rng);
      p.phase = PeerPhase::absent;
      p.return_time = when + d;
      p.lost_while_absent = false;
    }
  }

  void handle_return(std::size_t owner) {
    auto& p = peers[owner];
    rep.crashes[p.crash_index].response_slot = static_cast<std::int64_t>(slot);
    p.return_time = kInf;
    if (p.lost_while_absent) {
      start_new_backup(owner);
    } else {
      begin_restore(owner);
    }
  }

  void check_losses() {
    for (std::size_t i = 0; i < n_peers; ++i) {
      auto& p = peers[i];
      if (p.has_data || p.lost_while_absent) continue;
      if (p.phase != PeerPhase::restoring && p.phase != PeerPhase::absent) continue;
      std::int64_t reachable = p.downloaded;
      for (auto h : p.holders)
        if (!(flags(i, h) & kRestored)) ++reachable;
      if (reachable >= k || p.buffered >= k) continue;
      declare_lost(i);
    }
  }

  std::size_t repair_check() {
    std::size_t started = 0;
    const double timeout = cfg.repair_timeout * kSecondsPerDay;
    for (std::size_t i = 0; i < n_peers; ++i) {
      auto& p = peers[i];
      if (p.phase != PeerPhase::absent || p.lost_while_absent || p.repair) continue;
      if (now - p.crash_time < timeout) continue;
      const auto n = static_cast<std::int64_t>(p.holders.size());
      if (n < k) {
        if (p.buffered < k) declare_lost(i);
        continue;
      }
      if (loss_probability(i, n) > cfg.loss_cap) {
        p.repair = true;
        ++rep.server_repairs;
        ++started;
      }
    }
    return started;
  }

  // ---- planning

  std::size_t pick(std::vector<std::size_t>& pool, std::size_t i) {
    std::uniform_int_distribution<std::size_t> dist(i, pool.size() - 1);
    std::swap(pool[i], pool[dist(rng)]);
    return pool[i];
  }

  std::vector<std::size_t> eligible_holders(std::size_t owner) {
    std::vector<std::size_t> out;
    for (std::size_t h = 0; h < n_peers; ++h) {
      if (h == owner || !on[h]) continue;
      if (flags(owner, h) & (kHolds | kIncoming)) continue;
      if (peers[h].stored + peers[h].reserved >= quota_frags) continue;
      out.push_back(h);
    }
    return out;
  }

  double upload_capacity(std::size_t owner) const {
    double c = 0.0;
    for (const auto& t : transfers)
      if (t.live && t.kind == Kind::upload && t.owner == owner && on[t.dst])
        c += std::min(peers[t.dst].down * slot_len, frag - t.done);
    return c;
  }

  std::size_t maintain(std::size_t owner, double capacity) {
    auto& p = peers[owner];
    if (!p.has_data || !on[owner]) return 0;
    if (p.phase != PeerPhase::backing_up && p.phase != PeerPhase::complete) return 0;
    if (satisfied(owner)) {
      if (p.phase == PeerPhase::backing_up) mark_complete(owner);
      return 0;
    }
    std::int64_t want = 0;
    if (cfg.redundancy_policy == RedundancyPolicy::fixed)
      want = n_fixed - static_cast<std::int64_t>(p.holders.size()) - p.uploads;
    else
      want = k - p.uploads;
    const double budget = p.up * slot_len;
    if (want <= 0 || capacity >= budget) return 0;

    auto pool = eligible_holders(owner);
    std::size_t opened = 0;
    for (std::size_t i = 0; i < pool.size() && want > 0 && capacity < budget; ++i) {
      auto h = pick(pool, i);
      open(Kind::upload, owner, owner, h);
      capacity += std::min(peers[h].down * slot_len, frag);
      --want;
      ++opened;
    }
    return opened;
  }

  void plan_restore(std::size_t owner, std::int64_t active) {
    auto& p = peers[owner];
    const auto need = std::min(k - p.downloaded - active, p.l - active);
    if (need <= 0) return;
    std::vector<std::size_t> pool;
    for (auto h : p.holders)
      if (on[h] && !(flags(owner, h) & (kRestoring | kRestored))) pool.push_back(h);
    for (std::size_t i = 0; i < pool.size() && static_cast<std::int64_t>(i) < need; ++i)
      open(Kind::restore, owner, pick(pool, i), owner);
  }

  std::int64_t server_target(std::size_t owner) const {
    const auto& p = peers[owner];
    const double t = thresholds.restore_delay + current_ettr(owner);
    auto n = std::max<std::int64_t>(k, static_cast<std::int64_t>(p.holders.size()) + 1);
    const auto limit = static_cast<std::int64_t>(n_peers) - 1;
    while (n < limit && data_loss_probability(n, k, t, thresholds.mean_lifetime) > cfg.loss_cap) ++n;
    return std::min(n, limit);
  }

  void plan_server(std::size_t owner) {
    auto& p = peers[owner];
    if (p.buffered + p.fetching < k) {
      std::vector<std::size_t> pool;
      for (auto h : p.holders)
        if (on[h] && !(flags(owner, h) & (kFetching | kFetched))) pool.push_back(h);
      const auto need = k - p.buffered - p.fetching;
      for (std::size_t i = 0; i < pool.size() && static_cast<std::int64_t>(i) < need; ++i)
        open(Kind::server_fetch, owner, pick(pool, i), kServer);
    }
    if (p.buffered < k || server_satisfied(owner)) return;
    auto want = server_target(owner) - static_cast<std::int64_t>(p.holders.size()) -
                p.server_uploads;
    if (want <= 0) return;
    auto pool = eligible_holders(owner);
    for (std::size_t i = 0; i < pool.size() && want > 0; ++i, --want)
      open(Kind::server_upload, owner, kServer, pick(pool, i));
  }

  void plan() {
    std::vector<double> capacity(n_peers, 0.0);
    std::vector<std::int64_t> restoring(n_peers, 0);
    for (const auto& t : transfers) {
      if (!t.live) continue;
      if (t.kind == Kind::upload && on[t.dst])
        capacity[t.owner] += std::min(peers[t.dst].down * slot_len, frag - t.done);
      if (t.kind == Kind::restore && on[t.src]) ++restoring[t.owner];
    }
    for (std::size_t i = 0; i < n_peers; ++i) {
      if (peers[i].phase == PeerPhase::restoring)
        plan_restore(i, restoring[i]);
      else
        maintain(i, capacity[i]);
    }
    if (assisted)
      for (std::size_t i = 0; i < n_peers; ++i)
        if (peers[i].repair) plan_server(i);
  }

  // ---- completions

  void complete(Transfer& t) {
    t.live = false;
    auto& p = peers[t.owner];
    switch (t.kind) {
      case Kind::upload:
      case Kind::server_upload: {
        auto& f = flags(t.owner, t.dst);
        f = static_cast<std::uint8_t>((f & ~kIncoming) | kHolds);
        --peers[t.dst].reserved;
        ++peers[t.dst].stored;
        p.holders.push_back(t.dst);
        if (t.kind == Kind::upload) {
          --p.uploads;
          if (p.has_data && satisfied(t.owner)) {
            if (p.phase == PeerPhase::backing_up) mark_complete(t.owner);
            const auto o = t.owner;
            cancel_if([&](const Transfer& x) { return x.owner == o && x.kind == Kind::upload; });
          }
        } else {
          --p.server_uploads;
          ++rep.server_fragments_uploaded;
          rep.server_outbound[slot] += frag;
          if (server_satisfied(t.owner)) {
            const auto o = t.owner;
            cancel_if(
                [&](const Transfer& x) { return x.owner == o && x.kind == Kind::server_upload; });
          }
        }
        break;
      }
      case Kind::restore:
        flags(t.owner, t.src) = static_cast<std::uint8_t>(
            (flags(t.owner, t.src) & ~kRestoring) | kRestored);
        if (++p.downloaded >= k) finish_restore(t.owner);
        break;
      case Kind::server_fetch:
        flags(t.owner, t.src) = static_cast<std::uint8_t>(
            (flags(t.owner, t.src) & ~kFetching) | kFetched);
        --p.fetching;
        ++p.buffered;
        ++rep.server_fragments_fetched;
        rep.server_inbound[slot] += frag;
        break;
    }
  }

  bool endpoint_on(std::size_t e) const { return e == kServer || on[e]; }

  void transfer_bytes() {
    std::vector<double> up(n_peers), down(n_peers);
    for (std::size_t i = 0; i < n_peers; ++i) {
      up[i] = on[i] ? peers[i].up * slot_len : 0.0;
      down[i] = on[i] ? peers[i].down * slot_len : 0.0;
    }
    std::vector<LinkDemand> links;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < transfers.size(); ++i) {
      const auto& t = transfers[i];
      if (!t.live || !endpoint_on(t.src) || !endpoint_on(t.dst)) continue;
      const bool urgent = t.kind == Kind::restore || t.kind == Kind::server_fetch;
      links.push_back({t.src, t.dst, frag - t.done,
                       urgent ? TrafficClass::restore : TrafficClass::bulk});
      index.push_back(i);
    }
    auto alloc = allocate_slot_transfers(up, down, links);
    if (cfg.check_invariants) check_allocation(up, down, links, alloc);

    for (std::size_t j = 0; j < links.size(); ++j) {
      auto& t = transfers[index[j]];
      t.done += alloc.bytes[j];
      if (t.done >= frag - kEps) t.done = frag;
    }
    for (auto i : index) {
      auto& t = transfers[i];
      if (t.live && t.done >= frag) complete(t);
    }
    std::erase_if(transfers, [](const Transfer& t) { return !t.live; });
  }

  // ---- invariants

  void check_allocation(const std::vector<double>& up, const std::vector<double>& down,
                        const std::vector<LinkDemand>& links, const SlotAllocation& alloc) {
    ++rep.invariants.byte_budget_checks;
    std::vector<double> sent(n_peers, 0.0), recv(n_peers, 0.0);
    std::vector<double> bulk_sent(n_peers, 0.0), bulk_recv(n_peers, 0.0);
    for (std::size_t j = 0; j < links.size(); ++j) {
      const auto& l = links[j];
      const double b = alloc.bytes[j];
      if (b < -kEps || b > l.demand + kEps) violation("allocation outside [0, demand]");
      if (l.uploader != kServer) {
        sent[l.uploader] += b;
        if (l.traffic == TrafficClass::bulk) bulk_sent[l.uploader] += b;
      }
      if (l.downloader != kServer) {
        recv[l.downloader] += b;
        if (l.traffic == TrafficClass::bulk) bulk_recv[l.downloader] += b;
      }
    }
    for (std::size_t i = 0; i < n_peers; ++i) {
      if (sent[i] > up[i] * (1 + 1e-9) + kEps)
        violation("peer " + std::to_string(i) + " exceeds upload budget");
      if (recv[i] > down[i] * (1 + 1e-9) + kEps)
        violation("peer " + std::to_string(i) + " exceeds download budget");
    }
    ++rep.invariants.restore_priority_checks;
    for (std::size_t j = 0; j < links.size(); ++j) {
      const auto& l = links[j];
      if (l.traffic != TrafficClass::restore || alloc.bytes[j] >= l.demand - kEps) continue;
      const bool up_blocked = l.uploader != kServer &&
                              alloc.upload_left_after_restore[l.uploader] <= kEps &&
                              bulk_sent[l.uploader] <= kEps;
      const bool down_blocked = l.downloader != kServer &&
                                alloc.download_left_after_restore[l.downloader] <= kEps &&
                                bulk_recv[l.downloader] <= kEps;
      if (!up_blocked && !down_blocked) violation("restore link starved while bulk traffic flows");
    }
  }

  void check_state() {
    ++rep.invariants.placement_checks;
    std::vector<std::int64_t> stored(n_peers, 0), incoming(n_peers, 0);
    for (std::size_t o = 0; o < n_peers; ++o) {
      const auto& hs = peers[o].holders;
      std::size_t flagged = 0;
      for (std::size_t h = 0; h < n_peers; ++h) {
        const auto f = flags(o, h);
        if (f & kHolds) {
          ++flagged;
          ++stored[h];
        }
        if (f & kIncoming) ++incoming[h];
      }
      if (flagged != hs.size()) violation("placement map out of sync for owner " + std::to_string(o));
      auto sorted = hs;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        violation("owner " + std::to_string(o) + " has two fragments on one holder");
      for (auto h : hs) {
        if (h == o) violation("owner " + std::to_string(o) + " holds its own fragment");
        if (peers[h].phase == PeerPhase::absent)
          violation("fragment of owner " + std::to_string(o) + " on an absent peer");
      }
    }
    for (std::size_t h = 0; h < n_peers; ++h) {
      if (stored[h] != peers[h].stored || incoming[h] != peers[h].reserved)
        violation("storage counters out of sync for peer " + std::to_string(h));
      if (peers[h].stored > quota_frags) violation("peer " + std::to_string(h) + " over quota");
      if (peers[h].phase == PeerPhase::restoring && !on[h])
        violation("restoring peer " + std::to_string(h) + " offline");
    }
    for (const auto& t : transfers)
      if (t.done < 0.0 || t.done > frag) violation("fragment progress outside [0, f]");
    for (const auto& c : rep.crashes)
      if (c.unavoidable && !c.unfinished_backup) violation("unavoidable loss on a finished backup");
  }

  // ---- main loop

  void begin_slot() {
    now = static_cast<double>(slot) * slot_len;
    end = now + slot_len;
  }

  void step() {
    if (slot >= n_slots) throw std::logic_error("simulation already finished");
    begin_slot();
    for (std::size_t i = 0; i < n_peers; ++i) {
      auto& p = peers[i];
      if (!p.has_data || p.next_crash >= end) continue;
      if (p.phase == PeerPhase::backing_up || p.phase == PeerPhase::complete)
        crash(i, std::nullopt, std::max(p.next_crash, now));
    }
    for (std::size_t i = 0; i < n_peers; ++i)
      if (peers[i].phase == PeerPhase::absent && peers[i].return_time < end) handle_return(i);
    if (assisted) repair_check();
    check_losses();

    for (std::size_t i = 0; i < n_peers; ++i)
      on[i] = peers[i].phase == PeerPhase::restoring ||
              (peers[i].phase != PeerPhase::absent && matrix.online(i, slot));
    plan();
    transfer_bytes();

    if (assisted) {
      double held = 0.0;
      for (const auto& p : peers) held += static_cast<double>(p.buffered) * frag;
      rep.server_buffered[slot] = held;
    }
    if (cfg.check_invariants) {
      check_state();
      ++rep.invariants.slots_checked;
    }
    ++slot;
  }

  void finalize() {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : rep.peers)
      if (r.redundancy_at_completion) {
        sum += *r.redundancy_at_completion;
        ++count;
      }
    rep.average_redundancy = count ? sum / static_cast<double>(count) : 0.0;
  }
};

Simulation::Simulation(SimConfig config, const AvailabilityMatrix& matrix)
    : impl_(std::make_unique<Impl>(std::move(config), matrix)) {}
Simulation::~Simulation() = default;
Simulation::Simulation(Simulation&&) noexcept = default;
Simulation& Simulation::operator=(Simulation&&) noexcept = default;

std::size_t Simulation::slot() const noexcept { return impl_->slot; }
bool Simulation::finished() const noexcept { return impl_->slot >= impl_->n_slots; }
void Simulation::step() { impl_->step(); }

SimReport Simulation::finish() {
  while (!finished()) step();
  impl_->finalize();
  return impl_->rep;
}

PeerPhase Simulation::phase(std::size_t peer) const { return impl_->peers.at(peer).phase; }
bool Simulation::online(std::size_t peer) const { return impl_->on.at(peer) != 0; }
std::vector<std::size_t> Simulation::holders(std::size_t owner) const {
  return impl_->peers.at(owner).holders;
}
std::size_t Simulation::perceived_fragments(std::size_t owner) const {
  return impl_->peers.at(owner).holders.size();
}
std::size_t Simulation::pending_uploads(std::size_t owner) const {
  const auto& p = impl_->peers.at(owner);
  return static_cast<std::size_t>(p.uploads + p.server_uploads);
}
std::int64_t Simulation::uploads_started(std::size_t owner) const {
  return impl_->peers.at(owner).uploads_started;
}
std::int64_t Simulation::fixed_n() const noexcept { return impl_->rep.fixed_n; }
std::int64_t Simulation::parallel_downloads(std::size_t owner) const {
  return impl_->peers.at(owner).l;
}
std::int64_t Simulation::server_buffered(std::size_t owner) const {
  return impl_->peers.at(owner).buffered;
}
bool Simulation::repair_active(std::size_t owner) const { return impl_->peers.at(owner).repair; }
const SimReport& Simulation::report() const noexcept { return impl_->rep; }

void Simulation::on_crash(std::size_t peer, std::optional<double> return_delay) {
  auto& s = *impl_;
  if (finished()) throw std::logic_error("simulation already finished");
  const auto& p = s.peers.at(peer);
  if (!p.has_data || (p.phase != PeerPhase::backing_up && p.phase != PeerPhase::complete))
    throw std::logic_error("peer " + std::to_string(peer) + " is not alive");
  s.begin_slot();
  s.crash(peer, return_delay, s.now);
}

std::size_t Simulation::maintenance_step(std::size_t owner) {
  auto& s = *impl_;
  if (owner >= s.n_peers) throw std::out_of_range("owner index");
  return s.maintain(owner, s.upload_capacity(owner));
}

std::size_t Simulation::assisted_repair_check() {
  auto& s = *impl_;
  if (!s.assisted || finished()) return 0;
  s.begin_slot();
  return s.repair_check();
}

SimReport run(const SimConfig& config, const AvailabilityMatrix& matrix) {
  return Simulation(config, matrix).finish();
}

}  // namespace p2pbackup
