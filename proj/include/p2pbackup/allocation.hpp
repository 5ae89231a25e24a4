#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace p2pbackup {

/// Endpoint with no budget constraint (the cloud server).
inline constexpr std::size_t kUnlimitedEndpoint = std::numeric_limits<std::size_t>::max();

enum class TrafficClass { restore, bulk };

struct LinkDemand {
  std::size_t uploader = 0;
  std::size_t downloader = 0;
  double demand = std::numeric_limits<double>::infinity();  // bytes wanted this slot
  TrafficClass traffic = TrafficClass::bulk;
};

struct SlotAllocation {
  std::vector<double> bytes;  // parallel to the input links
  std::vector<double> upload_left_after_restore;
  std::vector<double> download_left_after_restore;
  std::vector<double> upload_left;
  std::vector<double> download_left;
};

/// Max-min fair (progressive filling) allocation of per-slot byte budgets.
/// Restore links are filled first; bulk links share what remains.
SlotAllocation allocate_slot_transfers(std::span<const double> upload_budget,
                                       std::span<const double> download_budget,
                                       std::span<const LinkDemand> links);

}  // namespace p2pbackup
