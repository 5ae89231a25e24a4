#include "p2pbackup/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace p2pbackup {

namespace {

constexpr double kByteEpsilon = 1e-6;

// One progressive-filling pass over the links of class `traffic`.
void fill(std::span<const LinkDemand> links, TrafficClass traffic, std::vector<double>& up,
          std::vector<double>& down, std::vector<double>& bytes) {
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < links.size(); ++i) {
    const auto& l = links[i];
    if (l.traffic != traffic || !(l.demand > kByteEpsilon)) continue;
    if (l.uploader == kUnlimitedEndpoint && l.downloader == kUnlimitedEndpoint &&
        std::isinf(l.demand))
      throw std::invalid_argument("link with unlimited endpoints needs a finite demand");
    active.push_back(i);
  }

  auto up_left = [&](std::size_t e) {
    return e == kUnlimitedEndpoint ? std::numeric_limits<double>::infinity() : up[e];
  };
  auto down_left = [&](std::size_t e) {
    return e == kUnlimitedEndpoint ? std::numeric_limits<double>::infinity() : down[e];
  };

  std::vector<std::size_t> up_count(up.size()), down_count(down.size());
  while (true) {
    // Drop links that are satisfied or touch an exhausted endpoint.
    std::erase_if(active, [&](std::size_t i) {
      const auto& l = links[i];
      return links[i].demand - bytes[i] <= kByteEpsilon || up_left(l.uploader) <= kByteEpsilon ||
             down_left(l.downloader) <= kByteEpsilon;
    });
    if (active.empty()) break;

    std::fill(up_count.begin(), up_count.end(), 0);
    std::fill(down_count.begin(), down_count.end(), 0);
    double step = std::numeric_limits<double>::infinity();
    for (auto i : active) {
      const auto& l = links[i];
      if (l.uploader != kUnlimitedEndpoint) ++up_count[l.uploader];
      if (l.downloader != kUnlimitedEndpoint) ++down_count[l.downloader];
      step = std::min(step, l.demand - bytes[i]);
    }
    for (std::size_t e = 0; e < up.size(); ++e)
      if (up_count[e]) step = std::min(step, up[e] / static_cast<double>(up_count[e]));
    for (std::size_t e = 0; e < down.size(); ++e)
      if (down_count[e]) step = std::min(step, down[e] / static_cast<double>(down_count[e]));

    for (auto i : active) {
      const auto& l = links[i];
      bytes[i] += step;
      if (l.demand - bytes[i] <= kByteEpsilon) bytes[i] = l.demand;
    }
    for (std::size_t e = 0; e < up.size(); ++e) {
      if (!up_count[e]) continue;
      up[e] -= step * static_cast<double>(up_count[e]);
      if (up[e] <= kByteEpsilon) up[e] = 0.0;
    }
    for (std::size_t e = 0; e < down.size(); ++e) {
      if (!down_count[e]) continue;
      down[e] -= step * static_cast<double>(down_count[e]);
      if (down[e] <= kByteEpsilon) down[e] = 0.0;
    }
  }
}

}  // namespace

SlotAllocation allocate_slot_transfers(std::span<const double> upload_budget,
                                       std::span<const double> download_budget,
                                       std::span<const LinkDemand> links) {
  for (const auto& l : links) {
    if ((l.uploader != kUnlimitedEndpoint && l.uploader >= upload_budget.size()) ||
        (l.downloader != kUnlimitedEndpoint && l.downloader >= download_budget.size()))
      throw std::out_of_range("link endpoint without a budget");
    if (l.demand < 0.0) throw std::invalid_argument("negative link demand");
  }
  SlotAllocation out;
  out.bytes.assign(links.size(), 0.0);
  std::vector<double> up(upload_budget.begin(), upload_budget.end());
  std::vector<double> down(download_budget.begin(), download_budget.end());
  for (auto& v : up) v = std::max(v, 0.0);
  for (auto& v : down) v = std::max(v, 0.0);

  fill(links, TrafficClass::restore, up, down, out.bytes);
  out.upload_left_after_restore = up;
  out.download_left_after_restore = down;
  fill(links, TrafficClass::bulk, up, down, out.bytes);
  out.upload_left = std::move(up);
  out.download_left = std::move(down);
  return out;
}

}  // namespace p2pbackup
