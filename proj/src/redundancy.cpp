#include "p2pbackup/redundancy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace p2pbackup {

CodingParams CodingParams::make(std::int64_t object_size, std::int64_t fragment_size,
                                std::int64_t n) {
  if (object_size <= 0 || fragment_size <= 0)
    throw std::invalid_argument("object and fragment sizes must be positive");
  if (object_size % fragment_size != 0)
    throw std::invalid_argument("object size must be a multiple of the fragment size");
  CodingParams p{object_size, fragment_size, object_size / fragment_size, n};
  if (p.n == 0) p.n = p.k;
  if (p.n < p.k) throw std::invalid_argument("n must be >= k");
  return p;
}

void AdaptiveThresholds::validate() const {
  if (!(loss_cap > 0.0 && loss_cap <= 1.0)) throw std::invalid_argument("loss_cap must be in (0,1]");
  if (!(restore_delay >= 0.0)) throw std::invalid_argument("restore delay w must be >= 0");
  if (!(mean_lifetime > 0.0)) throw std::invalid_argument("mean lifetime must be positive");
  if (parallel_downloads < 0) throw std::invalid_argument("parallel downloads must be >= 0");
}

double binomial_upper_tail(std::int64_t n, std::int64_t at_least, double p) {
  if (n < 0) throw std::invalid_argument("binomial n must be >= 0");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("binomial p must be in [0,1]");
  if (at_least <= 0) return 1.0;
  if (at_least > n) return 0.0;
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;

  const double log_p = std::log(p);
  const double log_q = std::log1p(-p);
  const double lg_n1 = std::lgamma(static_cast<double>(n) + 1.0);
  auto log_term = [&](std::int64_t i) {
    const auto di = static_cast<double>(i);
    const auto dn = static_cast<double>(n);
    return lg_n1 - std::lgamma(di + 1.0) - std::lgamma(dn - di + 1.0) + di * log_p +
           (dn - di) * log_q;
  };

  // The terms are unimodal. Sum the side that excludes the mode, where the
  // result is small and accurate, and take the complement if needed.
  const auto mode = std::clamp<std::int64_t>(
      static_cast<std::int64_t>(std::floor((static_cast<double>(n) + 1.0) * p)), 0, n);
  auto log_sum = [&](std::int64_t lo, std::int64_t hi) {
    const auto peak = std::clamp(mode, lo, hi);
    const double anchor = log_term(peak);
    double sum = 0.0;
    for (std::int64_t i = peak; i <= hi; ++i) {
      const double term = std::exp(log_term(i) - anchor);
      sum += term;
      if (term < 1e-17 * sum) break;
    }
    for (std::int64_t i = peak - 1; i >= lo; --i) {
      const double term = std::exp(log_term(i) - anchor);
      sum += term;
      if (term < 1e-17 * sum) break;
    }
    return anchor + std::log(sum);
  };
  if (at_least > mode) return std::min(1.0, std::exp(log_sum(at_least, n)));
  return std::clamp(-std::expm1(log_sum(0, at_least - 1)), 0.0, 1.0);
}

std::int64_t fixed_redundancy_n(std::int64_t k, double a, double target, std::int64_t ceiling) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (!(a > 0.0 && a <= 1.0)) throw std::invalid_argument("availability must be in (0,1]");
  if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("target must be in (0,1)");
  auto meets = [&](std::int64_t n) { return binomial_upper_tail(n, k, a) >= target; };

  // The tail grows with n, so bracket by doubling and bisect.
  std::int64_t lo = k - 1;  // fails (or is below k)
  std::int64_t hi = k;
  while (!meets(hi)) {
    if (hi >= ceiling)
      throw RedundancyError("no n <= " + std::to_string(ceiling) + " meets target " +
                            std::to_string(target) + " at availability " + std::to_string(a));
    lo = hi;
    hi = std::min(2 * hi, ceiling);
  }
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    (meets(mid) ? hi : lo) = mid;
  }
  return hi;
}

std::int64_t default_parallel_downloads(double d0, std::span<const Holder> holders,
                                        std::int64_t k) {
  if (holders.empty() || k < 1) return 1;
  std::vector<double> up;
  up.reserve(holders.size());
  for (const auto& h : holders) up.push_back(h.uplink);
  const auto mid = up.begin() + static_cast<std::ptrdiff_t>(up.size() / 2);
  std::nth_element(up.begin(), mid, up.end());
  double median = *mid;
  if (up.size() % 2 == 0) median = (median + *std::max_element(up.begin(), mid)) / 2.0;
  if (!(median > 0.0)) return k;
  const double ratio = std::floor(d0 / median);
  const auto l = ratio >= static_cast<double>(k) ? k : static_cast<std::int64_t>(ratio);
  return std::clamp<std::int64_t>(l, 1, k);
}

double estimate_ttr(double object_size, double d0, std::span<const Holder> holders,
                    std::int64_t k, std::int64_t parallel_downloads) {
  if (!(d0 > 0.0)) throw std::invalid_argument("owner downlink must be positive");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (parallel_downloads < 1) throw std::invalid_argument("parallel downloads must be >= 1");
  if (static_cast<std::int64_t>(holders.size()) < k)
    throw RedundancyError("eTTR undefined: fewer than k holders");

  std::vector<double> rates;
  rates.reserve(holders.size());
  for (const auto& h : holders) rates.push_back(h.availability * h.uplink);
  const auto kth = rates.begin() + (k - 1);
  std::nth_element(rates.begin(), kth, rates.end(), std::greater<>());
  const double download_bound = object_size / d0;
  if (!(*kth > 0.0)) return std::numeric_limits<double>::infinity();
  return std::max(download_bound,
                  object_size / (static_cast<double>(parallel_downloads) * *kth));
}

double data_loss_probability(std::int64_t n, std::int64_t k, double t_elapsed,
                             double mean_lifetime) {
  if (k < 1 || n < k) throw std::invalid_argument("need n >= k >= 1");
  if (!(t_elapsed >= 0.0)) throw std::invalid_argument("elapsed time must be >= 0");
  if (!(mean_lifetime > 0.0)) throw std::invalid_argument("mean lifetime must be positive");
  const double crashed = std::isinf(t_elapsed) ? 1.0 : -std::expm1(-t_elapsed / mean_lifetime);
  return binomial_upper_tail(n, n - k + 1, crashed);
}

BackupAssessment assess_backup(double object_size, double d0, double min_ttr,
                               std::span<const Holder> holders, std::int64_t k,
                               const AdaptiveThresholds& thresholds) {
  BackupAssessment out;
  const auto n = static_cast<std::int64_t>(holders.size());
  if (n < k) {
    out.ettr = std::numeric_limits<double>::infinity();
    return out;
  }
  out.parallel_downloads = thresholds.parallel_downloads > 0
                               ? thresholds.parallel_downloads
                               : default_parallel_downloads(d0, holders, k);
  out.ettr = estimate_ttr(object_size, d0, holders, k, out.parallel_downloads);
  out.ttr_cap = std::max(thresholds.ttr_floor, thresholds.ttr_multiplier * min_ttr);
  if (std::isinf(out.ettr)) return out;
  out.loss_probability =
      data_loss_probability(n, k, thresholds.restore_delay + out.ettr, thresholds.mean_lifetime);
  const bool ttr_ok = !thresholds.enforce_ttr || out.ettr <= out.ttr_cap;
  if (ttr_ok && out.loss_probability <= thresholds.loss_cap) out.decision = BackupDecision::complete;
  return out;
}

BackupDecision backup_complete(double object_size, double d0, double min_ttr,
                               std::span<const Holder> holders, std::int64_t k,
                               const AdaptiveThresholds& thresholds) {
  return assess_backup(object_size, d0, min_ttr, holders, k, thresholds).decision;
}

}  // namespace p2pbackup
