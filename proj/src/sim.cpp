#include "p2pbackup/sim.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace p2pbackup {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(const std::string& key, const std::string& value) {
  if (value == "inf" || value == "infinity")
    return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("bad number for " + key + ": '" + value + "'");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& value) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw std::invalid_argument("bad integer for " + key + ": '" + value + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw std::invalid_argument("bad boolean for " + key + ": '" + value + "'");
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

std::vector<CdfPoint> read_bandwidth_cdf(std::istream& in) {
  std::vector<CdfPoint> points;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    auto comma = text.find(',');
    if (comma == std::string::npos)
      throw TraceParseError(lineno, "expected 'quantile,uplink'");
    auto q_text = trim(std::string_view(text).substr(0, comma));
    auto u_text = trim(std::string_view(text).substr(comma + 1));
    double q = 0, u = 0;
    try {
      q = parse_double("quantile", q_text);
      u = parse_double("uplink", u_text);
    } catch (const std::invalid_argument& e) {
      if (points.empty() && lineno == 1) continue;  // header
      throw TraceParseError(lineno, e.what());
    }
    if (!(q >= 0.0 && q <= 1.0)) throw TraceParseError(lineno, "quantile outside [0,1]");
    if (!(u > 0.0) || std::isinf(u)) throw TraceParseError(lineno, "uplink must be positive");
    if (!points.empty() && !(q > points.back().quantile))
      throw TraceParseError(lineno, "quantiles must be strictly increasing");
    points.push_back({q, u});
  }
  if (points.empty()) throw TraceParseError(lineno, "empty bandwidth CDF");
  return points;
}

BandwidthSampler::BandwidthSampler(BandwidthSource source) : source_(std::move(source)) {
  if (source_.kind == BandwidthSource::Kind::cdf && source_.cdf.empty())
    throw std::invalid_argument("bandwidth CDF has no points");
  if (source_.kind == BandwidthSource::Kind::lognormal && !(source_.sigma >= 0.0))
    throw std::invalid_argument("lognormal sigma must be non-negative");
}

std::pair<double, double> BandwidthSampler::operator()(std::mt19937_64& rng) const {
  double up = 0.0;
  if (source_.kind == BandwidthSource::Kind::lognormal) {
    std::lognormal_distribution<double> dist(source_.mu, source_.sigma);
    up = dist(rng) * 1000.0;
  } else {
    const auto& c = source_.cdf;
    double q = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (q <= c.front().quantile) {
      up = c.front().uplink;
    } else if (q >= c.back().quantile) {
      up = c.back().uplink;
    } else {
      auto hi = std::upper_bound(c.begin(), c.end(), q,
                                 [](double v, const CdfPoint& p) { return v < p.quantile; });
      auto lo = hi - 1;
      double t = (q - lo->quantile) / (hi->quantile - lo->quantile);
      up = lo->uplink + t * (hi->uplink - lo->uplink);
    }
  }
  return {up, 4.0 * up};
}

std::vector<std::pair<double, double>> sample_bandwidth(const BandwidthSource& source,
                                                        std::size_t count, std::uint64_t seed) {
  BandwidthSampler sampler(source);
  std::mt19937_64 rng(seed);
  std::vector<std::pair<double, double>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sampler(rng));
  return out;
}

double sample_lifetime(double mean, std::mt19937_64& rng) {
  if (!(mean > 0.0)) throw std::invalid_argument("mean lifetime must be positive");
  if (std::isinf(mean)) return std::numeric_limits<double>::infinity();
  return std::exponential_distribution<double>(1.0 / mean)(rng);
}

AdaptiveThresholds SimConfig::thresholds() const {
  AdaptiveThresholds t;
  t.enforce_ttr = enforce_ttr;
  t.ttr_floor = ttr_floor * kSecondsPerDay;
  t.ttr_multiplier = ttr_multiplier;
  t.loss_cap = loss_cap;
  t.restore_delay = w * kSecondsPerDay;
  t.mean_lifetime = mean_lifetime * kSecondsPerDay;
  t.parallel_downloads = l;
  return t;
}

void SimConfig::validate() const {
  if (object_size <= 0 || fragment_size <= 0)
    throw std::invalid_argument("object and fragment sizes must be positive");
  if (object_size % fragment_size != 0)
    throw std::invalid_argument("object_size must be a multiple of fragment_size");
  if (storage_quota < fragment_size)
    throw std::invalid_argument("storage_quota must hold at least one fragment");
  if (slot_seconds <= 0) throw std::invalid_argument("slot_seconds must be positive");
  if (!(mean_lifetime > 0.0)) throw std::invalid_argument("mean_lifetime must be positive");
  if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("target must be in (0,1)");
  if (l < 0) throw std::invalid_argument("l must be non-negative");
  if (!(delay_mean > 0.0)) throw std::invalid_argument("delay_mean must be positive");
  if (!(repair_timeout > 0.0)) throw std::invalid_argument("repair_timeout must be positive");
  thresholds().validate();
  BandwidthSampler check(bandwidth_source);
  (void)check;
}

std::string to_string(RedundancyPolicy policy) {
  return policy == RedundancyPolicy::fixed ? "fixed" : "adaptive";
}

std::string to_string(ResponsePolicy response) {
  switch (response) {
    case ResponsePolicy::immediate: return "immediate";
    case ResponsePolicy::delayed: return "delayed";
    case ResponsePolicy::delayed_assisted: return "delayed_assisted";
  }
  return "?";
}

std::string to_string(CrashOutcome outcome) {
  switch (outcome) {
    case CrashOutcome::restored: return "restored";
    case CrashOutcome::lost: return "lost";
    case CrashOutcome::pending: return "pending";
  }
  return "?";
}

void apply_config_value(SimConfig& c, const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "object_size") c.object_size = parse_int(key, value);
  else if (key == "storage_quota") c.storage_quota = parse_int(key, value);
  else if (key == "fragment_size") c.fragment_size = parse_int(key, value);
  else if (key == "slot_seconds") c.slot_seconds = parse_int(key, value);
  else if (key == "mean_lifetime") c.mean_lifetime = parse_double(key, value);
  else if (key == "redundancy_policy") {
    if (value == "fixed") c.redundancy_policy = RedundancyPolicy::fixed;
    else if (value == "adaptive") c.redundancy_policy = RedundancyPolicy::adaptive;
    else throw std::invalid_argument("unknown redundancy_policy '" + value + "'");
  } else if (key == "target") c.target = parse_double(key, value);
  else if (key == "loss_cap") c.loss_cap = parse_double(key, value);
  else if (key == "w") c.w = parse_double(key, value);
  else if (key == "l") c.l = parse_int(key, value);
  else if (key == "ttr_floor") c.ttr_floor = parse_double(key, value);
  else if (key == "ttr_multiplier") c.ttr_multiplier = parse_double(key, value);
  else if (key == "enforce_ttr") c.enforce_ttr = parse_bool(key, value);
  else if (key == "response") {
    if (value == "immediate") c.response = ResponsePolicy::immediate;
    else if (value == "delayed") c.response = ResponsePolicy::delayed;
    else if (value == "delayed_assisted") c.response = ResponsePolicy::delayed_assisted;
    else throw std::invalid_argument("unknown response '" + value + "'");
  } else if (key == "delay_mean") c.delay_mean = parse_double(key, value);
  else if (key == "repair_timeout") c.repair_timeout = parse_double(key, value);
  else if (key == "bandwidth_source") {
    if (value == "lognormal") {
      c.bandwidth_source.kind = BandwidthSource::Kind::lognormal;
      c.bandwidth_source.cdf.clear();
      c.bandwidth_source.path.clear();
    } else {
      std::ifstream in(value);
      if (!in) throw std::invalid_argument("cannot open bandwidth CDF '" + value + "'");
      c.bandwidth_source.kind = BandwidthSource::Kind::cdf;
      c.bandwidth_source.cdf = read_bandwidth_cdf(in);
      c.bandwidth_source.path = value;
    }
  } else if (key == "bandwidth_mu") c.bandwidth_source.mu = parse_double(key, value);
  else if (key == "bandwidth_sigma") c.bandwidth_source.sigma = parse_double(key, value);
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "check_invariants") c.check_invariants = parse_bool(key, value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

SimConfig parse_sim_config(std::istream& in, SimConfig base) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto text = trim(line);
    if (text.empty()) continue;
    auto eq = text.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("line " + std::to_string(lineno) + ": expected key=value");
    try {
      apply_config_value(base, trim(std::string_view(text).substr(0, eq)), text.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

void write_sim_config(std::ostream& out, const SimConfig& c) {
  out << "object_size=" << c.object_size << '\n'
      << "storage_quota=" << c.storage_quota << '\n'
      << "fragment_size=" << c.fragment_size << '\n'
      << "slot_seconds=" << c.slot_seconds << '\n'
      << "mean_lifetime=" << format_double(c.mean_lifetime) << '\n'
      << "redundancy_policy=" << to_string(c.redundancy_policy) << '\n'
      << "target=" << format_double(c.target) << '\n'
      << "loss_cap=" << format_double(c.loss_cap) << '\n'
      << "w=" << format_double(c.w) << '\n'
      << "l=" << c.l << '\n'
      << "ttr_floor=" << format_double(c.ttr_floor) << '\n'
      << "ttr_multiplier=" << format_double(c.ttr_multiplier) << '\n'
      << "enforce_ttr=" << (c.enforce_ttr ? "true" : "false") << '\n'
      << "response=" << to_string(c.response) << '\n'
      << "delay_mean=" << format_double(c.delay_mean) << '\n'
      << "repair_timeout=" << format_double(c.repair_timeout) << '\n';
  if (c.bandwidth_source.kind == BandwidthSource::Kind::cdf && !c.bandwidth_source.path.empty())
    out << "bandwidth_source=" << c.bandwidth_source.path << '\n';
  else if (c.bandwidth_source.kind == BandwidthSource::Kind::lognormal)
    out << "bandwidth_source=lognormal\n";
  out << "bandwidth_mu=" << format_double(c.bandwidth_source.mu) << '\n'
      << "bandwidth_sigma=" << format_double(c.bandwidth_source.sigma) << '\n'
      << "seed=" << c.seed << '\n'
      << "check_invariants=" << (c.check_invariants ? "true" : "false") << '\n';
}

}  // namespace p2pbackup
