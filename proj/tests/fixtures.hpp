#pragma once

// Shared instances for the unit and acceptance tests.

#include <random>

#include "p2pbackup/sched.hpp"

namespace fixture {

// Four peers over eight slots. Row 0 is the owner; peer 1 is online in the
// first two slots, peer 2 in slots 1 and 7, peer 3 in slot 3 (1-based).
inline p2pbackup::TransferProblem small_instance(std::int64_t x = 3) {
  p2pbackup::TransferProblem p;
  p.matrix = p2pbackup::AvailabilityMatrix::from_rows(
      {"11100111", "11000000", "10000010", "00100000"});
  p.owner = 0;
  p.x = x;
  return p;
}

inline p2pbackup::AvailabilityMatrix random_matrix(std::mt19937_64& rng, std::size_t peers,
                                                   std::size_t slots, double p) {
  std::bernoulli_distribution bit(p);
  std::vector<std::uint8_t> bits(peers * slots);
  for (auto& b : bits) b = bit(rng);
  return p2pbackup::AvailabilityMatrix(peers, slots, 3600, bits);
}

}  // namespace fixture

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fixture {

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("p2pbackup-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace fixture
