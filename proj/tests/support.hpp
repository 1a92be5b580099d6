#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "cleanfield/cleanfield.hpp"

namespace cftest {

/// Fresh scratch directory under the system temp dir, removed on exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("cleanfield_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline cleanfield::Direction random_direction(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return cleanfield::Direction::normalize({g(rng), g(rng), g(rng)});
}

/// Every parameter drawn uniformly from [lo, hi].
template <class Real>
void randomize(cleanfield::VoxelField<Real>& field, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& p : field.params()) p = Real(u(rng));
}

}  // namespace cftest
