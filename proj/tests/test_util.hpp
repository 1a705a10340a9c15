#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "bundleseg/volume.hpp"

namespace testutil {

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 rng(std::random_device{}());
    path = std::filesystem::temp_directory_path() / ("bseg_" + tag + "_" + std::to_string(rng()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline bundleseg::ScalarVolume random_mask(const bundleseg::VoxelGrid& g, double p, std::mt19937_64& rng) {
  bundleseg::ScalarVolume v(g);
  std::bernoulli_distribution bit(p);
  for (auto& x : v.values) x = bit(rng) ? 1.0f : 0.0f;
  return v;
}

}  // namespace testutil
