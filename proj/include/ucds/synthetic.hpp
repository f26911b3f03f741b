#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ucds/dataset.hpp"

namespace ucds {

// Implicit-feedback log with planted preference clusters and power-law user
// activity. Users and items are split round-robin into `clusters` groups; a
// user draws most items from its own group.
struct SyntheticConfig {
  std::size_t users = 300;
  std::size_t items = 200;
  std::size_t clusters = 5;
  std::size_t min_activity = 3;
  std::size_t max_activity = 80;
  double pareto_shape = 1.3;
  double in_cluster = 0.85;
  std::uint64_t seed = 7;
};

std::vector<RawRecord> generate_synthetic(const SyntheticConfig& config);

// "user item rating" lines, readable by parse_interactions.
void write_records(std::span<const RawRecord> records,
                   const std::filesystem::path& path);

}  // namespace ucds
