#include "ucds/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "ucds/errors.hpp"

namespace ucds {

std::vector<RawRecord> generate_synthetic(const SyntheticConfig& config) {
  if (config.clusters == 0 || config.items < config.clusters ||
      config.min_activity == 0 || config.max_activity < config.min_activity ||
      config.max_activity > config.items)
    throw std::invalid_argument("inconsistent synthetic dataset config");
  Rng rng = make_rng(config.seed, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<std::vector<ExternalId>> cluster_items(config.clusters);
  for (std::size_t i = 0; i < config.items; ++i)
    cluster_items[i % config.clusters].push_back(static_cast<ExternalId>(i + 1));

  std::vector<RawRecord> records;
  for (std::size_t u = 0; u < config.users; ++u) {
    const std::size_t cluster = u % config.clusters;
    // Pareto(min_activity, shape), truncated.
    const double draw = static_cast<double>(config.min_activity) *
                        std::pow(1.0 - unit(rng), -1.0 / config.pareto_shape);
    const auto activity = std::min<std::size_t>(
        config.max_activity, static_cast<std::size_t>(std::floor(draw)));

    // Within a cluster, earlier items are more popular (weight 1/sqrt(rank)).
    std::vector<ExternalId> own = cluster_items[cluster];
    std::vector<double> weights(own.size());
    for (std::size_t r = 0; r < own.size(); ++r)
      weights[r] = 1.0 / std::sqrt(static_cast<double>(r + 1));

    std::vector<char> taken(config.items + 1, 0);
    std::size_t own_left = own.size();
    std::size_t count = 0;
    while (count < activity) {
      ExternalId item;
      if (own_left > 0 && unit(rng) < config.in_cluster) {
        std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
        const auto r = pick(rng);
        item = own[r];
        weights[r] = 0.0;
        --own_left;
      } else {
        item = std::uniform_int_distribution<ExternalId>(
            1, static_cast<ExternalId>(config.items))(rng);
        if (taken[static_cast<std::size_t>(item)]) continue;
        if (static_cast<std::size_t>(item - 1) % config.clusters == cluster) {
          const auto r = static_cast<std::size_t>(item - 1) / config.clusters;
          weights[r] = 0.0;
          --own_left;
        }
      }
      taken[static_cast<std::size_t>(item)] = 1;
      records.push_back({static_cast<ExternalId>(u + 1), item, 1.0});
      ++count;
    }
  }
  return records;
}

void write_records(std::span<const RawRecord> records,
                   const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataErrc::io, "cannot write " + path.string());
  out.precision(17);
  for (const auto& r : records) out << r.user << ' ' << r.item << ' ' << r.rating << '\n';
}

}  // namespace ucds
