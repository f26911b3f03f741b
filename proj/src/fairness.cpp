#include "ucds/fairness.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ucds/errors.hpp"
#include "ucds/kv.hpp"

namespace ucds {

std::string to_string(Method method) {
  switch (method) {
    case Method::original: return "original";
    case Method::in_ucds: return "in-ucds";
    case Method::in_naive: return "in-naive";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "original") return Method::original;
  if (name == "in-ucds") return Method::in_ucds;
  if (name == "in-naive") return Method::in_naive;
  throw ConfigError("method",
                    "unknown method '" + name + "' (original, in-ucds, in-naive)");
}

void FairnessConfig::validate() const {
  if (!(weight >= 0.0) || !std::isfinite(weight))
    throw ConfigError("lambda", "must be a finite non-negative number");
  if (refresh_period < 1) throw ConfigError("refresh_period", "must be at least 1");
  if (naive_k < 1) throw ConfigError("naive_k", "must be at least 1");
  if (ucds.candidate_pool < 1) throw ConfigError("candidate_pool", "must be at least 1");
  if (!(ucds.tol > 0.0)) throw ConfigError("ucds_tol", "must be positive");
  if (ucds.max_iter < 1) throw ConfigError("ucds_max_iter", "must be at least 1");
  if (!(ucds.support_threshold > 0.0 && ucds.support_threshold < 1.0))
    throw ConfigError("support_threshold", "must lie in (0, 1)");
}

FairnessTerm fairness_loss(const Backbone& model,
                           const ClusterAssignment& assignment,
                           std::span<const UserIndex> batch_users,
                           ParamSet* grads, double scale) {
  std::vector<UserIndex> users(batch_users.begin(), batch_users.end());
  std::sort(users.begin(), users.end());
  users.erase(std::unique(users.begin(), users.end()), users.end());
  std::erase_if(users, [&](UserIndex u) {
    const auto* partners = assignment.find(u);
    return partners == nullptr || partners->empty();
  });

  FairnessTerm term;
  term.users = users.size();
  if (users.empty()) return term;

  const double inv = 1.0 / static_cast<double>(users.size());
  const std::size_t dim = model.embedding_dim();
  std::vector<double> anchor(dim), diff(dim);
  for (UserIndex d : users) {
    std::fill(anchor.begin(), anchor.end(), 0.0);
    for (const auto& p : *assignment.find(d)) {
      const auto e = model.user_embedding(p.user);
      for (std::size_t k = 0; k < dim; ++k) anchor[k] += p.weight * e[k];
    }
    const auto e_d = model.user_embedding(d);
    double sq = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      diff[k] = e_d[k] - anchor[k];
      sq += diff[k] * diff[k];
    }
    term.value += sq * inv;
    if (grads != nullptr) {
      for (auto& g : diff) g *= 2.0 * inv * scale;
      model.add_user_embedding_grad(d, diff, *grads);
    }
  }
  return term;
}

CombinedLoss combined_loss(const Backbone& model,
                           std::span<const TrainingExample> batch,
                           const ClusterAssignment* assignment, double lambda,
                           ParamSet& grads) {
  CombinedLoss out;
  out.backbone = model.loss_and_grad(batch, grads);
  out.total = out.backbone;
  if (assignment == nullptr || lambda == 0.0) return out;
  std::vector<UserIndex> users;
  users.reserve(batch.size());
  for (const auto& ex : batch) users.push_back(ex.user);
  out.fairness = fairness_loss(model, *assignment, users, &grads, lambda);
  out.total += lambda * out.fairness.value;
  return out;
}

void write_curve(std::span<const CurvePoint> points,
                 const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(DataErrc::io, "cannot write " + path.string());
  out << "epoch,method,l_fairness\n";
  for (const auto& p : points)
    out << p.epoch << ',' << to_string(p.method) << ','
        << kv::format_real(p.l_fairness) << '\n';
}

std::vector<CurvePoint> curve_points(Method method,
                                     std::span<const EpochRecord> history) {
  std::vector<CurvePoint> out;
  out.reserve(history.size());
  for (const auto& r : history) out.push_back({r.epoch, method, r.l_fairness});
  return out;
}

}  // namespace ucds
