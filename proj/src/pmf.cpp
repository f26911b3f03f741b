#include <algorithm>
#include <numeric>

#include "models_impl.hpp"

namespace ucds {

PmfModel::PmfModel(const TrainConfig& config, std::size_t n_users,
                   std::size_t n_items)
    : Backbone(config, n_users, n_items),
      dim_(static_cast<std::size_t>(config.latent_dim_mf)) {
  params_.emplace_back("user_factors", n_users, dim_);
  params_.emplace_back("item_factors", n_items, dim_);
}

double PmfModel::score(UserIndex user, ItemIndex item) const {
  check_ids(user, item);
  auto u = params_[users_].row(user);
  auto v = params_[items_].row(item);
  return std::inner_product(u.begin(), u.end(), v.begin(), 0.0);
}

std::vector<double> PmfModel::user_embedding(UserIndex user) const {
  check_user(user);
  auto row = params_[users_].row(user);
  return {row.begin(), row.end()};
}

void PmfModel::add_user_embedding_grad(UserIndex user,
                                       std::span<const double> grad,
                                       ParamSet& grads) const {
  check_user(user);
  auto g = grads[users_].row(user);
  for (std::size_t k = 0; k < dim_; ++k) g[k] += grad[k];
}

double PmfModel::loss_and_grad(std::span<const TrainingExample> batch,
                               ParamSet& grads) const {
  const auto& users = params_[users_];
  const auto& items = params_[items_];
  const double scale = 1.0 / static_cast<double>(batch.size());
  double bce = 0.0;
  std::vector<UserIndex> touched_users;
  std::vector<ItemIndex> touched_items;
  touched_users.reserve(batch.size());
  touched_items.reserve(batch.size());
  for (const auto& ex : batch) {
    const double z = score(ex.user, ex.item);
    bce += softplus(z) - ex.label * z;
    const double dz = (sigmoid(z) - ex.label) * scale;
    auto u = users.row(ex.user);
    auto v = items.row(ex.item);
    auto gu = grads[users_].row(ex.user);
    auto gv = grads[items_].row(ex.item);
    for (std::size_t k = 0; k < dim_; ++k) {
      gu[k] += dz * v[k];
      gv[k] += dz * u[k];
    }
    touched_users.push_back(ex.user);
    touched_items.push_back(ex.item);
  }

  double reg = 0.0;
  const double l2 = config_.l2_regularization;
  if (l2 > 0.0) {
    auto unique_sorted = [](auto& ids) {
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    };
    unique_sorted(touched_users);
    unique_sorted(touched_items);
    auto penalize = [&](std::size_t table, const auto& ids) {
      for (auto id : ids) {
        auto row = params_[table].row(id);
        auto g = grads[table].row(id);
        for (std::size_t k = 0; k < dim_; ++k) {
          reg += row[k] * row[k];
          g[k] += 2.0 * l2 * row[k];
        }
      }
    };
    penalize(users_, touched_users);
    penalize(items_, touched_items);
  }
  return bce * scale + l2 * reg;
}

}  // namespace ucds
