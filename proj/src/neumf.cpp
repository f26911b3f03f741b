#include <algorithm>

#include "models_impl.hpp"

namespace ucds {

NeuMfModel::NeuMfModel(const TrainConfig& config, std::size_t n_users,
                       std::size_t n_items)
    : Backbone(config, n_users, n_items),
      mf_dim_(static_cast<std::size_t>(config.latent_dim_mf)),
      mlp_dim_(static_cast<std::size_t>(config.latent_dim_mlp)),
      n_dense_(config.layers.size() - 1) {
  params_.emplace_back("mf_user", n_users, mf_dim_);
  params_.emplace_back("mf_item", n_items, mf_dim_);
  params_.emplace_back("mlp_user", n_users, mlp_dim_);
  params_.emplace_back("mlp_item", n_items, mlp_dim_);
  for (std::size_t l = 0; l < n_dense_; ++l) {
    const auto in = static_cast<std::size_t>(config.layers[l]);
    const auto out = static_cast<std::size_t>(config.layers[l + 1]);
    params_.emplace_back("mlp_weight_" + std::to_string(l), out, in);
    params_.emplace_back("mlp_bias_" + std::to_string(l), out, 1);
  }
  const auto last = static_cast<std::size_t>(config.layers.back());
  params_.emplace_back("fusion_weight", 1, mf_dim_ + last);
  params_.emplace_back("fusion_bias", 1, 1);
}

void NeuMfModel::forward(UserIndex user, ItemIndex item, Forward& f) const {
  check_ids(user, item);
  auto mu = params_[mf_user_].row(user);
  auto mi = params_[mf_item_].row(item);
  f.gmf.resize(mf_dim_);
  for (std::size_t k = 0; k < mf_dim_; ++k) f.gmf[k] = mu[k] * mi[k];

  f.acts.resize(n_dense_ + 1);
  auto& input = f.acts[0];
  auto lu = params_[mlp_user_].row(user);
  auto li = params_[mlp_item_].row(item);
  input.assign(lu.begin(), lu.end());
  input.insert(input.end(), li.begin(), li.end());

  for (std::size_t l = 0; l < n_dense_; ++l) {
    const auto& w = params_[weight_index(l)];
    const auto& b = params_[bias_index(l)];
    const auto& h = f.acts[l];
    auto& out = f.acts[l + 1];
    out.resize(w.rows);
    for (std::size_t r = 0; r < w.rows; ++r) {
      double a = b.values[r];
      auto wr = w.row(r);
      for (std::size_t c = 0; c < w.cols; ++c) a += wr[c] * h[c];
      out[r] = std::max(a, 0.0);
    }
  }

  const auto& fw = params_[fusion_weight_index()].values;
  double z = params_[fusion_bias_index()].values[0];
  for (std::size_t k = 0; k < mf_dim_; ++k) z += fw[k] * f.gmf[k];
  const auto& top = f.acts.back();
  for (std::size_t k = 0; k < top.size(); ++k) z += fw[mf_dim_ + k] * top[k];
  f.logit = z;
}

double NeuMfModel::score(UserIndex user, ItemIndex item) const {
  Forward f;
  forward(user, item, f);
  return sigmoid(f.logit);
}

std::vector<double> NeuMfModel::user_embedding(UserIndex user) const {
  check_user(user);
  auto mf = params_[mf_user_].row(user);
  auto mlp = params_[mlp_user_].row(user);
  std::vector<double> out(mf.begin(), mf.end());
  out.insert(out.end(), mlp.begin(), mlp.end());
  return out;
}

void NeuMfModel::add_user_embedding_grad(UserIndex user,
                                         std::span<const double> grad,
                                         ParamSet& grads) const {
  check_user(user);
  auto g_mf = grads[mf_user_].row(user);
  auto g_mlp = grads[mlp_user_].row(user);
  for (std::size_t k = 0; k < mf_dim_; ++k) g_mf[k] += grad[k];
  for (std::size_t k = 0; k < mlp_dim_; ++k) g_mlp[k] += grad[mf_dim_ + k];
}

double NeuMfModel::loss_and_grad(std::span<const TrainingExample> batch,
                                 ParamSet& grads) const {
  const double scale = 1.0 / static_cast<double>(batch.size());
  const auto& fw = params_[fusion_weight_index()].values;
  double bce = 0.0;
  Forward f;
  std::vector<double> delta, below;
  std::vector<UserIndex> touched_users;
  std::vector<ItemIndex> touched_items;

  for (const auto& ex : batch) {
    forward(ex.user, ex.item, f);
    bce += softplus(f.logit) - ex.label * f.logit;
    const double dz = (sigmoid(f.logit) - ex.label) * scale;

    auto& g_fw = grads[fusion_weight_index()].values;
    grads[fusion_bias_index()].values[0] += dz;
    const auto& top = f.acts.back();
    for (std::size_t k = 0; k < mf_dim_; ++k) g_fw[k] += dz * f.gmf[k];
    for (std::size_t k = 0; k < top.size(); ++k) g_fw[mf_dim_ + k] += dz * top[k];

    // GMF tower.
    auto mu = params_[mf_user_].row(ex.user);
    auto mi = params_[mf_item_].row(ex.item);
    auto g_mu = grads[mf_user_].row(ex.user);
    auto g_mi = grads[mf_item_].row(ex.item);
    for (std::size_t k = 0; k < mf_dim_; ++k) {
      const double d_gmf = dz * fw[k];
      g_mu[k] += d_gmf * mi[k];
      g_mi[k] += d_gmf * mu[k];
    }

    // MLP tower, walking the dense layers backwards.
    delta.resize(top.size());
    for (std::size_t k = 0; k < top.size(); ++k) delta[k] = dz * fw[mf_dim_ + k];
    for (std::size_t l = n_dense_; l-- > 0;) {
      const auto& w = params_[weight_index(l)];
      auto& g_w = grads[weight_index(l)];
      auto& g_b = grads[bias_index(l)].values;
      const auto& h_in = f.acts[l];
      const auto& h_out = f.acts[l + 1];
      below.assign(w.cols, 0.0);
      for (std::size_t r = 0; r < w.rows; ++r) {
        // ReLU passes gradient only where the unit was active.
        if (h_out[r] <= 0.0) continue;
        const double d = delta[r];
        g_b[r] += d;
        auto wr = w.row(r);
        auto gwr = g_w.row(r);
        for (std::size_t c = 0; c < w.cols; ++c) {
          gwr[c] += d * h_in[c];
          below[c] += d * wr[c];
        }
      }
      delta.swap(below);
    }
    auto g_lu = grads[mlp_user_].row(ex.user);
    auto g_li = grads[mlp_item_].row(ex.item);
    for (std::size_t k = 0; k < mlp_dim_; ++k) {
      g_lu[k] += delta[k];
      g_li[k] += delta[mlp_dim_ + k];
    }

    touched_users.push_back(ex.user);
    touched_items.push_back(ex.item);
  }

  double reg = 0.0;
  const double l2 = config_.l2_regularization;
  if (l2 > 0.0) {
    std::sort(touched_users.begin(), touched_users.end());
    touched_users.erase(std::unique(touched_users.begin(), touched_users.end()),
                        touched_users.end());
    std::sort(touched_items.begin(), touched_items.end());
    touched_items.erase(std::unique(touched_items.begin(), touched_items.end()),
                        touched_items.end());
    auto penalize = [&](std::size_t table, const auto& ids) {
      for (auto id : ids) {
        auto row = params_[table].row(id);
        auto g = grads[table].row(id);
        for (std::size_t k = 0; k < row.size(); ++k) {
          reg += row[k] * row[k];
          g[k] += 2.0 * l2 * row[k];
        }
      }
    };
    penalize(mf_user_, touched_users);
    penalize(mlp_user_, touched_users);
    penalize(mf_item_, touched_items);
    penalize(mlp_item_, touched_items);
  }
  return bce * scale + l2 * reg;
}

}  // namespace ucds
