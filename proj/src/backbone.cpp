#include <cmath>
#include <stdexcept>

#include "models_impl.hpp"
#include "ucds/errors.hpp"

namespace ucds {

std::string to_string(ModelKind kind) {
  return kind == ModelKind::pmf ? "pmf" : "neumf";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "pmf" || name == "PMF") return ModelKind::pmf;
  if (name == "neumf" || name == "NeuMF") return ModelKind::neumf;
  throw ConfigError("model", "unknown backbone '" + name + "' (pmf, neumf)");
}

void TrainConfig::validate() const {
  auto positive = [](const char* key, long long v) {
    if (v < 1) throw ConfigError(key, "must be at least 1");
  };
  positive("num_epoch", num_epoch);
  positive("batch_size", batch_size);
  positive("latent_dim_mf", latent_dim_mf);
  positive("latent_dim_mlp", latent_dim_mlp);
  positive("num_negative", num_negative);
  if (!(adam_lr > 0.0)) throw ConfigError("adam_lr", "must be positive");
  if (!(l2_regularization >= 0.0))
    throw ConfigError("l2_regularization", "must be non-negative");
  if (layers.empty()) throw ConfigError("layers", "must not be empty");
  for (int width : layers)
    if (width < 1) throw ConfigError("layers", "widths must be at least 1");
  if (layers.front() != 2 * latent_dim_mlp)
    throw ConfigError("layers",
                      "first width must be 2 * latent_dim_mlp = " +
                          std::to_string(2 * latent_dim_mlp) + ", got " +
                          std::to_string(layers.front()));
}

kv::Entries train_config_entries(const TrainConfig& c) {
  return {
      {"num_epoch", std::to_string(c.num_epoch)},
      {"batch_size", std::to_string(c.batch_size)},
      {"adam_lr", kv::format_real(c.adam_lr)},
      {"latent_dim_mf", std::to_string(c.latent_dim_mf)},
      {"latent_dim_mlp", std::to_string(c.latent_dim_mlp)},
      {"num_negative", std::to_string(c.num_negative)},
      {"layers", kv::format_int_list(c.layers)},
      {"l2_regularization", kv::format_real(c.l2_regularization)},
      {"seed", std::to_string(c.seed)},
  };
}

bool set_train_config_field(TrainConfig& c, const std::string& key,
                            const std::string& value) {
  auto small_int = [&](int& field) {
    auto v = kv::to_int(key, value);
    if (v < INT32_MIN || v > INT32_MAX) throw ConfigError(key, "out of range");
    field = static_cast<int>(v);
  };
  if (key == "num_epoch") small_int(c.num_epoch);
  else if (key == "batch_size") small_int(c.batch_size);
  else if (key == "adam_lr") c.adam_lr = kv::to_real(key, value);
  else if (key == "latent_dim_mf") small_int(c.latent_dim_mf);
  else if (key == "latent_dim_mlp") small_int(c.latent_dim_mlp);
  else if (key == "num_negative") small_int(c.num_negative);
  else if (key == "layers") c.layers = kv::to_int_list(key, value);
  else if (key == "l2_regularization") c.l2_regularization = kv::to_real(key, value);
  else if (key == "seed") c.seed = kv::to_uint(key, value);
  else return false;
  return true;
}

ParamSet zeros_like(const ParamSet& params) {
  ParamSet out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.name, p.rows, p.cols);
  return out;
}

void fill_zero(ParamSet& set) {
  for (auto& t : set) std::fill(t.values.begin(), t.values.end(), 0.0);
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

void Backbone::check_user(UserIndex user) const {
  if (user >= n_users_)
    throw std::out_of_range("user index " + std::to_string(user) +
                            " out of range");
}

void Backbone::check_ids(UserIndex user, ItemIndex item) const {
  check_user(user);
  if (item >= n_items_)
    throw std::out_of_range("item index " + std::to_string(item) +
                            " out of range");
}

std::unique_ptr<Backbone> make_zero_model(ModelKind kind,
                                          const TrainConfig& config,
                                          std::size_t n_users,
                                          std::size_t n_items) {
  config.validate();
  if (kind == ModelKind::pmf)
    return std::make_unique<PmfModel>(config, n_users, n_items);
  return std::make_unique<NeuMfModel>(config, n_users, n_items);
}

std::unique_ptr<Backbone> init_model(ModelKind kind, const TrainConfig& config,
                                     std::size_t n_users, std::size_t n_items,
                                     Rng& rng) {
  auto model = make_zero_model(kind, config, n_users, n_items);
  std::normal_distribution<double> gauss(0.0, 0.01);
  for (auto& t : model->params()) {
    if (is_bias(t)) continue;
    for (auto& v : t.values) v = gauss(rng);
  }
  return model;
}

}  // namespace ucds
