#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ucds/dataset.hpp"
#include "ucds/kv.hpp"

namespace ucds {

enum class ModelKind { pmf, neumf };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);  // throws ConfigError

struct TrainConfig {
  int num_epoch = 50;
  int batch_size = 256;
  double adam_lr = 1e-3;
  int latent_dim_mf = 8;
  int latent_dim_mlp = 8;
  int num_negative = 4;
  std::vector<int> layers = {16, 8};
  double l2_regularization = 1e-5;
  std::uint64_t seed = 42;

  // Throws ConfigError naming the offending key.
  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

kv::Entries train_config_entries(const TrainConfig& config);
// Returns false when `key` is not a TrainConfig field.
bool set_train_config_field(TrainConfig& config, const std::string& key,
                            const std::string& value);

// Dense row-major parameter block.
struct Tensor {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), rows(r), cols(c), values(r * c, 0.0) {}

  std::span<double> row(std::size_t r) {
    return std::span<double>(values).subspan(r * cols, cols);
  }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * cols, cols);
  }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  bool operator==(const Tensor&) const = default;
};

using ParamSet = std::vector<Tensor>;

// Zero-filled tensors congruent with `params`.
ParamSet zeros_like(const ParamSet& params);
void fill_zero(ParamSet& set);

class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual ModelKind kind() const = 0;
  virtual std::unique_ptr<Backbone> clone() const = 0;

  // PMF: raw dot product. NeuMF: sigmoid output in (0, 1).
  virtual double score(UserIndex user, ItemIndex item) const = 0;
  virtual std::size_t embedding_dim() const = 0;
  virtual std::vector<double> user_embedding(UserIndex user) const = 0;
  // Scatters d(loss)/d(user_embedding) into the tables it was built from.
  virtual void add_user_embedding_grad(UserIndex user,
                                       std::span<const double> grad,
                                       ParamSet& grads) const = 0;

  // Mean BCE over the batch plus l2_regularization times the squared norm of
  // the embedding rows the batch touches. Gradients are added to `grads`.
  virtual double loss_and_grad(std::span<const TrainingExample> batch,
                               ParamSet& grads) const = 0;

  std::size_t n_users() const { return n_users_; }
  std::size_t n_items() const { return n_items_; }
  const TrainConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

 protected:
  Backbone(TrainConfig config, std::size_t n_users, std::size_t n_items)
      : config_(std::move(config)), n_users_(n_users), n_items_(n_items) {}
  void check_ids(UserIndex user, ItemIndex item) const;
  void check_user(UserIndex user) const;

  TrainConfig config_;
  std::size_t n_users_;
  std::size_t n_items_;
  ParamSet params_;
};

// Gaussian(0, 0.01^2) weights, zero biases.
std::unique_ptr<Backbone> init_model(ModelKind kind, const TrainConfig& config,
                                     std::size_t n_users, std::size_t n_items,
                                     Rng& rng);
// All parameters zero; the shape is what init_model would produce.
std::unique_ptr<Backbone> make_zero_model(ModelKind kind,
                                          const TrainConfig& config,
                                          std::size_t n_users,
                                          std::size_t n_items);

double sigmoid(double z);

// --- optimizer ----------------------------------------------------------------

struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double epsilon = 1e-8;

  ParamSet m;
  ParamSet v;
  std::uint64_t t = 0;

  static AdamState for_params(const ParamSet& params);
  bool operator==(const AdamState&) const = default;
};

// One bias-corrected Adam update over every parameter. Throws NumericError
// (before touching anything) if a gradient entry is not finite.
void adam_step(AdamState& state, ParamSet& params, const ParamSet& grads,
               double lr);

// --- checkpoints ----------------------------------------------------------------

inline constexpr std::uint32_t checkpoint_format_version = 1;

struct CheckpointMeta {
  std::string id_digest;
  std::map<std::string, std::string> fields;  // free-form provenance
  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  std::unique_ptr<Backbone> model;
  AdamState state;
  CheckpointMeta meta;
};

// Layout: magic "UCDSCKPT", u32 version, u32 header length, key=value header
// (model_kind, config, id digest, meta), then per tensor name/rows/cols and
// raw little-endian doubles, then a trailing CRC-32 of everything before it.
void save_checkpoint(const std::filesystem::path& path, const Backbone& model,
                     const AdamState& state, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           ModelKind expected);

}  // namespace ucds
