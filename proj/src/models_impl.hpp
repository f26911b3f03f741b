#pragma once

#include "ucds/models.hpp"

namespace ucds {

double softplus(double z);

inline bool is_bias(const Tensor& t) {
  return t.name.find("bias") != std::string::npos;
}

class PmfModel final : public Backbone {
 public:
  PmfModel(const TrainConfig& config, std::size_t n_users, std::size_t n_items);

  ModelKind kind() const override { return ModelKind::pmf; }
  std::unique_ptr<Backbone> clone() const override {
    return std::make_unique<PmfModel>(*this);
  }
  double score(UserIndex user, ItemIndex item) const override;
  std::size_t embedding_dim() const override { return dim_; }
  std::vector<double> user_embedding(UserIndex user) const override;
  void add_user_embedding_grad(UserIndex user, std::span<const double> grad,
                               ParamSet& grads) const override;
  double loss_and_grad(std::span<const TrainingExample> batch,
                       ParamSet& grads) const override;

 private:
  static constexpr std::size_t users_ = 0;
  static constexpr std::size_t items_ = 1;
  std::size_t dim_;
};

class NeuMfModel final : public Backbone {
 public:
  NeuMfModel(const TrainConfig& config, std::size_t n_users,
             std::size_t n_items);

  ModelKind kind() const override { return ModelKind::neumf; }
  std::unique_ptr<Backbone> clone() const override {
    return std::make_unique<NeuMfModel>(*this);
  }
  double score(UserIndex user, ItemIndex item) const override;
  std::size_t embedding_dim() const override { return mf_dim_ + mlp_dim_; }
  std::vector<double> user_embedding(UserIndex user) const override;
  void add_user_embedding_grad(UserIndex user, std::span<const double> grad,
                               ParamSet& grads) const override;
  double loss_and_grad(std::span<const TrainingExample> batch,
                       ParamSet& grads) const override;

 private:
  // Activations of one forward pass: acts[0] is the MLP input, acts[l + 1]
  // the post-ReLU output of dense layer l.
  struct Forward {
    std::vector<double> gmf;
    std::vector<std::vector<double>> acts;
    double logit = 0.0;
  };
  void forward(UserIndex user, ItemIndex item, Forward& f) const;

  static constexpr std::size_t mf_user_ = 0;
  static constexpr std::size_t mf_item_ = 1;
  static constexpr std::size_t mlp_user_ = 2;
  static constexpr std::size_t mlp_item_ = 3;
  std::size_t weight_index(std::size_t layer) const { return 4 + 2 * layer; }
  std::size_t bias_index(std::size_t layer) const { return 5 + 2 * layer; }
  std::size_t fusion_weight_index() const { return 4 + 2 * n_dense_; }
  std::size_t fusion_bias_index() const { return 5 + 2 * n_dense_; }

  std::size_t mf_dim_;
  std::size_t mlp_dim_;
  std::size_t n_dense_;
};

}  // namespace ucds
