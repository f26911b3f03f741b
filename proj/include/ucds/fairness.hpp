#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ucds/cds.hpp"
#include "ucds/dataset.hpp"
#include "ucds/metrics.hpp"
#include "ucds/models.hpp"

namespace ucds {

enum class Method { original, in_ucds, in_naive };

std::string to_string(Method method);
Method parse_method(const std::string& name);  // throws ConfigError

struct FairnessConfig {
  Method method = Method::in_ucds;
  double weight = 0.1;  // lambda; ignored (treated as 0) for original
  int refresh_period = 1;
  int naive_k = 5;
  UcdsParams ucds;

  void validate() const;
  // Weight that actually multiplies the fairness gradient.
  double effective_weight() const {
    return method == Method::original ? 0.0 : weight;
  }
  bool operator==(const FairnessConfig&) const = default;
};

struct FairnessTerm {
  double value = 0.0;
  std::size_t users = 0;  // |D_b|
};

// Mean over the batch's disadvantaged users with partners of
// ||e_d - sum_a w_a e_a||^2. When `grads` is given, scale * dL/de_d is added
// for each such d; partner embeddings receive nothing.
FairnessTerm fairness_loss(const Backbone& model,
                           const ClusterAssignment& assignment,
                           std::span<const UserIndex> batch_users,
                           ParamSet* grads = nullptr, double scale = 1.0);

struct CombinedLoss {
  double total = 0.0;
  double backbone = 0.0;
  FairnessTerm fairness;
};

// backbone + lambda * fairness, gradients summed into `grads`. With
// lambda == 0 (or no assignment) the fairness term is neither computed nor
// added.
CombinedLoss combined_loss(const Backbone& model,
                           std::span<const TrainingExample> batch,
                           const ClusterAssignment* assignment, double lambda,
                           ParamSet& grads);

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double l_fairness = 0.0;
  double tune_ndcg = 0.0;
  std::size_t assigned_users = 0;
};

struct TrainingData {
  const InteractionLog* full = nullptr;
  const SplitDataset* split = nullptr;
  const UserGrouping* grouping = nullptr;
  const EvalCandidateSet* tune_candidates = nullptr;
};

struct TrainingHooks {
  // Fired whenever tune NDCG improves; used to persist the best checkpoint.
  std::function<void(const Backbone&, const AdamState&, int epoch)> on_best;
  std::function<void(const Backbone&, int epoch)> on_epoch_end;
};

struct TrainingResult {
  std::unique_ptr<Backbone> best_model;
  AdamState best_state;
  int best_epoch = 0;
  double best_tune_ndcg = -1.0;
  std::vector<EpochRecord> history;
};

TrainingResult run_training(ModelKind kind, const TrainConfig& train_config,
                            const FairnessConfig& fairness,
                            const EvalConfig& eval_config,
                            const TrainingData& data,
                            const TrainingHooks& hooks = {});

struct CurvePoint {
  int epoch = 0;
  Method method = Method::original;
  double l_fairness = 0.0;
};

// "epoch,method,l_fairness"
void write_curve(std::span<const CurvePoint> points,
                 const std::filesystem::path& path);
std::vector<CurvePoint> curve_points(Method method,
                                     std::span<const EpochRecord> history);

}  // namespace ucds
