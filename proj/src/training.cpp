#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <optional>

#include "ucds/errors.hpp"
#include "ucds/fairness.hpp"

namespace ucds {

TrainingResult run_training(ModelKind kind, const TrainConfig& train_config,
                            const FairnessConfig& fairness,
                            const EvalConfig& eval_config,
                            const TrainingData& data,
                            const TrainingHooks& hooks) {
  train_config.validate();
  fairness.validate();
  eval_config.validate();
  if (!data.full || !data.split || !data.grouping || !data.tune_candidates)
    throw std::invalid_argument("run_training: incomplete training data");
  const auto& train = data.split->train;

  Rng init_rng = make_rng(train_config.seed, rng_stream::model_init);
  Rng rng = make_rng(train_config.seed, rng_stream::training);
  auto model = init_model(kind, train_config, train.n_users(), train.n_items(),
                          init_rng);
  AdamState state = AdamState::for_params(model->params());
  ParamSet grads = zeros_like(model->params());
  const double lambda = fairness.effective_weight();

  // The original method still tracks the UCDS assignment so its fairness
  // loss can be logged, but never trains on it.
  std::optional<ClusterAssignment> assignment;
  if (fairness.method == Method::in_naive)
    assignment = naive_assign(train, *data.grouping,
                              static_cast<std::size_t>(fairness.naive_k));

  TrainingResult result;
  result.history.reserve(static_cast<std::size_t>(train_config.num_epoch));
  const auto batch_size = static_cast<std::size_t>(train_config.batch_size);
  std::vector<UserIndex> batch_users;

  for (int epoch = 1; epoch <= train_config.num_epoch; ++epoch) {
    if (fairness.method != Method::in_naive &&
        (epoch - 1) % fairness.refresh_period == 0)
      assignment = ucds_assign_all(*model, *data.grouping, fairness.ucds);

    auto examples = sample_training_negatives(
        train, static_cast<std::size_t>(train_config.num_negative), rng);
    std::shuffle(examples.begin(), examples.end(), rng);

    double loss_sum = 0.0, fair_sum = 0.0;
    std::size_t batches = 0, fair_batches = 0;
    for (std::size_t start = 0; start < examples.size(); start += batch_size) {
      const std::span<const TrainingExample> batch(
          examples.data() + start, std::min(batch_size, examples.size() - start));
      fill_zero(grads);
      const auto loss = combined_loss(*model, batch, &*assignment, lambda, grads);

      FairnessTerm logged = loss.fairness;
      if (lambda == 0.0) {
        batch_users.clear();
        for (const auto& ex : batch) batch_users.push_back(ex.user);
        logged = fairness_loss(*model, *assignment, batch_users);
      }
      if (!std::isfinite(loss.total) || !std::isfinite(logged.value))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches + 1) +
                           " (backbone " + std::to_string(loss.backbone) +
                           ", fairness " + std::to_string(logged.value) + ")");
      adam_step(state, model->params(), grads, train_config.adam_lr);

      loss_sum += loss.backbone;
      ++batches;
      if (logged.users > 0) {
        fair_sum += logged.value;
        ++fair_batches;
      }
    }

    const auto tune = evaluate(*model, *data.tune_candidates, *data.full,
                               *data.grouping, eval_config);
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    record.l_fairness = fair_batches ? fair_sum / static_cast<double>(fair_batches) : 0.0;
    record.tune_ndcg = tune.report.ndcg.overall;
    record.assigned_users = assignment->assigned_users();
    result.history.push_back(record);
    spdlog::debug("epoch {} loss {:.5f} l_fairness {:.6f} tune ndcg {:.4f}",
                  epoch, record.train_loss, record.l_fairness, record.tune_ndcg);

    if (record.tune_ndcg > result.best_tune_ndcg) {
      result.best_tune_ndcg = record.tune_ndcg;
      result.best_epoch = epoch;
      result.best_model = model->clone();
      result.best_state = state;
      if (hooks.on_best) hooks.on_best(*model, state, epoch);
    }
    if (hooks.on_epoch_end) hooks.on_epoch_end(*model, epoch);
  }
  return result;
}

}  // namespace ucds
