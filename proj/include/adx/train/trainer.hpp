#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adx/core/errors.hpp"
#include "adx/data/dataset.hpp"
#include "adx/nn/model.hpp"
#include "adx/train/metrics.hpp"
#include "adx/train/optim.hpp"

namespace adx::train {

/// How the KL term of a Bayesian model is weighted per minibatch.
///   uniform   1/M for each of the M batches of an epoch
///   blundell  2^(M-i) / (2^M - 1) for batch i = 1..M
///   constant  TrainConfig::kl_weight
enum class KlWeighting { uniform, blundell, constant };

std::string to_string(KlWeighting w);
KlWeighting kl_weighting_from_string(const std::string& s);
double kl_batch_weight(KlWeighting mode, std::size_t batch_index, std::size_t n_batches, double constant);

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 100;
  std::size_t patience = 10;
  bool early_stopping = true;
  /// Restore the best-validation snapshot when training ends.
  bool restore_best = true;
  /// Overrides every dropout layer's rate when set.
  std::optional<double> dropout;
  KlWeighting kl_weighting = KlWeighting::uniform;
  double kl_weight = 1.0;
  bool reduce_on_plateau = false;
  PlateauOptions plateau;
  /// Stochastic passes averaged when a Bayesian model predicts.
  std::size_t mc_samples = 10;
  std::uint64_t seed = 0;

  /// learning_rate may be 0 (a null update); it must not be negative.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  std::size_t epoch = 0;
  /// Minimised objective averaged over samples; for Bayesian models this
  /// includes the weighted KL term.
  double train_loss = 0.0;
  /// Cross-entropy of the predictive distribution on the validation set.
  double val_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  /// Learning rate used during the epoch.
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;

  /// Header: epoch,train_loss,val_loss,train_acc,val_acc,lr (17 significant
  /// digits, so two identical runs give identical bytes).
  void write_csv(std::ostream& os) const;
};

/// Thrown when a loss or gradient turns non-finite. The model has already
/// been restored to the end of the last completed epoch.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, TrainHistory history)
      : DivergenceError(what), history_(std::move(history)) {}
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

/// Shuffled minibatch index lists. A trailing batch of one sample is merged
/// into the previous batch, because train-mode batchnorm needs two rows.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, SeededRng& rng);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam on cross-entropy (deterministic models) or the per-sample ELBO
/// (Bayesian models), with early stopping on validation loss. Shuffling and
/// layer noise are derived from config.seed and the epoch number.
TrainHistory fit(nn::Model& model, const data::LabeledImageSet& train_set, const data::LabeledImageSet& val_set,
                   const TrainConfig& config, const EpochCallback& on_epoch = {});

struct PredictOptions {
  std::size_t batch_size = 64;
  std::size_t mc_samples = 10;
  std::uint64_t seed = 0;
};

/// Class probabilities [N,K] in eval mode. Bayesian models average
/// mc_samples sampled passes; other models make one deterministic pass.
Tensor predict_proba(nn::Model& model, const Tensor& images, const PredictOptions& options = {});

struct Evaluation {
  ClassificationMetrics metrics;
  double loss = 0.0;
  Tensor probabilities;
};

/// Throws DataError if the set is empty or its class count differs from the
/// model's output width.
Evaluation evaluate(nn::Model& model, const data::LabeledImageSet& test_set, const PredictOptions& options = {});

}  // namespace adx::train
