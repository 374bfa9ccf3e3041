#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "adx/nn/layers.hpp"

namespace adx::train {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::size_t step = 0;
};

/// One bias-corrected Adam update of `param` in place. Throws
/// DivergenceError naming `name` if any gradient entry is non-finite; the
/// parameter and state are left untouched in that case.
void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state, const AdamOptions& options,
               const std::string& name = "parameter");

/// Adam over a fixed parameter list. Parameters that received no gradient
/// are treated as having a zero gradient.
class Adam {
 public:
  Adam(std::vector<nn::NamedTensor> params, AdamOptions options);

  /// Checks every gradient before touching any parameter, so a non-finite
  /// gradient leaves the whole model unchanged.
  void step();
  void zero_grad();

  double lr() const { return options_.lr; }
  void set_lr(double lr) { options_.lr = lr; }
  const AdamOptions& options() const { return options_; }
  const AdamState& state(std::size_t i) const { return states_.at(i); }
  std::size_t steps() const { return states_.empty() ? 0 : states_.front().step; }

 private:
  std::vector<nn::NamedTensor> params_;
  std::vector<AdamState> states_;
  AdamOptions options_;
};

/// Strict-improvement early stopping on a validation loss. Epochs are
/// numbered from 1. A non-finite loss never counts as an improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Records one epoch; returns true when training should stop now.
  bool update(double val_loss);
  /// True if the most recent update set a new best.
  bool improved() const { return improved_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }
  std::size_t epochs() const { return epoch_; }
  std::size_t patience() const { return patience_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t bad_epochs_ = 0;
  double best_;
  bool improved_ = false;
};

struct StopDecision {
  bool stop = false;
  /// Epoch after which training halts; the history length if it never stops.
  std::size_t stop_epoch = 0;
  std::size_t best_epoch = 0;
};

/// Replays EarlyStopping over a whole history. Throws std::invalid_argument
/// for an empty history.
StopDecision early_stopping(const std::vector<double>& val_losses, std::size_t patience);

struct PlateauOptions {
  double factor = 0.1;
  std::size_t patience = 5;
  double min_lr = 1e-6;
  void validate() const;
};

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without strict improvement, never going below `min_lr`.
class ReduceOnPlateau {
 public:
  ReduceOnPlateau(double lr, PlateauOptions options);

  /// Records one epoch and returns the learning rate for the next one.
  double update(double val_loss);
  double lr() const { return lr_; }

 private:
  PlateauOptions options_;
  double lr_;
  double best_;
  std::size_t bad_epochs_ = 0;
};

/// Learning rate after replaying the whole history through ReduceOnPlateau.
double reduce_on_plateau(double lr, const std::vector<double>& val_losses, const PlateauOptions& options);

}  // namespace adx::train
