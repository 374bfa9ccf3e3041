#include "adx/train/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "adx/core/errors.hpp"

namespace adx::train {

namespace {

void require_finite(std::span<const double> grad, const std::string& name) {
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw DivergenceError("non-finite gradient in '" + name + "' at index " + std::to_string(i));
    }
  }
}

bool improves(double loss, double best) { return std::isfinite(loss) && loss < best; }

}  // namespace

void adam_step(std::span<double> param, std::span<const double> grad, AdamState& state, const AdamOptions& o,
               const std::string& name) {
  if (grad.size() != param.size()) throw ShapeError("adam_step: gradient size differs for '" + name + "'");
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(param.size(), 0.0);
    state.v.assign(param.size(), 0.0);
  }
  if (state.m.size() != param.size() || state.v.size() != param.size()) {
    throw ShapeError("adam_step: optimizer state size differs for '" + name + "'");
  }
  require_finite(grad, name);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    state.m[i] = o.beta1 * state.m[i] + (1.0 - o.beta1) * g;
    state.v[i] = o.beta2 * state.v[i] + (1.0 - o.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    param[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
  }
}

Adam::Adam(std::vector<nn::NamedTensor> params, AdamOptions options)
    : params_(std::move(params)), states_(params_.size()), options_(options) {
  if (!(options_.lr >= 0.0) || !std::isfinite(options_.lr)) throw std::invalid_argument("adam: lr must be >= 0");
}

void Adam::step() {
  for (auto& p : params_) require_finite(p.tensor.grad(), p.name);
  std::vector<double> zeros;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& t = params_[k].tensor;
    std::span<const double> g = t.grad();
    if (g.empty()) {
      zeros.assign(t.numel(), 0.0);
      g = zeros;
    }
    adam_step(t.mutable_values(), g, states_[k], options_, params_[k].name);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

EarlyStopping::EarlyStopping(std::size_t patience)
    : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  if (patience == 0) throw std::invalid_argument("early stopping: patience must be >= 1");
}

bool EarlyStopping::update(double val_loss) {
  ++epoch_;
  improved_ = improves(val_loss, best_);
  if (improved_) {
    best_ = val_loss;
    best_epoch_ = epoch_;
    bad_epochs_ = 0;
    return false;
  }
  ++bad_epochs_;
  return bad_epochs_ >= patience_;
}

StopDecision early_stopping(const std::vector<double>& val_losses, std::size_t patience) {
  if (val_losses.empty()) throw std::invalid_argument("early stopping: empty history");
  EarlyStopping es(patience);
  StopDecision d;
  for (double loss : val_losses) {
    if (es.update(loss)) {
      d.stop = true;
      break;
    }
  }
  d.stop_epoch = es.epochs();
  d.best_epoch = es.best_epoch();
  return d;
}

void PlateauOptions::validate() const {
  if (!(factor > 0.0 && factor < 1.0)) throw std::invalid_argument("plateau: factor must be in (0,1)");
  if (patience == 0) throw std::invalid_argument("plateau: patience must be >= 1");
  if (!(min_lr >= 0.0)) throw std::invalid_argument("plateau: min_lr must be >= 0");
}

ReduceOnPlateau::ReduceOnPlateau(double lr, PlateauOptions options)
    : options_(options), lr_(lr), best_(std::numeric_limits<double>::infinity()) {
  options_.validate();
}

double ReduceOnPlateau::update(double val_loss) {
  if (improves(val_loss, best_)) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return lr_;
  }
  if (++bad_epochs_ >= options_.patience) {
    // A rate already at or below the floor (including 0) is left alone.
    if (lr_ > options_.min_lr) lr_ = std::max(lr_ * options_.factor, options_.min_lr);
    bad_epochs_ = 0;
  }
  return lr_;
}

double reduce_on_plateau(double lr, const std::vector<double>& val_losses, const PlateauOptions& options) {
  ReduceOnPlateau r(lr, options);
  for (double loss : val_losses) r.update(loss);
  return r.lr();
}

}  // namespace adx::train
