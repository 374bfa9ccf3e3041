#include "adx/train/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "adx/bayes/functional.hpp"
#include "adx/core/ops.hpp"
#include "adx/nn/functional.hpp"

namespace adx::train {

namespace {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void set_dropout_rate(nn::Model& model, double rate) {
  for (nn::Layer* l : model.layers())
    if (auto* d = dynamic_cast<nn::Dropout*>(l)) d->set_rate(rate);
}

std::size_t output_width(nn::Model& model, const data::LabeledImageSet& ds) {
  NoGradGuard no_grad;
  SeededRng rng(0);
  nn::ForwardContext ctx{.mode = nn::Mode::eval, .rng = &rng};
  return model.logits(ds.subset({0}).images, ctx).dim(1);
}

void check_compatible(nn::Model& model, const data::LabeledImageSet& ds, const char* what) {
  if (ds.size() == 0) throw DataError(std::string(what) + " set is empty");
  const std::size_t k = output_width(model, ds);
  if (k != ds.n_classes()) {
    throw DataError(std::string(what) + " set has " + std::to_string(ds.n_classes()) + " classes but the model outputs " +
                    std::to_string(k));
  }
}

}  // namespace

std::string to_string(KlWeighting w) {
  switch (w) {
    case KlWeighting::uniform: return "uniform";
    case KlWeighting::blundell: return "blundell";
    case KlWeighting::constant: return "constant";
  }
  return "unknown";
}

KlWeighting kl_weighting_from_string(const std::string& s) {
  if (s == "uniform") return KlWeighting::uniform;
  if (s == "blundell") return KlWeighting::blundell;
  if (s == "constant") return KlWeighting::constant;
  throw std::invalid_argument("unknown kl weighting '" + s + "' (expected uniform, blundell or constant)");
}

double kl_batch_weight(KlWeighting mode, std::size_t batch_index, std::size_t n_batches, double constant) {
  if (n_batches == 0 || batch_index >= n_batches) throw std::invalid_argument("kl_batch_weight: bad batch index");
  switch (mode) {
    case KlWeighting::uniform: return 1.0 / static_cast<double>(n_batches);
    case KlWeighting::blundell: {
      // 2^(M-i) / (2^M - 1) = 2^-i / (1 - 2^-M), which stays finite for large M.
      const int i = static_cast<int>(batch_index) + 1;
      return std::ldexp(1.0, -i) / (1.0 - std::ldexp(1.0, -static_cast<int>(n_batches)));
    }
    case KlWeighting::constant: return constant;
  }
  return 0.0;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("train: learning_rate must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
  if (max_epochs == 0) throw std::invalid_argument("train: max_epochs must be >= 1");
  if (patience == 0) throw std::invalid_argument("train: patience must be >= 1");
  if (dropout && !(*dropout >= 0.0 && *dropout < 1.0)) throw std::invalid_argument("train: dropout must be in [0,1)");
  if (!(kl_weight >= 0.0)) throw std::invalid_argument("train: kl_weight must be >= 0");
  if (mc_samples == 0) throw std::invalid_argument("train: mc_samples must be >= 1");
  if (reduce_on_plateau) plateau.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {
      {"learning_rate", c.learning_rate},
      {"batch_size", c.batch_size},
      {"max_epochs", c.max_epochs},
      {"patience", c.patience},
      {"early_stopping", c.early_stopping},
      {"restore_best", c.restore_best},
      {"kl_weighting", to_string(c.kl_weighting)},
      {"kl_weight", c.kl_weight},
      {"reduce_on_plateau", c.reduce_on_plateau},
      {"plateau", {{"factor", c.plateau.factor}, {"patience", c.plateau.patience}, {"min_lr", c.plateau.min_lr}}},
      {"mc_samples", c.mc_samples},
      {"seed", c.seed},
  };
  j["dropout"] = c.dropout ? nlohmann::json(*c.dropout) : nlohmann::json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.early_stopping = j.value("early_stopping", c.early_stopping);
  c.restore_best = j.value("restore_best", c.restore_best);
  c.kl_weighting = kl_weighting_from_string(j.value("kl_weighting", to_string(c.kl_weighting)));
  c.kl_weight = j.value("kl_weight", c.kl_weight);
  c.reduce_on_plateau = j.value("reduce_on_plateau", c.reduce_on_plateau);
  if (j.contains("plateau")) {
    const auto& p = j.at("plateau");
    c.plateau.factor = p.value("factor", c.plateau.factor);
    c.plateau.patience = p.value("patience", c.plateau.patience);
    c.plateau.min_lr = p.value("min_lr", c.plateau.min_lr);
  }
  c.mc_samples = j.value("mc_samples", c.mc_samples);
  c.seed = j.value("seed", c.seed);
  if (j.contains("dropout") && !j.at("dropout").is_null()) c.dropout = j.at("dropout").get<double>();
  c.validate();
  return c;
}

void TrainHistory::write_csv(std::ostream& os) const {
  os << "epoch,train_loss,val_loss,train_acc,val_acc,lr\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << g17(e.train_loss) << ',' << g17(e.val_loss) << ',' << g17(e.train_acc) << ','
       << g17(e.val_acc) << ',' << g17(e.lr) << '\n';
  }
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, SeededRng& rng) {
  if (batch_size == 0) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (batches.size() >= 2 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back().front());
    batches.pop_back();
  }
  return batches;
}

Tensor predict_proba(nn::Model& model, const Tensor& images, const PredictOptions& options) {
  if (images.rank() != 4) throw ShapeError("predict: images must be [N,H,W,C], got " + shape_str(images.shape()));
  if (options.batch_size == 0 || options.mc_samples == 0)
    throw std::invalid_argument("predict: batch_size and mc_samples must be >= 1");
  NoGradGuard no_grad;
  const bool bayesian = model.is_bayesian();
  const std::size_t passes = bayesian ? options.mc_samples : 1;
  const std::size_t n = images.dim(0);
  const std::size_t per_image = images.numel() / std::max<std::size_t>(n, 1);
  SeededRng rng(derive_seed(options.seed, "predict"));
  std::vector<double> out;
  std::size_t k = 0;
  for (std::size_t start = 0; start < n; start += options.batch_size) {
    const std::size_t b = std::min(options.batch_size, n - start);
    auto src = images.values().subspan(start * per_image, b * per_image);
    const Tensor batch({b, images.dim(1), images.dim(2), images.dim(3)}, {src.begin(), src.end()});
    std::vector<double> acc;
    for (std::size_t s = 0; s < passes; ++s) {
      nn::ForwardContext ctx{.mode = nn::Mode::eval, .rng = &rng};
      const Tensor p = model.forward(batch, ctx);
      if (acc.empty()) {
        acc.assign(p.values().begin(), p.values().end());
        k = p.dim(1);
      } else {
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
      }
    }
    if (passes > 1)
      for (auto& v : acc) v /= static_cast<double>(passes);
    out.insert(out.end(), acc.begin(), acc.end());
  }
  return Tensor({n, k}, std::move(out));
}

Evaluation evaluate(nn::Model& model, const data::LabeledImageSet& test_set, const PredictOptions& options) {
  check_compatible(model, test_set, "test");
  Evaluation e;
  e.probabilities = predict_proba(model, test_set.images, options);
  e.metrics = metrics_from_probabilities(e.probabilities, test_set.labels);
  e.loss = cross_entropy(e.probabilities, data::one_hot(test_set.labels, test_set.n_classes())).item();
  return e;
}

TrainHistory fit(nn::Model& model, const data::LabeledImageSet& train_set, const data::LabeledImageSet& val_set,
                   const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  check_compatible(model, train_set, "training");
  check_compatible(model, val_set, "validation");
  if (config.dropout) set_dropout_rate(model, *config.dropout);

  const bool bayesian = model.is_bayesian();
  const std::size_t k = train_set.n_classes();
  const double n_train = static_cast<double>(train_set.size());
  const Tensor val_targets = data::one_hot(val_set.labels, k);
  const PredictOptions val_options{.mc_samples = config.mc_samples, .seed = derive_seed(config.seed, "validation")};

  Adam optimizer(model.parameters(), {.lr = config.learning_rate});
  std::optional<ReduceOnPlateau> scheduler;
  if (config.reduce_on_plateau) scheduler.emplace(config.learning_rate, config.plateau);
  EarlyStopping stopper(config.patience);

  TrainHistory history;
  nn::ModelState best_state, last_good = model.snapshot();
  history.best_val_loss = std::numeric_limits<double>::infinity();

  auto diverge = [&](const std::string& why) -> TrainingDiverged {
    model.restore(last_good);
    model.zero_grad();
    return TrainingDiverged(why, history);
  };

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    SeededRng shuffle(derive_seed(config.seed, "shuffle", epoch));
    SeededRng noise(derive_seed(config.seed, "train", epoch));
    const auto batches = make_batches(train_set.size(), config.batch_size, shuffle);

    EpochRecord rec{.epoch = epoch, .lr = optimizer.lr()};
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const data::LabeledImageSet batch = train_set.subset(batches[bi]);
      const Tensor targets = data::one_hot(batch.labels, k);
      const double b = static_cast<double>(batch.size());
      nn::ForwardContext ctx{.mode = nn::Mode::train, .rng = &noise};
      optimizer.zero_grad();
      const Tensor probs = model.forward(batch.images, ctx);
      Tensor loss;
      if (bayesian) {
        const double w = kl_batch_weight(config.kl_weighting, bi, batches.size(), config.kl_weight);
        loss = scale(bayes::elbo_loss(probs, targets, model.kl_divergence(&noise), w).loss, 1.0 / b);
      } else {
        loss = cross_entropy(probs, targets);
      }
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw diverge("non-finite training loss at epoch " + std::to_string(epoch) + ", batch " +
                      std::to_string(bi + 1));
      }
      loss.backward();
      try {
        optimizer.step();
      } catch (const DivergenceError& e) {
        throw diverge(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", batch " +
                      std::to_string(bi + 1));
      }
      loss_sum += value * b;
      const auto pred = argmax_rows(probs);
      for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
    }
    optimizer.zero_grad();
    rec.train_loss = loss_sum / n_train;
    rec.train_acc = static_cast<double>(correct) / n_train;

    const Tensor val_probs = predict_proba(model, val_set.images, val_options);
    rec.val_loss = cross_entropy(val_probs, val_targets).item();
    if (!std::isfinite(rec.val_loss)) throw diverge("non-finite validation loss at epoch " + std::to_string(epoch));
    const auto val_pred = argmax_rows(val_probs);
    std::size_t val_correct = 0;
    for (std::size_t i = 0; i < val_pred.size(); ++i) val_correct += val_pred[i] == val_set.labels[i];
    rec.val_acc = static_cast<double>(val_correct) / static_cast<double>(val_set.size());

    history.epochs.push_back(rec);
    last_good = model.snapshot();
    const bool stop = stopper.update(rec.val_loss);
    if (stopper.improved()) {
      best_state = last_good;
      history.best_epoch = epoch;
      history.best_val_loss = rec.val_loss;
    }
    if (on_epoch) on_epoch(rec);
    if (scheduler) optimizer.set_lr(scheduler->update(rec.val_loss));
    if (config.early_stopping && stop) {
      history.stopped_early = true;
      break;
    }
  }
  if (config.restore_best && history.best_epoch > 0) model.restore(best_state);
  return history;
}

}  // namespace adx::train
