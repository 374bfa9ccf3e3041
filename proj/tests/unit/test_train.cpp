#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "adx/bayes/functional.hpp"
#include "adx/core/errors.hpp"
#include "adx/core/ops.hpp"
#include "adx/models/zoo.hpp"
#include "adx/train/metrics.hpp"
#include "adx/train/optim.hpp"
#include "adx/train/trainer.hpp"
#include "support/gradcheck.hpp"

using namespace adx;
using namespace adx::train;

namespace {

Tensor probs_from(std::vector<double> v, std::size_t k) {
  const std::size_t n = v.size() / k;
  return Tensor({n, k}, std::move(v), true);
}

models::ModelSpec small_spec(models::Architecture arch, std::size_t size) {
  models::ModelSpec s;
  s.architecture = arch;
  s.height = s.width = size;
  s.padding = Padding::same;
  s.filters = arch == models::Architecture::addnet ? std::vector<std::size_t>{4, 4, 8, 8}
              : arch == models::Architecture::bayescnn ? std::vector<std::size_t>{4, 8}
                                                       : std::vector<std::size_t>{};
  s.dense_units = 16;
  s.unet_depth = 2;
  s.unet_base_filters = 4;
  return s;
}

data::Split small_split(std::uint64_t seed) {
  auto ds = data::synth_dataset(12, 16, 16, data::PatternKind::quadrant_blob, 0.05, seed);
  return data::stratified_split(ds, {.fractions = {0.5, 0.25, 0.25}, .seed = seed});
}

std::vector<double> parameter_values(nn::Model& m) {
  std::vector<double> out;
  for (auto& p : m.parameters()) out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

}  // namespace

// ---------------------------------------------------------------- Adam

TEST(Adam, ZeroGradientFromFreshStateLeavesParameterUnchanged) {
  std::vector<double> p{1.0, -2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  AdamState st;
  adam_step(p, g, st, {.lr = 0.1});
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
  EXPECT_EQ(st.step, 1u);
  EXPECT_EQ(st.m, (std::vector<double>(3, 0.0)));
}

TEST(Adam, ZeroGradientDecaysMoments) {
  std::vector<double> p{1.0};
  AdamState st;
  const AdamOptions o{.lr = 0.1};
  adam_step(p, std::vector<double>{2.0}, st, o);
  const double m1 = st.m[0], v1 = st.v[0];
  adam_step(p, std::vector<double>{0.0}, st, o);
  EXPECT_DOUBLE_EQ(st.m[0], o.beta1 * m1);
  EXPECT_DOUBLE_EQ(st.v[0], o.beta2 * v1);
}

TEST(Adam, FirstStepIsLrTimesSign) {
  std::vector<double> p{0.0, 0.0};
  AdamState st;
  adam_step(p, std::vector<double>{5.0, -0.3}, st, {.lr = 0.01});
  EXPECT_NEAR(p[0], -0.01, 1e-9);
  EXPECT_NEAR(p[1], 0.01, 1e-9);
}

TEST(Adam, ConvergesOnScalarQuadratic) {
  Tensor x({1}, {0.0}, true);
  Adam opt({{"x", x}}, {.lr = 0.1});
  std::size_t steps = 0;
  while (steps < 500 && std::abs(x[0] - 3.0) >= 1e-3) {
    opt.zero_grad();
    square(add_scalar(x, -3.0)).backward();
    opt.step();
    ++steps;
  }
  EXPECT_LT(std::abs(x[0] - 3.0), 1e-3);
  EXPECT_LE(steps, 500u);
}

TEST(Adam, NonFiniteGradientNamesParameterAndChangesNothing) {
  Tensor a({2}, {1.0, 2.0}, true), b({1}, {5.0}, true);
  Adam opt({{"layer.a", a}, {"layer.b", b}}, {.lr = 0.1});
  opt.zero_grad();
  add(sum(a), scale(b, std::numeric_limits<double>::infinity())).backward();
  try {
    opt.step();
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("layer.b"), std::string::npos);
  }
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(b[0], 5.0);
  EXPECT_EQ(opt.steps(), 0u);
}

TEST(Adam, ParameterWithoutGradientIsTreatedAsZero) {
  Tensor used({1}, {1.0}, true), unused({1}, {4.0}, true);
  Adam opt({{"used", used}, {"unused", unused}}, {.lr = 0.1});
  opt.zero_grad();
  square(used).backward();
  opt.step();
  EXPECT_EQ(unused[0], 4.0);
  EXPECT_LT(used[0], 1.0);
}

// ---------------------------------------------------------------- losses

TEST(CrossEntropy, Examples) {
  const Tensor t({2, 4}, {1, 0, 0, 0, 0, 0, 1, 0});
  EXPECT_EQ(cross_entropy(Tensor({2, 4}, {1, 0, 0, 0, 0, 0, 1, 0}), t).item(), 0.0);
  EXPECT_NEAR(cross_entropy(Tensor::full({2, 4}, 0.25), t).item(), std::log(4.0), 1e-15);
  EXPECT_NEAR(std::log(4.0), 1.3863, 1e-4);
  EXPECT_THROW(cross_entropy(Tensor::full({2, 3}, 0.25), t), ShapeError);
  // A zero probability on the target is clamped, not infinite.
  EXPECT_NEAR(cross_entropy(Tensor({1, 2}, {0.0, 1.0}), Tensor({1, 2}, {1.0, 0.0})).item(), -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, MatchesElboNllWithZeroKlWeight) {
  SeededRng rng(3);
  std::vector<double> v(6 * 4);
  std::vector<std::size_t> labels(6);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += v[i * 4 + j] = 0.05 + rng.uniform();
    for (std::size_t j = 0; j < 4; ++j) v[i * 4 + j] /= s;
    labels[i] = rng.uniform_index(4);
  }
  const Tensor p({6, 4}, v);
  Tensor t = Tensor::zeros({6, 4});
  for (std::size_t i = 0; i < 6; ++i) t.mutable_values()[i * 4 + labels[i]] = 1.0;
  const auto elbo = bayes::elbo_loss(p, t, Tensor::scalar(123.0), 0.0);
  EXPECT_NEAR(cross_entropy(p, t).item(), elbo.nll / 6.0, 1e-14);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Tensor p = probs_from({0.2, 0.5, 0.3, 0.6, 0.1, 0.3}, 3);
  const Tensor t({2, 3}, {0, 1, 0, 0, 0, 1});
  const auto r = check::check_gradients([&] { return cross_entropy(p, t); }, {p}, {"p"});
  EXPECT_LE(r.max_rel_error, 1e-7);
}

// ---------------------------------------------------------------- early stopping / plateau

TEST(EarlyStopping, HandTraces) {
  auto d = early_stopping({5, 4, 3, 3.1, 3.2, 3.3}, 3);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.stop_epoch, 6u);
  EXPECT_EQ(d.best_epoch, 3u);

  d = early_stopping({2, 3}, 1);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.stop_epoch, 2u);
  EXPECT_EQ(d.best_epoch, 1u);

  std::vector<double> falling(100);
  for (std::size_t i = 0; i < falling.size(); ++i) falling[i] = 10.0 - 0.01 * static_cast<double>(i);
  d = early_stopping(falling, 1);
  EXPECT_FALSE(d.stop);
  EXPECT_EQ(d.stop_epoch, 100u);

  // Equal is not an improvement.
  d = early_stopping({1.0, 1.0}, 1);
  EXPECT_TRUE(d.stop);
  EXPECT_EQ(d.best_epoch, 1u);
  EXPECT_THROW(early_stopping({}, 2), std::invalid_argument);
}

TEST(EarlyStopping, RandomTracesHaltExactlyAtBestPlusPatience) {
  SeededRng rng(17);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t len = 1 + rng.uniform_index(40), patience = 1 + rng.uniform_index(6);
    std::vector<double> trace(len);
    for (auto& v : trace) v = std::round(rng.uniform() * 20.0) / 4.0;  // coarse values force ties
    // Oracle: first epoch e at which the last strict minimum of trace[0..e)
    // is `patience` epochs old.
    std::size_t want_stop = len, want_best = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t e = 1; e <= len; ++e) {
      if (trace[e - 1] < best) {
        best = trace[e - 1];
        want_best = e;
      }
      if (e - want_best >= patience) {
        want_stop = e;
        break;
      }
    }
    const auto d = early_stopping(trace, patience);
    ASSERT_EQ(d.best_epoch, want_best);
    ASSERT_EQ(d.stop_epoch, want_stop);
    ASSERT_EQ(d.stop, want_stop < len || (want_stop == len && len - want_best >= patience));
    ASSERT_LE(d.stop_epoch, d.best_epoch + patience);
  }
}

TEST(ReduceOnPlateau, Examples) {
  const PlateauOptions o{.factor = 0.1, .patience = 2, .min_lr = 1e-6};
  EXPECT_EQ(reduce_on_plateau(1e-3, {5, 4, 3, 2}, o), 1e-3);
  EXPECT_DOUBLE_EQ(reduce_on_plateau(1e-3, {5, 6, 7}, o), 1e-4);
  EXPECT_THROW(reduce_on_plateau(1e-3, {1}, {.factor = 1.0}), std::invalid_argument);
}

TEST(ReduceOnPlateau, NeverBelowFloor) {
  SeededRng rng(2);
  const PlateauOptions o{.factor = 0.3, .patience = 1, .min_lr = 1e-5};
  ReduceOnPlateau r(1e-2, o);
  for (int i = 0; i < 500; ++i) EXPECT_GE(r.update(rng.uniform()), 1e-5);
  EXPECT_EQ(r.lr(), 1e-5);
  EXPECT_EQ(reduce_on_plateau(0.0, {3, 4, 5, 6}, o), 0.0);
}

// ---------------------------------------------------------------- metrics

TEST(Metrics, PerfectClassifier) {
  const Tensor p({4, 2}, {1, 0, 0, 1, 1, 0, 0, 1});
  const auto m = metrics_from_probabilities(p, {0, 1, 0, 1});
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.macro_precision, 1.0);
  EXPECT_EQ(m.macro_recall, 1.0);
  EXPECT_EQ(m.macro_f1, 1.0);
  EXPECT_EQ(m.auc_macro, 1.0);
}

TEST(Metrics, HandComputedConfusion) {
  // confusion [[5,5],[0,10]]
  std::vector<std::size_t> labels, pred;
  for (int i = 0; i < 5; ++i) labels.push_back(0), pred.push_back(0);
  for (int i = 0; i < 5; ++i) labels.push_back(0), pred.push_back(1);
  for (int i = 0; i < 10; ++i) labels.push_back(1), pred.push_back(1);
  const auto m = metrics_from_predictions(labels, pred, 2);
  EXPECT_EQ(m.confusion, (ConfusionMatrix{{5, 5}, {0, 10}}));
  EXPECT_DOUBLE_EQ(m.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(m.recall[0], 0.5);
  EXPECT_DOUBLE_EQ(m.precision[0], 1.0);
  EXPECT_DOUBLE_EQ(m.precision[1], 10.0 / 15.0);
  EXPECT_DOUBLE_EQ(m.recall[1], 1.0);
  EXPECT_THROW(metrics_from_predictions({}, {}, 2), DataError);
  EXPECT_THROW(metrics_from_predictions({0}, {2}, 2), DataError);
}

TEST(Metrics, MatchBruteForceOracleExactly) {
  SeededRng rng(99);
  const std::size_t n = 10000, k = 4;
  std::vector<std::size_t> labels(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = rng.uniform_index(k);
    pred[i] = rng.uniform() < 0.6 ? labels[i] : rng.uniform_index(k);
  }
  const auto m = metrics_from_predictions(labels, pred, k);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += labels[i] == pred[i];
  EXPECT_EQ(m.accuracy, static_cast<double>(hits) / static_cast<double>(n));
  double sp = 0, sr = 0, sf = 0;
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0, row = 0;
    for (std::size_t i = 0; i < n; ++i) {
      tp += labels[i] == c && pred[i] == c;
      fp += labels[i] != c && pred[i] == c;
      fn += labels[i] == c && pred[i] != c;
      row += labels[i] == c;
    }
    std::size_t conf_row = 0;
    for (auto v : m.confusion[c]) conf_row += v;
    EXPECT_EQ(conf_row, row);
    const double p = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double r = static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double f = 2.0 * p * r / (p + r);
    EXPECT_EQ(m.precision[c], p);
    EXPECT_EQ(m.recall[c], r);
    EXPECT_EQ(m.f1[c], f);
    sp += p;
    sr += r;
    sf += f;
  }
  EXPECT_EQ(m.macro_precision, sp / k);
  EXPECT_EQ(m.macro_recall, sr / k);
  EXPECT_EQ(m.macro_f1, sf / k);
}

TEST(Auc, PairwiseOracleAndRandomScores) {
  SeededRng rng(5);
  std::vector<double> s(300);
  std::vector<bool> pos(300);
  for (std::size_t i = 0; i < s.size(); ++i) {
    pos[i] = rng.uniform() < 0.4;
    s[i] = std::round((rng.uniform() + (pos[i] ? 0.3 : 0.0)) * 10.0) / 10.0;  // many ties
  }
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (pos[i] && !pos[j]) {
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        pairs += 1.0;
      }
  EXPECT_NEAR(auc_rank(s, pos), wins / pairs, 1e-12);

  std::vector<double> r(1000);
  std::vector<bool> rp(1000);
  for (std::size_t i = 0; i < r.size(); ++i) {
    r[i] = rng.uniform();
    rp[i] = rng.uniform() < 0.5;
  }
  EXPECT_NEAR(auc_rank(r, rp), 0.5, 0.05);
  EXPECT_EQ(auc_rank({0.3, 0.3, 0.3}, {true, false, true}), 0.5);
  EXPECT_TRUE(std::isnan(auc_rank({0.1, 0.2}, {true, true})));
}

TEST(Metrics, ReportCsvLayout) {
  const auto m = metrics_from_probabilities(Tensor({3, 3}, {0.8, 0.1, 0.1, 0.2, 0.7, 0.1, 0.3, 0.3, 0.4}), {0, 1, 1});
  std::ostringstream os;
  write_report_csv(os, {{"addnet", true, m}}, {"a", "b", "c"});
  const std::string csv = os.str();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "model,resampled,accuracy,recall,precision,f1,auc_macro,auc_a,auc_b,auc_c");
  EXPECT_NE(csv.find("addnet,true,0.666667,"), std::string::npos);
  EXPECT_NE(csv.find(",nan"), std::string::npos);  // class c never occurs
}

// ---------------------------------------------------------------- loop

TEST(Batches, ShuffledCoverAndMergeTrailingSingleton) {
  SeededRng rng(1);
  auto b = make_batches(33, 16, rng);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[0].size(), 16u);
  EXPECT_EQ(b[1].size(), 17u);
  std::vector<std::size_t> all;
  for (auto& x : b) all.insert(all.end(), x.begin(), x.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  EXPECT_EQ(make_batches(34, 16, rng).size(), 3u);
}

TEST(KlWeight, SchemesSumToOneOverAnEpoch) {
  for (auto mode : {KlWeighting::uniform, KlWeighting::blundell}) {
    double s = 0.0;
    for (std::size_t i = 0; i < 30; ++i) s += kl_batch_weight(mode, i, 30, 0.0);
    EXPECT_NEAR(s, 1.0, 1e-12) << to_string(mode);
  }
  EXPECT_EQ(kl_batch_weight(KlWeighting::constant, 3, 5, 0.25), 0.25);
  EXPECT_NEAR(kl_batch_weight(KlWeighting::blundell, 0, 2, 0.0), 2.0 / 3.0, 1e-15);
}

TEST(TrainConfig, ValidationAndJson) {
  TrainConfig c;
  c.dropout = 0.2;
  c.reduce_on_plateau = true;
  const auto j = to_json(c);
  EXPECT_EQ(to_json(train_config_from_json(j)), j);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.learning_rate = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Train, ZeroLearningRateKeepsWeights) {
  const auto split = small_split(1);
  auto m = models::build_model(small_spec(models::Architecture::addnet, 16), 3);
  const auto before = parameter_values(*m);
  fit(*m, split.train, split.val, {.learning_rate = 0.0, .batch_size = 4, .max_epochs = 3, .seed = 1});
  EXPECT_EQ(parameter_values(*m), before);
}

TEST(Train, SameSeedGivesIdenticalHistories) {
  const auto split = small_split(2);
  auto run = [&] {
    auto m = models::build_model(small_spec(models::Architecture::bayescnn, 16), 4);
    std::ostringstream os;
    fit(*m, split.train, split.val, {.learning_rate = 1e-2, .batch_size = 5, .max_epochs = 3, .mc_samples = 2, .seed = 7})
        .write_csv(os);
    return os.str();
  };
  const std::string a = run();
  EXPECT_EQ(a, run());
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 4);
}

TEST(Train, EarlyStoppingRestoresBestWeightsExactly) {
  const auto split = small_split(3);
  auto m = models::build_model(small_spec(models::Architecture::addnet, 16), 5);
  // A large step size makes validation loss bounce so the stop triggers.
  const TrainConfig cfg{.learning_rate = 0.05, .batch_size = 4, .max_epochs = 40, .patience = 2, .seed = 3};
  const auto h = fit(*m, split.train, split.val, cfg);
  ASSERT_GE(h.best_epoch, 1u);
  EXPECT_LE(h.epochs.size(), h.best_epoch + cfg.patience);
  if (h.stopped_early) {
    EXPECT_EQ(h.epochs.size(), h.best_epoch + cfg.patience);
  }
  EXPECT_EQ(h.epochs[h.best_epoch - 1].val_loss, h.best_val_loss);
  const Tensor probs = predict_proba(*m, split.val.images, {.mc_samples = cfg.mc_samples,
                                                            .seed = derive_seed(cfg.seed, "validation")});
  EXPECT_EQ(cross_entropy(probs, data::one_hot(split.val.labels, 4)).item(), h.best_val_loss);
}

TEST(Train, DivergenceRestoresLastGoodState) {
  const auto split = small_split(4);
  auto m = models::build_model(small_spec(models::Architecture::addnet, 16), 6);
  const auto before = m->snapshot();
  try {
    fit(*m, split.train, split.val, {.learning_rate = 1e300, .batch_size = 4, .max_epochs = 5, .seed = 1});
    FAIL() << "expected TrainingDiverged";
  } catch (const TrainingDiverged& e) {
    EXPECT_TRUE(e.history().epochs.empty());
  }
  EXPECT_EQ(m->snapshot(), before);
}

TEST(Train, ClassMismatchAndEmptySetsAreRejected) {
  const auto split = small_split(5);
  auto spec = small_spec(models::Architecture::addnet, 16);
  spec.n_classes = 3;
  auto m = models::build_model(spec, 1);
  EXPECT_THROW(fit(*m, split.train, split.val, {.max_epochs = 1}), DataError);
  EXPECT_THROW(evaluate(*m, split.test), DataError);
  auto m4 = models::build_model(small_spec(models::Architecture::addnet, 16), 1);
  EXPECT_THROW(evaluate(*m4, split.test.subset({})), DataError);
}

class LossDescent : public ::testing::TestWithParam<models::Architecture> {};

TEST_P(LossDescent, FixedBatchLossFallsOverTenSteps) {
  const auto ds = data::synth_dataset(4, 32, 32, data::PatternKind::quadrant_blob, 0.05, 8);
  auto spec = small_spec(GetParam(), 32);
  spec.filters.clear();
  auto m = models::build_model(spec, 9);
  Adam opt(m->parameters(), {.lr = 1e-3});
  const Tensor targets = data::one_hot(ds.labels, 4);
  auto loss_at = [&] {
    SeededRng noise(1);
    nn::ForwardContext ctx{.mode = nn::Mode::train, .rng = &noise};
    Tensor l = cross_entropy(m->forward(ds.images, ctx), targets);
    if (m->is_bayesian()) l = add(l, scale(m->kl_divergence(), 1.0 / 1000.0));
    return l;
  };
  std::vector<double> losses;
  for (int step = 0; step <= 10; ++step) {
    opt.zero_grad();
    Tensor l = loss_at();
    losses.push_back(l.item());
    if (step == 10) break;
    l.backward();
    opt.step();
  }
  for (std::size_t i = 1; i < losses.size(); ++i) EXPECT_LT(losses[i], losses[i - 1]) << "step " << i;
}

INSTANTIATE_TEST_SUITE_P(Models, LossDescent,
                         ::testing::Values(models::Architecture::addnet, models::Architecture::bayescnn,
                                           models::Architecture::unet_classifier),
                         [](const auto& info) { return models::to_string(info.param); });
