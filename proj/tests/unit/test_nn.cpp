#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "adx/core/errors.hpp"
#include "adx/core/ops.hpp"
#include "adx/nn/functional.hpp"
#include "adx/nn/layers.hpp"
#include "adx/nn/model.hpp"
#include "support/gradcheck.hpp"

using namespace adx;
using namespace adx::nn;

namespace {

Tensor random_tensor(Shape shape, SeededRng& rng, bool requires_grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.normal();
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Weighted sum with fixed pseudo-random coefficients, so every output element
// contributes a distinct amount to the loss.
Tensor probe_loss(const Tensor& y) {
  SeededRng rng(99);
  std::vector<double> w(y.numel());
  for (auto& x : w) x = rng.normal();
  return sum(mul(y, Tensor(y.shape(), std::move(w))));
}

std::vector<double> grad_of(const std::function<Tensor(const Tensor&)>& f, double x) {
  Tensor t({1}, {x}, true);
  sum(f(t)).backward();
  return {t.grad().begin(), t.grad().end()};
}

}  // namespace

TEST(Relu, Examples) {
  Tensor y = relu(Tensor({2}, {-1.0, 3.0}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_EQ(y[1], 3.0);
  auto f = [](const Tensor& t) { return relu(t); };
  EXPECT_EQ(grad_of(f, -0.5)[0], 0.0);
  EXPECT_EQ(grad_of(f, 0.5)[0], 1.0);
}

TEST(LeakyRelu, Examples) {
  EXPECT_DOUBLE_EQ(leaky_relu(Tensor({1}, {-1.0}), 0.01)[0], -0.01);
  EXPECT_EQ(leaky_relu(Tensor({1}, {2.0}), 0.01)[0], 2.0);
  auto f = [](const Tensor& t) { return leaky_relu(t, 0.01); };
  EXPECT_DOUBLE_EQ(grad_of(f, -3.0)[0], 0.01);
  EXPECT_THROW(leaky_relu(Tensor({1}, {1.0}), 1.0), std::invalid_argument);
}

TEST(Softplus, Examples) {
  EXPECT_NEAR(softplus(Tensor({1}, {0.0}), 1.0)[0], std::log(2.0), 1e-15);
  for (double x : {-5.0, -0.3, 0.0, 1.7, 12.0}) {
    EXPECT_NEAR(softplus(Tensor({1}, {x}), 1.0)[0], std::log(1.0 + std::exp(x)), 1e-12);
  }
  EXPECT_NEAR(softplus(Tensor({1}, {50.0}), 1.0)[0], 50.0, 1e-9);
  EXPECT_THROW(softplus(Tensor({1}, {1.0}), 0.0), std::invalid_argument);
}

TEST(Softplus, PositiveAndMonotone) {
  for (double beta : {0.5, 1.0, 3.0}) {
    std::vector<double> xs;
    for (double x = -700.0 / beta; x <= 700.0; x += 0.37) xs.push_back(x);
    Tensor y = softplus(Tensor({xs.size()}, xs), beta);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      ASSERT_GT(y[i], 0.0) << "x=" << xs[i];
      if (i > 0) {
        ASSERT_GT(y[i], y[i - 1]) << "x=" << xs[i];
      }
    }
  }
}

TEST(Softplus, SteepnessGradient) {
  SeededRng rng(4);
  Tensor x = random_tensor({3, 5}, rng);
  for (double beta : {0.5, 2.0}) {
    auto r = check::check_gradients([&] { return probe_loss(softplus(x, beta)); }, {x});
    EXPECT_LT(r.max_rel_error, 1e-7);
  }
}

TEST(Softmax, Examples) {
  Tensor eq = softmax(Tensor({4}, {1.5, 1.5, 1.5, 1.5}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(eq[i], 0.25, 1e-15);

  Tensor a = softmax(Tensor({1, 4}, {0.1, -2.0, 3.0, 0.7}));
  Tensor b = softmax(Tensor({1, 4}, {100.1, 98.0, 103.0, 100.7}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(a[i], b[i], 1e-14);

  Tensor p = softmax(Tensor({4}, {std::log(1.0), std::log(2.0), std::log(3.0), std::log(4.0)}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(p[i], 0.1 * static_cast<double>(i + 1), 1e-15);
}

TEST(Softmax, ProbabilityVectorsForFiniteInputs) {
  SeededRng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const double spread = std::pow(10.0, rng.uniform() * 6.0 - 2.0);
    std::vector<double> v(7 * 5);
    for (auto& x : v) x = rng.normal() * spread;
    Tensor y = softmax(Tensor({7, 5}, v));
    for (std::size_t r = 0; r < 7; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < 5; ++j) {
        const double q = y[r * 5 + j];
        ASSERT_GE(q, 0.0);
        ASSERT_LE(q, 1.0);
        s += q;
      }
      ASSERT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Dropout, RateZeroAndEvalAreIdentity) {
  SeededRng rng(1);
  Tensor x = random_tensor({4, 6}, rng);
  Tensor a = dropout(x, 0.0, Mode::train, rng);
  Tensor b = dropout(x, 0.7, Mode::eval, rng);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    EXPECT_EQ(a[i], x[i]);
    EXPECT_EQ(b[i], x[i]);
  }
  EXPECT_THROW(dropout(x, 1.0, Mode::train, rng), std::invalid_argument);
}

TEST(Dropout, ZeroedFractionMatchesRate) {
  SeededRng rng(2024);
  Tensor x = Tensor::full({1000000}, 1.0);
  Tensor y = dropout(x, 0.3, Mode::train, rng);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) {
    if (y[i] == 0.0) {
      ++zeros;
    } else {
      ASSERT_NEAR(y[i], 1.0 / 0.7, 1e-15);
    }
  }
  EXPECT_NEAR(static_cast<double>(zeros) / 1e6, 0.3, 0.005);
}

TEST(Dropout, TrainExpectationIsIdentity) {
  SeededRng rng(8);
  std::vector<double> v(16);
  for (auto& x : v) x = 0.5 + rng.uniform();
  Tensor x({16}, v);
  std::vector<double> acc(16, 0.0);
  const int masks = 10000;
  for (int m = 0; m < masks; ++m) {
    Tensor y = dropout(x, 0.3, Mode::train, rng);
    for (std::size_t i = 0; i < 16; ++i) acc[i] += y[i];
  }
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(acc[i] / masks, v[i], 0.01 * v[i]) << "element " << i;
}

TEST(BatchNorm, TrainNormalisesPerChannel) {
  SeededRng rng(3);
  std::vector<double> v(8 * 3 * 3 * 4);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 5.0 * rng.normal() + static_cast<double>(i % 4) * 10.0;
  Tensor x({8, 3, 3, 4}, v);
  auto state = BatchNormState::create(4);
  Tensor y = batchnorm(x, state, Mode::train);
  const std::size_t m = 8 * 3 * 3;
  for (std::size_t c = 0; c < 4; ++c) {
    double mu = 0.0, var = 0.0;
    for (std::size_t i = 0; i < m; ++i) mu += y[i * 4 + c];
    mu /= m;
    for (std::size_t i = 0; i < m; ++i) var += (y[i * 4 + c] - mu) * (y[i * 4 + c] - mu);
    var /= m;
    EXPECT_NEAR(mu, 0.0, 1e-6);
    EXPECT_NEAR(var, 1.0, 1e-6);
  }
}

TEST(BatchNorm, ConstantChannelGivesZeros) {
  Tensor x = Tensor::full({5, 3}, 7.25);
  auto state = BatchNormState::create(3);
  Tensor y = batchnorm(x, state, Mode::train);
  for (std::size_t i = 0; i < y.numel(); ++i) {
    ASSERT_TRUE(std::isfinite(y[i]));
    EXPECT_EQ(y[i], 0.0);
  }
}

TEST(BatchNorm, EvalWithBatchStatisticsMatchesTrain) {
  SeededRng rng(5);
  Tensor x = random_tensor({6, 2, 2, 3}, rng, false);
  auto state = BatchNormState::create(3);
  auto g = state.gamma.mutable_values();
  auto b = state.beta.mutable_values();
  for (std::size_t c = 0; c < 3; ++c) {
    g[c] = 0.5 + c;
    b[c] = -1.0 + c;
  }
  Tensor train = batchnorm(x, state, Mode::train);

  // Two-pass batch statistics, written into the running averages.
  const std::size_t m = 6 * 2 * 2;
  auto rm = state.running_mean.mutable_values();
  auto rv = state.running_var.mutable_values();
  for (std::size_t c = 0; c < 3; ++c) {
    double mu = 0.0, var = 0.0;
    for (std::size_t i = 0; i < m; ++i) mu += x[i * 3 + c];
    mu /= m;
    for (std::size_t i = 0; i < m; ++i) var += (x[i * 3 + c] - mu) * (x[i * 3 + c] - mu);
    rm[c] = mu;
    rv[c] = var / m;
  }
  Tensor eval = batchnorm(x, state, Mode::eval);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(eval[i], train[i], 1e-6);
}

TEST(BatchNorm, RunningStatisticsUseMomentum) {
  Tensor x({4, 1}, {1.0, 2.0, 3.0, 6.0});
  auto state = BatchNormState::create(1, 1e-5, 0.1);
  batchnorm(x, state, Mode::train);
  // mean 3, unbiased variance (4+1+0+9)/3
  EXPECT_NEAR(state.running_mean[0], 0.9 * 0.0 + 0.1 * 3.0, 1e-15);
  EXPECT_NEAR(state.running_var[0], 0.9 * 1.0 + 0.1 * 14.0 / 3.0, 1e-15);
}

TEST(BatchNorm, SingleSampleTrainBatchIsError) {
  auto state = BatchNormState::create(2);
  EXPECT_THROW(batchnorm(Tensor::zeros({1, 4, 4, 2}), state, Mode::train), ShapeError);
  EXPECT_NO_THROW(batchnorm(Tensor::zeros({1, 4, 4, 2}), state, Mode::eval));
}

TEST(GradCheck, Activations) {
  SeededRng rng(21);
  Tensor x = random_tensor({4, 5}, rng);
  // Keep entries away from the kinks of relu/leaky_relu.
  for (auto& v : x.mutable_values())
    if (std::abs(v) < 0.05) {
      v += 0.1;
    }
  EXPECT_LT(check::check_gradients([&] { return probe_loss(relu(x)); }, {x}).max_rel_error, 1e-7);
  EXPECT_LT(check::check_gradients([&] { return probe_loss(leaky_relu(x, 0.2)); }, {x}).max_rel_error, 1e-7);
  EXPECT_LT(check::check_gradients([&] { return probe_loss(softmax(x)); }, {x}).max_rel_error, 1e-7);
  EXPECT_LT(check::check_gradients(
                [&] {
                  SeededRng mask_rng(5);
                  return probe_loss(dropout(x, 0.4, Mode::train, mask_rng));
                },
                {x})
                .max_rel_error,
            1e-7);
}

TEST(GradCheck, BatchNormTrainAndEval) {
  SeededRng rng(22);
  Tensor x = random_tensor({5, 2, 2, 3}, rng);
  auto state = BatchNormState::create(3);
  auto g = state.gamma.mutable_values();
  for (std::size_t c = 0; c < 3; ++c) g[c] = 0.7 + 0.4 * c;
  for (Mode mode : {Mode::train, Mode::eval}) {
    auto r = check::check_gradients([&] { return probe_loss(batchnorm(x, state, mode)); },
                                    {x, state.gamma, state.beta}, {"x", "gamma", "beta"});
    EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
  }
}

TEST(GradCheck, LayerStack) {
  SeededRng init(23);
  SequentialModel model("stack");
  LayerConfig conv{.kind = LayerKind::conv, .name = "conv", .in_channels = 2, .filters = 3, .kernel = 3,
                   .padding = Padding::same};
  model.add(make_layer(conv, init));
  model.add(make_layer({.kind = LayerKind::softplus, .name = "act", .beta = 2.0}, init));
  model.add(make_layer({.kind = LayerKind::batchnorm, .name = "bn", .in_channels = 3}, init));
  model.add(make_layer({.kind = LayerKind::avgpool, .name = "pool", .window = 2}, init));
  model.add(make_layer({.kind = LayerKind::flatten, .name = "flat"}, init));
  model.add(make_layer({.kind = LayerKind::dropout, .name = "drop", .rate = 0.25}, init));
  model.add(make_layer({.kind = LayerKind::dense, .name = "fc", .in_features = 12, .units = 4}, init));

  SeededRng data(24);
  Tensor x = random_tensor({3, 4, 4, 2}, data, false);
  std::vector<Tensor> params;
  std::vector<std::string> names;
  for (auto& p : model.parameters()) {
    params.push_back(p.tensor);
    names.push_back(p.name);
  }
  auto loss = [&] {
    SeededRng mask_rng(6);
    ForwardContext ctx{.mode = Mode::train, .rng = &mask_rng};
    return probe_loss(model.forward(x, ctx));
  };
  auto r = check::check_gradients(loss, params, names);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst;
}

TEST(LayerConfig, ValidationRejectsBadValues) {
  EXPECT_THROW((LayerConfig{.kind = LayerKind::dropout, .name = "d", .rate = 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((LayerConfig{.kind = LayerKind::dropout, .name = "d", .rate = -0.1}.validate()), std::invalid_argument);
  EXPECT_THROW((LayerConfig{.kind = LayerKind::softplus, .name = "s", .beta = 0.0}.validate()), std::invalid_argument);
  EXPECT_THROW((LayerConfig{.kind = LayerKind::leaky_relu, .name = "l", .slope = 0.0}.validate()),
               std::invalid_argument);
  EXPECT_THROW((LayerConfig{.kind = LayerKind::conv, .name = "c", .in_channels = 1}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((LayerConfig{.kind = LayerKind::dropout, .name = "d", .rate = 0.0}.validate()));
  for (auto k : {LayerKind::conv, LayerKind::bayes_dense, LayerKind::leaky_relu, LayerKind::flatten})
    EXPECT_EQ(layer_kind_from_string(to_string(k)), k);
  EXPECT_THROW(layer_kind_from_string("lstm"), std::invalid_argument);
}

TEST(Model, SnapshotRestoreAndCapture) {
  SeededRng init(30);
  SequentialModel model("tiny");
  model.add(make_layer({.kind = LayerKind::conv, .name = "c1", .in_channels = 1, .filters = 2, .kernel = 3}, init));
  model.add(make_layer({.kind = LayerKind::batchnorm, .name = "bn", .in_channels = 2}, init));
  model.add(make_layer({.kind = LayerKind::flatten, .name = "flat"}, init));
  model.add(make_layer({.kind = LayerKind::dense, .name = "fc", .in_features = 8, .units = 3}, init));
  EXPECT_THROW(model.add(make_layer({.kind = LayerKind::relu, .name = "fc"}, init)), std::invalid_argument);

  EXPECT_EQ(model.parameter_count(), 3u * 3u * 2u + 2u + 2u + 2u + 8u * 3u + 3u);
  EXPECT_EQ(model.conv_layer_names(), std::vector<std::string>{"c1"});
  EXPECT_FALSE(model.is_bayesian());
  EXPECT_EQ(model.kl_divergence().item(), 0.0);

  SeededRng data(31);
  Tensor x = random_tensor({2, 4, 4, 1}, data, false);
  ForwardContext eval;
  Tensor before = model.forward(x, eval);
  auto saved = model.snapshot();
  EXPECT_EQ(saved.size(), 8u);

  ForwardContext train{.mode = Mode::train};
  model.forward(x, train);  // moves running statistics
  for (auto& p : model.parameters())
    for (auto& v : p.tensor.mutable_values()) v += 0.1;
  model.restore(saved);
  Tensor after = model.forward(x, eval);
  for (std::size_t i = 0; i < before.numel(); ++i) EXPECT_EQ(before[i], after[i]);

  std::map<std::string, Tensor> captured{{"c1", Tensor()}};
  ForwardContext cap{.capture = &captured};
  model.forward(x, cap);
  ASSERT_TRUE(captured["c1"].defined());
  EXPECT_EQ(captured["c1"].shape(), (Shape{2, 2, 2, 2}));
  EXPECT_EQ(captured.size(), 1u);

  saved.erase("fc.bias");
  EXPECT_THROW(model.restore(saved), std::invalid_argument);
}
