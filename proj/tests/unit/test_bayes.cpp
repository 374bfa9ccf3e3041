#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "adx/bayes/functional.hpp"
#include "adx/bayes/layers.hpp"
#include "adx/core/errors.hpp"
#include "adx/nn/functional.hpp"
#include "support/gradcheck.hpp"

using namespace adx;
using namespace adx::bayes;

namespace {

// Inverse of softplus, used to place sigma exactly.
double rho_for(double sigma) { return std::log(std::expm1(sigma)); }

GaussianPosterior posterior(Shape shape, std::vector<double> mu, std::vector<double> sigma) {
  std::vector<double> rho(sigma.size());
  for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = rho_for(sigma[i]);
  return {Tensor(shape, std::move(mu), true), Tensor(shape, std::move(rho), true)};
}

// mu in [0.5, 1.5], sigma in [0.05, 0.15]: positive means with small spread so
// relative tolerances on the mean are meaningful.
GaussianPosterior positive_posterior(Shape shape, SeededRng& rng) {
  const std::size_t n = shape_numel(shape);
  std::vector<double> mu(n), sigma(n);
  for (std::size_t i = 0; i < n; ++i) {
    mu[i] = 0.5 + rng.uniform();
    sigma[i] = 0.05 + 0.1 * rng.uniform();
  }
  return posterior(std::move(shape), std::move(mu), std::move(sigma));
}

std::vector<double> plain_sigma(const GaussianPosterior& p) {
  std::vector<double> s(p.mu.numel());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::log1p(std::exp(p.rho[i]));
  return s;
}

struct RunningMoments {
  std::vector<double> sum, sum_sq;
  std::size_t n = 0;
  explicit RunningMoments(std::size_t k) : sum(k, 0.0), sum_sq(k, 0.0) {}
  void add(std::size_t i, double v) {
    sum[i] += v;
    sum_sq[i] += v * v;
  }
  double mean(std::size_t i) const { return sum[i] / static_cast<double>(n); }
  double var(std::size_t i) const {
    const double m = mean(i);
    return (sum_sq[i] - static_cast<double>(n) * m * m) / static_cast<double>(n - 1);
  }
};

Tensor probe_loss(const Tensor& y) {
  SeededRng rng(77);
  std::vector<double> w(y.numel());
  for (auto& x : w) x = rng.normal();
  return sum(mul(y, Tensor(y.shape(), std::move(w))));
}

Tensor tile_rows(const Tensor& a, std::size_t copies) {
  Shape s = a.shape();
  s.insert(s.begin(), copies);
  std::vector<double> v;
  v.reserve(copies * a.numel());
  for (std::size_t c = 0; c < copies; ++c) v.insert(v.end(), a.values().begin(), a.values().end());
  return Tensor(std::move(s), std::move(v));
}

}  // namespace

TEST(SampleWeights, Examples) {
  auto p = posterior({3}, {0.4, -1.0, 2.0}, {0.1, 0.2, 0.3});
  Tensor w0 = sample_weights(p, Tensor::zeros({3}));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(w0[i], p.mu[i]);

  auto unit = posterior({1}, {0.0}, {1.0});
  EXPECT_NEAR(sample_weights(unit, Tensor({1}, {2.0}))[0], 2.0, 1e-12);
}

TEST(SampleWeights, EmpiricalSpreadMatchesSigma) {
  SeededRng rng(1);
  auto p = posterior({1}, {0.7}, {0.3});
  RunningMoments m(1);
  for (int i = 0; i < 100000; ++i) {
    m.add(0, sample_weights(p, rng)[0]);
    ++m.n;
  }
  EXPECT_NEAR(std::sqrt(m.var(0)), 0.3, 0.003);
}

TEST(Posterior, SigmaPositiveAndAlphaDerived) {
  SeededRng rng(2);
  auto p = GaussianPosterior::create({4, 3}, 4, rng);
  Tensor s = p.sigma();
  for (std::size_t i = 0; i < s.numel(); ++i) {
    EXPECT_NEAR(s[i], std::log1p(std::exp(-3.0)), 1e-15);
    EXPECT_LE(std::abs(p.mu[i]), 0.5);
  }
  auto alpha = p.alpha();
  for (std::size_t i = 0; i < alpha.size(); ++i) EXPECT_NEAR(alpha[i], s[i] * s[i] / (p.mu[i] * p.mu[i]), 1e-12);
  auto zero_mu = posterior({1}, {0.0}, {0.5});
  EXPECT_TRUE(std::isinf(zero_mu.alpha()[0]));
}

TEST(LrtDense, OneHotSelectsRow) {
  SeededRng rng(3);
  auto p = positive_posterior({4, 3}, rng);
  auto sig = plain_sigma(p);
  Moments m = lrt_dense_moments(Tensor({1, 4}, {0.0, 0.0, 1.0, 0.0}), p);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_NEAR(m.mean[j], p.mu[2 * 3 + j], 1e-15);
    EXPECT_NEAR(m.variance[j], sig[2 * 3 + j] * sig[2 * 3 + j], 1e-15);
  }
}

TEST(LrtDense, ScalarExample) {
  auto p = posterior({1, 1}, {3.0}, {0.5});
  Moments m = lrt_dense_moments(Tensor({1, 1}, {2.0}), p);
  EXPECT_NEAR(m.mean[0], 6.0, 1e-12);
  EXPECT_NEAR(m.variance[0], 1.0, 1e-12);
}

TEST(LrtDense, MomentsMatchWeightSampling) {
  SeededRng init(4);
  const std::size_t n_in = 4, n_out = 3, trials = 100000;
  auto p = positive_posterior({n_in, n_out}, init);
  auto sig = plain_sigma(p);
  std::vector<double> a(n_in);
  for (auto& x : a) x = 0.5 + init.uniform();

  // Local reparameterisation: one call, fresh noise per activation.
  SeededRng lrt_rng(5);
  Tensor out = lrt_dense(tile_rows(Tensor({n_in}, a), trials), p, lrt_rng);
  RunningMoments lrt(n_out);
  lrt.n = trials;
  for (std::size_t t = 0; t < trials; ++t)
    for (std::size_t j = 0; j < n_out; ++j) lrt.add(j, out[t * n_out + j]);

  // Oracle: draw every weight, then the plain affine map.
  SeededRng w_rng(6);
  RunningMoments ref(n_out);
  ref.n = trials;
  std::vector<double> w(n_in * n_out);
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = p.mu[i] + sig[i] * w_rng.normal();
    for (std::size_t j = 0; j < n_out; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n_in; ++i) acc += a[i] * w[i * n_out + j];
      ref.add(j, acc);
    }
  }
  for (std::size_t j = 0; j < n_out; ++j) {
    EXPECT_NEAR(lrt.mean(j), ref.mean(j), 0.01 * std::abs(ref.mean(j))) << "unit " << j;
    EXPECT_NEAR(lrt.var(j), ref.var(j), 0.02 * ref.var(j)) << "unit " << j;
  }
}

TEST(LrtConv, ZeroVarianceLimitIsDeterministicConv) {
  SeededRng rng(7);
  auto p = positive_posterior({3, 3, 2, 2}, rng);
  for (auto& r : p.rho.mutable_values()) r = -1000.0;
  std::vector<double> x(2 * 5 * 5 * 2);
  for (auto& v : x) v = rng.normal();
  Tensor a({2, 5, 5, 2}, x);
  Tensor y = lrt_conv(a, p, rng);
  Tensor ref = conv2d(a, p.mu);
  ASSERT_EQ(y.shape(), ref.shape());
  for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y[i], ref[i]);
}

TEST(LrtConv, OneByOneReducesToDense) {
  auto pc = posterior({1, 1, 1, 1}, {3.0}, {0.5});
  auto pd = posterior({1, 1}, {3.0}, {0.5});
  SeededRng r1(8), r2(8);
  Tensor yc = lrt_conv(Tensor({1, 1, 1}, {2.0}), pc, r1);
  Tensor yd = lrt_dense(Tensor({1, 1}, {2.0}), pd, r2);
  EXPECT_EQ(yc.numel(), 1u);
  EXPECT_EQ(yc[0], yd[0]);
  Moments m = lrt_conv_moments(Tensor({1, 1, 1}, {2.0}), pc);
  EXPECT_NEAR(m.mean[0], 6.0, 1e-12);
  EXPECT_NEAR(m.variance[0], 1.0, 1e-12);
}

TEST(LrtConv, MomentsMatchWeightSampling) {
  SeededRng init(9);
  const std::size_t h = 3, w = 3, c = 2, k = 2, f = 2, trials = 100000;
  auto p = positive_posterior({k, k, c, f}, init);
  auto sig = plain_sigma(p);
  std::vector<double> a(h * w * c);
  for (auto& x : a) x = 0.5 + init.uniform();
  const std::size_t ho = h - k + 1, wo = w - k + 1, n_out = ho * wo * f;

  SeededRng lrt_rng(10);
  Tensor out = lrt_conv(tile_rows(Tensor({h, w, c}, a), trials), p, lrt_rng);
  RunningMoments lrt(n_out);
  lrt.n = trials;
  for (std::size_t t = 0; t < trials; ++t)
    for (std::size_t j = 0; j < n_out; ++j) lrt.add(j, out[t * n_out + j]);

  SeededRng w_rng(11);
  RunningMoments ref(n_out);
  ref.n = trials;
  std::vector<double> kw(k * k * c * f);
  for (std::size_t t = 0; t < trials; ++t) {
    for (std::size_t i = 0; i < kw.size(); ++i) kw[i] = p.mu[i] + sig[i] * w_rng.normal();
    for (std::size_t i = 0; i < ho; ++i)
      for (std::size_t j = 0; j < wo; ++j)
        for (std::size_t o = 0; o < f; ++o) {
          double acc = 0.0;
          for (std::size_t m = 0; m < k; ++m)
            for (std::size_t n = 0; n < k; ++n)
              for (std::size_t ch = 0; ch < c; ++ch)
                acc += a[((i + m) * w + (j + n)) * c + ch] * kw[((m * k + n) * c + ch) * f + o];
          ref.add((i * wo + j) * f + o, acc);
        }
  }
  for (std::size_t j = 0; j < n_out; ++j) {
    EXPECT_NEAR(lrt.mean(j), ref.mean(j), 0.01 * std::abs(ref.mean(j))) << "activation " << j;
    EXPECT_NEAR(lrt.var(j), ref.var(j), 0.02 * ref.var(j)) << "activation " << j;
  }
}

TEST(KlClosed, Examples) {
  EXPECT_NEAR(kl_gaussian_closed(posterior({1}, {0.0}, {1.0})).item(), 0.0, 1e-12);
  EXPECT_NEAR(kl_gaussian_closed(posterior({1}, {1.0}, {1.0})).item(), 0.5, 1e-12);
}

TEST(KlClosed, NonNegativeAndZeroOnlyAtPrior) {
  SeededRng rng(12);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> mu(6), sigma(6);
    for (auto& m : mu) m = 3.0 * rng.normal();
    for (auto& s : sigma) s = std::exp(4.0 * rng.uniform() - 2.0);
    const double kl = kl_gaussian_closed(posterior({6}, mu, sigma)).item();
    double oracle = 0.0;
    for (std::size_t i = 0; i < 6; ++i)
      oracle += -std::log(sigma[i]) + 0.5 * (sigma[i] * sigma[i] + mu[i] * mu[i]) - 0.5;
    ASSERT_GE(kl, 0.0);
    ASSERT_NEAR(kl, oracle, 1e-9 * std::max(1.0, oracle));
    ASSERT_GT(kl, 0.0);
  }
}

TEST(KlClosed, AgreesWithMonteCarlo) {
  SeededRng init(13);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> mu(20), rho(20);
    for (auto& m : mu) m = 2.0 * init.uniform() - 1.0;
    for (auto& r : rho) r = -4.0 + 3.0 * init.uniform();
    GaussianPosterior p{Tensor({20}, mu, true), Tensor({20}, rho, true)};
    const double closed = kl_gaussian_closed(p).item();
    SeededRng mc_rng(100 + trial);
    auto est = kl_monte_carlo(p, PriorConfig{}, 100000, mc_rng);
    EXPECT_NEAR(est.value, closed, 0.01 * closed);
  }
}

TEST(KlMonteCarlo, PosteriorEqualToPriorGivesZero) {
  SeededRng rng(14);
  auto est = kl_monte_carlo(posterior({5}, {0, 0, 0, 0, 0}, {1, 1, 1, 1, 1}), PriorConfig{}, 1000, rng);
  EXPECT_LE(std::abs(est.value), 3.0 * est.std_error + 1e-12);
  EXPECT_THROW(kl_monte_carlo(posterior({1}, {0}, {1}), PriorConfig{}, 0, rng), std::invalid_argument);
}

TEST(KlMonteCarlo, StandardErrorShrinksAsInverseSqrtN) {
  auto p = posterior({1}, {0.3}, {0.4});
  const std::vector<std::size_t> sizes{100, 10000, 1000000};
  const int repeats = 20;
  std::vector<double> log_n, log_sd;
  for (std::size_t n : sizes) {
    std::vector<double> estimates;
    for (int r = 0; r < repeats; ++r) {
      SeededRng rng(derive_seed(15, "kl-mc", static_cast<std::uint64_t>(n * 100 + r)));
      estimates.push_back(kl_monte_carlo(p, PriorConfig{}, n, rng).value);
    }
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= repeats;
    double var = 0.0;
    for (double e : estimates) var += (e - mean) * (e - mean);
    var /= repeats - 1;
    log_n.push_back(std::log(static_cast<double>(n)));
    log_sd.push_back(0.5 * std::log(var));
  }
  // Least-squares slope of log sd against log n.
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    mx += log_n[i];
    my += log_sd[i];
  }
  mx /= sizes.size();
  my /= sizes.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    sxy += (log_n[i] - mx) * (log_sd[i] - my);
    sxx += (log_n[i] - mx) * (log_n[i] - mx);
  }
  EXPECT_NEAR(sxy / sxx, -0.5, 0.1);
}

TEST(KlMonteCarlo, ScaleMixturePrior) {
  PriorConfig degenerate{.kind = PriorConfig::Kind::scale_mixture, .pi = 1.0, .sigma1 = 1.0, .sigma2 = 0.1};
  auto p = posterior({4}, {0.2, -0.4, 0.1, 0.9}, {0.3, 0.2, 0.5, 0.1});
  SeededRng rng(16);
  EXPECT_NEAR(kl_monte_carlo(p, degenerate, 100000, rng).value, kl_gaussian_closed(p).item(),
              0.01 * kl_gaussian_closed(p).item());

  PriorConfig mixture{.kind = PriorConfig::Kind::scale_mixture, .pi = 0.25, .sigma1 = 1.0, .sigma2 = 0.05};
  SeededRng r1(17);
  auto oracle = kl_monte_carlo(p, mixture, 200000, r1);
  // Averaging the differentiable single-draw estimator recovers the same value.
  SeededRng r2(18);
  double acc = 0.0;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) acc += kl_divergence(p, mixture, &r2).item();
  EXPECT_NEAR(acc / draws, oracle.value, 0.02 * std::abs(oracle.value));

  // Mixture density integrates to 1.
  double integral = 0.0;
  for (double w = -10.0; w <= 10.0; w += 1e-4) integral += std::exp(mixture.log_density(w)) * 1e-4;
  EXPECT_NEAR(integral, 1.0, 1e-6);

  EXPECT_THROW((PriorConfig{.kind = PriorConfig::Kind::scale_mixture, .pi = 1.5}.validate()), std::invalid_argument);
  EXPECT_THROW((PriorConfig{.kind = PriorConfig::Kind::scale_mixture, .sigma2 = 0.0}.validate()),
               std::invalid_argument);
}

TEST(Elbo, Examples) {
  Tensor targets({2, 3}, {0, 1, 0, 1, 0, 0});
  Tensor probs({2, 3}, {0.2, 0.5, 0.3, 0.6, 0.3, 0.1});
  Tensor kl = Tensor::scalar(12.5);
  auto e0 = elbo_loss(probs, targets, kl, 0.0);
  EXPECT_EQ(e0.total, e0.nll);
  EXPECT_EQ(e0.loss.item(), e0.nll);
  EXPECT_NEAR(e0.nll, -std::log(0.5) - std::log(0.6), 1e-15);

  auto perfect = elbo_loss(Tensor({2, 3}, {0, 1, 0, 1, 0, 0}), targets, kl, 0.1);
  EXPECT_EQ(perfect.nll, 0.0);
  EXPECT_EQ(perfect.clamped, 0u);

  std::vector<double> onehot(8 * 4, 0.0);
  for (std::size_t i = 0; i < 8; ++i) onehot[i * 4 + i % 4] = 1.0;
  auto uniform = elbo_loss(Tensor::full({8, 4}, 0.25), Tensor({8, 4}, onehot), kl, 0.5);
  EXPECT_NEAR(uniform.nll, 8.0 * std::log(4.0), 1e-12);
}

TEST(Elbo, DecompositionIdentityAndClamp) {
  SeededRng rng(19);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> logits(5 * 4), onehot(5 * 4, 0.0);
    for (auto& l : logits) l = 3.0 * rng.normal();
    for (std::size_t i = 0; i < 5; ++i) onehot[i * 4 + rng.uniform_index(4)] = 1.0;
    Tensor probs = nn::softmax(Tensor({5, 4}, logits));
    const double w = rng.uniform();
    auto e = elbo_loss(probs, Tensor({5, 4}, onehot), Tensor::scalar(100.0 * rng.uniform()), w);
    ASSERT_EQ(e.total - (e.nll + e.kl_weight * e.kl), 0.0);
    ASSERT_EQ(e.loss.item(), e.total);
  }
  auto clamped = elbo_loss(Tensor({1, 2}, {1.0, 0.0}), Tensor({1, 2}, {0, 1}), Tensor::scalar(0.0), 1.0);
  EXPECT_EQ(clamped.clamped, 1u);
  EXPECT_NEAR(clamped.nll, -std::log(1e-12), 1e-9);
  EXPECT_THROW(elbo_loss(Tensor({1, 2}, {0.5, 0.5}), Tensor({1, 2}, {1, 1}), Tensor::scalar(0.0), 1.0),
               std::invalid_argument);
}

TEST(GradCheck, BayesLayersWithFrozenNoise) {
  SeededRng init(20);
  BayesLayerOptions opts;
  opts.rho_init = -1.5;
  nn::LayerConfig conv_cfg{.kind = nn::LayerKind::bayes_conv, .name = "bc", .in_channels = 2, .filters = 3,
                           .kernel = 3, .padding = Padding::same};
  nn::LayerConfig dense_cfg{.kind = nn::LayerKind::bayes_dense, .name = "bd", .in_features = 3 * 4 * 4, .units = 2};
  BayesConv2d conv(conv_cfg, opts, init);
  BayesDense dense(dense_cfg, opts, init);
  std::vector<double> xv(2 * 4 * 4 * 2);
  for (auto& v : xv) v = init.normal();
  Tensor x({2, 4, 4, 2}, xv, true);

  std::vector<Tensor> params{x};
  std::vector<std::string> names{"x"};
  for (auto* layer : std::initializer_list<nn::Layer*>{&conv, &dense})
    for (auto& p : layer->parameters()) {
      params.push_back(p.tensor);
      names.push_back(p.name);
    }
  auto loss = [&] {
    SeededRng noise(21);
    nn::ForwardContext ctx{.mode = nn::Mode::train, .rng = &noise};
    Tensor h = flatten(nn::softplus(conv.forward(x, ctx)));
    return add(probe_loss(dense.forward(h, ctx)), scale(add(conv.kl_divergence(nullptr), dense.kl_divergence(nullptr)), 0.01));
  };
  auto r = check::check_gradients(loss, params, names);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst;
}

TEST(GradCheck, MonteCarloKlWithFrozenNoise) {
  auto p = posterior({6}, {0.2, -0.4, 0.1, 0.9, -1.1, 0.05}, {0.3, 0.2, 0.5, 0.1, 0.4, 0.25});
  PriorConfig mixture{.kind = PriorConfig::Kind::scale_mixture, .pi = 0.5, .sigma1 = 1.0, .sigma2 = 0.3};
  auto loss = [&] {
    SeededRng rng(22);
    return kl_divergence(p, mixture, &rng, 3);
  };
  auto r = check::check_gradients(loss, {p.mu, p.rho}, {"mu", "rho"});
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
}

TEST(BayesLayers, MeanModeAndCollapse) {
  SeededRng init(23);
  BayesLayerOptions opts;
  BayesConv2d conv({.kind = nn::LayerKind::bayes_conv, .name = "bc", .in_channels = 1, .filters = 2, .kernel = 3},
                   opts, init);
  std::vector<double> xv(2 * 5 * 5);
  for (auto& v : xv) v = init.normal();
  Tensor x({2, 5, 5, 1}, xv);

  nn::ForwardContext mean_ctx{.sample_weights = false};
  Tensor mean_out = conv.forward(x, mean_ctx);
  Tensor ref = add_bias(conv2d(x, conv.weight().mu), conv.bias().mu);
  for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_EQ(mean_out[i], ref[i]);

  nn::ForwardContext no_rng{.sample_weights = true};
  EXPECT_THROW(conv.forward(x, no_rng), std::logic_error);

  for (auto* r : {&conv.weight().rho, &conv.bias().rho})
    for (auto& v : r->mutable_values()) v = -1000.0;
  SeededRng noise(24);
  nn::ForwardContext sampled{.rng = &noise};
  Tensor collapsed = conv.forward(x, sampled);
  for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_EQ(collapsed[i], ref[i]);

  EXPECT_EQ(conv.parameters().size(), 4u);
  EXPECT_EQ(conv.parameters()[1].name, "bc.weight_rho");
}
