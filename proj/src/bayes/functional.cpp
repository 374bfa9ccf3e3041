#include "adx/bayes/functional.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "adx/core/autograd.hpp"
#include "adx/core/errors.hpp"
#include "adx/nn/functional.hpp"

namespace adx::bayes {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

double log_normal(double w, double sigma) { return -kHalfLog2Pi - std::log(sigma) - 0.5 * (w / sigma) * (w / sigma); }

void require_same_shape(const GaussianPosterior& post) {
  if (post.mu.shape() != post.rho.shape())
    throw ShapeError("posterior: mu " + shape_str(post.mu.shape()) + " vs rho " + shape_str(post.rho.shape()));
}

}  // namespace

GaussianPosterior GaussianPosterior::create(Shape shape, std::size_t fan_in, SeededRng& rng, double rho_init) {
  if (fan_in == 0) throw std::invalid_argument("posterior: fan_in must be > 0");
  const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> mu(shape_numel(shape));
  for (auto& m : mu) m = (2.0 * rng.uniform() - 1.0) * limit;
  GaussianPosterior p;
  p.rho = Tensor::full(shape, rho_init, true);
  p.mu = Tensor(std::move(shape), std::move(mu), true);
  return p;
}

Tensor GaussianPosterior::sigma() const { return nn::softplus(rho); }

std::vector<double> GaussianPosterior::alpha() const {
  require_same_shape(*this);
  Tensor s = [&] {
    NoGradGuard guard;
    return sigma();
  }();
  std::vector<double> out(mu.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double m = mu[i];
    out[i] = m == 0.0 ? std::numeric_limits<double>::infinity() : (s[i] * s[i]) / (m * m);
  }
  return out;
}

void PriorConfig::validate() const {
  if (kind == Kind::standard_normal) return;
  if (!(pi >= 0.0 && pi <= 1.0)) throw std::invalid_argument("prior: mixture weight pi must be in [0,1]");
  if (!(sigma1 > 0.0) || !(sigma2 > 0.0)) throw std::invalid_argument("prior: mixture scales must be > 0");
}

double PriorConfig::log_density(double w) const {
  if (kind == Kind::standard_normal) return log_normal(w, 1.0);
  if (pi == 1.0) return log_normal(w, sigma1);
  if (pi == 0.0) return log_normal(w, sigma2);
  const double a = std::log(pi) + log_normal(w, sigma1);
  const double b = std::log1p(-pi) + log_normal(w, sigma2);
  const double hi = std::max(a, b);
  return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

std::string_view to_string(PriorConfig::Kind kind) {
  return kind == PriorConfig::Kind::standard_normal ? "standard_normal" : "scale_mixture";
}

PriorConfig::Kind prior_kind_from_string(std::string_view name) {
  if (name == "standard_normal") return PriorConfig::Kind::standard_normal;
  if (name == "scale_mixture") return PriorConfig::Kind::scale_mixture;
  throw std::invalid_argument("unknown prior kind '" + std::string(name) + "'");
}

Tensor standard_normal_noise(const Shape& shape, SeededRng& rng) {
  std::vector<double> eps(shape_numel(shape));
  for (auto& e : eps) e = rng.normal();
  return Tensor(shape, std::move(eps));
}

Tensor sample_weights(const GaussianPosterior& post, SeededRng& rng) {
  return sample_weights(post, standard_normal_noise(post.shape(), rng));
}

Tensor sample_weights(const GaussianPosterior& post, const Tensor& eps) {
  require_same_shape(post);
  if (eps.shape() != post.shape())
    throw ShapeError("sample_weights: noise " + shape_str(eps.shape()) + " vs posterior " + shape_str(post.shape()));
  return add(post.mu, mul(post.sigma(), eps));
}

Moments lrt_dense_moments(const Tensor& a, const GaussianPosterior& post, const GaussianPosterior* bias) {
  require_same_shape(post);
  Moments m;
  Tensor var_w = square(post.sigma());
  if (bias != nullptr) {
    require_same_shape(*bias);
    m.mean = matmul_affine(a, post.mu, bias->mu);
    m.variance = matmul_affine(square(a), var_w, square(bias->sigma()));
  } else {
    m.mean = matmul_affine(a, post.mu, Tensor::zeros({post.shape().back()}));
    m.variance = matmul_affine(square(a), var_w, Tensor::zeros({post.shape().back()}));
  }
  return m;
}

Moments lrt_conv_moments(const Tensor& a, const GaussianPosterior& post, Conv2dOptions options,
                         const GaussianPosterior* bias) {
  require_same_shape(post);
  Moments m;
  m.mean = conv2d(a, post.mu, options);
  m.variance = conv2d(square(a), square(post.sigma()), options);
  if (bias != nullptr) {
    require_same_shape(*bias);
    m.mean = add_bias(m.mean, bias->mu);
    m.variance = add_bias(m.variance, square(bias->sigma()));
  }
  return m;
}

Tensor lrt_combine(const Moments& m, const Tensor& eps) {
  if (eps.shape() != m.mean.shape())
    throw ShapeError("lrt: noise " + shape_str(eps.shape()) + " vs activations " + shape_str(m.mean.shape()));
  return add(m.mean, mul(sqrt(m.variance), eps));
}

Tensor lrt_dense(const Tensor& a, const GaussianPosterior& post, SeededRng& rng, const GaussianPosterior* bias) {
  Moments m = lrt_dense_moments(a, post, bias);
  return lrt_combine(m, standard_normal_noise(m.mean.shape(), rng));
}

Tensor lrt_conv(const Tensor& a, const GaussianPosterior& post, SeededRng& rng, Conv2dOptions options,
                const GaussianPosterior* bias) {
  Moments m = lrt_conv_moments(a, post, options, bias);
  return lrt_combine(m, standard_normal_noise(m.mean.shape(), rng));
}

Tensor kl_gaussian_closed(const GaussianPosterior& post) {
  require_same_shape(post);
  Tensor s = post.sigma();
  Tensor per_weight = add_scalar(scale(add(square(s), square(post.mu)), 0.5), -0.5);
  return sub(sum(per_weight), sum(log(s)));
}

MonteCarloEstimate kl_monte_carlo(const GaussianPosterior& post, const PriorConfig& prior, std::size_t n_samples,
                                  SeededRng& rng) {
  require_same_shape(post);
  if (n_samples == 0) throw std::invalid_argument("kl_monte_carlo: n_samples must be >= 1");
  prior.validate();
  const std::size_t n = post.mu.numel();
  std::vector<double> sigma(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = post.rho[i];
    sigma[i] = r > 30.0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r));
  }
  // Welford accumulation over per-sample totals.
  double mean = 0.0, m2 = 0.0;
  for (std::size_t s = 0; s < n_samples; ++s) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double eps = rng.normal();
      const double w = post.mu[i] + sigma[i] * eps;
      total += (-kHalfLog2Pi - std::log(sigma[i]) - 0.5 * eps * eps) - prior.log_density(w);
    }
    const double delta = total - mean;
    mean += delta / static_cast<double>(s + 1);
    m2 += delta * (total - mean);
  }
  MonteCarloEstimate est;
  est.value = mean;
  est.std_error = n_samples > 1 ? std::sqrt(m2 / static_cast<double>(n_samples - 1) / static_cast<double>(n_samples))
                                : std::numeric_limits<double>::infinity();
  return est;
}

Tensor log_prior(const Tensor& w, const PriorConfig& prior) {
  prior.validate();
  std::vector<double> out(w.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = prior.log_density(w[i]);
  return autograd::record(w.shape(), std::move(out), {w}, [prior](const autograd::BackwardContext& ctx) {
    auto g = ctx.input_grad(0);
    auto wv = ctx.input_value(0);
    auto dy = ctx.out_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double x = wv[i];
      double dlogp;
      if (prior.kind == PriorConfig::Kind::standard_normal) {
        dlogp = -x;
      } else {
        // Responsibility-weighted mixture of the component scores.
        const double a = prior.pi == 0.0 ? -std::numeric_limits<double>::infinity()
                                         : std::log(prior.pi) + log_normal(x, prior.sigma1);
        const double b = prior.pi == 1.0 ? -std::numeric_limits<double>::infinity()
                                         : std::log1p(-prior.pi) + log_normal(x, prior.sigma2);
        const double hi = std::max(a, b);
        const double ra = std::exp(a - hi), rb = std::exp(b - hi);
        const double r1 = ra / (ra + rb);
        dlogp = -x * (r1 / (prior.sigma1 * prior.sigma1) + (1.0 - r1) / (prior.sigma2 * prior.sigma2));
      }
      g[i] += dy[i] * dlogp;
    }
  });
}

Tensor kl_divergence(const GaussianPosterior& post, const PriorConfig& prior, SeededRng* rng, std::size_t n_samples) {
  if (prior.kind == PriorConfig::Kind::standard_normal) return kl_gaussian_closed(post);
  if (rng == nullptr) throw std::logic_error("kl_divergence: Monte Carlo prior needs an rng");
  if (n_samples == 0) throw std::invalid_argument("kl_divergence: n_samples must be >= 1");
  Tensor s = post.sigma();
  Tensor log_s = sum(log(s));
  Tensor total;
  for (std::size_t k = 0; k < n_samples; ++k) {
    Tensor w = add(post.mu, mul(s, standard_normal_noise(post.shape(), *rng)));
    Tensor z = div(sub(w, post.mu), s);
    // log q(w) without the constant, which cancels against log p's own.
    Tensor log_q = sub(scale(sum(square(z)), -0.5), log_s);
    Tensor log_p = add_scalar(sum(log_prior(w, prior)), kHalfLog2Pi * static_cast<double>(w.numel()));
    Tensor term = sub(log_q, log_p);
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 1.0 / static_cast<double>(n_samples));
}

Tensor nll_from_probabilities(const Tensor& predictions, const std::vector<std::size_t>& labels,
                              std::size_t* clamped) {
  if (predictions.rank() != 2) throw ShapeError("nll: predictions must be [N,K], got " + shape_str(predictions.shape()));
  const std::size_t n = predictions.dim(0), k = predictions.dim(1);
  if (labels.size() != n)
    throw ShapeError("nll: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  double total = 0.0;
  std::size_t n_clamped = 0;
  std::vector<char> was_clamped(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= k) throw std::invalid_argument("nll: label " + std::to_string(labels[i]) + " out of range");
    double p = predictions[i * k + labels[i]];
    if (!(p > kProbabilityClamp)) {
      p = kProbabilityClamp;
      was_clamped[i] = 1;
      ++n_clamped;
    }
    total -= std::log(p);
  }
  if (clamped != nullptr) *clamped = n_clamped;
  return autograd::record({1}, {total}, {predictions},
                          [labels, k, was_clamped = std::move(was_clamped)](const autograd::BackwardContext& ctx) {
                            auto g = ctx.input_grad(0);
                            auto p = ctx.input_value(0);
                            const double dy = ctx.out_grad()[0];
                            for (std::size_t i = 0; i < labels.size(); ++i) {
                              if (was_clamped[i]) continue;
                              const std::size_t idx = i * k + labels[i];
                              g[idx] -= dy / p[idx];
                            }
                          });
}

ElboBreakdown elbo_loss(const Tensor& predictions, const Tensor& targets, const Tensor& kl_total, double kl_weight) {
  if (targets.shape() != predictions.shape())
    throw ShapeError("elbo: targets " + shape_str(targets.shape()) + " vs predictions " +
                     shape_str(predictions.shape()));
  if (predictions.rank() != 2) throw ShapeError("elbo: predictions must be [N,K]");
  if (kl_total.numel() != 1) throw ShapeError("elbo: kl_total must be a scalar");
  if (!(kl_weight >= 0.0) || !std::isfinite(kl_weight)) throw std::invalid_argument("elbo: kl_weight must be >= 0");
  const std::size_t n = predictions.dim(0), k = predictions.dim(1);
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t hot = k;
    for (std::size_t j = 0; j < k; ++j) {
      const double t = targets[i * k + j];
      if (t == 1.0 && hot == k) {
        hot = j;
      } else if (t != 0.0) {
        hot = k + 1;
        break;
      }
    }
    if (hot >= k) throw std::invalid_argument("elbo: target row " + std::to_string(i) + " is not one-hot");
    labels[i] = hot;
  }
  ElboBreakdown out;
  Tensor nll = nll_from_probabilities(predictions, labels, &out.clamped);
  out.nll = nll.item();
  out.kl = kl_total.item();
  out.kl_weight = kl_weight;
  out.loss = kl_weight == 0.0 ? nll : add(nll, scale(kl_total, kl_weight));
  out.total = out.loss.item();
  return out;
}

}  // namespace adx::bayes
