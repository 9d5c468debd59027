#include <cmath>

#include "dvk/layers.hpp"

namespace dvk {

// Per-channel normalization pooled over batch and spatial positions
// (m' = m * p * q), placed after the activation. Backward follows the
// chain-rule decomposition through mean and variance exactly; see the
// per-channel sums below.

BatchNormLayer::BatchNormLayer(std::size_t channels, double eps, double momentum)
    : Layer("batchnorm"),
      gamma(Tensor::full({channels}, 1.0)),
      beta({channels}),
      grad_gamma({channels}),
      grad_beta({channels}),
      run_mean({channels}),
      run_var({channels}),
      channels_(channels),
      eps_(eps),
      momentum_(momentum),
      run_init_({1}) {
  if (channels < 1) throw ValueError("batchnorm: channels must be >= 1");
  if (!(eps >= 0.0)) throw ValueError("batchnorm: eps must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ValueError("batchnorm: momentum must lie in [0, 1)");
}

namespace {

std::size_t positions_per_channel(const Shape& shape, std::size_t channels, const char* who) {
  if ((shape.size() != 2 && shape.size() != 4) || shape.back() != channels)
    throw ValueError(std::string(who) + ": expected [n, c] or [n, h, w, c] with c = " +
                     std::to_string(channels) + ", got " + shape_to_string(shape));
  std::size_t m = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) m *= shape[i];
  return m;
}

}  // namespace

Tensor BatchNormLayer::forward(const Tensor& x, Mode mode) {
  const std::size_t m = positions_per_channel(x.shape(), channels_, name().c_str());
  const std::size_t c = channels_;
  Tensor out(x.shape());

  if (mode == Mode::infer) {
    if (!stats_initialized())
      throw ValueError(name() + ": inference before any training update; "
                       "running statistics are uninitialized");
    std::vector<double> scale(c), shift(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double inv_std = 1.0 / std::sqrt(run_var[ch] + eps_);
      scale[ch] = gamma[ch] * inv_std;
      shift[ch] = beta[ch] - run_mean[ch] * scale[ch];
    }
    for (std::size_t pos = 0; pos < m; ++pos)
      for (std::size_t ch = 0; ch < c; ++ch)
        out[pos * c + ch] = x[pos * c + ch] * scale[ch] + shift[ch];
    have_cache_ = false;
    return out;
  }

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  for (std::size_t pos = 0; pos < m; ++pos)
    for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += x[pos * c + ch];
  for (std::size_t ch = 0; ch < c; ++ch) mean[ch] /= static_cast<double>(m);
  for (std::size_t pos = 0; pos < m; ++pos)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double d = x[pos * c + ch] - mean[ch];
      var[ch] += d * d;
    }
  for (std::size_t ch = 0; ch < c; ++ch) var[ch] /= static_cast<double>(m);

  cached_inv_std_.assign(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch)
    cached_inv_std_[ch] = 1.0 / std::sqrt(var[ch] + eps_);

  cached_xhat_ = Tensor(x.shape());
  for (std::size_t pos = 0; pos < m; ++pos)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double xhat = (x[pos * c + ch] - mean[ch]) * cached_inv_std_[ch];
      cached_xhat_[pos * c + ch] = xhat;
      out[pos * c + ch] = gamma[ch] * xhat + beta[ch];
    }

  for (std::size_t ch = 0; ch < c; ++ch) {
    if (stats_initialized()) {
      run_mean[ch] = momentum_ * run_mean[ch] + (1.0 - momentum_) * mean[ch];
      run_var[ch] = momentum_ * run_var[ch] + (1.0 - momentum_) * var[ch];
    } else {
      run_mean[ch] = mean[ch];
      run_var[ch] = var[ch];
    }
  }
  run_init_[0] = 1.0;

  cached_var_ = std::move(var);
  cached_m_ = m;
  have_cache_ = true;
  return out;
}

Tensor BatchNormLayer::backward(const Tensor& grad_out) {
  require_cache(have_cache_, "batchnorm (train mode)");
  require_same_shape(grad_out, cached_xhat_, "batchnorm backward");
  const std::size_t c = channels_;
  const std::size_t m = cached_m_;
  const double dm = static_cast<double>(m);

  // Per-channel reductions: dgamma = sum g*xhat, dbeta = sum g, and the
  // (x - mean) weighted sum feeding the variance term. (x - mean) is
  // recovered as xhat / inv_std.
  std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0), sum_gxm(c, 0.0);
  for (std::size_t pos = 0; pos < m; ++pos)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double g = grad_out[pos * c + ch];
      const double xhat = cached_xhat_[pos * c + ch];
      sum_g[ch] += g;
      sum_gx[ch] += g * xhat;
      sum_gxm[ch] += g * (xhat / cached_inv_std_[ch]);
    }

  std::vector<double> dvar(c), dmean(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    grad_gamma[ch] = sum_gx[ch];
    grad_beta[ch] = sum_g[ch];
    dvar[ch] = gamma[ch] * sum_gxm[ch] * (-0.5) * std::pow(cached_var_[ch] + eps_, -1.5);
    dmean[ch] = -gamma[ch] * sum_g[ch] * cached_inv_std_[ch];
  }

  Tensor grad_x(grad_out.shape());
  for (std::size_t pos = 0; pos < m; ++pos)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double g = grad_out[pos * c + ch];
      const double xm = cached_xhat_[pos * c + ch] / cached_inv_std_[ch];
      grad_x[pos * c + ch] =
          gamma[ch] * g * cached_inv_std_[ch] + dvar[ch] * 2.0 * xm / dm + dmean[ch] / dm;
    }
  return grad_x;
}

std::vector<ParamRef> BatchNormLayer::params() {
  return {{"gamma", &gamma, &grad_gamma, false}, {"beta", &beta, &grad_beta, false}};
}

std::vector<ParamRef> BatchNormLayer::state() {
  return {{"run_mean", &run_mean, nullptr, false},
          {"run_var", &run_var, nullptr, false},
          {"run_init", &run_init_, nullptr, false}};
}

}  // namespace dvk
