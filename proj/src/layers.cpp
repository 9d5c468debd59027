#include "dvk/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dvk {

Tensor init_lecun(const Shape& shape, std::size_t fan_in, Rng& rng, InitKind kind) {
  if (fan_in < 1) throw ValueError("init_lecun: fan_in must be >= 1");
  Tensor t(shape);
  if (kind == InitKind::lecun_uniform) {
    const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
    for (double& v : t.data()) v = rng.uniform(-limit, limit);
  } else {
    const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t.data()) v = stddev * rng.normal();
  }
  return t;
}

void Layer::zero_grads() {
  for (ParamRef& ref : params())
    if (ref.grad) ref.grad->fill(0.0);
}

void Layer::require_cache(bool have, const char* what) const {
  if (!have)
    throw ValueError(name() + ": " + what + " backward without a matching forward");
}

Tensor SkipLayer::forward(const Tensor&, Mode) {
  throw ValueError(name() + ": skip layer needs its source input; run it inside a Network");
}

Tensor SkipLayer::backward(const Tensor&) {
  throw ValueError(name() + ": skip layer needs its source input; run it inside a Network");
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Activation act)
    : Layer("dense"),
      weights({out, in}),
      bias({out}),
      grad_weights({out, in}),
      grad_bias({out}),
      in_(in),
      out_(out),
      act_(act) {}

Tensor DenseLayer::forward(const Tensor& x, Mode) {
  Tensor input = x;
  input_was_vector_ = (x.rank() == 1);
  if (input_was_vector_) input = reshape(x, {1, x.size()});
  if (input.rank() != 2 || input.dim(1) != in_)
    throw ValueError(name() + ": expected [n, " + std::to_string(in_) + "], got " +
                     shape_to_string(x.shape()));

  const std::size_t n = input.dim(0);
  Tensor out({n, out_});
  for (std::size_t s = 0; s < n; ++s) {
    const double* xv = input.raw() + s * in_;
    for (std::size_t j = 0; j < out_; ++j) {
      const double* w = weights.raw() + j * in_;
      double acc = bias[j];
      for (std::size_t k = 0; k < in_; ++k) acc += w[k] * xv[k];
      double y = acc;
      if (act_ == Activation::sigmoid)
        y = acc >= 0.0 ? 1.0 / (1.0 + std::exp(-acc)) : std::exp(acc) / (1.0 + std::exp(acc));
      out.at(s, j) = y;
    }
  }
  cached_input_ = std::move(input);
  cached_output_ = out;
  have_cache_ = true;
  if (input_was_vector_) return reshape(out, {out_});
  return out;
}

Tensor DenseLayer::backward(const Tensor& grad_out) {
  require_cache(have_cache_, "dense");
  Tensor g = grad_out;
  if (input_was_vector_) g = reshape(grad_out, {1, grad_out.size()});
  require_same_shape(g, cached_output_, "dense backward");

  const std::size_t n = cached_input_.dim(0);
  grad_weights.fill(0.0);
  grad_bias.fill(0.0);
  Tensor grad_x({n, in_});
  for (std::size_t s = 0; s < n; ++s) {
    const double* xv = cached_input_.raw() + s * in_;
    double* gx = grad_x.raw() + s * in_;
    for (std::size_t j = 0; j < out_; ++j) {
      double dz = g.at(s, j);
      if (act_ == Activation::sigmoid) {
        const double y = cached_output_.at(s, j);
        dz *= y * (1.0 - y);
      }
      grad_bias[j] += dz;
      double* gw = grad_weights.raw() + j * in_;
      const double* w = weights.raw() + j * in_;
      for (std::size_t k = 0; k < in_; ++k) {
        gw[k] += dz * xv[k];
        gx[k] += dz * w[k];
      }
    }
  }
  if (input_was_vector_) return reshape(grad_x, {in_});
  return grad_x;
}

std::vector<ParamRef> DenseLayer::params() {
  return {{"weight", &weights, &grad_weights, true}, {"bias", &bias, &grad_bias, false}};
}

// ---------------------------------------------------------------------------
// Elementwise activations
// ---------------------------------------------------------------------------

LeakyReLULayer::LeakyReLULayer(double alpha) : Layer("leaky_relu"), alpha_(alpha) {
  if (!std::isfinite(alpha)) throw ValueError("leaky_relu: alpha must be finite");
}

Tensor LeakyReLULayer::forward(const Tensor& x, Mode) {
  in_shape_ = x.shape();
  nonneg_.resize(x.size());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool pos = x[i] >= 0.0;
    nonneg_[i] = pos;
    out[i] = pos ? x[i] : alpha_ * x[i];
  }
  have_cache_ = true;
  return out;
}

Tensor LeakyReLULayer::backward(const Tensor& grad_out) {
  require_cache(have_cache_, "leaky_relu");
  if (grad_out.shape() != in_shape_)
    throw ValueError(name() + ": gradient shape mismatch");
  Tensor grad_x(in_shape_);
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    grad_x[i] = nonneg_[i] ? grad_out[i] : alpha_ * grad_out[i];
  return grad_x;
}

Tensor SigmoidLayer::forward(const Tensor& x, Mode) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    out[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  cached_output_ = out;
  have_cache_ = true;
  return out;
}

Tensor SigmoidLayer::backward(const Tensor& grad_out) {
  require_cache(have_cache_, "sigmoid");
  require_same_shape(grad_out, cached_output_, "sigmoid backward");
  Tensor grad_x(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const double y = cached_output_[i];
    grad_x[i] = grad_out[i] * y * (1.0 - y);
  }
  return grad_x;
}

Tensor SoftmaxLayer::forward(const Tensor& x, Mode) {
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / d;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xv = x.raw() + r * d;
    double* ov = out.raw() + r * d;
    double m = xv[0];
    for (std::size_t i = 1; i < d; ++i) m = std::max(m, xv[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      ov[i] = std::exp(xv[i] - m);
      total += ov[i];
    }
    for (std::size_t i = 0; i < d; ++i) ov[i] /= total;
  }
  cached_output_ = out;
  have_cache_ = true;
  return out;
}

Tensor SoftmaxLayer::backward(const Tensor& grad_out) {
  require_cache(have_cache_, "softmax");
  require_same_shape(grad_out, cached_output_, "softmax backward");
  const std::size_t d = grad_out.shape().back();
  const std::size_t rows = grad_out.size() / d;
  Tensor grad_x(grad_out.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* g = grad_out.raw() + r * d;
    const double* y = cached_output_.raw() + r * d;
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) dot += g[i] * y[i];
    double* gx = grad_x.raw() + r * d;
    for (std::size_t i = 0; i < d; ++i) gx[i] = y[i] * (g[i] - dot);
  }
  return grad_x;
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

DropoutLayer::DropoutLayer(double drop_rate, std::uint64_t seed)
    : Layer("dropout"), p_(drop_rate), rng_(seed) {
  if (!(drop_rate >= 0.0 && drop_rate < 1.0))
    throw ValueError("dropout: drop rate must lie in [0, 1)");
}

Tensor DropoutLayer::forward(const Tensor& x, Mode mode) {
  in_shape_ = x.shape();
  cached_mode_ = mode;
  have_cache_ = true;
  if (mode == Mode::infer) return x;

  if (!frozen_ || keep_.size() != x.size()) {
    keep_.resize(x.size());
    for (auto& k : keep_) k = rng_.uniform() >= p_;
  }
  const double scale = 1.0 / (1.0 - p_);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = keep_[i] ? x[i] * scale : 0.0;
  return out;
}

Tensor DropoutLayer::backward(const Tensor& grad_out) {
  require_cache(have_cache_, "dropout");
  if (grad_out.shape() != in_shape_) throw ValueError(name() + ": gradient shape mismatch");
  if (cached_mode_ == Mode::infer) return grad_out;
  const double scale = 1.0 / (1.0 - p_);
  Tensor grad_x(in_shape_);
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    grad_x[i] = keep_[i] ? grad_out[i] * scale : 0.0;
  return grad_x;
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

namespace {

struct PoolDims {
  std::size_t n, h, w, c, oh, ow;
};

PoolDims pool_dims(const Shape& in, std::size_t ph, std::size_t pw, std::size_t sh,
                   std::size_t sw, const std::string& who) {
  if (in.size() != 4) throw ValueError(who + ": expected [n, h, w, c]");
  const std::size_t h = in[1], w = in[2];
  if (h < ph || w < pw) throw ValueError(who + ": pool window exceeds input");
  if ((h - ph) % sh != 0 || (w - pw) % sw != 0)
    throw ValueError(who + ": non-integral output size for input " + shape_to_string(in));
  return {in[0], h, w, in[3], (h - ph) / sh + 1, (w - pw) / sw + 1};
}

}  // namespace

AvgPoolLayer::AvgPoolLayer(std::size_t ph, std::size_t pw, std::size_t sh, std::size_t sw)
    : Layer("avgpool"), ph_(ph), pw_(pw), sh_(sh), sw_(sw) {
  if (ph < 1 || pw < 1 || sh < 1 || sw < 1) throw ValueError("avgpool: dims must be >= 1");
}

Tensor AvgPoolLayer::forward(const Tensor& x, Mode) {
  const PoolDims d = pool_dims(x.shape(), ph_, pw_, sh_, sw_, name());
  in_shape_ = x.shape();
  have_cache_ = true;
  Tensor out({d.n, d.oh, d.ow, d.c});
  const double inv_area = 1.0 / static_cast<double>(ph_ * pw_);
  for (std::size_t s = 0; s < d.n; ++s)
    for (std::size_t oy = 0; oy < d.oh; ++oy)
      for (std::size_t ox = 0; ox < d.ow; ++ox)
        for (std::size_t ch = 0; ch < d.c; ++ch) {
          double acc = 0.0;
          for (std::size_t a = 0; a < ph_; ++a)
            for (std::size_t b = 0; b < pw_; ++b)
              acc += x[((s * d.h + oy * sh_ + a) * d.w + ox * sw_ + b) * d.c + ch];
          out[((s * d.oh + oy) * d.ow + ox) * d.c + ch] = acc * inv_area;
        }
  return out;
}

Tensor AvgPoolLayer::backward(const Tensor& grad_out) {
  require_cache(have_cache_, "avgpool");
  const PoolDims d = pool_dims(in_shape_, ph_, pw_, sh_, sw_, name());
  if (grad_out.shape() != Shape{d.n, d.oh, d.ow, d.c})
    throw ValueError(name() + ": gradient shape mismatch");
  Tensor grad_x(in_shape_);
  const double inv_area = 1.0 / static_cast<double>(ph_ * pw_);
  for (std::size_t s = 0; s < d.n; ++s)
    for (std::size_t oy = 0; oy < d.oh; ++oy)
      for (std::size_t ox = 0; ox < d.ow; ++ox)
        for (std::size_t ch = 0; ch < d.c; ++ch) {
          const double g = grad_out[((s * d.oh + oy) * d.ow + ox) * d.c + ch] * inv_area;
          for (std::size_t a = 0; a < ph_; ++a)
            for (std::size_t b = 0; b < pw_; ++b)
              grad_x[((s * d.h + oy * sh_ + a) * d.w + ox * sw_ + b) * d.c + ch] += g;
        }
  return grad_x;
}

MaxPoolLayer::MaxPoolLayer(std::size_t ph, std::size_t pw, std::size_t sh, std::size_t sw)
    : Layer("maxpool"), ph_(ph), pw_(pw), sh_(sh), sw_(sw) {
  if (ph < 1 || pw < 1 || sh < 1 || sw < 1) throw ValueError("maxpool: dims must be >= 1");
}

Tensor MaxPoolLayer::forward(const Tensor& x, Mode) {
  const PoolDims d = pool_dims(x.shape(), ph_, pw_, sh_, sw_, name());
  in_shape_ = x.shape();
  Tensor out({d.n, d.oh, d.ow, d.c});
  argmax_.assign(out.size(), 0);
  for (std::size_t s = 0; s < d.n; ++s)
    for (std::size_t oy = 0; oy < d.oh; ++oy)
      for (std::size_t ox = 0; ox < d.ow; ++ox)
        for (std::size_t ch = 0; ch < d.c; ++ch) {
          // ties resolve to the first occurrence in row-major window order
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          for (std::size_t a = 0; a < ph_; ++a)
            for (std::size_t b = 0; b < pw_; ++b) {
              const std::size_t idx =
                  ((s * d.h + oy * sh_ + a) * d.w + ox * sw_ + b) * d.c + ch;
              if (x[idx] > best) {
                best = x[idx];
                best_idx = idx;
              }
            }
          const std::size_t o = ((s * d.oh + oy) * d.ow + ox) * d.c + ch;
          out[o] = best;
          argmax_[o] = best_idx;
        }
  have_cache_ = true;
  return out;
}

Tensor MaxPoolLayer::backward(const Tensor& grad_out) {
  require_cache(have_cache_, "maxpool");
  if (grad_out.size() != argmax_.size()) throw ValueError(name() + ": gradient shape mismatch");
  Tensor grad_x(in_shape_);
  for (std::size_t o = 0; o < grad_out.size(); ++o) grad_x[argmax_[o]] += grad_out[o];
  return grad_x;
}

// ---------------------------------------------------------------------------
// Upsample / reshape / crop
// ---------------------------------------------------------------------------

UpsampleLayer::UpsampleLayer(std::size_t fh, std::size_t fw)
    : Layer("upsample"), fh_(fh), fw_(fw) {
  if (fh < 1 || fw < 1) throw ValueError("upsample: factors must be >= 1");
}

Tensor UpsampleLayer::forward(const Tensor& x, Mode) {
  if (x.rank() != 4) throw ValueError(name() + ": expected [n, h, w, c]");
  in_shape_ = x.shape();
  have_cache_ = true;
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor out({n, h * fh_, w * fw_, c});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < h * fh_; ++i)
      for (std::size_t j = 0; j < w * fw_; ++j) {
        const double* src = x.raw() + ((s * h + i / fh_) * w + j / fw_) * c;
        double* dst = out.raw() + ((s * h * fh_ + i) * (w * fw_) + j) * c;
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
      }
  return out;
}

Tensor UpsampleLayer::backward(const Tensor& grad_out) {
  require_cache(have_cache_, "upsample");
  const std::size_t n = in_shape_[0], h = in_shape_[1], w = in_shape_[2], c = in_shape_[3];
  if (grad_out.shape() != Shape{n, h * fh_, w * fw_, c})
    throw ValueError(name() + ": gradient shape mismatch");
  Tensor grad_x(in_shape_);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < h * fh_; ++i)
      for (std::size_t j = 0; j < w * fw_; ++j) {
        const double* src = grad_out.raw() + ((s * h * fh_ + i) * (w * fw_) + j) * c;
        double* dst = grad_x.raw() + ((s * h + i / fh_) * w + j / fw_) * c;
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
      }
  return grad_x;
}

ReshapeLayer::ReshapeLayer(Shape per_sample_target)
    : Layer("reshape"), target_(std::move(per_sample_target)) {
  if (target_.empty() || target_.size() > 3)
    throw ValueError("reshape layer: per-sample target rank must be 1..3");
}

Tensor ReshapeLayer::forward(const Tensor& x, Mode) {
  if (x.rank() < 2) throw ValueError(name() + ": expected a batched tensor");
  Shape out_shape{x.dim(0)};
  out_shape.insert(out_shape.end(), target_.begin(), target_.end());
  in_shape_ = x.shape();
  have_cache_ = true;
  return reshape(x, out_shape);
}

Tensor ReshapeLayer::backward(const Tensor& grad_out) {
  require_cache(have_cache_, "reshape");
  return reshape(grad_out, in_shape_);
}

CenterCropLayer::CenterCropLayer(std::size_t th, std::size_t tw)
    : Layer("center_crop"), th_(th), tw_(tw) {
  if (th < 1 || tw < 1) throw ValueError("center_crop: target dims must be >= 1");
}

Tensor CenterCropLayer::forward(const Tensor& x, Mode) {
  if (x.rank() != 4) throw ValueError(name() + ": expected [n, h, w, c]");
  in_shape_ = x.shape();
  have_cache_ = true;
  return center_crop(x, {x.dim(0), th_, tw_});
}

Tensor CenterCropLayer::backward(const Tensor& grad_out) {
  require_cache(have_cache_, "center_crop");
  const std::size_t n = in_shape_[0], h = in_shape_[1], w = in_shape_[2], c = in_shape_[3];
  if (grad_out.shape() != Shape{n, th_, tw_, c})
    throw ValueError(name() + ": gradient shape mismatch");
  Tensor grad_x(in_shape_);
  const std::size_t oh = (h - th_) / 2, ow = (w - tw_) / 2;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < th_; ++i)
      for (std::size_t j = 0; j < tw_; ++j) {
        const double* src = grad_out.raw() + ((s * th_ + i) * tw_ + j) * c;
        double* dst = grad_x.raw() + ((s * h + i + oh) * w + j + ow) * c;
        for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
      }
  return grad_x;
}

// ---------------------------------------------------------------------------
// Skip joins
// ---------------------------------------------------------------------------

Tensor AddSkipLayer::forward_skip(const Tensor& deep, const Tensor& skip, Mode) {
  require_same_shape(deep, skip, "add_skip");
  skip_shape_ = skip.shape();
  have_cache_ = true;
  Tensor out(deep.shape());
  for (std::size_t i = 0; i < deep.size(); ++i) out[i] = deep[i] + skip[i];
  return out;
}

Tensor AddSkipLayer::backward_skip(const Tensor& grad_out, Tensor& grad_skip) {
  require_cache(have_cache_, "add_skip");
  if (grad_out.shape() != skip_shape_) throw ValueError(name() + ": gradient shape mismatch");
  grad_skip = grad_out;
  return grad_out;
}

Tensor ConcatSkipLayer::forward_skip(const Tensor& deep, const Tensor& skip, Mode) {
  if (deep.rank() != 4 || skip.rank() != 4)
    throw ValueError(name() + ": expected [n, h, w, c] inputs");
  if (deep.dim(0) != skip.dim(0)) throw ValueError(name() + ": batch size mismatch");
  if (skip.dim(1) < deep.dim(1) || skip.dim(2) < deep.dim(2))
    throw ValueError(name() + ": skip branch spatially smaller than deep branch");

  const Tensor cropped = (skip.dim(1) == deep.dim(1) && skip.dim(2) == deep.dim(2))
                             ? skip
                             : center_crop(skip, {skip.dim(0), deep.dim(1), deep.dim(2)});
  deep_shape_ = deep.shape();
  skip_shape_ = skip.shape();
  have_cache_ = true;

  const std::size_t n = deep.dim(0), h = deep.dim(1), w = deep.dim(2);
  const std::size_t cd = deep.dim(3), cs = skip.dim(3);
  Tensor out({n, h, w, cd + cs});
  for (std::size_t pos = 0; pos < n * h * w; ++pos) {
    const double* d = deep.raw() + pos * cd;
    const double* s = cropped.raw() + pos * cs;
    double* o = out.raw() + pos * (cd + cs);
    for (std::size_t ch = 0; ch < cd; ++ch) o[ch] = d[ch];
    for (std::size_t ch = 0; ch < cs; ++ch) o[cd + ch] = s[ch];
  }
  return out;
}

Tensor ConcatSkipLayer::backward_skip(const Tensor& grad_out, Tensor& grad_skip) {
  require_cache(have_cache_, "concat_skip");
  const std::size_t n = deep_shape_[0], h = deep_shape_[1], w = deep_shape_[2];
  const std::size_t cd = deep_shape_[3], cs = skip_shape_[3];
  if (grad_out.shape() != Shape{n, h, w, cd + cs})
    throw ValueError(name() + ": gradient shape mismatch");

  Tensor grad_deep(deep_shape_);
  grad_skip = Tensor(skip_shape_);
  const std::size_t sh = skip_shape_[1], sw = skip_shape_[2];
  const std::size_t oh = (sh - h) / 2, ow = (sw - w) / 2;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double* g = grad_out.raw() + ((s * h + i) * w + j) * (cd + cs);
        double* gd = grad_deep.raw() + ((s * h + i) * w + j) * cd;
        double* gs = grad_skip.raw() + ((s * sh + i + oh) * sw + j + ow) * cs;
        for (std::size_t ch = 0; ch < cd; ++ch) gd[ch] = g[ch];
        for (std::size_t ch = 0; ch < cs; ++ch) gs[ch] = g[cd + ch];
      }
  return grad_deep;
}

}  // namespace dvk
