#include <vector>

#include "dvk/layers.hpp"

namespace dvk {

// Valid cross-correlation, the index form used for both the dose convolution
// and the learned filters:
//   out[x, y, o] = sum_{a, b, c} K[a, b, c, o] * X[x+a, y+b, c] + bias[o]
// No kernel flip; with learned filters the orientation is immaterial, but the
// convention is fixed here once for the whole toolkit.

Conv2DLayer::Conv2DLayer(std::size_t kh, std::size_t kw, std::size_t c_in, std::size_t c_out,
                         RegSpec reg)
    : Layer("conv2d"),
      weights({kh, kw, c_in, c_out}),
      bias({c_out}),
      grad_weights({kh, kw, c_in, c_out}),
      grad_bias({c_out}),
      kh_(kh),
      kw_(kw),
      c_in_(c_in),
      c_out_(c_out),
      reg_(reg) {
  if (kh % 2 == 0 || kw % 2 == 0)
    throw ValueError("conv2d: kernel dims must be odd, got " + std::to_string(kh) + "x" +
                     std::to_string(kw));
}

Tensor Conv2DLayer::forward(const Tensor& x, Mode) {
  Tensor input = x;
  input_was_rank3_ = (x.rank() == 3);
  if (input_was_rank3_) input = reshape(x, {1, x.dim(0), x.dim(1), x.dim(2)});
  if (input.rank() != 4 || input.dim(3) != c_in_)
    throw ValueError(name() + ": expected [n, h, w, " + std::to_string(c_in_) + "], got " +
                     shape_to_string(x.shape()));
  const std::size_t n = input.dim(0), h = input.dim(1), w = input.dim(2);
  if (h < kh_ || w < kw_)
    throw ValueError(name() + ": kernel " + std::to_string(kh_) + "x" + std::to_string(kw_) +
                     " larger than input " + shape_to_string(x.shape()));
  const std::size_t oh = h - kh_ + 1, ow = w - kw_ + 1;

  Tensor out({n, oh, ow, c_out_});
  std::vector<double> acc(c_out_);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ox = 0; ox < oh; ++ox)
      for (std::size_t oy = 0; oy < ow; ++oy) {
        for (std::size_t o = 0; o < c_out_; ++o) acc[o] = bias[o];
        for (std::size_t a = 0; a < kh_; ++a)
          for (std::size_t b = 0; b < kw_; ++b) {
            const double* xp = input.raw() + ((s * h + ox + a) * w + oy + b) * c_in_;
            const double* kp = weights.raw() + (a * kw_ + b) * c_in_ * c_out_;
            for (std::size_t c = 0; c < c_in_; ++c) {
              const double xv = xp[c];
              const double* kc = kp + c * c_out_;
              for (std::size_t o = 0; o < c_out_; ++o) acc[o] += xv * kc[o];
            }
          }
        double* op = out.raw() + ((s * oh + ox) * ow + oy) * c_out_;
        for (std::size_t o = 0; o < c_out_; ++o) op[o] = acc[o];
      }

  cached_input_ = std::move(input);
  have_cache_ = true;
  if (input_was_rank3_) return reshape(out, {oh, ow, c_out_});
  return out;
}

Tensor Conv2DLayer::backward(const Tensor& grad_out) {
  require_cache(have_cache_, "conv2d");
  const std::size_t n = cached_input_.dim(0), h = cached_input_.dim(1),
                    w = cached_input_.dim(2);
  const std::size_t oh = h - kh_ + 1, ow = w - kw_ + 1;
  Tensor g = grad_out;
  if (input_was_rank3_) g = reshape(grad_out, {1, oh, ow, c_out_});
  if (g.shape() != Shape{n, oh, ow, c_out_})
    throw ValueError(name() + ": gradient shape mismatch with cached forward");

  grad_weights.fill(0.0);
  grad_bias.fill(0.0);
  Tensor grad_x(cached_input_.shape());

  // Shared-weight gradients accumulate over every spatial position; the
  // input gradient is the full adjoint (scatter of kernel * grad_out).
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t ox = 0; ox < oh; ++ox)
      for (std::size_t oy = 0; oy < ow; ++oy) {
        const double* gp = g.raw() + ((s * oh + ox) * ow + oy) * c_out_;
        for (std::size_t o = 0; o < c_out_; ++o) grad_bias[o] += gp[o];
        for (std::size_t a = 0; a < kh_; ++a)
          for (std::size_t b = 0; b < kw_; ++b) {
            const std::size_t in_off = ((s * h + ox + a) * w + oy + b) * c_in_;
            const double* xp = cached_input_.raw() + in_off;
            double* gxp = grad_x.raw() + in_off;
            const std::size_t k_off = (a * kw_ + b) * c_in_ * c_out_;
            double* gw = grad_weights.raw() + k_off;
            const double* kp = weights.raw() + k_off;
            for (std::size_t c = 0; c < c_in_; ++c) {
              const double xv = xp[c];
              double dx = 0.0;
              double* gwc = gw + c * c_out_;
              const double* kc = kp + c * c_out_;
              for (std::size_t o = 0; o < c_out_; ++o) {
                gwc[o] += xv * gp[o];
                dx += kc[o] * gp[o];
              }
              gxp[c] += dx;
            }
          }
      }

  if (input_was_rank3_) return reshape(grad_x, {h, w, c_in_});
  return grad_x;
}

std::vector<ParamRef> Conv2DLayer::params() {
  return {{"weight", &weights, &grad_weights, true}, {"bias", &bias, &grad_bias, false}};
}

}  // namespace dvk
