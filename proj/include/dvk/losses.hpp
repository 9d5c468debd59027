#pragma once

#include <optional>
#include <string>

#include "dvk/tensor.hpp"

namespace dvk {

// Scalar loss plus, when the function is usable for training, its gradient
// with respect to the prediction.
struct LossValue {
  double value = 0.0;
  std::optional<Tensor> grad;
};

// Mean squared / absolute error; gradients 2(pred-tgt)/N and sign(pred-tgt)/N.
LossValue mse(const Tensor& pred, const Tensor& target);
LossValue mae(const Tensor& pred, const Tensor& target);

// KL divergence of two strictly positive distributions summing to 1. Metric only.
LossValue kl_divergence(const Tensor& p, const Tensor& q);

// sum x log(x/y) + (1-x) log((1-x)/(1-y)); entries of x, y in (0,1). Metric only.
LossValue log_loss(const Tensor& x, const Tensor& y);

// -sum [x log y + (1-x) log(1-y)]; gradient w.r.t. y is (y-x)/(y(1-y)).
LossValue entropy_like(const Tensor& x, const Tensor& y);

// Soft Jaccard coefficient J = sum min(X,Y) / sum max(X,Y) for nonnegative
// tensors, with dJ/dpred (ties average the two branch contributions).
LossValue soft_iou(const Tensor& pred, const Tensor& target);

// Training form: value 1 - J, gradient -dJ/dpred.
LossValue iou_loss(const Tensor& pred, const Tensor& target);

// Center-weighted squared error: sum (X-Y)^2 .* X/sum(X). X is the ground
// truth, Y the prediction; gradient is w.r.t. Y.
LossValue clinical_loss(const Tensor& x_true, const Tensor& y_pred);

// Oppositely weighted reference: sum (X-Y)^2 .* (c - X/sum(X)); c is 0.9 for
// data normalized to [0.1, 0.9] and 1 for [0, 1].
LossValue clinical_loss_inverse(const Tensor& x_true, const Tensor& y_pred, double c);

// Named dispatch used by the training/eval configuration
// ({mse, mae, iou, entropy, clinical, clinical_inv}).
LossValue training_loss(const std::string& name, const Tensor& pred, const Tensor& target);

}  // namespace dvk
