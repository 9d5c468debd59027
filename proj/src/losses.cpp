#include "dvk/losses.hpp"

#include <cmath>

namespace dvk {

LossValue mse(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse");
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  Tensor grad(pred.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
    grad[i] = 2.0 * d * inv_n;
  }
  return {acc * inv_n, std::move(grad)};
}

LossValue mae(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mae");
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  Tensor grad(pred.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += std::abs(d);
    grad[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_n;
  }
  return {acc * inv_n, std::move(grad)};
}

namespace {

void check_distribution(const Tensor& t, const char* what) {
  double total = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 0.0))
      throw ValueError(std::string(what) + ": entries must be strictly positive");
    total += t[i];
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ValueError(std::string(what) + ": entries must sum to 1, got " + std::to_string(total));
}

void check_open_unit(const Tensor& t, const char* what) {
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!(t[i] > 0.0 && t[i] < 1.0))
      throw ValueError(std::string(what) + ": entries must lie in (0, 1)");
}

}  // namespace

LossValue kl_divergence(const Tensor& p, const Tensor& q) {
  require_same_shape(p, q, "kl_divergence");
  check_distribution(p, "kl_divergence p");
  check_distribution(q, "kl_divergence q");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += p[i] * std::log(p[i] / q[i]);
  return {acc, std::nullopt};
}

LossValue log_loss(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "log_loss");
  check_open_unit(x, "log_loss x");
  check_open_unit(y, "log_loss y");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += x[i] * std::log(x[i] / y[i]) + (1.0 - x[i]) * std::log((1.0 - x[i]) / (1.0 - y[i]));
  return {acc, std::nullopt};
}

LossValue entropy_like(const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "entropy_like");
  check_open_unit(x, "entropy_like x");
  check_open_unit(y, "entropy_like y");
  Tensor grad(y.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc -= x[i] * std::log(y[i]) + (1.0 - x[i]) * std::log(1.0 - y[i]);
    grad[i] = (y[i] - x[i]) / (y[i] * (1.0 - y[i]));
  }
  return {acc, std::move(grad)};
}

LossValue soft_iou(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "soft_iou");
  double sum_min = 0.0, sum_max = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0.0 || target[i] < 0.0)
      throw ValueError("soft_iou: entries must be nonnegative");
    sum_min += std::min(pred[i], target[i]);
    sum_max += std::max(pred[i], target[i]);
  }
  if (sum_max == 0.0) throw ValueError("soft_iou: both tensors are identically zero");

  const double j = sum_min / sum_max;
  // dJ/dpred: below the target the entry moves sum_min, above it sum_max;
  // exact ties take the mean of both branch contributions.
  const double lo = 1.0 / sum_max;
  const double hi = -sum_min / (sum_max * sum_max);
  Tensor grad(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < target[i])
      grad[i] = lo;
    else if (pred[i] > target[i])
      grad[i] = hi;
    else
      grad[i] = 0.5 * (lo + hi);
  }
  return {j, std::move(grad)};
}

LossValue iou_loss(const Tensor& pred, const Tensor& target) {
  LossValue j = soft_iou(pred, target);
  for (double& g : j.grad->data()) g = -g;
  return {1.0 - j.value, std::move(j.grad)};
}

namespace {

LossValue clinical_weighted(const Tensor& x_true, const Tensor& y_pred, double c, bool inverse) {
  require_same_shape(x_true, y_pred, "clinical loss");
  double total = 0.0;
  for (std::size_t i = 0; i < x_true.size(); ++i) {
    if (x_true[i] < 0.0) throw ValueError("clinical loss: ground truth must be nonnegative");
    total += x_true[i];
  }
  if (total <= 0.0) throw ValueError("clinical loss: ground truth sums to zero");

  Tensor grad(y_pred.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < x_true.size(); ++i) {
    const double weight = inverse ? (c - x_true[i] / total) : (x_true[i] / total);
    const double d = x_true[i] - y_pred[i];
    acc += d * d * weight;
    grad[i] = -2.0 * d * weight;
  }
  return {acc, std::move(grad)};
}

}  // namespace

LossValue clinical_loss(const Tensor& x_true, const Tensor& y_pred) {
  return clinical_weighted(x_true, y_pred, 0.0, false);
}

LossValue clinical_loss_inverse(const Tensor& x_true, const Tensor& y_pred, double c) {
  return clinical_weighted(x_true, y_pred, c, true);
}

LossValue training_loss(const std::string& name, const Tensor& pred, const Tensor& target) {
  if (name == "mse") return mse(pred, target);
  if (name == "mae") return mae(pred, target);
  if (name == "iou") return iou_loss(pred, target);
  if (name == "entropy") return entropy_like(target, pred);
  if (name == "clinical") return clinical_loss(target, pred);
  if (name == "clinical_inv") return clinical_loss_inverse(target, pred, 0.9);
  throw ValueError("unknown loss: " + name);
}

}  // namespace dvk
