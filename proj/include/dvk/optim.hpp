#pragma once

#include <cstdint>
#include <string>

#include "dvk/tensor.hpp"

namespace dvk {

// Weight-decay penalty attached to a layer's weights (never biases or
// batch-norm parameters). L2 adds 2*gamma*theta to the gradient; L1 adds
// gamma*sign(theta) with sign(0) = 0.
struct RegSpec {
  enum class Kind { none, l1, l2 };
  Kind kind = Kind::none;
  double gamma = 0.0;

  static RegSpec none() { return {}; }
  static RegSpec l1(double gamma) { return {Kind::l1, gamma}; }
  static RegSpec l2(double gamma) { return {Kind::l2, gamma}; }
};

void apply_regularization(Tensor& grad, const Tensor& param, const RegSpec& reg);

// ---------------------------------------------------------------------------
// Single-tensor update rules. Every operation is elementwise; each state
// struct owns the moment buffers for one parameter tensor.
// ---------------------------------------------------------------------------

// theta <- theta - lr * g
void sgd_step(Tensor& theta, const Tensor& g, double lr);

// Classical momentum: m <- mu*m + g; theta <- theta - lr*m
struct MomentumState {
  Tensor m;
  explicit MomentumState(const Shape& shape) : m(shape) {}
};
void momentum_step(MomentumState& s, Tensor& theta, const Tensor& g, double lr, double mu);

// Nesterov momentum in the single-gradient-evaluation form:
//   m <- mu*m + lr*g;  theta <- theta - (mu_next*m + lr*g)
// With a constant schedule mu_next == mu.
struct NesterovState {
  Tensor m;
  explicit NesterovState(const Shape& shape) : m(shape) {}
};
void nesterov_step(NesterovState& s, Tensor& theta, const Tensor& g, double lr, double mu,
                   double mu_next);

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Tensor m, v;
  long t = 0;
  explicit AdamState(const Shape& shape) : m(shape), v(shape) {}
};
void adam_step(AdamState& s, Tensor& theta, const Tensor& g, const AdamConfig& cfg);

// Momentum schedule for the Nesterov-Adam update. The constant schedule is
// the default; the warmup variant ramps mu_t toward mu over ~250 steps.
struct MuSchedule {
  enum class Kind { constant, warmup };
  Kind kind = Kind::constant;
  double mu = 0.9;

  double at(long t) const;  // mu_t for t >= 1; must be < 1
};

struct NadamConfig {
  double lr = 0.001;
  MuSchedule mu;        // first-moment schedule
  double nu = 0.999;    // second-moment decay
  double eps = 1e-8;
};

struct NadamState {
  Tensor m, n;
  long t = 0;
  double mu_prod = 1.0;  // running product of mu_1..mu_t
  explicit NadamState(const Shape& shape) : m(shape), n(shape) {}
};
void nadam_step(NadamState& s, Tensor& theta, const Tensor& g, const NadamConfig& cfg);

// ---------------------------------------------------------------------------
// Network-level optimizer: one moment slot per parameter tensor, one shared
// step counter. Hyperparameters mirror the training config file keys.
// ---------------------------------------------------------------------------

enum class OptKind { sgd, momentum, nesterov, adam, nadam };

OptKind opt_kind_from_string(const std::string& name);
std::string to_string(OptKind kind);

struct OptimizerConfig {
  OptKind kind = OptKind::nadam;
  double lr = 1e-4;
  double mu = 0.9;  // momentum / nesterov / nadam first-moment constant
  MuSchedule::Kind mu_schedule = MuSchedule::Kind::constant;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double nu = 0.999;
  double eps = 1e-8;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {}

  const OptimizerConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }

  // Slots are created lazily, keyed by position; callers must pass the same
  // parameter list in the same order every step.
  void step(const std::vector<std::pair<Tensor*, const Tensor*>>& params_and_grads);

  // Serialization hooks for checkpoints.
  long step_count() const { return t_; }
  std::size_t slot_count() const { return slots_m_.size(); }
  const Tensor& slot_m(std::size_t i) const { return slots_m_[i]; }
  const Tensor& slot_v(std::size_t i) const { return slots_v_[i]; }
  double mu_prod() const { return mu_prod_; }
  void restore(long t, double mu_prod, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  OptimizerConfig cfg_;
  long t_ = 0;
  double mu_prod_ = 1.0;
  std::vector<Tensor> slots_m_;
  std::vector<Tensor> slots_v_;
};

}  // namespace dvk
