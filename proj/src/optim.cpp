#include "dvk/optim.hpp"

#include <cmath>

namespace dvk {

void apply_regularization(Tensor& grad, const Tensor& param, const RegSpec& reg) {
  if (reg.gamma < 0.0) throw ValueError("regularization strength must be >= 0");
  require_same_shape(grad, param, "apply_regularization");
  switch (reg.kind) {
    case RegSpec::Kind::none:
      return;
    case RegSpec::Kind::l2:
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += 2.0 * reg.gamma * param[i];
      return;
    case RegSpec::Kind::l1:
      for (std::size_t i = 0; i < grad.size(); ++i) {
        const double p = param[i];
        grad[i] += reg.gamma * (p > 0.0 ? 1.0 : (p < 0.0 ? -1.0 : 0.0));
      }
      return;
  }
}

namespace {

void check_step_inputs(const Tensor& theta, const Tensor& g, const char* what) {
  require_same_shape(theta, g, what);
  g.ensure_finite(what);
}

void adam_update(Tensor& theta, const Tensor& g, Tensor& m, Tensor& v, long t,
                 const AdamConfig& cfg) {
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * (g[i] * g[i]);
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    theta[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

// One Nesterov-Adam update. mu_prod_t is the running product mu_1..mu_t
// (including mu_t); the second-moment correction keeps the printed leading nu.
void nadam_update(Tensor& theta, const Tensor& g, Tensor& m, Tensor& n, long t, double mu_t,
                  double mu_next, double mu_prod_t, double nu, double lr, double eps) {
  const double denom_t = 1.0 - mu_prod_t;
  const double denom_next = 1.0 - mu_prod_t * mu_next;
  const double nu_corr = 1.0 - std::pow(nu, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = mu_t * m[i] + (1.0 - mu_t) * g[i];
    n[i] = nu * n[i] + (g[i] * g[i]) * (1.0 - nu);
    const double m_hat = mu_next * m[i] / denom_next + (1.0 - mu_t) * g[i] / denom_t;
    const double n_hat = nu * n[i] / nu_corr;
    theta[i] -= lr * m_hat / (std::sqrt(n_hat) + eps);
  }
}

}  // namespace

void sgd_step(Tensor& theta, const Tensor& g, double lr) {
  check_step_inputs(theta, g, "sgd_step");
  if (!(lr > 0.0)) throw ValueError("sgd_step: learning rate must be > 0");
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * g[i];
}

void momentum_step(MomentumState& s, Tensor& theta, const Tensor& g, double lr, double mu) {
  check_step_inputs(theta, g, "momentum_step");
  require_same_shape(s.m, theta, "momentum_step state");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    s.m[i] = mu * s.m[i] + g[i];
    theta[i] -= lr * s.m[i];
  }
}

void nesterov_step(NesterovState& s, Tensor& theta, const Tensor& g, double lr, double mu,
                   double mu_next) {
  check_step_inputs(theta, g, "nesterov_step");
  require_same_shape(s.m, theta, "nesterov_step state");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    s.m[i] = mu * s.m[i] + lr * g[i];
    theta[i] -= mu_next * s.m[i] + lr * g[i];
  }
}

void adam_step(AdamState& s, Tensor& theta, const Tensor& g, const AdamConfig& cfg) {
  check_step_inputs(theta, g, "adam_step");
  require_same_shape(s.m, theta, "adam_step state");
  s.t += 1;
  adam_update(theta, g, s.m, s.v, s.t, cfg);
}

double MuSchedule::at(long t) const {
  double value = mu;
  if (kind == Kind::warmup)
    value = mu * (1.0 - 0.5 * std::pow(0.96, static_cast<double>(t) / 250.0));
  if (!(value < 1.0))
    throw ValueError("nadam: mu_t >= 1 at t = " + std::to_string(t) +
                     ", bias-correction denominator degenerates");
  return value;
}

void nadam_step(NadamState& s, Tensor& theta, const Tensor& g, const NadamConfig& cfg) {
  check_step_inputs(theta, g, "nadam_step");
  require_same_shape(s.m, theta, "nadam_step state");
  s.t += 1;
  const double mu_t = cfg.mu.at(s.t);
  const double mu_next = cfg.mu.at(s.t + 1);
  s.mu_prod *= mu_t;
  nadam_update(theta, g, s.m, s.n, s.t, mu_t, mu_next, s.mu_prod, cfg.nu, cfg.lr, cfg.eps);
}

OptKind opt_kind_from_string(const std::string& name) {
  if (name == "sgd") return OptKind::sgd;
  if (name == "momentum") return OptKind::momentum;
  if (name == "nesterov") return OptKind::nesterov;
  if (name == "adam") return OptKind::adam;
  if (name == "nadam") return OptKind::nadam;
  throw ValueError("unknown optimizer: " + name);
}

std::string to_string(OptKind kind) {
  switch (kind) {
    case OptKind::sgd: return "sgd";
    case OptKind::momentum: return "momentum";
    case OptKind::nesterov: return "nesterov";
    case OptKind::adam: return "adam";
    case OptKind::nadam: return "nadam";
  }
  return "?";
}

void Optimizer::step(const std::vector<std::pair<Tensor*, const Tensor*>>& params_and_grads) {
  if (slots_m_.empty()) {
    for (const auto& [p, g] : params_and_grads) {
      slots_m_.emplace_back(p->shape());
      slots_v_.emplace_back(p->shape());
      (void)g;
    }
  } else if (slots_m_.size() != params_and_grads.size()) {
    throw ValueError("optimizer: parameter list changed between steps");
  }

  t_ += 1;
  double mu_t = 0.0, mu_next = 0.0;
  if (cfg_.kind == OptKind::nadam) {
    const MuSchedule sched{cfg_.mu_schedule, cfg_.mu};
    mu_t = sched.at(t_);
    mu_next = sched.at(t_ + 1);
    mu_prod_ *= mu_t;
  }

  for (std::size_t k = 0; k < params_and_grads.size(); ++k) {
    Tensor& theta = *params_and_grads[k].first;
    const Tensor& g = *params_and_grads[k].second;
    check_step_inputs(theta, g, "optimizer step");
    require_same_shape(slots_m_[k], theta, "optimizer slot");
    switch (cfg_.kind) {
      case OptKind::sgd:
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= cfg_.lr * g[i];
        break;
      case OptKind::momentum: {
        Tensor& m = slots_m_[k];
        for (std::size_t i = 0; i < theta.size(); ++i) {
          m[i] = cfg_.mu * m[i] + g[i];
          theta[i] -= cfg_.lr * m[i];
        }
        break;
      }
      case OptKind::nesterov: {
        Tensor& m = slots_m_[k];
        for (std::size_t i = 0; i < theta.size(); ++i) {
          m[i] = cfg_.mu * m[i] + cfg_.lr * g[i];
          theta[i] -= cfg_.mu * m[i] + cfg_.lr * g[i];
        }
        break;
      }
      case OptKind::adam: {
        const AdamConfig acfg{cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps};
        adam_update(theta, g, slots_m_[k], slots_v_[k], t_, acfg);
        break;
      }
      case OptKind::nadam:
        nadam_update(theta, g, slots_m_[k], slots_v_[k], t_, mu_t, mu_next, mu_prod_, cfg_.nu,
                     cfg_.lr, cfg_.eps);
        break;
    }
  }
}

void Optimizer::restore(long t, double mu_prod, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != v.size()) throw ValueError("optimizer restore: slot count mismatch");
  t_ = t;
  mu_prod_ = mu_prod;
  slots_m_ = std::move(m);
  slots_v_ = std::move(v);
}

}  // namespace dvk
