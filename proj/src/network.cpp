#include <set>

#include "dvk/layers.hpp"

namespace dvk {

int Network::add(std::unique_ptr<Layer> layer) {
  const int idx = static_cast<int>(layers_.size());
  if (auto* skip = dynamic_cast<SkipLayer*>(layer.get())) {
    if (skip->source() < 0 || skip->source() >= idx)
      throw ValueError(layer->name() + ": skip source " + std::to_string(skip->source()) +
                       " must refer to an earlier layer");
  }
  if (layer->name().empty()) layer->set_name("layer" + std::to_string(idx));
  for (const auto& existing : layers_)
    if (existing->name() == layer->name()) {
      layer->set_name(layer->name() + "_" + std::to_string(idx));
      break;
    }
  layers_.push_back(std::move(layer));
  is_skip_source_.assign(layers_.size(), false);
  for (const auto& l : layers_)
    if (auto* skip = dynamic_cast<const SkipLayer*>(l.get()))
      is_skip_source_[static_cast<std::size_t>(skip->source())] = true;
  return idx;
}

void Network::set_mode(Mode mode) {
  mode_ = mode;
  trace_valid_ = false;
}

Tensor Network::forward(const Tensor& batch) {
  if (layers_.empty()) throw ValueError("network: no layers");
  retained_.assign(layers_.size(), Tensor());
  Tensor x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& l = *layers_[i];
    if (auto* skip = dynamic_cast<SkipLayer*>(&l)) {
      const Tensor& src = retained_[static_cast<std::size_t>(skip->source())];
      if (src.size() == 0)
        throw ValueError(l.name() + ": skip source output not available");
      x = skip->forward_skip(x, src, mode_);
    } else {
      x = l.forward(x, mode_);
    }
    x.ensure_finite(l.name().c_str());
    if (is_skip_source_[i]) retained_[i] = x;
  }
  trace_valid_ = true;
  trace_mode_ = mode_;
  return x;
}

Tensor Network::backward(const Tensor& grad_loss) {
  if (!trace_valid_)
    throw ValueError("network backward: stale trace; run forward first");
  if (trace_mode_ != mode_)
    throw ValueError("network backward: mode changed since the last forward");

  // pending[i] collects the gradient arriving at layer i's output; a skip
  // source receives one term from the chain and one from each consumer.
  std::vector<Tensor> pending(layers_.size());
  pending.back() = grad_loss;
  Tensor grad_input;

  auto accumulate = [](Tensor& slot, Tensor&& g) {
    if (slot.size() == 0) {
      slot = std::move(g);
    } else {
      require_same_shape(slot, g, "network gradient accumulation");
      for (std::size_t i = 0; i < slot.size(); ++i) slot[i] += g[i];
    }
  };

  for (std::size_t k = layers_.size(); k-- > 0;) {
    if (pending[k].size() == 0)
      throw ValueError(layers_[k]->name() + ": no gradient reached this layer");
    Tensor g_in;
    if (auto* skip = dynamic_cast<SkipLayer*>(layers_[k].get())) {
      Tensor g_skip;
      g_in = skip->backward_skip(pending[k], g_skip);
      accumulate(pending[static_cast<std::size_t>(skip->source())], std::move(g_skip));
    } else {
      g_in = layers_[k]->backward(pending[k]);
    }
    g_in.ensure_finite(layers_[k]->name().c_str());
    pending[k] = Tensor();  // release
    if (k == 0)
      grad_input = std::move(g_in);
    else
      accumulate(pending[k - 1], std::move(g_in));
  }
  trace_valid_ = false;
  return grad_input;
}

void Network::zero_grads() {
  for (auto& l : layers_) l->zero_grads();
}

void Network::apply_regularization() {
  for (auto& l : layers_) {
    const RegSpec reg = l->reg_spec();
    if (reg.kind == RegSpec::Kind::none) continue;
    for (ParamRef& ref : l->params())
      if (ref.regularizable && ref.grad) dvk::apply_regularization(*ref.grad, *ref.value, reg);
  }
}

std::vector<Shape> Network::layer_output_shapes(const Tensor& batch) {
  if (layers_.empty()) throw ValueError("network: no layers");
  std::vector<Shape> shapes;
  retained_.assign(layers_.size(), Tensor());
  Tensor x = batch;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& l = *layers_[i];
    if (auto* skip = dynamic_cast<SkipLayer*>(&l))
      x = skip->forward_skip(x, retained_[static_cast<std::size_t>(skip->source())], mode_);
    else
      x = l.forward(x, mode_);
    if (is_skip_source_[i]) retained_[i] = x;
    shapes.push_back(x.shape());
  }
  trace_valid_ = false;
  return shapes;
}

std::vector<ParamRef> Network::trainable_params() {
  std::vector<ParamRef> out;
  std::set<std::string> seen;
  for (auto& l : layers_)
    for (ParamRef ref : l->params()) {
      ref.name = l->name() + "/" + ref.name;
      if (!seen.insert(ref.name).second)
        throw ValueError("duplicate parameter name: " + ref.name);
      out.push_back(ref);
    }
  return out;
}

std::vector<ParamRef> Network::persistent_state() {
  std::vector<ParamRef> out;
  for (auto& l : layers_)
    for (ParamRef ref : l->state()) {
      ref.name = l->name() + "/" + ref.name;
      out.push_back(ref);
    }
  return out;
}

}  // namespace dvk
