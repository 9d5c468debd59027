#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dvk/optim.hpp"
#include "dvk/rng.hpp"
#include "dvk/tensor.hpp"

namespace dvk {

enum class Mode { train, infer };

enum class InitKind { lecun_uniform, lecun_normal };

// LeCun initialization: uniform on (-sqrt(3/fan_in), +sqrt(3/fan_in)) or
// normal with variance 1/fan_in. Deterministic given the rng state.
Tensor init_lecun(const Shape& shape, std::size_t fan_in, Rng& rng, InitKind kind);

// Named view into a layer's parameter (or persistent state) tensor.
// `grad` is null for non-trainable state; `regularizable` marks weights
// (never biases or batch-norm parameters).
struct ParamRef {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
  bool regularizable = false;
};

// Convention: every tensor flowing through a Network carries a leading batch
// axis. Image-like data is [n, h, w, c]; vector data is [n, d].
class Layer {
 public:
  virtual ~Layer() = default;

  const std::string& name() const { return name_; }
  void set_name(std::string name) { name_ = std::move(name); }

  virtual Tensor forward(const Tensor& x, Mode mode) = 0;
  // Uses the cache left by the matching forward; fills parameter gradients
  // (assignment, not accumulation) and returns the gradient w.r.t. the input.
  virtual Tensor backward(const Tensor& grad_out) = 0;

  virtual std::vector<ParamRef> params() { return {}; }  // trainable
  virtual std::vector<ParamRef> state() { return {}; }   // non-trainable, persisted
  virtual RegSpec reg_spec() const { return RegSpec::none(); }

  void zero_grads();

 protected:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  void require_cache(bool have, const char* what) const;

 private:
  std::string name_;
};

// Layers consuming a second input wired from an earlier layer's output.
class SkipLayer : public Layer {
 public:
  int source() const { return source_; }
  virtual Tensor forward_skip(const Tensor& deep, const Tensor& skip, Mode mode) = 0;
  // Returns the gradient w.r.t. the deep input and writes the gradient
  // w.r.t. the skip input (already padded back to the source shape).
  virtual Tensor backward_skip(const Tensor& grad_out, Tensor& grad_skip) = 0;

  Tensor forward(const Tensor&, Mode) final;
  Tensor backward(const Tensor&) final;

 protected:
  SkipLayer(std::string name, int source) : Layer(std::move(name)), source_(source) {}

 private:
  int source_;
};

// ---------------------------------------------------------------------------

class DenseLayer : public Layer {
 public:
  enum class Activation { identity, sigmoid };

  DenseLayer(std::size_t in, std::size_t out, Activation act = Activation::identity);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<ParamRef> params() override;
  RegSpec reg_spec() const override { return reg_; }
  void set_reg(RegSpec reg) { reg_ = reg; }

  Tensor weights, bias;  // weights [out, in], bias [out]
  Tensor grad_weights, grad_bias;

 private:
  std::size_t in_, out_;
  Activation act_;
  RegSpec reg_;
  Tensor cached_input_, cached_output_;
  bool input_was_vector_ = false;
  bool have_cache_ = false;
};

class Conv2DLayer : public Layer {
 public:
  // Valid (unpadded) cross-correlation; kernel dims must be odd.
  Conv2DLayer(std::size_t kh, std::size_t kw, std::size_t c_in, std::size_t c_out,
              RegSpec reg = RegSpec::none());

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<ParamRef> params() override;
  RegSpec reg_spec() const override { return reg_; }

  std::size_t kh() const { return kh_; }
  std::size_t kw() const { return kw_; }
  std::size_t c_in() const { return c_in_; }
  std::size_t c_out() const { return c_out_; }

  Tensor weights, bias;  // weights [kh, kw, c_in, c_out], bias [c_out]
  Tensor grad_weights, grad_bias;

 private:
  std::size_t kh_, kw_, c_in_, c_out_;
  RegSpec reg_;
  Tensor cached_input_;
  bool input_was_rank3_ = false;
  bool have_cache_ = false;
};

class LeakyReLULayer : public Layer {
 public:
  explicit LeakyReLULayer(double alpha);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  double alpha() const { return alpha_; }

 private:
  double alpha_;
  std::vector<std::uint8_t> nonneg_;  // x >= 0 mask; slope at 0 is 1
  Shape in_shape_;
  bool have_cache_ = false;
};

class SigmoidLayer : public Layer {
 public:
  SigmoidLayer() : Layer("sigmoid") {}
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor cached_output_;
  bool have_cache_ = false;
};

// Softmax over the trailing axis, computed with per-row max subtraction.
class SoftmaxLayer : public Layer {
 public:
  SoftmaxLayer() : Layer("softmax") {}
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor cached_output_;
  bool have_cache_ = false;
};

// Per-channel batch normalization over [n, h, w, c] (statistics across
// n*h*w positions) or [n, c] (across n). Running statistics are an
// exponential moving average updated in train mode only.
class BatchNormLayer : public Layer {
 public:
  BatchNormLayer(std::size_t channels, double eps = 1e-3, double momentum = 0.99);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;
  std::vector<ParamRef> params() override;
  std::vector<ParamRef> state() override;

  std::size_t channels() const { return channels_; }
  double eps() const { return eps_; }
  bool stats_initialized() const { return run_init_[0] != 0.0; }

  Tensor gamma, beta;
  Tensor grad_gamma, grad_beta;
  Tensor run_mean, run_var;

 private:
  std::size_t channels_;
  double eps_, momentum_;
  Tensor run_init_;  // [1], 0 or 1; persisted alongside the running stats

  // train-mode cache
  Tensor cached_xhat_;
  std::vector<double> cached_var_, cached_inv_std_;
  std::size_t cached_m_ = 0;
  bool have_cache_ = false;
};

// Inverted dropout: train mode scales kept entries by 1/(1-p) so that
// inference is the identity map, bitwise.
class DropoutLayer : public Layer {
 public:
  DropoutLayer(double drop_rate, std::uint64_t seed);

  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

  double drop_rate() const { return p_; }
  // Test hook: keep reusing the current mask instead of redrawing.
  void freeze_mask(bool frozen) { frozen_ = frozen; }

 private:
  double p_;
  Rng rng_;
  std::vector<std::uint8_t> keep_;
  Shape in_shape_;
  Mode cached_mode_ = Mode::train;
  bool frozen_ = false;
  bool have_cache_ = false;
};

class AvgPoolLayer : public Layer {
 public:
  AvgPoolLayer(std::size_t ph, std::size_t pw, std::size_t sh, std::size_t sw);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::size_t ph_, pw_, sh_, sw_;
  Shape in_shape_;
  bool have_cache_ = false;
};

class MaxPoolLayer : public Layer {
 public:
  MaxPoolLayer(std::size_t ph, std::size_t pw, std::size_t sh, std::size_t sw);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::size_t ph_, pw_, sh_, sw_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;  // flat input index per output entry
  bool have_cache_ = false;
};

// Nearest-neighbour upsampling by integer factors; backward sums each block.
class UpsampleLayer : public Layer {
 public:
  UpsampleLayer(std::size_t fh, std::size_t fw);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::size_t fh_, fw_;
  Shape in_shape_;
  bool have_cache_ = false;
};

// Row-major reinterpretation of the per-sample shape; the batch axis stays.
class ReshapeLayer : public Layer {
 public:
  explicit ReshapeLayer(Shape per_sample_target);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Shape target_;
  Shape in_shape_;
  bool have_cache_ = false;
};

class CenterCropLayer : public Layer {
 public:
  CenterCropLayer(std::size_t th, std::size_t tw);
  Tensor forward(const Tensor& x, Mode mode) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::size_t th_, tw_;
  Shape in_shape_;
  bool have_cache_ = false;
};

// Elementwise residual join; backward passes the gradient unchanged to both
// branches.
class AddSkipLayer : public SkipLayer {
 public:
  explicit AddSkipLayer(int source) : SkipLayer("add_skip", source) {}
  Tensor forward_skip(const Tensor& deep, const Tensor& skip, Mode mode) override;
  Tensor backward_skip(const Tensor& grad_out, Tensor& grad_skip) override;

 private:
  Shape skip_shape_;
  bool have_cache_ = false;
};

// Channel concatenation [deep | skip]. A skip branch with larger spatial
// dims is center-cropped to the deep branch; its gradient is zero-padded
// back on the way down.
class ConcatSkipLayer : public SkipLayer {
 public:
  explicit ConcatSkipLayer(int source) : SkipLayer("concat_skip", source) {}
  Tensor forward_skip(const Tensor& deep, const Tensor& skip, Mode mode) override;
  Tensor backward_skip(const Tensor& grad_out, Tensor& grad_skip) override;

 private:
  Shape deep_shape_, skip_shape_;
  bool have_cache_ = false;
};

// ---------------------------------------------------------------------------

// Ordered layer graph with optional skip edges back to earlier layers.
// Exclusively owned during forward/backward; single-threaded and
// bit-deterministic.
class Network {
 public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  int add(std::unique_ptr<Layer> layer);

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  Mode mode() const { return mode_; }
  void set_mode(Mode mode);

  Tensor forward(const Tensor& batch);
  // Needs the trace of the immediately preceding forward in the same mode;
  // fills every layer's gradients and returns the gradient w.r.t. the input.
  Tensor backward(const Tensor& grad_loss);

  void zero_grads();
  // Adds each layer's weight-decay term to the gradients of its
  // regularizable parameters.
  void apply_regularization();

  // Runs a forward pass and reports each layer's output shape.
  std::vector<Shape> layer_output_shapes(const Tensor& batch);

  // Parameter views with layer-qualified names ("conv01/weight").
  std::vector<ParamRef> trainable_params();
  std::vector<ParamRef> persistent_state();

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<bool> is_skip_source_;
  std::vector<Tensor> retained_;  // outputs of skip-source layers
  Mode mode_ = Mode::train;
  Mode trace_mode_ = Mode::train;
  bool trace_valid_ = false;
};

}  // namespace dvk
