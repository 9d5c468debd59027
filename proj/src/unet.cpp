#include "dvk/unet.hpp"

#include <algorithm>
#include <memory>

namespace dvk {

namespace {

std::string two_digit(int k) { return k < 10 ? "0" + std::to_string(k) : std::to_string(k); }

}  // namespace

Network build_unet(const UNetConfig& cfg) {
  if (cfg.filter_divisor < 1) throw ValueError("unet: filter divisor must be >= 1");
  const auto filters = [&](int full) {
    return static_cast<std::size_t>(std::max(1, full / cfg.filter_divisor));
  };

  Rng rng(cfg.seed);
  Network net;
  int conv_index = 0;

  const auto add_conv_block = [&](std::size_t kh, std::size_t kw, std::size_t c_in,
                                  std::size_t c_out, bool activation_norm) {
    ++conv_index;
    const RegSpec reg = conv_index == 1 ? RegSpec::l1(cfg.l1_first) : RegSpec::l2(cfg.l2_rest);
    auto conv = std::make_unique<Conv2DLayer>(kh, kw, c_in, c_out, reg);
    conv->set_name("conv" + two_digit(conv_index));
    conv->weights = init_lecun({kh, kw, c_in, c_out}, kh * kw * c_in, rng, cfg.init);
    net.add(std::move(conv));
    if (activation_norm) {
      auto relu = std::make_unique<LeakyReLULayer>(cfg.leak_alpha);
      relu->set_name("lrelu" + two_digit(conv_index));
      net.add(std::move(relu));
      auto bn = std::make_unique<BatchNormLayer>(c_out, cfg.bn_eps, cfg.bn_momentum);
      bn->set_name("bn" + two_digit(conv_index));
      net.add(std::move(bn));
    }
  };

  const std::size_t f8 = filters(8), f16 = filters(16), f32 = filters(32), f64 = filters(64);

  net.add(std::make_unique<ReshapeLayer>(Shape{27, 27, 1}));
  net.add(std::make_unique<UpsampleLayer>(2, 2));

  add_conv_block(3, 3, 1, f8, true);     // C1  -> (52,52)
  add_conv_block(3, 3, f8, f8, true);    // C2  -> (50,50)
  add_conv_block(3, 3, f8, f16, true);   // C3  -> (48,48)
  add_conv_block(3, 3, f16, f16, true);  // C4  -> (46,46)
  add_conv_block(3, 3, f16, f32, true);  // C5  -> (44,44)
  add_conv_block(3, 3, f32, f32, true);  // C6  -> (42,42)
  const int lateral_source = static_cast<int>(net.size()) - 1;  // bn06 output

  net.add(std::make_unique<AvgPoolLayer>(2, 2, 2, 2));  // -> (21,21)

  add_conv_block(3, 3, f32, f32, true);  // C7  -> (19,19)
  add_conv_block(3, 3, f32, f32, true);  // C8  -> (17,17)
  add_conv_block(3, 3, f32, f64, true);  // C9  -> (15,15)
  add_conv_block(3, 3, f64, f64, true);  // C10 -> (13,13)
  add_conv_block(3, 3, f64, f32, true);  // C11 -> (11,11)
  add_conv_block(3, 3, f32, f32, true);  // C12 -> (9,9)
  add_conv_block(3, 3, f32, f32, true);  // C13 -> (7,7)

  net.add(std::make_unique<DropoutLayer>(cfg.drop_rate, Rng::mix(cfg.seed, 0xD80D)));
  net.add(std::make_unique<UpsampleLayer>(6, 6));       // -> (42,42)
  net.add(std::make_unique<CenterCropLayer>(39, 39));   // -> (39,39)
  net.add(std::make_unique<ConcatSkipLayer>(lateral_source));  // -> (39,39, 2*f32)

  add_conv_block(3, 3, f32 + f32, f32, true);  // C14 -> (37,37)
  add_conv_block(3, 3, f32, f16, true);        // C15 -> (35,35)
  add_conv_block(3, 3, f16, f16, true);        // C16 -> (33,33)
  add_conv_block(3, 3, f16, f8, true);         // C17 -> (31,31)
  add_conv_block(3, 3, f8, f8, true);          // C18 -> (29,29)
  add_conv_block(3, 3, f8, filters(4), true);  // C19 -> (27,27)
  add_conv_block(1, 1, filters(4), 1, false);  // C20 -> (27,27,1), sigmoid next

  net.add(std::make_unique<SigmoidLayer>());
  net.add(std::make_unique<ReshapeLayer>(Shape{9, 9, 9}));
  return net;
}

long ParamCountReport::count_for(const std::string& layer_name) const {
  for (const LayerCount& c : per_layer)
    if (c.name == layer_name) return c.trainable;
  throw ValueError("count_params: no layer named " + layer_name);
}

ParamCountReport count_params(Network& net) {
  ParamCountReport report;
  for (std::size_t i = 0; i < net.size(); ++i) {
    Layer& l = net.layer(i);
    LayerCount entry;
    entry.name = l.name();
    for (ParamRef& ref : l.params()) entry.trainable += static_cast<long>(ref.value->size());
    for (ParamRef& ref : l.state()) {
      if (ref.name == "run_init") continue;  // bookkeeping flag, not a statistic
      entry.non_trainable += static_cast<long>(ref.value->size());
    }
    if (entry.trainable || entry.non_trainable) report.per_layer.push_back(entry);
    report.trainable_total += entry.trainable;
    report.non_trainable_total += entry.non_trainable;
  }
  return report;
}

}  // namespace dvk
