#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dvk/layers.hpp"

namespace dvk {

// Canonical U-Net for 9x9x9 density -> 9x9x9 dose regression:
//   Input (9,9,9) -> Reshape (27,27,1) -> Upsample x2 (54,54,1)
//   -> C1[8] .. C6[32] (42,42,32)            <- lateral source
//   -> AvgPool 2x2/2 (21,21,32) -> C7 .. C13 (7,7,32)
//   -> Dropout(0.2) -> Upsample x6 (42,42,32) -> CenterCrop (39,39,32)
//   -> Concat with center-cropped C6 output (39,39,64)
//   -> C14[32] .. C19[4] (27,27,4) -> C20 1x1[1] + Sigmoid -> Reshape (9,9,9)
// Every conv C1..C19 is followed by LeakyReLU(alpha) then BatchNorm; C1
// carries L1 weight decay, C2..C20 L2.
struct UNetConfig {
  double leak_alpha = 5.5;
  double drop_rate = 0.2;
  double l1_first = 0.005;
  double l2_rest = 0.001;
  double bn_eps = 1e-3;
  double bn_momentum = 0.99;
  InitKind init = InitKind::lecun_uniform;
  std::uint64_t seed = 0;
  // Divides every filter count (floor, min 1); 1 is the full-size network.
  int filter_divisor = 1;
};

Network build_unet(const UNetConfig& cfg);

struct LayerCount {
  std::string name;
  long trainable = 0;
  long non_trainable = 0;
};

struct ParamCountReport {
  std::vector<LayerCount> per_layer;
  long trainable_total = 0;
  long non_trainable_total = 0;

  // Printed footer of the architecture table; inconsistent with the sum of
  // its own rows under any batch-norm accounting, kept as annotations.
  static constexpr long table_total = 182017;
  static constexpr long table_trainable = 180985;
  static constexpr long table_non_trainable = 1032;
  // The table prints 32800 for the conv after the concat; channel algebra
  // (3*3*64*32 + 32) gives 18464.
  static constexpr long table_conv14 = 32800;

  long count_for(const std::string& layer_name) const;
};

ParamCountReport count_params(Network& net);

}  // namespace dvk
