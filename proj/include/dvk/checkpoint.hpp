#pragma once

#include <filesystem>
#include <optional>

#include "dvk/normalize.hpp"
#include "dvk/optim.hpp"
#include "dvk/unet.hpp"

namespace dvk {

// DVKC checkpoint file, version 1:
//   bytes 0..3  magic "DVKC"
//   u16 LE      format version (1)
//   u32 LE      header length, then UTF-8 JSON header (config echo, epoch,
//               best validation loss, optimizer scalars, normalization)
//   u32 LE      block count, then blocks of
//               u32 LE name length + name bytes + a DVKT-format tensor
// Parameter blocks cover trainable parameters, batch-norm running state and,
// when an optimizer is attached, its moment buffers. Reload reproduces
// forward outputs bitwise.

struct CheckpointMeta {
  UNetConfig unet;
  int epoch = 0;
  double best_val_loss = 0.0;
  // Train-split normalization used to feed the network; stored so that a
  // checkpoint is self-contained for prediction.
  std::optional<NormalizationParams> norm_density;
  std::optional<NormalizationParams> norm_dose;
};

void save_checkpoint(const std::filesystem::path& path, Network& net, const CheckpointMeta& meta,
                     const Optimizer* optimizer = nullptr);

struct LoadedCheckpoint {
  Network net;
  CheckpointMeta meta;
  std::optional<Optimizer> optimizer;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Header echo without the payload; for `inspect`.
std::string checkpoint_header_json(const std::filesystem::path& path);

}  // namespace dvk
