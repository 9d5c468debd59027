#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "dvk/checkpoint.hpp"
#include "dvk/dosimetry.hpp"
#include "dvk/optim.hpp"
#include "dvk/unet.hpp"

namespace dvk {

// Training protocol configuration; file form is plain `key = value` lines
// (keys: lr, batch_size, optimizer, beta1, beta2, nu, mu, epsilon, loss,
// patience, min_delta, lr_factor, max_epochs, seed, split).
struct TrainConfig {
  OptimizerConfig opt;  // nadam, lr 1e-4
  int batch_size = 128;
  int max_epochs = 308;
  int patience = 15;
  double min_delta = 1e-6;
  double lr_factor = 0.5;
  std::string loss = "iou";
  std::uint64_t seed = 0;
  double split = 0.7;

  void validate() const;
};

TrainConfig read_train_config(const std::filesystem::path& path);

// One-time plateau halving followed by early stop, both driven by the same
// patience window on the validation loss.
class PlateauScheduler {
 public:
  enum class Action { none, halve_lr, stop };

  PlateauScheduler(int patience, double min_delta)
      : patience_(patience), min_delta_(min_delta) {}

  Action observe(double val_loss) {
    if (best_ - val_loss >= min_delta_) {
      best_ = val_loss;
      streak_ = 0;
      return Action::none;
    }
    if (++streak_ < patience_) return Action::none;
    streak_ = 0;
    if (!halved_) {
      halved_ = true;
      return Action::halve_lr;
    }
    return Action::stop;
  }

  bool halved() const { return halved_; }

 private:
  int patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int streak_ = 0;
  bool halved_ = false;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0, val_loss = 0.0;
  double train_iou = 0.0, val_iou = 0.0;
  double train_mae = 0.0, val_mae = 0.0;
  double train_mse = 0.0, val_mse = 0.0;
};

std::string epoch_csv_header();
std::string to_csv(const EpochRecord& r);

// In-memory dataset with per-split normalization already applied.
struct Dataset {
  std::vector<Tensor> density, dose;  // normalized
  std::vector<std::string> tissue;
  std::vector<std::uint8_t> in_train;
  NormalizationParams norm_train_density, norm_train_dose;
  NormalizationParams norm_val_density, norm_val_dose;

  std::vector<std::size_t> split_indices(bool train) const;
};

Dataset load_dataset(const Manifest& manifest);

struct TrainOutcome {
  std::vector<EpochRecord> history;  // epoch 0 = untrained baseline
  CheckpointMeta meta;               // best-validation epoch
  int halved_at_epoch = 0;           // 0 = never
  bool stopped_early = false;
};

// Runs the full protocol: seeded shuffling, mini batches, backward pass,
// weight decay, optimizer step, per-epoch validation, one-time plateau
// halving, early stop, best-checkpoint selection. The network is left
// holding the best-validation parameters. `log`, when given, receives one
// CSV line per epoch.
TrainOutcome train_unet(Network& net, Optimizer& optimizer, const Dataset& data,
                        const TrainConfig& cfg, const UNetConfig& unet_cfg,
                        std::ostream* log = nullptr);

struct EvalRow {
  std::string label;
  std::size_t samples = 0;
  double iou = 0.0, mae = 0.0, mse = 0.0;
};

// Per-tissue metric grid over one split, in infer mode; the trailing "total"
// row pools every sample of the split (not the mean of the class rows).
std::vector<EvalRow> evaluate_by_tissue(Network& net, const Dataset& data, bool train_split,
                                        int batch_size);

// Same grid for an arbitrary predictor (batch density -> batch dose).
std::vector<EvalRow> evaluate_rows(const std::function<Tensor(const Tensor&)>& predict,
                                   const Dataset& data, bool train_split, int batch_size);

// Infer-mode forward (dropout off, running batch-norm statistics).
Tensor predict_batch(Network& net, const Tensor& normalized_density_batch);

}  // namespace dvk
