#include "dvk/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "dvk/losses.hpp"
#include "dvk/rng.hpp"
#include "dvk/tensor_io.hpp"

namespace dvk {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValueError("train config: batch_size must be >= 1");
  if (max_epochs < 0) throw ValueError("train config: max_epochs must be >= 0");
  if (patience < 1) throw ValueError("train config: patience must be >= 1");
  if (!(lr_factor > 0.0 && lr_factor < 1.0))
    throw ValueError("train config: lr_factor must lie in (0, 1)");
  if (!(min_delta >= 0.0)) throw ValueError("train config: min_delta must be >= 0");
  if (!(split > 0.0 && split < 1.0)) throw ValueError("train config: split must lie in (0, 1)");
  if (!(opt.lr > 0.0)) throw ValueError("train config: lr must be > 0");
}

TrainConfig read_train_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open train config: " + path.string());
  TrainConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("train config line " + std::to_string(line_no) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "lr") cfg.opt.lr = std::stod(value);
      else if (key == "batch_size") cfg.batch_size = std::stoi(value);
      else if (key == "optimizer") cfg.opt.kind = opt_kind_from_string(value);
      else if (key == "beta1") cfg.opt.beta1 = std::stod(value);
      else if (key == "beta2") cfg.opt.beta2 = std::stod(value);
      else if (key == "nu") cfg.opt.nu = std::stod(value);
      else if (key == "mu") cfg.opt.mu = std::stod(value);
      else if (key == "mu_schedule")
        cfg.opt.mu_schedule = value == "warmup" ? MuSchedule::Kind::warmup
                                                : MuSchedule::Kind::constant;
      else if (key == "epsilon") cfg.opt.eps = std::stod(value);
      else if (key == "loss") cfg.loss = value;
      else if (key == "patience") cfg.patience = std::stoi(value);
      else if (key == "min_delta") cfg.min_delta = std::stod(value);
      else if (key == "lr_factor") cfg.lr_factor = std::stod(value);
      else if (key == "max_epochs") cfg.max_epochs = std::stoi(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "split") cfg.split = std::stod(value);
      else throw FormatError("train config: unknown key '" + key + "'");
    } catch (const std::invalid_argument&) {
      throw FormatError("train config: bad value for '" + key + "': " + value);
    }
  }
  cfg.validate();
  return cfg;
}

std::string epoch_csv_header() {
  return "epoch,lr,train_loss,val_loss,train_iou,val_iou,train_mae,val_mae,train_mse,val_mse";
}

std::string to_csv(const EpochRecord& r) {
  char buf[400];
  std::snprintf(buf, sizeof(buf),
                "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.epoch, r.lr,
                r.train_loss, r.val_loss, r.train_iou, r.val_iou, r.train_mae, r.val_mae,
                r.train_mse, r.val_mse);
  return buf;
}

std::vector<std::size_t> Dataset::split_indices(bool train) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < in_train.size(); ++i)
    if ((in_train[i] != 0) == train) out.push_back(i);
  return out;
}

Dataset load_dataset(const Manifest& manifest) {
  Dataset d;
  d.norm_train_density = manifest.train_density;
  d.norm_train_dose = manifest.train_dose;
  d.norm_val_density = manifest.val_density;
  d.norm_val_dose = manifest.val_dose;
  d.density.reserve(manifest.entries.size());
  d.dose.reserve(manifest.entries.size());
  for (const ManifestEntry& e : manifest.entries) {
    const bool train = e.split == "train";
    const Tensor raw_density = read_tensor(manifest.root / e.density_path);
    const Tensor raw_dose = read_tensor(manifest.root / e.dose_path);
    d.density.push_back(
        normalize_with(raw_density, train ? d.norm_train_density : d.norm_val_density));
    d.dose.push_back(normalize_with(raw_dose, train ? d.norm_train_dose : d.norm_val_dose));
    d.tissue.push_back(e.tissue);
    d.in_train.push_back(train ? 1 : 0);
  }
  return d;
}

namespace {

// Stacks samples into a leading batch axis.
Tensor make_batch(const std::vector<Tensor>& pool, const std::vector<std::size_t>& indices,
                  std::size_t from, std::size_t to) {
  const Tensor& first = pool[indices[from]];
  Shape shape{to - from};
  shape.insert(shape.end(), first.shape().begin(), first.shape().end());
  Tensor batch(shape);
  const std::size_t stride = first.size();
  for (std::size_t s = from; s < to; ++s) {
    const Tensor& sample = pool[indices[s]];
    if (sample.size() != stride)
      throw ValueError("dataset: inconsistent sample shapes");
    std::copy(sample.data().begin(), sample.data().end(),
              batch.data().begin() + (s - from) * stride);
  }
  return batch;
}

struct MetricAccum {
  double se = 0.0, ae = 0.0, sum_min = 0.0, sum_max = 0.0;
  double loss_weighted = 0.0;
  std::size_t elems = 0, samples = 0;

  void add_elem(double pred, double tgt) {
    const double d = pred - tgt;
    se += d * d;
    ae += std::abs(d);
    sum_min += std::min(pred, tgt);
    sum_max += std::max(pred, tgt);
    ++elems;
  }

  double mse() const { return se / static_cast<double>(elems); }
  double mae() const { return ae / static_cast<double>(elems); }
  double iou() const { return sum_min / sum_max; }
  double loss() const { return loss_weighted / static_cast<double>(samples); }
};

void accumulate(MetricAccum& acc, const Tensor& pred, const Tensor& target, double loss_value,
                std::size_t batch_samples) {
  for (std::size_t i = 0; i < pred.size(); ++i) acc.add_elem(pred[i], target[i]);
  acc.loss_weighted += loss_value * static_cast<double>(batch_samples);
  acc.samples += batch_samples;
}

}  // namespace

Tensor predict_batch(Network& net, const Tensor& normalized_density_batch) {
  net.set_mode(Mode::infer);
  return net.forward(normalized_density_batch);
}

namespace {

MetricAccum eval_split(Network& net, const Dataset& data, bool train_split,
                       const std::string& loss_name, int batch_size) {
  const auto idx = data.split_indices(train_split);
  MetricAccum acc;
  net.set_mode(Mode::infer);
  for (std::size_t from = 0; from < idx.size(); from += batch_size) {
    const std::size_t to = std::min(idx.size(), from + batch_size);
    const Tensor x = make_batch(data.density, idx, from, to);
    const Tensor y = make_batch(data.dose, idx, from, to);
    const Tensor pred = net.forward(x);
    const LossValue l = training_loss(loss_name, pred, y);
    accumulate(acc, pred, y, l.value, to - from);
  }
  return acc;
}

}  // namespace

TrainOutcome train_unet(Network& net, Optimizer& optimizer, const Dataset& data,
                        const TrainConfig& cfg, const UNetConfig& unet_cfg, std::ostream* log) {
  cfg.validate();
  std::vector<std::size_t> train_idx = data.split_indices(true);
  const std::vector<std::size_t> val_idx = data.split_indices(false);
  if (train_idx.empty() || val_idx.empty())
    throw ValueError("train: both splits must be non-empty");

  auto params = net.trainable_params();
  std::vector<std::pair<Tensor*, const Tensor*>> slots;
  slots.reserve(params.size());
  for (ParamRef& ref : params) slots.emplace_back(ref.value, ref.grad);
  auto state = net.persistent_state();

  const auto snapshot = [&] {
    std::vector<Tensor> values;
    values.reserve(params.size() + state.size());
    for (ParamRef& ref : params) values.push_back(*ref.value);
    for (ParamRef& ref : state) values.push_back(*ref.value);
    return values;
  };
  const auto restore = [&](const std::vector<Tensor>& values) {
    std::size_t k = 0;
    for (ParamRef& ref : params) *ref.value = values[k++];
    for (ParamRef& ref : state) *ref.value = values[k++];
  };

  // Populate batch-norm running statistics with a forward-only pass so the
  // untrained network has an epoch-0 baseline in infer mode.
  net.set_mode(Mode::train);
  for (std::size_t from = 0; from < train_idx.size();
       from += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t to =
        std::min(train_idx.size(), from + static_cast<std::size_t>(cfg.batch_size));
    net.forward(make_batch(data.density, train_idx, from, to));
  }

  TrainOutcome out;
  if (log) *log << epoch_csv_header() << "\n";

  const auto record_epoch = [&](int epoch, double lr, const MetricAccum& train_acc,
                                const MetricAccum& val_acc) {
    EpochRecord r;
    r.epoch = epoch;
    r.lr = lr;
    r.train_loss = train_acc.loss();
    r.train_mse = train_acc.mse();
    r.train_mae = train_acc.mae();
    r.train_iou = train_acc.iou();
    r.val_loss = val_acc.loss();
    r.val_mse = val_acc.mse();
    r.val_mae = val_acc.mae();
    r.val_iou = val_acc.iou();
    if (!std::isfinite(r.train_loss) || !std::isfinite(r.val_loss))
      throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
    out.history.push_back(r);
    if (log) *log << to_csv(r) << "\n";
  };

  {
    const MetricAccum t0 = eval_split(net, data, true, cfg.loss, cfg.batch_size);
    const MetricAccum v0 = eval_split(net, data, false, cfg.loss, cfg.batch_size);
    record_epoch(0, optimizer.lr(), t0, v0);
  }

  std::vector<Tensor> best_values = snapshot();
  double best_val_loss = out.history.front().val_loss;
  int best_epoch = 0;

  PlateauScheduler scheduler(cfg.patience, cfg.min_delta);
  scheduler.observe(best_val_loss);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double epoch_lr = optimizer.lr();

    // seeded per-epoch shuffle
    Rng shuffle_rng(Rng::mix(cfg.seed, 1000 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = train_idx.size(); i > 1; --i)
      std::swap(train_idx[i - 1], train_idx[shuffle_rng.index(i)]);

    MetricAccum train_acc;
    net.set_mode(Mode::train);
    for (std::size_t from = 0; from < train_idx.size();
         from += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t to =
          std::min(train_idx.size(), from + static_cast<std::size_t>(cfg.batch_size));
      const Tensor x = make_batch(data.density, train_idx, from, to);
      const Tensor y = make_batch(data.dose, train_idx, from, to);
      const Tensor pred = net.forward(x);
      LossValue l = training_loss(cfg.loss, pred, y);
      if (!std::isfinite(l.value))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch offset " + std::to_string(from));
      accumulate(train_acc, pred, y, l.value, to - from);
      net.backward(*l.grad);
      net.apply_regularization();
      optimizer.step(slots);
    }

    const MetricAccum val_acc = eval_split(net, data, false, cfg.loss, cfg.batch_size);
    record_epoch(epoch, epoch_lr, train_acc, val_acc);
    const double val_loss = out.history.back().val_loss;

    if (val_loss < best_val_loss) {
      best_val_loss = val_loss;
      best_epoch = epoch;
      best_values = snapshot();
    }

    switch (scheduler.observe(val_loss)) {
      case PlateauScheduler::Action::halve_lr:
        optimizer.set_lr(optimizer.lr() * cfg.lr_factor);
        out.halved_at_epoch = epoch;
        break;
      case PlateauScheduler::Action::stop:
        out.stopped_early = true;
        break;
      case PlateauScheduler::Action::none:
        break;
    }
    if (out.stopped_early) break;
  }

  restore(best_values);
  out.meta.unet = unet_cfg;
  out.meta.epoch = best_epoch;
  out.meta.best_val_loss = best_val_loss;
  out.meta.norm_density = data.norm_train_density;
  out.meta.norm_dose = data.norm_train_dose;
  return out;
}

std::vector<EvalRow> evaluate_by_tissue(Network& net, const Dataset& data, bool train_split,
                                        int batch_size) {
  net.set_mode(Mode::infer);
  return evaluate_rows([&net](const Tensor& x) { return net.forward(x); }, data, train_split,
                       batch_size);
}

std::vector<EvalRow> evaluate_rows(const std::function<Tensor(const Tensor&)>& predict,
                                   const Dataset& data, bool train_split, int batch_size) {
  const auto idx = data.split_indices(train_split);
  if (idx.empty()) throw ValueError("evaluate: empty split");
  for (std::size_t i : idx) tissue_by_name(data.tissue[i]);  // rejects unknown labels

  std::map<std::string, MetricAccum> by_label;
  MetricAccum total;
  for (std::size_t from = 0; from < idx.size(); from += static_cast<std::size_t>(batch_size)) {
    const std::size_t to = std::min(idx.size(), from + static_cast<std::size_t>(batch_size));
    const Tensor x = make_batch(data.density, idx, from, to);
    const Tensor y = make_batch(data.dose, idx, from, to);
    const Tensor pred = predict(x);
    require_same_shape(pred, y, "evaluate predictions");
    const std::size_t stride = pred.size() / (to - from);
    for (std::size_t s = from; s < to; ++s) {
      MetricAccum& acc = by_label[data.tissue[idx[s]]];
      const std::size_t off = (s - from) * stride;
      for (std::size_t i = 0; i < stride; ++i) {
        acc.add_elem(pred[off + i], y[off + i]);
        total.add_elem(pred[off + i], y[off + i]);
      }
      ++acc.samples;
      ++total.samples;
    }
  }

  std::vector<EvalRow> rows;
  auto emit = [&](const std::string& label, const MetricAccum& acc) {
    rows.push_back({label, acc.samples, acc.iou(), acc.mae(), acc.mse()});
  };
  for (const TissueClass& cls : default_tissue_classes())
    if (by_label.count(cls.name)) emit(cls.name, by_label[cls.name]);
  if (by_label.count("soft")) emit("soft", by_label["soft"]);
  emit("total", total);
  return rows;
}

}  // namespace dvk
