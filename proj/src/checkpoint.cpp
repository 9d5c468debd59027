#include "dvk/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>

#include "dvk/tensor_io.hpp"

namespace dvk {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'D', 'V', 'K', 'C'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::ostream& os, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) throw FormatError("DVKC: truncated header");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("DVKC: truncated header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

json unet_to_json(const UNetConfig& c) {
  return json{{"leak_alpha", c.leak_alpha},
              {"drop_rate", c.drop_rate},
              {"l1_first", c.l1_first},
              {"l2_rest", c.l2_rest},
              {"bn_eps", c.bn_eps},
              {"bn_momentum", c.bn_momentum},
              {"init", c.init == InitKind::lecun_uniform ? "lecun_uniform" : "lecun_normal"},
              {"seed", c.seed},
              {"filter_divisor", c.filter_divisor}};
}

UNetConfig unet_from_json(const json& j) {
  UNetConfig c;
  c.leak_alpha = j.at("leak_alpha").get<double>();
  c.drop_rate = j.at("drop_rate").get<double>();
  c.l1_first = j.at("l1_first").get<double>();
  c.l2_rest = j.at("l2_rest").get<double>();
  c.bn_eps = j.at("bn_eps").get<double>();
  c.bn_momentum = j.at("bn_momentum").get<double>();
  c.init = j.at("init").get<std::string>() == "lecun_normal" ? InitKind::lecun_normal
                                                             : InitKind::lecun_uniform;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.filter_divisor = j.at("filter_divisor").get<int>();
  return c;
}

json norm_to_json(const NormalizationParams& p) {
  return json{{"min", p.data_min}, {"max", p.data_max}, {"a", p.target_low}, {"b", p.target_high}};
}

NormalizationParams norm_from_json(const json& j) {
  NormalizationParams p;
  p.data_min = j.at("min").get<double>();
  p.data_max = j.at("max").get<double>();
  p.target_low = j.at("a").get<double>();
  p.target_high = j.at("b").get<double>();
  return p;
}

void write_block(std::ostream& os, const std::string& name, const Tensor& t) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_tensor(os, t);
}

std::string read_header(std::istream& is, std::uint32_t* block_count) {
  char magic[4];
  if (!is.read(magic, 4)) throw FormatError("DVKC: file too short");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("DVKC: bad magic");
  const std::uint16_t version = get_u16(is);
  if (version != kVersion)
    throw FormatError("DVKC: unsupported version " + std::to_string(version));
  const std::uint32_t header_len = get_u32(is);
  std::string header(header_len, '\0');
  if (!is.read(header.data(), header_len)) throw FormatError("DVKC: truncated JSON header");
  *block_count = get_u32(is);
  return header;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Network& net, const CheckpointMeta& meta,
                     const Optimizer* optimizer) {
  json header;
  header["unet"] = unet_to_json(meta.unet);
  header["epoch"] = meta.epoch;
  header["best_val_loss"] = meta.best_val_loss;
  if (meta.norm_density) header["norm_density"] = norm_to_json(*meta.norm_density);
  if (meta.norm_dose) header["norm_dose"] = norm_to_json(*meta.norm_dose);

  auto params = net.trainable_params();
  auto state = net.persistent_state();

  std::uint32_t blocks = static_cast<std::uint32_t>(params.size() + state.size());
  if (optimizer) {
    const OptimizerConfig& oc = optimizer->config();
    header["optimizer"] = json{{"kind", to_string(oc.kind)},
                               {"lr", oc.lr},
                               {"mu", oc.mu},
                               {"mu_schedule",
                                oc.mu_schedule == MuSchedule::Kind::constant ? "constant"
                                                                             : "warmup"},
                               {"beta1", oc.beta1},
                               {"beta2", oc.beta2},
                               {"nu", oc.nu},
                               {"eps", oc.eps},
                               {"t", optimizer->step_count()},
                               {"mu_prod", optimizer->mu_prod()},
                               {"slots", optimizer->slot_count()}};
    blocks += static_cast<std::uint32_t>(2 * optimizer->slot_count());
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open checkpoint for writing: " + path.string());
  os.write(kMagic, 4);
  put_u16(os, kVersion);
  const std::string header_str = header.dump();
  put_u32(os, static_cast<std::uint32_t>(header_str.size()));
  os.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  put_u32(os, blocks);

  for (ParamRef& ref : params) write_block(os, "param/" + ref.name, *ref.value);
  for (ParamRef& ref : state) write_block(os, "state/" + ref.name, *ref.value);
  if (optimizer)
    for (std::size_t k = 0; k < optimizer->slot_count(); ++k) {
      write_block(os, "opt/m/" + std::to_string(k), optimizer->slot_m(k));
      write_block(os, "opt/v/" + std::to_string(k), optimizer->slot_v(k));
    }
  if (!os) throw FormatError("checkpoint write failed: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint: " + path.string());
  std::uint32_t block_count = 0;
  json header;
  try {
    header = json::parse(read_header(is, &block_count));
  } catch (const json::exception& e) {
    throw FormatError(std::string("DVKC: bad JSON header: ") + e.what());
  }

  LoadedCheckpoint out;
  try {
    out.meta.unet = unet_from_json(header.at("unet"));
    out.meta.epoch = header.at("epoch").get<int>();
    out.meta.best_val_loss = header.at("best_val_loss").get<double>();
    if (header.contains("norm_density"))
      out.meta.norm_density = norm_from_json(header.at("norm_density"));
    if (header.contains("norm_dose")) out.meta.norm_dose = norm_from_json(header.at("norm_dose"));
  } catch (const json::exception& e) {
    throw FormatError(std::string("DVKC: incomplete header: ") + e.what());
  }

  std::map<std::string, Tensor> blocks;
  for (std::uint32_t b = 0; b < block_count; ++b) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw FormatError("DVKC: truncated block name");
    blocks.emplace(std::move(name), read_tensor(is));
  }

  out.net = build_unet(out.meta.unet);
  const auto fill = [&](const std::string& key, Tensor* dst) {
    auto it = blocks.find(key);
    if (it == blocks.end()) throw FormatError("DVKC: missing parameter block " + key);
    require_same_shape(*dst, it->second, "checkpoint load");
    *dst = std::move(it->second);
  };
  for (ParamRef& ref : out.net.trainable_params()) fill("param/" + ref.name, ref.value);
  for (ParamRef& ref : out.net.persistent_state()) fill("state/" + ref.name, ref.value);

  if (header.contains("optimizer")) {
    const json& oj = header.at("optimizer");
    OptimizerConfig oc;
    oc.kind = opt_kind_from_string(oj.at("kind").get<std::string>());
    oc.lr = oj.at("lr").get<double>();
    oc.mu = oj.at("mu").get<double>();
    oc.mu_schedule = oj.at("mu_schedule").get<std::string>() == "warmup"
                         ? MuSchedule::Kind::warmup
                         : MuSchedule::Kind::constant;
    oc.beta1 = oj.at("beta1").get<double>();
    oc.beta2 = oj.at("beta2").get<double>();
    oc.nu = oj.at("nu").get<double>();
    oc.eps = oj.at("eps").get<double>();
    Optimizer opt(oc);
    const auto slots = oj.at("slots").get<std::size_t>();
    std::vector<Tensor> m, v;
    for (std::size_t k = 0; k < slots; ++k) {
      auto im = blocks.find("opt/m/" + std::to_string(k));
      auto iv = blocks.find("opt/v/" + std::to_string(k));
      if (im == blocks.end() || iv == blocks.end())
        throw FormatError("DVKC: missing optimizer slot " + std::to_string(k));
      m.push_back(std::move(im->second));
      v.push_back(std::move(iv->second));
    }
    opt.restore(oj.at("t").get<long>(), oj.at("mu_prod").get<double>(), std::move(m),
                std::move(v));
    out.optimizer = std::move(opt);
  }
  return out;
}

std::string checkpoint_header_json(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint: " + path.string());
  std::uint32_t block_count = 0;
  return read_header(is, &block_count);
}

}  // namespace dvk
