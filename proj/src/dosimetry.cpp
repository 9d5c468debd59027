#include "dvk/dosimetry.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "dvk/fft.hpp"
#include "dvk/parallel.hpp"
#include "dvk/rng.hpp"
#include "dvk/tensor_io.hpp"

namespace dvk {

namespace {

void check_conv_inputs(const Tensor& decays, const Tensor& kernel) {
  if (decays.rank() != 3 || kernel.rank() != 3)
    throw ValueError("convolve3d: decay map and kernel must be rank 3");
  for (std::size_t axis = 0; axis < 3; ++axis)
    if (kernel.dim(axis) % 2 == 0)
      throw ValueError("convolve3d: kernel dims must be odd, got " +
                       shape_to_string(kernel.shape()));
  decays.ensure_finite("convolve3d decay map");
  kernel.ensure_finite("convolve3d kernel");
}

}  // namespace

Tensor convolve3d_direct(const Tensor& decays, const Tensor& kernel, int threads) {
  check_conv_inputs(decays, kernel);
  const std::size_t n0 = decays.dim(0), n1 = decays.dim(1), n2 = decays.dim(2);
  const std::size_t k0 = kernel.dim(0), k1 = kernel.dim(1), k2 = kernel.dim(2);
  const std::size_t z0 = k0 / 2, z1 = k1 / 2, z2 = k2 / 2;

  Tensor out(decays.shape());
  const double* a = decays.raw();
  const double* k = kernel.raw();

  // Each output voxel is one fixed-order sum over the kernel window clipped
  // to the map (zero padding outside); per-axis bounds replace per-term
  // range checks without changing the summation order.
  parallel_for(n0, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t x0 = begin; x0 < end; ++x0) {
      const std::size_t s0 = x0 + z0;
      const std::size_t lo0 = s0 >= n0 ? s0 - (n0 - 1) : 0;
      const std::size_t hi0 = std::min(k0 - 1, s0);
      for (std::size_t x1 = 0; x1 < n1; ++x1) {
        const std::size_t s1 = x1 + z1;
        const std::size_t lo1 = s1 >= n1 ? s1 - (n1 - 1) : 0;
        const std::size_t hi1 = std::min(k1 - 1, s1);
        for (std::size_t x2 = 0; x2 < n2; ++x2) {
          const std::size_t s2 = x2 + z2;
          const std::size_t lo2 = s2 >= n2 ? s2 - (n2 - 1) : 0;
          const std::size_t hi2 = std::min(k2 - 1, s2);
          double acc = 0.0;
          for (std::size_t a0 = lo0; a0 <= hi0; ++a0)
            for (std::size_t a1 = lo1; a1 <= hi1; ++a1) {
              const double* kp = k + (a0 * k1 + a1) * k2;
              const double* ap = a + ((s0 - a0) * n1 + (s1 - a1)) * n2;
              for (std::size_t a2 = lo2; a2 <= hi2; ++a2) acc += kp[a2] * ap[s2 - a2];
            }
          out[(x0 * n1 + x1) * n2 + x2] = acc;
        }
      }
    }
  });
  out.ensure_finite("convolve3d_direct output");
  return out;
}

Tensor convolve3d_fft(const Tensor& decays, const Tensor& kernel) {
  check_conv_inputs(decays, kernel);
  const std::size_t n0 = decays.dim(0), n1 = decays.dim(1), n2 = decays.dim(2);
  const std::size_t k0 = kernel.dim(0), k1 = kernel.dim(1), k2 = kernel.dim(2);
  const std::size_t p0 = next_pow2(n0 + k0 - 1);
  const std::size_t p1 = next_pow2(n1 + k1 - 1);
  const std::size_t p2 = next_pow2(n2 + k2 - 1);

  std::vector<std::complex<double>> fa(p0 * p1 * p2), fk(p0 * p1 * p2);
  for (std::size_t i0 = 0; i0 < n0; ++i0)
    for (std::size_t i1 = 0; i1 < n1; ++i1)
      for (std::size_t i2 = 0; i2 < n2; ++i2)
        fa[(i0 * p1 + i1) * p2 + i2] = decays[(i0 * n1 + i1) * n2 + i2];
  for (std::size_t i0 = 0; i0 < k0; ++i0)
    for (std::size_t i1 = 0; i1 < k1; ++i1)
      for (std::size_t i2 = 0; i2 < k2; ++i2)
        fk[(i0 * p1 + i1) * p2 + i2] = kernel[(i0 * k1 + i1) * k2 + i2];

  fft3_inplace(fa, p0, p1, p2, false);
  fft3_inplace(fk, p0, p1, p2, false);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fk[i];
  fft3_inplace(fa, p0, p1, p2, true);

  // linear convolution L[w] = sum_a K[a] A[w - a]; the dose map is the slice
  // at w = v + zhat
  const std::size_t z0 = k0 / 2, z1 = k1 / 2, z2 = k2 / 2;
  Tensor out(decays.shape());
  for (std::size_t x0 = 0; x0 < n0; ++x0)
    for (std::size_t x1 = 0; x1 < n1; ++x1)
      for (std::size_t x2 = 0; x2 < n2; ++x2)
        out[(x0 * n1 + x1) * n2 + x2] =
            fa[((x0 + z0) * p1 + (x1 + z1)) * p2 + (x2 + z2)].real();
  out.ensure_finite("convolve3d_fft output");
  return out;
}

Tensor energy_to_dose(const Tensor& energy_mev, const Tensor& density_g_cm3, double edge_mm) {
  require_same_shape(energy_mev, density_g_cm3, "energy_to_dose");
  if (!(edge_mm > 0.0)) throw ValueError("energy_to_dose: voxel edge must be > 0");
  const double edge_m = edge_mm / 1000.0;
  const double volume_m3 = edge_m * edge_m * edge_m;
  Tensor out(energy_mev.shape());
  for (std::size_t i = 0; i < energy_mev.size(); ++i) {
    const double rho = density_g_cm3[i];
    if (!(rho > 0.0)) throw ValueError("energy_to_dose: nonpositive density");
    const double mass_kg = rho * 1000.0 * volume_m3;  // g/cm^3 -> kg/m^3
    out[i] = energy_mev[i] * kMevToJoule / mass_kg;
  }
  out.ensure_finite("energy_to_dose output");
  return out;
}

double region_mean_dose(const Tensor& dose, const Tensor& mask) {
  require_same_shape(dose, mask, "region_mean_dose");
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < dose.size(); ++i)
    if (mask[i] != 0.0) {
      acc += dose[i];
      ++count;
    }
  if (count == 0) throw ValueError("region_mean_dose: empty mask");
  return acc / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Synthetic oracle
// ---------------------------------------------------------------------------

namespace {

void check_density(const Tensor& density) {
  if (density.rank() != 3) throw ValueError("density kernel must be rank 3");
  for (std::size_t axis = 0; axis < 3; ++axis)
    if (density.dim(axis) % 2 == 0)
      throw ValueError("density kernel dims must be odd for a well-defined center");
  for (std::size_t i = 0; i < density.size(); ++i)
    if (!(density[i] > 0.0)) throw ValueError("density kernel must be positive everywhere");
}

}  // namespace

Tensor synth_energy_deposition(const Tensor& density, const SynthParams& params) {
  check_density(density);
  if (!(params.center_fraction > 0.0 && params.center_fraction < 1.0))
    throw ValueError("synth oracle: center fraction must lie in (0, 1)");
  if (!(params.attenuation > 0.0)) throw ValueError("synth oracle: attenuation must be > 0");
  if (!(params.total_energy_mev > 0.0)) throw ValueError("synth oracle: energy must be > 0");

  const std::size_t d0 = density.dim(0), d1 = density.dim(1), d2 = density.dim(2);
  const double c0 = static_cast<double>(d0 / 2), c1 = static_cast<double>(d1 / 2),
               c2 = static_cast<double>(d2 / 2);

  Tensor weights(density.shape());
  double weight_sum = 0.0;
  for (std::size_t v0 = 0; v0 < d0; ++v0)
    for (std::size_t v1 = 0; v1 < d1; ++v1)
      for (std::size_t v2 = 0; v2 < d2; ++v2) {
        const double o0 = static_cast<double>(v0) - c0;
        const double o1 = static_cast<double>(v1) - c1;
        const double o2 = static_cast<double>(v2) - c2;
        const double dist2 = o0 * o0 + o1 * o1 + o2 * o2;
        if (dist2 == 0.0) continue;  // center carries its own point mass
        const double dist = std::sqrt(dist2);

        // mean density along the center->voxel segment, midpoint samples at
        // roughly unit spacing
        const std::size_t steps = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                               std::llround(dist)));
        double rho_path = 0.0;
        for (std::size_t s = 0; s < steps; ++s) {
          const double t = (static_cast<double>(s) + 0.5) / static_cast<double>(steps);
          const auto clamp_idx = [](double x, std::size_t dim) {
            long i = std::llround(x);
            if (i < 0) i = 0;
            if (i >= static_cast<long>(dim)) i = static_cast<long>(dim) - 1;
            return static_cast<std::size_t>(i);
          };
          const std::size_t i0 = clamp_idx(c0 + t * o0, d0);
          const std::size_t i1 = clamp_idx(c1 + t * o1, d1);
          const std::size_t i2 = clamp_idx(c2 + t * o2, d2);
          rho_path += density[(i0 * d1 + i1) * d2 + i2];
        }
        rho_path /= static_cast<double>(steps);

        const double w = std::exp(-params.attenuation * rho_path * dist) / dist2;
        weights[(v0 * d1 + v1) * d2 + v2] = w;
        weight_sum += w;
      }

  Tensor energy(density.shape());
  const double shell_energy = (1.0 - params.center_fraction) * params.total_energy_mev;
  for (std::size_t i = 0; i < energy.size(); ++i)
    energy[i] = shell_energy * (weights[i] / weight_sum);
  energy[((d0 / 2) * d1 + d1 / 2) * d2 + d2 / 2] =
      params.center_fraction * params.total_energy_mev;
  energy.ensure_finite("synthetic deposition");
  return energy;
}

Tensor synth_dvk(const Tensor& density, const SynthParams& params) {
  const Tensor energy = synth_energy_deposition(density, params);
  Tensor dvk = energy_to_dose(energy, density, params.edge_mm);
  validate_dvk(dvk);
  return dvk;
}

void validate_dvk(const Tensor& dvk) {
  if (dvk.rank() != 3) throw ValueError("dose-voxel kernel must be rank 3");
  const std::size_t d0 = dvk.dim(0), d1 = dvk.dim(1), d2 = dvk.dim(2);
  if (d0 % 2 == 0 || d1 % 2 == 0 || d2 % 2 == 0)
    throw ValueError("dose-voxel kernel dims must be odd");
  const double center = dvk[((d0 / 2) * d1 + d1 / 2) * d2 + d2 / 2];
  for (std::size_t i = 0; i < dvk.size(); ++i) {
    if (dvk[i] < 0.0) throw ValueError("dose-voxel kernel must be nonnegative");
    if (dvk[i] > center)
      throw ValueError("dose-voxel kernel: center voxel is not the global maximum");
  }
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

const std::vector<TissueClass>& default_tissue_classes() {
  static const std::vector<TissueClass> classes = {
      {"bone", 1.30, 1.90, 1.3},
      {"lung", 0.20, 0.60, 0.9},
      {"kidney", 1.01, 1.06, 1.0},
      {"liver", 1.03, 1.10, 1.0},
      {"spleen", 1.04, 1.12, 1.0},
  };
  return classes;
}

const TissueClass& tissue_by_name(const std::string& name) {
  static const TissueClass soft{"soft", 0.95, 1.05, 1.0};
  if (name == "soft") return soft;
  for (const TissueClass& t : default_tissue_classes())
    if (t.name == name) return t;
  throw ValueError("unknown tissue class: " + name);
}

std::size_t Manifest::count(const std::string& split) const {
  std::size_t n = 0;
  for (const auto& e : entries)
    if (e.split == split) ++n;
  return n;
}

namespace {

std::string sample_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d.dvkt", index);
  return buf;
}

Tensor draw_density(const TissueClass& cls, const std::vector<TissueClass>& classes,
                    const GenerateConfig& cfg, Rng& rng) {
  const double range = cls.rho_hi - cls.rho_lo;
  if (!(range > 0.0)) throw ValueError("tissue class " + cls.name + ": degenerate range");
  const double amp = cfg.noise_fraction * range;
  const double base = rng.uniform(cls.rho_lo + amp, cls.rho_hi - amp);

  const std::size_t dim = cfg.kernel_dim;
  Tensor density({dim, dim, dim});
  for (double& v : density.data())
    v = std::clamp(base + rng.uniform(-amp, amp), cls.rho_lo, cls.rho_hi);

  // Mixed tissue: a smooth blob pulled toward another class's density,
  // saturating at this class's configured bounds.
  if (classes.size() > 1 && rng.bernoulli(cfg.inclusion_prob)) {
    std::size_t other = rng.index(classes.size());
    while (classes[other].name == cls.name) other = rng.index(classes.size());
    const double target =
        std::clamp(0.5 * (classes[other].rho_lo + classes[other].rho_hi), cls.rho_lo, cls.rho_hi);
    const double b0 = static_cast<double>(rng.index(dim));
    const double b1 = static_cast<double>(rng.index(dim));
    const double b2 = static_cast<double>(rng.index(dim));
    const double radius = rng.uniform(1.5, 3.5);
    for (std::size_t i0 = 0; i0 < dim; ++i0)
      for (std::size_t i1 = 0; i1 < dim; ++i1)
        for (std::size_t i2 = 0; i2 < dim; ++i2) {
          const double dr = std::sqrt((i0 - b0) * (i0 - b0) + (i1 - b1) * (i1 - b1) +
                                      (i2 - b2) * (i2 - b2));
          const double t = std::max(0.0, 1.0 - dr / radius);
          double& v = density[(i0 * dim + i1) * dim + i2];
          v = std::clamp(v * (1.0 - t) + target * t, cls.rho_lo, cls.rho_hi);
        }
  }
  return density;
}

}  // namespace

Manifest generate_dataset(const std::vector<TissueClass>& classes, const GenerateConfig& cfg,
                          const std::filesystem::path& out_dir, int threads) {
  if (classes.empty()) throw ValueError("generate_dataset: no tissue classes");
  if (cfg.per_class < 1) throw ValueError("generate_dataset: per_class must be >= 1");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
    throw ValueError("generate_dataset: train fraction must lie in (0, 1)");
  if (!(cfg.noise_fraction >= 0.0 && cfg.noise_fraction <= 0.5))
    throw ValueError("generate_dataset: noise fraction must lie in [0, 0.5]");

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "density", ec);
  std::filesystem::create_directories(out_dir / "dose", ec);
  if (!std::filesystem::is_directory(out_dir / "density") ||
      !std::filesystem::is_directory(out_dir / "dose"))
    throw FormatError("generate_dataset: cannot create dataset directories under " +
                      out_dir.string());

  const std::size_t total = classes.size() * static_cast<std::size_t>(cfg.per_class);
  std::vector<double> den_min(total), den_max(total), dose_min(total), dose_max(total);

  parallel_for(total, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const TissueClass& cls = classes[i / static_cast<std::size_t>(cfg.per_class)];
      Rng rng(Rng::mix(cfg.seed, i));
      const Tensor density = draw_density(cls, classes, cfg, rng);
      SynthParams params = cfg.synth;
      params.attenuation = cls.attenuation;
      const Tensor dose = synth_dvk(density, params);
      write_tensor(out_dir / "density" / sample_name(static_cast<int>(i)), density);
      write_tensor(out_dir / "dose" / sample_name(static_cast<int>(i)), dose);
      den_min[i] = density.min();
      den_max[i] = density.max();
      dose_min[i] = dose.min();
      dose_max[i] = dose.max();
    }
  });

  // Shuffle the population first, then draw the two datasets from it.
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  Rng shuffle_rng(Rng::mix(cfg.seed, 0xD1CEULL));
  for (std::size_t i = total; i > 1; --i)
    std::swap(order[i - 1], order[shuffle_rng.index(i)]);
  const std::size_t n_train =
      static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(total)));
  std::vector<std::string> split(total, "val");
  for (std::size_t r = 0; r < n_train && r < total; ++r) split[order[r]] = "train";

  Manifest m;
  m.seed = cfg.seed;
  m.root = out_dir;
  auto reduce = [&](const std::string& which, bool density) {
    NormalizationParams p;
    p.data_min = std::numeric_limits<double>::infinity();
    p.data_max = -std::numeric_limits<double>::infinity();
    p.target_low = cfg.norm_low;
    p.target_high = cfg.norm_high;
    for (std::size_t i = 0; i < total; ++i) {
      if (split[i] != which) continue;
      p.data_min = std::min(p.data_min, density ? den_min[i] : dose_min[i]);
      p.data_max = std::max(p.data_max, density ? den_max[i] : dose_max[i]);
    }
    return p;
  };
  m.train_density = reduce("train", true);
  m.train_dose = reduce("train", false);
  m.val_density = reduce("val", true);
  m.val_dose = reduce("val", false);

  m.entries.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    ManifestEntry& e = m.entries[i];
    e.index = static_cast<int>(i);
    e.tissue = classes[i / static_cast<std::size_t>(cfg.per_class)].name;
    e.split = split[i];
    e.density_path = "density/" + sample_name(e.index);
    e.dose_path = "dose/" + sample_name(e.index);
  }

  // manifest.txt: header lines, then one line per sample
  std::ofstream os(out_dir / "manifest.txt");
  if (!os) throw FormatError("generate_dataset: cannot write manifest");
  os << "# dvkforge dataset manifest v1\n";
  os << "seed = " << m.seed << "\n";
  os << "samples = " << total << "\n";
  char buf[256];
  auto put_norm = [&](const char* key, const NormalizationParams& p) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g %.17g %.17g %.17g\n", key, p.data_min,
                  p.data_max, p.target_low, p.target_high);
    os << buf;
  };
  put_norm("norm.train.density", m.train_density);
  put_norm("norm.train.dose", m.train_dose);
  put_norm("norm.val.density", m.val_density);
  put_norm("norm.val.dose", m.val_dose);
  os << "# index tissue split density dose\n";
  for (const ManifestEntry& e : m.entries)
    os << e.index << " " << e.tissue << " " << e.split << " " << e.density_path << " "
       << e.dose_path << "\n";
  if (!os) throw FormatError("generate_dataset: manifest write failed");
  return m;
}

Manifest read_manifest(const std::filesystem::path& dataset_dir) {
  std::ifstream is(dataset_dir / "manifest.txt");
  if (!is) throw FormatError("cannot open manifest: " + (dataset_dir / "manifest.txt").string());

  Manifest m;
  m.root = dataset_dir;
  auto parse_norm = [](const std::string& value) {
    NormalizationParams p;
    std::istringstream ss(value);
    if (!(ss >> p.data_min >> p.data_max >> p.target_low >> p.target_high))
      throw FormatError("manifest: bad normalization line: " + value);
    return p;
  };

  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) {
      const std::string key = line.substr(0, eq);
      const std::string value = line.substr(eq + 3);
      if (key == "seed")
        m.seed = std::stoull(value);
      else if (key == "norm.train.density")
        m.train_density = parse_norm(value);
      else if (key == "norm.train.dose")
        m.train_dose = parse_norm(value);
      else if (key == "norm.val.density")
        m.val_density = parse_norm(value);
      else if (key == "norm.val.dose")
        m.val_dose = parse_norm(value);
      continue;
    }
    ManifestEntry e;
    std::istringstream ss(line);
    if (!(ss >> e.index >> e.tissue >> e.split >> e.density_path >> e.dose_path))
      throw FormatError("manifest: bad sample line: " + line);
    m.entries.push_back(e);
  }
  if (m.entries.empty()) throw FormatError("manifest: no samples listed");
  return m;
}

}  // namespace dvk
