#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dvk/normalize.hpp"
#include "dvk/tensor.hpp"

namespace dvk {

inline constexpr double kMevToJoule = 1.602176634e-13;
// The paper's Monte-Carlo medium and its soft-tissue class carry different
// densities; both are kept as named constants, neither silently preferred.
inline constexpr double kMcMediumDensity = 1.04;    // g/cm^3
inline constexpr double kSoftTissueDensity = 1.004;  // g/cm^3
inline constexpr double kDefaultVoxelEdgeMm = 5.0;

// Dose map from a decay map and a dose-voxel kernel with odd dims:
//   D[v] = sum_u A[u] * S[v - u + zhat]
// Zero-padding boundary: voxels outside the map contribute no activity.
// Output voxels are independent, so the result is identical for any thread
// count.
Tensor convolve3d_direct(const Tensor& decays, const Tensor& kernel, int threads = 1);

// Frequency-domain route; equal to the direct path within 1e-10 relative.
Tensor convolve3d_fft(const Tensor& decays, const Tensor& kernel);

// D[v] = E[v] * J_per_MeV / (rho[v] * voxel_volume); Gray = J/kg.
Tensor energy_to_dose(const Tensor& energy_mev, const Tensor& density_g_cm3, double edge_mm);

// Arithmetic mean of dose over the nonzero entries of mask.
double region_mean_dose(const Tensor& dose, const Tensor& mask);

// ---------------------------------------------------------------------------
// Deterministic surrogate for the Monte-Carlo DVK computation. The center
// voxel receives a fixed fraction of the deposited energy; every other voxel
// is weighted by exp(-lambda * mean_path_density * d) / d^2 with d the
// Euclidean center distance in voxel units and the path density sampled at
// unit-step midpoints. Not a physics model; it honors the center maximum and
// the configured center fraction while staying density-sensitive.
// ---------------------------------------------------------------------------

struct SynthParams {
  double total_energy_mev = 1.0;
  double center_fraction = 0.6;
  double attenuation = 1.0;  // lambda
  double edge_mm = kDefaultVoxelEdgeMm;
};

// Deposited energy per voxel [MeV]; sums to total_energy_mev.
Tensor synth_energy_deposition(const Tensor& density, const SynthParams& params);

// Energy deposition converted to absorbed dose [Gy per decay].
Tensor synth_dvk(const Tensor& density, const SynthParams& params);

// Checks the dose-voxel-kernel invariants: nonnegative, center voxel is the
// global maximum.
void validate_dvk(const Tensor& dvk);

// ---------------------------------------------------------------------------
// Synthetic dataset generation
// ---------------------------------------------------------------------------

struct TissueClass {
  std::string name;
  double rho_lo = 0.0, rho_hi = 0.0;  // g/cm^3
  double attenuation = 1.0;           // lambda for the synthetic oracle
};

// Density ranges are implementation defaults, not paper values (the paper
// only fixes soft tissue at 1.004 and the MC medium at 1.04 g/cm^3).
const std::vector<TissueClass>& default_tissue_classes();
const TissueClass& tissue_by_name(const std::string& name);

struct GenerateConfig {
  int per_class = 2000;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  double inclusion_prob = 0.3;   // chance of a second-tissue blob
  double noise_fraction = 0.25;  // voxel noise amplitude as a range fraction
  double norm_low = 0.1, norm_high = 0.9;
  std::size_t kernel_dim = 9;
  SynthParams synth;
};

struct ManifestEntry {
  int index = 0;
  std::string tissue;
  std::string split;  // "train" or "val"
  std::string density_path, dose_path;  // relative to the dataset root
};

struct Manifest {
  std::uint64_t seed = 0;
  NormalizationParams train_density, train_dose;
  NormalizationParams val_density, val_dose;
  std::vector<ManifestEntry> entries;
  std::filesystem::path root;

  std::size_t count(const std::string& split) const;
};

Manifest generate_dataset(const std::vector<TissueClass>& classes, const GenerateConfig& cfg,
                          const std::filesystem::path& out_dir, int threads = 1);
Manifest read_manifest(const std::filesystem::path& dataset_dir);

}  // namespace dvk
