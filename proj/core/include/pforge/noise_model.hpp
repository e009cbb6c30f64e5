#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "pforge/attacks.hpp"
#include "pforge/gaussian.hpp"

namespace pforge {

// Flattened adversarial noise vectors from one attack.
struct NoiseBank {
  std::string attack_name;
  std::vector<std::vector<float>> vectors;

  std::size_t count() const noexcept { return vectors.size(); }
  std::size_t dim() const noexcept { return vectors.empty() ? 0 : vectors.front().size(); }
  NoiseBank head(std::size_t n) const;
  void validate() const;
};

// Runs `kind` on every image of `subset` and keeps eta = attack(x) - x.
NoiseBank build_noise_bank(const ConvNet& victim, const LabeledDataset& subset, AttackKind kind,
                           const AttackConfig& cfg, std::size_t workers = 1);

GaussianParams estimate(const NoiseBank& bank, ShrinkageSpec shrinkage = {});

// "PFNB" v1: u16 version, attack name, u32 N, u32 d, N*d f32.
void save_noise_bank(const NoiseBank& bank, const std::filesystem::path& path);
NoiseBank load_noise_bank(const std::filesystem::path& path);

struct PerturbationConfig {
  double eps_mu = 3.0 / 255.0;
  double eps_sigma = 0.005;
  std::uint64_t seed = 1;
  std::size_t max_doublings = 10;

  void validate() const;
};

// One member of the covering family: N(mean + alpha m, cov + beta sym(V)),
// diagonally loaded until it factorizes.
struct PerturbedGaussian {
  std::size_t batch_index = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<double> direction;  // m
  double loading = 0.0;           // diagonal load added by the PSD repair
  std::size_t doublings = 0;
  std::uint64_t draw_hash = 0;    // hash of (alpha, beta, m, V)
  GaussianParams params;

  std::size_t dim() const noexcept { return params.dim(); }
};

PerturbedGaussian perturb(const GaussianParams& base, std::size_t batch_index, const PerturbationConfig& cfg);

double chi_square_quantile(std::size_t dof, double q);

struct FilterConfig {
  double quantile = 0.95;
  // Outputs are clipped to [-clip, clip]; <= 0 disables clipping.
  double clip = 0.0;
  std::size_t max_rejections = 1000;
};

struct FilteredDraw {
  std::vector<float> z;
  std::size_t attempts = 0;
  double mahalanobis_squared = 0.0;  // of the accepted draw, before clipping
};

// Rejection-samples N(mean_i, cov_i), keeping draws whose squared Mahalanobis
// distance is within the chi-square quantile.
FilteredDraw sample_filtered(const PerturbedGaussian& pg, const FilterConfig& cfg, RngStream& rng);
FilteredDraw sample_filtered(const GaussianParams& params, const FilterConfig& cfg, RngStream& rng);

struct ProximityReport {
  std::vector<std::size_t> batch_indices;
  std::vector<double> distances;
  double max_distance = 0.0;

  void write_csv(std::ostream& out) const;
};

ProximityReport proximity_report(const GaussianParams& base, std::span<const PerturbedGaussian> perturbed);
// Generates batches [0, count) on the fly without keeping them.
ProximityReport proximity_report(const GaussianParams& base, const PerturbationConfig& cfg, std::size_t count);

}  // namespace pforge
