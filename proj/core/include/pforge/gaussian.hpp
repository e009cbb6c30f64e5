#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "pforge/linalg.hpp"
#include "pforge/rng.hpp"

namespace pforge {

// Multivariate Gaussian over flattened noise vectors. The Cholesky factor is
// always consistent with the covariance it was built from.
class GaussianParams {
 public:
  GaussianParams() = default;
  // Factorizes `cov`; throws NotPositiveDefiniteError if it is not SPD.
  GaussianParams(std::vector<double> mean, Matrix cov);
  GaussianParams(std::vector<double> mean, Matrix cov, Matrix chol);

  std::size_t dim() const noexcept { return mean_.size(); }
  const std::vector<double>& mean() const noexcept { return mean_; }
  const Matrix& cov() const noexcept { return cov_; }
  const Matrix& chol() const noexcept { return chol_; }

  double log_det() const noexcept;

 private:
  std::vector<double> mean_;
  Matrix cov_;
  Matrix chol_;
};

// Independent-coordinate Gaussian, used only for distance reporting.
struct DiagonalGaussian {
  std::vector<double> mean;
  std::vector<double> stddev;

  static DiagonalGaussian from(const GaussianParams& p);
};

// Default shrinkage added to the scatter matrix: 1e-4 * trace / d.
double default_shrinkage(const Matrix& scatter);

struct ShrinkageSpec {
  // Negative selects default_shrinkage().
  double lambda = -1.0;
};

// Maximum-likelihood mean and (1/N) covariance plus lambda * I.
GaussianParams estimate_mean_cov(std::span<const std::vector<float>> samples,
                                 ShrinkageSpec shrinkage = {});

// mean + L u, u standard normal from `rng`. If `standard_normal` is non-null
// it receives u.
std::vector<double> sample_mvn(const GaussianParams& params, RngStream& rng,
                               std::vector<double>* standard_normal = nullptr);

double mahalanobis_squared(const GaussianParams& params, std::span<const double> z);
double log_density(const GaussianParams& params, std::span<const double> z);

double wasserstein2_diag(const DiagonalGaussian& p, const DiagonalGaussian& q);

// "PFGP" v1: u16 version, u32 d, d f32 means, d*d f32 covariance.
void save_gaussian(const GaussianParams& params, const std::filesystem::path& path);
GaussianParams load_gaussian(const std::filesystem::path& path);

}  // namespace pforge
