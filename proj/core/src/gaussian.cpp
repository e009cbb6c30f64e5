#include "pforge/gaussian.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "binary_io.hpp"
#include "pforge/error.hpp"

namespace pforge {

GaussianParams::GaussianParams(std::vector<double> mean, Matrix cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.dim() != mean_.size()) throw DimensionError("covariance size does not match mean");
  chol_ = cholesky(cov_);
}

GaussianParams::GaussianParams(std::vector<double> mean, Matrix cov, Matrix chol)
    : mean_(std::move(mean)), cov_(std::move(cov)), chol_(std::move(chol)) {
  if (cov_.dim() != mean_.size() || chol_.dim() != mean_.size()) {
    throw DimensionError("covariance/cholesky size does not match mean");
  }
}

double GaussianParams::log_det() const noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) s += std::log(chol_(i, i));
  return 2.0 * s;
}

DiagonalGaussian DiagonalGaussian::from(const GaussianParams& p) {
  DiagonalGaussian g;
  g.mean = p.mean();
  g.stddev = p.cov().diagonal();
  for (double& v : g.stddev) v = std::sqrt(std::max(v, 0.0));
  return g;
}

double default_shrinkage(const Matrix& scatter) {
  if (scatter.dim() == 0) return 0.0;
  return 1e-4 * scatter.trace() / static_cast<double>(scatter.dim());
}

GaussianParams estimate_mean_cov(std::span<const std::vector<float>> samples, ShrinkageSpec shrinkage) {
  const std::size_t n = samples.size();
  if (n < 2) throw DimensionError("estimate_mean_cov needs at least 2 samples");
  const std::size_t d = samples.front().size();
  for (const auto& s : samples) {
    if (s.size() != d) throw DimensionError("estimate_mean_cov: samples differ in length");
  }

  std::vector<double> mean(d, 0.0);
  for (const auto& s : samples)
    for (std::size_t j = 0; j < d; ++j) mean[j] += s[j];
  for (double& m : mean) m /= static_cast<double>(n);

  // Centered data, coordinate-major so each covariance entry is one dot.
  std::vector<double> centered(d * n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < d; ++j) centered[j * n + k] = samples[k][j] - mean[j];

  Matrix cov(d);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < d; ++i) {
    std::span<const double> ci(centered.data() + i * n, n);
    for (std::size_t j = i; j < d; ++j) {
      const double v = dot(ci, std::span<const double>(centered.data() + j * n, n)) * inv_n;
      cov(i, j) = v;
      cov(j, i) = v;
    }
  }
  const double lambda = shrinkage.lambda < 0.0 ? default_shrinkage(cov) : shrinkage.lambda;
  for (std::size_t i = 0; i < d; ++i) cov(i, i) += lambda;
  return GaussianParams(std::move(mean), std::move(cov));
}

std::vector<double> sample_mvn(const GaussianParams& params, RngStream& rng,
                               std::vector<double>* standard_normal) {
  const std::size_t d = params.dim();
  std::vector<double> u(d);
  rng.fill_normal(u);
  std::vector<double> z(d);
  lower_times(params.chol(), u, z);
  for (std::size_t i = 0; i < d; ++i) z[i] += params.mean()[i];
  if (standard_normal) *standard_normal = std::move(u);
  return z;
}

double mahalanobis_squared(const GaussianParams& params, std::span<const double> z) {
  if (z.size() != params.dim()) throw DimensionError("mahalanobis: length mismatch");
  std::vector<double> w(z.begin(), z.end());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= params.mean()[i];
  forward_substitute(params.chol(), w);
  return dot(w, w);
}

double log_density(const GaussianParams& params, std::span<const double> z) {
  const double d = static_cast<double>(params.dim());
  return -0.5 * (mahalanobis_squared(params, z) + d * std::log(2.0 * std::numbers::pi) +
                 params.log_det());
}

double wasserstein2_diag(const DiagonalGaussian& p, const DiagonalGaussian& q) {
  if (p.mean.size() != q.mean.size() || p.stddev.size() != q.stddev.size() ||
      p.mean.size() != p.stddev.size()) {
    throw DimensionError("wasserstein2_diag: dimension mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.mean.size(); ++i) {
    const double dm = p.mean[i] - q.mean[i];
    const double ds = p.stddev[i] - q.stddev[i];
    s += dm * dm + ds * ds;
  }
  return std::sqrt(s);
}

void save_gaussian(const GaussianParams& params, const std::filesystem::path& path) {
  io::Writer w;
  w.magic("PFGP");
  w.u16(1);
  w.u32(static_cast<std::uint32_t>(params.dim()));
  for (double m : params.mean()) w.f32(static_cast<float>(m));
  for (double c : params.cov().values()) w.f32(static_cast<float>(c));
  w.finish(path);
}

GaussianParams load_gaussian(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("PFGP");
  if (const auto version = r.u16(); version != 1) r.fail("unsupported PFGP version " + std::to_string(version));
  const std::uint32_t d = r.u32();
  if (r.remaining() != 4ull * (d + static_cast<std::uint64_t>(d) * d)) r.fail("PFGP payload size mismatch");
  std::vector<double> mean(d);
  for (double& m : mean) m = r.f32();
  Matrix cov(d);
  for (double& c : cov.values()) c = r.f32();
  // Stored f32 entries are symmetric already; mirror the lower triangle anyway.
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) cov(j, i) = cov(i, j);
  return GaussianParams(std::move(mean), std::move(cov));
}

}  // namespace pforge
