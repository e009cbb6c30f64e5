#include "pforge/noise_model.hpp"

#include <bit>
#include <boost/math/distributions/chi_squared.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "binary_io.hpp"
#include "pforge/error.hpp"
#include "pforge/parallel.hpp"

namespace pforge {
namespace {

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ull;
  void add(std::uint64_t word) {
    for (int s = 0; s < 64; s += 8) {
      h ^= (word >> s) & 0xFFu;
      h *= 0x100000001b3ull;
    }
  }
  void add(double v) { add(std::bit_cast<std::uint64_t>(v)); }
};

}  // namespace

NoiseBank NoiseBank::head(std::size_t n) const {
  NoiseBank out;
  out.attack_name = attack_name;
  out.vectors.assign(vectors.begin(), vectors.begin() + std::min(n, vectors.size()));
  return out;
}

void NoiseBank::validate() const {
  if (vectors.size() < 2) throw DimensionError("noise bank needs at least 2 vectors");
  for (const auto& v : vectors)
    if (v.size() != dim()) throw DimensionError("noise bank vectors differ in length");
}

NoiseBank build_noise_bank(const ConvNet& victim, const LabeledDataset& subset, AttackKind kind,
                           const AttackConfig& cfg, std::size_t workers) {
  NoiseBank bank;
  bank.attack_name = std::string(attack_name(kind));
  bank.vectors.resize(subset.size());
  const AttackTargets targets{&victim, nullptr};
  parallel_for(subset.size(), workers, [&](std::size_t i) {
    const Tensor adv = run_attack(kind, targets, subset.images[i], subset.labels[i], cfg, i);
    bank.vectors[i] = flatten(extract_noise(adv, subset.images[i], i, bank.attack_name).eta);
  });
  return bank;
}

GaussianParams estimate(const NoiseBank& bank, ShrinkageSpec shrinkage) {
  bank.validate();
  return estimate_mean_cov(bank.vectors, shrinkage);
}

void save_noise_bank(const NoiseBank& bank, const std::filesystem::path& path) {
  io::Writer w;
  w.magic("PFNB");
  w.u16(1);
  w.str(bank.attack_name);
  w.u32(static_cast<std::uint32_t>(bank.count()));
  w.u32(static_cast<std::uint32_t>(bank.dim()));
  for (const auto& v : bank.vectors) w.f32s(v);
  w.finish(path);
}

NoiseBank load_noise_bank(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("PFNB");
  if (const auto version = r.u16(); version != 1) r.fail("unsupported PFNB version " + std::to_string(version));
  NoiseBank bank;
  bank.attack_name = r.str();
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  if (r.remaining() != 4ull * n * d) r.fail("PFNB payload size mismatch");
  bank.vectors.assign(n, std::vector<float>(d));
  for (auto& v : bank.vectors) r.f32s(v);
  return bank;
}

void PerturbationConfig::validate() const {
  if (!(eps_mu >= 0.0)) throw ConfigError("eps_mu must be non-negative");
  if (!(eps_sigma >= 0.0)) throw ConfigError("eps_sigma must be non-negative");
}

PerturbedGaussian perturb(const GaussianParams& base, std::size_t batch_index, const PerturbationConfig& cfg) {
  cfg.validate();
  const std::size_t d = base.dim();
  RngStream rng(cfg.seed, batch_index);
  PerturbedGaussian pg;
  pg.batch_index = batch_index;
  pg.alpha = rng.uniform(-cfg.eps_mu, cfg.eps_mu);
  pg.beta = rng.uniform(0.0, cfg.eps_sigma);
  pg.direction.resize(d);
  rng.fill_normal(pg.direction);

  Fnv1a hash;
  hash.add(static_cast<std::uint64_t>(batch_index));
  hash.add(pg.alpha);
  hash.add(pg.beta);
  for (double v : pg.direction) hash.add(v);

  std::vector<double> mean = base.mean();
  for (std::size_t j = 0; j < d; ++j) mean[j] += pg.alpha * pg.direction[j];

  // V is drawn row by row; only its symmetric part enters the covariance.
  Matrix v(d);
  rng.fill_normal(v.values());
  for (double x : v.values()) hash.add(x);
  pg.draw_hash = hash.h;

  Matrix cov = base.cov();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      const double s = pg.beta * (0.5 * (v(i, j) + v(j, i)));
      cov(i, j) += s;
      if (j != i) cov(j, i) += s;
    }
  }

  Matrix chol;
  if (!try_cholesky(cov, chol)) {
    // The base is positive definite, so by Weyl the deficit is at most
    // beta * |lambda_min(sym V)|. Start there and double if the estimate is short.
    Matrix sym(d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) sym(i, j) = 0.5 * (v(i, j) + v(j, i));
    const double deficit = pg.beta * std::max(0.0, -smallest_eigenvalue_estimate(sym, 40));
    const double scale = std::max(cov.trace() / static_cast<double>(d), 1e-300);
    double tau = std::max(deficit * 1.05, 1e-6 * scale);
    bool ok = false;
    for (std::size_t k = 0; k <= cfg.max_doublings; ++k) {
      Matrix loaded = cov;
      for (std::size_t i = 0; i < d; ++i) loaded(i, i) += tau;
      if (try_cholesky(loaded, chol)) {
        cov = std::move(loaded);
        pg.loading = tau;
        pg.doublings = k;
        ok = true;
        break;
      }
      tau *= 2.0;
    }
    if (!ok) {
      throw NumericError("perturbed covariance for batch " + std::to_string(batch_index) +
                         " is not positive definite after " + std::to_string(cfg.max_doublings) +
                         " doublings of the diagonal load");
    }
  }
  pg.params = GaussianParams(std::move(mean), std::move(cov), std::move(chol));
  return pg;
}

double chi_square_quantile(std::size_t dof, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ConfigError("chi-square quantile must lie in (0, 1)");
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(static_cast<double>(dof)), q);
}

FilteredDraw sample_filtered(const GaussianParams& params, const FilterConfig& cfg, RngStream& rng) {
  const double threshold = chi_square_quantile(params.dim(), cfg.quantile);
  FilteredDraw out;
  std::vector<double> u;
  for (std::size_t rejections = 0;; ++rejections) {
    if (rejections > cfg.max_rejections) {
      throw ConfigError("sample_filtered: more than " + std::to_string(cfg.max_rejections) +
                        " consecutive rejections; quantile too strict");
    }
    std::vector<double> z = sample_mvn(params, rng, &u);
    ++out.attempts;
    // z = mean + L u, hence (z - mean)^T cov^-1 (z - mean) = |u|^2.
    const double m2 = dot(u, u);
    if (m2 <= threshold) {
      out.mahalanobis_squared = m2;
      out.z.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        double v = z[i];
        if (cfg.clip > 0.0) v = std::clamp(v, -cfg.clip, cfg.clip);
        out.z[i] = static_cast<float>(v);
      }
      return out;
    }
  }
}

FilteredDraw sample_filtered(const PerturbedGaussian& pg, const FilterConfig& cfg, RngStream& rng) {
  return sample_filtered(pg.params, cfg, rng);
}

void ProximityReport::write_csv(std::ostream& out) const {
  out << "batch_index,w2_distance\n";
  char buf[64];
  for (std::size_t i = 0; i < distances.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.9g", distances[i]);
    out << batch_indices[i] << ',' << buf << '\n';
  }
}

ProximityReport proximity_report(const GaussianParams& base, std::span<const PerturbedGaussian> perturbed) {
  const DiagonalGaussian b = DiagonalGaussian::from(base);
  ProximityReport report;
  for (const auto& pg : perturbed) {
    report.batch_indices.push_back(pg.batch_index);
    report.distances.push_back(wasserstein2_diag(b, DiagonalGaussian::from(pg.params)));
    report.max_distance = std::max(report.max_distance, report.distances.back());
  }
  return report;
}

ProximityReport proximity_report(const GaussianParams& base, const PerturbationConfig& cfg, std::size_t count) {
  const DiagonalGaussian b = DiagonalGaussian::from(base);
  ProximityReport report;
  for (std::size_t i = 0; i < count; ++i) {
    const PerturbedGaussian pg = perturb(base, i, cfg);
    report.batch_indices.push_back(i);
    report.distances.push_back(wasserstein2_diag(b, DiagonalGaussian::from(pg.params)));
    report.max_distance = std::max(report.max_distance, report.distances.back());
  }
  return report;
}

}  // namespace pforge
