#include "pforge/forgery.hpp"

#include <algorithm>
#include <cstdio>
#include <string>

#include "pforge/error.hpp"
#include "pforge/parallel.hpp"

namespace pforge {
namespace {

constexpr std::uint64_t kSampleSalt = 0x5A4D9E11ULL;
constexpr std::uint64_t kShuffleSalt = 0xDE7EC700ULL;

template <typename Fn>
decltype(auto) stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const TrainingError&) {
    throw;
  } catch (const std::exception& e) {
    throw TrainingError(std::string(name) + ": " + e.what());
  }
}

}  // namespace

void ForgeryConfig::validate() const {
  perturbation.validate();
  mask.validate();
  attack.validate();
  detector_train.validate();
  if (!(gamma_p_quantile > 0.0 && gamma_p_quantile < 1.0)) throw ConfigError("gamma_p_quantile must lie in (0, 1)");
  if (bank_size < 2) throw ConfigError("bank_size must be at least 2");
  if (detector_train.batch_size < 2 || detector_train.batch_size % 2 != 0)
    throw ConfigError("detector batch size must be even and >= 2");
}

FilterConfig ForgeryConfig::filter() const {
  FilterConfig f;
  f.quantile = gamma_p_quantile;
  f.clip = attack.epsilon;
  return f;
}

double PseudoAdvBatch::forged_fraction() const {
  if (labels.empty()) return 0.0;
  const auto forged = std::count(labels.begin(), labels.end(), kAdversarialLabel);
  return static_cast<double>(forged) / static_cast<double>(labels.size());
}

Tensor produce_pseudo_adv(const Tensor& x, const PerturbedGaussian& pg, const SparseMask& mask,
                          const FilterConfig& filter, RngStream& rng) {
  if (x.rank() != 3) throw DimensionError("produce_pseudo_adv: expected C x H x W");
  if (pg.dim() != x.size()) throw DimensionError("produce_pseudo_adv: noise dimension does not match image");
  const std::size_t plane = x.dim(1) * x.dim(2);
  if (mask.bits.size() != plane) throw DimensionError("produce_pseudo_adv: mask size does not match image");
  const FilteredDraw draw = sample_filtered(pg, filter, rng);
  Tensor out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mask.bits[i % plane] == 0.0f) continue;
    out[i] = std::clamp(x[i] + draw.z[i], 0.0f, 1.0f);
  }
  return out;
}

SparseMask victim_mask(const ConvNet& victim, const Tensor& x, const MaskConfig& cfg) {
  const Tensor cam = gradcam(victim, x, victim.predict(x));
  return compose_mask(x, cam, cfg);
}

std::vector<SparseMask> compute_masks(const ConvNet& victim, const LabeledDataset& ds, const MaskConfig& cfg,
                                      std::size_t workers) {
  std::vector<SparseMask> masks(ds.size());
  parallel_for(ds.size(), workers, [&](std::size_t i) { masks[i] = victim_mask(victim, ds.images[i], cfg); });
  return masks;
}

PseudoAdvBatch build_batch(const GaussianParams& base, std::span<const Tensor* const> naturals, std::size_t i,
                           const ForgeryConfig& cfg, const ConvNet& victim,
                           std::span<const SparseMask* const> masks) {
  if (naturals.size() < 2 || naturals.size() % 2 != 0)
    throw ConfigError("build_batch: batch size must be even and >= 2");
  if (!masks.empty() && masks.size() != naturals.size())
    throw DimensionError("build_batch: one cached mask per natural required");

  PseudoAdvBatch batch;
  batch.batch_index = i;
  const PerturbedGaussian pg = perturb(base, i, cfg.perturbation);
  batch.draw_hash = pg.draw_hash;

  const std::size_t n = naturals.size();
  const std::size_t half = n / 2;
  batch.images.resize(n);
  batch.labels.assign(n, kNaturalLabel);
  const FilterConfig filter = cfg.filter();
  const std::uint64_t sample_seed = mix64(cfg.perturbation.seed, kSampleSalt);
  parallel_for(half, cfg.workers, [&](std::size_t k) {
    const Tensor& x = *naturals[k];
    const SparseMask mask = masks.empty() ? victim_mask(victim, x, cfg.mask) : *masks[k];
    RngStream rng(sample_seed, mix64(i, k));
    batch.images[k] = produce_pseudo_adv(x, pg, mask, filter, rng);
  });
  for (std::size_t k = 0; k < half; ++k) batch.labels[k] = kAdversarialLabel;
  for (std::size_t k = half; k < n; ++k) batch.images[k] = *naturals[k];
  return batch;
}

void write_training_log(std::ostream& out, std::span<const TrainingLogRow> rows) {
  out << "epoch,batch,loss,forged_fraction,draw_hash\n";
  char hash[17];
  for (const auto& r : rows) {
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(r.draw_hash));
    out << r.epoch << ',' << r.batch << ',' << r.loss << ',' << r.forged_fraction << ',' << hash << '\n';
  }
}

DetectorTraining train_detector(const LabeledDataset& train, const ConvNet& victim, const GaussianParams& base,
                                const ForgeryConfig& cfg, std::span<const SparseMask> masks,
                                const BatchCallback& on_batch) {
  cfg.validate();
  train.validate();
  if (base.dim() != shape_size(train.image_shape()))
    throw DimensionError("train_detector: noise dimension does not match images");
  if (!masks.empty() && masks.size() != train.size())
    throw DimensionError("train_detector: one cached mask per training image required");

  std::vector<SparseMask> computed;
  if (masks.empty()) {
    computed = stage("masks", [&] { return compute_masks(victim, train, cfg.mask, cfg.workers); });
    masks = computed;
  }

  ConvNetSpec spec = victim.spec();
  spec.classes = 2;
  DetectorTraining result{ConvNet::initialized(spec, cfg.detector_train.seed), base, {}, 0};
  Trainer trainer(result.detector, cfg.detector_train);

  const std::size_t bs = cfg.detector_train.batch_size;
  const std::size_t per_epoch = train.size() / bs;
  if (per_epoch == 0) throw ConfigError("train_detector: fewer images than one batch");

  std::vector<const Tensor*> naturals(bs);
  std::vector<const SparseMask*> batch_masks(bs);
  std::vector<const Tensor*> inputs(bs);
  for (std::size_t epoch = 0; epoch < cfg.detector_train.epochs; ++epoch) {
    const BatchPlan plan = make_batches(train.size(), bs, mix64(cfg.detector_train.seed, kShuffleSalt + epoch));
    for (std::size_t b = 0; b < plan.batch_count(); ++b) {
      const auto idx = plan.batch(b);
      for (std::size_t k = 0; k < bs; ++k) {
        naturals[k] = &train.images[idx[k]];
        batch_masks[k] = &masks[idx[k]];
      }
      const std::size_t i = epoch * per_epoch + b;
      const PseudoAdvBatch batch =
          stage("forge", [&] { return build_batch(base, naturals, i, cfg, victim, batch_masks); });
      for (std::size_t k = 0; k < bs; ++k) inputs[k] = &batch.images[k];
      const auto step = stage("step", [&] { return trainer.step(inputs, batch.labels); });
      TrainingLogRow row{epoch, i, step.mean_loss, batch.forged_fraction(), batch.draw_hash};
      result.log.push_back(row);
      if (on_batch) on_batch(row);
    }
  }
  return result;
}

DetectorTraining train_detector(const LabeledDataset& train, const ConvNet& victim,
                                const LabeledDataset& bank_source, const ForgeryConfig& cfg,
                                std::span<const SparseMask> masks, const BatchCallback& on_batch) {
  cfg.validate();
  if (bank_source.size() < cfg.bank_size) throw ConfigError("train_detector: bank source smaller than bank_size");
  const NoiseBank bank = stage("bank", [&] {
    return build_noise_bank(victim, bank_source.slice(0, cfg.bank_size), cfg.initial_attack, cfg.attack,
                            cfg.workers);
  });
  const GaussianParams base = stage("estimate", [&] { return estimate(bank, cfg.shrinkage); });
  DetectorTraining out = train_detector(train, victim, base, cfg, masks, on_batch);
  out.bank_size = bank.count();
  return out;
}

double mean_epoch_loss(std::span<const TrainingLogRow> log, std::size_t epoch) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : log)
    if (r.epoch == epoch) {
      sum += r.loss;
      ++n;
    }
  if (n == 0) throw Error("mean_epoch_loss: no rows for epoch");
  return sum / static_cast<double>(n);
}

}  // namespace pforge
