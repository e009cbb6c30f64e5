#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <vector>

#include "pforge/attacks.hpp"
#include "pforge/convnet.hpp"
#include "pforge/dataset.hpp"
#include "pforge/masks.hpp"
#include "pforge/noise_model.hpp"

namespace pforge {

// Adam at 1e-3: plain SGD barely moves on the faint, edge-localized signal.
inline TrainConfig default_detector_train() {
  TrainConfig t;
  t.optimizer = Optimizer::kAdam;
  t.learning_rate = 1e-3;
  return t;
}

struct ForgeryConfig {
  PerturbationConfig perturbation;
  MaskConfig mask;
  double gamma_p_quantile = 0.95;
  AttackKind initial_attack = AttackKind::kFgsm;
  // Seeds the noise bank. Its epsilon also truncates the pseudo-noise.
  AttackConfig attack;
  std::size_t bank_size = 1000;
  ShrinkageSpec shrinkage;
  // batch_size, epochs and the detector init seed live here.
  TrainConfig detector_train = default_detector_train();
  std::size_t workers = 1;

  void validate() const;
  FilterConfig filter() const;
};

// Detector labels.
inline constexpr int kNaturalLabel = 0;

struct PseudoAdvBatch {
  std::vector<Tensor> images;
  std::vector<int> labels;  // first half 1 (forged), second half 0
  std::size_t batch_index = 0;
  std::uint64_t draw_hash = 0;

  double forged_fraction() const;
};

// clip01(x + eta * mask) with eta from sample_filtered; mask is H x W and
// shared across channels. Off-mask pixels are copied from x.
Tensor produce_pseudo_adv(const Tensor& x, const PerturbedGaussian& pg, const SparseMask& mask,
                          const FilterConfig& filter, RngStream& rng);

// Grad-CAM on the victim's predicted class, then compose_mask.
SparseMask victim_mask(const ConvNet& victim, const Tensor& x, const MaskConfig& cfg);
std::vector<SparseMask> compute_masks(const ConvNet& victim, const LabeledDataset& ds, const MaskConfig& cfg,
                                      std::size_t workers = 1);

// Forges the first half of `naturals` from a fresh perturbation of `base` for
// batch i. `masks`, when given, are the cached masks of the naturals.
PseudoAdvBatch build_batch(const GaussianParams& base, std::span<const Tensor* const> naturals, std::size_t i,
                           const ForgeryConfig& cfg, const ConvNet& victim,
                           std::span<const SparseMask* const> masks = {});

struct TrainingLogRow {
  std::size_t epoch = 0;
  std::size_t batch = 0;  // global index epoch * batches_per_epoch + b
  double loss = 0.0;
  double forged_fraction = 0.0;
  std::uint64_t draw_hash = 0;
};

void write_training_log(std::ostream& out, std::span<const TrainingLogRow> rows);

struct DetectorTraining {
  ConvNet detector;
  GaussianParams base;
  std::vector<TrainingLogRow> log;
  std::size_t bank_size = 0;
};

using BatchCallback = std::function<void(const TrainingLogRow&)>;

// Trains a 2-class detector on naturals from `train` plus forged samples.
// `masks` may hold the cached masks of `train`.
DetectorTraining train_detector(const LabeledDataset& train, const ConvNet& victim, const GaussianParams& base,
                                const ForgeryConfig& cfg, std::span<const SparseMask> masks = {},
                                const BatchCallback& on_batch = {});

// Builds the bank from the first bank_size images of `bank_source` with the
// initial attack, estimates the base Gaussian, then trains.
DetectorTraining train_detector(const LabeledDataset& train, const ConvNet& victim,
                                const LabeledDataset& bank_source, const ForgeryConfig& cfg,
                                std::span<const SparseMask> masks = {}, const BatchCallback& on_batch = {});

double mean_epoch_loss(std::span<const TrainingLogRow> log, std::size_t epoch);

}  // namespace pforge
