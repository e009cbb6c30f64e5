#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pforge/tensor.hpp"

namespace pforge {

// Images are C x H x W with pixels in [0, 1].
struct LabeledDataset {
  std::string name;
  std::size_t class_count = 0;
  std::vector<Tensor> images;
  std::vector<int> labels;
  // Free-form provenance, e.g. attack name and epsilon for adversarial sets.
  std::map<std::string, std::string> metadata;

  std::size_t size() const noexcept { return images.size(); }
  Shape image_shape() const;

  // Copies [begin, begin + count), clamped to the dataset size.
  LabeledDataset slice(std::size_t begin, std::size_t count) const;
  LabeledDataset select(std::span<const std::size_t> indices) const;

  // Throws DimensionError/FormatError when an invariant does not hold.
  void validate() const;
};

LabeledDataset load_mnist_idx(const std::filesystem::path& images_path,
                              const std::filesystem::path& labels_path);

// Canonical CIFAR-10 binary batch: records of 1 label byte + 3072 pixel bytes.
LabeledDataset load_cifar10_bin(const std::filesystem::path& path);
LabeledDataset load_cifar10_bins(std::span<const std::filesystem::path> paths);

// "PFDS" cache: version, name, metadata, counts, shape, labels, raw f32.
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path);
LabeledDataset load_dataset(const std::filesystem::path& path);

struct BatchPlan {
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> order;

  std::size_t batch_count() const noexcept { return batch_size ? order.size() / batch_size : 0; }
  std::span<const std::size_t> batch(std::size_t b) const {
    return std::span<const std::size_t>(order).subspan(b * batch_size, batch_size);
  }
};

// Seeded Fisher-Yates order over `count` items. `order` is a full
// permutation; batches cover its first batch_count() * batch_size entries.
// Batch size must be even and >= 2.
BatchPlan make_batches(std::size_t count, std::size_t batch_size, std::uint64_t seed);
inline BatchPlan make_batches(const LabeledDataset& ds, std::size_t batch_size, std::uint64_t seed) {
  return make_batches(ds.size(), batch_size, seed);
}

// Seeded permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::uint64_t stream = 0);

}  // namespace pforge
