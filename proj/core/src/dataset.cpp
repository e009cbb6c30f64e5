#include "pforge/dataset.hpp"

#include <numeric>

#include "binary_io.hpp"
#include "pforge/error.hpp"
#include "pforge/rng.hpp"

namespace pforge {

Shape LabeledDataset::image_shape() const {
  if (images.empty()) return {};
  return images.front().shape();
}

LabeledDataset LabeledDataset::slice(std::size_t begin, std::size_t count) const {
  LabeledDataset out;
  out.name = name;
  out.class_count = class_count;
  out.metadata = metadata;
  const std::size_t lo = std::min(begin, size());
  const std::size_t hi = std::min(size(), lo + count);
  out.images.assign(images.begin() + lo, images.begin() + hi);
  out.labels.assign(labels.begin() + lo, labels.begin() + hi);
  return out;
}

LabeledDataset LabeledDataset::select(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.name = name;
  out.class_count = class_count;
  out.metadata = metadata;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    out.images.push_back(images.at(i));
    out.labels.push_back(labels.at(i));
  }
  return out;
}

void LabeledDataset::validate() const {
  if (images.size() != labels.size()) throw DimensionError("dataset images/labels length mismatch");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count) {
      throw DimensionError("label out of range at index " + std::to_string(i));
    }
    for (float v : images[i].values()) {
      if (!(v >= 0.0f && v <= 1.0f)) throw DimensionError("pixel outside [0,1] at index " + std::to_string(i));
    }
  }
}

LabeledDataset load_mnist_idx(const std::filesystem::path& images_path,
                              const std::filesystem::path& labels_path) {
  io::Reader img(images_path);
  if (img.u32_be() != 0x00000803u) {
    throw FormatError("bad IDX image magic in " + images_path.string(), 0);
  }
  const std::uint32_t count = img.u32_be();
  const std::uint32_t rows = img.u32_be();
  const std::uint32_t cols = img.u32_be();

  io::Reader lab(labels_path);
  if (lab.u32_be() != 0x00000801u) {
    throw FormatError("bad IDX label magic in " + labels_path.string(), 0);
  }
  const std::uint32_t label_count = lab.u32_be();
  if (label_count != count) {
    throw FormatError("IDX label count " + std::to_string(label_count) +
                          " does not match image count " + std::to_string(count),
                      4);
  }

  LabeledDataset ds;
  ds.name = "mnist";
  ds.class_count = 10;
  ds.images.reserve(count);
  ds.labels.reserve(count);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto bytes = img.raw(pixels);
    std::vector<float> data(pixels);
    for (std::size_t p = 0; p < pixels; ++p) data[p] = static_cast<float>(bytes[p]) / 255.0f;
    ds.images.emplace_back(Shape{1, rows, cols}, std::move(data));
    const std::uint8_t label = lab.u8();
    if (label > 9) lab.fail("IDX label out of range");
    ds.labels.push_back(label);
  }
  return ds;
}

namespace {

constexpr std::size_t kCifarPixels = 3 * 32 * 32;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

void append_cifar(LabeledDataset& ds, const std::filesystem::path& path) {
  io::Reader r(path);
  if (r.size() % kCifarRecord != 0) {
    throw FormatError("CIFAR-10 file size " + std::to_string(r.size()) + " is not a multiple of 3073",
                      r.size() - r.size() % kCifarRecord);
  }
  const std::size_t records = r.size() / kCifarRecord;
  for (std::size_t i = 0; i < records; ++i) {
    const std::uint8_t label = r.u8();
    if (label > 9) r.fail("CIFAR-10 label out of range");
    const auto bytes = r.raw(kCifarPixels);
    std::vector<float> data(kCifarPixels);
    for (std::size_t p = 0; p < kCifarPixels; ++p) data[p] = static_cast<float>(bytes[p]) / 255.0f;
    ds.images.emplace_back(Shape{3, 32, 32}, std::move(data));
    ds.labels.push_back(label);
  }
}

}  // namespace

LabeledDataset load_cifar10_bin(const std::filesystem::path& path) {
  const std::filesystem::path one[] = {path};
  return load_cifar10_bins(one);
}

LabeledDataset load_cifar10_bins(std::span<const std::filesystem::path> paths) {
  LabeledDataset ds;
  ds.name = "cifar10";
  ds.class_count = 10;
  for (const auto& p : paths) append_cifar(ds, p);
  return ds;
}

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path) {
  io::Writer w;
  w.magic("PFDS");
  w.u16(1);
  w.str(ds.name);
  w.u32(static_cast<std::uint32_t>(ds.metadata.size()));
  for (const auto& [k, v] : ds.metadata) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(ds.class_count));
  w.u32(static_cast<std::uint32_t>(ds.size()));
  const Shape shape = ds.image_shape();
  w.u32(static_cast<std::uint32_t>(shape.size()));
  for (std::size_t d : shape) w.u32(static_cast<std::uint32_t>(d));
  for (int label : ds.labels) w.u32(static_cast<std::uint32_t>(label));
  for (const auto& img : ds.images) {
    if (img.shape() != shape) throw DimensionError("save_dataset: images differ in shape");
    w.f32s(img.values());
  }
  w.finish(path);
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("PFDS");
  if (const auto version = r.u16(); version != 1) r.fail("unsupported PFDS version " + std::to_string(version));
  LabeledDataset ds;
  ds.name = r.str();
  const std::uint32_t meta = r.u32();
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string k = r.str();
    ds.metadata[std::move(k)] = r.str();
  }
  ds.class_count = r.u32();
  const std::uint32_t count = r.u32();
  const std::uint32_t rank = r.u32();
  if (rank > 8) r.fail("implausible PFDS rank");
  Shape shape(rank);
  for (auto& d : shape) d = r.u32();
  const std::size_t per_image = count ? shape_size(shape) : 0;
  if (r.remaining() != 4ull * count + 4ull * count * per_image) r.fail("PFDS payload size mismatch");
  ds.labels.resize(count);
  for (int& label : ds.labels) label = static_cast<int>(r.u32());
  ds.images.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::vector<float> data(per_image);
    r.f32s(data);
    ds.images.emplace_back(shape, std::move(data));
  }
  return ds;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream rng(seed, stream);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.below(i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

BatchPlan make_batches(std::size_t count, std::size_t batch_size, std::uint64_t seed) {
  if (batch_size < 2 || batch_size % 2 != 0) {
    throw ConfigError("batch size must be even and at least 2, got " + std::to_string(batch_size));
  }
  BatchPlan plan;
  plan.batch_size = batch_size;
  plan.seed = seed;
  plan.order = permutation(count, seed, 0xBA7C4ull);
  return plan;
}

}  // namespace pforge
