#include "pforge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

#include "pforge/error.hpp"

namespace pforge {

NotPositiveDefiniteError::NotPositiveDefiniteError(std::size_t pivot_index, double pivot_value)
    : NumericError("matrix is not positive definite: pivot " + std::to_string(pivot_index) +
                   " = " + std::to_string(pivot_value)),
      pivot_index_(pivot_index),
      pivot_value_(pivot_value) {}

FormatError::FormatError(const std::string& what, std::uint64_t byte_offset)
    : Error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
      byte_offset_(byte_offset) {}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape size " + std::to_string(shape_size(shape_)));
  }
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

float Tensor::max_abs() const noexcept {
  float m = 0.0f;
  for (float v : data_) m = std::max(m, std::fabs(v));
  return m;
}

std::vector<float> flatten(const Tensor& x) { return x.storage(); }

Tensor unflatten(std::span<const float> z, const Shape& shape) {
  if (z.size() != shape_size(shape)) {
    throw DimensionError("cannot unflatten vector of length " + std::to_string(z.size()) +
                         " into shape of size " + std::to_string(shape_size(shape)));
  }
  return Tensor(shape, std::vector<float>(z.begin(), z.end()));
}

}  // namespace pforge
