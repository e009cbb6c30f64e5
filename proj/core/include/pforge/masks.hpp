#pragma once

#include <filesystem>

#include "pforge/tensor.hpp"

namespace pforge {

// Thresholds on [0, 1] maps. The 0-255 values 125 and 100 become 125/255 and
// 100/255.
struct MaskConfig {
  double gamma_s = 0.0;            // saliency
  double gamma_c = 125.0 / 255.0;  // Grad-CAM
  double gamma_l = 100.0 / 255.0;  // Sobel

  void validate() const;
};

// H x W, every value exactly 0 or 1.
struct SparseMask {
  Tensor bits;

  double density() const;
};

struct MaskParts {
  SparseMask high_frequency;  // saliency OR cam
  SparseMask edges;           // Sobel
  SparseMask mask;            // high_frequency AND edges
};

// Channel mean of a C x H x W image, as an H x W map.
Tensor to_grayscale(const Tensor& image);

// Spectral-residual saliency of an H x W map, max-normalized to [0, 1].
Tensor saliency_spectral_residual(const Tensor& gray);

// |grad| from the 3x3 Sobel pair with replicated borders, max-normalized.
Tensor sobel_magnitude(const Tensor& gray);

// 1 where map > gamma, else 0.
Tensor map_indicator(const Tensor& map, double gamma);

MaskParts compose_mask_parts(const Tensor& image, const Tensor& cam, const MaskConfig& cfg);
SparseMask compose_mask(const Tensor& image, const Tensor& cam, const MaskConfig& cfg);

// Binary 8-bit PGM (P5) of an H x W map in [0, 1].
void write_pgm(const Tensor& map, const std::filesystem::path& path);

}  // namespace pforge
