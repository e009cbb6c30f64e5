#include "pforge/masks.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>

#include "pforge/error.hpp"

namespace pforge {
namespace {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

FftwBuffer fftw_buffer(std::size_t n) {
  return FftwBuffer(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
}

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

// FFTW planning is not thread-safe; execution on fresh buffers is.
const PlanPair& plans_for(std::size_t h, std::size_t w) {
  static std::mutex mutex;
  static std::map<std::pair<std::size_t, std::size_t>, PlanPair> cache;
  std::lock_guard lock(mutex);
  auto [it, inserted] = cache.try_emplace({h, w});
  if (inserted) {
    auto in = fftw_buffer(h * w);
    auto out = fftw_buffer(h * w);
    it->second.forward = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), in.get(), out.get(),
                                          FFTW_FORWARD, FFTW_ESTIMATE);
    it->second.inverse = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), in.get(), out.get(),
                                          FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  return it->second;
}

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

std::vector<double> box3x3(const std::vector<double>& src, std::size_t h, std::size_t w) {
  std::vector<double> out(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          s += src[clamp_index(static_cast<std::ptrdiff_t>(y) + dy, h) * w +
                   clamp_index(static_cast<std::ptrdiff_t>(x) + dx, w)];
      out[y * w + x] = s / 9.0;
    }
  }
  return out;
}

std::vector<double> gaussian_blur(const std::vector<double>& src, std::size_t h, std::size_t w, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& k : kernel) k /= norm;
  std::vector<double> tmp(h * w), out(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i)
        s += kernel[i + radius] * src[y * w + clamp_index(static_cast<std::ptrdiff_t>(x) + i, w)];
      tmp[y * w + x] = s;
    }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i)
        s += kernel[i + radius] * tmp[clamp_index(static_cast<std::ptrdiff_t>(y) + i, h) * w + x];
      out[y * w + x] = s;
    }
  return out;
}

Tensor normalized(const std::vector<double>& v, std::size_t h, std::size_t w) {
  const double m = *std::max_element(v.begin(), v.end());
  Tensor out({h, w});
  if (!(m > 0.0)) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(std::max(v[i], 0.0) / m);
  return out;
}

void require_map(const Tensor& t, const char* who) {
  if (t.rank() != 2 || t.size() == 0) throw DimensionError(std::string(who) + ": expected an H x W map");
}

}  // namespace

void MaskConfig::validate() const {
  for (double g : {gamma_s, gamma_c, gamma_l})
    if (!(g >= 0.0 && g <= 1.0)) throw ConfigError("mask thresholds must lie in [0, 1]");
}

double SparseMask::density() const {
  if (bits.size() == 0) return 0.0;
  double ones = 0.0;
  for (float v : bits.values()) ones += v;
  return ones / static_cast<double>(bits.size());
}

Tensor to_grayscale(const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("to_grayscale: expected C x H x W");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor gray({h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < h * w; ++p) gray[p] += image[ch * h * w + p];
  if (c > 1)
    for (float& v : gray.values()) v /= static_cast<float>(c);
  return gray;
}

Tensor saliency_spectral_residual(const Tensor& gray) {
  require_map(gray, "saliency_spectral_residual");
  const std::size_t h = gray.dim(0), w = gray.dim(1), n = h * w;
  const PlanPair& plans = plans_for(h, w);
  auto in = fftw_buffer(n);
  auto spec = fftw_buffer(n);
  for (std::size_t i = 0; i < n; ++i) {
    in[i][0] = gray[i];
    in[i][1] = 0.0;
  }
  fftw_execute_dft(plans.forward, in.get(), spec.get());

  std::vector<double> amplitude(n), phase(n);
  double peak = 0.0, ac_peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    amplitude[i] = std::hypot(spec[i][0], spec[i][1]);
    phase[i] = std::atan2(spec[i][1], spec[i][0]);
    peak = std::max(peak, amplitude[i]);
    if (i != 0) ac_peak = std::max(ac_peak, amplitude[i]);
  }
  // No structure beyond the mean: nothing is salient.
  if (!(ac_peak > 1e-9 * (peak + 1e-12))) return Tensor({h, w});

  const double floor = peak * 1e-12;
  std::vector<double> log_amp(n);
  for (std::size_t i = 0; i < n; ++i) log_amp[i] = std::log(std::max(amplitude[i], floor));
  const std::vector<double> smooth = box3x3(log_amp, h, w);
  for (std::size_t i = 0; i < n; ++i) {
    const double mag = std::exp(log_amp[i] - smooth[i]);
    in[i][0] = mag * std::cos(phase[i]);
    in[i][1] = mag * std::sin(phase[i]);
  }
  fftw_execute_dft(plans.inverse, in.get(), spec.get());
  std::vector<double> energy(n);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double re = spec[i][0] * scale, im = spec[i][1] * scale;
    energy[i] = re * re + im * im;
  }
  return normalized(gaussian_blur(energy, h, w, 2.5), h, w);
}

Tensor sobel_magnitude(const Tensor& gray) {
  require_map(gray, "sobel_magnitude");
  const std::size_t h = gray.dim(0), w = gray.dim(1);
  auto px = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    return static_cast<double>(gray[clamp_index(y, h) * w + clamp_index(x, w)]);
  };
  std::vector<double> mag(h * w);
  for (std::size_t yy = 0; yy < h; ++yy) {
    for (std::size_t xx = 0; xx < w; ++xx) {
      const auto y = static_cast<std::ptrdiff_t>(yy), x = static_cast<std::ptrdiff_t>(xx);
      const double gx = (px(y - 1, x + 1) + 2.0 * px(y, x + 1) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2.0 * px(y, x - 1) + px(y + 1, x - 1));
      const double gy = (px(y + 1, x - 1) + 2.0 * px(y + 1, x) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2.0 * px(y - 1, x) + px(y - 1, x + 1));
      mag[yy * w + xx] = std::sqrt(gx * gx + gy * gy);
    }
  }
  return normalized(mag, h, w);
}

Tensor map_indicator(const Tensor& map, double gamma) {
  Tensor out(map.shape());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = map[i] > gamma ? 1.0f : 0.0f;
  return out;
}

MaskParts compose_mask_parts(const Tensor& image, const Tensor& cam, const MaskConfig& cfg) {
  cfg.validate();
  const Tensor gray = to_grayscale(image);
  if (cam.shape() != gray.shape()) throw DimensionError("compose_mask: CAM size does not match image");
  const Tensor salient = map_indicator(saliency_spectral_residual(gray), cfg.gamma_s);
  const Tensor activated = map_indicator(cam, cfg.gamma_c);
  MaskParts parts;
  parts.high_frequency.bits = Tensor(gray.shape());
  for (std::size_t i = 0; i < gray.size(); ++i)
    parts.high_frequency.bits[i] = (salient[i] > 0.0f || activated[i] > 0.0f) ? 1.0f : 0.0f;
  parts.edges.bits = map_indicator(sobel_magnitude(gray), cfg.gamma_l);
  parts.mask.bits = Tensor(gray.shape());
  for (std::size_t i = 0; i < gray.size(); ++i)
    parts.mask.bits[i] = parts.high_frequency.bits[i] * parts.edges.bits[i];
  return parts;
}

SparseMask compose_mask(const Tensor& image, const Tensor& cam, const MaskConfig& cfg) {
  return compose_mask_parts(image, cam, cfg).mask;
}

void write_pgm(const Tensor& map, const std::filesystem::path& path) {
  require_map(map, "write_pgm");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string());
  out << "P5\n" << map.dim(1) << ' ' << map.dim(0) << "\n255\n";
  for (float v : map.values()) {
    const auto byte = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    out.put(static_cast<char>(byte));
  }
}

}  // namespace pforge
