#include "pforge/convnet.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "binary_io.hpp"
#include "pforge/error.hpp"
#include "pforge/rng.hpp"

namespace pforge {
namespace {

std::uint64_t next_net_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

float dotf(const float* a, const float* b, std::size_t n) {
  float s[8] = {};
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8)
    for (int j = 0; j < 8; ++j) s[j] += a[k + j] * b[k + j];
  for (; k < n; ++k) s[0] += a[k] * b[k];
  return ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
}

float sumf(const float* a, std::size_t n) {
  float s[8] = {};
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8)
    for (int j = 0; j < 8; ++j) s[j] += a[k + j];
  for (; k < n; ++k) s[0] += a[k];
  return ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
}

// 3x3, stride 1, zero padding 1. `in` is C x H x W, weights O x C x 3 x 3.
void conv3x3_forward(const Tensor& in, const Tensor& weight, const Tensor& bias, Tensor& out) {
  const std::size_t c_in = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t c_out = weight.dim(0);
  out = Tensor({c_out, h, w});
  for (std::size_t o = 0; o < c_out; ++o) {
    float* plane = out.data() + o * h * w;
    std::fill(plane, plane + h * w, bias[o]);
    for (std::size_t c = 0; c < c_in; ++c) {
      const float* src = in.data() + c * h * w;
      const float* k = weight.data() + (o * c_in + c) * 9;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const float wv = k[ky * 3 + kx];
          const std::size_t x_lo = kx == 0 ? 1 : 0;
          const std::size_t x_hi = kx == 2 ? w - 1 : w;
          for (std::size_t y = 0; y < h; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
            float* dst = plane + y * w;
            const float* srow = src + static_cast<std::size_t>(sy) * w - 1 + kx;
            for (std::size_t x = x_lo; x < x_hi; ++x) dst[x] += wv * srow[x];
          }
        }
      }
    }
  }
}

// Accumulates dW, db and (optionally) d input.
void conv3x3_backward(const Tensor& in, const Tensor& weight, const Tensor& dout, Tensor* dweight,
                      Tensor* dbias, Tensor* din) {
  const std::size_t c_in = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t c_out = weight.dim(0);
  std::vector<float> acc(w);
  for (std::size_t o = 0; o < c_out; ++o) {
    const float* g = dout.data() + o * h * w;
    if (dbias) (*dbias)[o] += sumf(g, h * w);
    for (std::size_t c = 0; c < c_in; ++c) {
      const float* src = in.data() + c * h * w;
      const float* k = weight.data() + (o * c_in + c) * 9;
      float* dk = dweight ? dweight->data() + (o * c_in + c) * 9 : nullptr;
      float* dsrc = din ? din->data() + c * h * w : nullptr;
      for (std::size_t ky = 0; ky < 3; ++ky) {
        for (std::size_t kx = 0; kx < 3; ++kx) {
          const float wv = k[ky * 3 + kx];
          const std::size_t x_lo = kx == 0 ? 1 : 0;
          const std::size_t x_hi = kx == 2 ? w - 1 : w;
          if (dk) std::fill(acc.begin(), acc.end(), 0.0f);
          for (std::size_t y = 0; y < h; ++y) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
            if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
            const float* grow = g + y * w;
            const std::size_t off = static_cast<std::size_t>(sy) * w - 1 + kx;
            if (dk) {
              const float* srow = src + off;
              for (std::size_t x = x_lo; x < x_hi; ++x) acc[x] += grow[x] * srow[x];
            }
            if (dsrc) {
              float* drow = dsrc + off;
              for (std::size_t x = x_lo; x < x_hi; ++x) drow[x] += wv * grow[x];
            }
          }
          if (dk) dk[ky * 3 + kx] += sumf(acc.data(), w);
        }
      }
    }
  }
}

void relu_inplace(Tensor& t) {
  for (float& v : t.values()) v = v > 0.0f ? v : 0.0f;
}

void maxpool2_forward(const Tensor& in, Tensor& out, std::vector<std::uint32_t>& argmax) {
  const std::size_t c = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t oh = h / 2, ow = w / 2;
  out = Tensor({c, oh, ow});
  argmax.assign(c * oh * ow, 0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        std::size_t best = (ch * h + 2 * y) * w + 2 * x;
        float best_v = in[best];
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (ch * h + 2 * y + dy) * w + 2 * x + dx;
            if (in[idx] > best_v) {
              best_v = in[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (ch * oh + y) * ow + x;
        out[o] = best_v;
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

void maxpool2_backward(const Tensor& dout, const std::vector<std::uint32_t>& argmax, Tensor& din) {
  for (std::size_t o = 0; o < dout.size(); ++o) din[argmax[o]] += dout[o];
}

std::vector<Tensor> make_param_shapes(const ConvNetSpec& s) {
  if (s.height % 4 != 0 || s.width % 4 != 0 || s.height == 0 || s.width == 0) {
    throw DimensionError("ConvNet input height and width must be positive multiples of 4");
  }
  if (s.channels == 0 || s.classes == 0 || s.hidden == 0) throw DimensionError("ConvNet spec has a zero size");
  const std::size_t flat = ConvNet::kConv2Channels * (s.height / 4) * (s.width / 4);
  std::vector<Tensor> p;
  p.emplace_back(Shape{ConvNet::kConv1Channels, s.channels, 3, 3});
  p.emplace_back(Shape{ConvNet::kConv1Channels});
  p.emplace_back(Shape{ConvNet::kConv2Channels, ConvNet::kConv1Channels, 3, 3});
  p.emplace_back(Shape{ConvNet::kConv2Channels});
  p.emplace_back(Shape{s.hidden, flat});
  p.emplace_back(Shape{s.hidden});
  p.emplace_back(Shape{s.classes, s.hidden});
  p.emplace_back(Shape{s.classes});
  return p;
}

}  // namespace

ConvNet::ConvNet(ConvNetSpec spec) : spec_(spec), params_(make_param_shapes(spec)), id_(next_net_id()) {}

ConvNet::ConvNet(const ConvNet& other)
    : spec_(other.spec_), params_(other.params_), id_(next_net_id()), version_(0) {}

ConvNet& ConvNet::operator=(const ConvNet& other) {
  if (this != &other) {
    spec_ = other.spec_;
    params_ = other.params_;
    id_ = next_net_id();
    version_ = 0;
  }
  return *this;
}

ConvNet ConvNet::initialized(ConvNetSpec spec, std::uint64_t seed) {
  ConvNet net(spec);
  auto& p = net.mutable_parameters();
  const std::size_t weights[] = {kConv1W, kConv2W, kDense1W, kDense2W};
  for (std::size_t layer = 0; layer < 4; ++layer) {
    Tensor& w = p[weights[layer]];
    const std::size_t fan_in = w.size() / w.dim(0);
    const double scale = layer == 3 ? std::sqrt(1.0 / fan_in) : std::sqrt(2.0 / fan_in);
    RngStream rng(seed, 0x1A7E0000ull + layer);
    rng.fill_normal(w.values());
    for (float& v : w.values()) v = static_cast<float>(v * scale);
  }
  return net;
}

std::size_t ConvNet::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : params_) n += t.size();
  return n;
}

Activations ConvNet::forward(const Tensor& x) const {
  if (x.shape() != input_shape()) throw DimensionError("ConvNet::forward: input shape mismatch");
  Activations a;
  a.net_id = id_;
  a.net_version = version_;
  a.input = x;
  conv3x3_forward(x, params_[kConv1W], params_[kConv1B], a.conv1);
  relu_inplace(a.conv1);
  maxpool2_forward(a.conv1, a.pool1, a.pool1_argmax);
  conv3x3_forward(a.pool1, params_[kConv2W], params_[kConv2B], a.conv2);
  relu_inplace(a.conv2);
  maxpool2_forward(a.conv2, a.pool2, a.pool2_argmax);

  const Tensor& w1 = params_[kDense1W];
  const std::size_t flat = w1.dim(1);
  a.hidden.resize(spec_.hidden);
  for (std::size_t h = 0; h < spec_.hidden; ++h) {
    const float v = params_[kDense1B][h] + dotf(w1.data() + h * flat, a.pool2.data(), flat);
    a.hidden[h] = v > 0.0f ? v : 0.0f;
  }
  const Tensor& w2 = params_[kDense2W];
  a.logits.resize(spec_.classes);
  for (std::size_t k = 0; k < spec_.classes; ++k) {
    a.logits[k] = params_[kDense2B][k] + dotf(w2.data() + k * spec_.hidden, a.hidden.data(), spec_.hidden);
  }
  return a;
}

int ConvNet::predict(const Tensor& x) const {
  const auto l = logits(x);
  return static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
}

std::vector<float> ConvNet::probabilities(const Tensor& x) const { return softmax(logits(x)); }

Gradients ConvNet::backward(const Activations& cache, std::span<const float> loss_grad,
                            GradTargets targets) const {
  if (cache.net_id != id_ || cache.net_version != version_) {
    throw Error("ConvNet::backward: stale activation cache");
  }
  if (loss_grad.size() != spec_.classes) throw DimensionError("ConvNet::backward: loss gradient length");

  Gradients g;
  const bool want_w = targets.weights && !targets.stop_at_cam;
  if (want_w) {
    g.params.reserve(kParamCount);
    for (const auto& p : params_) g.params.emplace_back(p.shape());
  }

  // dense2
  const std::size_t hidden = spec_.hidden;
  std::vector<float> dh(hidden, 0.0f);
  const Tensor& w2 = params_[kDense2W];
  for (std::size_t k = 0; k < spec_.classes; ++k) {
    const float gk = loss_grad[k];
    const float* wrow = w2.data() + k * hidden;
    for (std::size_t h = 0; h < hidden; ++h) dh[h] += gk * wrow[h];
    if (want_w) {
      g.params[kDense2B][k] = gk;
      float* dw = g.params[kDense2W].data() + k * hidden;
      for (std::size_t h = 0; h < hidden; ++h) dw[h] = gk * cache.hidden[h];
    }
  }
  for (std::size_t h = 0; h < hidden; ++h)
    if (cache.hidden[h] <= 0.0f) dh[h] = 0.0f;

  // dense1
  const Tensor& w1 = params_[kDense1W];
  const std::size_t flat = w1.dim(1);
  Tensor dpool2(cache.pool2.shape());
  for (std::size_t h = 0; h < hidden; ++h) {
    const float gh = dh[h];
    if (gh == 0.0f) continue;
    const float* wrow = w1.data() + h * flat;
    float* dp = dpool2.data();
    for (std::size_t i = 0; i < flat; ++i) dp[i] += gh * wrow[i];
    if (want_w) {
      float* dw = g.params[kDense1W].data() + h * flat;
      const float* in = cache.pool2.data();
      for (std::size_t i = 0; i < flat; ++i) dw[i] = gh * in[i];
    }
  }
  if (want_w)
    for (std::size_t h = 0; h < hidden; ++h) g.params[kDense1B][h] = dh[h];

  // pool2 -> conv2 activation
  Tensor dconv2(cache.conv2.shape());
  maxpool2_backward(dpool2, cache.pool2_argmax, dconv2);
  g.cam_activation = dconv2;
  if (targets.stop_at_cam) return g;

  for (std::size_t i = 0; i < dconv2.size(); ++i)
    if (cache.conv2[i] <= 0.0f) dconv2[i] = 0.0f;

  Tensor dpool1(cache.pool1.shape());
  conv3x3_backward(cache.pool1, params_[kConv2W], dconv2, want_w ? &g.params[kConv2W] : nullptr,
                   want_w ? &g.params[kConv2B] : nullptr, &dpool1);

  Tensor dconv1(cache.conv1.shape());
  maxpool2_backward(dpool1, cache.pool1_argmax, dconv1);
  for (std::size_t i = 0; i < dconv1.size(); ++i)
    if (cache.conv1[i] <= 0.0f) dconv1[i] = 0.0f;

  Tensor* din = nullptr;
  if (targets.input) {
    g.input = Tensor(cache.input.shape());
    din = &g.input;
  }
  if (want_w || din) {
    conv3x3_backward(cache.input, params_[kConv1W], dconv1, want_w ? &g.params[kConv1W] : nullptr,
                     want_w ? &g.params[kConv1B] : nullptr, din);
  }
  return g;
}

std::vector<float> softmax(std::span<const float> logits) {
  const float m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (float l : logits) z += std::exp(static_cast<double>(l) - m);
  std::vector<float> p(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = static_cast<float>(std::exp(static_cast<double>(logits[i]) - m) / z);
  }
  return p;
}

LossAndGrad cross_entropy(std::span<const float> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw DimensionError("cross_entropy: label out of range");
  }
  const float m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (float l : logits) z += std::exp(static_cast<double>(l) - m);
  const double log_z = std::log(z) + m;
  LossAndGrad out;
  out.loss = log_z - logits[label];
  out.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out.grad[i] = static_cast<float>(std::exp(static_cast<double>(logits[i]) - log_z));
  }
  out.grad[label] -= 1.0f;
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
}

Trainer::Trainer(ConvNet& net, const TrainConfig& config) : net_(net), config_(config) {
  config_.validate();
  for (const auto& p : net_.parameters()) {
    velocity_.emplace_back(p.shape());
    if (config_.optimizer == Optimizer::kAdam) second_moment_.emplace_back(p.shape());
  }
}

Trainer::StepResult Trainer::step(std::span<const Tensor* const> images, std::span<const int> labels) {
  if (images.size() != labels.size() || images.empty()) throw DimensionError("Trainer::step: bad batch");
  std::vector<Tensor> grad;
  for (const auto& p : net_.parameters()) grad.emplace_back(p.shape());
  StepResult result;
  double loss_sum = 0.0;
  GradTargets targets;
  targets.input = false;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Activations act = net_.forward(*images[i]);
    const LossAndGrad lg = cross_entropy(act.logits, labels[i]);
    loss_sum += lg.loss;
    const auto pred = std::max_element(act.logits.begin(), act.logits.end()) - act.logits.begin();
    if (pred == labels[i]) ++result.correct;
    const Gradients g = net_.backward(act, lg.grad, targets);
    for (std::size_t p = 0; p < grad.size(); ++p) {
      float* dst = grad[p].data();
      const float* src = g.params[p].data();
      for (std::size_t k = 0; k < grad[p].size(); ++k) dst[k] += src[k];
    }
  }
  result.mean_loss = loss_sum / static_cast<double>(images.size());
  if (!std::isfinite(result.mean_loss)) throw TrainingError("training diverged: loss is not finite");

  const float inv_n = 1.0f / static_cast<float>(images.size());
  const auto lr = static_cast<float>(config_.learning_rate);
  auto& params = net_.mutable_parameters();
  if (config_.optimizer == Optimizer::kSgdMomentum) {
    const auto mom = static_cast<float>(config_.momentum);
    for (std::size_t p = 0; p < params.size(); ++p) {
      float* w = params[p].data();
      float* v = velocity_[p].data();
      const float* g = grad[p].data();
      for (std::size_t k = 0; k < params[p].size(); ++k) {
        v[k] = mom * v[k] + g[k] * inv_n;
        w[k] -= lr * v[k];
      }
    }
    return result;
  }
  ++steps_;
  const auto b1 = static_cast<float>(config_.adam_beta1);
  const auto b2 = static_cast<float>(config_.adam_beta2);
  const auto eps = static_cast<float>(config_.adam_epsilon);
  const auto c1 = static_cast<float>(1.0 - std::pow(config_.adam_beta1, static_cast<double>(steps_)));
  const auto c2 = static_cast<float>(1.0 - std::pow(config_.adam_beta2, static_cast<double>(steps_)));
  for (std::size_t p = 0; p < params.size(); ++p) {
    float* w = params[p].data();
    float* m = velocity_[p].data();
    float* v = second_moment_[p].data();
    const float* g = grad[p].data();
    for (std::size_t k = 0; k < params[p].size(); ++k) {
      const float gk = g[k] * inv_n;
      m[k] = b1 * m[k] + (1.0f - b1) * gk;
      v[k] = b2 * v[k] + (1.0f - b2) * gk * gk;
      w[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
    }
  }
  return result;
}

std::vector<EpochStats> train(ConvNet& net, const LabeledDataset& ds, const TrainConfig& config,
                              const EpochCallback& on_epoch) {
  config.validate();
  if (ds.size() == 0) throw TrainingError("cannot train on an empty dataset");
  if (ds.image_shape() != net.input_shape()) throw DimensionError("train: dataset shape does not match network");
  Trainer trainer(net, config);
  std::vector<EpochStats> log;
  const std::size_t bs = std::min(config.batch_size, ds.size());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = permutation(ds.size(), config.seed, 0xE0C40000ull + epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    std::vector<const Tensor*> batch_images;
    std::vector<int> batch_labels;
    for (std::size_t start = 0; start + bs <= order.size(); start += bs) {
      batch_images.clear();
      batch_labels.clear();
      for (std::size_t k = start; k < start + bs; ++k) {
        batch_images.push_back(&ds.images[order[k]]);
        batch_labels.push_back(ds.labels[order[k]]);
      }
      const auto r = trainer.step(batch_images, batch_labels);
      loss_sum += r.mean_loss * bs;
      correct += r.correct;
      seen += bs;
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(seen),
                     static_cast<double>(correct) / static_cast<double>(seen)};
    log.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return log;
}

double accuracy(const ConvNet& net, const LabeledDataset& ds) {
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (net.predict(ds.images[i]) == ds.labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

Tensor resize_bilinear(const Tensor& map, std::size_t out_h, std::size_t out_w) {
  const std::size_t in_h = map.dim(0), in_w = map.dim(1);
  Tensor out({out_h, out_w});
  const double sy = static_cast<double>(in_h) / out_h;
  const double sx = static_cast<double>(in_w) / out_w;
  for (std::size_t y = 0; y < out_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - y0;
    for (std::size_t x = 0; x < out_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - x0;
      const double top = map[y0 * in_w + x0] * (1 - wx) + map[y0 * in_w + x1] * wx;
      const double bottom = map[y1 * in_w + x0] * (1 - wx) + map[y1 * in_w + x1] * wx;
      out[y * out_w + x] = static_cast<float>(top * (1 - wy) + bottom * wy);
    }
  }
  return out;
}

Tensor gradcam(const ConvNet& net, const Tensor& x, int target_class) {
  if (target_class < 0 || static_cast<std::size_t>(target_class) >= net.class_count()) {
    throw DimensionError("gradcam: class out of range");
  }
  const Activations act = net.forward(x);
  std::vector<float> onehot(net.class_count(), 0.0f);
  onehot[target_class] = 1.0f;
  GradTargets targets;
  targets.stop_at_cam = true;
  const Gradients g = net.backward(act, onehot, targets);

  const std::size_t k_count = act.conv2.dim(0), h = act.conv2.dim(1), w = act.conv2.dim(2);
  const std::size_t plane = h * w;
  Tensor cam({h, w});
  for (std::size_t k = 0; k < k_count; ++k) {
    const float weight = sumf(g.cam_activation.data() + k * plane, plane) / static_cast<float>(plane);
    if (weight == 0.0f) continue;
    const float* a = act.conv2.data() + k * plane;
    for (std::size_t i = 0; i < plane; ++i) cam[i] += weight * a[i];
  }
  relu_inplace(cam);
  Tensor up = resize_bilinear(cam, net.spec().height, net.spec().width);
  const float m = up.max_abs();
  if (m > 0.0f)
    for (float& v : up.values()) v /= m;
  return up;
}

void save_convnet(const ConvNet& net, const std::filesystem::path& path) {
  io::Writer w;
  w.magic("PFNW");
  w.u16(1);
  const auto& s = net.spec();
  w.u32(static_cast<std::uint32_t>(s.channels));
  w.u32(static_cast<std::uint32_t>(s.height));
  w.u32(static_cast<std::uint32_t>(s.width));
  w.u32(static_cast<std::uint32_t>(s.classes));
  const auto& params = net.parameters();
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.u32(static_cast<std::uint32_t>(p.rank()));
    for (std::size_t d : p.shape()) w.u32(static_cast<std::uint32_t>(d));
  }
  for (const auto& p : params) w.f32s(p.values());
  w.finish(path);
}

ConvNet load_convnet(const std::filesystem::path& path) {
  io::Reader r(path);
  r.expect_magic("PFNW");
  if (const auto version = r.u16(); version != 1) r.fail("unsupported PFNW version " + std::to_string(version));
  ConvNetSpec spec;
  spec.channels = r.u32();
  spec.height = r.u32();
  spec.width = r.u32();
  spec.classes = r.u32();
  const std::uint32_t count = r.u32();
  if (count != ConvNet::kParamCount) r.fail("PFNW layer count " + std::to_string(count) + " unsupported");
  std::vector<Shape> shapes(count);
  for (auto& shape : shapes) {
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 4) r.fail("bad PFNW tensor rank");
    shape.resize(rank);
    for (auto& d : shape) d = r.u32();
  }
  spec.hidden = shapes[ConvNet::kDense1B].at(0);
  ConvNet net(spec);
  auto& params = net.mutable_parameters();
  for (std::size_t i = 0; i < count; ++i) {
    if (params[i].shape() != shapes[i]) r.fail("PFNW tensor " + std::to_string(i) + " has unexpected shape");
    r.f32s(params[i].values());
  }
  r.expect_end();
  return net;
}

}  // namespace pforge
