#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "pforge/dataset.hpp"
#include "pforge/tensor.hpp"

namespace pforge {

struct ConvNetSpec {
  std::size_t channels = 1;
  std::size_t height = 28;
  std::size_t width = 28;
  std::size_t classes = 10;
  std::size_t hidden = 64;

  friend bool operator==(const ConvNetSpec&, const ConvNetSpec&) = default;
};

// Cached forward state. Only valid for the network (and weight version) that
// produced it.
struct Activations {
  std::uint64_t net_id = 0;
  std::uint64_t net_version = 0;
  Tensor input;
  Tensor conv1;          // post-ReLU, 16 x H x W
  Tensor pool1;          // 16 x H/2 x W/2
  std::vector<std::uint32_t> pool1_argmax;
  Tensor conv2;          // post-ReLU, 32 x H/2 x W/2; the Grad-CAM layer
  Tensor pool2;          // 32 x H/4 x W/4
  std::vector<std::uint32_t> pool2_argmax;
  std::vector<float> hidden;  // post-ReLU
  std::vector<float> logits;
};

struct GradTargets {
  bool weights = true;
  bool input = true;
  // Stop once the gradient w.r.t. the last conv activation is known.
  bool stop_at_cam = false;
};

struct Gradients {
  std::vector<Tensor> params;  // same order/shape as ConvNet::parameters(); empty if not requested
  Tensor input;                // empty if not requested
  Tensor cam_activation;       // d loss / d conv2 activation
};

// conv3x3(16) -> relu -> maxpool2 -> conv3x3(32) -> relu -> maxpool2 -> dense(hidden) -> relu -> dense(classes)
class ConvNet {
 public:
  static constexpr std::size_t kConv1Channels = 16;
  static constexpr std::size_t kConv2Channels = 32;
  enum Param : std::size_t { kConv1W, kConv1B, kConv2W, kConv2B, kDense1W, kDense1B, kDense2W, kDense2B, kParamCount };

  // All weights zero.
  explicit ConvNet(ConvNetSpec spec);
  // He-normal weights from a seeded stream, zero biases.
  static ConvNet initialized(ConvNetSpec spec, std::uint64_t seed);

  ConvNet(const ConvNet& other);
  ConvNet& operator=(const ConvNet& other);
  ConvNet(ConvNet&&) noexcept = default;
  ConvNet& operator=(ConvNet&&) noexcept = default;

  const ConvNetSpec& spec() const noexcept { return spec_; }
  Shape input_shape() const { return {spec_.channels, spec_.height, spec_.width}; }
  std::size_t class_count() const noexcept { return spec_.classes; }

  const std::vector<Tensor>& parameters() const noexcept { return params_; }
  // Any mutable access invalidates outstanding Activations.
  std::vector<Tensor>& mutable_parameters() noexcept {
    ++version_;
    return params_;
  }
  std::size_t parameter_count() const noexcept;

  Activations forward(const Tensor& x) const;
  std::vector<float> logits(const Tensor& x) const { return forward(x).logits; }
  int predict(const Tensor& x) const;
  std::vector<float> probabilities(const Tensor& x) const;

  // Backpropagates `loss_grad` (d loss / d logits). Throws Error when `cache`
  // came from another network or an older weight version.
  Gradients backward(const Activations& cache, std::span<const float> loss_grad,
                     GradTargets targets = {}) const;

  friend bool operator==(const ConvNet& a, const ConvNet& b) {
    return a.spec_ == b.spec_ && a.params_ == b.params_;
  }

 private:
  ConvNetSpec spec_;
  std::vector<Tensor> params_;
  std::uint64_t id_;
  std::uint64_t version_ = 0;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<float> grad;
};

// -log softmax(logits)[label] and softmax(logits) - onehot(label).
LossAndGrad cross_entropy(std::span<const float> logits, int label);
std::vector<float> softmax(std::span<const float> logits);

enum class Optimizer { kSgdMomentum, kAdam };

struct TrainConfig {
  Optimizer optimizer = Optimizer::kSgdMomentum;
  double learning_rate = 0.01;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double momentum = 0.9;  // SGD only
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;
};

// Gradients are averaged over the batch. SGD uses heavy-ball momentum
// (v = m v + g; w -= lr v); Adam uses bias-corrected moments.
class Trainer {
 public:
  Trainer(ConvNet& net, const TrainConfig& config);

  struct StepResult {
    double mean_loss = 0.0;
    std::size_t correct = 0;
  };
  StepResult step(std::span<const Tensor* const> images, std::span<const int> labels);

 private:
  ConvNet& net_;
  TrainConfig config_;
  std::vector<Tensor> velocity_;  // SGD velocity or Adam first moment
  std::vector<Tensor> second_moment_;
  std::uint64_t steps_ = 0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

std::vector<EpochStats> train(ConvNet& net, const LabeledDataset& ds, const TrainConfig& config,
                              const EpochCallback& on_epoch = {});

double accuracy(const ConvNet& net, const LabeledDataset& ds);

// Gradient-weighted class activation map over the last conv layer, bilinearly
// upsampled to the input size and max-normalized to [0, 1].
Tensor gradcam(const ConvNet& net, const Tensor& x, int target_class);

// Bilinear resize with half-pixel centers (align_corners = false).
Tensor resize_bilinear(const Tensor& map, std::size_t out_h, std::size_t out_w);

// "PFNW" v1 weight file.
void save_convnet(const ConvNet& net, const std::filesystem::path& path);
ConvNet load_convnet(const std::filesystem::path& path);

}  // namespace pforge
