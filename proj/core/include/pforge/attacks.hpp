#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "pforge/convnet.hpp"
#include "pforge/dataset.hpp"
#include "pforge/tensor.hpp"

namespace pforge {

enum class AttackKind { kFgsm, kBim, kPgd, kMim, kDim, kWhitebox };

inline constexpr AttackKind kAllAttacks[] = {AttackKind::kFgsm, AttackKind::kBim, AttackKind::kPgd,
                                             AttackKind::kMim,  AttackKind::kDim, AttackKind::kWhitebox};

std::string_view attack_name(AttackKind kind);
// Accepts the CLI names fgsm, bim, pgd, mim, dim, whitebox.
std::optional<AttackKind> parse_attack(std::string_view name);

// l-infinity attacks in [0, 1] pixel units.
struct AttackConfig {
  float epsilon = 8.0f / 255.0f;
  std::size_t steps = 10;
  float step_size = 2.0f / 255.0f;
  double decay = 1.0;           // MIM momentum
  double diversity_prob = 0.5;  // DIM transform probability
  double alpha_joint = 1.0;     // white-box detector-loss weight
  bool random_start = true;     // PGD only
  std::uint64_t seed = 1;

  void validate() const;
};

// Networks an attack may query. The detector is only needed for kWhitebox.
struct AttackTargets {
  const ConvNet* victim = nullptr;
  const ConvNet* detector = nullptr;
};

// Detector class index for "adversarial".
inline constexpr int kAdversarialLabel = 1;

Tensor fgsm(const ConvNet& net, const Tensor& x, int y, const AttackConfig& cfg);
Tensor bim(const ConvNet& net, const Tensor& x, int y, const AttackConfig& cfg);
// `stream` selects the random stream for the random start; give every sample
// its own value.
Tensor pgd(const ConvNet& net, const Tensor& x, int y, const AttackConfig& cfg, std::uint64_t stream = 0);
Tensor mim(const ConvNet& net, const Tensor& x, int y, const AttackConfig& cfg);
Tensor dim(const ConvNet& net, const Tensor& x, int y, const AttackConfig& cfg, std::uint64_t stream = 0);
// PGD on L(f(x), y) + alpha * L(f_d(x), adversarial).
Tensor whitebox_joint(const ConvNet& victim, const ConvNet& detector, const Tensor& x, int y,
                      const AttackConfig& cfg, std::uint64_t stream = 0);

Tensor run_attack(AttackKind kind, const AttackTargets& targets, const Tensor& x, int y,
                  const AttackConfig& cfg, std::uint64_t stream = 0);

struct NoiseSample {
  Tensor eta;
  std::size_t source_index = 0;
  std::string attack_name;
};

// eta = adversarial - natural.
NoiseSample extract_noise(const Tensor& adversarial, const Tensor& natural, std::size_t source_index = 0,
                          std::string attack = {});

// Attacks every image of `ds` (stream = index). Labels are kept; metadata
// records attack name and epsilon.
LabeledDataset attack_dataset(AttackKind kind, const AttackTargets& targets, const LabeledDataset& ds,
                              const AttackConfig& cfg, std::size_t workers = 1);

// Per-kind call counters, used to prove an attack never ran in some code path.
std::uint64_t attack_invocations(AttackKind kind);
void reset_attack_invocations();

}  // namespace pforge
