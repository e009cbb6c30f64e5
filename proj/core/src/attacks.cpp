#include "pforge/attacks.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <functional>

#include "pforge/error.hpp"
#include "pforge/parallel.hpp"
#include "pforge/rng.hpp"

namespace pforge {
namespace {

std::array<std::atomic<std::uint64_t>, std::size(kAllAttacks)> g_invocations{};

void count(AttackKind kind) { g_invocations[static_cast<std::size_t>(kind)].fetch_add(1, std::memory_order_relaxed); }

using InputGradient = std::function<Tensor(const Tensor&)>;

// d/dx of sum_k weight_k * CE(net_k(x), label_k).
Tensor ce_input_gradient(const ConvNet& net, const Tensor& x, int label) {
  const Activations act = net.forward(x);
  const LossAndGrad lg = cross_entropy(act.logits, label);
  GradTargets targets;
  targets.weights = false;
  return net.backward(act, lg.grad, targets).input;
}

InputGradient victim_gradient(const ConvNet& net, int y) {
  return [&net, y](const Tensor& x) { return ce_input_gradient(net, x, y); };
}

// Float e with x + e == a bit-exactly, if one of the candidates near a - x works.
bool offset_for(float a, float x, float& e) {
  const float d = a - x;
  for (float cand : {d, std::nextafter(d, INFINITY), std::nextafter(d, -INFINITY)})
    if (x + cand == a) {
      e = cand;
      return true;
    }
  return false;
}

// Moves each pixel toward x until it lies in the exact real epsilon-ball
// (f32 rounding of x +/- eps can overshoot by one ulp) and is reachable as
// x + eta for a float eta, so extracted noise reconstructs it bit-exactly.
// Moves a pixel by at most a few ulps.
void settle(Tensor& adv, const Tensor& x, float eps) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    float a = adv[i], e = 0.0f;
    a = x[i] + (a - x[i]);
    while (std::fabs(static_cast<double>(a) - static_cast<double>(x[i])) > static_cast<double>(eps) ||
           !offset_for(a, x[i], e))
      a = std::nextafter(a, x[i]);
    adv[i] = a;
  }
}

inline float sign(double v) { return v > 0.0 ? 1.0f : (v < 0.0 ? -1.0f : 0.0f); }

enum class Momentum { kNone, kL1 };

struct IterativeSpec {
  Momentum momentum = Momentum::kNone;
  bool random_start = false;
  double diversity_prob = 0.0;
};

// Nearest-neighbour shrink to r x r followed by zero padding back to H x W.
// Returns, per output pixel of one plane, the source pixel or -1.
std::vector<std::ptrdiff_t> diversity_map(std::size_t h, std::size_t w, RngStream& rng) {
  const auto min_h = static_cast<std::size_t>(std::floor(0.9 * static_cast<double>(h)));
  const std::size_t rh = min_h + rng.below(h - min_h + 1);
  const std::size_t rw = std::max<std::size_t>(1, (rh * w + h / 2) / h);
  const std::size_t top = rng.below(h - rh + 1);
  const std::size_t left = rng.below(w - std::min(rw, w) + 1);
  std::vector<std::ptrdiff_t> map(h * w, -1);
  for (std::size_t i = 0; i < rh; ++i) {
    const std::size_t sy = i * h / rh;
    for (std::size_t j = 0; j < rw && left + j < w; ++j) {
      const std::size_t sx = j * w / rw;
      map[(top + i) * w + left + j] = static_cast<std::ptrdiff_t>(sy * w + sx);
    }
  }
  return map;
}

Tensor diverse_gradient(const InputGradient& grad, const Tensor& x, RngStream& rng) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), plane = h * w;
  const auto map = diversity_map(h, w, rng);
  Tensor t(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < plane; ++p)
      if (map[p] >= 0) t[ch * plane + p] = x[ch * plane + static_cast<std::size_t>(map[p])];
  const Tensor gt = grad(t);
  // Adjoint of the linear transform.
  Tensor gx(x.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t p = 0; p < plane; ++p)
      if (map[p] >= 0) gx[ch * plane + static_cast<std::size_t>(map[p])] += gt[ch * plane + p];
  return gx;
}

Tensor iterate(const InputGradient& grad, const Tensor& x, const AttackConfig& cfg, const IterativeSpec& spec,
               std::uint64_t stream) {
  cfg.validate();
  const std::size_t n = x.size();
  const float eps = cfg.epsilon;
  std::vector<float> lo(n), hi(n);
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = x[i] - eps;
    hi[i] = x[i] + eps;
  }
  RngStream rng(cfg.seed, stream);
  Tensor adv = x;
  if (spec.random_start) {
    for (std::size_t i = 0; i < n; ++i) {
      adv[i] = std::clamp(x[i] + static_cast<float>(rng.uniform(-eps, eps)), 0.0f, 1.0f);
    }
  }
  // Momentum is kept in double so g / |g|_1 never underflows to zero and
  // flips a sign relative to g itself.
  std::vector<double> velocity(spec.momentum == Momentum::kL1 ? n : 0, 0.0);
  std::vector<float> direction(n);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    const Tensor g = (spec.diversity_prob > 0.0 && rng.bernoulli(spec.diversity_prob))
                         ? diverse_gradient(grad, adv, rng)
                         : grad(adv);
    if (spec.momentum == Momentum::kL1) {
      double l1 = 0.0;
      for (float v : g.values()) l1 += std::fabs(v);
      const double inv = l1 > 0.0 ? 1.0 / l1 : 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        velocity[i] = cfg.decay * velocity[i] + g[i] * inv;
        direction[i] = sign(velocity[i]);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) direction[i] = sign(g[i]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const float stepped = adv[i] + cfg.step_size * direction[i];
      adv[i] = std::clamp(std::clamp(stepped, lo[i], hi[i]), 0.0f, 1.0f);
    }
  }
  settle(adv, x, eps);
  return adv;
}

}  // namespace

std::string_view attack_name(AttackKind kind) {
  switch (kind) {
    case AttackKind::kFgsm: return "fgsm";
    case AttackKind::kBim: return "bim";
    case AttackKind::kPgd: return "pgd";
    case AttackKind::kMim: return "mim";
    case AttackKind::kDim: return "dim";
    case AttackKind::kWhitebox: return "whitebox";
  }
  return "unknown";
}

std::optional<AttackKind> parse_attack(std::string_view name) {
  for (AttackKind k : kAllAttacks)
    if (attack_name(k) == name) return k;
  return std::nullopt;
}

void AttackConfig::validate() const {
  if (!(epsilon > 0.0f)) throw ConfigError("attack epsilon must be positive");
  if (steps < 1) throw ConfigError("attack steps must be at least 1");
  if (!(step_size > 0.0f)) throw ConfigError("attack step size must be positive");
  if (!(diversity_prob >= 0.0 && diversity_prob <= 1.0)) throw ConfigError("diversity probability must lie in [0, 1]");
  if (!(decay >= 0.0)) throw ConfigError("momentum decay must be non-negative");
}

Tensor fgsm(const ConvNet& net, const Tensor& x, int y, const AttackConfig& cfg) {
  cfg.validate();
  count(AttackKind::kFgsm);
  const Tensor g = ce_input_gradient(net, x, y);
  Tensor adv(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    adv[i] = std::clamp(x[i] + cfg.epsilon * sign(g[i]), 0.0f, 1.0f);
  }
  settle(adv, x, cfg.epsilon);
  return adv;
}

Tensor bim(const ConvNet& net, const Tensor& x, int y, const AttackConfig& cfg) {
  count(AttackKind::kBim);
  return iterate(victim_gradient(net, y), x, cfg, {}, 0);
}

Tensor pgd(const ConvNet& net, const Tensor& x, int y, const AttackConfig& cfg, std::uint64_t stream) {
  count(AttackKind::kPgd);
  IterativeSpec spec;
  spec.random_start = cfg.random_start;
  return iterate(victim_gradient(net, y), x, cfg, spec, stream);
}

Tensor mim(const ConvNet& net, const Tensor& x, int y, const AttackConfig& cfg) {
  count(AttackKind::kMim);
  IterativeSpec spec;
  spec.momentum = Momentum::kL1;
  return iterate(victim_gradient(net, y), x, cfg, spec, 0);
}

Tensor dim(const ConvNet& net, const Tensor& x, int y, const AttackConfig& cfg, std::uint64_t stream) {
  count(AttackKind::kDim);
  IterativeSpec spec;
  spec.diversity_prob = cfg.diversity_prob;
  return iterate(victim_gradient(net, y), x, cfg, spec, stream);
}

Tensor whitebox_joint(const ConvNet& victim, const ConvNet& detector, const Tensor& x, int y,
                      const AttackConfig& cfg, std::uint64_t stream) {
  count(AttackKind::kWhitebox);
  const auto alpha = static_cast<float>(cfg.alpha_joint);
  InputGradient joint = [&](const Tensor& adv) {
    Tensor g = ce_input_gradient(victim, adv, y);
    const Tensor gd = ce_input_gradient(detector, adv, kAdversarialLabel);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += alpha * gd[i];
    return g;
  };
  IterativeSpec spec;
  spec.random_start = cfg.random_start;
  return iterate(joint, x, cfg, spec, stream);
}

Tensor run_attack(AttackKind kind, const AttackTargets& targets, const Tensor& x, int y, const AttackConfig& cfg,
                  std::uint64_t stream) {
  if (!targets.victim) throw ConfigError("attack requires a victim network");
  const ConvNet& v = *targets.victim;
  switch (kind) {
    case AttackKind::kFgsm: return fgsm(v, x, y, cfg);
    case AttackKind::kBim: return bim(v, x, y, cfg);
    case AttackKind::kPgd: return pgd(v, x, y, cfg, stream);
    case AttackKind::kMim: return mim(v, x, y, cfg);
    case AttackKind::kDim: return dim(v, x, y, cfg, stream);
    case AttackKind::kWhitebox:
      if (!targets.detector) throw ConfigError("white-box attack requires a detector network");
      return whitebox_joint(v, *targets.detector, x, y, cfg, stream);
  }
  throw ConfigError("unknown attack kind");
}

NoiseSample extract_noise(const Tensor& adversarial, const Tensor& natural, std::size_t source_index,
                          std::string attack) {
  if (adversarial.shape() != natural.shape()) throw DimensionError("extract_noise: shape mismatch");
  NoiseSample s;
  s.eta = Tensor(natural.shape());
  for (std::size_t i = 0; i < natural.size(); ++i) {
    const float a = adversarial[i], x = natural[i];
    float e = a - x;
    // The rounded difference can miss by one ulp; prefer the neighbour that
    // makes natural + eta reproduce the adversarial pixel bit-exactly.
    offset_for(a, x, e);
    s.eta[i] = e;
  }
  s.source_index = source_index;
  s.attack_name = std::move(attack);
  return s;
}

LabeledDataset attack_dataset(AttackKind kind, const AttackTargets& targets, const LabeledDataset& ds,
                              const AttackConfig& cfg, std::size_t workers) {
  LabeledDataset out;
  out.name = ds.name;
  out.class_count = ds.class_count;
  out.metadata = ds.metadata;
  out.metadata["attack"] = std::string(attack_name(kind));
  out.metadata["epsilon"] = std::to_string(cfg.epsilon);
  out.labels = ds.labels;
  out.images.resize(ds.size());
  parallel_for(ds.size(), workers, [&](std::size_t i) {
    out.images[i] = run_attack(kind, targets, ds.images[i], ds.labels[i], cfg, i);
  });
  return out;
}

std::uint64_t attack_invocations(AttackKind kind) {
  return g_invocations[static_cast<std::size_t>(kind)].load(std::memory_order_relaxed);
}

void reset_attack_invocations() {
  for (auto& c : g_invocations) c.store(0, std::memory_order_relaxed);
}

}  // namespace pforge
