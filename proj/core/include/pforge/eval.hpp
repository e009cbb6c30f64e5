#pragma once

#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pforge/attacks.hpp"
#include "pforge/convnet.hpp"
#include "pforge/forgery.hpp"
#include "pforge/noise_model.hpp"

namespace pforge {

// Labels: 0 natural, 1 adversarial.
struct ScoredSet {
  std::vector<double> scores;
  std::vector<int> labels;

  void validate() const;
};

// Mann-Whitney AUROC, ties count 1/2. Needs both classes.
double auroc(const ScoredSet& set);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

// Empirical ROC, one point per distinct threshold, from (0, 0) to (1, 1).
std::vector<RocPoint> roc_points(const ScoredSet& set);
double trapezoid_area(std::span<const RocPoint> roc);

struct EvalReport {
  std::string attack;
  double epsilon = 0.0;
  double auroc = 0.0;
  std::vector<RocPoint> roc;
  std::size_t n_natural = 0;
  std::size_t n_adv = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

struct EvalOptions {
  std::string attack;
  double epsilon = 0.0;
  std::uint64_t seed = 1;  // drives the balancing subsample
  std::uint64_t config_hash = 0;
  std::size_t workers = 1;
};

// Must be safe to call concurrently.
using Scorer = std::function<double(const Tensor&)>;

// Class-1 softmax probability.
Scorer detector_scorer(const ConvNet& detector);

// The larger set is subsampled (seeded) to the size of the smaller one.
EvalReport evaluate_detector(const Scorer& score, std::span<const Tensor> naturals,
                             std::span<const Tensor> adversarial, const EvalOptions& opts);
EvalReport evaluate_detector(const ConvNet& detector, std::span<const Tensor> naturals,
                             std::span<const Tensor> adversarial, const EvalOptions& opts);

struct BenchmarkConfig {
  AttackConfig attack;
  std::uint64_t seed = 1;
  std::uint64_t config_hash = 0;
  std::size_t workers = 1;
};

struct BenchmarkResult {
  std::string attack;
  std::optional<EvalReport> report;
  std::string error;  // set when the attack or evaluation failed
};

// Gray-box unless an attack is kWhitebox, which also sees the detector.
std::vector<BenchmarkResult> run_benchmark(const ConvNet& detector, const ConvNet& victim, const LabeledDataset& test,
                                           std::span<const AttackKind> attacks, const BenchmarkConfig& cfg);

struct AblationSetup {
  const ConvNet* victim = nullptr;
  const LabeledDataset* train = nullptr;        // detector naturals
  const LabeledDataset* bank_source = nullptr;  // images the initial attack runs on
  const LabeledDataset* test = nullptr;
  std::span<const SparseMask> train_masks;      // optional cache for `train`
  ForgeryConfig forgery;
  AttackConfig eval_attack;
  std::uint64_t seed = 1;
};

struct DataSizeRow {
  std::size_t bank_size = 0;
  double auroc = 0.0;
};

// One detector per bank size; banks are prefixes of one seeded bank.
std::vector<DataSizeRow> ablation_data_size(std::span<const std::size_t> sizes, AttackKind test_attack,
                                            const AblationSetup& setup);

struct AurocMatrix {
  std::vector<std::string> initial;
  std::vector<std::string> test;
  std::vector<double> values;  // row-major, initial x test

  double at(std::size_t r, std::size_t c) const { return values.at(r * test.size() + c); }
  // max over test attacks of (max - min) across initial attacks.
  double max_column_spread() const;
};

AurocMatrix ablation_initial_attack(std::span<const AttackKind> initials, std::span<const AttackKind> tests,
                                    const AblationSetup& setup);

// attack,epsilon,auroc,n_natural,n_adv,seed,config_hash
void write_report_csv(std::ostream& out, std::span<const BenchmarkResult> rows);
void write_report_csv(std::ostream& out, std::span<const EvalReport> rows);
void write_roc_csv(std::ostream& out, std::span<const RocPoint> roc);
void write_data_size_csv(std::ostream& out, std::span<const DataSizeRow> rows);
void write_matrix_csv(std::ostream& out, const AurocMatrix& m);

struct NoiseRow {
  std::vector<float> values;
  std::string source;
};

// Columns c0..c{d-1},source. Floats are written in shortest round-trip form.
void export_noise_csv(std::ostream& out, std::span<const NoiseBank> banks);
std::vector<NoiseRow> read_noise_csv(std::istream& in);

std::uint64_t config_hash(std::string_view text);

}  // namespace pforge
