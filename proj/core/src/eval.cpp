#include "pforge/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "pforge/error.hpp"
#include "pforge/parallel.hpp"

namespace pforge {
namespace {

constexpr std::uint64_t kBalanceStream = 0xBA1A0CEULL;

std::string shortest(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string shortest(float v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::size_t count_positive(const ScoredSet& set) {
  return static_cast<std::size_t>(std::count(set.labels.begin(), set.labels.end(), 1));
}

// Indices sorted by score, ascending.
std::vector<std::size_t> score_order(const ScoredSet& set) {
  std::vector<std::size_t> order(set.scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return set.scores[a] < set.scores[b]; });
  return order;
}

std::vector<Tensor> balanced(std::span<const Tensor> set, std::size_t n, std::uint64_t seed, std::uint64_t stream) {
  if (set.size() == n) return {set.begin(), set.end()};
  std::vector<std::size_t> pick = permutation(set.size(), seed, stream);
  pick.resize(n);
  std::sort(pick.begin(), pick.end());
  std::vector<Tensor> out;
  out.reserve(n);
  for (std::size_t i : pick) out.push_back(set[i]);
  return out;
}

}  // namespace

void ScoredSet::validate() const {
  if (scores.size() != labels.size()) throw DimensionError("ScoredSet: scores and labels differ in length");
  for (int l : labels)
    if (l != 0 && l != 1) throw ConfigError("ScoredSet: labels must be 0 or 1");
  for (double s : scores)
    if (std::isnan(s)) throw NumericError("ScoredSet: NaN score");
  const std::size_t pos = count_positive(*this);
  if (pos == 0 || pos == labels.size()) throw ConfigError("ScoredSet: both classes are required");
}

double auroc(const ScoredSet& set) {
  set.validate();
  const std::size_t n = set.scores.size();
  const std::size_t n1 = count_positive(set);
  const std::size_t n0 = n - n1;
  const auto order = score_order(set);
  // Twice the rank sum keeps tied (half-integer) ranks exact.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]]) ++j;
    const std::uint64_t twice_rank = (i + 1) + (j + 1);
    for (std::size_t k = i; k <= j; ++k)
      if (set.labels[order[k]] == 1) twice_rank_sum += twice_rank;
    i = j + 1;
  }
  const std::uint64_t twice_u = twice_rank_sum - static_cast<std::uint64_t>(n1) * (n1 + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(n0) * static_cast<double>(n1));
}

std::vector<RocPoint> roc_points(const ScoredSet& set) {
  set.validate();
  const std::size_t n = set.scores.size();
  const double n1 = static_cast<double>(count_positive(set));
  const double n0 = static_cast<double>(n) - n1;
  auto order = score_order(set);
  std::reverse(order.begin(), order.end());
  std::vector<RocPoint> roc{{0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    const double threshold = set.scores[order[i]];
    for (; i < n && set.scores[order[i]] == threshold; ++i) (set.labels[order[i]] == 1 ? tp : fp)++;
    roc.push_back({static_cast<double>(fp) / n0, static_cast<double>(tp) / n1});
  }
  return roc;
}

double trapezoid_area(std::span<const RocPoint> roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) * 0.5;
  return area;
}

Scorer detector_scorer(const ConvNet& detector) {
  if (detector.class_count() != 2) throw ConfigError("detector must have two classes");
  return [&detector](const Tensor& x) { return static_cast<double>(detector.probabilities(x)[1]); };
}

EvalReport evaluate_detector(const Scorer& score, std::span<const Tensor> naturals,
                             std::span<const Tensor> adversarial, const EvalOptions& opts) {
  if (naturals.empty() || adversarial.empty()) throw ConfigError("evaluate_detector: empty evaluation set");
  const std::size_t n = std::min(naturals.size(), adversarial.size());
  const std::vector<Tensor> nat = balanced(naturals, n, opts.seed, kBalanceStream);
  const std::vector<Tensor> adv = balanced(adversarial, n, opts.seed, kBalanceStream + 1);

  ScoredSet set;
  set.scores.resize(2 * n);
  set.labels.assign(2 * n, 0);
  std::fill(set.labels.begin() + static_cast<std::ptrdiff_t>(n), set.labels.end(), 1);
  parallel_for(2 * n, opts.workers, [&](std::size_t i) { set.scores[i] = score(i < n ? nat[i] : adv[i - n]); });

  EvalReport report;
  report.attack = opts.attack;
  report.epsilon = opts.epsilon;
  report.auroc = auroc(set);
  report.roc = roc_points(set);
  report.n_natural = n;
  report.n_adv = n;
  report.seed = opts.seed;
  report.config_hash = opts.config_hash;
  return report;
}

EvalReport evaluate_detector(const ConvNet& detector, std::span<const Tensor> naturals,
                             std::span<const Tensor> adversarial, const EvalOptions& opts) {
  return evaluate_detector(detector_scorer(detector), naturals, adversarial, opts);
}

std::vector<BenchmarkResult> run_benchmark(const ConvNet& detector, const ConvNet& victim, const LabeledDataset& test,
                                           std::span<const AttackKind> attacks, const BenchmarkConfig& cfg) {
  std::vector<BenchmarkResult> out;
  for (AttackKind kind : attacks) {
    BenchmarkResult r;
    r.attack = std::string(attack_name(kind));
    try {
      const LabeledDataset adv = attack_dataset(kind, {&victim, &detector}, test, cfg.attack, cfg.workers);
      EvalOptions opts{r.attack, cfg.attack.epsilon, cfg.seed, cfg.config_hash, cfg.workers};
      r.report = evaluate_detector(detector, test.images, adv.images, opts);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

void check_setup(const AblationSetup& s) {
  if (!s.victim || !s.train || !s.bank_source || !s.test) throw ConfigError("ablation: incomplete setup");
}

double score_against(const ConvNet& detector, const AblationSetup& s, const LabeledDataset& adv,
                     std::string_view attack) {
  EvalOptions opts{std::string(attack), s.eval_attack.epsilon, s.seed, 0, s.forgery.workers};
  return evaluate_detector(detector, s.test->images, adv.images, opts).auroc;
}

}  // namespace

std::vector<DataSizeRow> ablation_data_size(std::span<const std::size_t> sizes, AttackKind test_attack,
                                            const AblationSetup& setup) {
  check_setup(setup);
  if (sizes.empty()) throw ConfigError("ablation_data_size: no sizes");
  if (!std::is_sorted(sizes.begin(), sizes.end())) throw ConfigError("ablation_data_size: sizes must be ascending");
  const std::size_t largest = sizes.back();
  if (setup.bank_source->size() < largest) throw ConfigError("ablation_data_size: bank source too small");

  const NoiseBank full = build_noise_bank(*setup.victim, setup.bank_source->slice(0, largest),
                                          setup.forgery.initial_attack, setup.forgery.attack, setup.forgery.workers);
  std::vector<SparseMask> masks;
  std::span<const SparseMask> cache = setup.train_masks;
  if (cache.empty()) {
    masks = compute_masks(*setup.victim, *setup.train, setup.forgery.mask, setup.forgery.workers);
    cache = masks;
  }
  std::optional<LabeledDataset> adv;
  std::vector<DataSizeRow> rows;
  for (std::size_t n : sizes) {
    const GaussianParams base = estimate(full.head(n), setup.forgery.shrinkage);
    const DetectorTraining trained = train_detector(*setup.train, *setup.victim, base, setup.forgery, cache);
    // The white-box attack depends on the detector under test.
    if (!adv || test_attack == AttackKind::kWhitebox)
      adv = attack_dataset(test_attack, {setup.victim, &trained.detector}, *setup.test, setup.eval_attack,
                           setup.forgery.workers);
    rows.push_back({n, score_against(trained.detector, setup, *adv, attack_name(test_attack))});
  }
  return rows;
}

double AurocMatrix::max_column_spread() const {
  double spread = 0.0;
  for (std::size_t c = 0; c < test.size(); ++c) {
    double lo = 1.0, hi = 0.0;
    for (std::size_t r = 0; r < initial.size(); ++r) {
      lo = std::min(lo, at(r, c));
      hi = std::max(hi, at(r, c));
    }
    if (!initial.empty()) spread = std::max(spread, hi - lo);
  }
  return spread;
}

AurocMatrix ablation_initial_attack(std::span<const AttackKind> initials, std::span<const AttackKind> tests,
                                    const AblationSetup& setup) {
  check_setup(setup);
  if (initials.empty() || tests.empty()) throw ConfigError("ablation_initial_attack: empty attack list");
  AurocMatrix m;
  for (AttackKind k : initials) m.initial.emplace_back(attack_name(k));
  for (AttackKind k : tests) m.test.emplace_back(attack_name(k));

  std::vector<SparseMask> masks;
  std::span<const SparseMask> cache = setup.train_masks;
  if (cache.empty()) {
    masks = compute_masks(*setup.victim, *setup.train, setup.forgery.mask, setup.forgery.workers);
    cache = masks;
  }
  std::vector<std::optional<LabeledDataset>> adv(tests.size());
  for (std::size_t c = 0; c < tests.size(); ++c)
    if (tests[c] != AttackKind::kWhitebox)
      adv[c] = attack_dataset(tests[c], {setup.victim, nullptr}, *setup.test, setup.eval_attack,
                              setup.forgery.workers);

  for (AttackKind initial : initials) {
    ForgeryConfig cfg = setup.forgery;
    cfg.initial_attack = initial;
    const DetectorTraining trained = train_detector(*setup.train, *setup.victim, *setup.bank_source, cfg, cache);
    for (std::size_t c = 0; c < tests.size(); ++c) {
      if (tests[c] == AttackKind::kWhitebox) {
        const LabeledDataset wb = attack_dataset(tests[c], {setup.victim, &trained.detector}, *setup.test,
                                                 setup.eval_attack, setup.forgery.workers);
        m.values.push_back(score_against(trained.detector, setup, wb, m.test[c]));
      } else {
        m.values.push_back(score_against(trained.detector, setup, *adv[c], m.test[c]));
      }
    }
  }
  return m;
}

namespace {

constexpr const char* kReportHeader = "attack,epsilon,auroc,n_natural,n_adv,seed,config_hash\n";

void write_report_row(std::ostream& out, const EvalReport& r) {
  out << r.attack << ',' << shortest(r.epsilon) << ',' << shortest(r.auroc) << ',' << r.n_natural << ','
      << r.n_adv << ',' << r.seed << ',' << hex64(r.config_hash) << '\n';
}

}  // namespace

void write_report_csv(std::ostream& out, std::span<const BenchmarkResult> rows) {
  out << kReportHeader;
  for (const auto& r : rows) {
    if (r.report)
      write_report_row(out, *r.report);
    else
      out << r.attack << ",nan,nan,0,0,0,0\n";
  }
}

void write_report_csv(std::ostream& out, std::span<const EvalReport> rows) {
  out << kReportHeader;
  for (const auto& r : rows) write_report_row(out, r);
}

void write_roc_csv(std::ostream& out, std::span<const RocPoint> roc) {
  out << "fpr,tpr\n";
  for (const auto& p : roc) out << shortest(p.fpr) << ',' << shortest(p.tpr) << '\n';
}

void write_data_size_csv(std::ostream& out, std::span<const DataSizeRow> rows) {
  out << "bank_size,auroc\n";
  for (const auto& r : rows) out << r.bank_size << ',' << shortest(r.auroc) << '\n';
}

void write_matrix_csv(std::ostream& out, const AurocMatrix& m) {
  out << "initial";
  for (const auto& t : m.test) out << ',' << t;
  out << '\n';
  for (std::size_t r = 0; r < m.initial.size(); ++r) {
    out << m.initial[r];
    for (std::size_t c = 0; c < m.test.size(); ++c) out << ',' << shortest(m.at(r, c));
    out << '\n';
  }
}

void export_noise_csv(std::ostream& out, std::span<const NoiseBank> banks) {
  std::size_t d = 0;
  for (const auto& b : banks) {
    if (b.count() == 0) continue;
    if (d == 0) d = b.dim();
    for (const auto& v : b.vectors)
      if (v.size() != d) throw DimensionError("export_noise_csv: vectors differ in dimension");
  }
  for (std::size_t j = 0; j < d; ++j) out << 'c' << j << ',';
  out << "source\n";
  for (const auto& b : banks)
    for (const auto& v : b.vectors) {
      for (float x : v) out << shortest(x) << ',';
      out << b.attack_name << '\n';
    }
}

std::vector<NoiseRow> read_noise_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("noise csv: missing header", 0);
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::vector<NoiseRow> rows;
  std::uint64_t offset = line.size() + 1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    NoiseRow row;
    row.values.reserve(columns);
    const char* p = line.data();
    const char* end = p + line.size();
    for (std::size_t j = 0; j < columns; ++j) {
      float v = 0.0f;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc() || res.ptr == end || *res.ptr != ',')
        throw FormatError("noise csv: bad value", offset + static_cast<std::uint64_t>(p - line.data()));
      row.values.push_back(v);
      p = res.ptr + 1;
    }
    row.source.assign(p, end);
    rows.push_back(std::move(row));
    offset += line.size() + 1;
  }
  return rows;
}

std::uint64_t config_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace pforge
