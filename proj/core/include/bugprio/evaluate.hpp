#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bugprio/corpus.hpp"
#include "bugprio/priority.hpp"

namespace bugprio {

struct ClassCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;
};

/// 5x5 counts, rows = gold priority, columns = predicted priority.
class ConfusionMatrix {
 public:
  using Cells = std::array<std::array<std::uint64_t, kNumPriorities>, kNumPriorities>;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(const Cells& cells) : cells_(cells) {}

  void add(Priority gold, Priority predicted, std::uint64_t count = 1);

  std::uint64_t at(Priority gold, Priority predicted) const {
    return cells_[index_of(gold)][index_of(predicted)];
  }
  const Cells& cells() const { return cells_; }
  std::uint64_t total() const;
  std::uint64_t correct() const;
  ClassCounts class_counts(Priority c) const;

  nlohmann::json to_json() const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  Cells cells_{};
};

/// Throws Error(kInvalidArgument) on length mismatch or an Unknown label.
ConfusionMatrix confusion(std::span<const Priority> golds, std::span<const Priority> preds);

struct AveragedMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

enum class ZeroDivisionPolicy {
  kZero,     // an undefined per-class ratio counts as 0
  kExclude,  // the class is left out of that metric's mean
};

/// Pooled counts: precision = sum TP / sum (TP + FP), and so on. Accuracy is
/// (sum TP + sum TN) / sum (TP + FP + FN + TN). Throws on an empty matrix.
AveragedMetrics micro_metrics(const ConfusionMatrix& cm);

/// Per-class ratios averaged uniformly over all five levels, present or not.
/// Accuracy uses the same pooled formula as the micro variant.
AveragedMetrics macro_metrics(const ConfusionMatrix& cm,
                              ZeroDivisionPolicy policy = ZeroDivisionPolicy::kZero);

struct ClassMetrics {
  std::optional<double> precision;  // nullopt when TP + FP == 0
  std::optional<double> recall;     // nullopt when TP + FN == 0
  std::optional<double> f1;         // nullopt when either input is undefined
  std::uint64_t support = 0;        // gold count
};

ClassMetrics class_metrics(const ConfusionMatrix& cm, Priority c);

struct MetricsReport {
  ConfusionMatrix confusion;
  AveragedMetrics micro;
  AveragedMetrics macro;
  std::array<ClassMetrics, kNumPriorities> per_class{};
  ZeroDivisionPolicy policy = ZeroDivisionPolicy::kZero;
};

MetricsReport make_metrics_report(const ConfusionMatrix& cm,
                                  ZeroDivisionPolicy policy = ZeroDivisionPolicy::kZero);

nlohmann::json to_json(const MetricsReport& report);
void print_metrics_table(std::ostream& out, const MetricsReport& report);
/// Long format: scope,metric,value with scope in {micro, macro, P1..P5}.
void write_metrics_csv(std::ostream& out, const MetricsReport& report);

struct PriorityDistribution {
  std::array<std::uint64_t, kNumPriorities> counts{};
  std::uint64_t unknown = 0;
  /// Over known priorities only; all zero when there are none.
  std::array<double, kNumPriorities> shares{};
};

PriorityDistribution distribution_report(std::span<const BugReport> reports);
nlohmann::json to_json(const PriorityDistribution& d);

struct PhaseRecord {
  std::string phase;
  double seconds = 0.0;
  std::uint64_t items = 0;
};

struct TimingRow {
  std::string phase;
  double seconds = 0.0;
  std::uint64_t items = 0;
  std::optional<double> seconds_per_item;
};

struct TimingReport {
  std::vector<TimingRow> rows;
  /// Peak resident set size of this process, when the platform reports it.
  std::optional<std::uint64_t> peak_memory_kb;
};

TimingReport timing_report(std::span<const PhaseRecord> phases);
std::optional<std::uint64_t> peak_memory_kb();
nlohmann::json to_json(const TimingReport& report);
void print_timing_table(std::ostream& out, const TimingReport& report);

/// Wall-clock stopwatch for PhaseRecord.
class PhaseTimer {
 public:
  explicit PhaseTimer(std::string phase);
  PhaseRecord stop(std::uint64_t items) const;

 private:
  std::string phase_;
  std::int64_t start_ns_;
};

}  // namespace bugprio
