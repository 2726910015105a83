#include "bugprio/evaluate.hpp"

#include <chrono>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <sys/resource.h>

#include <nlohmann/json.hpp>

#include "bugprio/csv.hpp"
#include "bugprio/error.hpp"

namespace bugprio {
namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

void require_nonempty(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw Error(ErrorKind::kInvalidArgument, "metrics are undefined on an empty confusion matrix");
}

double pooled_accuracy(const ConfusionMatrix& cm) {
  std::uint64_t tp = 0, tn = 0, all = 0;
  for (auto c : kAllPriorities) {
    const auto k = cm.class_counts(c);
    tp += k.tp;
    tn += k.tn;
    all += k.tp + k.fp + k.fn + k.tn;
  }
  return ratio(tp + tn, all);
}

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json averaged_json(const AveragedMetrics& m) {
  nlohmann::json j;
  j["accuracy"] = m.accuracy;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  return j;
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string("n/a"); }

}  // namespace

void ConfusionMatrix::add(Priority gold, Priority predicted, std::uint64_t count) {
  if (!is_known(gold) || !is_known(predicted)) {
    throw Error(ErrorKind::kInvalidArgument, "confusion matrix labels must be P1..P5");
  }
  cells_[index_of(gold)][index_of(predicted)] += count;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (const auto& row : cells_) n += std::accumulate(row.begin(), row.end(), std::uint64_t{0});
  return n;
}

std::uint64_t ConfusionMatrix::correct() const {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < kNumPriorities; ++i) n += cells_[i][i];
  return n;
}

ClassCounts ConfusionMatrix::class_counts(Priority c) const {
  const std::size_t i = index_of(c);
  ClassCounts k;
  k.tp = cells_[i][i];
  for (std::size_t j = 0; j < kNumPriorities; ++j) {
    if (j == i) continue;
    k.fn += cells_[i][j];
    k.fp += cells_[j][i];
  }
  k.tn = total() - k.tp - k.fp - k.fn;
  return k;
}

nlohmann::json ConfusionMatrix::to_json() const {
  nlohmann::json j;
  j["labels"] = {"P1", "P2", "P3", "P4", "P5"};
  j["rows"] = "gold";
  j["columns"] = "predicted";
  j["cells"] = cells_;
  return j;
}

ConfusionMatrix confusion(std::span<const Priority> golds, std::span<const Priority> preds) {
  if (golds.size() != preds.size()) {
    throw Error(ErrorKind::kInvalidArgument, "gold and predicted label lists differ in length");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < golds.size(); ++i) cm.add(golds[i], preds[i]);
  return cm;
}

AveragedMetrics micro_metrics(const ConfusionMatrix& cm) {
  require_nonempty(cm);
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (auto c : kAllPriorities) {
    const auto k = cm.class_counts(c);
    tp += k.tp;
    fp += k.fp;
    fn += k.fn;
  }
  AveragedMetrics m;
  m.accuracy = pooled_accuracy(cm);
  m.precision = ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = ratio(2 * tp, 2 * tp + fp + fn);
  return m;
}

ClassMetrics class_metrics(const ConfusionMatrix& cm, Priority c) {
  const auto k = cm.class_counts(c);
  ClassMetrics m;
  m.support = k.tp + k.fn;
  if (k.tp + k.fp > 0) m.precision = ratio(k.tp, k.tp + k.fp);
  if (k.tp + k.fn > 0) m.recall = ratio(k.tp, k.tp + k.fn);
  if (m.precision && m.recall) {
    const double s = *m.precision + *m.recall;
    m.f1 = s > 0.0 ? 2.0 * *m.precision * *m.recall / s : 0.0;
  }
  return m;
}

AveragedMetrics macro_metrics(const ConfusionMatrix& cm, ZeroDivisionPolicy policy) {
  require_nonempty(cm);
  struct Mean {
    double sum = 0.0;
    std::size_t n = 0;
    void add(const std::optional<double>& v, ZeroDivisionPolicy policy) {
      if (v) {
        sum += *v;
        ++n;
      } else if (policy == ZeroDivisionPolicy::kZero) {
        ++n;
      }
    }
    double value() const { return n ? sum / static_cast<double>(n) : 0.0; }
  } precision, recall, f1;

  for (auto c : kAllPriorities) {
    const auto m = class_metrics(cm, c);
    precision.add(m.precision, policy);
    recall.add(m.recall, policy);
    f1.add(m.f1, policy);
  }
  AveragedMetrics out;
  out.accuracy = pooled_accuracy(cm);
  out.precision = precision.value();
  out.recall = recall.value();
  out.f1 = f1.value();
  return out;
}

MetricsReport make_metrics_report(const ConfusionMatrix& cm, ZeroDivisionPolicy policy) {
  MetricsReport r;
  r.confusion = cm;
  r.micro = micro_metrics(cm);
  r.macro = macro_metrics(cm, policy);
  for (auto c : kAllPriorities) r.per_class[index_of(c)] = class_metrics(cm, c);
  r.policy = policy;
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["format"] = "bugprio-metrics";
  j["version"] = 1;
  j["evaluated"] = r.confusion.total();
  j["correct"] = r.confusion.correct();
  j["zero_division"] = r.policy == ZeroDivisionPolicy::kZero ? "zero" : "exclude";
  j["micro"] = averaged_json(r.micro);
  j["macro"] = averaged_json(r.macro);
  nlohmann::json per_class;
  for (auto c : kAllPriorities) {
    const auto& m = r.per_class[index_of(c)];
    nlohmann::json pc;
    pc["precision"] = optional_number(m.precision);
    pc["recall"] = optional_number(m.recall);
    pc["f1"] = optional_number(m.f1);
    pc["support"] = m.support;
    per_class[std::string(to_string(c))] = pc;
  }
  j["per_class"] = per_class;
  j["confusion"] = r.confusion.to_json();
  return j;
}

void print_metrics_table(std::ostream& out, const MetricsReport& r) {
  out << "evaluated " << r.confusion.total() << " reports, " << r.confusion.correct() << " correct\n\n";
  out << std::left << std::setw(8) << "" << std::setw(11) << "Precision" << std::setw(11) << "Recall"
      << std::setw(11) << "F1" << "Accuracy\n";
  for (auto [name, m] : {std::pair{"Micro", r.micro}, std::pair{"Macro", r.macro}}) {
    out << std::setw(8) << name << std::setw(11) << fmt(m.precision) << std::setw(11) << fmt(m.recall)
        << std::setw(11) << fmt(m.f1) << fmt(m.accuracy) << '\n';
  }
  out << '\n' << std::setw(8) << "class" << std::setw(11) << "Precision" << std::setw(11) << "Recall"
      << std::setw(11) << "F1" << "Support\n";
  for (auto c : kAllPriorities) {
    const auto& m = r.per_class[index_of(c)];
    out << std::setw(8) << to_string(c) << std::setw(11) << fmt(m.precision) << std::setw(11)
        << fmt(m.recall) << std::setw(11) << fmt(m.f1) << m.support << '\n';
  }
  out << "\nconfusion (rows gold, columns predicted)\n" << std::setw(6) << "";
  for (auto c : kAllPriorities) out << std::right << std::setw(9) << to_string(c);
  out << '\n';
  for (auto g : kAllPriorities) {
    out << std::left << std::setw(6) << to_string(g);
    for (auto p : kAllPriorities) out << std::right << std::setw(9) << r.confusion.at(g, p);
    out << '\n';
  }
  out << std::left;
}

void write_metrics_csv(std::ostream& out, const MetricsReport& r) {
  const auto num = [](double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  csv::write_row(out, {"scope", "metric", "value"});
  for (auto [scope, m] : {std::pair{"micro", r.micro}, std::pair{"macro", r.macro}}) {
    csv::write_row(out, {scope, "accuracy", num(m.accuracy)});
    csv::write_row(out, {scope, "precision", num(m.precision)});
    csv::write_row(out, {scope, "recall", num(m.recall)});
    csv::write_row(out, {scope, "f1", num(m.f1)});
  }
  for (auto c : kAllPriorities) {
    const auto& m = r.per_class[index_of(c)];
    const std::string scope(to_string(c));
    csv::write_row(out, {scope, "precision", m.precision ? num(*m.precision) : ""});
    csv::write_row(out, {scope, "recall", m.recall ? num(*m.recall) : ""});
    csv::write_row(out, {scope, "f1", m.f1 ? num(*m.f1) : ""});
    csv::write_row(out, {scope, "support", std::to_string(m.support)});
  }
}

PriorityDistribution distribution_report(std::span<const BugReport> reports) {
  PriorityDistribution d;
  for (const auto& r : reports) {
    if (is_known(r.priority)) {
      ++d.counts[index_of(r.priority)];
    } else {
      ++d.unknown;
    }
  }
  const auto known = std::accumulate(d.counts.begin(), d.counts.end(), std::uint64_t{0});
  for (std::size_t i = 0; i < kNumPriorities; ++i) d.shares[i] = ratio(d.counts[i], known);
  return d;
}

nlohmann::json to_json(const PriorityDistribution& d) {
  nlohmann::json j;
  nlohmann::json counts, shares;
  for (auto c : kAllPriorities) {
    counts[std::string(to_string(c))] = d.counts[index_of(c)];
    shares[std::string(to_string(c))] = d.shares[index_of(c)];
  }
  j["counts"] = counts;
  j["unknown"] = d.unknown;
  j["shares"] = shares;
  return j;
}

TimingReport timing_report(std::span<const PhaseRecord> phases) {
  TimingReport t;
  for (const auto& p : phases) {
    TimingRow row{p.phase, p.seconds, p.items, std::nullopt};
    if (p.items > 0) row.seconds_per_item = p.seconds / static_cast<double>(p.items);
    t.rows.push_back(std::move(row));
  }
  if (!phases.empty()) t.peak_memory_kb = peak_memory_kb();
  return t;
}

std::optional<std::uint64_t> peak_memory_kb() {
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) != 0 || usage.ru_maxrss <= 0) return std::nullopt;
  return static_cast<std::uint64_t>(usage.ru_maxrss);  // kilobytes on Linux
}

nlohmann::json to_json(const TimingReport& t) {
  nlohmann::json j;
  auto rows = nlohmann::json::array();
  for (const auto& r : t.rows) {
    nlohmann::json row;
    row["phase"] = r.phase;
    row["seconds"] = r.seconds;
    row["items"] = r.items;
    row["seconds_per_item"] = optional_number(r.seconds_per_item);
    rows.push_back(row);
  }
  j["phases"] = rows;
  j["peak_memory_kb"] = t.peak_memory_kb ? nlohmann::json(*t.peak_memory_kb) : nlohmann::json(nullptr);
  return j;
}

void print_timing_table(std::ostream& out, const TimingReport& t) {
  out << std::left << std::setw(28) << "phase" << std::setw(14) << "seconds" << std::setw(10) << "items"
      << "seconds/item\n";
  for (const auto& r : t.rows) {
    out << std::setw(28) << r.phase << std::setw(14) << fmt(r.seconds, 3) << std::setw(10) << r.items
        << (r.seconds_per_item ? fmt(*r.seconds_per_item, 6) : std::string("-")) << '\n';
  }
  if (t.peak_memory_kb) out << "peak memory: " << *t.peak_memory_kb / 1024 << " MB\n";
}

PhaseTimer::PhaseTimer(std::string phase)
    : phase_(std::move(phase)),
      start_ns_(std::chrono::duration_cast<std::chrono::nanoseconds>(
                    std::chrono::steady_clock::now().time_since_epoch())
                    .count()) {}

PhaseRecord PhaseTimer::stop(std::uint64_t items) const {
  const auto now = std::chrono::duration_cast<std::chrono::nanoseconds>(
                       std::chrono::steady_clock::now().time_since_epoch())
                       .count();
  return {phase_, static_cast<double>(now - start_ns_) * 1e-9, items};
}

}  // namespace bugprio
