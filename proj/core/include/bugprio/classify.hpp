#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bugprio/priority.hpp"
#include "bugprio/textprep.hpp"

namespace bugprio {

/// Log-posterior per class, up to an additive constant. Classes a model never
/// saw in training score -infinity.
using ClassScores = std::array<double, kNumPriorities>;

struct Prediction {
  std::int64_t bug_id = 0;
  Priority priority = Priority::Unknown;
  ClassScores scores{};
  std::size_t topic = 0;
  bool used_fallback = false;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// First maximum wins, so ties go to the more urgent level.
Priority argmax_priority(const ClassScores& scores);

class MultinomialNb {
 public:
  MultinomialNb() = default;

  /// prior_c = n_c / n; P(w|c) = (count_cw + laplace) / (count_c + laplace V).
  /// Throws Error(kInvalidArgument) on empty input, size mismatch, unknown
  /// labels or laplace <= 0.
  static MultinomialNb train(std::span<const CountVector> docs, std::span<const Priority> labels,
                             std::size_t vocab_size, double laplace = 1.0);

  ClassScores scores(const CountVector& doc) const;
  Priority predict(const CountVector& doc) const { return argmax_priority(scores(doc)); }

  double log_prior(Priority c) const { return log_prior_[index_of(c)]; }
  double log_likelihood(Priority c, std::size_t w) const {
    return log_likelihood_[index_of(c) * vocab_size_ + w];
  }
  std::size_t vocab_size() const { return vocab_size_; }
  double laplace() const { return laplace_; }

  nlohmann::json to_json() const;
  static MultinomialNb from_json(const nlohmann::json& j);

 private:
  std::size_t vocab_size_ = 0;
  double laplace_ = 1.0;
  ClassScores log_prior_{};
  std::vector<double> log_likelihood_;  // class-major, kNumPriorities x V
};

struct GaussianNbOptions {
  /// Variance floor = max(var_smoothing * largest feature variance, min_variance).
  double var_smoothing = 1e-9;
  double min_variance = 1e-12;
};

class GaussianNb {
 public:
  GaussianNb() = default;

  /// Dense rows, all the same width.
  static GaussianNb train(std::span<const std::vector<double>> rows, std::span<const Priority> labels,
                          const GaussianNbOptions& options = {});
  /// Count vectors densified over the vocabulary.
  static GaussianNb train(std::span<const CountVector> docs, std::span<const Priority> labels,
                          std::size_t vocab_size, const GaussianNbOptions& options = {});

  ClassScores scores(std::span<const double> row) const;
  ClassScores scores(const CountVector& doc) const;
  Priority predict(std::span<const double> row) const { return argmax_priority(scores(row)); }
  Priority predict(const CountVector& doc) const { return argmax_priority(scores(doc)); }

  std::size_t num_features() const { return num_features_; }
  double epsilon() const { return epsilon_; }
  double log_prior(Priority c) const { return log_prior_[index_of(c)]; }
  double mean(Priority c, std::size_t f) const { return mean_[index_of(c) * num_features_ + f]; }
  double variance(Priority c, std::size_t f) const { return var_[index_of(c) * num_features_ + f]; }

  nlohmann::json to_json() const;
  static GaussianNb from_json(const nlohmann::json& j);

 private:
  void precompute();

  std::size_t num_features_ = 0;
  double epsilon_ = 0.0;
  ClassScores log_prior_{};
  std::vector<double> mean_;
  std::vector<double> var_;
  // Score of the all-zero row per class; sparse scoring corrects from here.
  ClassScores zero_row_score_{};
};

enum class ClassifierKind { GaussianNb, MultinomialNb, External };

std::string_view to_string(ClassifierKind k);
std::optional<ClassifierKind> parse_classifier_kind(std::string_view text);

/// Record crossing into an external classifier: raw text, no tokens.
struct RemoteRecord {
  std::int64_t bug_id = 0;
  std::string text;
  std::optional<Priority> label;
};

/// Remote topic id used for the pooled fallback model.
inline constexpr int kFallbackTopicId = -1;

/// Anything that can train and query a per-topic classifier out of process.
class RemoteClassifier {
 public:
  virtual ~RemoteClassifier() = default;
  virtual void train(int topic_id, std::span<const RemoteRecord> records) = 0;
  virtual std::vector<Prediction> predict(int topic_id, std::span<const RemoteRecord> records) = 0;
};

struct TrainingExample {
  std::int64_t bug_id = 0;
  std::size_t topic = 0;
  CountVector features;
  Priority label = Priority::Unknown;
  std::string text;  // only read by the external kind
};

struct RouterOptions {
  ClassifierKind kind = ClassifierKind::MultinomialNb;
  std::size_t num_topics = 10;
  std::size_t vocab_size = 0;
  std::size_t min_topic_size = 25;
  double laplace = 1.0;
  GaussianNbOptions gaussian;
};

/// Marks a slot whose model lives in an external worker.
struct RemoteModel {
  int remote_topic = kFallbackTopicId;
};

using TopicModelVariant = std::variant<MultinomialNb, GaussianNb, RemoteModel>;

struct RoutedQuery {
  std::int64_t bug_id = 0;
  std::size_t topic = 0;
  CountVector features;
  std::string text;
};

/// One classifier per sufficiently populated topic plus a pooled fallback.
class TopicRoutedClassifier {
 public:
  TopicRoutedClassifier() = default;

  /// Topics with at least min_topic_size examples get their own model; the
  /// rest route to the fallback, which is trained on every example. For the
  /// external kind a topic whose remote training fails also routes to the
  /// fallback. Throws Error(kInvalidArgument) without training data.
  static TopicRoutedClassifier train(std::span<const TrainingExample> examples,
                                     const RouterOptions& options,
                                     RemoteClassifier* remote = nullptr);

  ClassifierKind kind() const { return kind_; }
  std::size_t num_topics() const { return route_.size(); }
  std::size_t min_topic_size() const { return min_topic_size_; }
  bool uses_fallback(std::size_t topic) const;
  const TopicModelVariant& model_for(std::size_t topic) const;
  const TopicModelVariant& fallback() const { return fallback_; }

  /// Native kinds only; throws Error(kConfig) for the external kind.
  Prediction predict(std::int64_t bug_id, std::size_t topic, const CountVector& features) const;

  /// Results come back in query order. External slots are queried in one
  /// batch per slot through `remote`.
  std::vector<Prediction> predict_batch(std::span<const RoutedQuery> queries,
                                        RemoteClassifier* remote = nullptr) const;

  nlohmann::json to_json() const;
  static TopicRoutedClassifier from_json(const nlohmann::json& j);

 private:
  ClassifierKind kind_ = ClassifierKind::MultinomialNb;
  std::size_t min_topic_size_ = 25;
  std::vector<std::optional<TopicModelVariant>> route_;  // nullopt -> fallback
  TopicModelVariant fallback_;
};

}  // namespace bugprio
