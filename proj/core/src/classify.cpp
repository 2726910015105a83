#include "bugprio/classify.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <map>
#include <numbers>

#include <nlohmann/json.hpp>

#include "bugprio/error.hpp"

namespace bugprio {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_labels(std::span<const Priority> labels, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "no training examples");
  if (labels.size() != n) throw Error(ErrorKind::kInvalidArgument, "label count differs from example count");
  for (auto l : labels) {
    if (!is_known(l)) throw Error(ErrorKind::kInvalidArgument, "training label must be P1..P5");
  }
}

ClassScores log_priors(std::span<const Priority> labels) {
  std::array<std::uint64_t, kNumPriorities> n{};
  for (auto l : labels) ++n[index_of(l)];
  ClassScores lp{};
  for (std::size_t c = 0; c < kNumPriorities; ++c) {
    lp[c] = n[c] ? std::log(static_cast<double>(n[c]) / static_cast<double>(labels.size())) : kNegInf;
  }
  return lp;
}

// JSON has no infinities; absent classes travel as null.
nlohmann::json scores_to_json(std::span<const double> v) {
  auto arr = nlohmann::json::array();
  for (double x : v) {
    if (std::isfinite(x)) {
      arr.push_back(x);
    } else {
      arr.push_back(nullptr);
    }
  }
  return arr;
}

std::vector<double> scores_from_json(const nlohmann::json& j) {
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& x : j) out.push_back(x.is_null() ? kNegInf : x.get<double>());
  return out;
}

ClassScores class_scores_from_json(const nlohmann::json& j) {
  auto v = scores_from_json(j);
  if (v.size() != kNumPriorities) throw Error(ErrorKind::kInput, "expected five class scores");
  ClassScores s{};
  std::copy(v.begin(), v.end(), s.begin());
  return s;
}

}  // namespace

Priority argmax_priority(const ClassScores& scores) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumPriorities; ++c) {
    if (scores[c] > scores[best]) best = c;
  }
  return priority_from_index(best);
}

// ---------------------------------------------------------------------------
// Multinomial NB

MultinomialNb MultinomialNb::train(std::span<const CountVector> docs, std::span<const Priority> labels,
                                   std::size_t vocab_size, double laplace) {
  check_labels(labels, docs.size());
  if (!(laplace > 0.0)) throw Error(ErrorKind::kInvalidArgument, "laplace smoothing must be > 0");
  if (vocab_size == 0) throw Error(ErrorKind::kInvalidArgument, "vocabulary is empty");

  MultinomialNb m;
  m.vocab_size_ = vocab_size;
  m.laplace_ = laplace;
  m.log_prior_ = log_priors(labels);

  std::vector<double> counts(kNumPriorities * vocab_size, 0.0);
  std::array<double, kNumPriorities> class_total{};
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const std::size_t c = index_of(labels[i]);
    for (const auto& t : docs[i].terms) {
      if (t.index >= vocab_size) throw Error(ErrorKind::kInvalidArgument, "term index outside vocabulary");
      counts[c * vocab_size + t.index] += t.count;
      class_total[c] += t.count;
    }
  }
  m.log_likelihood_.resize(counts.size());
  for (std::size_t c = 0; c < kNumPriorities; ++c) {
    const double denom = std::log(class_total[c] + laplace * static_cast<double>(vocab_size));
    for (std::size_t w = 0; w < vocab_size; ++w) {
      m.log_likelihood_[c * vocab_size + w] = std::log(counts[c * vocab_size + w] + laplace) - denom;
    }
  }
  return m;
}

ClassScores MultinomialNb::scores(const CountVector& doc) const {
  ClassScores s = log_prior_;
  for (std::size_t c = 0; c < kNumPriorities; ++c) {
    if (!std::isfinite(s[c])) continue;
    const double* ll = &log_likelihood_[c * vocab_size_];
    for (const auto& t : doc.terms) {
      if (t.index < vocab_size_) s[c] += t.count * ll[t.index];
    }
  }
  return s;
}

nlohmann::json MultinomialNb::to_json() const {
  nlohmann::json j;
  j["kind"] = "multinomial_nb";
  j["vocab_size"] = vocab_size_;
  j["laplace"] = laplace_;
  j["log_prior"] = scores_to_json(log_prior_);
  j["log_likelihood"] = scores_to_json(log_likelihood_);
  return j;
}

MultinomialNb MultinomialNb::from_json(const nlohmann::json& j) {
  MultinomialNb m;
  try {
    if (j.at("kind") != "multinomial_nb") throw Error(ErrorKind::kInput, "not a multinomial_nb model");
    m.vocab_size_ = j.at("vocab_size").get<std::size_t>();
    m.laplace_ = j.at("laplace").get<double>();
    m.log_prior_ = class_scores_from_json(j.at("log_prior"));
    m.log_likelihood_ = scores_from_json(j.at("log_likelihood"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInput, std::string("multinomial_nb: ") + e.what());
  }
  if (m.log_likelihood_.size() != kNumPriorities * m.vocab_size_) {
    throw Error(ErrorKind::kInput, "multinomial_nb: likelihood table has the wrong size");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Gaussian NB

GaussianNb GaussianNb::train(std::span<const std::vector<double>> rows, std::span<const Priority> labels,
                             const GaussianNbOptions& options) {
  check_labels(labels, rows.size());
  const std::size_t F = rows.front().size();
  for (const auto& r : rows) {
    if (r.size() != F) throw Error(ErrorKind::kInvalidArgument, "rows differ in width");
  }

  GaussianNb m;
  m.num_features_ = F;
  m.log_prior_ = log_priors(labels);
  m.mean_.assign(kNumPriorities * F, 0.0);
  m.var_.assign(kNumPriorities * F, 0.0);

  std::array<std::uint64_t, kNumPriorities> n{};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t c = index_of(labels[i]);
    ++n[c];
    for (std::size_t f = 0; f < F; ++f) m.mean_[c * F + f] += rows[i][f];
  }
  for (std::size_t c = 0; c < kNumPriorities; ++c) {
    if (!n[c]) continue;
    for (std::size_t f = 0; f < F; ++f) m.mean_[c * F + f] /= static_cast<double>(n[c]);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t c = index_of(labels[i]);
    for (std::size_t f = 0; f < F; ++f) {
      const double d = rows[i][f] - m.mean_[c * F + f];
      m.var_[c * F + f] += d * d;
    }
  }
  for (std::size_t c = 0; c < kNumPriorities; ++c) {
    if (!n[c]) continue;
    for (std::size_t f = 0; f < F; ++f) m.var_[c * F + f] /= static_cast<double>(n[c]);
  }

  // Largest per-feature variance over the whole training set.
  double max_var = 0.0;
  for (std::size_t f = 0; f < F; ++f) {
    double mean = 0.0;
    for (const auto& r : rows) mean += r[f];
    mean /= static_cast<double>(rows.size());
    double var = 0.0;
    for (const auto& r : rows) var += (r[f] - mean) * (r[f] - mean);
    max_var = std::max(max_var, var / static_cast<double>(rows.size()));
  }
  m.epsilon_ = std::max(options.var_smoothing * max_var, options.min_variance);
  for (std::size_t c = 0; c < kNumPriorities; ++c) {
    for (std::size_t f = 0; f < F; ++f) {
      auto& v = m.var_[c * F + f];
      v = n[c] ? std::max(v, m.epsilon_) : 1.0;
    }
  }
  m.precompute();
  return m;
}

GaussianNb GaussianNb::train(std::span<const CountVector> docs, std::span<const Priority> labels,
                             std::size_t vocab_size, const GaussianNbOptions& options) {
  check_labels(labels, docs.size());
  if (vocab_size == 0) throw Error(ErrorKind::kInvalidArgument, "vocabulary is empty");
  const std::size_t F = vocab_size;

  // Sparse accumulation of first and second moments; the dense matrix would
  // be documents x vocabulary.
  GaussianNb m;
  m.num_features_ = F;
  m.log_prior_ = log_priors(labels);
  std::vector<double> sum(kNumPriorities * F, 0.0);
  std::vector<double> sum_sq(kNumPriorities * F, 0.0);
  std::vector<double> all_sum(F, 0.0);
  std::vector<double> all_sum_sq(F, 0.0);
  std::array<std::uint64_t, kNumPriorities> n{};
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const std::size_t c = index_of(labels[i]);
    ++n[c];
    for (const auto& t : docs[i].terms) {
      if (t.index >= F) throw Error(ErrorKind::kInvalidArgument, "term index outside vocabulary");
      const double x = t.count;
      sum[c * F + t.index] += x;
      sum_sq[c * F + t.index] += x * x;
      all_sum[t.index] += x;
      all_sum_sq[t.index] += x * x;
    }
  }

  const auto moments = [](double s, double s2, double count) {
    const double mean = s / count;
    return std::pair{mean, std::max(s2 / count - mean * mean, 0.0)};
  };

  double max_var = 0.0;
  for (std::size_t f = 0; f < F; ++f) {
    max_var = std::max(max_var, moments(all_sum[f], all_sum_sq[f], static_cast<double>(docs.size())).second);
  }
  m.epsilon_ = std::max(options.var_smoothing * max_var, options.min_variance);

  m.mean_.assign(kNumPriorities * F, 0.0);
  m.var_.assign(kNumPriorities * F, 1.0);
  for (std::size_t c = 0; c < kNumPriorities; ++c) {
    if (!n[c]) continue;
    for (std::size_t f = 0; f < F; ++f) {
      auto [mean, var] = moments(sum[c * F + f], sum_sq[c * F + f], static_cast<double>(n[c]));
      m.mean_[c * F + f] = mean;
      m.var_[c * F + f] = std::max(var, m.epsilon_);
    }
  }
  m.precompute();
  return m;
}

void GaussianNb::precompute() {
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  for (std::size_t c = 0; c < kNumPriorities; ++c) {
    double s = log_prior_[c];
    if (std::isfinite(s)) {
      for (std::size_t f = 0; f < num_features_; ++f) {
        const double mu = mean_[c * num_features_ + f];
        const double var = var_[c * num_features_ + f];
        s += -0.5 * (log_two_pi + std::log(var)) - mu * mu / (2.0 * var);
      }
    }
    zero_row_score_[c] = s;
  }
}

ClassScores GaussianNb::scores(std::span<const double> row) const {
  if (row.size() != num_features_) throw Error(ErrorKind::kInvalidArgument, "row width mismatch");
  const double log_two_pi = std::log(2.0 * std::numbers::pi);
  ClassScores s{};
  for (std::size_t c = 0; c < kNumPriorities; ++c) {
    s[c] = log_prior_[c];
    if (!std::isfinite(s[c])) continue;
    for (std::size_t f = 0; f < num_features_; ++f) {
      const double mu = mean_[c * num_features_ + f];
      const double var = var_[c * num_features_ + f];
      const double d = row[f] - mu;
      s[c] += -0.5 * (log_two_pi + std::log(var)) - d * d / (2.0 * var);
    }
  }
  return s;
}

ClassScores GaussianNb::scores(const CountVector& doc) const {
  // Start from the all-zero row and correct the non-zero features.
  ClassScores s = zero_row_score_;
  for (std::size_t c = 0; c < kNumPriorities; ++c) {
    if (!std::isfinite(s[c])) continue;
    for (const auto& t : doc.terms) {
      if (t.index >= num_features_) continue;
      const double mu = mean_[c * num_features_ + t.index];
      const double var = var_[c * num_features_ + t.index];
      const double d = t.count - mu;
      s[c] += (mu * mu - d * d) / (2.0 * var);
    }
  }
  return s;
}

nlohmann::json GaussianNb::to_json() const {
  nlohmann::json j;
  j["kind"] = "gaussian_nb";
  j["num_features"] = num_features_;
  j["epsilon"] = epsilon_;
  j["log_prior"] = scores_to_json(log_prior_);
  j["mean"] = mean_;
  j["variance"] = var_;
  return j;
}

GaussianNb GaussianNb::from_json(const nlohmann::json& j) {
  GaussianNb m;
  try {
    if (j.at("kind") != "gaussian_nb") throw Error(ErrorKind::kInput, "not a gaussian_nb model");
    m.num_features_ = j.at("num_features").get<std::size_t>();
    m.epsilon_ = j.at("epsilon").get<double>();
    m.log_prior_ = class_scores_from_json(j.at("log_prior"));
    m.mean_ = j.at("mean").get<std::vector<double>>();
    m.var_ = j.at("variance").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInput, std::string("gaussian_nb: ") + e.what());
  }
  if (m.mean_.size() != kNumPriorities * m.num_features_ || m.var_.size() != m.mean_.size()) {
    throw Error(ErrorKind::kInput, "gaussian_nb: parameter tables have the wrong size");
  }
  m.precompute();
  return m;
}

// ---------------------------------------------------------------------------
// Topic routing

std::string_view to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::GaussianNb: return "gaussian_nb";
    case ClassifierKind::MultinomialNb: return "multinomial_nb";
    case ClassifierKind::External: return "external";
  }
  return "multinomial_nb";
}

std::optional<ClassifierKind> parse_classifier_kind(std::string_view text) {
  for (auto k : {ClassifierKind::GaussianNb, ClassifierKind::MultinomialNb, ClassifierKind::External}) {
    if (to_string(k) == text) return k;
  }
  return std::nullopt;
}

namespace {

TopicModelVariant train_native(std::span<const TrainingExample* const> examples,
                               const RouterOptions& options) {
  std::vector<CountVector> docs;
  std::vector<Priority> labels;
  docs.reserve(examples.size());
  labels.reserve(examples.size());
  for (const auto* e : examples) {
    docs.push_back(e->features);
    labels.push_back(e->label);
  }
  if (options.kind == ClassifierKind::GaussianNb) {
    return GaussianNb::train(docs, labels, options.vocab_size, options.gaussian);
  }
  return MultinomialNb::train(docs, labels, options.vocab_size, options.laplace);
}

std::vector<RemoteRecord> remote_records(std::span<const TrainingExample* const> examples) {
  std::vector<RemoteRecord> out;
  out.reserve(examples.size());
  for (const auto* e : examples) out.push_back({e->bug_id, e->text, e->label});
  return out;
}

ClassScores native_scores(const TopicModelVariant& model, const CountVector& x) {
  if (const auto* m = std::get_if<MultinomialNb>(&model)) return m->scores(x);
  if (const auto* g = std::get_if<GaussianNb>(&model)) return g->scores(x);
  throw Error(ErrorKind::kConfig, "external classifier requires a worker connection");
}

nlohmann::json model_to_json(const TopicModelVariant& model) {
  if (const auto* m = std::get_if<MultinomialNb>(&model)) return m->to_json();
  if (const auto* g = std::get_if<GaussianNb>(&model)) return g->to_json();
  return {{"kind", "external"}, {"remote_topic", std::get<RemoteModel>(model).remote_topic}};
}

TopicModelVariant model_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "multinomial_nb") return MultinomialNb::from_json(j);
  if (kind == "gaussian_nb") return GaussianNb::from_json(j);
  if (kind == "external") return RemoteModel{j.at("remote_topic").get<int>()};
  throw Error(ErrorKind::kInput, "unknown classifier kind '" + kind + "'");
}

}  // namespace

TopicRoutedClassifier TopicRoutedClassifier::train(std::span<const TrainingExample> examples,
                                                   const RouterOptions& options,
                                                   RemoteClassifier* remote) {
  if (examples.empty()) throw Error(ErrorKind::kInvalidArgument, "no training data for the router");
  if (options.num_topics == 0) throw Error(ErrorKind::kInvalidArgument, "router needs at least one topic");
  if (options.kind == ClassifierKind::External && remote == nullptr) {
    throw Error(ErrorKind::kConfig, "external classifier kind needs a worker");
  }

  std::vector<std::vector<const TrainingExample*>> by_topic(options.num_topics);
  std::vector<const TrainingExample*> all;
  all.reserve(examples.size());
  for (const auto& e : examples) {
    if (e.topic >= options.num_topics) throw Error(ErrorKind::kInvalidArgument, "topic id out of range");
    by_topic[e.topic].push_back(&e);
    all.push_back(&e);
  }

  TopicRoutedClassifier r;
  r.kind_ = options.kind;
  r.min_topic_size_ = options.min_topic_size;
  r.route_.resize(options.num_topics);
  const auto owns_model = [&](std::size_t t) {
    return !by_topic[t].empty() && by_topic[t].size() >= options.min_topic_size;
  };

  if (options.kind == ClassifierKind::External) {
    // The worker is single-threaded; keep requests sequential.
    remote->train(kFallbackTopicId, remote_records(all));
    r.fallback_ = RemoteModel{kFallbackTopicId};
    for (std::size_t t = 0; t < options.num_topics; ++t) {
      if (!owns_model(t)) continue;
      try {
        remote->train(static_cast<int>(t), remote_records(by_topic[t]));
        r.route_[t] = RemoteModel{static_cast<int>(t)};
      } catch (const Error&) {
        // Failed topics route to the fallback.
      }
    }
    return r;
  }

  auto fallback = std::async(std::launch::async, [&] { return train_native(all, options); });
  std::vector<std::pair<std::size_t, std::future<TopicModelVariant>>> jobs;
  for (std::size_t t = 0; t < options.num_topics; ++t) {
    if (!owns_model(t)) continue;
    jobs.emplace_back(t, std::async(std::launch::async,
                                    [&, t] { return train_native(by_topic[t], options); }));
  }
  r.fallback_ = fallback.get();
  for (auto& [t, job] : jobs) r.route_[t] = job.get();
  return r;
}

bool TopicRoutedClassifier::uses_fallback(std::size_t topic) const {
  return topic >= route_.size() || !route_[topic].has_value();
}

const TopicModelVariant& TopicRoutedClassifier::model_for(std::size_t topic) const {
  if (topic >= route_.size()) {
    throw Error(ErrorKind::kInvalidArgument,
                "topic " + std::to_string(topic) + " out of range for " + std::to_string(route_.size()) + " topics");
  }
  return uses_fallback(topic) ? fallback_ : *route_[topic];
}

Prediction TopicRoutedClassifier::predict(std::int64_t bug_id, std::size_t topic,
                                          const CountVector& features) const {
  Prediction p;
  p.bug_id = bug_id;
  p.topic = topic;
  p.used_fallback = uses_fallback(topic);
  p.scores = native_scores(model_for(topic), features);
  p.priority = argmax_priority(p.scores);
  return p;
}

std::vector<Prediction> TopicRoutedClassifier::predict_batch(std::span<const RoutedQuery> queries,
                                                             RemoteClassifier* remote) const {
  std::vector<Prediction> out(queries.size());
  if (kind_ != ClassifierKind::External) {
    for (std::size_t i = 0; i < queries.size(); ++i) {
      out[i] = predict(queries[i].bug_id, queries[i].topic, queries[i].features);
    }
    return out;
  }
  if (remote == nullptr) throw Error(ErrorKind::kConfig, "external classifier requires a worker connection");

  // Group by remote topic so each worker model is queried once.
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    groups[std::get<RemoteModel>(model_for(queries[i].topic)).remote_topic].push_back(i);
  }
  for (const auto& [remote_topic, idx] : groups) {
    std::vector<RemoteRecord> records;
    records.reserve(idx.size());
    for (auto i : idx) records.push_back({queries[i].bug_id, queries[i].text, std::nullopt});
    auto preds = remote->predict(remote_topic, records);
    if (preds.size() != idx.size()) {
      throw Error(ErrorKind::kProtocol, "worker returned the wrong number of predictions");
    }
    for (std::size_t j = 0; j < idx.size(); ++j) {
      auto& p = out[idx[j]];
      p = preds[j];
      p.topic = queries[idx[j]].topic;
      p.used_fallback = uses_fallback(p.topic);
    }
  }
  return out;
}

nlohmann::json TopicRoutedClassifier::to_json() const {
  nlohmann::json j;
  j["format"] = "bugprio-router";
  j["version"] = 1;
  j["kind"] = to_string(kind_);
  j["min_topic_size"] = min_topic_size_;
  j["num_topics"] = route_.size();
  j["fallback"] = model_to_json(fallback_);
  auto topics = nlohmann::json::array();
  for (const auto& slot : route_) {
    topics.push_back(slot ? model_to_json(*slot) : nlohmann::json(nullptr));
  }
  j["topics"] = std::move(topics);
  return j;
}

TopicRoutedClassifier TopicRoutedClassifier::from_json(const nlohmann::json& j) {
  TopicRoutedClassifier r;
  try {
    if (j.at("format") != "bugprio-router" || j.at("version") != 1) {
      throw Error(ErrorKind::kInput, "unsupported router format");
    }
    auto kind = parse_classifier_kind(j.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorKind::kInput, "unknown router kind");
    r.kind_ = *kind;
    r.min_topic_size_ = j.at("min_topic_size").get<std::size_t>();
    r.fallback_ = model_from_json(j.at("fallback"));
    const auto& topics = j.at("topics");
    if (topics.size() != j.at("num_topics").get<std::size_t>()) {
      throw Error(ErrorKind::kInput, "router topic table has the wrong size");
    }
    for (const auto& slot : topics) {
      if (slot.is_null()) {
        r.route_.emplace_back(std::nullopt);
      } else {
        r.route_.emplace_back(model_from_json(slot));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInput, std::string("router: ") + e.what());
  }
  return r;
}

}  // namespace bugprio
