#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "bugprio/textprep.hpp"

namespace bugprio {

struct LdaConfig {
  std::size_t num_topics = 10;
  double alpha = 5.0;  // 50 / num_topics
  double beta = 0.01;
  std::size_t iterations = 1000;
  std::size_t burn_in = 200;
  std::uint64_t seed = 1;
  std::size_t inference_iterations = 100;

  /// Conventional priors for `k` topics: alpha = 50/k, beta = 0.01.
  static LdaConfig with_topics(std::size_t k, std::uint64_t seed = 1);

  /// num_topics >= 1, alpha/beta > 0, iterations > burn_in.
  void validate() const;

  friend bool operator==(const LdaConfig&, const LdaConfig&) = default;
};

/// Collected after each Gibbs sweep when a sweep callback is installed.
struct SweepStats {
  std::size_t sweep = 0;            // 1-based
  std::uint64_t corpus_tokens = 0;  // tokens in the training corpus
  std::uint64_t topic_total_sum = 0;      // sum_k N_k
  std::uint64_t topic_word_sum = 0;       // sum_k sum_w N_kw
  std::uint64_t doc_topic_sum = 0;        // sum_d sum_k n_dk
  bool rows_consistent = true;            // sum_w N_kw == N_k for every k
  double log_likelihood = 0.0;            // log p(w, z), if tracked
};

struct FitOptions {
  std::function<void(const SweepStats&)> on_sweep;
  bool track_log_likelihood = false;
};

/// Fitted LDA model. Immutable once built; safe to share across threads for
/// inference.
class LdaModel {
 public:
  LdaModel() = default;
  LdaModel(LdaConfig config, std::size_t vocab_size, std::vector<std::uint32_t> topic_word,
           std::vector<std::uint64_t> topic_totals, std::vector<std::vector<double>> train_theta);

  const LdaConfig& config() const { return config_; }
  std::size_t num_topics() const { return config_.num_topics; }
  std::size_t vocab_size() const { return vocab_size_; }

  std::uint32_t topic_word_count(std::size_t k, std::size_t w) const {
    return topic_word_[k * vocab_size_ + w];
  }
  std::uint64_t topic_total(std::size_t k) const { return topic_totals_[k]; }

  /// (N_kw + beta) / (N_k + V beta)
  double phi(std::size_t k, std::size_t w) const { return phi_[k * vocab_size_ + w]; }
  std::vector<double> phi_row(std::size_t k) const;

  /// Topic mixture of each training document, from the final Gibbs state.
  const std::vector<std::vector<double>>& train_theta() const { return train_theta_; }

  /// SHA-256 of the vocabulary the counts are indexed by; persisted with the
  /// model so a mismatched vocabulary is caught at load time.
  const std::string& vocabulary_hash() const { return vocabulary_hash_; }
  void bind_vocabulary(std::string hash) { vocabulary_hash_ = std::move(hash); }

  /// Versioned text format: tag line, JSON header line, then one line of
  /// space-separated counts per topic.
  void save(std::ostream& out) const;
  static LdaModel load(std::istream& in);

  friend bool operator==(const LdaModel& a, const LdaModel& b);

 private:
  void compute_phi();

  LdaConfig config_;
  std::size_t vocab_size_ = 0;
  std::vector<std::uint32_t> topic_word_;
  std::vector<std::uint64_t> topic_totals_;
  std::vector<double> phi_;
  std::vector<std::vector<double>> train_theta_;
  std::string vocabulary_hash_;
};

/// Collapsed Gibbs sampling. Deterministic for a given seed and corpus.
/// Throws Error(kInvalidArgument) on an empty corpus or vocabulary.
LdaModel fit_lda(std::span<const CountVector> docs, std::size_t vocab_size,
                 const LdaConfig& config, const FitOptions& options = {});

/// Topic mixture of an unseen document with the topic-word counts held
/// fixed. Seeded from the model seed, so equal inputs give equal outputs.
/// An empty document yields the uniform mixture.
std::vector<double> infer_theta(const LdaModel& model, const CountVector& doc);

/// argmax with ties going to the lowest index. Throws
/// Error(kInvalidArgument) if theta is empty or does not sum to 1 within 1e-6.
std::size_t assign_topic(std::span<const double> theta);

std::vector<std::uint64_t> topic_histogram(std::span<const std::size_t> assignments,
                                           std::size_t num_topics);

}  // namespace bugprio
